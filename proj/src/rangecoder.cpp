#include "alf/rangecoder.hpp"

#include <cmath>

namespace alf {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kBot = 1u << 16;

double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }
}  // namespace

void CdfTable::validate() const {
    if (cdf.size() < 2) throw DecodeError("cdf table too small");
    if (cdf.front() != 0 || cdf.back() != (1u << 16)) throw DecodeError("cdf table endpoints invalid");
    for (std::size_t i = 1; i < cdf.size(); ++i)
        if (cdf[i] <= cdf[i - 1]) throw DecodeError("cdf table not strictly increasing");
}

CdfTable CdfTable::gaussian(double mean, double scale, int lo, int hi) {
    if (!(scale > 0.0)) throw NumericError("gaussian cdf: scale must be positive");
    if (hi < lo) throw ShapeError("gaussian cdf: empty symbol range");
    const int n = hi - lo + 1;
    const int nsym = n + 1;  // + escape
    std::vector<double> p(static_cast<std::size_t>(nsym));
    double tail = 0.0;
    for (int s = lo; s <= hi; ++s) {
        double zhi = (static_cast<double>(s) - mean + 0.5) / scale;
        double zlo = (static_cast<double>(s) - mean - 0.5) / scale;
        p[static_cast<std::size_t>(s - lo)] = std::max(0.0, norm_cdf(zhi) - norm_cdf(zlo));
    }
    tail = std::max(0.0, norm_cdf((static_cast<double>(lo) - mean - 0.5) / scale)) +
           std::max(0.0, 1.0 - norm_cdf((static_cast<double>(hi) - mean + 0.5) / scale));
    p[static_cast<std::size_t>(n)] = tail;

    const std::uint32_t total = 1u << 16;
    std::vector<std::uint32_t> freq(static_cast<std::size_t>(nsym));
    std::uint32_t sum = 0;
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < freq.size(); ++i) {
        freq[i] = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(p[i] * total)));
        sum += freq[i];
        if (freq[i] > freq[argmax]) argmax = i;
    }
    // force total mass to exactly 2^16 by adjusting the largest bucket
    if (sum > total) {
        std::uint32_t excess = sum - total;
        if (freq[argmax] <= excess) throw NumericError("gaussian cdf: cannot normalize frequency table");
        freq[argmax] -= excess;
    } else {
        freq[argmax] += total - sum;
    }
    CdfTable t;
    t.cdf.resize(static_cast<std::size_t>(nsym) + 1);
    t.cdf[0] = 0;
    for (std::size_t i = 0; i < freq.size(); ++i) t.cdf[i + 1] = t.cdf[i] + freq[i];
    t.validate();
    return t;
}

void RangeEncoder::normalize() {
    while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
        out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
        low_ <<= 8;
        range_ <<= 8;
    }
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    range_ /= total;
    low_ += cum * range_;
    range_ *= freq;
    normalize();
}

void RangeEncoder::encode_symbol(const CdfTable& table, int symbol) {
    encode(table.cum(symbol), table.freq(symbol));
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 4; ++i) {
        out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
        low_ <<= 8;
    }
    return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ >= bytes_.size()) throw DecodeError("range decoder ran past end of stream");
    return bytes_[pos_++];
}

void RangeDecoder::normalize() {
    while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
        code_ = (code_ << 8) | next_byte();
        low_ <<= 8;
        range_ <<= 8;
    }
}

std::uint32_t RangeDecoder::decode_cum(std::uint32_t total) {
    std::uint32_t r = range_ / total;
    std::uint32_t cum = (code_ - low_) / r;
    if (cum >= total) throw DecodeError("corrupted range-coded stream");
    return cum;
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    range_ /= total;
    low_ += cum * range_;
    range_ *= freq;
    normalize();
}

int RangeDecoder::decode_symbol(const CdfTable& table) {
    std::uint32_t cum = decode_cum();
    // binary search for the bucket containing cum
    int lo = 0, hi = table.num_symbols() - 1;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (table.cum(mid) <= cum)
            lo = mid;
        else
            hi = mid - 1;
    }
    consume(table.cum(lo), table.freq(lo));
    return lo;
}

}  // namespace alf
