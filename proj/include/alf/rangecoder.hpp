#pragma once

#include <cstdint>
#include <vector>

#include "alf/common.hpp"

namespace alf {

// Quantized CDF over a symbol alphabet; total mass is exactly 1 << 16.
// cdf has size()+1 entries, strictly increasing, cdf.front()=0, cdf.back()=65536.
struct CdfTable {
    std::vector<std::uint32_t> cdf;

    int num_symbols() const { return static_cast<int>(cdf.size()) - 1; }
    std::uint32_t cum(int s) const { return cdf[static_cast<std::size_t>(s)]; }
    std::uint32_t freq(int s) const { return cdf[static_cast<std::size_t>(s) + 1] - cdf[static_cast<std::size_t>(s)]; }
    void validate() const;

    // Discretized Gaussian over integer symbols lo..hi plus one trailing
    // escape bucket holding the tail mass. Every bucket gets frequency >= 1.
    static CdfTable gaussian(double mean, double scale, int lo, int hi);
};

// Carryless byte-oriented range coder (Subbotin variant), 16-bit totals.
class RangeEncoder {
public:
    void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total = 1u << 16);
    void encode_symbol(const CdfTable& table, int symbol);
    std::vector<std::uint8_t> finish();

private:
    void normalize();
    std::vector<std::uint8_t> out_;
    std::uint32_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
};

class RangeDecoder {
public:
    explicit RangeDecoder(const std::vector<std::uint8_t>& bytes);

    // Returns the cumulative slot of the next symbol; call consume() after
    // mapping it to (cum, freq) through the table.
    std::uint32_t decode_cum(std::uint32_t total = 1u << 16);
    void consume(std::uint32_t cum, std::uint32_t freq, std::uint32_t total = 1u << 16);
    int decode_symbol(const CdfTable& table);

private:
    void normalize();
    std::uint8_t next_byte();
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
    std::uint32_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
};

}  // namespace alf
