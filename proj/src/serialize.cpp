#include "alf/serialize.hpp"

#include <cstring>
#include <fstream>

namespace alf {

void ByteWriter::u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void ByteWriter::raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
}

void ByteWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
}

std::uint8_t ByteReader::u8() {
    if (pos_ + 1 > bytes_.size()) throw DecodeError("byte stream truncated");
    return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
    std::uint16_t v = u8();
    v |= static_cast<std::uint16_t>(u8()) << 8;
    return v;
}

std::uint32_t ByteReader::u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
}

std::uint64_t ByteReader::u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
}

float ByteReader::f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void ByteReader::raw(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DecodeError("byte stream truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
}

std::string ByteReader::str() {
    std::uint32_t n = u32();
    if (pos_ + n > bytes_.size()) throw DecodeError("byte stream truncated");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

namespace {
constexpr char kCheckpointMagic[4] = {'A', 'L', 'F', 'C'};
constexpr char kBitstreamMagic[4] = {'A', 'L', 'F', '1'};

void serialize_tensor_entry(ByteWriter& w, const std::string& name, const Tensor& t) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
}
}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
    ByteWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u16(1);
    w.str(metadata);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) serialize_tensor_entry(w, name, t);
    return w.take();
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DecodeError("not an ALFC checkpoint");
    std::uint16_t version = r.u16();
    if (version != 1) throw DecodeError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.metadata = r.str();
    std::uint32_t count = r.u32();
    ck.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(r.u32());
        std::vector<float> data(numel(shape));
        for (float& v : data) v = r.f32();
        ck.tensors.emplace_back(name, Tensor::from_data(shape, std::move(data)));
    }
    return ck;
}

void Checkpoint::save(const std::string& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(read_file(path)); }

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

Tensor Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw IoError("checkpoint tensor not found: " + name);
}

void Checkpoint::put(const std::string& name, const Tensor& t) {
    for (auto& [n, existing] : tensors)
        if (n == name) {
            existing = t;
            return;
        }
    tensors.emplace_back(name, t);
}

std::uint64_t Checkpoint::tensor_hash(const std::string& prefix) const {
    ByteWriter w;
    for (const auto& [name, t] : tensors)
        if (name.rfind(prefix, 0) == 0) serialize_tensor_entry(w, name, t);
    return fnv1a64(w.bytes());
}

std::vector<std::uint8_t> BitstreamFile::serialize() const {
    ByteWriter w;
    w.raw(kBitstreamMagic, 4);
    w.u16(version);
    w.u16(static_cast<std::uint16_t>(channels));
    w.u16(static_cast<std::uint16_t>(height));
    w.u16(static_cast<std::uint16_t>(width));
    w.u64(model_hash);
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.raw(payload.data(), payload.size());
    return w.take();
}

BitstreamFile BitstreamFile::deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kBitstreamMagic, 4) != 0) throw DecodeError("not an ALF1 bitstream");
    BitstreamFile b;
    b.version = r.u16();
    if (b.version != 1) throw DecodeError("unsupported bitstream version " + std::to_string(b.version));
    b.channels = r.u16();
    b.height = r.u16();
    b.width = r.u16();
    b.model_hash = r.u64();
    std::uint32_t n = r.u32();
    b.payload.resize(n);
    if (n) r.raw(b.payload.data(), n);
    return b;
}

void BitstreamFile::save(const std::string& path) const { write_file(path, serialize()); }

BitstreamFile BitstreamFile::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace alf
