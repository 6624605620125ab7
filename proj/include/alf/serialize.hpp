#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alf/common.hpp"
#include "alf/nn.hpp"
#include "alf/tensor.hpp"

namespace alf {

// Little-endian byte stream helpers.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v);
    void raw(const void* data, std::size_t n);
    void str(const std::string& s);  // length-prefixed (u32)

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32();
    void raw(void* dst, std::size_t n);
    std::string str();
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// "ALFC" checkpoint: version, length-prefixed UTF-8 metadata, tensor table of
// (name, rank, dims, raw little-endian f32 data).
struct Checkpoint {
    std::string metadata;  // JSON text: config, rng seed, step count
    nn::NamedTensors tensors;

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    bool has(const std::string& name) const;
    Tensor find(const std::string& name) const;  // throws IoError if missing
    void put(const std::string& name, const Tensor& t);

    // FNV-1a over the serialized entries whose names start with `prefix`
    // (empty prefix = all tensors). Stable across runs.
    std::uint64_t tensor_hash(const std::string& prefix = "") const;
};

// "ALF1" bitstream: version, latent dims (3 x u16), entropy-model hash,
// length-prefixed payload.
struct BitstreamFile {
    std::uint16_t version = 1;
    int channels = 0, height = 0, width = 0;
    std::uint64_t model_hash = 0;
    std::vector<std::uint8_t> payload;

    std::vector<std::uint8_t> serialize() const;
    static BitstreamFile deserialize(const std::vector<std::uint8_t>& bytes);
    void save(const std::string& path) const;
    static BitstreamFile load(const std::string& path);
};

}  // namespace alf
