#pragma once

#include <string>
#include <vector>

#include "alf/image.hpp"
#include "alf/nn.hpp"
#include "alf/rng.hpp"
#include "alf/serialize.hpp"
#include "alf/tensor.hpp"

namespace alf {

enum class LossKind { distortion, perception };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

struct CodecConfig {
    int image_channels = 1;
    int latent_channels = 32;
    int num_downsamples = 3;
    double beta = 0.01;
    LossKind loss_kind = LossKind::distortion;

    void validate() const;  // throws ConfigError
    int downsample_factor() const { return 1 << num_downsamples; }
};

// Integer latent plus the entropy-model snapshot used to code it.
struct LatentCode {
    Shape shape;  // [1,C,h,w]
    std::vector<std::int32_t> symbols;
    std::vector<float> channel_means;
    std::vector<float> channel_scales;
};

// Coded-symbol support; values outside get an escape symbol plus a literal.
constexpr int kSymbolLo = -64;
constexpr int kSymbolHi = 63;

std::vector<std::uint8_t> encode_latent(const LatentCode& code);
LatentCode decode_latent(const std::vector<std::uint8_t>& payload, const Shape& shape,
                         const std::vector<float>& means, const std::vector<float>& scales);

// Base transform codec: strided-conv analysis, transposed-conv synthesis,
// per-channel Gaussian entropy model.
struct BaseCodec {
    CodecConfig config;
    std::vector<nn::Conv2d> enc;
    std::vector<nn::ConvT2d> dec;
    Tensor em_mean;       // [latent_channels]
    Tensor em_log_scale;  // [latent_channels]

    static BaseCodec create(const CodecConfig& config, Rng& rng);

    Tensor analysis(const Tensor& x) const;   // [1,C,H,W] -> [1,L,h,w]
    Tensor synthesis(const Tensor& y) const;  // [1,L,h,w] -> [1,C,H,W], pre-clamp

    nn::NamedTensors parameters() const;  // "ga." / "gs." / "em." prefixes

    Checkpoint to_checkpoint() const;
    static BaseCodec from_checkpoint(const Checkpoint& ck);
    std::uint64_t hash() const { return to_checkpoint().tensor_hash(); }

    LatentCode make_code(const Tensor& y_rounded) const;
    Tensor code_to_tensor(const LatentCode& code) const;

    BitstreamFile encode_image(const Image& img) const;
    Image decode_image(const BitstreamFile& bs) const;        // full synthesis
    Tensor decode_latent_tensor(const BitstreamFile& bs) const;  // just y-hat
};

// Quantizer: eval rounds (straight-through gradient), train adds U(-0.5,0.5).
enum class QuantizeMode { train, eval };
Tensor quantize(const Tensor& y, QuantizeMode mode, Rng& rng);

// Total coding cost in bits under the codec's entropy model (differentiable).
Tensor rate_estimate(const Tensor& y_hat, const BaseCodec& codec);

struct TrainStepLog {
    int step = 0;
    double bpp = 0.0;
    double dist = 0.0;  // MSE or perceptual distance, per loss_kind
    double loss = 0.0;
};

struct BaseTrainResult {
    BaseCodec codec;
    std::vector<TrainStepLog> log;
};

// Rate-distortion training: loss = bpp + beta * scaled distortion. Throws
// NumericError with step diagnostics if the loss goes non-finite.
BaseTrainResult train_base(const std::vector<Image>& dataset, const CodecConfig& config, int steps,
                           std::uint64_t seed, double lr = 1e-3);

}  // namespace alf
