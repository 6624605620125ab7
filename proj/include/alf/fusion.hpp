#pragma once

#include <vector>

#include "alf/codec.hpp"
#include "alf/denoiser.hpp"
#include "alf/schedule.hpp"

namespace alf {

struct SamplerConfig {
    int steps = 10;
    double tau = 0.0;
    std::uint64_t seed = 0;

    void validate(const NoiseSchedule& schedule) const;  // throws ConfigError
};

// y_t = sqrt(alpha_t) * y + sqrt(1 - alpha_t) * eps
Tensor forward_noise(const Tensor& y, int t, const Tensor& eps, const NoiseSchedule& schedule);

// eps_hat = (y_t - sqrt(alpha_t) * d_out) / sqrt(1 - alpha_t); requires t >= 1
Tensor predict_noise(const Tensor& y_t, const Tensor& d_out, int t, const NoiseSchedule& schedule);

// One tau-weighted DDIM update from t to t_prev given the predicted clean
// latent d_out:
//   y_prev = sqrt(a_prev) * ((1-tau^2) * d_out + tau^2 * y_hat)
//          + (1-tau^2) * sqrt(1-a_prev) * eps_hat
Tensor ddim_update(const Tensor& y_t, const Tensor& y_hat, const Tensor& d_out, int t, int t_prev,
                   double tau, const NoiseSchedule& schedule);

// Same update, with d_out produced by the model at t_frac = t / T_train.
Tensor ddim_step_tau(const Tensor& y_t, const Tensor& y_hat, int t, int t_prev, double tau,
                     const Denoiser& model, const NoiseSchedule& schedule);

// Full sampler: grid of cfg.steps transitions over evenly spaced timesteps
// from T_train down to 0 (both endpoints on the grid), start drawn N(0,I)
// from cfg.seed. tau = 1 returns y_hat exactly.
Tensor sample(const Tensor& y_hat, const SamplerConfig& cfg, const Denoiser& model,
              const NoiseSchedule& schedule);

// Ancestral (stochastic) update:
//   x_prev = (x_t - (beta_t / sqrt(1 - alpha_t)) * eps_hat) / sqrt(1 - beta_t) + sigma_t * eps
Tensor ancestral_step(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule,
                      double sigma_t, Rng& rng);

// Auxiliary encoder g'_a: structurally the base analysis transform, trained
// for perceptual quality with the rest of the codec frozen.
struct AuxEncoder {
    CodecConfig config;
    std::vector<nn::Conv2d> enc;

    static AuxEncoder from_base(const BaseCodec& base);  // deep-copies weights
    Tensor forward(const Tensor& x) const;

    nn::NamedTensors parameters() const;  // "aux_encoder.*"
    Checkpoint to_checkpoint() const;
    static AuxEncoder from_checkpoint(const Checkpoint& ck);
    std::uint64_t hash() const { return to_checkpoint().tensor_hash(); }
};

struct FusionStepLog {
    int step = 0;
    double latent_term = 0.0;  // ||y_bar - D||^2 (mean square)
    double percep_term = 0.0;
    double loss = 0.0;
};

struct AuxTrainResult {
    AuxEncoder encoder;
    std::vector<FusionStepLog> log;  // latent_term unused
};

AuxTrainResult train_aux_encoder(const BaseCodec& base, const std::vector<Image>& dataset, int steps,
                                 std::uint64_t seed, double lr = 1e-3);

struct FusionTrainResult {
    Denoiser model;
    std::vector<FusionStepLog> log;
};

// Fusion training: per sample draw t ~ Uniform{1..T}, noise the eval-quantized
// base latent, and fit D toward the train-quantized aux latent plus the
// perceptual reconstruction through the frozen decoder:
//   loss = lambda * ||y_bar - D||^2 + pdist(x, g_s(D))
FusionTrainResult train_fusion(const BaseCodec& base, const AuxEncoder& aux,
                               const std::vector<Image>& dataset, double lambda, int steps,
                               const NoiseSchedule& schedule, std::uint64_t seed,
                               const DenoiserConfig& dcfg = {}, double lr = 1e-3);

// Decode a bitstream through the sampler: y_hat -> sample(tau) -> g_s -> clamp.
// The bitstream itself is tau-independent; refuses on model-hash mismatch.
Image decode_controlled(const BitstreamFile& bs, const SamplerConfig& cfg, const BaseCodec& base,
                        const Denoiser& model, const NoiseSchedule& schedule);

struct Variant1TrainResult {
    Variant1Translator model;
    std::vector<FusionStepLog> log;
};

// Ablation baseline: feed-forward latent translator trained only with the
// perceptual reconstruction term.
Variant1TrainResult train_variant1(const BaseCodec& base, const std::vector<Image>& dataset, int steps,
                                   std::uint64_t seed, const DenoiserConfig& dcfg = {}, double lr = 1e-3);

Tensor translate_variant1(const Tensor& y_hat, const Variant1Translator& model);

}  // namespace alf
