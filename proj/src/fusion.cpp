#include "alf/fusion.hpp"

#include <cmath>

#include "alf/metrics.hpp"
#include "alf/ops.hpp"
#include "alf/optim.hpp"
#include "json.hpp"

namespace alf {

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
    if (steps < 1 || steps > schedule.t_train)
        throw ConfigError("sampler: steps must be in [1, T_train]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("sampler: tau must be in [0, 1]");
}

Tensor forward_noise(const Tensor& y, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (!y.same_shape(eps)) throw ShapeError("forward_noise: noise shape mismatch");
    double a = schedule.alpha(t);
    return ops::add(ops::scale(y, static_cast<float>(std::sqrt(a))),
                    ops::scale(eps, static_cast<float>(std::sqrt(1.0 - a))));
}

Tensor predict_noise(const Tensor& y_t, const Tensor& d_out, int t, const NoiseSchedule& schedule) {
    if (!y_t.same_shape(d_out)) throw ShapeError("predict_noise: shape mismatch");
    if (t < 1) throw ConfigError("predict_noise: t must be >= 1 (alpha_0 = 1 has no noise component)");
    double a = schedule.alpha(t);
    Tensor num = ops::sub(y_t, ops::scale(d_out, static_cast<float>(std::sqrt(a))));
    return ops::scale(num, static_cast<float>(1.0 / std::sqrt(1.0 - a)));
}

Tensor ddim_update(const Tensor& y_t, const Tensor& y_hat, const Tensor& d_out, int t, int t_prev,
                   double tau, const NoiseSchedule& schedule) {
    if (t <= t_prev || t_prev < 0 || t > schedule.t_train)
        throw ConfigError("ddim_update: need T_train >= t > t_prev >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("ddim_update: tau must be in [0, 1]");
    if (!y_t.same_shape(y_hat) || !y_t.same_shape(d_out)) throw ShapeError("ddim_update: shape mismatch");

    float w = static_cast<float>(1.0 - tau * tau);  // weight on the predicted latent
    double a_prev = schedule.alpha(t_prev);
    Tensor bracket = ops::add(ops::scale(d_out, w), ops::scale(y_hat, 1.0f - w));
    Tensor eps_hat = predict_noise(y_t, d_out, t, schedule);
    return ops::add(ops::scale(bracket, static_cast<float>(std::sqrt(a_prev))),
                    ops::scale(eps_hat, w * static_cast<float>(std::sqrt(1.0 - a_prev))));
}

Tensor ddim_step_tau(const Tensor& y_t, const Tensor& y_hat, int t, int t_prev, double tau,
                     const Denoiser& model, const NoiseSchedule& schedule) {
    float t_frac = static_cast<float>(static_cast<double>(t) / schedule.t_train);
    Tensor d_out = model.forward(y_t, y_hat, t_frac);
    return ddim_update(y_t, y_hat, d_out, t, t_prev, tau, schedule);
}

Tensor sample(const Tensor& y_hat, const SamplerConfig& cfg, const Denoiser& model,
              const NoiseSchedule& schedule) {
    cfg.validate(schedule);
    NoGradScope ng;
    // evenly spaced grid of cfg.steps transitions from T down to 0
    std::vector<int> grid(static_cast<std::size_t>(cfg.steps) + 1);
    for (int i = 0; i <= cfg.steps; ++i)
        grid[static_cast<std::size_t>(i)] = static_cast<int>(
            std::lround(static_cast<double>(schedule.t_train) * (cfg.steps - i) / cfg.steps));
    Rng rng = Rng::derive(cfg.seed, 40);
    Tensor y = nn::gaussian_noise_like(y_hat, rng);
    for (int i = 0; i < cfg.steps; ++i)
        y = ddim_step_tau(y, y_hat, grid[static_cast<std::size_t>(i)],
                          grid[static_cast<std::size_t>(i) + 1], cfg.tau, model, schedule);
    return y;
}

Tensor ancestral_step(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& schedule,
                      double sigma_t, Rng& rng) {
    if (!x_t.same_shape(eps_hat)) throw ShapeError("ancestral_step: shape mismatch");
    if (t < 1) throw ConfigError("ancestral_step: t must be >= 1");
    double beta = schedule.beta(t);
    double abar = schedule.alpha(t);
    Tensor num = ops::sub(x_t, ops::scale(eps_hat, static_cast<float>(beta / std::sqrt(1.0 - abar))));
    Tensor mean = ops::scale(num, static_cast<float>(1.0 / std::sqrt(1.0 - beta)));
    if (sigma_t == 0.0) return mean;
    Tensor eps = nn::gaussian_noise_like(x_t, rng);
    return ops::add(mean, ops::scale(eps, static_cast<float>(sigma_t)));
}

AuxEncoder AuxEncoder::from_base(const BaseCodec& base) {
    AuxEncoder aux;
    aux.config = base.config;
    for (const auto& conv : base.enc) {
        nn::Conv2d copy;
        copy.stride = conv.stride;
        copy.padding = conv.padding;
        copy.w = Tensor::from_data(conv.w.shape(), conv.w.data(), true);
        copy.b = Tensor::from_data(conv.b.shape(), conv.b.data(), true);
        aux.enc.push_back(copy);
    }
    return aux;
}

Tensor AuxEncoder::forward(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != config.image_channels)
        throw ShapeError("aux encoder: image shape mismatch");
    Tensor h = x;
    for (std::size_t i = 0; i < enc.size(); ++i) {
        h = enc[i].forward(h);
        if (i + 1 < enc.size()) h = ops::leaky_relu(h);
    }
    return h;
}

nn::NamedTensors AuxEncoder::parameters() const {
    nn::NamedTensors p;
    for (std::size_t i = 0; i < enc.size(); ++i)
        enc[i].collect("aux_encoder." + std::to_string(i) + ".", p);
    return p;
}

Checkpoint AuxEncoder::to_checkpoint() const {
    Checkpoint ck;
    nlohmann::json meta;
    meta["kind"] = "aux_encoder";
    meta["image_channels"] = config.image_channels;
    meta["latent_channels"] = config.latent_channels;
    meta["num_downsamples"] = config.num_downsamples;
    meta["beta"] = config.beta;
    meta["loss_kind"] = to_string(config.loss_kind);
    ck.metadata = meta.dump();
    ck.tensors = parameters();
    return ck;
}

AuxEncoder AuxEncoder::from_checkpoint(const Checkpoint& ck) {
    nlohmann::json meta = nlohmann::json::parse(ck.metadata);
    if (meta.value("kind", "") != "aux_encoder") throw IoError("checkpoint is not an aux encoder");
    CodecConfig config;
    config.image_channels = meta.at("image_channels").get<int>();
    config.latent_channels = meta.at("latent_channels").get<int>();
    config.num_downsamples = meta.at("num_downsamples").get<int>();
    config.beta = meta.at("beta").get<double>();
    config.loss_kind = loss_kind_from_string(meta.at("loss_kind").get<std::string>());
    Rng rng(0);
    AuxEncoder aux = from_base(BaseCodec::create(config, rng));
    for (auto& [name, t] : aux.parameters()) {
        Tensor stored = ck.find(name);
        if (!stored.same_shape(t)) throw IoError("aux checkpoint tensor shape mismatch: " + name);
        t.impl()->data = stored.data();
    }
    return aux;
}

AuxTrainResult train_aux_encoder(const BaseCodec& base, const std::vector<Image>& dataset, int steps,
                                 std::uint64_t seed, double lr) {
    if (dataset.empty()) throw ConfigError("train_aux_encoder: empty dataset");
    if (steps < 0) throw ConfigError("train_aux_encoder: negative step count");

    AuxTrainResult res;
    res.encoder = AuxEncoder::from_base(base);

    std::vector<Tensor> params;
    for (auto& [name, t] : res.encoder.parameters()) params.push_back(t);
    AdamW::Config oc;
    oc.lr = static_cast<float>(lr);
    AdamW opt(params, oc);

    Rng data_rng = Rng::derive(seed, 10);
    Rng noise_rng = Rng::derive(seed, 11);

    for (int step = 1; step <= steps; ++step) {
        const Image& img = dataset[data_rng.below(dataset.size())];
        Tensor x = img.to_tensor();

        Tape tape;
        TapeScope ts(tape);
        Tensor y_bar = quantize(res.encoder.forward(x), QuantizeMode::train, noise_rng);
        Tensor x_hat = base.synthesis(y_bar);  // g_s frozen: excluded from the optimizer
        Tensor loss = pdist_graph(x, x_hat);

        if (!std::isfinite(loss.item()))
            throw NumericError("train_aux_encoder: non-finite loss at step " + std::to_string(step));

        opt.zero_grad();
        backward(loss, tape, params);
        opt.step();
        res.log.push_back({step, 0.0, static_cast<double>(loss.item()), static_cast<double>(loss.item())});
    }
    return res;
}

FusionTrainResult train_fusion(const BaseCodec& base, const AuxEncoder& aux,
                               const std::vector<Image>& dataset, double lambda, int steps,
                               const NoiseSchedule& schedule, std::uint64_t seed,
                               const DenoiserConfig& dcfg, double lr) {
    if (dataset.empty()) throw ConfigError("train_fusion: empty dataset");
    if (steps < 0) throw ConfigError("train_fusion: negative step count");
    if (lambda < 0.0) throw ConfigError("train_fusion: lambda must be >= 0");
    if (aux.config.latent_channels != base.config.latent_channels ||
        aux.config.num_downsamples != base.config.num_downsamples)
        throw ConfigError("train_fusion: base and aux checkpoints disagree on latent geometry");
    schedule.validate();

    Rng init_rng = Rng::derive(seed, 20);
    FusionTrainResult res;
    res.model = Denoiser::create(base.config.latent_channels, dcfg, init_rng);

    std::vector<Tensor> params;
    for (auto& [name, t] : res.model.parameters()) params.push_back(t);
    AdamW::Config oc;
    oc.lr = static_cast<float>(lr);
    AdamW opt(params, oc);

    Rng data_rng = Rng::derive(seed, 21);
    Rng step_rng = Rng::derive(seed, 22);

    for (int step = 1; step <= steps; ++step) {
        const Image& img = dataset[data_rng.below(dataset.size())];
        Tensor x = img.to_tensor();

        Tensor y_hat, y_bar, y_t;
        int t;
        {
            NoGradScope ng;  // conditioning inputs and target are constants
            y_hat = ops::round_ste(base.analysis(x));
            y_bar = quantize(aux.forward(x), QuantizeMode::train, step_rng);
            t = 1 + static_cast<int>(step_rng.below(static_cast<std::uint64_t>(schedule.t_train)));
            Tensor eps = nn::gaussian_noise_like(y_hat, step_rng);
            y_t = forward_noise(y_hat, t, eps, schedule);
        }

        Tape tape;
        TapeScope ts(tape);
        Tensor d_out = res.model.forward(y_t, y_hat, static_cast<float>(t) / schedule.t_train);
        Tensor latent_term = ops::mse(y_bar, d_out);
        Tensor percep_term = pdist_graph(x, base.synthesis(d_out));
        Tensor loss = ops::add(ops::scale(latent_term, static_cast<float>(lambda)), percep_term);

        if (!std::isfinite(loss.item()))
            throw NumericError("train_fusion: non-finite loss at step " + std::to_string(step) +
                               " (t=" + std::to_string(t) + ")");

        opt.zero_grad();
        backward(loss, tape, params);
        opt.step();
        res.log.push_back({step, static_cast<double>(latent_term.item()),
                           static_cast<double>(percep_term.item()), static_cast<double>(loss.item())});
    }
    return res;
}

Image decode_controlled(const BitstreamFile& bs, const SamplerConfig& cfg, const BaseCodec& base,
                        const Denoiser& model, const NoiseSchedule& schedule) {
    NoGradScope ng;
    Tensor y_hat = base.decode_latent_tensor(bs);  // refuses on hash mismatch
    Tensor y0 = sample(y_hat, cfg, model, schedule);
    return Image::from_tensor(base.synthesis(y0));
}

Variant1TrainResult train_variant1(const BaseCodec& base, const std::vector<Image>& dataset, int steps,
                                   std::uint64_t seed, const DenoiserConfig& dcfg, double lr) {
    if (dataset.empty()) throw ConfigError("train_variant1: empty dataset");
    if (steps < 0) throw ConfigError("train_variant1: negative step count");

    Rng init_rng = Rng::derive(seed, 30);
    Variant1TrainResult res;
    res.model = Variant1Translator::create(base.config.latent_channels, dcfg, init_rng);

    std::vector<Tensor> params;
    for (auto& [name, t] : res.model.parameters()) params.push_back(t);
    AdamW::Config oc;
    oc.lr = static_cast<float>(lr);
    AdamW opt(params, oc);

    Rng data_rng = Rng::derive(seed, 31);

    for (int step = 1; step <= steps; ++step) {
        const Image& img = dataset[data_rng.below(dataset.size())];
        Tensor x = img.to_tensor();
        Tensor y_hat;
        {
            NoGradScope ng;
            y_hat = ops::round_ste(base.analysis(x));
        }
        Tape tape;
        TapeScope ts(tape);
        Tensor y_tilde = res.model.forward(y_hat);
        Tensor loss = pdist_graph(x, base.synthesis(y_tilde));
        if (!std::isfinite(loss.item()))
            throw NumericError("train_variant1: non-finite loss at step " + std::to_string(step));
        opt.zero_grad();
        backward(loss, tape, params);
        opt.step();
        res.log.push_back({step, 0.0, static_cast<double>(loss.item()), static_cast<double>(loss.item())});
    }
    return res;
}

Tensor translate_variant1(const Tensor& y_hat, const Variant1Translator& model) {
    NoGradScope ng;
    return model.forward(y_hat);
}

}  // namespace alf
