#include "alf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "alf/dataset.hpp"
#include "json.hpp"

namespace alf {

namespace fs = std::filesystem;

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t p = s.find(sep, start);
        if (p == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse number '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    double d = parse_double(key, v);
    if (d != std::floor(d)) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return static_cast<int>(d);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        std::uint64_t u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse unsigned integer '" + v + "'");
    }
}

std::vector<std::string> parse_list(const std::string& key, std::string v) {
    v = trim(v);
    if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<std::string> items;
    for (const std::string& part : split(v, ',')) {
        std::string p = trim(part);
        if (!p.empty()) items.push_back(p);
    }
    if (items.empty()) throw ConfigError(key + ": list must not be empty");
    return items;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
        return v.substr(1, v.size() - 2);
    return v;
}

std::string list_text(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_full(v[i]);
    return s + "]";
}

std::string list_text(const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
}

}  // namespace

void config_set(ExperimentConfig& c, const std::string& key, const std::string& raw) {
    std::string v = unquote(trim(raw));
    if (key == "data_dir") c.data_dir = v;
    else if (key == "data_seed") c.data_seed = parse_u64(key, v);
    else if (key == "data_count") c.data_count = parse_int(key, v);
    else if (key == "data_size") c.data_size = parse_int(key, v);
    else if (key == "latent_channels") c.latent_channels = parse_int(key, v);
    else if (key == "num_downsamples") c.num_downsamples = parse_int(key, v);
    else if (key == "betas") {
        c.betas.clear();
        for (const auto& p : parse_list(key, v)) c.betas.push_back(parse_double(key, p));
    } else if (key == "t_train") c.t_train = parse_int(key, v);
    else if (key == "sched_beta_min") c.sched_beta_min = parse_double(key, v);
    else if (key == "sched_beta_max") c.sched_beta_max = parse_double(key, v);
    else if (key == "num_units") c.num_units = parse_int(key, v);
    else if (key == "channels") c.channels = parse_int(key, v);
    else if (key == "time_embed_dim") c.time_embed_dim = parse_int(key, v);
    else if (key == "lambda") c.lambda = parse_double(key, v);
    else if (key == "steps_base") c.steps_base = parse_int(key, v);
    else if (key == "steps_aux") c.steps_aux = parse_int(key, v);
    else if (key == "steps_fusion") c.steps_fusion = parse_int(key, v);
    else if (key == "steps_variant1") c.steps_variant1 = parse_int(key, v);
    else if (key == "lr_base") c.lr_base = parse_double(key, v);
    else if (key == "lr_aux") c.lr_aux = parse_double(key, v);
    else if (key == "lr_fusion") c.lr_fusion = parse_double(key, v);
    else if (key == "tau_grid") {
        c.tau_grid.clear();
        for (const auto& p : parse_list(key, v)) c.tau_grid.push_back(parse_double(key, p));
    } else if (key == "steps_grid") {
        c.steps_grid.clear();
        for (const auto& p : parse_list(key, v)) c.steps_grid.push_back(parse_int(key, p));
    } else if (key == "sample_steps") c.sample_steps = parse_int(key, v);
    else if (key == "seed") c.seed = parse_u64(key, v);
    else if (key == "out_dir") c.out_dir = v;
    else throw ConfigError("unknown config key '" + key + "'");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "data_dir", "data_seed", "data_count", "data_size",
        "latent_channels", "num_downsamples", "betas",
        "t_train", "sched_beta_min", "sched_beta_max",
        "num_units", "channels", "time_embed_dim", "lambda",
        "steps_base", "steps_aux", "steps_fusion", "steps_variant1",
        "lr_base", "lr_aux", "lr_fusion",
        "tau_grid", "steps_grid", "sample_steps", "seed", "out_dir"};
    return keys;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    int line_no = 0;
    for (const std::string& raw_line : split(text, '\n')) {
        ++line_no;
        std::string line = raw_line;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        try {
            config_set(base, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
    std::vector<std::uint8_t> bytes = read_file(path);
    return parse_config(std::string(bytes.begin(), bytes.end()), std::move(base));
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream s;
    s << "data_dir = \"" << data_dir << "\"\n";
    s << "data_seed = " << data_seed << "\n";
    s << "data_count = " << data_count << "\n";
    s << "data_size = " << data_size << "\n";
    s << "latent_channels = " << latent_channels << "\n";
    s << "num_downsamples = " << num_downsamples << "\n";
    s << "betas = " << list_text(betas) << "\n";
    s << "t_train = " << t_train << "\n";
    s << "sched_beta_min = " << fmt_full(sched_beta_min) << "\n";
    s << "sched_beta_max = " << fmt_full(sched_beta_max) << "\n";
    s << "num_units = " << num_units << "\n";
    s << "channels = " << channels << "\n";
    s << "time_embed_dim = " << time_embed_dim << "\n";
    s << "lambda = " << fmt_full(lambda) << "\n";
    s << "steps_base = " << steps_base << "\n";
    s << "steps_aux = " << steps_aux << "\n";
    s << "steps_fusion = " << steps_fusion << "\n";
    s << "steps_variant1 = " << steps_variant1 << "\n";
    s << "lr_base = " << fmt_full(lr_base) << "\n";
    s << "lr_aux = " << fmt_full(lr_aux) << "\n";
    s << "lr_fusion = " << fmt_full(lr_fusion) << "\n";
    s << "tau_grid = " << list_text(tau_grid) << "\n";
    s << "steps_grid = " << list_text(steps_grid) << "\n";
    s << "sample_steps = " << sample_steps << "\n";
    s << "seed = " << seed << "\n";
    s << "out_dir = \"" << out_dir << "\"\n";
    return s.str();
}

std::uint64_t ExperimentConfig::hash() const {
    std::string t = to_text();
    return fnv1a64(t.data(), t.size());
}

void ExperimentConfig::validate() const {
    if (data_count < 0) throw ConfigError("data_count must be >= 0");
    if (data_size < 4) throw ConfigError("data_size must be >= 4");
    if (data_size % (1 << num_downsamples) != 0)
        throw ConfigError("data_size must be divisible by 2^num_downsamples");
    codec_config(betas.empty() ? 0.01 : betas[0]).validate();
    if (betas.empty()) throw ConfigError("betas must not be empty");
    for (double b : betas)
        if (!(b > 0.0)) throw ConfigError("betas entries must be > 0");
    if (t_train < 1) throw ConfigError("t_train must be >= 1");
    if (!(sched_beta_min > 0.0) || !(sched_beta_max >= sched_beta_min) || sched_beta_max >= 1.0)
        throw ConfigError("schedule betas must satisfy 0 < min <= max < 1");
    denoiser_config().validate(latent_channels);
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (steps_base < 0 || steps_aux < 0 || steps_fusion < 0 || steps_variant1 < 0)
        throw ConfigError("training step counts must be >= 0");
    if (!(lr_base > 0.0) || !(lr_aux > 0.0) || !(lr_fusion > 0.0))
        throw ConfigError("learning rates must be > 0");
    if (tau_grid.empty()) throw ConfigError("tau_grid must not be empty");
    for (double t : tau_grid)
        if (t < 0.0 || t > 1.0) throw ConfigError("tau_grid values must lie in [0,1]");
    if (steps_grid.empty()) throw ConfigError("steps_grid must not be empty");
    for (int s : steps_grid)
        if (s < 1) throw ConfigError("steps_grid values must be >= 1");
    if (sample_steps < 1) throw ConfigError("sample_steps must be >= 1");
    if (out_dir.empty() || data_dir.empty()) throw ConfigError("data_dir and out_dir must be set");
}

int ExperimentConfig::held_out_start(int n_images) const {
    if (n_images < 2) throw ConfigError("need at least 2 images to form a held-out split");
    int held = std::max(1, n_images / 10);
    return n_images - held;
}

CodecConfig ExperimentConfig::codec_config(double beta) const {
    CodecConfig cc;
    cc.image_channels = 1;
    cc.latent_channels = latent_channels;
    cc.num_downsamples = num_downsamples;
    cc.beta = beta;
    return cc;
}

DenoiserConfig ExperimentConfig::denoiser_config() const {
    DenoiserConfig dc;
    dc.num_units = num_units;
    dc.channels = channels;
    dc.time_embed_dim = time_embed_dim;
    return dc;
}

NoiseSchedule ExperimentConfig::schedule() const {
    return make_schedule(t_train, sched_beta_min, sched_beta_max);
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["held_out_start"] = held_out_start;
    j["total_seconds"] = total_seconds;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages)
        j["stages"].push_back({{"name", s.name},
                               {"checkpoint", s.checkpoint},
                               {"hash", s.hash},
                               {"trained", s.trained},
                               {"seconds", s.seconds}});
    j["outputs"] = nlohmann::json::array();
    for (const auto& o : outputs) j["outputs"].push_back({{"path", o.path}, {"hash", o.hash}});
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw IoError(std::string("manifest parse: ") + e.what());
    }
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.held_out_start = j.at("held_out_start").get<int>();
    m.total_seconds = j.at("total_seconds").get<double>();
    for (const auto& s : j.at("stages"))
        m.stages.push_back({s.at("name").get<std::string>(), s.at("checkpoint").get<std::string>(),
                            s.at("hash").get<std::string>(), s.at("trained").get<bool>(),
                            s.at("seconds").get<double>()});
    for (const auto& o : j.at("outputs"))
        m.outputs.push_back({o.at("path").get<std::string>(), o.at("hash").get<std::string>()});
    return m;
}

void RunManifest::save(const std::string& path) const {
    std::string text = to_json();
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

RunManifest RunManifest::load(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    return from_json(std::string(bytes.begin(), bytes.end()));
}

Stage stage_from_string(const std::string& s) {
    if (s == "base") return Stage::base;
    if (s == "aux") return Stage::aux;
    if (s == "fusion") return Stage::fusion;
    if (s == "variant1") return Stage::variant1;
    if (s == "all") return Stage::all;
    throw ConfigError("unknown stage '" + s + "'");
}

std::string stage_checkpoint_path(const ExperimentConfig& cfg, Stage stage, double beta) {
    const char* name = nullptr;
    switch (stage) {
        case Stage::base: name = "base"; break;
        case Stage::aux: name = "aux"; break;
        case Stage::fusion: name = "fusion"; break;
        case Stage::variant1: name = "variant1"; break;
        default: throw ConfigError("no checkpoint path for stage 'all'");
    }
    return (fs::path(cfg.out_dir) / (std::string(name) + "_beta" + fmt_g(beta) + ".alfc")).string();
}

int worker_count() {
    const char* env = std::getenv("ALF_THREADS");
    if (!env || !*env) return 1;
    int n = parse_int("ALF_THREADS", env);
    if (n < 1) throw ConfigError("ALF_THREADS must be >= 1");
    return n;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Re-throws stage failures with the stage name prepended, preserving the type.
template <typename Fn>
auto run_stage_guarded(const std::string& stage, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError("stage " + stage + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError("stage " + stage + ": " + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError("stage " + stage + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError("stage " + stage + ": " + e.what());
    }
}

// Runs fn(i) for i in [0, n) on `workers` threads; tasks are independent and
// write only to their own result slots, so the outcome is thread-count
// invariant.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

RunManifest run_pipeline(const ExperimentConfig& cfg, Stage through) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec || !fs::is_directory(cfg.out_dir))
        throw IoError("cannot create output directory " + cfg.out_dir);

    if (!fs::is_directory(cfg.data_dir) || list_dataset(cfg.data_dir).empty())
        gen_dataset(cfg.data_seed, cfg.data_count, cfg.data_size, cfg.data_dir);
    std::vector<Image> images = load_dataset(cfg.data_dir);
    if (images.size() < 2) throw IoError("dataset " + cfg.data_dir + " has fewer than 2 images");

    RunManifest manifest;
    manifest.config_hash = hex64(cfg.hash());
    manifest.held_out_start = cfg.held_out_start(static_cast<int>(images.size()));
    std::vector<Image> train(images.begin(), images.begin() + manifest.held_out_start);

    NoiseSchedule schedule = cfg.schedule();
    int rank = static_cast<int>(through);

    for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
        double beta = cfg.betas[bi];
        std::string tag = "(beta=" + fmt_g(beta) + ")";

        // Each stage: reuse the checkpoint if present, otherwise train and save.
        auto run = [&](Stage st, const std::string& name, auto load_fn, auto train_fn) {
            std::string path = stage_checkpoint_path(cfg, st, beta);
            StageRecord rec;
            rec.name = name + tag;
            rec.checkpoint = path;
            auto ts = std::chrono::steady_clock::now();
            auto result = run_stage_guarded(rec.name, [&] {
                if (fs::exists(path)) return load_fn(Checkpoint::load(path));
                auto model = train_fn();
                model.to_checkpoint().save(path);
                rec.trained = true;
                return model;
            });
            rec.seconds = seconds_since(ts);
            rec.hash = hex64(result.to_checkpoint().tensor_hash());
            manifest.stages.push_back(rec);
            manifest.outputs.push_back({path, hex64(fnv1a64(read_file(path)))});
            return result;
        };

        BaseCodec base = run(
            Stage::base, "train_base", [](const Checkpoint& ck) { return BaseCodec::from_checkpoint(ck); },
            [&] {
                std::uint64_t s = Rng::derive(cfg.seed, 1, bi).next_u64();
                return train_base(train, cfg.codec_config(beta), cfg.steps_base, s, cfg.lr_base).codec;
            });
        if (rank < static_cast<int>(Stage::aux) && through != Stage::all) continue;

        AuxEncoder aux = run(
            Stage::aux, "train_aux", [](const Checkpoint& ck) { return AuxEncoder::from_checkpoint(ck); },
            [&] {
                std::uint64_t s = Rng::derive(cfg.seed, 2, bi).next_u64();
                return train_aux_encoder(base, train, cfg.steps_aux, s, cfg.lr_aux).encoder;
            });
        if (rank < static_cast<int>(Stage::fusion) && through != Stage::all) continue;

        run(
            Stage::fusion, "train_fusion", [](const Checkpoint& ck) { return Denoiser::from_checkpoint(ck); },
            [&] {
                std::uint64_t s = Rng::derive(cfg.seed, 3, bi).next_u64();
                return train_fusion(base, aux, train, cfg.lambda, cfg.steps_fusion, schedule, s,
                                    cfg.denoiser_config(), cfg.lr_fusion)
                    .model;
            });

        bool want_variant1 = (through == Stage::variant1 || through == Stage::all) && cfg.steps_variant1 > 0;
        if (want_variant1)
            run(
                Stage::variant1, "train_variant1",
                [](const Checkpoint& ck) { return Variant1Translator::from_checkpoint(ck); },
                [&] {
                    std::uint64_t s = Rng::derive(cfg.seed, 4, bi).next_u64();
                    return train_variant1(base, train, cfg.steps_variant1, s, cfg.denoiser_config(),
                                          cfg.lr_fusion)
                        .model;
                });
    }

    manifest.total_seconds = seconds_since(t0);
    manifest.save((fs::path(cfg.out_dir) / "manifest.json").string());
    return manifest;
}

namespace {

struct EvalResult {
    double psnr = 0.0, ssim = 0.0, pdist = 0.0;
};

RDPoint mean_row(const std::string& label, double beta, double tau, double bpp,
                 const std::vector<EvalResult>& per_image, std::uint64_t seed) {
    RDPoint p;
    p.label = label;
    p.beta = beta;
    p.tau = tau;
    p.bpp = bpp;
    p.seed = seed;
    for (const auto& r : per_image) {
        p.psnr_db += r.psnr;
        p.ssim += r.ssim;
        p.pdist += r.pdist;
    }
    double n = static_cast<double>(per_image.size());
    p.psnr_db /= n;
    p.ssim /= n;
    p.pdist /= n;
    return p;
}

}  // namespace

std::vector<RDPoint> sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<Image> images = load_dataset(cfg.data_dir);
    if (images.size() < 2) throw IoError("dataset " + cfg.data_dir + " has fewer than 2 images");
    int start = cfg.held_out_start(static_cast<int>(images.size()));
    std::vector<Image> held(images.begin() + start, images.end());
    int n_img = static_cast<int>(held.size());

    NoiseSchedule schedule = cfg.schedule();
    int workers = worker_count();
    std::vector<RDPoint> rows;

    // The perceptual-proxy feature net is lazily built per channel count;
    // force it now so worker threads only read the cache.
    pdist(held[0], held[0]);

    for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
        double beta = cfg.betas[bi];
        auto need = [&](Stage st) {
            std::string path = stage_checkpoint_path(cfg, st, beta);
            if (!fs::exists(path))
                throw ConfigError("sweep: missing checkpoint for beta=" + fmt_g(beta) + ": " + path);
            return Checkpoint::load(path);
        };
        BaseCodec base = BaseCodec::from_checkpoint(need(Stage::base));
        Denoiser model = Denoiser::from_checkpoint(need(Stage::fusion));

        // One bitstream per image; every tau row below decodes these same
        // payloads, so the rate column is tau-invariant by construction.
        std::vector<BitstreamFile> streams(n_img);
        std::vector<std::uint64_t> sampler_seeds(n_img);
        double bpp = 0.0;
        for (int j = 0; j < n_img; ++j) {
            streams[j] = base.encode_image(held[j]);
            bpp += static_cast<double>(streams[j].payload.size()) * 8.0 /
                   (static_cast<double>(held[j].height) * held[j].width);
            sampler_seeds[j] = Rng::derive(cfg.seed, 1000 + bi, j).next_u64();
        }
        bpp /= n_img;

        auto eval_grid = [&](const std::string& label, double tau, int steps) {
            std::vector<EvalResult> per_image(n_img);
            parallel_for(n_img, workers, [&](int j) {
                SamplerConfig sc;
                sc.steps = steps;
                sc.tau = tau;
                sc.seed = sampler_seeds[j];
                Image rec = decode_controlled(streams[j], sc, base, model, schedule);
                per_image[j] = {psnr(held[j], rec), ssim(held[j], rec), pdist(held[j], rec)};
            });
            rows.push_back(mean_row(label, beta, tau, bpp, per_image, cfg.seed));
        };

        for (double tau : cfg.tau_grid) eval_grid("fusion", tau, cfg.sample_steps);
        for (int steps : cfg.steps_grid) eval_grid("steps_" + std::to_string(steps), 0.0, steps);

        std::string v1_path = stage_checkpoint_path(cfg, Stage::variant1, beta);
        if (fs::exists(v1_path)) {
            Variant1Translator v1 = Variant1Translator::from_checkpoint(Checkpoint::load(v1_path));
            std::vector<EvalResult> per_image(n_img);
            parallel_for(n_img, workers, [&](int j) {
                Tensor y = base.decode_latent_tensor(streams[j]);
                Image rec = Image::from_tensor(base.synthesis(translate_variant1(y, v1)));
                per_image[j] = {psnr(held[j], rec), ssim(held[j], rec), pdist(held[j], rec)};
            });
            rows.push_back(mean_row("variant1", beta, 0.0, bpp, per_image, cfg.seed));
        }
    }
    return rows;
}

static const char* kCsvHeader = "label,beta,tau,bpp,psnr_db,ssim,pdist,seed";

std::string rd_csv(const std::vector<RDPoint>& rows) {
    std::ostringstream s;
    s << kCsvHeader << "\n";
    char buf[256];
    for (const auto& p : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%llu\n",
                      p.label.c_str(), p.beta, p.tau, p.bpp, p.psnr_db, p.ssim, p.pdist,
                      static_cast<unsigned long long>(p.seed));
        s << buf;
    }
    return s.str();
}

std::vector<RDPoint> parse_rd_csv(const std::string& text) {
    std::vector<std::string> lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != kCsvHeader)
        throw ConfigError("csv line 1: expected header '" + std::string(kCsvHeader) + "'");
    std::vector<RDPoint> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty()) continue;
        std::vector<std::string> f = split(line, ',');
        std::string where = "csv line " + std::to_string(i + 1);
        if (f.size() != 8) throw ConfigError(where + ": expected 8 fields, got " + std::to_string(f.size()));
        try {
            RDPoint p;
            p.label = trim(f[0]);
            p.beta = parse_double("beta", trim(f[1]));
            p.tau = parse_double("tau", trim(f[2]));
            p.bpp = parse_double("bpp", trim(f[3]));
            p.psnr_db = parse_double("psnr_db", trim(f[4]));
            p.ssim = parse_double("ssim", trim(f[5]));
            p.pdist = parse_double("pdist", trim(f[6]));
            p.seed = parse_u64("seed", trim(f[7]));
            rows.push_back(p);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return rows;
}

void write_rd_csv(const std::string& path, const std::vector<RDPoint>& rows) {
    std::string text = rd_csv(rows);
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<RDPoint> read_rd_csv(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    return parse_rd_csv(std::string(bytes.begin(), bytes.end()));
}

namespace {

// ---- SVG report ----------------------------------------------------------

std::string fmt4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return colors[i % (sizeof(colors) / sizeof(colors[0]))];
}

struct ChartFrame {
    double x0, y0, w, h;           // pixel rect of the plot area
    double xmin, xmax, ymin, ymax; // data ranges
    double px(double x) const {
        double d = xmax - xmin;
        return x0 + (d > 0 ? (x - xmin) / d : 0.5) * w;
    }
    double py(double y) const {
        double d = ymax - ymin;
        return y0 + h - (d > 0 ? (y - ymin) / d : 0.5) * h;
    }
};

void pad_range(double& lo, double& hi) {
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
}

void svg_text(std::ostringstream& s, double x, double y, const std::string& text,
              const char* anchor = "start", int size = 11) {
    s << "<text x=\"" << fmt4(x) << "\" y=\"" << fmt4(y) << "\" font-family=\"monospace\" font-size=\""
      << size << "\" text-anchor=\"" << anchor << "\">" << text << "</text>\n";
}

void svg_frame(std::ostringstream& s, const ChartFrame& f, const std::string& title,
               const std::string& xlabel, const std::string& ylabel) {
    s << "<rect x=\"" << fmt4(f.x0) << "\" y=\"" << fmt4(f.y0) << "\" width=\"" << fmt4(f.w)
      << "\" height=\"" << fmt4(f.h) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg_text(s, f.x0 + f.w / 2, f.y0 - 8, title, "middle", 13);
    svg_text(s, f.x0 + f.w / 2, f.y0 + f.h + 28, xlabel, "middle");
    svg_text(s, f.x0 - 4, f.y0 + f.h + 14, fmt4(f.xmin), "start", 10);
    svg_text(s, f.x0 + f.w, f.y0 + f.h + 14, fmt4(f.xmax), "end", 10);
    svg_text(s, f.x0 - 6, f.y0 + f.h, fmt4(f.ymin), "end", 10);
    svg_text(s, f.x0 - 6, f.y0 + 10, fmt4(f.ymax), "end", 10);
    svg_text(s, f.x0 - 6, f.y0 - 8, ylabel, "end", 10);
}

void svg_series(std::ostringstream& s, const ChartFrame& f, const std::vector<std::pair<double, double>>& pts,
                const char* color, bool dashed = false) {
    if (pts.size() >= 2) {
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
        if (dashed) s << " stroke-dasharray=\"5,3\"";
        s << " points=\"";
        for (const auto& [x, y] : pts) s << fmt4(f.px(x)) << "," << fmt4(f.py(y)) << " ";
        s << "\"/>\n";
    }
    for (const auto& [x, y] : pts)
        s << "<circle cx=\"" << fmt4(f.px(x)) << "\" cy=\"" << fmt4(f.py(y)) << "\" r=\"2.5\" fill=\""
          << color << "\"/>\n";
}

double get_field(const RDPoint& p, const std::string& field) {
    if (field == "psnr_db") return p.psnr_db;
    if (field == "ssim") return p.ssim;
    if (field == "pdist") return p.pdist;
    throw ConfigError("unknown metric field '" + field + "'");
}

// Fusion rows of one tau across beta, sorted by bpp, as a BD-ready curve.
RDCurve tau_curve(const std::vector<RDPoint>& rows, double tau) {
    RDCurve c;
    c.label = "tau=" + fmt4(tau);
    for (const auto& p : rows)
        if (p.label == "fusion" && std::abs(p.tau - tau) < 1e-12) c.points.push_back(p);
    std::sort(c.points.begin(), c.points.end(),
              [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
    return c;
}

}  // namespace

std::string report_svg(const std::vector<RDPoint>& rows) {
    if (rows.empty()) throw ConfigError("report: no data rows");

    std::vector<double> taus;
    for (const auto& p : rows)
        if (p.label == "fusion" &&
            std::none_of(taus.begin(), taus.end(), [&](double t) { return std::abs(t - p.tau) < 1e-12; }))
            taus.push_back(p.tau);
    std::sort(taus.begin(), taus.end());

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1280\" height=\"840\" "
         "viewBox=\"0 0 1280 840\">\n";
    s << "<rect x=\"0\" y=\"0\" width=\"1280\" height=\"840\" fill=\"#ffffff\"/>\n";
    svg_text(s, 40, 24, "rate / quality report (" + std::to_string(rows.size()) + " rows)", "start", 15);

    // Row 1: bpp vs each metric, one series per tau (plus the feed-forward
    // translator when present).
    const std::string fields[3] = {"psnr_db", "ssim", "pdist"};
    for (int k = 0; k < 3; ++k) {
        std::vector<const RDPoint*> shown;
        for (const auto& p : rows)
            if (p.label == "fusion" || p.label == "variant1") shown.push_back(&p);
        if (shown.empty())
            for (const auto& p : rows) shown.push_back(&p);
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const RDPoint* p : shown) {
            xmin = std::min(xmin, p->bpp);
            xmax = std::max(xmax, p->bpp);
            ymin = std::min(ymin, get_field(*p, fields[k]));
            ymax = std::max(ymax, get_field(*p, fields[k]));
        }
        pad_range(xmin, xmax);
        pad_range(ymin, ymax);
        ChartFrame f{70.0 + 420.0 * k, 60.0, 330.0, 260.0, xmin, xmax, ymin, ymax};
        svg_frame(s, f, "bpp vs " + fields[k], "bpp", fields[k]);
        for (std::size_t ti = 0; ti < taus.size(); ++ti) {
            RDCurve c = tau_curve(rows, taus[ti]);
            std::vector<std::pair<double, double>> pts;
            for (const auto& p : c.points) pts.emplace_back(p.bpp, get_field(p, fields[k]));
            svg_series(s, f, pts, palette(ti));
            if (k == 0)
                svg_text(s, f.x0 + 8, f.y0 + 14 + 13 * static_cast<double>(ti),
                         "tau=" + fmt4(taus[ti]) + " &#8212;", "start", 10);
        }
        std::vector<std::pair<double, double>> v1;
        for (const auto& p : rows)
            if (p.label == "variant1") v1.emplace_back(p.bpp, get_field(p, fields[k]));
        std::sort(v1.begin(), v1.end());
        svg_series(s, f, v1, "#000000", true);
    }

    // Row 2 left: distortion-perception trade-off, one path per beta swept
    // along tau.
    {
        std::vector<const RDPoint*> fusion;
        for (const auto& p : rows)
            if (p.label == "fusion") fusion.push_back(&p);
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const RDPoint* p : (fusion.empty() ? std::vector<const RDPoint*>{} : fusion)) {
            xmin = std::min(xmin, p->pdist);
            xmax = std::max(xmax, p->pdist);
            ymin = std::min(ymin, p->psnr_db);
            ymax = std::max(ymax, p->psnr_db);
        }
        if (fusion.empty()) {
            xmin = 0;
            xmax = 1;
            ymin = 0;
            ymax = 1;
        }
        pad_range(xmin, xmax);
        pad_range(ymin, ymax);
        ChartFrame f{70.0, 420.0, 330.0, 260.0, xmin, xmax, ymin, ymax};
        svg_frame(s, f, "PSNR vs pdist (along tau)", "pdist", "psnr_db");
        std::vector<double> betas;
        for (const RDPoint* p : fusion)
            if (std::none_of(betas.begin(), betas.end(),
                             [&](double b) { return std::abs(b - p->beta) < 1e-12; }))
                betas.push_back(p->beta);
        std::sort(betas.begin(), betas.end());
        for (std::size_t bi = 0; bi < betas.size(); ++bi) {
            std::vector<const RDPoint*> path;
            for (const RDPoint* p : fusion)
                if (std::abs(p->beta - betas[bi]) < 1e-12) path.push_back(p);
            std::sort(path.begin(), path.end(),
                      [](const RDPoint* a, const RDPoint* b) { return a->tau < b->tau; });
            std::vector<std::pair<double, double>> pts;
            for (const RDPoint* p : path) pts.emplace_back(p->pdist, p->psnr_db);
            svg_series(s, f, pts, palette(bi));
            svg_text(s, f.x0 + 8, f.y0 + 14 + 13 * static_cast<double>(bi),
                     "beta=" + fmt4(betas[bi]), "start", 10);
        }
    }

    // Row 2 right: BD-rate of the tau=0 curve against the tau=1 anchor.
    {
        double tx = 490.0, ty = 430.0;
        svg_text(s, tx, ty, "BD-rate, tau=0 vs anchor tau=1", "start", 13);
        bool has0 = std::any_of(taus.begin(), taus.end(), [](double t) { return std::abs(t) < 1e-12; });
        bool has1 = std::any_of(taus.begin(), taus.end(), [](double t) { return std::abs(t - 1) < 1e-12; });
        if (taus.size() < 2 || !has0 || !has1) {
            svg_text(s, tx, ty + 22, "omitted: need both tau=0 and tau=1 rows", "start", 11);
        } else {
            RDCurve anchor = tau_curve(rows, 1.0);
            RDCurve test = tau_curve(rows, 0.0);
            double line = 0;
            for (const std::string& field : {std::string("psnr_db"), std::string("pdist")}) {
                std::string quality = field == "psnr_db" ? "psnr" : "pdist";
                std::string msg;
                try {
                    msg = field + ": " + fmt4(bd_rate(anchor, test, quality)) + "%";
                } catch (const ConfigError& e) {
                    msg = field + ": omitted (" + std::string(e.what()) + ")";
                }
                svg_text(s, tx, ty + 22 + 18 * line, msg, "start", 11);
                line += 1;
            }
        }
    }

    s << "</svg>\n";
    return s.str();
}

}  // namespace alf
