// Command-line front end: dataset generation, staged training, encode/decode,
// sweeps and reports. Exit codes: 0 ok, 2 config error, 3 numeric abort,
// 4 I/O error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "alf/dataset.hpp"
#include "alf/harness.hpp"

namespace {

using namespace alf;

struct Options {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;  // CLI beats file
};

// Every config key is mirrored as --key <value>; list-valued keys accept the
// same [a, b] syntax as the file.
void add_config_flags(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_path, "experiment config file (key = value)");
    for (const std::string& key : config_keys()) {
        if (cmd->get_option_no_throw("--" + key)) continue;  // verb-specific flag wins
        cmd->add_option_function<std::string>(
            "--" + key, [&opt, key](const std::string& v) { opt.overrides.emplace_back(key, v); },
            "override config key " + key);
    }
}

ExperimentConfig resolve_config(const Options& opt) {
    ExperimentConfig cfg;
    if (!opt.config_path.empty()) cfg = load_config(opt.config_path);
    for (const auto& [key, value] : opt.overrides) config_set(cfg, key, value);
    if (const char* env = std::getenv("ALF_SEED"); env && *env)
        config_set(cfg, "seed", env);
    return cfg;
}

void save_text(const std::string& path, const std::string& text) {
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

int selftest() {
    // Quick internal consistency pass, no filesystem access.
    ExperimentConfig cfg;
    cfg.validate();

    NoiseSchedule sched = make_schedule(10, 1e-3, 0.02);
    sched.validate();

    std::vector<Image> imgs = make_dataset(3, 2, 16);
    Rng rng(1);
    CodecConfig cc;
    cc.latent_channels = 4;
    cc.num_downsamples = 2;
    BaseCodec codec = BaseCodec::create(cc, rng);
    BitstreamFile bs = codec.encode_image(imgs[0]);
    Image round = codec.decode_image(BitstreamFile::deserialize(bs.serialize()));
    if (round.width != imgs[0].width || round.height != imgs[0].height)
        throw NumericError("selftest: decode shape mismatch");

    Tensor y = codec.decode_latent_tensor(bs);
    Tensor y2 = codec.code_to_tensor(
        decode_latent(bs.payload, y.shape(), codec.make_code(y).channel_means,
                      codec.make_code(y).channel_scales));
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y.data()[i] != y2.data()[i]) throw NumericError("selftest: latent round-trip mismatch");

    double p = psnr(imgs[0], imgs[0]);
    if (p < 99.0) throw NumericError("selftest: psnr self-comparison");
    std::puts("selftest ok");
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"adaptive latent fusion codec laboratory"};
    app.require_subcommand(1);
    Options opt;

    std::string image_path, stream_path, output_path, csv_path, svg_path;
    std::string quality_field = "psnr";
    double beta_flag = -1.0, anchor_tau = 1.0, test_tau = 0.0;
    double tau = 0.0;
    int steps = -1;
    std::uint64_t dseed = 0;
    bool have_seed_flag = false;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_config_flags(gen, opt);

    auto* tb = app.add_subcommand("train-base", "train the base codec (stage 1)");
    add_config_flags(tb, opt);
    auto* ta = app.add_subcommand("train-aux", "train the auxiliary encoder (stage 2)");
    add_config_flags(ta, opt);
    auto* tf = app.add_subcommand("train-fusion", "train the latent fusion module (stage 3)");
    add_config_flags(tf, opt);
    auto* pipe = app.add_subcommand("pipeline", "run every training stage");
    add_config_flags(pipe, opt);

    auto* enc = app.add_subcommand("encode", "encode an image to a bitstream");
    add_config_flags(enc, opt);
    enc->add_option("--image", image_path, "input image (png/pgm)")->required();
    enc->add_option("--out", stream_path, "output bitstream path")->required();
    enc->add_option("--use-beta", beta_flag, "which trained beta to use (default: first)");

    auto* dec = app.add_subcommand("decode", "decode a bitstream to an image");
    dec->add_option("--stream", stream_path, "input bitstream path")->required();
    dec->add_option("--out", output_path, "output image path")->required();
    dec->add_option("--tau", tau, "trade-off control in [0,1] (default 0)");
    dec->add_option("--steps", steps, "sampler steps (default: config sample_steps)");
    dec->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { dseed = v; have_seed_flag = true; }, "sampler seed");
    dec->add_option("--use-beta", beta_flag, "which trained beta to use (default: first)");
    add_config_flags(dec, opt);

    auto* sw = app.add_subcommand("sweep", "evaluate the held-out set over the tau/steps grids");
    add_config_flags(sw, opt);
    sw->add_option("--out", csv_path, "output CSV path (default: <out_dir>/sweep.csv)");

    auto* bd = app.add_subcommand("bdrate", "BD-rate between two tau curves of a sweep CSV");
    bd->add_option("--csv", csv_path, "sweep CSV")->required();
    bd->add_option("--quality", quality_field, "quality field: psnr or pdist");
    bd->add_option("--anchor-tau", anchor_tau, "anchor curve tau (default 1)");
    bd->add_option("--test-tau", test_tau, "test curve tau (default 0)");

    auto* rep = app.add_subcommand("report", "render a sweep CSV as an SVG report");
    rep->add_option("--csv", csv_path, "sweep CSV")->required();
    rep->add_option("--out", svg_path, "output SVG path")->required();

    app.add_subcommand("selftest", "run quick internal consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (app.got_subcommand("selftest")) return selftest();

    if (app.got_subcommand("bdrate")) {
        std::vector<RDPoint> rows = read_rd_csv(csv_path);
        auto curve = [&](double t) {
            RDCurve c;
            c.label = "tau=" + std::to_string(t);
            for (const auto& p : rows)
                if (p.label == "fusion" && std::abs(p.tau - t) < 1e-9) c.points.push_back(p);
            std::sort(c.points.begin(), c.points.end(),
                      [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
            return c;
        };
        double v = bd_rate(curve(anchor_tau), curve(test_tau), quality_field);
        std::printf("bd_rate(%s, tau %g vs %g) = %.4f%%\n", quality_field.c_str(), test_tau,
                    anchor_tau, v);
        return 0;
    }

    if (app.got_subcommand("report")) {
        std::vector<RDPoint> rows = read_rd_csv(csv_path);
        save_text(svg_path, report_svg(rows));
        std::printf("wrote %s\n", svg_path.c_str());
        return 0;
    }

    ExperimentConfig cfg = resolve_config(opt);

    if (app.got_subcommand("gen-data")) {
        auto paths = gen_dataset(cfg.data_seed, cfg.data_count, cfg.data_size, cfg.data_dir);
        std::printf("wrote %zu images to %s\n", paths.size(), cfg.data_dir.c_str());
        return 0;
    }

    auto pick_beta = [&]() {
        if (beta_flag < 0) return cfg.betas.at(0);
        for (double b : cfg.betas)
            if (std::abs(b - beta_flag) < 1e-12) return b;
        throw ConfigError("--use-beta value is not in the configured betas list");
    };

    if (app.got_subcommand("encode")) {
        cfg.validate();
        double beta = pick_beta();
        std::string ck = stage_checkpoint_path(cfg, Stage::base, beta);
        if (!std::filesystem::exists(ck)) throw ConfigError("missing base checkpoint " + ck);
        BaseCodec codec = BaseCodec::from_checkpoint(Checkpoint::load(ck));
        BitstreamFile bs = codec.encode_image(read_image(image_path));
        bs.save(stream_path);
        double bpp = static_cast<double>(bs.payload.size()) * 8.0 /
                     (static_cast<double>(bs.height) * bs.width * (1 << (2 * cfg.num_downsamples)));
        std::printf("wrote %s (%.4f bpp)\n", stream_path.c_str(), bpp);
        return 0;
    }

    if (app.got_subcommand("decode")) {
        cfg.validate();
        double beta = pick_beta();
        std::string base_ck = stage_checkpoint_path(cfg, Stage::base, beta);
        if (!std::filesystem::exists(base_ck)) throw ConfigError("missing base checkpoint " + base_ck);
        BaseCodec codec = BaseCodec::from_checkpoint(Checkpoint::load(base_ck));
        BitstreamFile bs = BitstreamFile::load(stream_path);
        Image out;
        if (tau == 1.0) {
            out = codec.decode_image(bs);
        } else {
            std::string fus_ck = stage_checkpoint_path(cfg, Stage::fusion, beta);
            if (!std::filesystem::exists(fus_ck))
                throw ConfigError("missing fusion checkpoint " + fus_ck + " (required for tau < 1)");
            Denoiser model = Denoiser::from_checkpoint(Checkpoint::load(fus_ck));
            SamplerConfig sc;
            sc.steps = steps > 0 ? steps : cfg.sample_steps;
            sc.tau = tau;
            sc.seed = have_seed_flag ? dseed : cfg.seed;
            out = decode_controlled(bs, sc, codec, model, cfg.schedule());
        }
        write_image(output_path, out);
        std::printf("wrote %s\n", output_path.c_str());
        return 0;
    }

    if (app.got_subcommand("sweep")) {
        std::vector<RDPoint> rows = sweep(cfg);
        std::string path = csv_path.empty()
                               ? (std::filesystem::path(cfg.out_dir) / "sweep.csv").string()
                               : csv_path;
        write_rd_csv(path, rows);
        std::printf("wrote %s (%zu rows)\n", path.c_str(), rows.size());
        return 0;
    }

    Stage through = Stage::all;
    if (app.got_subcommand("train-base")) through = Stage::base;
    else if (app.got_subcommand("train-aux")) through = Stage::aux;
    else if (app.got_subcommand("train-fusion")) through = Stage::fusion;
    RunManifest m = run_pipeline(cfg, through);
    int trained = 0;
    for (const auto& s : m.stages) trained += s.trained ? 1 : 0;
    std::printf("pipeline ok: %zu stages (%d trained, %zu cached), %.1f s\n", m.stages.size(),
                trained, m.stages.size() - trained, m.total_seconds);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const alf::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const alf::ShapeError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const alf::NumericError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const alf::IoError& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const alf::DecodeError& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
