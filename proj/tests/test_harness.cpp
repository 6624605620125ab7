#include <filesystem>

#include "alf/dataset.hpp"
#include "alf/harness.hpp"
#include "doctest.h"

using namespace alf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

// Tiny but complete experiment: trains in about a second.
ExperimentConfig tiny_config(const char* tag) {
    ExperimentConfig cfg;
    cfg.data_dir = temp_dir((std::string("alf_h_data_") + tag).c_str()).string();
    cfg.out_dir = temp_dir((std::string("alf_h_out_") + tag).c_str()).string();
    cfg.data_count = 12;
    cfg.data_size = 16;
    cfg.latent_channels = 4;
    cfg.num_downsamples = 2;
    cfg.betas = {0.05};
    cfg.t_train = 20;
    cfg.num_units = 1;
    cfg.channels = 8;
    cfg.steps_base = 40;
    cfg.steps_aux = 20;
    cfg.steps_fusion = 20;
    cfg.steps_variant1 = 10;
    cfg.lr_base = 1e-3;
    cfg.lr_aux = 1e-3;
    cfg.lr_fusion = 1e-3;
    cfg.tau_grid = {0.0, 1.0};
    cfg.steps_grid = {1, 2};
    cfg.sample_steps = 2;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("config text parses with comments, quotes and lists") {
    std::string text =
        "# experiment\n"
        "data_dir = \"/tmp/somewhere\"\n"
        "latent_channels = 24   # inline comment\n"
        "betas = [0.01, 0.05]\n"
        "tau_grid = [0, 1]\n"
        "lambda = 2.5\n"
        "\n"
        "seed = 77\n";
    ExperimentConfig cfg = parse_config(text);
    CHECK(cfg.data_dir == "/tmp/somewhere");
    CHECK(cfg.latent_channels == 24);
    REQUIRE(cfg.betas.size() == 2);
    CHECK(cfg.betas[1] == doctest::Approx(0.05));
    CHECK(cfg.tau_grid == std::vector<double>{0.0, 1.0});
    CHECK(cfg.lambda == doctest::Approx(2.5));
    CHECK(cfg.seed == 77);
    // Untouched keys keep their defaults.
    CHECK(cfg.sample_steps == 10);
}

TEST_CASE("config parse errors carry line numbers and key names") {
    CHECK_THROWS_WITH_AS(parse_config("latent_channels = 8\nnot a key value\n"),
                         doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("no_such_key = 3\n"), doctest::Contains("no_such_key"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("latent_channels = eight\n"), doctest::Contains("line 1"),
                         ConfigError);
    CHECK_THROWS_AS(parse_config("latent_channels = 2.5\n"), ConfigError);
}

TEST_CASE("config round-trips through its canonical dump") {
    ExperimentConfig cfg = tiny_config("roundtrip");
    cfg.tau_grid = {0.0, 0.25, 1.0};
    ExperimentConfig back = parse_config(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.hash() == cfg.hash());
    back.seed += 1;
    CHECK(back.hash() != cfg.hash());
}

TEST_CASE("config validation rejects out-of-range values") {
    ExperimentConfig cfg = tiny_config("validate");
    CHECK_NOTHROW(cfg.validate());

    ExperimentConfig bad = cfg;
    bad.tau_grid = {0.0, 1.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.data_size = 18;  // not divisible by 2^num_downsamples
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.betas = {};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lr_base = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("held-out split is the last tenth, at least one image") {
    ExperimentConfig cfg;
    CHECK(cfg.held_out_start(100) == 90);
    CHECK(cfg.held_out_start(12) == 11);
    CHECK(cfg.held_out_start(2) == 1);
    CHECK_THROWS_AS(cfg.held_out_start(1), ConfigError);
}

TEST_CASE("manifest json round-trips") {
    RunManifest m;
    m.config_hash = "deadbeef00112233";
    m.held_out_start = 9;
    m.total_seconds = 1.5;
    m.stages.push_back({"train_base(beta=0.05)", "/tmp/x.alfc", "0011223344556677", true, 0.25});
    m.outputs.push_back({"/tmp/x.alfc", "8899aabbccddeeff"});
    RunManifest back = RunManifest::from_json(m.to_json());
    CHECK(back.config_hash == m.config_hash);
    CHECK(back.held_out_start == 9);
    REQUIRE(back.stages.size() == 1);
    CHECK(back.stages[0].name == m.stages[0].name);
    CHECK(back.stages[0].trained);
    REQUIRE(back.outputs.size() == 1);
    CHECK(back.outputs[0].hash == m.outputs[0].hash);
    CHECK_THROWS_AS(RunManifest::from_json("not json"), IoError);
}

TEST_CASE("pipeline trains, caches, and re-runs only missing stages") {
    ExperimentConfig cfg = tiny_config("pipe");
    RunManifest first = run_pipeline(cfg);
    REQUIRE(first.stages.size() == 4);
    for (const auto& s : first.stages) CHECK(s.trained);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "manifest.json"));

    // Second run: every stage is a cache hit with identical weights.
    RunManifest second = run_pipeline(cfg);
    REQUIRE(second.stages.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK_FALSE(second.stages[i].trained);
        CHECK(second.stages[i].hash == first.stages[i].hash);
    }

    // Deleting the fusion checkpoint re-trains stage 3 only.
    fs::remove(stage_checkpoint_path(cfg, Stage::fusion, cfg.betas[0]));
    RunManifest third = run_pipeline(cfg);
    CHECK_FALSE(third.stages[0].trained);
    CHECK_FALSE(third.stages[1].trained);
    CHECK(third.stages[2].trained);
    CHECK_FALSE(third.stages[3].trained);
    CHECK(third.stages[2].hash == first.stages[2].hash);  // same seed, same data

    // Stage isolation: the fusion checkpoint holds only denoiser tensors and
    // the frozen base bytes are untouched.
    Checkpoint fus = Checkpoint::load(stage_checkpoint_path(cfg, Stage::fusion, cfg.betas[0]));
    for (const auto& [name, t] : fus.tensors) CHECK(name.rfind("denoiser.", 0) == 0);
    CHECK(third.stages[0].hash == first.stages[0].hash);
}

TEST_CASE("pipeline respects the through-stage argument") {
    ExperimentConfig cfg = tiny_config("stages");
    RunManifest base_only = run_pipeline(cfg, Stage::base);
    REQUIRE(base_only.stages.size() == 1);
    CHECK(fs::exists(stage_checkpoint_path(cfg, Stage::base, cfg.betas[0])));
    CHECK_FALSE(fs::exists(stage_checkpoint_path(cfg, Stage::aux, cfg.betas[0])));

    RunManifest through_aux = run_pipeline(cfg, Stage::aux);
    REQUIRE(through_aux.stages.size() == 2);
    CHECK_FALSE(through_aux.stages[0].trained);  // base cached
    CHECK(through_aux.stages[1].trained);
}

TEST_CASE("sweep emits the expected grid and a tau-invariant rate column") {
    ExperimentConfig cfg = tiny_config("sweep");
    run_pipeline(cfg);
    std::vector<RDPoint> rows = sweep(cfg);

    // 2 taus + 2 steps-grid entries + variant1.
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].label == "fusion");
    CHECK(rows[0].tau == 0.0);
    CHECK(rows[1].label == "fusion");
    CHECK(rows[1].tau == 1.0);
    CHECK(rows[2].label == "steps_1");
    CHECK(rows[3].label == "steps_2");
    CHECK(rows[4].label == "variant1");
    for (const auto& p : rows) {
        CHECK(p.bpp == rows[0].bpp);  // one bitstream per image, shared by all rows
        CHECK(p.beta == cfg.betas[0]);
        CHECK(p.psnr_db > 0.0);
        CHECK(p.ssim > -1.0);
        CHECK(p.pdist >= 0.0);
    }

    // Determinism: a second sweep is byte-identical.
    CHECK(rd_csv(sweep(cfg)) == rd_csv(rows));

    // Missing checkpoints are reported with the offending beta.
    ExperimentConfig missing = cfg;
    missing.out_dir = temp_dir("alf_h_out_missing").string();
    fs::create_directories(missing.out_dir);
    CHECK_THROWS_WITH_AS(sweep(missing), doctest::Contains("beta=0.05"), ConfigError);
}

TEST_CASE("csv round-trips and reports malformed rows by line") {
    std::vector<RDPoint> rows{{"fusion", 0.01, 0.5, 1.25, 30.5, 0.9, 0.002, 7},
                              {"variant1", 0.05, 0.0, 2.5, 28.25, 0.8, 0.004, 7}};
    std::string text = rd_csv(rows);
    std::vector<RDPoint> back = parse_rd_csv(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].label == "fusion");
    CHECK(back[0].tau == doctest::Approx(0.5));
    CHECK(back[1].bpp == doctest::Approx(2.5));
    CHECK(back[1].seed == 7);

    CHECK_THROWS_WITH_AS(parse_rd_csv("nope\n"), doctest::Contains("line 1"), ConfigError);
    std::string bad_fields = text + "only,three,fields\n";
    CHECK_THROWS_WITH_AS(parse_rd_csv(bad_fields), doctest::Contains("line 4"), ConfigError);
    std::string bad_number = text + "fusion,0.01,zero,1,2,3,4,5\n";
    CHECK_THROWS_WITH_AS(parse_rd_csv(bad_number), doctest::Contains("line 4"), ConfigError);
}

TEST_CASE("report svg is deterministic and handles degenerate inputs") {
    std::vector<RDPoint> rows;
    for (double beta : {0.01, 0.02, 0.04, 0.08})
        for (double tau : {0.0, 0.5, 1.0}) {
            RDPoint p;
            p.label = "fusion";
            p.beta = beta;
            p.tau = tau;
            p.bpp = 10.0 * beta * (1.0 + 0.01 * tau * 0.0);
            p.psnr_db = 20.0 + 100.0 * beta + 2.0 * tau;
            p.ssim = 0.5 + beta + 0.1 * tau;
            p.pdist = 0.01 - 0.05 * beta - 0.002 * tau;
            rows.push_back(p);
        }
    std::string svg = report_svg(rows);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg == report_svg(rows));
    CHECK(svg.find("BD-rate") != std::string::npos);
    CHECK(svg.find("psnr_db:") != std::string::npos);
    CHECK(svg.find("omitted") == std::string::npos);

    CHECK_THROWS_AS(report_svg({}), ConfigError);

    // Single-tau input: plots only, BD table replaced by a notice.
    std::vector<RDPoint> single;
    for (const auto& p : rows)
        if (p.tau == 0.0) single.push_back(p);
    std::string svg1 = report_svg(single);
    CHECK(svg1.find("omitted") != std::string::npos);

    // Too few rate points for a cubic fit: per-field notice, not a throw.
    std::vector<RDPoint> short_curves(rows.begin(), rows.begin() + 6);
    CHECK(report_svg(short_curves).find("omitted") != std::string::npos);
}
