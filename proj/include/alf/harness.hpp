#pragma once

#include <string>
#include <vector>

#include "alf/codec.hpp"
#include "alf/denoiser.hpp"
#include "alf/fusion.hpp"
#include "alf/metrics.hpp"
#include "alf/schedule.hpp"

namespace alf {

// Experiment description shared by the config file and the CLI. The config
// file is a flat key = value text (TOML-compatible subset: comments with #,
// quoted or bare strings, numbers, [a, b] lists); every key can also be set
// on the command line, and command-line values win.
struct ExperimentConfig {
    // dataset
    std::string data_dir = "data";
    std::uint64_t data_seed = 1;
    int data_count = 60;
    int data_size = 32;

    // base codec
    int latent_channels = 16;
    int num_downsamples = 2;
    std::vector<double> betas = {0.01};

    // noise schedule
    int t_train = 100;
    double sched_beta_min = 1e-3;
    double sched_beta_max = 0.03;

    // fusion module
    int num_units = 2;
    int channels = 32;
    int time_embed_dim = 32;
    double lambda = 1.0;

    // training budgets
    int steps_base = 2000;
    int steps_aux = 1000;
    int steps_fusion = 3000;
    int steps_variant1 = 0;  // 0 disables the feed-forward ablation
    double lr_base = 5e-5;
    double lr_aux = 5e-5;
    double lr_fusion = 5e-5;

    // evaluation
    std::vector<double> tau_grid = {0.0, 0.3, 0.5, 0.8, 1.0};
    std::vector<int> steps_grid = {1, 5, 10, 20, 40};
    int sample_steps = 10;

    std::uint64_t seed = 0;
    std::string out_dir = "out";

    void validate() const;          // throws ConfigError
    std::string to_text() const;    // canonical key = value dump
    std::uint64_t hash() const;     // FNV over to_text()

    // Held-out split: last 10% of the corpus by index (at least one image).
    int held_out_start(int n_images) const;

    CodecConfig codec_config(double beta) const;
    DenoiserConfig denoiser_config() const;
    NoiseSchedule schedule() const;
};

// Applies one key = value assignment; throws ConfigError on unknown keys or
// unparsable values. Shared by the file parser and the CLI overrides.
void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value);
const std::vector<std::string>& config_keys();

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

struct StageRecord {
    std::string name;
    std::string checkpoint;   // file path
    std::string hash;         // hex tensor hash
    bool trained = false;     // false = cache hit
    double seconds = 0.0;
};

struct OutputRecord {
    std::string path;
    std::string hash;  // hex FNV of file bytes
};

struct RunManifest {
    std::string config_hash;
    int held_out_start = 0;
    std::vector<StageRecord> stages;
    std::vector<OutputRecord> outputs;
    double total_seconds = 0.0;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

enum class Stage { base, aux, fusion, variant1, all };
Stage stage_from_string(const std::string& s);

// Trains (or re-uses cached checkpoints for) every stage up to and including
// `through`, in order base -> aux -> fusion -> variant1. Generates the
// synthetic dataset if data_dir has no images. Writes out_dir/manifest.json.
RunManifest run_pipeline(const ExperimentConfig& cfg, Stage through = Stage::all);

// Checkpoint path naming used by the pipeline, sweep and the CLI.
std::string stage_checkpoint_path(const ExperimentConfig& cfg, Stage stage, double beta);

// Evaluates the held-out set: per beta one row per tau in tau_grid
// (label "fusion"), one row per entry of steps_grid at tau = 0
// (label "steps_<n>"), and a feed-forward translator row (label "variant1")
// when its checkpoint exists. Each bitstream is encoded once, so the payload
// is identical across tau by construction. Rows are means over the held-out
// images. Honors ALF_THREADS for parallel evaluation.
std::vector<RDPoint> sweep(const ExperimentConfig& cfg);

std::string rd_csv(const std::vector<RDPoint>& rows);
std::vector<RDPoint> parse_rd_csv(const std::string& text);  // row-numbered errors
void write_rd_csv(const std::string& path, const std::vector<RDPoint>& rows);
std::vector<RDPoint> read_rd_csv(const std::string& path);

// Deterministic pure-text SVG report: bpp-vs-metric line plots per tau, a
// PSNR-vs-pdist trade-off scatter connected along tau, and a BD-rate table
// comparing the tau=0 curve against tau=1 in both quality fields (omitted
// with a notice when the data cannot support it). Throws on empty input.
std::string report_svg(const std::vector<RDPoint>& rows);

// Worker count: ALF_THREADS if set (>= 1), else 1.
int worker_count();

}  // namespace alf
