#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dforce/latent.hpp"
#include "dforce/toyvideo.hpp"
#include "dforce/train.hpp"

// Experiment orchestration: a strict JSON config schema, a deterministic
// train -> sample -> metrics pipeline over the synthetic sequence families,
// and report/log emission. Identical config + seed reproduces every artifact
// byte for byte except the report's wall-clock field.
namespace dforce {

inline constexpr const char* kDforceVersion = "0.1.0";

// Which synthetic family an experiment runs on. The names are the config's
// `kind` strings.
enum class ExperimentKind { GaussianToy, Blob, Bounce };

ExperimentKind experiment_kind_from_string(const std::string& name);
std::string experiment_kind_to_string(ExperimentKind kind);
ToyKind toy_kind_for(ExperimentKind kind);

struct DataBlock {
    int dim = 2;
    int frames = 8;
    int count = 256;           // training sequences
    double noise_scale = 0.0;  // process noise; marginal sigma for gaussian-toy

    bool operator==(const DataBlock&) const = default;
};

struct ModelBlock {
    int hidden = 64;
    int num_conds = 1;

    bool operator==(const ModelBlock&) const = default;
};

struct SampleBlock {
    int count = 256;       // sequences drawn after training
    int max_timestep = 16;
    int stagger = 0;

    bool operator==(const SampleBlock&) const = default;
};

struct RolloutBlock {
    bool enabled = false;
    int f_prev = 2;
    int f_new = 2;
    int total_frames = 16;
    double history_noise_t = 0.02;
    int stagger = 0;
    int count = 4;  // independent rollouts measured

    bool operator==(const RolloutBlock&) const = default;
};

// The subset of TrainConfig the config file controls (seed and threads come
// from the global seed and DFORCE_THREADS respectively).
struct TrainBlockFields {
    int steps = 500;
    int batch_size = 16;
    double lr = 1e-3;
    double logit_m = 0.0;
    double logit_scale = 1.0;
    double weight_decay = 0.0;
    double rms_decay = 0.99;
    double rms_eps = 1e-8;

    bool operator==(const TrainBlockFields&) const = default;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::GaussianToy;
    std::uint64_t seed = 0;
    std::string out_dir = "run";
    DataBlock data;
    ModelBlock model;
    TrainBlockFields train;
    SampleBlock sample;
    RolloutBlock rollout;

    bool operator==(const ExperimentConfig&) const = default;
};

// Parses the strict JSON schema. Unknown keys fail with the full dotted path
// of the offending key; missing required keys ("kind") and type mismatches
// fail naming the field. parse_ reads a JSON string, load_ a file.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Field-level validation (positivity, ranges); throws std::invalid_argument
// naming the field. Runs before any compute.
void validate_experiment_config(const ExperimentConfig& config);

// Canonical resolved rendering: every field present, keys sorted, 2-space
// indent. Parsing it back yields the same config (lossless round-trip).
std::string resolved_config_json(const ExperimentConfig& config);

// FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct MetricValue {
    double value = 0.0;
    std::string op;  // the operation that produced the number
};

struct RunReport {
    std::string code_version;
    std::string config_hash;
    std::uint64_t seed = 0;
    double wall_clock_seconds = 0.0;
    std::vector<std::string> series;  // CSV logs written under out_dir
    std::map<std::string, MetricValue> final_metrics;
};

std::string report_to_json(const RunReport& report, const ExperimentConfig& config);
RunReport report_from_json(const std::string& json_text);

// Runs the configured pipeline: build dataset, train the denoiser, draw
// samples along an adaptive-difference plan, score drift (plus covariance
// error for gaussian-toy), optionally roll out past the window, and write
// model.ckpt, train_log.csv, and report.json under out_dir (temp-then-rename;
// no partial outputs). Every artifact except wall-clock is a pure function of
// (config, seed, code version).
RunReport run_experiment(const ExperimentConfig& config);

// Frame emission. CSV writes one file `<stem>.csv` with a header row and one
// row per frame, 17-significant-digit values. PGM writes one 8-bit grayscale
// `<stem>_NNNN.pgm` per frame, min-max normalized over the whole sequence;
// it requires dim to be a perfect square. Returns the paths written.
enum class FrameFormat { Csv, Pgm };
FrameFormat frame_format_from_string(const std::string& name);
std::vector<std::filesystem::path> emit_frames(const LatentSequence& seq, FrameFormat format,
                                               const std::filesystem::path& dir,
                                               const std::string& stem);

// Reads back an emit_frames CSV; the floats round-trip exactly.
LatentSequence read_frames_csv(const std::filesystem::path& path);

}  // namespace dforce
