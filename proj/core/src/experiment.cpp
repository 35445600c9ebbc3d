#include "dforce/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "dforce/checkpoint.hpp"
#include "dforce/io.hpp"
#include "dforce/sampler.hpp"
#include "dforce/schedule.hpp"

namespace dforce {
namespace {

using nlohmann::json;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Walks one JSON object under a strict schema: every key must be consumed,
// and errors carry the full dotted path of the field.
class StrictObj {
  public:
    StrictObj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw std::invalid_argument("config: " + label("") + " must be an object");
        }
    }

    const json* child(const char* key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    template <typename T>
    T require(const char* key) {
        const json* c = child(key);
        if (!c) throw std::invalid_argument("config: missing required field \"" + label(key) + "\"");
        return convert<T>(*c, key);
    }

    template <typename T>
    T get(const char* key, T fallback) {
        const json* c = child(key);
        if (!c) return fallback;
        return convert<T>(*c, key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw std::invalid_argument("config: unknown key \"" + label(key) + "\"");
            }
        }
    }

  private:
    std::string label(const std::string& key) const {
        if (path_.empty()) return key.empty() ? std::string("config root") : key;
        return key.empty() ? path_ : path_ + "." + key;
    }

    template <typename T>
    T convert(const json& v, const char* key) const {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) type_error(key, "a string");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) type_error(key, "a boolean");
        } else if constexpr (std::is_same_v<T, int>) {
            if (!v.is_number_integer()) type_error(key, "an integer");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!(v.is_number_unsigned() ||
                  (v.is_number_integer() && v.template get<std::int64_t>() >= 0))) {
                type_error(key, "a non-negative integer");
            }
        } else {
            static_assert(std::is_same_v<T, double>);
            if (!v.is_number()) type_error(key, "a number");
        }
        return v.template get<T>();
    }

    [[noreturn]] void type_error(const char* key, const char* want) const {
        throw std::invalid_argument("config: field \"" + label(key) + "\" must be " + want);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require_positive(int v, const char* field) {
    if (v < 1) {
        throw std::invalid_argument(std::string("config: ") + field + " must be >= 1");
    }
}

void require_positive_real(double v, const char* field) {
    if (!(std::isfinite(v) && v > 0.0)) {
        throw std::invalid_argument(std::string("config: ") + field + " must be a positive number");
    }
}

json resolved_json(const ExperimentConfig& c) {
    json j;
    j["kind"] = experiment_kind_to_string(c.kind);
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["data"] = {{"dim", c.data.dim},
                 {"frames", c.data.frames},
                 {"count", c.data.count},
                 {"noise_scale", c.data.noise_scale}};
    j["model"] = {{"hidden", c.model.hidden}, {"num_conds", c.model.num_conds}};
    j["train"] = {{"steps", c.train.steps},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"logit_m", c.train.logit_m},
                  {"logit_scale", c.train.logit_scale},
                  {"weight_decay", c.train.weight_decay},
                  {"rms_decay", c.train.rms_decay},
                  {"rms_eps", c.train.rms_eps}};
    j["sample"] = {{"count", c.sample.count},
                   {"max_timestep", c.sample.max_timestep},
                   {"stagger", c.sample.stagger}};
    j["rollout"] = {{"enabled", c.rollout.enabled},
                    {"f_prev", c.rollout.f_prev},
                    {"f_new", c.rollout.f_new},
                    {"total_frames", c.rollout.total_frames},
                    {"history_noise_t", c.rollout.history_noise_t},
                    {"stagger", c.rollout.stagger},
                    {"count", c.rollout.count}};
    return j;
}

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& name) {
    if (name == "gaussian-toy") return ExperimentKind::GaussianToy;
    if (name == "blob") return ExperimentKind::Blob;
    if (name == "bounce") return ExperimentKind::Bounce;
    throw std::invalid_argument("config: kind \"" + name +
                                "\" is not one of gaussian-toy, blob, bounce");
}

std::string experiment_kind_to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::GaussianToy: return "gaussian-toy";
        case ExperimentKind::Blob: return "blob";
        case ExperimentKind::Bounce: return "bounce";
    }
    throw std::invalid_argument("config: unknown experiment kind value");
}

ToyKind toy_kind_for(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::GaussianToy: return ToyKind::LinearGaussian;
        case ExperimentKind::Blob: return ToyKind::ConstVelocityBlob;
        case ExperimentKind::Bounce: return ToyKind::BouncingPoint;
    }
    throw std::invalid_argument("config: unknown experiment kind value");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    StrictObj root(j, "");
    ExperimentConfig c;
    c.kind = experiment_kind_from_string(root.require<std::string>("kind"));
    c.seed = root.get<std::uint64_t>("seed", 0);
    c.out_dir = root.get<std::string>("out_dir", c.out_dir);
    if (const json* d = root.child("data")) {
        StrictObj o(*d, "data");
        c.data.dim = o.get("dim", c.data.dim);
        c.data.frames = o.get("frames", c.data.frames);
        c.data.count = o.get("count", c.data.count);
        c.data.noise_scale = o.get("noise_scale", c.data.noise_scale);
        o.finish();
    }
    if (const json* d = root.child("model")) {
        StrictObj o(*d, "model");
        c.model.hidden = o.get("hidden", c.model.hidden);
        c.model.num_conds = o.get("num_conds", c.model.num_conds);
        o.finish();
    }
    if (const json* d = root.child("train")) {
        StrictObj o(*d, "train");
        c.train.steps = o.get("steps", c.train.steps);
        c.train.batch_size = o.get("batch_size", c.train.batch_size);
        c.train.lr = o.get("lr", c.train.lr);
        c.train.logit_m = o.get("logit_m", c.train.logit_m);
        c.train.logit_scale = o.get("logit_scale", c.train.logit_scale);
        c.train.weight_decay = o.get("weight_decay", c.train.weight_decay);
        c.train.rms_decay = o.get("rms_decay", c.train.rms_decay);
        c.train.rms_eps = o.get("rms_eps", c.train.rms_eps);
        o.finish();
    }
    if (const json* d = root.child("sample")) {
        StrictObj o(*d, "sample");
        c.sample.count = o.get("count", c.sample.count);
        c.sample.max_timestep = o.get("max_timestep", c.sample.max_timestep);
        c.sample.stagger = o.get("stagger", c.sample.stagger);
        o.finish();
    }
    if (const json* d = root.child("rollout")) {
        StrictObj o(*d, "rollout");
        c.rollout.enabled = o.get("enabled", c.rollout.enabled);
        c.rollout.f_prev = o.get("f_prev", c.rollout.f_prev);
        c.rollout.f_new = o.get("f_new", c.rollout.f_new);
        c.rollout.total_frames = o.get("total_frames", c.rollout.total_frames);
        c.rollout.history_noise_t = o.get("history_noise_t", c.rollout.history_noise_t);
        c.rollout.stagger = o.get("stagger", c.rollout.stagger);
        c.rollout.count = o.get("count", c.rollout.count);
        o.finish();
    }
    root.finish();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(read_file(path));
}

void validate_experiment_config(const ExperimentConfig& c) {
    if (c.out_dir.empty()) throw std::invalid_argument("config: out_dir must be non-empty");

    require_positive(c.data.dim, "data.dim");
    require_positive(c.data.frames, "data.frames");
    require_positive(c.data.count, "data.count");
    if (!(std::isfinite(c.data.noise_scale) && c.data.noise_scale >= 0.0)) {
        throw std::invalid_argument("config: data.noise_scale must be a finite non-negative number");
    }
    if (c.kind == ExperimentKind::GaussianToy && !(c.data.noise_scale > 0.0)) {
        throw std::invalid_argument(
            "config: data.noise_scale must be > 0 for kind gaussian-toy (it is the marginal sigma)");
    }
    ToyVideoSpec spec;
    spec.kind = toy_kind_for(c.kind);
    spec.dim = c.data.dim;
    spec.frames = c.data.frames;
    spec.noise_scale = c.data.noise_scale;
    spec.seed = c.seed;
    validate_toy_spec(spec);

    require_positive(c.model.hidden, "model.hidden");
    if (c.model.hidden % 2 != 0) {
        throw std::invalid_argument("config: model.hidden must be even (sin/cos embedding pairs)");
    }
    require_positive(c.model.num_conds, "model.num_conds");

    require_positive(c.train.steps, "train.steps");
    require_positive(c.train.batch_size, "train.batch_size");
    require_positive_real(c.train.lr, "train.lr");
    if (!std::isfinite(c.train.logit_m)) {
        throw std::invalid_argument("config: train.logit_m must be finite");
    }
    require_positive_real(c.train.logit_scale, "train.logit_scale");
    if (!(std::isfinite(c.train.weight_decay) && c.train.weight_decay >= 0.0)) {
        throw std::invalid_argument("config: train.weight_decay must be >= 0");
    }
    if (!(c.train.rms_decay > 0.0 && c.train.rms_decay < 1.0)) {
        throw std::invalid_argument("config: train.rms_decay must lie in (0, 1)");
    }
    require_positive_real(c.train.rms_eps, "train.rms_eps");

    require_positive(c.sample.count, "sample.count");
    require_positive(c.sample.max_timestep, "sample.max_timestep");
    if (c.sample.stagger < 0) {
        throw std::invalid_argument("config: sample.stagger must be >= 0");
    }

    if (c.rollout.enabled) {
        require_positive(c.rollout.count, "rollout.count");
        RolloutConfig rc;
        rc.f_prev = c.rollout.f_prev;
        rc.f_new = c.rollout.f_new;
        rc.total_frames = c.rollout.total_frames;
        rc.history_noise_t = c.rollout.history_noise_t;
        rc.stagger = c.rollout.stagger;
        rc.max_timestep = c.sample.max_timestep;
        try {
            validate_rollout_config(rc);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string("config: rollout: ") + e.what());
        }
    }
}

std::string resolved_config_json(const ExperimentConfig& config) {
    return resolved_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
    return hex64(fnv1a_64(resolved_config_json(config)));
}

std::string report_to_json(const RunReport& report, const ExperimentConfig& config) {
    json j;
    j["code_version"] = report.code_version;
    j["config"] = resolved_json(config);
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["wall_clock_seconds"] = report.wall_clock_seconds;
    j["series"] = report.series;
    json metrics = json::object();
    for (const auto& [name, metric] : report.final_metrics) {
        metrics[name] = {{"op", metric.op}, {"value", metric.value}};
    }
    j["final_metrics"] = metrics;
    return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("report: not valid JSON: ") + e.what());
    }
    StrictObj root(j, "");
    RunReport r;
    r.code_version = root.require<std::string>("code_version");
    r.config_hash = root.require<std::string>("config_hash");
    r.seed = root.require<std::uint64_t>("seed");
    r.wall_clock_seconds = root.require<double>("wall_clock_seconds");
    const json* series = root.child("series");
    if (!series || !series->is_array()) {
        throw std::invalid_argument("report: field \"series\" must be an array of strings");
    }
    for (const json& s : *series) {
        if (!s.is_string()) {
            throw std::invalid_argument("report: field \"series\" must be an array of strings");
        }
        r.series.push_back(s.get<std::string>());
    }
    const json* metrics = root.child("final_metrics");
    if (!metrics || !metrics->is_object()) {
        throw std::invalid_argument("report: field \"final_metrics\" must be an object");
    }
    for (const auto& [name, entry] : metrics->items()) {
        StrictObj m(entry, "final_metrics." + name);
        MetricValue v;
        v.op = m.require<std::string>("op");
        if (v.op.empty()) {
            throw std::invalid_argument("report: metric \"" + name +
                                        "\" must name its producing operation");
        }
        v.value = m.require<double>("value");
        m.finish();
        r.final_metrics[name] = v;
    }
    // the embedded config copy is informational; accept and ignore it
    root.child("config");
    root.finish();
    return r;
}

RunReport run_experiment(const ExperimentConfig& config) {
    validate_experiment_config(config);
    const auto t0 = std::chrono::steady_clock::now();

    const std::filesystem::path out_dir(config.out_dir);
    std::filesystem::create_directories(out_dir);

    ToyVideoSpec spec;
    spec.kind = toy_kind_for(config.kind);
    spec.dim = config.data.dim;
    spec.frames = config.data.frames;
    spec.noise_scale = config.data.noise_scale;
    spec.seed = config.seed;
    const std::vector<LatentSequence> dataset = make_toy_dataset(spec, config.data.count);

    int window = config.data.frames;
    if (config.rollout.enabled) {
        window = std::max(window, config.rollout.f_prev + config.rollout.f_new);
    }
    DenoiserConfig dc;
    dc.dim = config.data.dim;
    dc.hidden = config.model.hidden;
    dc.max_frames = window;
    dc.num_conds = config.model.num_conds;
    Rng init_rng(derive_seed(config.seed, 1));
    DenoiserParams params = init_denoiser(dc, init_rng);

    TrainConfig tc;
    tc.lr = config.train.lr;
    tc.batch_size = config.train.batch_size;
    tc.steps = config.train.steps;
    tc.seed = config.seed;
    tc.logit_m = config.train.logit_m;
    tc.logit_scale = config.train.logit_scale;
    tc.weight_decay = config.train.weight_decay;
    tc.rms_decay = config.train.rms_decay;
    tc.rms_eps = config.train.rms_eps;
    const TrainResult trained = train_flow(params, dataset, tc);

    std::string csv = "step,fm_loss\n";
    for (const TrainLogEntry& entry : trained.log) {
        csv += std::to_string(entry.step);
        csv += ',';
        csv += fmt17(entry.loss);
        csv += '\n';
    }
    write_file_atomic(out_dir / "train_log.csv", csv);
    save_denoiser_checkpoint(out_dir / "model.ckpt", params);

    const SchedulePlan plan =
        ad_schedule(config.data.frames, config.sample.max_timestep, config.sample.stagger);
    Rng sample_rng(derive_seed(config.seed, 2));
    const int dim = config.data.dim;
    // fit the dynamics oracle on the first half of each sampled window so the
    // second half scores how well the sample adheres to its own motion
    ToyVideoSpec metric_spec = spec;
    metric_spec.frames = std::max(2, spec.frames / 2);
    double drift_sum = 0.0;
    std::vector<double> second(static_cast<std::size_t>(dim) * dim, 0.0);
    std::size_t frame_draws = 0;
    for (int i = 0; i < config.sample.count; ++i) {
        const LatentSequence x_init =
            LatentSequence::gaussian(config.data.frames, dim, sample_rng);
        const LatentSequence sampled = euler_sample(params, plan, x_init);
        drift_sum += drift_metric(sampled, metric_spec);
        if (config.kind == ExperimentKind::GaussianToy) {
            for (int f = 0; f < sampled.frames; ++f) {
                const double* x = sampled.frame(f);
                for (int a = 0; a < dim; ++a) {
                    for (int b = 0; b < dim; ++b) {
                        second[static_cast<std::size_t>(a) * dim + b] += x[a] * x[b];
                    }
                }
                ++frame_draws;
            }
        }
    }

    RunReport report;
    report.code_version = kDforceVersion;
    report.config_hash = config_hash(config);
    report.seed = config.seed;
    report.series = {"train_log.csv"};
    report.final_metrics["final_fm_loss"] = {trained.log.back().loss, "fm_loss"};
    report.final_metrics["mean_drift"] = {drift_sum / config.sample.count, "drift_metric"};
    if (config.kind == ExperimentKind::GaussianToy) {
        const double sigma_sq = config.data.noise_scale * config.data.noise_scale;
        double num = 0.0, den = 0.0;
        for (int a = 0; a < dim; ++a) {
            for (int b = 0; b < dim; ++b) {
                const double got =
                    second[static_cast<std::size_t>(a) * dim + b] / static_cast<double>(frame_draws);
                const double want = a == b ? sigma_sq : 0.0;
                num += (got - want) * (got - want);
                den += want * want;
            }
        }
        report.final_metrics["cov_rel_err"] = {std::sqrt(num / den), "euler_sample"};
    }

    if (config.rollout.enabled) {
        RolloutConfig rc;
        rc.f_prev = config.rollout.f_prev;
        rc.f_new = config.rollout.f_new;
        rc.total_frames = config.rollout.total_frames;
        rc.history_noise_t = config.rollout.history_noise_t;
        rc.stagger = config.rollout.stagger;
        rc.max_timestep = config.sample.max_timestep;
        Rng roll_rng(derive_seed(config.seed, 3));
        double roll_drift = 0.0;
        for (int i = 0; i < config.rollout.count; ++i) {
            roll_drift += drift_metric(rollout(params, rc, 0, roll_rng), spec);
        }
        report.final_metrics["rollout_mean_drift"] = {roll_drift / config.rollout.count, "rollout"};
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file_atomic(out_dir / "report.json", report_to_json(report, config));
    return report;
}

FrameFormat frame_format_from_string(const std::string& name) {
    if (name == "csv") return FrameFormat::Csv;
    if (name == "pgm") return FrameFormat::Pgm;
    throw std::invalid_argument("format \"" + name + "\" is not one of csv, pgm");
}

std::vector<std::filesystem::path> emit_frames(const LatentSequence& seq, FrameFormat format,
                                               const std::filesystem::path& dir,
                                               const std::string& stem) {
    validate_latent(seq);
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;

    if (format == FrameFormat::Csv) {
        std::string csv = "frame";
        for (int d = 0; d < seq.dim; ++d) csv += ",v" + std::to_string(d);
        csv += '\n';
        for (int f = 0; f < seq.frames; ++f) {
            csv += std::to_string(f);
            const double* x = seq.frame(f);
            for (int d = 0; d < seq.dim; ++d) {
                csv += ',';
                csv += fmt17(x[d]);
            }
            csv += '\n';
        }
        const std::filesystem::path path = dir / (stem + ".csv");
        write_file_atomic(path, csv);
        written.push_back(path);
        return written;
    }

    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(seq.dim))));
    if (side * side != seq.dim) {
        throw std::invalid_argument("emit_frames: dim " + std::to_string(seq.dim) +
                                    " is not a perfect square, cannot write images");
    }
    double lo = seq.data[0], hi = seq.data[0];
    for (const double v : seq.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (int f = 0; f < seq.frames; ++f) {
        std::string bytes = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
        const double* x = seq.frame(f);
        for (int p = 0; p < seq.dim; ++p) {
            int v = span > 0.0 ? static_cast<int>(std::lround(255.0 * (x[p] - lo) / span)) : 128;
            v = std::clamp(v, 0, 255);
            bytes.push_back(static_cast<char>(static_cast<unsigned char>(v)));
        }
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "_%04d.pgm", f);
        const std::filesystem::path path = dir / (stem + suffix);
        write_file_atomic(path, bytes);
        written.push_back(path);
    }
    return written;
}

LatentSequence read_frames_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (const char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    if (lines.empty()) throw std::runtime_error("frames csv: empty file " + path.string());

    const auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::string f;
        for (const char c : line) {
            if (c == ',') {
                fields.push_back(f);
                f.clear();
            } else {
                f += c;
            }
        }
        fields.push_back(f);
        return fields;
    };

    const std::vector<std::string> header = split(lines[0]);
    if (header.size() < 2 || header[0] != "frame") {
        throw std::runtime_error("frames csv: bad header in " + path.string());
    }
    const int dim = static_cast<int>(header.size()) - 1;

    LatentSequence seq;
    seq.dim = dim;
    seq.frames = static_cast<int>(lines.size()) - 1;
    if (seq.frames < 1) throw std::runtime_error("frames csv: no data rows in " + path.string());
    seq.data.reserve(static_cast<std::size_t>(seq.frames) * dim);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> fields = split(lines[i]);
        if (static_cast<int>(fields.size()) != dim + 1) {
            throw std::runtime_error("frames csv: row " + std::to_string(i) + " has " +
                                     std::to_string(fields.size() - 1) + " values, expected " +
                                     std::to_string(dim));
        }
        for (int d = 0; d < dim; ++d) {
            std::size_t used = 0;
            const double v = std::stod(fields[static_cast<std::size_t>(d) + 1], &used);
            if (used != fields[static_cast<std::size_t>(d) + 1].size()) {
                throw std::runtime_error("frames csv: malformed number in row " +
                                         std::to_string(i));
            }
            seq.data.push_back(v);
        }
    }
    validate_latent(seq);
    return seq;
}

}  // namespace dforce
