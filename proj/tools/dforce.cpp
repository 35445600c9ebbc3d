// dforce: command-line front end over the library — schedule inspection,
// experiment runs, sampling/rollout from checkpoints, preference training,
// crop/bucket curation utilities, and report rendering. Every subcommand
// exits nonzero on error and writes artifacts atomically.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dforce/bucket.hpp"
#include "dforce/checkpoint.hpp"
#include "dforce/crop.hpp"
#include "dforce/experiment.hpp"
#include "dforce/io.hpp"
#include "dforce/preference.hpp"
#include "dforce/sampler.hpp"
#include "dforce/schedule.hpp"
#include "dforce/toyvideo.hpp"
#include "dforce/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dforce;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const std::string& tok : split_csv(text)) {
        if (tok.empty()) continue;
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) {
            throw std::invalid_argument(std::string(what) + ": malformed number \"" + tok + "\"");
        }
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
    return out;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (const char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

LatentSequence sequence_from_json(const json& frames_json, const std::string& what) {
    if (!frames_json.is_array() || frames_json.empty()) {
        throw std::invalid_argument(what + " must be a non-empty array of frames");
    }
    LatentSequence seq;
    seq.frames = static_cast<int>(frames_json.size());
    for (const json& frame : frames_json) {
        if (!frame.is_array() || frame.empty()) {
            throw std::invalid_argument(what + " frames must be non-empty arrays of numbers");
        }
        if (seq.dim == 0) seq.dim = static_cast<int>(frame.size());
        if (static_cast<int>(frame.size()) != seq.dim) {
            throw std::invalid_argument(what + " frames must all share one dimension");
        }
        for (const json& v : frame) {
            if (!v.is_number()) {
                throw std::invalid_argument(what + " frames must contain only numbers");
            }
            seq.data.push_back(v.get<double>());
        }
    }
    validate_latent(seq);
    return seq;
}

std::vector<PreferencePair> read_pairs_jsonl(const fs::path& path) {
    std::vector<PreferencePair> pairs;
    const std::vector<std::string> lines = split_lines(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::parse_error& e) {
            throw std::invalid_argument("pairs line " + std::to_string(i + 1) +
                                        ": not valid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("label") || !j.contains("a") || !j.contains("b")) {
            throw std::invalid_argument("pairs line " + std::to_string(i + 1) +
                                        ": needs fields label, a, b");
        }
        PreferencePair pair;
        const std::string label = j["label"].get<std::string>();
        if (label == "a_better") {
            pair.label = PairLabel::a_better;
        } else if (label == "b_better") {
            pair.label = PairLabel::b_better;
        } else if (label == "tie") {
            pair.label = PairLabel::tie;
        } else {
            throw std::invalid_argument("pairs line " + std::to_string(i + 1) + ": label \"" +
                                        label + "\" is not a_better, b_better, or tie");
        }
        pair.sample_a = sequence_from_json(j["a"], "pairs line " + std::to_string(i + 1) + ": a");
        pair.sample_b = sequence_from_json(j["b"], "pairs line " + std::to_string(i + 1) + ": b");
        validate_pair(pair);
        pairs.push_back(std::move(pair));
    }
    if (pairs.empty()) throw std::invalid_argument("pairs file holds no pairs: " + path.string());
    return pairs;
}

json rect_json(const Rect& r) {
    return {{"top", r.top}, {"left", r.left}, {"bottom", r.bottom}, {"right", r.right}};
}

void emit_sequence_set(const std::vector<LatentSequence>& seqs, const std::string& format,
                       const fs::path& dir, const std::string& stem, json& out) {
    const FrameFormat fmt = frame_format_from_string(format);
    json files = json::array();
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const std::string item_stem = stem + "_" + std::to_string(i);
        for (const fs::path& p : emit_frames(seqs[i], fmt, dir, item_stem)) {
            files.push_back(p.string());
        }
    }
    out["files"] = files;
}

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    bool dry_run = false;

    fs::path out_dir_or(const char* fallback) const { return out.empty() ? fs::path(fallback) : fs::path(out); }
};

int run_schedule(const GlobalArgs& g, int frames, int max_timestep, bool count_mode, int sample_n,
                 bool ad_mode, int stagger) {
    if (g.dry_run) {
        json echo{{"subcommand", "schedule"}, {"frames", frames}, {"max_timestep", max_timestep},
                  {"stagger", stagger}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    if (sample_n > 0) {
        Rng rng(g.seed);
        for (int i = 0; i < sample_n; ++i) {
            const ScheduleVector sv = fopp_sample(frames, max_timestep, rng);
            json line{{"timesteps", sv.timesteps}};
            std::cout << line.dump() << "\n";
        }
        return 0;
    }
    if (ad_mode) {
        const SchedulePlan plan = ad_schedule(frames, max_timestep, stagger);
        json steps = json::array();
        for (const ScheduleVector& sv : plan.steps) steps.push_back(sv.timesteps);
        json out{{"frames", frames},
                 {"max_timestep", max_timestep},
                 {"stagger", stagger},
                 {"length", plan.length()},
                 {"steps", steps}};
        std::cout << out.dump() << "\n";
        return 0;
    }
    (void)count_mode;  // counting is the default mode
    const mpz_class constrained = count_nondecreasing(frames, max_timestep);
    const mpz_class unconstrained = count_unconstrained(frames, max_timestep);
    const std::string cs = constrained.get_str();
    const std::string us = unconstrained.get_str();
    json out{{"frames", frames},
             {"max_timestep", max_timestep},
             {"nondecreasing", cs},
             {"nondecreasing_digits", cs.size()},
             {"unconstrained", us},
             {"unconstrained_digits", us.size()},
             {"reduction_orders_of_magnitude",
              static_cast<long long>(us.size()) - static_cast<long long>(cs.size())}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_train(const GlobalArgs& g) {
    if (g.config_path.empty()) {
        throw std::invalid_argument("train requires --config <experiment.json>");
    }
    ExperimentConfig cfg = load_experiment_config(g.config_path);
    if (g.seed_given) cfg.seed = g.seed;
    if (!g.out.empty()) cfg.out_dir = g.out;
    if (g.dry_run) {
        validate_experiment_config(cfg);
        std::cout << resolved_config_json(cfg);
        return 0;
    }
    const RunReport report = run_experiment(cfg);
    std::cout << report_to_json(report, cfg);
    return 0;
}

int run_sample(const GlobalArgs& g, const std::string& ckpt, int count, int frames,
               int max_timestep, int stagger, int cond, const std::string& format,
               const std::string& stem) {
    const fs::path dir = g.out_dir_or(".");
    if (g.dry_run) {
        json echo{{"subcommand", "sample"}, {"ckpt", ckpt},       {"count", count},
                  {"frames", frames},       {"max_timestep", max_timestep},
                  {"stagger", stagger},     {"out", dir.string()}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    const DenoiserParams params = load_denoiser_checkpoint(ckpt);
    if (frames <= 0) frames = params.config.max_frames;
    const SchedulePlan plan = ad_schedule(frames, max_timestep, stagger);
    Rng rng(g.seed);
    std::vector<LatentSequence> seqs;
    seqs.reserve(count);
    for (int i = 0; i < count; ++i) {
        const LatentSequence x_init = LatentSequence::gaussian(frames, params.config.dim, rng);
        seqs.push_back(euler_sample(params, plan, x_init, cond));
    }
    json out{{"count", count}, {"frames", frames}, {"dim", params.config.dim}};
    emit_sequence_set(seqs, format, dir, stem, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_rollout(const GlobalArgs& g, const std::string& ckpt, int f_prev, int f_new,
                int total_frames, double history_noise_t, int stagger, int max_timestep, int cond,
                int count, const std::string& format, const std::string& stem) {
    const fs::path dir = g.out_dir_or(".");
    if (g.dry_run) {
        json echo{{"subcommand", "rollout"},
                  {"ckpt", ckpt},
                  {"f_prev", f_prev},
                  {"f_new", f_new},
                  {"total_frames", total_frames},
                  {"history_noise_t", history_noise_t},
                  {"out", dir.string()}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    const DenoiserParams params = load_denoiser_checkpoint(ckpt);
    RolloutConfig rc;
    rc.f_prev = f_prev;
    rc.f_new = f_new;
    rc.total_frames = total_frames;
    rc.history_noise_t = history_noise_t;
    rc.stagger = stagger;
    rc.max_timestep = max_timestep;
    validate_rollout_config(rc);
    Rng rng(g.seed);
    std::vector<LatentSequence> seqs;
    seqs.reserve(count);
    for (int i = 0; i < count; ++i) seqs.push_back(rollout(params, rc, cond, rng));
    json out{{"count", count}, {"total_frames", total_frames}, {"dim", params.config.dim}};
    emit_sequence_set(seqs, format, dir, stem, out);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_reward_train(const GlobalArgs& g, const std::string& pairs_path, int synth_count,
                     const std::string& kind, int dim, int frames, double noise_scale, int hidden,
                     double theta_tie, int steps, int batch_size, double lr) {
    const fs::path dir = g.out_dir_or(".");
    if (g.dry_run) {
        json echo{{"subcommand", "reward-train"},
                  {"pairs", pairs_path},
                  {"synth_count", synth_count},
                  {"steps", steps},
                  {"out", dir.string()}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    std::vector<PreferencePair> pairs;
    if (!pairs_path.empty()) {
        pairs = read_pairs_jsonl(pairs_path);
    } else if (synth_count > 0) {
        ToyVideoSpec spec;
        spec.kind = toy_kind_for(experiment_kind_from_string(kind));
        spec.dim = dim;
        spec.frames = frames;
        spec.noise_scale = noise_scale;
        spec.seed = derive_seed(g.seed, 11);
        const std::vector<LatentSequence> dataset = make_toy_dataset(spec, synth_count);
        Rng rng(derive_seed(g.seed, 12));
        pairs = build_auto_pairs(dataset, rng);
    } else {
        throw std::invalid_argument("reward-train needs --pairs <file.jsonl> or --synth-count N");
    }

    RewardConfig rc;
    rc.dim = pairs.front().sample_a.dim;
    rc.hidden = hidden;
    Rng init_rng(derive_seed(g.seed, 13));
    RewardParams params = init_reward(rc, init_rng, theta_tie);

    RewardTrainConfig rtc;
    rtc.steps = steps;
    rtc.batch_size = batch_size;
    rtc.lr = lr;
    rtc.seed = g.seed;
    const std::vector<TrainLogEntry> log = reward_train(params, pairs, rtc);

    fs::create_directories(dir);
    std::string csv = "step,btt_loss\n";
    for (const TrainLogEntry& e : log) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", e.step, e.loss);
        csv += buf;
    }
    write_file_atomic(dir / "reward_train_log.csv", csv);
    const fs::path ckpt = dir / "reward.ckpt";
    save_reward_checkpoint(ckpt, params);

    json out{{"pairs", pairs.size()},
             {"steps", steps},
             {"final_loss", log.back().loss},
             {"ranking_accuracy", ranking_accuracy(params, pairs)},
             {"checkpoint", ckpt.string()},
             {"series", (dir / "reward_train_log.csv").string()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_dpo(const GlobalArgs& g, const std::string& ckpt, const std::string& kind, int frames,
            double noise_scale, double beta, int stages, int steps_per_stage, int k,
            int max_timestep, int prompt_count, const std::string& prompt_ids, double lr,
            bool independent) {
    const fs::path dir = g.out_dir_or(".");
    if (g.dry_run) {
        json echo{{"subcommand", "dpo"}, {"ckpt", ckpt},   {"beta", beta},
                  {"stages", stages},    {"k", k},         {"frames", frames},
                  {"out", dir.string()}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    DenoiserParams model = load_denoiser_checkpoint(ckpt);

    DPOConfig dc;
    dc.beta = beta;
    dc.refresh_interval = steps_per_stage;
    dc.stage_count = stages;
    dc.samples_per_prompt = k;
    dc.lr = lr;
    dc.independent_draws = independent;

    ToyVideoSpec metric_spec;
    metric_spec.kind = toy_kind_for(experiment_kind_from_string(kind));
    metric_spec.dim = model.config.dim;
    metric_spec.frames = std::max(2, frames / 2);
    metric_spec.noise_scale = noise_scale;
    const ScoreSeqFn score = [&metric_spec](const LatentSequence& seq) {
        return -drift_metric(seq, metric_spec);
    };

    std::vector<int> prompts;
    if (!prompt_ids.empty()) {
        for (const std::string& tok : split_csv(prompt_ids)) {
            if (tok.empty()) continue;
            prompts.push_back(std::stoi(tok));
        }
    } else {
        prompts.assign(static_cast<std::size_t>(prompt_count), 0);
    }
    if (prompts.empty()) throw std::invalid_argument("dpo: prompt list must be non-empty");

    Rng rng(g.seed);
    const std::vector<DpoStageReport> reports =
        dpo_stage_loop(model, dc, score, prompts, frames, max_timestep, rng);

    fs::create_directories(dir);
    std::string csv = "stage,build_mean_score,initial_loss,final_loss,initial_margin,final_margin\n";
    for (const DpoStageReport& r : reports) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.stage,
                      r.build_mean_score, r.initial_loss, r.final_loss, r.initial_margin,
                      r.final_margin);
        csv += buf;
    }
    write_file_atomic(dir / "dpo_stages.csv", csv);
    const fs::path out_ckpt = dir / "model_dpo.ckpt";
    save_denoiser_checkpoint(out_ckpt, model);

    json stages_json = json::array();
    for (const DpoStageReport& r : reports) {
        stages_json.push_back({{"stage", r.stage},
                               {"build_mean_score", r.build_mean_score},
                               {"initial_loss", r.initial_loss},
                               {"final_loss", r.final_loss},
                               {"initial_margin", r.initial_margin},
                               {"final_margin", r.final_margin}});
    }
    json out{{"stages", stages_json},
             {"checkpoint", out_ckpt.string()},
             {"series", (dir / "dpo_stages.csv").string()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_crop(const GlobalArgs& g, const std::string& mask_path, const std::string& boxes_path,
             int width, int height, double area_threshold, double ar_tolerance) {
    if (g.dry_run) {
        json echo{{"subcommand", "crop"}, {"mask", mask_path}, {"boxes", boxes_path}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    if (mask_path.empty() == boxes_path.empty()) {
        throw std::invalid_argument("crop needs exactly one of --mask <file.pbm> or --boxes <file.json>");
    }
    BinaryMask mask;
    if (!mask_path.empty()) {
        mask = read_pbm_mask(mask_path);
    } else {
        if (width < 1 || height < 1) {
            throw std::invalid_argument("crop --boxes requires --width and --height");
        }
        json j;
        try {
            j = json::parse(read_file(boxes_path));
        } catch (const json::parse_error& e) {
            throw std::invalid_argument(std::string("boxes: not valid JSON: ") + e.what());
        }
        if (!j.is_array()) {
            throw std::invalid_argument("boxes: expected an array of {top,left,bottom,right}");
        }
        std::vector<Rect> boxes;
        for (const json& b : j) {
            if (!b.is_object() || !b.contains("top") || !b.contains("left") ||
                !b.contains("bottom") || !b.contains("right")) {
                throw std::invalid_argument("boxes: each entry needs top, left, bottom, right");
            }
            Rect r;
            r.top = b["top"].get<int>();
            r.left = b["left"].get<int>();
            r.bottom = b["bottom"].get<int>();
            r.right = b["right"].get<int>();
            boxes.push_back(r);
        }
        mask = mask_from_boxes(height, width, boxes);
    }

    const RectResult res = max_interior_rectangle(mask);
    const CropVerdict verdict =
        accept_crop_explain(res.rect, mask.cols, mask.rows, area_threshold, ar_tolerance);
    json reasons = json::array();
    if (res.degenerate) reasons.push_back("no usable interior rectangle exists");
    if (!verdict.area_ok) {
        reasons.push_back("rectangle covers only " + std::to_string(verdict.area_fraction * 100.0) +
                          "% of the frame; needs more than " +
                          std::to_string(area_threshold * 100.0) + "%");
    }
    if (!verdict.ar_ok) {
        reasons.push_back("rectangle aspect ratio is " + std::to_string(verdict.ar_ratio) +
                          "x the frame's; must stay within " +
                          std::to_string(ar_tolerance * 100.0) + "%");
    }
    json out{{"rows", mask.rows},
             {"cols", mask.cols},
             {"rect", rect_json(res.rect)},
             {"area", res.area},
             {"degenerate", res.degenerate},
             {"accepted", verdict.accepted},
             {"area_ok", verdict.area_ok},
             {"ar_ok", verdict.ar_ok},
             {"area_fraction", verdict.area_fraction},
             {"ar_ratio", verdict.ar_ratio},
             {"reasons", reasons}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_bucket(const GlobalArgs& g, const std::string& manifest_path, std::string out_path,
               const std::string& duration_centers, const std::string& ar_centers, int max_batch) {
    if (g.dry_run) {
        json echo{{"subcommand", "bucket"},
                  {"manifest", manifest_path},
                  {"duration_centers", duration_centers},
                  {"ar_centers", ar_centers}};
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    BucketGrid grid;
    grid.duration_centers = parse_double_list(duration_centers, "duration centers");
    grid.ar_centers = parse_double_list(ar_centers, "aspect-ratio centers");
    grid.max_batch = max_batch;
    validate_grid(grid);

    const std::vector<std::string> lines = split_lines(read_file(manifest_path));
    if (lines.empty() || lines[0] != "path,duration,width,height,fps") {
        throw std::invalid_argument(
            "manifest: first line must be the header \"path,duration,width,height,fps\"");
    }
    std::string out_csv = "path,duration,width,height,fps,target_fps,bucket_id\n";
    std::map<int, int> histogram;
    int rows = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::vector<std::string> fields = split_csv(lines[i]);
        if (fields.size() != 5) {
            throw std::invalid_argument("manifest row " + std::to_string(i + 1) + ": expected 5 fields (paths must not contain commas)");
        }
        const double duration = std::stod(fields[1]);
        const int w = std::stoi(fields[2]);
        const int h = std::stoi(fields[3]);
        const double fps = std::stod(fields[4]);
        if (w < 1 || h < 1) {
            throw std::invalid_argument("manifest row " + std::to_string(i + 1) +
                                        ": width and height must be >= 1");
        }
        const int target_fps = fps_normalize(fps);
        const Bucket b = assign_bucket(duration, static_cast<double>(w) / h, grid);
        const int flat = flat_bucket_id(grid, b);
        out_csv += lines[i] + "," + std::to_string(target_fps) + "," + std::to_string(flat) + "\n";
        histogram[flat]++;
        ++rows;
    }
    if (rows == 0) throw std::invalid_argument("manifest holds no data rows");

    if (out_path.empty()) out_path = manifest_path + ".bucketed.csv";
    write_file_atomic(out_path, out_csv);

    json hist_json = json::object();
    for (const auto& [flat, count] : histogram) hist_json[std::to_string(flat)] = count;
    json out{{"rows", rows},
             {"buckets", bucket_count(grid)},
             {"histogram", hist_json},
             {"out", out_path}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_report(const GlobalArgs& g, const std::string& in_path) {
    (void)g;
    const RunReport r = report_from_json(read_file(in_path));
    std::cout << "code version : " << r.code_version << "\n";
    std::cout << "config hash  : " << r.config_hash << "\n";
    std::cout << "seed         : " << r.seed << "\n";
    std::cout << "wall clock   : " << r.wall_clock_seconds << " s\n";
    std::cout << "series       :";
    for (const std::string& s : r.series) std::cout << " " << s;
    std::cout << "\nmetrics:\n";
    for (const auto& [name, metric] : r.final_metrics) {
        std::cout << "  " << name << " = " << metric.value << "  (from " << metric.op << ")\n";
    }
    return 0;
}

int run_score_manual(const GlobalArgs& g, const std::string& defects) {
    (void)g;
    std::map<DefectKind, int> counts;
    for (const std::string& tok : split_csv(defects)) {
        if (tok.empty()) continue;
        counts[defect_kind_from_string(tok)]++;
    }
    if (counts.empty()) throw std::invalid_argument("score-manual: --defects list is empty");
    std::vector<std::pair<DefectKind, int>> pairs(counts.begin(), counts.end());
    json detail = json::object();
    for (const auto& [kind, count] : pairs) {
        detail[to_string(kind)] = {{"count", count}, {"weight", manual_defect_weight(kind)}};
    }
    json out{{"penalty", manual_penalty(pairs)}, {"defects", detail}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dforce: desk-scale diffusion-forcing sequence toolkit"};
    app.require_subcommand(1);

    GlobalArgs g;
    auto* seed_opt = app.add_option("--seed", g.seed, "global random seed (default 0)");
    app.add_option("--config", g.config_path, "experiment configuration JSON file");
    app.add_option("--out", g.out, "output directory override");
    app.add_flag("--dry-run", g.dry_run, "validate inputs and print the resolved configuration without computing");

    // schedule
    auto* sc = app.add_subcommand("schedule", "count or sample per-frame timestep schedules");
    sc->fallthrough();
    int sc_frames = 8, sc_max_t = 16, sc_sample_n = 0, sc_stagger = 0;
    bool sc_count = false, sc_ad = false;
    sc->add_option("--frames", sc_frames, "frames per window");
    sc->add_option("--max-timestep", sc_max_t, "discrete noise levels T");
    sc->add_flag("--count", sc_count, "print schedule-space counts (default mode)");
    sc->add_option("--sample", sc_sample_n, "print N sampled non-decreasing schedules as JSON lines");
    sc->add_flag("--ad", sc_ad, "print the adaptive-difference denoising plan");
    sc->add_option("--stagger", sc_stagger, "adaptive-difference gap s");

    // train
    auto* tr = app.add_subcommand("train", "run a configured experiment (train, sample, report)");
    tr->fallthrough();

    // sample
    auto* sa = app.add_subcommand("sample", "draw sequences from a trained checkpoint");
    sa->fallthrough();
    std::string sa_ckpt, sa_format = "csv", sa_stem = "sample";
    int sa_count = 4, sa_frames = 0, sa_max_t = 16, sa_stagger = 0, sa_cond = 0;
    sa->add_option("--ckpt", sa_ckpt, "denoiser checkpoint")->required();
    sa->add_option("--count", sa_count, "sequences to draw");
    sa->add_option("--frames", sa_frames, "frames per sequence (default: model capacity)");
    sa->add_option("--max-timestep", sa_max_t, "discrete noise levels T");
    sa->add_option("--stagger", sa_stagger, "adaptive-difference gap s");
    sa->add_option("--cond", sa_cond, "conditioning id");
    sa->add_option("--format", sa_format, "csv or pgm");
    sa->add_option("--stem", sa_stem, "output file stem");

    // rollout
    auto* ro = app.add_subcommand("rollout", "long-horizon sliding-window generation from a checkpoint");
    ro->fallthrough();
    std::string ro_ckpt, ro_format = "csv", ro_stem = "rollout";
    int ro_fprev = 2, ro_fnew = 2, ro_total = 16, ro_stagger = 0, ro_max_t = 16, ro_cond = 0,
        ro_count = 1;
    double ro_hist = 0.02;
    ro->add_option("--ckpt", ro_ckpt, "denoiser checkpoint")->required();
    ro->add_option("--f-prev", ro_fprev, "history frames carried per window");
    ro->add_option("--f-new", ro_fnew, "fresh frames per window");
    ro->add_option("--total-frames", ro_total, "frames to generate in total");
    ro->add_option("--history-noise-t", ro_hist, "residual noise re-applied to carried frames");
    ro->add_option("--stagger", ro_stagger, "adaptive-difference gap s");
    ro->add_option("--max-timestep", ro_max_t, "discrete noise levels T");
    ro->add_option("--cond", ro_cond, "conditioning id");
    ro->add_option("--count", ro_count, "independent rollouts");
    ro->add_option("--format", ro_format, "csv or pgm");
    ro->add_option("--stem", ro_stem, "output file stem");

    // reward-train
    auto* rt = app.add_subcommand("reward-train", "fit the pairwise reward scorer on preference pairs");
    rt->fallthrough();
    std::string rt_pairs, rt_kind = "blob";
    int rt_synth = 0, rt_dim = 2, rt_frames = 8, rt_hidden = 32, rt_steps = 300, rt_batch = 64;
    double rt_noise = 0.0, rt_theta = 1.5, rt_lr = 1e-2;
    rt->add_option("--pairs", rt_pairs, "JSON-lines file of {label, a, b} preference pairs");
    rt->add_option("--synth-count", rt_synth, "synthesize pairs from N toy sequences instead");
    rt->add_option("--kind", rt_kind, "toy family for --synth-count (gaussian-toy|blob|bounce)");
    rt->add_option("--dim", rt_dim, "toy latent dimension for --synth-count");
    rt->add_option("--frames", rt_frames, "toy frames for --synth-count");
    rt->add_option("--noise-scale", rt_noise, "toy process noise for --synth-count");
    rt->add_option("--hidden", rt_hidden, "scorer MLP width");
    rt->add_option("--theta-tie", rt_theta, "tie appetite theta (> 1)");
    rt->add_option("--steps", rt_steps, "optimization steps");
    rt->add_option("--batch-size", rt_batch, "pairs per step");
    rt->add_option("--lr", rt_lr, "learning rate");

    // dpo
    auto* dp = app.add_subcommand("dpo", "staged preference optimization of a denoiser checkpoint");
    dp->fallthrough();
    std::string dp_ckpt, dp_kind = "blob", dp_prompt_ids;
    int dp_frames = 8, dp_stages = 3, dp_steps = 20, dp_k = 8, dp_max_t = 16, dp_prompts = 4;
    double dp_noise = 0.0, dp_beta = 1.0, dp_lr = 1e-3;
    bool dp_independent = false;
    dp->add_option("--ckpt", dp_ckpt, "denoiser checkpoint to tune")->required();
    dp->add_option("--kind", dp_kind, "toy family scoring the samples (gaussian-toy|blob|bounce)");
    dp->add_option("--frames", dp_frames, "frames per sampled sequence");
    dp->add_option("--noise-scale", dp_noise, "toy process noise for the scorer");
    dp->add_option("--beta", dp_beta, "preference temperature");
    dp->add_option("--stages", dp_stages, "reference refreshes");
    dp->add_option("--steps-per-stage", dp_steps, "optimization steps per stage");
    dp->add_option("--k", dp_k, "samples per prompt when building triplets");
    dp->add_option("--max-timestep", dp_max_t, "discrete noise levels T");
    dp->add_option("--prompt-count", dp_prompts, "number of prompts (all conditioning id 0)");
    dp->add_option("--prompt-ids", dp_prompt_ids, "explicit conditioning ids, comma-separated");
    dp->add_option("--lr", dp_lr, "learning rate");
    dp->add_flag("--independent-draws", dp_independent, "draw separate noise for the rejected terms");

    // crop
    auto* cr = app.add_subcommand("crop", "largest usable rectangle for a detection mask");
    cr->fallthrough();
    std::string cr_mask, cr_boxes;
    int cr_width = 0, cr_height = 0;
    double cr_area = 0.8, cr_ar = 0.1;
    cr->add_option("--mask", cr_mask, "portable-bitmap mask (P1 or P4; black = detected)");
    cr->add_option("--boxes", cr_boxes, "JSON array of {top,left,bottom,right} detection boxes");
    cr->add_option("--width", cr_width, "frame width in pixels (with --boxes)");
    cr->add_option("--height", cr_height, "frame height in pixels (with --boxes)");
    cr->add_option("--area-threshold", cr_area, "minimum area fraction (strictly exceeded)");
    cr->add_option("--ar-tolerance", cr_ar, "relative aspect-ratio tolerance");

    // bucket
    auto* bu = app.add_subcommand("bucket", "normalize fps and assign duration/aspect buckets");
    bu->fallthrough();
    std::string bu_manifest, bu_out, bu_dur = "2,4,8", bu_ar = "0.5625,1.0,1.7778";
    int bu_max_batch = 8;
    bu->add_option("--manifest", bu_manifest, "CSV manifest: path,duration,width,height,fps")->required();
    bu->add_option("--out-manifest", bu_out, "augmented manifest path (default <manifest>.bucketed.csv)");
    bu->add_option("--duration-centers", bu_dur, "bucket duration centers, seconds");
    bu->add_option("--ar-centers", bu_ar, "bucket aspect-ratio centers, width/height");
    bu->add_option("--max-batch", bu_max_batch, "per-bucket batch capacity");

    // report
    auto* re = app.add_subcommand("report", "validate and summarize a run report");
    re->fallthrough();
    std::string re_in;
    re->add_option("--in", re_in, "report JSON file")->required();

    // score-manual
    auto* sm = app.add_subcommand("score-manual", "weighted penalty for annotated motion defects");
    sm->fallthrough();
    std::string sm_defects;
    sm->add_option("--defects", sm_defects,
                   "comma-separated defect names (insufficient_amplitude, excessive_amplitude, "
                   "subject_distortion, local_detail, physics_violation, interaction_violation, "
                   "unnatural_movement); repeats accumulate")
        ->required();

    CLI11_PARSE(app, argc, argv);
    g.seed_given = seed_opt->count() > 0;

    try {
        if (sc->parsed()) {
            return run_schedule(g, sc_frames, sc_max_t, sc_count, sc_sample_n, sc_ad, sc_stagger);
        }
        if (tr->parsed()) return run_train(g);
        if (sa->parsed()) {
            return run_sample(g, sa_ckpt, sa_count, sa_frames, sa_max_t, sa_stagger, sa_cond,
                              sa_format, sa_stem);
        }
        if (ro->parsed()) {
            return run_rollout(g, ro_ckpt, ro_fprev, ro_fnew, ro_total, ro_hist, ro_stagger,
                               ro_max_t, ro_cond, ro_count, ro_format, ro_stem);
        }
        if (rt->parsed()) {
            return run_reward_train(g, rt_pairs, rt_synth, rt_kind, rt_dim, rt_frames, rt_noise,
                                    rt_hidden, rt_theta, rt_steps, rt_batch, rt_lr);
        }
        if (dp->parsed()) {
            return run_dpo(g, dp_ckpt, dp_kind, dp_frames, dp_noise, dp_beta, dp_stages, dp_steps,
                           dp_k, dp_max_t, dp_prompts, dp_prompt_ids, dp_lr, dp_independent);
        }
        if (cr->parsed()) {
            return run_crop(g, cr_mask, cr_boxes, cr_width, cr_height, cr_area, cr_ar);
        }
        if (bu->parsed()) {
            return run_bucket(g, bu_manifest, bu_out, bu_dur, bu_ar, bu_max_batch);
        }
        if (re->parsed()) return run_report(g, re_in);
        if (sm->parsed()) return run_score_manual(g, sm_defects);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
