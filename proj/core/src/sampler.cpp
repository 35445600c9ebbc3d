#include "dforce/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dforce/flow.hpp"

namespace dforce {

namespace {

void check_level_args(const LatentSequence& x_init, const std::vector<int>& levels_before,
                      const std::vector<std::vector<int>>& rows, int max_timestep) {
    if (max_timestep < 1)
        throw std::invalid_argument("run_level_path: max timestep must be >= 1");
    validate_latent(x_init);
    const std::size_t F = static_cast<std::size_t>(x_init.frames);
    if (levels_before.size() != F)
        throw std::invalid_argument("run_level_path: starting levels cover " +
                                    std::to_string(levels_before.size()) + " frames, window has " +
                                    std::to_string(x_init.frames));
    const std::vector<int>* prev = &levels_before;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != F)
            throw std::invalid_argument("run_level_path: row " + std::to_string(r) + " covers " +
                                        std::to_string(rows[r].size()) + " frames, window has " +
                                        std::to_string(x_init.frames));
        for (std::size_t i = 0; i < F; ++i) {
            const int cur = rows[r][i];
            const int was = (*prev)[i];
            if (cur < 0 || cur > max_timestep)
                throw std::invalid_argument("run_level_path: row " + std::to_string(r) +
                                            ", frame " + std::to_string(i) + " has level " +
                                            std::to_string(cur) + " outside [0, " +
                                            std::to_string(max_timestep) + "]");
            if (cur != was && cur != was - 1)
                throw std::invalid_argument("run_level_path: row " + std::to_string(r) +
                                            ", frame " + std::to_string(i) + " jumps from " +
                                            std::to_string(was) + " to " + std::to_string(cur) +
                                            "; a step may only hold a level or lower it by one");
        }
        prev = &rows[r];
    }
    for (std::size_t i = 0; i < F; ++i)
        if (levels_before[i] < 0 || levels_before[i] > max_timestep)
            throw std::invalid_argument("run_level_path: starting level of frame " +
                                        std::to_string(i) + " is outside [0, " +
                                        std::to_string(max_timestep) + "]");
}

}  // namespace

LatentSequence run_level_path(const DenoiserParams& params, const LatentSequence& x_init,
                              const std::vector<int>& levels_before,
                              const std::vector<std::vector<int>>& rows, int max_timestep,
                              int cond_id, bool memoize_context) {
    check_level_args(x_init, levels_before, rows, max_timestep);
    const int F = x_init.frames;
    const int D = x_init.dim;

    // leading frames whose level never moves keep their pooled-context
    // contribution for the whole path
    int frozen = 0;
    while (frozen < F) {
        bool stable = true;
        for (const std::vector<int>& row : rows)
            if (row[static_cast<std::size_t>(frozen)] != levels_before[static_cast<std::size_t>(frozen)]) {
                stable = false;
                break;
            }
        if (!stable) break;
        ++frozen;
    }

    LatentSequence x = x_init;
    x.per_frame_t.reset();
    ContextMemo memo;
    if (memoize_context && frozen > 0) memo = build_context_memo(x, frozen);

    std::vector<int> levels = levels_before;
    std::vector<double> t_flow(static_cast<std::size_t>(F));
    std::vector<double> ctx;
    const double dt = 1.0 / max_timestep;

    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int i = 0; i < F; ++i)
            t_flow[static_cast<std::size_t>(i)] = flow_t_from_discrete(levels[i], max_timestep);
        causal_context(x, ctx, (memoize_context && frozen > 0) ? &memo : nullptr);
        const LatentSequence u = denoiser_forward(params, x, t_flow, cond_id, nullptr, &ctx);
        for (int i = 0; i < F; ++i) {
            if (rows[r][static_cast<std::size_t>(i)] != levels[i] - 1) continue;
            double* xi = x.frame(i);
            const double* ui = u.frame(i);
            for (int d = 0; d < D; ++d) xi[d] += dt * ui[d];
            for (int d = 0; d < D; ++d)
                if (!std::isfinite(xi[d]))
                    throw std::runtime_error("run_level_path: non-finite state at step " +
                                             std::to_string(r) + ", frame " + std::to_string(i));
        }
        levels = rows[r];
    }

    x.per_frame_t = std::vector<double>(static_cast<std::size_t>(F));
    for (int i = 0; i < F; ++i)
        (*x.per_frame_t)[static_cast<std::size_t>(i)] =
            static_cast<double>(levels[i]) / max_timestep;
    return x;
}

LatentSequence euler_sample(const DenoiserParams& params, const SchedulePlan& plan,
                            const LatentSequence& x_init, int cond_id, bool memoize_context) {
    validate_plan(plan);
    if (x_init.frames != plan.frames)
        throw std::invalid_argument("euler_sample: window has " + std::to_string(x_init.frames) +
                                    " frames, plan covers " + std::to_string(plan.frames));
    const std::vector<int> start(static_cast<std::size_t>(plan.frames), plan.max_timestep);
    std::vector<std::vector<int>> rows;
    rows.reserve(plan.steps.size());
    for (const ScheduleVector& sv : plan.steps) rows.push_back(sv.timesteps);
    return run_level_path(params, x_init, start, rows, plan.max_timestep, cond_id,
                          memoize_context);
}

void validate_rollout_config(const RolloutConfig& cfg) {
    if (cfg.f_prev < 1)
        throw std::invalid_argument("RolloutConfig: f_prev must be >= 1, got " +
                                    std::to_string(cfg.f_prev));
    if (cfg.f_new < 1)
        throw std::invalid_argument("RolloutConfig: f_new must be >= 1, got " +
                                    std::to_string(cfg.f_new));
    if (cfg.total_frames < cfg.f_new)
        throw std::invalid_argument("RolloutConfig: total_frames must be >= f_new");
    if (cfg.max_timestep < 1)
        throw std::invalid_argument("RolloutConfig: max timestep must be >= 1");
    if (cfg.stagger < 0) throw std::invalid_argument("RolloutConfig: stagger must be >= 0");
    if (!(cfg.history_noise_t >= 0.0 && cfg.history_noise_t <= 0.2))
        throw std::invalid_argument("RolloutConfig: history noise must lie in [0, 0.2]");
    const long level = std::lround(cfg.history_noise_t * cfg.max_timestep);
    if (level >= cfg.max_timestep)
        throw std::invalid_argument(
            "RolloutConfig: history noise rounds to the top level; carried frames must sit "
            "below fresh ones");
}

namespace {

LatentSequence truncate_frames(const LatentSequence& seq, int n) {
    LatentSequence out = LatentSequence::zeros(n, seq.dim);
    std::copy(seq.data.begin(), seq.data.begin() + static_cast<std::size_t>(n) * seq.dim,
              out.data.begin());
    return out;
}

// appends f_new frames per window until total_frames is reached; `generated`
// must already hold at least f_prev frames
void extend_windows(const DenoiserParams& params, const RolloutConfig& cfg, int cond_id, Rng& rng,
                    LatentSequence& generated, int first_window_index) {
    const int F = cfg.f_prev + cfg.f_new;
    const int D = generated.dim;
    const int T = cfg.max_timestep;
    const int level_hist = static_cast<int>(std::lround(cfg.history_noise_t * T));
    const SchedulePlan plan_new = ad_schedule(cfg.f_new, T, cfg.stagger);

    std::vector<int> before(static_cast<std::size_t>(F), level_hist);
    for (int i = cfg.f_prev; i < F; ++i) before[static_cast<std::size_t>(i)] = T;
    std::vector<std::vector<int>> rows;
    rows.reserve(plan_new.steps.size());
    for (const ScheduleVector& step : plan_new.steps) {
        std::vector<int> row(static_cast<std::size_t>(F), level_hist);
        for (int i = 0; i < cfg.f_new; ++i)
            row[static_cast<std::size_t>(cfg.f_prev + i)] =
                step.timesteps[static_cast<std::size_t>(i)];
        rows.push_back(std::move(row));
    }

    int window_index = first_window_index;
    while (generated.frames < cfg.total_frames) {
        LatentSequence history = LatentSequence::zeros(cfg.f_prev, D);
        const int base = generated.frames - cfg.f_prev;
        for (int i = 0; i < cfg.f_prev; ++i) {
            const double* src = generated.frame(base + i);
            std::copy(src, src + D, history.frame(i));
        }
        const LatentSequence fresh = LatentSequence::gaussian(cfg.f_prev, D, rng);
        const LatentSequence renoised = interpolate(
            history, fresh, std::vector<double>(static_cast<std::size_t>(cfg.f_prev),
                                                1.0 - cfg.history_noise_t));
        LatentSequence x_init = LatentSequence::zeros(F, D);
        for (int i = 0; i < cfg.f_prev; ++i) {
            const double* src = renoised.frame(i);
            std::copy(src, src + D, x_init.frame(i));
        }
        const LatentSequence noise = LatentSequence::gaussian(cfg.f_new, D, rng);
        for (int i = 0; i < cfg.f_new; ++i) {
            const double* src = noise.frame(i);
            std::copy(src, src + D, x_init.frame(cfg.f_prev + i));
        }

        LatentSequence window;
        try {
            window = run_level_path(params, x_init, before, rows, T, cond_id,
                                    cfg.memoize_context);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("rollout: window " + std::to_string(window_index) + ": " +
                                     e.what());
        }

        LatentSequence grown = LatentSequence::zeros(generated.frames + cfg.f_new, D);
        std::copy(generated.data.begin(), generated.data.end(), grown.data.begin());
        for (int i = 0; i < cfg.f_new; ++i) {
            const double* src = window.frame(cfg.f_prev + i);
            std::copy(src, src + D, grown.frame(generated.frames + i));
        }
        generated = std::move(grown);
        ++window_index;
    }
}

}  // namespace

LatentSequence rollout(const DenoiserParams& params, const RolloutConfig& cfg, int cond_id,
                       Rng& rng) {
    validate_rollout_config(cfg);
    const int F = cfg.f_prev + cfg.f_new;
    const int D = params.config.dim;
    if (F > params.config.max_frames)
        throw std::invalid_argument("rollout: window of " + std::to_string(F) +
                                    " frames exceeds the model's position table (" +
                                    std::to_string(params.config.max_frames) + ")");

    const LatentSequence x_init = LatentSequence::gaussian(F, D, rng);
    const SchedulePlan plan = ad_schedule(F, cfg.max_timestep, cfg.stagger);
    LatentSequence generated;
    try {
        generated = euler_sample(params, plan, x_init, cond_id, cfg.memoize_context);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("rollout: window 0: " + std::string(e.what()));
    }

    extend_windows(params, cfg, cond_id, rng, generated, 1);
    LatentSequence out = truncate_frames(generated, cfg.total_frames);
    out.per_frame_t = std::vector<double>(static_cast<std::size_t>(cfg.total_frames), 0.0);
    return out;
}

LatentSequence condition_on_first_frame(const DenoiserParams& params,
                                        const std::vector<double>& first_frame,
                                        const RolloutConfig& cfg, int cond_id, Rng& rng) {
    validate_rollout_config(cfg);
    const int F = cfg.f_prev + cfg.f_new;
    const int D = params.config.dim;
    if (first_frame.size() != static_cast<std::size_t>(D))
        throw std::invalid_argument("condition_on_first_frame: reference frame has " +
                                    std::to_string(first_frame.size()) + " dims, model expects " +
                                    std::to_string(D));
    if (F > params.config.max_frames)
        throw std::invalid_argument("condition_on_first_frame: window of " + std::to_string(F) +
                                    " frames exceeds the model's position table (" +
                                    std::to_string(params.config.max_frames) + ")");
    if (F < 2)
        throw std::invalid_argument(
            "condition_on_first_frame: the window needs at least one frame beyond the reference");

    // frame 0 pinned fully clean; the rest start at pure noise and follow the
    // staggered plan of the remaining frames
    LatentSequence x_init = LatentSequence::zeros(F, D);
    std::copy(first_frame.begin(), first_frame.end(), x_init.frame(0));
    const LatentSequence noise = LatentSequence::gaussian(F - 1, D, rng);
    for (int i = 1; i < F; ++i) {
        const double* src = noise.frame(i - 1);
        std::copy(src, src + D, x_init.frame(i));
    }

    const SchedulePlan tail_plan = ad_schedule(F - 1, cfg.max_timestep, cfg.stagger);
    std::vector<int> before(static_cast<std::size_t>(F), cfg.max_timestep);
    before[0] = 0;
    std::vector<std::vector<int>> rows;
    rows.reserve(tail_plan.steps.size());
    for (const ScheduleVector& step : tail_plan.steps) {
        std::vector<int> row(static_cast<std::size_t>(F), 0);
        for (int i = 1; i < F; ++i)
            row[static_cast<std::size_t>(i)] = step.timesteps[static_cast<std::size_t>(i - 1)];
        rows.push_back(std::move(row));
    }

    LatentSequence generated;
    try {
        generated = run_level_path(params, x_init, before, rows, cfg.max_timestep, cond_id,
                                   cfg.memoize_context);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("rollout: window 0: " + std::string(e.what()));
    }
    generated.per_frame_t.reset();

    if (generated.frames < cfg.total_frames)
        extend_windows(params, cfg, cond_id, rng, generated, 1);
    LatentSequence out = truncate_frames(generated, cfg.total_frames);
    out.per_frame_t = std::vector<double>(static_cast<std::size_t>(cfg.total_frames), 0.0);
    return out;
}

}  // namespace dforce
