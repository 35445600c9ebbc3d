#pragma once

#include <vector>

#include "dforce/denoiser.hpp"
#include "dforce/latent.hpp"
#include "dforce/rng.hpp"
#include "dforce/schedule.hpp"

namespace dforce {

// Integrates the learned velocity field along explicit per-frame noise-level
// rows. levels_before gives each frame's discrete level ahead of the first
// row; each row may hold a frame's level or lower it by one. A frame is
// integrated (one explicit-Euler increment of 1/max_timestep at the frame's
// pre-row position) exactly when its level drops in that row; all increments
// of a row are computed from the same pre-row window state. Frames whose level
// never changes -- in particular frames pinned at 0 -- pass through
// bit-identical. The output's per-frame annotation holds the final residual
// noise fraction (level / max_timestep). With memoize_context the pooled
// context of the never-changing leading frames is computed once and reused,
// which is bit-identical to recomputing it. Throws std::runtime_error naming
// the step and frame if the state stops being finite.
LatentSequence run_level_path(const DenoiserParams& params, const LatentSequence& x_init,
                              const std::vector<int>& levels_before,
                              const std::vector<std::vector<int>>& rows, int max_timestep,
                              int cond_id = 0, bool memoize_context = true);

// Denoises a window from pure noise along a full plan (every frame from
// max_timestep down to 0); the result is annotated fully clean. Deterministic
// given (params, plan, x_init).
LatentSequence euler_sample(const DenoiserParams& params, const SchedulePlan& plan,
                            const LatentSequence& x_init, int cond_id = 0,
                            bool memoize_context = true);

struct RolloutConfig {
    int f_prev = 1;      // trailing frames carried into the next window
    int f_new = 1;       // frames produced per window after the first
    int total_frames = 1;
    double history_noise_t = 0.02;  // residual noise fraction re-applied to carried frames
    int stagger = 0;                // per-frame noise-level offset within a window
    int max_timestep = 1;
    bool memoize_context = true;
};

// throws std::invalid_argument; requires f_prev, f_new >= 1,
// total_frames >= f_new, max_timestep >= 1, stagger >= 0, and
// history_noise_t in [0, 0.2] with round(history_noise_t * max_timestep) <
// max_timestep so carried frames always sit below fresh ones
void validate_rollout_config(const RolloutConfig& cfg);

// Long-horizon generation by sliding a window of f_prev + f_new frames: the
// first window is denoised entirely from noise; each later window re-noises
// the last f_prev generated frames to history_noise_t via fresh-noise
// interpolation, holds them at the matching discrete level throughout, and
// denoises f_new fresh frames. The emitted sequence keeps the original
// (not re-noised) carried frames and is truncated to total_frames. Throws
// std::runtime_error naming the window index if any window goes non-finite.
LatentSequence rollout(const DenoiserParams& params, const RolloutConfig& cfg, int cond_id,
                       Rng& rng);

// Same window machinery with frame 0 pinned fully clean at the supplied
// value; the remaining frames of the first window are denoised from noise,
// and generation extends exactly like rollout until total_frames.
LatentSequence condition_on_first_frame(const DenoiserParams& params,
                                        const std::vector<double>& first_frame,
                                        const RolloutConfig& cfg, int cond_id, Rng& rng);

}  // namespace dforce
