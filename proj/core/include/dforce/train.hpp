#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dforce/denoiser.hpp"
#include "dforce/latent.hpp"
#include "dforce/rng.hpp"
#include "dforce/schedule.hpp"

namespace dforce {

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 16;
    int steps = 500;
    std::uint64_t seed = 0;
    double logit_m = 0.0;      // location of the logit-normal timestep law
    double logit_scale = 1.0;  // scale of the logit-normal timestep law
    double weight_decay = 0.0;
    double rms_decay = 0.99;  // running-average factor for squared gradients
    double rms_eps = 1e-8;
    int threads = -1;  // worker cap for batch evaluation; -1 = library default
};

// Momentum-free adaptive update: v <- decay*v + (1-decay)*g^2, then
// theta -= lr * g / (sqrt(v) + eps) + lr * weight_decay * theta.
class RmsOptimizer {
  public:
    RmsOptimizer(std::size_t n, double lr, double decay = 0.99, double eps = 1e-8,
                 double weight_decay = 0.0);
    void step(std::vector<double>& params, const std::vector<double>& grad);
    const std::vector<double>& second_moment() const { return v_; }

  private:
    double lr_, decay_, eps_, wd_;
    std::vector<double> v_;
};

// Mean over batch and frames of the squared error between the predicted and
// target velocity (summed over dims), on x_t built framewise from (x1, x0, t).
// When grad is non-null it is overwritten with the full parameter gradient.
// Batch evaluation runs in parallel but losses and gradients reduce in example
// order, so the result is identical for any worker count. Throws
// std::runtime_error with example/frame indices if the forward pass produces a
// non-finite value.
double fm_loss(const DenoiserParams& params, const std::vector<LatentSequence>& x1,
               const std::vector<LatentSequence>& x0, const std::vector<std::vector<double>>& t,
               const std::vector<int>& cond, std::vector<double>* grad = nullptr,
               int threads = -1);

struct TrainLogEntry {
    int step = 0;
    double loss = 0.0;
};
struct TrainResult {
    std::vector<TrainLogEntry> log;  // loss at every step, pre-update
};

// Full-sequence pretraining: every frame of an example shares one timestep
// drawn from the logit-normal. Per-example randomness comes from streams
// derived off (seed, step, example), so batches are reproducible and
// independent of the worker count. cond_ids, when given, supplies one
// conditioning id per dataset sequence (default all 0).
TrainResult train_flow(DenoiserParams& params, const std::vector<LatentSequence>& dataset,
                       const TrainConfig& cfg, const std::vector<int>* cond_ids = nullptr);

// The random draws one per-frame-noise training step consumes, exposed so a
// test can rebuild the exact batch from the step's nonce. When forced is
// given, every example uses that noise-level vector and the schedule sampling
// stream goes untouched (the noise draw is unaffected either way, because the
// two streams are split).
struct DfBatchDraw {
    std::vector<ScheduleVector> schedules;
    std::vector<LatentSequence> x0;
    std::vector<std::vector<double>> t;  // interpolation parameter per frame
};
DfBatchDraw df_draw_batch(int batch_size, int frames, int dim, int max_timestep,
                          std::uint64_t nonce, const ScheduleVector* forced = nullptr);

// One optimizer step in which each example's frames carry independently
// sampled discrete noise levels (non-decreasing across the window), mapped to
// interpolation parameters on the uniform grid. Returns the pre-update loss.
double df_train_step(DenoiserParams& params, RmsOptimizer& opt,
                     const std::vector<LatentSequence>& batch, int max_timestep, Rng& rng,
                     const ScheduleVector* forced = nullptr, int threads = -1,
                     const std::vector<int>* cond = nullptr);

}  // namespace dforce
