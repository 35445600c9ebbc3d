#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dforce/denoiser.hpp"
#include "dforce/latent.hpp"
#include "dforce/rng.hpp"
#include "dforce/train.hpp"

// Preference learning on latent sequences: a Bradley-Terry-with-ties reward
// scorer trained on (better, worse) pairs, automatic pair synthesis via
// controlled motion distortions, staged direct preference optimization of the
// denoiser against a frozen reference, and a distribution-matching gradient
// estimator built from score-function differences.
namespace dforce {

// ---------------------------------------------------------------------------
// Pairs and triplets

enum class PairLabel { a_better, b_better, tie };

struct PreferencePair {
    LatentSequence sample_a;
    LatentSequence sample_b;
    PairLabel label = PairLabel::a_better;
};

// Both members must share (frames, dim) and be finite.
void validate_pair(const PreferencePair& pair);

struct Triplet {
    LatentSequence chosen;
    LatentSequence rejected;
    int prompt_id = 0;  // doubles as the conditioning id used when sampling
};

// Shapes must match and the members must differ in at least one frame.
void validate_triplet(const Triplet& triplet);

// ---------------------------------------------------------------------------
// Bradley-Terry with ties (Rao-Kupper form)

struct BttProb {
    double p_a;    // P(a beats b)
    double p_b;    // P(b beats a)
    double p_tie;  // remainder; positive whenever theta_tie > 1
};

// With pi = exp(r): P(a>b) = pi_a / (pi_a + theta*pi_b), symmetrically for b,
// and P(tie) = 1 - P(a>b) - P(b>a). Requires theta_tie > 1; computed in
// sigmoid form so large reward gaps stay stable.
BttProb btt_prob(double r_a, double r_b, double theta_tie);

// ---------------------------------------------------------------------------
// Reward scorer: per-frame features [x_i; d_i; d_i*d_i] with d_i = x_i -
// x_{i-1} (d_0 = 0), mean-pooled over frames, then a two-hidden-layer tanh MLP
// to a scalar. The displacement channels let the scorer see motion direction
// and magnitude, which position-only pooling cannot.

struct RewardConfig {
    int dim = 2;      // latent dim of scored sequences
    int hidden = 32;  // MLP width
};

struct RewardLayout {
    std::size_t w1;  // hidden x 3*dim
    std::size_t b1;  // hidden
    std::size_t w2;  // hidden x hidden
    std::size_t b2;  // hidden
    std::size_t w3;  // hidden
    std::size_t b3;  // 1
    std::size_t total;
};

RewardLayout make_reward_layout(const RewardConfig& config);
std::size_t reward_param_count(const RewardConfig& config);

struct RewardParams {
    RewardConfig config;
    double theta_tie = 1.5;      // tie appetite; must stay > 1
    std::vector<double> values;  // reward_param_count(config) entries
};

// Weights ~ N(0, 1/fan_in), biases zero, theta_tie as given.
RewardParams init_reward(const RewardConfig& config, Rng& rng, double theta_tie = 1.5);

void validate_reward_params(const RewardParams& params);

// Scalar reward of a sequence. When grad is non-null it is overwritten with
// d(reward)/d(values).
double reward_score(const RewardParams& params, const LatentSequence& seq,
                    std::vector<double>* grad = nullptr);

// Mean negative log-likelihood of the pair labels under btt_prob applied to
// the scored rewards. When grad is non-null it is overwritten with the mean
// gradient over pairs. Rejects an empty pair list.
double btt_loss(const RewardParams& params, const std::vector<PreferencePair>& pairs,
                std::vector<double>* grad = nullptr);

struct RewardTrainConfig {
    int steps = 300;
    int batch_size = 64;  // pairs per step, sampled with replacement
    double lr = 1e-2;
    double rms_decay = 0.99;
    double rms_eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

// Minibatch RMS-scaled descent on btt_loss; returns the pre-update loss per
// step. Deterministic given (params, pairs, config).
std::vector<TrainLogEntry> reward_train(RewardParams& params,
                                        const std::vector<PreferencePair>& pairs,
                                        const RewardTrainConfig& config);

// Fraction of non-tie pairs whose reward ordering matches the label (strict
// inequality; tie-labeled pairs are skipped). Rejects a list with no non-tie
// pairs.
double ranking_accuracy(const RewardParams& params,
                        const std::vector<PreferencePair>& pairs);

// ---------------------------------------------------------------------------
// Controlled distortions for automatic pair synthesis

enum class DistortionKind {
    Reverse,       // flip frame order (backwards physics)
    ResampleFast,  // skip every other frame, hold the last (excessive motion)
    ResampleSlow,  // repeat each frame (insufficient motion)
    Jitter,        // alternate skip/step rates (erratic motion)
    NoiseInject,   // corrupt one contiguous frame span (local detail loss)
};

DistortionKind distortion_kind_from_string(const std::string& name);
std::string to_string(DistortionKind kind);

// Returns a distorted copy with the same (frames, dim). Requires >= 2 frames.
// Only NoiseInject consumes rng draws.
LatentSequence synthesize_distortion(const LatentSequence& video, DistortionKind kind,
                                     Rng& rng);

// Kind assigned to each dataset index: round-robin over the five kinds, so
// the histogram is uniform within one.
std::vector<DistortionKind> distortion_schedule(std::size_t n);

// One (clean, distorted) pair per dataset entry, always labeled a_better with
// the clean member first. Kinds follow distortion_schedule; each pair's
// distortion uses its own rng stream split from one draw of rng, so results
// are deterministic given the incoming rng state.
std::vector<PreferencePair> build_auto_pairs(const std::vector<LatentSequence>& dataset,
                                             Rng& rng);

// ---------------------------------------------------------------------------
// Direct preference optimization of the denoiser

// One noise/time draw used to evaluate the per-sequence regression terms.
struct DpoDraw {
    LatentSequence x0;  // shared noise, shaped like the sequences
    double t = 0.5;     // shared interpolation parameter, in (0, 1)
};

DpoDraw sample_dpo_draw(int frames, int dim, double logit_m, double logit_scale,
                        Rng& rng);

// L(params, seq) = 1/2 * sum((u(x_t) - y)^2) with x_t = t*seq + (1-t)*x0 and
// y = seq - x0, evaluated for chosen/rejected under model and reference.
// Returns -log sigmoid(-beta/2 * (delta_model - delta_ref)) where delta =
// L(chosen) - L(rejected). The same draw feeds all four terms unless
// rejected_draw is given, in which case the rejected terms use it instead.
// When grad is non-null it is overwritten with the gradient through the model
// terms only. With model == ref (or beta == 0) the loss is exactly ln 2.
double dpo_loss(const DenoiserParams& model, const DenoiserParams& ref,
                const Triplet& triplet, double beta, const DpoDraw& draw,
                std::vector<double>* grad = nullptr,
                const DpoDraw* rejected_draw = nullptr);

// Scoring hook for triplet construction; higher is better.
using ScoreSeqFn = std::function<double(const LatentSequence&)>;

// For each prompt, draws k >= 2 windows of pure noise, denoises each along a
// synchronous full plan conditioned on the prompt id, scores the results, and
// pairs the argmax with the argmin (first occurrence on ties; when every
// score ties, the first two samples are used). Prompts run in parallel on
// split rng streams, so results are independent of thread count. When
// mean_score is non-null it receives the mean score over all k*|prompts|
// samples.
std::vector<Triplet> build_triplets(const DenoiserParams& params, const ScoreSeqFn& score,
                                    const std::vector<int>& prompts, int k, int frames,
                                    int max_timestep, Rng& rng,
                                    double* mean_score = nullptr);

// Same, scoring with a trained reward model.
std::vector<Triplet> build_triplets(const DenoiserParams& params,
                                    const RewardParams& reward,
                                    const std::vector<int>& prompts, int k, int frames,
                                    int max_timestep, Rng& rng,
                                    double* mean_score = nullptr);

struct DPOConfig {
    double beta = 1.0;           // temperature; must be > 0
    int refresh_interval = 20;   // optimization steps per stage
    int stage_count = 3;         // reference refreshes at each stage boundary
    int samples_per_prompt = 8;  // k used when building triplets
    double lr = 1e-3;
    double rms_decay = 0.99;
    double rms_eps = 1e-8;
    double logit_m = 0.0;        // draw distribution for t
    double logit_scale = 1.0;
    bool independent_draws = false;  // separate (x0, t) for the rejected terms
};

void validate_dpo_config(const DPOConfig& config);

struct DpoStageReport {
    int stage = 0;
    // Mean score of all samples generated while building this stage's
    // triplets; stage 0 reflects the model before any preference updates.
    double build_mean_score = 0.0;
    // Loss and margin on this stage's frozen triplets and metric draws,
    // evaluated before the first step (loss returns to ln 2 and margin to 1/2
    // at every refresh) and after the last.
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double initial_margin = 0.0;
    double final_margin = 0.0;
};

// Staged preference training: each stage copies the current model into the
// reference, builds fresh triplets by sampling and scoring, then runs
// refresh_interval RMS-scaled descent steps on the mean dpo_loss (fresh draws
// per step). Margins are measured as the mean sigmoid(-beta/2*(delta_model -
// delta_ref)) over the stage's frozen triplets with frozen draws.
std::vector<DpoStageReport> dpo_stage_loop(DenoiserParams& model, const DPOConfig& config,
                                           const ScoreSeqFn& score,
                                           const std::vector<int>& prompts, int frames,
                                           int max_timestep, Rng& rng);

// ---------------------------------------------------------------------------
// Distribution-matching gradient estimator

// Vector score function evaluated at a sample (e.g. the gradient of a log
// density).
using ScoreVecFn = std::function<std::vector<double>(const std::vector<double>&)>;

struct DmdSample {
    std::vector<double> x;                           // generated sample
    std::vector<std::vector<double>> dx_dtheta;      // [param][component]
};

// Monte Carlo estimate: mean over samples of (s_fake(x) - s_real(x)) dotted
// into each parameter's sensitivity row. Zero when the score functions agree;
// linear in their difference.
std::vector<double> dmd_gradient(const std::vector<DmdSample>& samples,
                                 const ScoreVecFn& s_fake, const ScoreVecFn& s_real);

// ---------------------------------------------------------------------------
// Manual annotation scoring weights

enum class DefectKind {
    InsufficientAmplitude,  // 1 point per instance
    ExcessiveAmplitude,     // 2 points
    SubjectDistortion,      // 3 points
    LocalDetail,            // 1 point
    PhysicsViolation,       // 3 points
    InteractionViolation,   // 2 points
    UnnaturalMovement,      // 1 point
};

int manual_defect_weight(DefectKind kind);
DefectKind defect_kind_from_string(const std::string& name);
std::string to_string(DefectKind kind);

// Weighted defect total: sum over (kind, count) of weight * count. Higher
// means worse. Counts must be non-negative.
int manual_penalty(const std::vector<std::pair<DefectKind, int>>& counts);

}  // namespace dforce
