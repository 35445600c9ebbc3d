#include "dforce/preference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "dforce/flow.hpp"
#include "dforce/parallel.hpp"
#include "dforce/sampler.hpp"
#include "dforce/schedule.hpp"

namespace dforce {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// -log(sigmoid(z)) = softplus(-z), computed without overflow on either side
double softplus(double a) {
    if (a > 0.0) return a + std::log1p(std::exp(-a));
    return std::log1p(std::exp(a));
}

double log_sum_exp(double a, double b) {
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

void check_theta(double theta_tie) {
    if (!std::isfinite(theta_tie) || theta_tie <= 1.0) {
        throw std::invalid_argument("btt: theta_tie must be finite and > 1");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Pairs and triplets

void validate_pair(const PreferencePair& pair) {
    validate_latent(pair.sample_a);
    validate_latent(pair.sample_b);
    if (!same_shape(pair.sample_a, pair.sample_b)) {
        throw std::invalid_argument("preference pair: samples must share (frames, dim)");
    }
    if (!all_finite(pair.sample_a) || !all_finite(pair.sample_b)) {
        throw std::invalid_argument("preference pair: samples must be finite");
    }
    if (pair.label != PairLabel::a_better && pair.label != PairLabel::b_better &&
        pair.label != PairLabel::tie) {
        throw std::invalid_argument("preference pair: unknown label");
    }
}

void validate_triplet(const Triplet& triplet) {
    validate_latent(triplet.chosen);
    validate_latent(triplet.rejected);
    if (!same_shape(triplet.chosen, triplet.rejected)) {
        throw std::invalid_argument("triplet: members must share (frames, dim)");
    }
    if (!all_finite(triplet.chosen) || !all_finite(triplet.rejected)) {
        throw std::invalid_argument("triplet: members must be finite");
    }
    if (triplet.prompt_id < 0) {
        throw std::invalid_argument("triplet: prompt id must be >= 0");
    }
    if (triplet.chosen.data == triplet.rejected.data) {
        throw std::invalid_argument("triplet: chosen and rejected must differ");
    }
}

// ---------------------------------------------------------------------------
// Bradley-Terry with ties

BttProb btt_prob(double r_a, double r_b, double theta_tie) {
    check_theta(theta_tie);
    if (!std::isfinite(r_a) || !std::isfinite(r_b)) {
        throw std::invalid_argument("btt_prob: rewards must be finite");
    }
    const double log_theta = std::log(theta_tie);
    const double delta = r_a - r_b;
    BttProb out{};
    out.p_a = sigmoid(delta - log_theta);
    out.p_b = sigmoid(-delta - log_theta);
    out.p_tie = 1.0 - out.p_a - out.p_b;
    return out;
}

// ---------------------------------------------------------------------------
// Reward scorer

RewardLayout make_reward_layout(const RewardConfig& config) {
    if (config.dim < 1 || config.hidden < 1) {
        throw std::invalid_argument("reward config: dim and hidden must be >= 1");
    }
    const std::size_t d3 = 3u * static_cast<std::size_t>(config.dim);
    const std::size_t h = static_cast<std::size_t>(config.hidden);
    RewardLayout lay{};
    lay.w1 = 0;
    lay.b1 = lay.w1 + h * d3;
    lay.w2 = lay.b1 + h;
    lay.b2 = lay.w2 + h * h;
    lay.w3 = lay.b2 + h;
    lay.b3 = lay.w3 + h;
    lay.total = lay.b3 + 1;
    return lay;
}

std::size_t reward_param_count(const RewardConfig& config) {
    return make_reward_layout(config).total;
}

RewardParams init_reward(const RewardConfig& config, Rng& rng, double theta_tie) {
    check_theta(theta_tie);
    const RewardLayout lay = make_reward_layout(config);
    RewardParams params;
    params.config = config;
    params.theta_tie = theta_tie;
    params.values.assign(lay.total, 0.0);
    const double sd1 = 1.0 / std::sqrt(3.0 * config.dim);
    const double sdh = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    for (std::size_t i = lay.w1; i < lay.b1; ++i) params.values[i] = rng.normal(0.0, sd1);
    for (std::size_t i = lay.w2; i < lay.b2; ++i) params.values[i] = rng.normal(0.0, sdh);
    for (std::size_t i = lay.w3; i < lay.b3; ++i) params.values[i] = rng.normal(0.0, sdh);
    return params;
}

void validate_reward_params(const RewardParams& params) {
    const RewardLayout lay = make_reward_layout(params.config);
    check_theta(params.theta_tie);
    if (params.values.size() != lay.total) {
        throw std::invalid_argument("reward params: value buffer size mismatch");
    }
    for (double v : params.values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("reward params: values must be finite");
        }
    }
}

namespace {

// Mean over frames of [x_i; d_i; d_i*d_i], d_i = x_i - x_{i-1}, d_0 = 0.
std::vector<double> pooled_features(const LatentSequence& seq) {
    const int d = seq.dim;
    std::vector<double> phi(3u * static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < seq.frames; ++i) {
        const double* xi = seq.frame(i);
        const double* xp = i > 0 ? seq.frame(i - 1) : nullptr;
        for (int k = 0; k < d; ++k) {
            const double delta = xp ? xi[k] - xp[k] : 0.0;
            phi[k] += xi[k];
            phi[d + k] += delta;
            phi[2 * d + k] += delta * delta;
        }
    }
    const double inv = 1.0 / seq.frames;
    for (double& v : phi) v *= inv;
    return phi;
}

}  // namespace

double reward_score(const RewardParams& params, const LatentSequence& seq,
                    std::vector<double>* grad) {
    validate_latent(seq);
    if (seq.dim != params.config.dim) {
        throw std::invalid_argument("reward_score: sequence dim mismatch");
    }
    if (!all_finite(seq)) {
        throw std::invalid_argument("reward_score: sequence must be finite");
    }
    const RewardLayout lay = make_reward_layout(params.config);
    if (params.values.size() != lay.total) {
        throw std::invalid_argument("reward_score: value buffer size mismatch");
    }
    const int h = params.config.hidden;
    const std::size_t d3 = 3u * static_cast<std::size_t>(params.config.dim);
    const double* w = params.values.data();

    const std::vector<double> phi = pooled_features(seq);
    std::vector<double> a1(h), a2(h);
    for (int j = 0; j < h; ++j) {
        double acc = w[lay.b1 + j];
        const double* row = w + lay.w1 + static_cast<std::size_t>(j) * d3;
        for (std::size_t k = 0; k < d3; ++k) acc += row[k] * phi[k];
        a1[j] = std::tanh(acc);
    }
    for (int j = 0; j < h; ++j) {
        double acc = w[lay.b2 + j];
        const double* row = w + lay.w2 + static_cast<std::size_t>(j) * h;
        for (int k = 0; k < h; ++k) acc += row[k] * a1[k];
        a2[j] = std::tanh(acc);
    }
    double r = w[lay.b3];
    for (int j = 0; j < h; ++j) r += w[lay.w3 + j] * a2[j];

    if (grad != nullptr) {
        grad->assign(lay.total, 0.0);
        double* g = grad->data();
        std::vector<double> dz2(h), dz1(h, 0.0);
        g[lay.b3] = 1.0;
        for (int j = 0; j < h; ++j) {
            g[lay.w3 + j] = a2[j];
            dz2[j] = w[lay.w3 + j] * (1.0 - a2[j] * a2[j]);
        }
        for (int j = 0; j < h; ++j) {
            double* row = g + lay.w2 + static_cast<std::size_t>(j) * h;
            for (int k = 0; k < h; ++k) {
                row[k] = dz2[j] * a1[k];
                dz1[k] += w[lay.w2 + static_cast<std::size_t>(j) * h + k] * dz2[j];
            }
            g[lay.b2 + j] = dz2[j];
        }
        for (int j = 0; j < h; ++j) {
            dz1[j] *= 1.0 - a1[j] * a1[j];
            double* row = g + lay.w1 + static_cast<std::size_t>(j) * d3;
            for (std::size_t k = 0; k < d3; ++k) row[k] = dz1[j] * phi[k];
            g[lay.b1 + j] = dz1[j];
        }
    }
    return r;
}

namespace {

// NLL of one labeled pair plus d(nll)/d(r_a), d(nll)/d(r_b), all in stable
// sigmoid/log-sum-exp form.
void pair_nll(double r_a, double r_b, PairLabel label, double log_theta, double& nll,
              double& d_ra, double& d_rb) {
    const double delta = r_a - r_b;
    switch (label) {
        case PairLabel::a_better: {
            const double u = delta - log_theta;
            nll = softplus(-u);
            d_ra = sigmoid(u) - 1.0;
            d_rb = -d_ra;
            return;
        }
        case PairLabel::b_better: {
            const double u = -delta - log_theta;
            nll = softplus(-u);
            d_rb = sigmoid(u) - 1.0;
            d_ra = -d_rb;
            return;
        }
        case PairLabel::tie: {
            const double theta = std::exp(log_theta);
            nll = -std::log(theta * theta - 1.0) - r_a - r_b +
                  log_sum_exp(r_a, r_b + log_theta) + log_sum_exp(r_b, r_a + log_theta);
            d_ra = -1.0 + sigmoid(delta - log_theta) + sigmoid(delta + log_theta);
            d_rb = -1.0 + sigmoid(-delta - log_theta) + sigmoid(-delta + log_theta);
            return;
        }
    }
    throw std::invalid_argument("btt_loss: unknown pair label");
}

double btt_loss_subset(const RewardParams& params,
                       const std::vector<PreferencePair>& pairs,
                       const std::vector<std::size_t>& indices,
                       std::vector<double>* grad) {
    validate_reward_params(params);
    if (indices.empty()) {
        throw std::invalid_argument("btt_loss: pair list must be non-empty");
    }
    const double log_theta = std::log(params.theta_tie);
    const std::size_t n = params.values.size();
    std::vector<double> ga, gb;
    if (grad != nullptr) grad->assign(n, 0.0);
    double total = 0.0;
    for (std::size_t idx : indices) {
        const PreferencePair& pair = pairs[idx];
        validate_pair(pair);
        const double r_a =
            reward_score(params, pair.sample_a, grad != nullptr ? &ga : nullptr);
        const double r_b =
            reward_score(params, pair.sample_b, grad != nullptr ? &gb : nullptr);
        double nll = 0.0, d_ra = 0.0, d_rb = 0.0;
        pair_nll(r_a, r_b, pair.label, log_theta, nll, d_ra, d_rb);
        total += nll;
        if (grad != nullptr) {
            for (std::size_t j = 0; j < n; ++j) {
                (*grad)[j] += d_ra * ga[j] + d_rb * gb[j];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    if (grad != nullptr) {
        for (double& g : *grad) g *= inv;
    }
    return total * inv;
}

}  // namespace

double btt_loss(const RewardParams& params, const std::vector<PreferencePair>& pairs,
                std::vector<double>* grad) {
    std::vector<std::size_t> all(pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return btt_loss_subset(params, pairs, all, grad);
}

std::vector<TrainLogEntry> reward_train(RewardParams& params,
                                        const std::vector<PreferencePair>& pairs,
                                        const RewardTrainConfig& config) {
    validate_reward_params(params);
    if (pairs.empty()) {
        throw std::invalid_argument("reward_train: pair list must be non-empty");
    }
    if (config.steps < 1) throw std::invalid_argument("reward_train: steps must be >= 1");
    if (config.batch_size < 1) {
        throw std::invalid_argument("reward_train: batch_size must be >= 1");
    }
    RmsOptimizer opt(params.values.size(), config.lr, config.rms_decay, config.rms_eps,
                     config.weight_decay);
    Rng master(config.seed);
    std::vector<TrainLogEntry> log;
    log.reserve(config.steps);
    std::vector<std::size_t> batch(config.batch_size);
    std::vector<double> grad;
    for (int step = 0; step < config.steps; ++step) {
        for (std::size_t& idx : batch) {
            idx = static_cast<std::size_t>(master.uniform_int(pairs.size()));
        }
        const double loss = btt_loss_subset(params, pairs, batch, &grad);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("reward_train: non-finite loss at step " +
                                     std::to_string(step));
        }
        opt.step(params.values, grad);
        log.push_back({step, loss});
    }
    return log;
}

double ranking_accuracy(const RewardParams& params,
                        const std::vector<PreferencePair>& pairs) {
    validate_reward_params(params);
    std::size_t scored = 0;
    std::size_t correct = 0;
    for (const PreferencePair& pair : pairs) {
        if (pair.label == PairLabel::tie) continue;
        validate_pair(pair);
        const double r_a = reward_score(params, pair.sample_a);
        const double r_b = reward_score(params, pair.sample_b);
        ++scored;
        if (pair.label == PairLabel::a_better ? r_a > r_b : r_b > r_a) ++correct;
    }
    if (scored == 0) {
        throw std::invalid_argument("ranking_accuracy: no non-tie pairs to score");
    }
    return static_cast<double>(correct) / static_cast<double>(scored);
}

// ---------------------------------------------------------------------------
// Controlled distortions

DistortionKind distortion_kind_from_string(const std::string& name) {
    if (name == "reverse") return DistortionKind::Reverse;
    if (name == "resample_fast") return DistortionKind::ResampleFast;
    if (name == "resample_slow") return DistortionKind::ResampleSlow;
    if (name == "jitter") return DistortionKind::Jitter;
    if (name == "noise_inject") return DistortionKind::NoiseInject;
    throw std::invalid_argument(
        "unknown distortion kind '" + name +
        "' (expected reverse, resample_fast, resample_slow, jitter, or noise_inject)");
}

std::string to_string(DistortionKind kind) {
    switch (kind) {
        case DistortionKind::Reverse: return "reverse";
        case DistortionKind::ResampleFast: return "resample_fast";
        case DistortionKind::ResampleSlow: return "resample_slow";
        case DistortionKind::Jitter: return "jitter";
        case DistortionKind::NoiseInject: return "noise_inject";
    }
    throw std::invalid_argument("unknown distortion kind");
}

namespace {

// Copy of video with frame i taken from frame index_map[i]; per-frame
// annotations follow the same map.
LatentSequence remap_frames(const LatentSequence& video, const std::vector<int>& index_map) {
    LatentSequence out;
    out.frames = video.frames;
    out.dim = video.dim;
    out.data.resize(video.data.size());
    for (int i = 0; i < video.frames; ++i) {
        const double* src = video.frame(index_map[i]);
        std::copy(src, src + video.dim, out.data.begin() + static_cast<std::size_t>(i) * video.dim);
    }
    if (video.per_frame_t.has_value()) {
        std::vector<double> t(video.frames);
        for (int i = 0; i < video.frames; ++i) t[i] = (*video.per_frame_t)[index_map[i]];
        out.per_frame_t = std::move(t);
    }
    return out;
}

}  // namespace

LatentSequence synthesize_distortion(const LatentSequence& video, DistortionKind kind,
                                     Rng& rng) {
    validate_latent(video);
    if (video.frames < 2) {
        throw std::invalid_argument("synthesize_distortion: need at least 2 frames");
    }
    const int f = video.frames;
    std::vector<int> map(f);
    switch (kind) {
        case DistortionKind::Reverse:
            for (int i = 0; i < f; ++i) map[i] = f - 1 - i;
            return remap_frames(video, map);
        case DistortionKind::ResampleFast:
            for (int i = 0; i < f; ++i) map[i] = std::min(2 * i, f - 1);
            return remap_frames(video, map);
        case DistortionKind::ResampleSlow:
            for (int i = 0; i < f; ++i) map[i] = i / 2;
            return remap_frames(video, map);
        case DistortionKind::Jitter: {
            int idx = 0;
            for (int i = 0; i < f; ++i) {
                map[i] = idx;
                idx = std::min(idx + (i % 2 == 0 ? 2 : 1), f - 1);
            }
            return remap_frames(video, map);
        }
        case DistortionKind::NoiseInject: {
            LatentSequence out = video;
            const int span = std::max(1, f / 4);
            const int start = static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(f - span + 1)));
            for (int i = start; i < start + span; ++i) {
                double* row = out.frame(i);
                for (int k = 0; k < out.dim; ++k) row[k] += rng.normal(0.0, 0.5);
            }
            return out;
        }
    }
    throw std::invalid_argument("synthesize_distortion: unknown kind");
}

std::vector<DistortionKind> distortion_schedule(std::size_t n) {
    static constexpr DistortionKind kCycle[5] = {
        DistortionKind::Reverse, DistortionKind::ResampleFast,
        DistortionKind::ResampleSlow, DistortionKind::Jitter,
        DistortionKind::NoiseInject};
    std::vector<DistortionKind> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = kCycle[i % 5];
    return out;
}

std::vector<PreferencePair> build_auto_pairs(const std::vector<LatentSequence>& dataset,
                                             Rng& rng) {
    const std::vector<DistortionKind> kinds = distortion_schedule(dataset.size());
    const std::uint64_t nonce = rng.next_u64();
    std::vector<PreferencePair> pairs;
    pairs.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Rng child(derive_seed(nonce, i));
        PreferencePair pair;
        pair.sample_a = dataset[i];
        pair.sample_b = synthesize_distortion(dataset[i], kinds[i], child);
        pair.label = PairLabel::a_better;
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Direct preference optimization

DpoDraw sample_dpo_draw(int frames, int dim, double logit_m, double logit_scale,
                        Rng& rng) {
    if (frames < 1 || dim < 1) {
        throw std::invalid_argument("sample_dpo_draw: frames and dim must be >= 1");
    }
    DpoDraw draw;
    draw.x0 = LatentSequence::gaussian(frames, dim, rng);
    draw.t = sample_timestep_logitnormal(rng, logit_m, logit_scale);
    return draw;
}

namespace {

void check_draw(const DpoDraw& draw, const LatentSequence& shaped, const char* what) {
    if (!same_shape(draw.x0, shaped)) {
        throw std::invalid_argument(std::string("dpo_loss: ") + what +
                                    " noise must match the sample shape");
    }
    if (!all_finite(draw.x0)) {
        throw std::invalid_argument(std::string("dpo_loss: ") + what +
                                    " noise must be finite");
    }
    if (!(draw.t > 0.0) || !(draw.t < 1.0)) {
        throw std::invalid_argument(std::string("dpo_loss: ") + what +
                                    " t must lie strictly inside (0, 1)");
    }
}

// 1/2 sum((u - y)^2) for one sequence under one parameter set; optionally
// retains the residual and forward cache for a later backward pass.
double half_sse_term(const DenoiserParams& params, const LatentSequence& seq,
                     const DpoDraw& draw, int cond_id, LatentSequence* x_t_out,
                     ForwardCache* cache, LatentSequence* residual_out) {
    const std::vector<double> t_vec(seq.frames, draw.t);
    LatentSequence x_t = interpolate(seq, draw.x0, t_vec);
    const LatentSequence y = target_velocity(seq, draw.x0);
    LatentSequence u = denoiser_forward(params, x_t, t_vec, cond_id, cache);
    double acc = 0.0;
    for (std::size_t j = 0; j < u.data.size(); ++j) {
        u.data[j] -= y.data[j];  // residual u - y
        acc += u.data[j] * u.data[j];
    }
    if (!std::isfinite(acc)) {
        throw std::runtime_error("dpo_loss: non-finite regression term");
    }
    if (x_t_out != nullptr) *x_t_out = std::move(x_t);
    if (residual_out != nullptr) *residual_out = std::move(u);
    return 0.5 * acc;
}

void check_same_architecture(const DenoiserParams& model, const DenoiserParams& ref) {
    const DenoiserConfig& a = model.config;
    const DenoiserConfig& b = ref.config;
    if (a.dim != b.dim || a.hidden != b.hidden || a.max_frames != b.max_frames ||
        a.num_conds != b.num_conds) {
        throw std::invalid_argument("dpo_loss: model and reference must share architecture");
    }
}

// Core evaluation shared by the public loss and the stage-loop metrics:
// returns loss = -log sigmoid(z) and margin = sigmoid(z).
void dpo_eval(const DenoiserParams& model, const DenoiserParams& ref,
              const Triplet& triplet, double beta, const DpoDraw& draw,
              const DpoDraw* rejected_draw, std::vector<double>* grad, double& loss,
              double& margin) {
    validate_params(model);
    validate_params(ref);
    check_same_architecture(model, ref);
    validate_triplet(triplet);
    if (!std::isfinite(beta) || beta < 0.0) {
        throw std::invalid_argument("dpo_loss: beta must be finite and >= 0");
    }
    check_draw(draw, triplet.chosen, "shared");
    const DpoDraw& draw_l = rejected_draw != nullptr ? *rejected_draw : draw;
    if (rejected_draw != nullptr) check_draw(draw_l, triplet.rejected, "rejected");

    const int cond = triplet.prompt_id;
    const bool want_grad = grad != nullptr;

    LatentSequence xt_w, xt_l, res_w, res_l;
    ForwardCache cache_w, cache_l;
    const double l_model_w =
        half_sse_term(model, triplet.chosen, draw, cond, want_grad ? &xt_w : nullptr,
                      want_grad ? &cache_w : nullptr, want_grad ? &res_w : nullptr);
    const double l_model_l =
        half_sse_term(model, triplet.rejected, draw_l, cond, want_grad ? &xt_l : nullptr,
                      want_grad ? &cache_l : nullptr, want_grad ? &res_l : nullptr);
    const double l_ref_w = half_sse_term(ref, triplet.chosen, draw, cond, nullptr,
                                         nullptr, nullptr);
    const double l_ref_l = half_sse_term(ref, triplet.rejected, draw_l, cond, nullptr,
                                         nullptr, nullptr);

    const double z = -0.5 * beta * ((l_model_w - l_model_l) - (l_ref_w - l_ref_l));
    loss = softplus(-z);
    margin = sigmoid(z);

    if (want_grad) {
        const std::size_t n = model.values.size();
        const double coeff = (1.0 - margin) * 0.5 * beta;
        const std::vector<double> tw(triplet.chosen.frames, draw.t);
        const std::vector<double> tl(triplet.rejected.frames, draw_l.t);
        std::vector<double> g_w(n, 0.0), g_l(n, 0.0);
        denoiser_backward(model, xt_w, tw, cond, cache_w, res_w, g_w);
        denoiser_backward(model, xt_l, tl, cond, cache_l, res_l, g_l);
        grad->resize(n);
        for (std::size_t j = 0; j < n; ++j) (*grad)[j] = coeff * (g_w[j] - g_l[j]);
    }
}

}  // namespace

double dpo_loss(const DenoiserParams& model, const DenoiserParams& ref,
                const Triplet& triplet, double beta, const DpoDraw& draw,
                std::vector<double>* grad, const DpoDraw* rejected_draw) {
    double loss = 0.0, margin = 0.0;
    dpo_eval(model, ref, triplet, beta, draw, rejected_draw, grad, loss, margin);
    return loss;
}

std::vector<Triplet> build_triplets(const DenoiserParams& params, const ScoreSeqFn& score,
                                    const std::vector<int>& prompts, int k, int frames,
                                    int max_timestep, Rng& rng, double* mean_score) {
    validate_params(params);
    if (!score) throw std::invalid_argument("build_triplets: score function required");
    if (k < 2) throw std::invalid_argument("build_triplets: k must be >= 2");
    if (prompts.empty()) {
        throw std::invalid_argument("build_triplets: prompt list must be non-empty");
    }
    const SchedulePlan plan = ad_schedule(frames, max_timestep, 0);
    const std::uint64_t nonce = rng.next_u64();
    const int count = static_cast<int>(prompts.size());
    std::vector<Triplet> out(count);
    std::vector<double> score_sums(count, 0.0);
    std::vector<std::string> errors(count);

    parallel_for(count, [&](int p) {
        try {
            Rng child(derive_seed(nonce, static_cast<std::uint64_t>(p)));
            std::vector<LatentSequence> samples;
            std::vector<double> scores;
            samples.reserve(k);
            scores.reserve(k);
            for (int s = 0; s < k; ++s) {
                const LatentSequence x_init =
                    LatentSequence::gaussian(frames, params.config.dim, child);
                samples.push_back(euler_sample(params, plan, x_init, prompts[p]));
                scores.push_back(score(samples.back()));
                if (!std::isfinite(scores.back())) {
                    throw std::runtime_error("non-finite score for sample " +
                                             std::to_string(s));
                }
                score_sums[p] += scores.back();
            }
            int best = 0, worst = 0;
            for (int s = 1; s < k; ++s) {
                if (scores[s] > scores[best]) best = s;
                if (scores[s] < scores[worst]) worst = s;
            }
            if (best == worst) {
                best = 0;
                worst = 1;
            }
            out[p].chosen = std::move(samples[best]);
            out[p].rejected = std::move(samples[worst]);
            out[p].prompt_id = prompts[p];
        } catch (const std::exception& e) {
            errors[p] = e.what();
        }
    });
    for (int p = 0; p < count; ++p) {
        if (!errors[p].empty()) {
            throw std::runtime_error("build_triplets: prompt " + std::to_string(prompts[p]) +
                                     ": " + errors[p]);
        }
    }
    if (mean_score != nullptr) {
        double total = 0.0;
        for (double s : score_sums) total += s;
        *mean_score = total / (static_cast<double>(k) * count);
    }
    return out;
}

std::vector<Triplet> build_triplets(const DenoiserParams& params,
                                    const RewardParams& reward,
                                    const std::vector<int>& prompts, int k, int frames,
                                    int max_timestep, Rng& rng, double* mean_score) {
    validate_reward_params(reward);
    const ScoreSeqFn score = [&reward](const LatentSequence& seq) {
        return reward_score(reward, seq);
    };
    return build_triplets(params, score, prompts, k, frames, max_timestep, rng,
                          mean_score);
}

void validate_dpo_config(const DPOConfig& config) {
    if (!std::isfinite(config.beta) || config.beta <= 0.0) {
        throw std::invalid_argument("dpo config: beta must be finite and > 0");
    }
    if (config.refresh_interval < 1) {
        throw std::invalid_argument("dpo config: refresh_interval must be >= 1");
    }
    if (config.stage_count < 1) {
        throw std::invalid_argument("dpo config: stage_count must be >= 1");
    }
    if (config.samples_per_prompt < 2) {
        throw std::invalid_argument("dpo config: samples_per_prompt must be >= 2");
    }
    if (!std::isfinite(config.lr) || config.lr <= 0.0) {
        throw std::invalid_argument("dpo config: lr must be finite and > 0");
    }
    if (!(config.rms_decay >= 0.0) || config.rms_decay >= 1.0) {
        throw std::invalid_argument("dpo config: rms_decay must lie in [0, 1)");
    }
    if (!(config.rms_eps > 0.0)) {
        throw std::invalid_argument("dpo config: rms_eps must be > 0");
    }
    if (!std::isfinite(config.logit_m) || !(config.logit_scale > 0.0)) {
        throw std::invalid_argument("dpo config: invalid draw distribution");
    }
}

std::vector<DpoStageReport> dpo_stage_loop(DenoiserParams& model, const DPOConfig& config,
                                           const ScoreSeqFn& score,
                                           const std::vector<int>& prompts, int frames,
                                           int max_timestep, Rng& rng) {
    validate_dpo_config(config);
    validate_params(model);
    if (!score) throw std::invalid_argument("dpo_stage_loop: score function required");
    if (prompts.empty()) {
        throw std::invalid_argument("dpo_stage_loop: prompt list must be non-empty");
    }
    const std::size_t n = model.values.size();
    RmsOptimizer opt(n, config.lr, config.rms_decay, config.rms_eps, 0.0);
    std::vector<DpoStageReport> reports;
    reports.reserve(config.stage_count);

    for (int stage = 0; stage < config.stage_count; ++stage) {
        const DenoiserParams ref = model;  // refresh: reference <- current model
        DpoStageReport report;
        report.stage = stage;
        std::vector<Triplet> triplets =
            build_triplets(model, score, prompts, config.samples_per_prompt, frames,
                           max_timestep, rng, &report.build_mean_score);

        // Frozen draws for this stage's before/after metrics.
        std::vector<DpoDraw> metric_draws, metric_rejected;
        for (const Triplet& trip : triplets) {
            metric_draws.push_back(sample_dpo_draw(trip.chosen.frames, trip.chosen.dim,
                                                   config.logit_m, config.logit_scale,
                                                   rng));
            if (config.independent_draws) {
                metric_rejected.push_back(
                    sample_dpo_draw(trip.rejected.frames, trip.rejected.dim,
                                    config.logit_m, config.logit_scale, rng));
            }
        }
        const auto frozen_metrics = [&](double& mean_loss, double& mean_margin) {
            double loss_acc = 0.0, margin_acc = 0.0;
            for (std::size_t i = 0; i < triplets.size(); ++i) {
                double loss = 0.0, margin = 0.0;
                dpo_eval(model, ref, triplets[i], config.beta, metric_draws[i],
                         config.independent_draws ? &metric_rejected[i] : nullptr,
                         nullptr, loss, margin);
                loss_acc += loss;
                margin_acc += margin;
            }
            mean_loss = loss_acc / static_cast<double>(triplets.size());
            mean_margin = margin_acc / static_cast<double>(triplets.size());
        };
        frozen_metrics(report.initial_loss, report.initial_margin);

        std::vector<double> grad, grad_sum(n);
        for (int step = 0; step < config.refresh_interval; ++step) {
            std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
            for (const Triplet& trip : triplets) {
                const DpoDraw draw = sample_dpo_draw(trip.chosen.frames, trip.chosen.dim,
                                                     config.logit_m, config.logit_scale,
                                                     rng);
                DpoDraw rejected;
                const DpoDraw* rejected_ptr = nullptr;
                if (config.independent_draws) {
                    rejected = sample_dpo_draw(trip.rejected.frames, trip.rejected.dim,
                                               config.logit_m, config.logit_scale, rng);
                    rejected_ptr = &rejected;
                }
                dpo_loss(model, ref, trip, config.beta, draw, &grad, rejected_ptr);
                for (std::size_t j = 0; j < n; ++j) grad_sum[j] += grad[j];
            }
            const double inv = 1.0 / static_cast<double>(triplets.size());
            for (double& g : grad_sum) g *= inv;
            opt.step(model.values, grad_sum);
        }

        frozen_metrics(report.final_loss, report.final_margin);
        reports.push_back(report);
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Distribution-matching gradient estimator

std::vector<double> dmd_gradient(const std::vector<DmdSample>& samples,
                                 const ScoreVecFn& s_fake, const ScoreVecFn& s_real) {
    if (!s_fake || !s_real) {
        throw std::invalid_argument("dmd_gradient: both score functions are required");
    }
    if (samples.empty()) return {};
    const std::size_t num_params = samples.front().dx_dtheta.size();
    std::vector<double> grad(num_params, 0.0);
    for (const DmdSample& sample : samples) {
        if (sample.dx_dtheta.size() != num_params) {
            throw std::invalid_argument("dmd_gradient: inconsistent parameter count");
        }
        const std::vector<double> fake = s_fake(sample.x);
        const std::vector<double> real = s_real(sample.x);
        if (fake.size() != sample.x.size() || real.size() != sample.x.size()) {
            throw std::invalid_argument(
                "dmd_gradient: score output must match sample dimension");
        }
        for (std::size_t p = 0; p < num_params; ++p) {
            const std::vector<double>& row = sample.dx_dtheta[p];
            if (row.size() != sample.x.size()) {
                throw std::invalid_argument(
                    "dmd_gradient: sensitivity row must match sample dimension");
            }
            double acc = 0.0;
            for (std::size_t d = 0; d < row.size(); ++d) {
                acc += (fake[d] - real[d]) * row[d];
            }
            grad[p] += acc;
        }
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& g : grad) g *= inv;
    return grad;
}

// ---------------------------------------------------------------------------
// Manual annotation scoring weights

int manual_defect_weight(DefectKind kind) {
    switch (kind) {
        case DefectKind::InsufficientAmplitude: return 1;
        case DefectKind::ExcessiveAmplitude: return 2;
        case DefectKind::SubjectDistortion: return 3;
        case DefectKind::LocalDetail: return 1;
        case DefectKind::PhysicsViolation: return 3;
        case DefectKind::InteractionViolation: return 2;
        case DefectKind::UnnaturalMovement: return 1;
    }
    throw std::invalid_argument("unknown defect kind");
}

DefectKind defect_kind_from_string(const std::string& name) {
    if (name == "insufficient_amplitude") return DefectKind::InsufficientAmplitude;
    if (name == "excessive_amplitude") return DefectKind::ExcessiveAmplitude;
    if (name == "subject_distortion") return DefectKind::SubjectDistortion;
    if (name == "local_detail") return DefectKind::LocalDetail;
    if (name == "physics_violation") return DefectKind::PhysicsViolation;
    if (name == "interaction_violation") return DefectKind::InteractionViolation;
    if (name == "unnatural_movement") return DefectKind::UnnaturalMovement;
    throw std::invalid_argument("unknown defect kind '" + name + "'");
}

std::string to_string(DefectKind kind) {
    switch (kind) {
        case DefectKind::InsufficientAmplitude: return "insufficient_amplitude";
        case DefectKind::ExcessiveAmplitude: return "excessive_amplitude";
        case DefectKind::SubjectDistortion: return "subject_distortion";
        case DefectKind::LocalDetail: return "local_detail";
        case DefectKind::PhysicsViolation: return "physics_violation";
        case DefectKind::InteractionViolation: return "interaction_violation";
        case DefectKind::UnnaturalMovement: return "unnatural_movement";
    }
    throw std::invalid_argument("unknown defect kind");
}

int manual_penalty(const std::vector<std::pair<DefectKind, int>>& counts) {
    int total = 0;
    for (const auto& [kind, count] : counts) {
        if (count < 0) {
            throw std::invalid_argument("manual_penalty: counts must be non-negative");
        }
        total += manual_defect_weight(kind) * count;
    }
    return total;
}

}  // namespace dforce
