#include "dforce/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dforce/flow.hpp"
#include "dforce/parallel.hpp"

namespace dforce {

RmsOptimizer::RmsOptimizer(std::size_t n, double lr, double decay, double eps, double weight_decay)
    : lr_(lr), decay_(decay), eps_(eps), wd_(weight_decay), v_(n, 0.0) {
    if (!(lr > 0.0)) throw std::invalid_argument("RmsOptimizer: learning rate must be > 0");
    if (!(decay >= 0.0 && decay < 1.0))
        throw std::invalid_argument("RmsOptimizer: decay must be in [0,1)");
    if (!(eps > 0.0)) throw std::invalid_argument("RmsOptimizer: eps must be > 0");
}

void RmsOptimizer::step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != v_.size() || grad.size() != v_.size())
        throw std::invalid_argument("RmsOptimizer: size mismatch (state " +
                                    std::to_string(v_.size()) + ", params " +
                                    std::to_string(params.size()) + ", grad " +
                                    std::to_string(grad.size()) + ")");
    for (std::size_t k = 0; k < v_.size(); ++k) {
        const double g = grad[k];
        v_[k] = decay_ * v_[k] + (1.0 - decay_) * g * g;
        params[k] -= lr_ * g / (std::sqrt(v_[k]) + eps_) + lr_ * wd_ * params[k];
    }
}

namespace {

struct ExampleSlot {
    double ssr = 0.0;             // squared residual summed over frames and dims
    std::vector<double> grad;     // per-example gradient contribution
    int bad_frame = -1;           // first frame with a non-finite output, if any
    int bad_dim = -1;
};

}  // namespace

double fm_loss(const DenoiserParams& params, const std::vector<LatentSequence>& x1,
               const std::vector<LatentSequence>& x0, const std::vector<std::vector<double>>& t,
               const std::vector<int>& cond, std::vector<double>* grad, int threads) {
    const std::size_t B = x1.size();
    if (B == 0) throw std::invalid_argument("fm_loss: empty batch");
    if (x0.size() != B || t.size() != B || cond.size() != B)
        throw std::invalid_argument("fm_loss: batch arrays disagree (x1 " + std::to_string(B) +
                                    ", x0 " + std::to_string(x0.size()) + ", t " +
                                    std::to_string(t.size()) + ", cond " +
                                    std::to_string(cond.size()) + ")");
    const int F = x1[0].frames;
    const int D = x1[0].dim;
    for (std::size_t e = 0; e < B; ++e) {
        if (x1[e].frames != F || x1[e].dim != D || !same_shape(x1[e], x0[e]))
            throw std::invalid_argument("fm_loss: example " + std::to_string(e) +
                                        " has a mismatched shape");
        if (!all_finite(x1[e]) || !all_finite(x0[e]))
            throw std::invalid_argument("fm_loss: example " + std::to_string(e) +
                                        " has non-finite inputs");
    }

    const bool want_grad = grad != nullptr;
    const std::size_t P = params.values.size();
    std::vector<ExampleSlot> slots(B);
    const double du_scale = 2.0 / (static_cast<double>(B) * F);

    parallel_for(static_cast<int>(B), [&](int ei) {
        const std::size_t e = static_cast<std::size_t>(ei);
        ExampleSlot& slot = slots[e];
        const LatentSequence x_t = interpolate(x1[e], x0[e], t[e]);
        ForwardCache cache;
        const LatentSequence u =
            denoiser_forward(params, x_t, t[e], cond[e], want_grad ? &cache : nullptr);
        for (int i = 0; i < F && slot.bad_frame < 0; ++i) {
            const double* ui = u.frame(i);
            for (int d = 0; d < D; ++d)
                if (!std::isfinite(ui[d])) {
                    slot.bad_frame = i;
                    slot.bad_dim = d;
                    break;
                }
        }
        if (slot.bad_frame >= 0) return;
        LatentSequence r = LatentSequence::zeros(F, D);
        for (std::size_t k = 0; k < r.data.size(); ++k)
            r.data[k] = u.data[k] - (x1[e].data[k] - x0[e].data[k]);
        double ssr = 0.0;
        for (double v : r.data) ssr += v * v;
        slot.ssr = ssr;
        if (want_grad) {
            slot.grad.assign(P, 0.0);
            LatentSequence du = LatentSequence::zeros(F, D);
            for (std::size_t k = 0; k < du.data.size(); ++k) du.data[k] = du_scale * r.data[k];
            denoiser_backward(params, x_t, t[e], cond[e], cache, du, slot.grad);
        }
    }, threads);

    for (std::size_t e = 0; e < B; ++e)
        if (slots[e].bad_frame >= 0)
            throw std::runtime_error("fm_loss: non-finite prediction at example " +
                                     std::to_string(e) + ", frame " +
                                     std::to_string(slots[e].bad_frame) + ", dim " +
                                     std::to_string(slots[e].bad_dim));

    double loss = 0.0;
    for (std::size_t e = 0; e < B; ++e) loss += slots[e].ssr;
    loss /= static_cast<double>(B) * F;
    if (want_grad) {
        grad->assign(P, 0.0);
        for (std::size_t e = 0; e < B; ++e)
            for (std::size_t k = 0; k < P; ++k) (*grad)[k] += slots[e].grad[k];
    }
    return loss;
}

TrainResult train_flow(DenoiserParams& params, const std::vector<LatentSequence>& dataset,
                       const TrainConfig& cfg, const std::vector<int>* cond_ids) {
    if (dataset.empty()) throw std::invalid_argument("train_flow: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_flow: batch size must be >= 1");
    if (cfg.steps < 0) throw std::invalid_argument("train_flow: step count must be >= 0");
    const int F = dataset[0].frames;
    const int D = dataset[0].dim;
    for (std::size_t s = 0; s < dataset.size(); ++s)
        if (dataset[s].frames != F || dataset[s].dim != D)
            throw std::invalid_argument("train_flow: dataset sequence " + std::to_string(s) +
                                        " has a mismatched shape");
    if (cond_ids && cond_ids->size() != dataset.size())
        throw std::invalid_argument("train_flow: cond_ids length does not match the dataset");

    RmsOptimizer opt(params.values.size(), cfg.lr, cfg.rms_decay, cfg.rms_eps, cfg.weight_decay);
    Rng master(cfg.seed);
    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);

    TrainResult result;
    result.log.reserve(static_cast<std::size_t>(cfg.steps));
    std::vector<LatentSequence> x1(B), x0(B);
    std::vector<std::vector<double>> t(B);
    std::vector<int> cond(B, 0);
    std::vector<double> grad;
    for (int step = 0; step < cfg.steps; ++step) {
        const std::uint64_t nonce = master.next_u64();
        for (std::size_t e = 0; e < B; ++e) {
            Rng ex(derive_seed(nonce, e));
            const std::size_t idx = ex.uniform_int(dataset.size());
            const double te = sample_timestep_logitnormal(ex, cfg.logit_m, cfg.logit_scale);
            x1[e] = dataset[idx];
            x0[e] = LatentSequence::gaussian(F, D, ex);
            t[e].assign(static_cast<std::size_t>(F), te);
            cond[e] = cond_ids ? (*cond_ids)[idx] : 0;
        }
        const double loss = fm_loss(params, x1, x0, t, cond, &grad, cfg.threads);
        opt.step(params.values, grad);
        result.log.push_back({step, loss});
    }
    return result;
}

DfBatchDraw df_draw_batch(int batch_size, int frames, int dim, int max_timestep,
                          std::uint64_t nonce, const ScheduleVector* forced) {
    if (batch_size < 1) throw std::invalid_argument("df_draw_batch: batch size must be >= 1");
    if (forced && (forced->frames() != frames || forced->max_timestep != max_timestep))
        throw std::invalid_argument("df_draw_batch: forced schedule shape mismatch");
    DfBatchDraw d;
    d.schedules.reserve(batch_size);
    d.x0.reserve(batch_size);
    d.t.reserve(batch_size);
    for (int e = 0; e < batch_size; ++e) {
        const std::uint64_t child = derive_seed(nonce, static_cast<std::uint64_t>(e));
        Rng sched_rng(derive_seed(child, 0));
        Rng noise_rng(derive_seed(child, 1));
        ScheduleVector sv =
            forced ? *forced : fopp_sample(frames, max_timestep, sched_rng);
        std::vector<double> tf(static_cast<std::size_t>(frames));
        for (int i = 0; i < frames; ++i)
            tf[i] = flow_t_from_discrete(sv.timesteps[i], max_timestep);
        d.schedules.push_back(std::move(sv));
        d.x0.push_back(LatentSequence::gaussian(frames, dim, noise_rng));
        d.t.push_back(std::move(tf));
    }
    return d;
}

double df_train_step(DenoiserParams& params, RmsOptimizer& opt,
                     const std::vector<LatentSequence>& batch, int max_timestep, Rng& rng,
                     const ScheduleVector* forced, int threads, const std::vector<int>* cond) {
    if (batch.empty()) throw std::invalid_argument("df_train_step: empty batch");
    const int F = batch[0].frames;
    const int D = batch[0].dim;
    for (std::size_t e = 0; e < batch.size(); ++e)
        if (batch[e].frames != F || batch[e].dim != D)
            throw std::invalid_argument("df_train_step: example " + std::to_string(e) +
                                        " has a mismatched shape");
    if (cond && cond->size() != batch.size())
        throw std::invalid_argument("df_train_step: cond length does not match the batch");

    const std::uint64_t nonce = rng.next_u64();
    DfBatchDraw d =
        df_draw_batch(static_cast<int>(batch.size()), F, D, max_timestep, nonce, forced);
    std::vector<int> cond_ids = cond ? *cond : std::vector<int>(batch.size(), 0);
    std::vector<double> grad;
    const double loss = fm_loss(params, batch, d.x0, d.t, cond_ids, &grad, threads);
    opt.step(params.values, grad);
    return loss;
}

}  // namespace dforce
