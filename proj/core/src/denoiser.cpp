#include "dforce/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dforce/linalg.hpp"

namespace dforce {

namespace {

void check_config(const DenoiserConfig& c) {
    if (c.dim < 1 || c.hidden < 1 || c.max_frames < 1 || c.num_conds < 1)
        throw std::invalid_argument("DenoiserConfig: dim, hidden, max_frames, num_conds must all be >= 1");
}

}  // namespace

ParamLayout make_layout(const DenoiserConfig& c) {
    check_config(c);
    const std::size_t D = static_cast<std::size_t>(c.dim);
    const std::size_t H = static_cast<std::size_t>(c.hidden);
    ParamLayout l;
    std::size_t off = 0;
    l.w_in = off;
    off += H * D;
    l.b_in = off;
    off += H;
    l.w_ctx = off;
    off += H * D;
    l.pos = off;
    off += static_cast<std::size_t>(c.max_frames) * H;
    l.cond = off;
    off += static_cast<std::size_t>(c.num_conds) * H;
    l.w1 = off;
    off += H * H;
    l.b1 = off;
    off += H;
    l.w2 = off;
    off += H * H;
    l.b2 = off;
    off += H;
    l.w_out = off;
    off += D * H;
    l.b_out = off;
    off += D;
    l.total = off;
    return l;
}

std::size_t param_count(const DenoiserConfig& c) { return make_layout(c).total; }

DenoiserParams init_denoiser(const DenoiserConfig& c, Rng& rng) {
    const ParamLayout l = make_layout(c);
    DenoiserParams p;
    p.config = c;
    p.values.assign(l.total, 0.0);
    const double in_sd = 1.0 / std::sqrt(static_cast<double>(c.dim));
    const double hid_sd = 1.0 / std::sqrt(static_cast<double>(c.hidden));
    auto fill = [&](std::size_t off, std::size_t n, double sd) {
        for (std::size_t k = 0; k < n; ++k) p.values[off + k] = rng.normal(0.0, sd);
    };
    const std::size_t D = static_cast<std::size_t>(c.dim);
    const std::size_t H = static_cast<std::size_t>(c.hidden);
    fill(l.w_in, H * D, in_sd);
    // b_in stays zero
    fill(l.w_ctx, H * D, in_sd);
    fill(l.pos, static_cast<std::size_t>(c.max_frames) * H, 0.1);
    fill(l.cond, static_cast<std::size_t>(c.num_conds) * H, 0.1);
    fill(l.w1, H * H, hid_sd);
    fill(l.w2, H * H, hid_sd);
    fill(l.w_out, D * H, hid_sd);
    return p;
}

void validate_params(const DenoiserParams& p) {
    const std::size_t want = param_count(p.config);
    if (p.values.size() != want)
        throw std::invalid_argument("DenoiserParams: have " + std::to_string(p.values.size()) +
                                    " values, layout needs " + std::to_string(want));
    for (std::size_t k = 0; k < p.values.size(); ++k)
        if (!std::isfinite(p.values[k]))
            throw std::invalid_argument("DenoiserParams: non-finite value at index " +
                                        std::to_string(k));
}

void timestep_embedding(double t, int hidden, double* out) {
    const int pairs = hidden / 2;
    for (int k = 0; k < pairs; ++k) {
        const double frac = (pairs > 1) ? static_cast<double>(k) / (pairs - 1) : 0.0;
        const double freq = std::exp(frac * std::log(1000.0));
        const double angle = t * freq;
        out[2 * k] = std::sin(angle);
        out[2 * k + 1] = std::cos(angle);
    }
    if (hidden % 2 == 1) out[hidden - 1] = t;
}

ContextMemo build_context_memo(const LatentSequence& x, int frozen_frames) {
    if (frozen_frames < 0 || frozen_frames > x.frames)
        throw std::invalid_argument("build_context_memo: frozen_frames " +
                                    std::to_string(frozen_frames) + " outside [0, " +
                                    std::to_string(x.frames) + "]");
    ContextMemo memo;
    memo.frozen_frames = frozen_frames;
    memo.prefix_sum.assign(static_cast<std::size_t>(frozen_frames + 1) * x.dim, 0.0);
    for (int i = 0; i < frozen_frames; ++i) {
        const double* prev = memo.prefix_sum.data() + static_cast<std::size_t>(i) * x.dim;
        double* cur = memo.prefix_sum.data() + static_cast<std::size_t>(i + 1) * x.dim;
        const double* f = x.frame(i);
        for (int d = 0; d < x.dim; ++d) cur[d] = prev[d] + f[d];
    }
    return memo;
}

void causal_context(const LatentSequence& x, std::vector<double>& ctx, const ContextMemo* memo) {
    const int D = x.dim;
    ctx.assign(static_cast<std::size_t>(x.frames) * D, 0.0);
    std::vector<double> run(D, 0.0);
    int start = 0;
    if (memo) {
        if (memo->frozen_frames > x.frames ||
            memo->prefix_sum.size() != static_cast<std::size_t>(memo->frozen_frames + 1) * D)
            throw std::invalid_argument("causal_context: memo does not match the window shape");
        start = memo->frozen_frames;
        const double* top =
            memo->prefix_sum.data() + static_cast<std::size_t>(memo->frozen_frames) * D;
        for (int d = 0; d < D; ++d) run[d] = top[d];
        for (int i = 1; i <= memo->frozen_frames && i < x.frames; ++i) {
            const double* sum = memo->prefix_sum.data() + static_cast<std::size_t>(i) * D;
            double* row = ctx.data() + static_cast<std::size_t>(i) * D;
            for (int d = 0; d < D; ++d) row[d] = sum[d] / i;
        }
    }
    for (int i = start; i < x.frames; ++i) {
        if (i > 0) {
            double* row = ctx.data() + static_cast<std::size_t>(i) * D;
            for (int d = 0; d < D; ++d) row[d] = run[d] / i;
        }
        const double* f = x.frame(i);
        for (int d = 0; d < D; ++d) run[d] += f[d];
    }
}

namespace {

void check_forward_args(const DenoiserParams& p, const LatentSequence& x,
                        const std::vector<double>& t_flow, int cond_id) {
    const DenoiserConfig& c = p.config;
    if (p.values.size() != param_count(c))
        throw std::invalid_argument("denoiser: parameter buffer does not match config");
    if (x.dim != c.dim)
        throw std::invalid_argument("denoiser: window dim " + std::to_string(x.dim) +
                                    " != model dim " + std::to_string(c.dim));
    if (x.frames < 1 || x.frames > c.max_frames)
        throw std::invalid_argument("denoiser: window has " + std::to_string(x.frames) +
                                    " frames, position table holds " +
                                    std::to_string(c.max_frames));
    if (t_flow.size() != static_cast<std::size_t>(x.frames))
        throw std::invalid_argument("denoiser: t_flow length " + std::to_string(t_flow.size()) +
                                    " != frames " + std::to_string(x.frames));
    for (std::size_t i = 0; i < t_flow.size(); ++i)
        if (!(t_flow[i] >= 0.0 && t_flow[i] <= 1.0))
            throw std::invalid_argument("denoiser: t_flow[" + std::to_string(i) + "] = " +
                                        std::to_string(t_flow[i]) + " outside [0,1]");
    if (cond_id < 0 || cond_id >= c.num_conds)
        throw std::invalid_argument("denoiser: cond id " + std::to_string(cond_id) +
                                    " outside [0, " + std::to_string(c.num_conds) + ")");
}

}  // namespace

LatentSequence denoiser_forward(const DenoiserParams& p, const LatentSequence& x,
                                const std::vector<double>& t_flow, int cond_id,
                                ForwardCache* cache, const std::vector<double>* ctx_override) {
    check_forward_args(p, x, t_flow, cond_id);
    const DenoiserConfig& c = p.config;
    const ParamLayout l = make_layout(c);
    const int D = c.dim;
    const int H = c.hidden;

    std::vector<double> ctx_local;
    const std::vector<double>* ctx = ctx_override;
    if (!ctx) {
        causal_context(x, ctx_local);
        ctx = &ctx_local;
    }
    if (ctx->size() != static_cast<std::size_t>(x.frames) * D)
        throw std::invalid_argument("denoiser: context block has wrong shape");

    if (cache) cache->frames.resize(x.frames);
    LatentSequence u = LatentSequence::zeros(x.frames, D);

    std::vector<double> te(H), h0(H), a1(H), z1(H), a2(H), z2(H), h1(H);
    for (int i = 0; i < x.frames; ++i) {
        const double* xi = x.frame(i);
        const double* ci = ctx->data() + static_cast<std::size_t>(i) * D;
        timestep_embedding(t_flow[i], H, te.data());

        la::matvec(p.at(l.w_in), xi, h0.data(), H, D);
        la::matvec_add(p.at(l.w_ctx), ci, h0.data(), H, D);
        const double* pos = p.at(l.pos) + static_cast<std::size_t>(i) * H;
        const double* cnd = p.at(l.cond) + static_cast<std::size_t>(cond_id) * H;
        const double* b_in = p.at(l.b_in);
        for (int k = 0; k < H; ++k) h0[k] += b_in[k] + pos[k] + cnd[k] + te[k];

        la::matvec(p.at(l.w1), h0.data(), a1.data(), H, H);
        const double* b1 = p.at(l.b1);
        for (int k = 0; k < H; ++k) z1[k] = std::tanh(a1[k] + b1[k]);

        la::matvec(p.at(l.w2), z1.data(), a2.data(), H, H);
        const double* b2 = p.at(l.b2);
        for (int k = 0; k < H; ++k) z2[k] = std::tanh(a2[k] + b2[k]);

        for (int k = 0; k < H; ++k) h1[k] = h0[k] + z2[k];

        la::matvec(p.at(l.w_out), h1.data(), u.frame(i), D, H);
        const double* b_out = p.at(l.b_out);
        double* ui = u.frame(i);
        for (int d = 0; d < D; ++d) ui[d] += b_out[d];

        if (cache) {
            FrameCache& fc = cache->frames[i];
            fc.ctx.assign(ci, ci + D);
            fc.h0 = h0;
            fc.z1 = z1;
            fc.z2 = z2;
            fc.h1 = h1;
        }
    }
    return u;
}

void denoiser_backward(const DenoiserParams& p, const LatentSequence& x,
                       const std::vector<double>& t_flow, int cond_id, const ForwardCache& cache,
                       const LatentSequence& du, std::vector<double>& grad) {
    check_forward_args(p, x, t_flow, cond_id);
    const DenoiserConfig& c = p.config;
    const ParamLayout l = make_layout(c);
    const int D = c.dim;
    const int H = c.hidden;
    if (cache.frames.size() != static_cast<std::size_t>(x.frames))
        throw std::invalid_argument("denoiser_backward: cache holds " +
                                    std::to_string(cache.frames.size()) + " frames, window has " +
                                    std::to_string(x.frames));
    if (du.frames != x.frames || du.dim != D)
        throw std::invalid_argument("denoiser_backward: du shape mismatch");
    if (grad.size() != p.values.size())
        throw std::invalid_argument("denoiser_backward: grad buffer has wrong size");

    std::vector<double> dh1(H), dh0(H), da2(H), dz1(H), da1(H);
    for (int i = 0; i < x.frames; ++i) {
        const FrameCache& fc = cache.frames[i];
        const double* dui = du.frame(i);

        la::outer_add(grad.data() + l.w_out, dui, fc.h1.data(), D, H);
        for (int d = 0; d < D; ++d) grad[l.b_out + d] += dui[d];
        std::fill(dh1.begin(), dh1.end(), 0.0);
        la::matvec_t_add(p.at(l.w_out), dui, dh1.data(), D, H);

        // residual head: u depends on h1 = h0 + z2
        for (int k = 0; k < H; ++k) da2[k] = dh1[k] * (1.0 - fc.z2[k] * fc.z2[k]);
        la::outer_add(grad.data() + l.w2, da2.data(), fc.z1.data(), H, H);
        for (int k = 0; k < H; ++k) grad[l.b2 + k] += da2[k];
        std::fill(dz1.begin(), dz1.end(), 0.0);
        la::matvec_t_add(p.at(l.w2), da2.data(), dz1.data(), H, H);

        for (int k = 0; k < H; ++k) da1[k] = dz1[k] * (1.0 - fc.z1[k] * fc.z1[k]);
        la::outer_add(grad.data() + l.w1, da1.data(), fc.h0.data(), H, H);
        for (int k = 0; k < H; ++k) grad[l.b1 + k] += da1[k];

        dh0 = dh1;
        la::matvec_t_add(p.at(l.w1), da1.data(), dh0.data(), H, H);

        const double* xi = x.frame(i);
        la::outer_add(grad.data() + l.w_in, dh0.data(), xi, H, D);
        la::outer_add(grad.data() + l.w_ctx, dh0.data(), fc.ctx.data(), H, D);
        double* gpos = grad.data() + l.pos + static_cast<std::size_t>(i) * H;
        double* gcnd = grad.data() + l.cond + static_cast<std::size_t>(cond_id) * H;
        double* gbin = grad.data() + l.b_in;
        for (int k = 0; k < H; ++k) {
            gbin[k] += dh0[k];
            gpos[k] += dh0[k];
            gcnd[k] += dh0[k];
        }
    }
}

}  // namespace dforce
