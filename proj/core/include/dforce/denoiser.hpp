#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dforce/latent.hpp"
#include "dforce/rng.hpp"

namespace dforce {

// Shape of the per-frame velocity regressor: a two-hidden-layer residual MLP
// over each frame vector, with additive embeddings for the frame's continuous
// timestep (fixed sinusoidal), its position in the window (learned), a
// conditioning id (learned), and a projection of the mean of the preceding
// frames (the causal context path).
struct DenoiserConfig {
    int dim = 2;         // frame vector dimension D
    int hidden = 64;     // width H of the trunk
    int max_frames = 8;  // capacity of the position table (window length)
    int num_conds = 1;   // number of conditioning ids
};

// Byte-stable flat layout so checkpoints can serialize the buffer directly:
//   w_in  : H x D    b_in : H
//   w_ctx : H x D
//   pos   : max_frames x H
//   cond  : num_conds x H
//   w1    : H x H    b1   : H
//   w2    : H x H    b2   : H
//   w_out : D x H    b_out: D
struct ParamLayout {
    std::size_t w_in = 0, b_in = 0, w_ctx = 0, pos = 0, cond = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w_out = 0, b_out = 0;
    std::size_t total = 0;
};

ParamLayout make_layout(const DenoiserConfig& config);
std::size_t param_count(const DenoiserConfig& config);

struct DenoiserParams {
    DenoiserConfig config;
    std::vector<double> values;  // param_count(config) entries, layout above

    double* at(std::size_t offset) { return values.data() + offset; }
    const double* at(std::size_t offset) const { return values.data() + offset; }
};

// Gaussian fan-in-scaled weights, zero biases, small embeddings; draws happen
// in layout order so the result is reproducible from the rng seed alone.
DenoiserParams init_denoiser(const DenoiserConfig& config, Rng& rng);

// throws std::invalid_argument when values.size() disagrees with config or any
// entry is non-finite
void validate_params(const DenoiserParams& params);

// Fixed sinusoidal features of a continuous timestep: sin/cos pairs at
// frequencies log-spaced over [1, 1000], plus a bare-t slot when H is odd.
void timestep_embedding(double t, int hidden, double* out);

// Reusable pooling state for a window whose first `frozen_frames` frames are
// known not to change between evaluations: prefix_sum holds running per-dim
// sums of frames [0, i) for i = 0..frozen_frames.
struct ContextMemo {
    int frozen_frames = 0;
    std::vector<double> prefix_sum;  // (frozen_frames + 1) x D, row 0 all zero
};

ContextMemo build_context_memo(const LatentSequence& x, int frozen_frames);

// ctx row i = mean of frames [0, i); row 0 is zero. Accumulates left to right
// in a fixed order, continuing from memo->prefix_sum when supplied, so memoized
// and from-scratch results are bit-identical.
void causal_context(const LatentSequence& x, std::vector<double>& ctx,
                    const ContextMemo* memo = nullptr);

// Per-frame activations retained for the analytic backward pass.
struct FrameCache {
    std::vector<double> ctx, h0, z1, z2, h1;
};
struct ForwardCache {
    std::vector<FrameCache> frames;
};

// Predicted velocity for every frame of the window. t_flow[i] is frame i's
// interpolation parameter (1 = clean). cache may be null when no backward pass
// follows; ctx_override, when given, replaces the internally computed pooled
// context (frames x dim, row-major).
LatentSequence denoiser_forward(const DenoiserParams& params, const LatentSequence& x,
                                const std::vector<double>& t_flow, int cond_id,
                                ForwardCache* cache = nullptr,
                                const std::vector<double>* ctx_override = nullptr);

// Accumulates d(scalar loss)/d(params) into grad (param_count entries) given
// du = d(loss)/d(output). Inputs must match the forward call that filled cache.
void denoiser_backward(const DenoiserParams& params, const LatentSequence& x,
                       const std::vector<double>& t_flow, int cond_id,
                       const ForwardCache& cache, const LatentSequence& du,
                       std::vector<double>& grad);

}  // namespace dforce
