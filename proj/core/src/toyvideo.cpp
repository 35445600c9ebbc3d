#include "dforce/toyvideo.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dforce {

namespace {

// one elastic step inside [-1,1]^D: advance, then fold back across whichever
// wall was crossed, flipping that component of the velocity
void bounce_step(std::vector<double>& p, std::vector<double>& v, const std::vector<double>& kick) {
    for (std::size_t d = 0; d < p.size(); ++d) {
        double x = p[d] + v[d] + kick[d];
        while (x > 1.0 || x < -1.0) {
            if (x > 1.0)
                x = 2.0 - x;
            else
                x = -2.0 - x;
            v[d] = -v[d];
        }
        p[d] = x;
    }
}

LatentSequence make_const_velocity(const ToyVideoSpec& s, Rng& rng) {
    LatentSequence seq = LatentSequence::zeros(s.frames, s.dim);
    std::vector<double> start(s.dim), vel(s.dim), walk(s.dim, 0.0);
    const double drift = 1.0 / (s.frames * std::sqrt(static_cast<double>(s.dim)));
    const double vel_sd = 0.3 / s.frames;
    for (int d = 0; d < s.dim; ++d) start[d] = rng.normal();
    for (int d = 0; d < s.dim; ++d) vel[d] = drift + rng.normal(0.0, vel_sd);
    for (int i = 0; i < s.frames; ++i) {
        if (i > 0 && s.noise_scale > 0.0)
            for (int d = 0; d < s.dim; ++d) walk[d] += rng.normal(0.0, s.noise_scale);
        double* f = seq.frame(i);
        for (int d = 0; d < s.dim; ++d) f[d] = start[d] + i * vel[d] + walk[d];
    }
    return seq;
}

LatentSequence make_bouncing(const ToyVideoSpec& s, Rng& rng) {
    LatentSequence seq = LatentSequence::zeros(s.frames, s.dim);
    std::vector<double> p(s.dim), v(s.dim), kick(s.dim, 0.0);
    for (int d = 0; d < s.dim; ++d) p[d] = rng.uniform(-1.0, 1.0);
    for (int d = 0; d < s.dim; ++d) v[d] = rng.uniform(-3.0 / s.frames, 3.0 / s.frames);
    for (int i = 0; i < s.frames; ++i) {
        if (i > 0) {
            if (s.noise_scale > 0.0)
                for (int d = 0; d < s.dim; ++d) kick[d] = rng.normal(0.0, s.noise_scale);
            bounce_step(p, v, kick);
        }
        double* f = seq.frame(i);
        for (int d = 0; d < s.dim; ++d) f[d] = p[d];
    }
    return seq;
}

LatentSequence make_linear_gaussian(const ToyVideoSpec& s, Rng& rng) {
    LatentSequence seq = LatentSequence::zeros(s.frames, s.dim);
    for (double& v : seq.data) v = rng.normal(0.0, s.noise_scale);
    return seq;
}

// least-squares line x[d] ~ a[d] + b[d]*i over the first `window` frames
void fit_line(const LatentSequence& x, int window, std::vector<double>& a,
              std::vector<double>& b) {
    const int D = x.dim;
    a.assign(D, 0.0);
    b.assign(D, 0.0);
    if (window == 1) {
        for (int d = 0; d < D; ++d) a[d] = x.frame(0)[d];
        return;
    }
    const double ibar = 0.5 * (window - 1);
    double sxx = 0.0;
    for (int i = 0; i < window; ++i) sxx += (i - ibar) * (i - ibar);
    for (int d = 0; d < D; ++d) {
        double mean = 0.0, sxy = 0.0;
        for (int i = 0; i < window; ++i) {
            const double xi = x.frame(i)[d];
            mean += xi;
            sxy += (i - ibar) * xi;
        }
        mean /= window;
        b[d] = sxy / sxx;
        a[d] = mean - b[d] * ibar;
    }
}

}  // namespace

void validate_toy_spec(const ToyVideoSpec& spec) {
    if (spec.dim < 1)
        throw std::invalid_argument("ToyVideoSpec: dim must be >= 1, got " +
                                    std::to_string(spec.dim));
    if (spec.frames < 1)
        throw std::invalid_argument("ToyVideoSpec: frames must be >= 1, got " +
                                    std::to_string(spec.frames));
    if (!(spec.noise_scale >= 0.0))
        throw std::invalid_argument("ToyVideoSpec: noise scale must be >= 0");
}

std::vector<LatentSequence> make_toy_dataset(const ToyVideoSpec& spec, int n, Rng& rng) {
    validate_toy_spec(spec);
    if (n < 0) throw std::invalid_argument("make_toy_dataset: n must be >= 0");
    std::vector<LatentSequence> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        switch (spec.kind) {
            case ToyKind::ConstVelocityBlob: out.push_back(make_const_velocity(spec, rng)); break;
            case ToyKind::BouncingPoint: out.push_back(make_bouncing(spec, rng)); break;
            case ToyKind::LinearGaussian: out.push_back(make_linear_gaussian(spec, rng)); break;
        }
    }
    return out;
}

std::vector<LatentSequence> make_toy_dataset(const ToyVideoSpec& spec, int n) {
    Rng rng(spec.seed);
    return make_toy_dataset(spec, n, rng);
}

double drift_metric(const LatentSequence& generated, const ToyVideoSpec& spec) {
    validate_toy_spec(spec);
    validate_latent(generated);
    if (generated.dim != spec.dim)
        throw std::invalid_argument("drift_metric: sequence dim " + std::to_string(generated.dim) +
                                    " != spec dim " + std::to_string(spec.dim));
    const int window = spec.frames;
    if (generated.frames <= window) return 0.0;
    const int D = generated.dim;

    // oracle extrapolation for frames [window, end)
    std::vector<std::vector<double>> predicted;
    predicted.reserve(static_cast<std::size_t>(generated.frames - window));
    switch (spec.kind) {
        case ToyKind::ConstVelocityBlob: {
            std::vector<double> a, b;
            fit_line(generated, window, a, b);
            for (int i = window; i < generated.frames; ++i) {
                std::vector<double> row(D);
                for (int d = 0; d < D; ++d) row[d] = a[d] + b[d] * i;
                predicted.push_back(std::move(row));
            }
            break;
        }
        case ToyKind::BouncingPoint: {
            std::vector<double> p(D), v(D, 0.0);
            const double* last = generated.frame(window - 1);
            for (int d = 0; d < D; ++d) p[d] = last[d];
            if (window >= 2) {
                const double* prev = generated.frame(window - 2);
                for (int d = 0; d < D; ++d) v[d] = last[d] - prev[d];
            }
            const std::vector<double> no_kick(D, 0.0);
            for (int i = window; i < generated.frames; ++i) {
                bounce_step(p, v, no_kick);
                predicted.push_back(p);
            }
            break;
        }
        case ToyKind::LinearGaussian: {
            for (int i = window; i < generated.frames; ++i)
                predicted.emplace_back(D, 0.0);
            break;
        }
    }

    double total = 0.0;
    for (int i = window; i < generated.frames; ++i) {
        const double* f = generated.frame(i);
        const std::vector<double>& pred = predicted[static_cast<std::size_t>(i - window)];
        double sq = 0.0;
        for (int d = 0; d < D; ++d) {
            const double diff = f[d] - pred[d];
            sq += diff * diff;
        }
        total += std::sqrt(sq);
    }
    return total / (generated.frames - window);
}

}  // namespace dforce
