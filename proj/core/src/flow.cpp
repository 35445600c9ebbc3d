#include "dforce/flow.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dforce {

LatentSequence LatentSequence::zeros(int frames, int dim) {
    LatentSequence seq;
    seq.frames = frames;
    seq.dim = dim;
    seq.data.assign(static_cast<std::size_t>(frames) * dim, 0.0);
    return seq;
}

LatentSequence LatentSequence::gaussian(int frames, int dim, Rng& rng) {
    LatentSequence seq = zeros(frames, dim);
    for (double& v : seq.data) v = rng.normal();
    return seq;
}

void validate_latent(const LatentSequence& seq) {
    if (seq.frames < 1)
        throw std::invalid_argument("LatentSequence: frames must be >= 1, got " +
                                    std::to_string(seq.frames));
    if (seq.dim < 1)
        throw std::invalid_argument("LatentSequence: dim must be >= 1, got " +
                                    std::to_string(seq.dim));
    if (seq.data.size() != static_cast<std::size_t>(seq.frames) * seq.dim)
        throw std::invalid_argument("LatentSequence: data size " +
                                    std::to_string(seq.data.size()) + " does not match " +
                                    std::to_string(seq.frames) + "x" + std::to_string(seq.dim));
    if (seq.per_frame_t) {
        if (seq.per_frame_t->size() != static_cast<std::size_t>(seq.frames))
            throw std::invalid_argument("LatentSequence: per_frame_t length " +
                                        std::to_string(seq.per_frame_t->size()) +
                                        " does not match frames " + std::to_string(seq.frames));
        for (int i = 0; i < seq.frames; ++i) {
            const double t = (*seq.per_frame_t)[i];
            if (!(t >= 0.0 && t <= 1.0))
                throw std::invalid_argument("LatentSequence: per_frame_t[" + std::to_string(i) +
                                            "] = " + std::to_string(t) + " outside [0,1]");
        }
    }
}

bool same_shape(const LatentSequence& a, const LatentSequence& b) {
    return a.frames == b.frames && a.dim == b.dim;
}

bool all_finite(const LatentSequence& seq) {
    for (double v : seq.data)
        if (!std::isfinite(v)) return false;
    return true;
}

LatentSequence interpolate(const LatentSequence& x1, const LatentSequence& x0,
                           const std::vector<double>& t) {
    if (!same_shape(x1, x0))
        throw std::invalid_argument("interpolate: x1 is " + std::to_string(x1.frames) + "x" +
                                    std::to_string(x1.dim) + " but x0 is " +
                                    std::to_string(x0.frames) + "x" + std::to_string(x0.dim));
    if (t.size() != static_cast<std::size_t>(x1.frames))
        throw std::invalid_argument("interpolate: t has length " + std::to_string(t.size()) +
                                    ", need one entry per frame (" + std::to_string(x1.frames) +
                                    ")");
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!(t[i] >= 0.0 && t[i] <= 1.0))
            throw std::invalid_argument("interpolate: t[" + std::to_string(i) + "] = " +
                                        std::to_string(t[i]) + " outside [0,1]");
    LatentSequence out = LatentSequence::zeros(x1.frames, x1.dim);
    for (int i = 0; i < x1.frames; ++i) {
        const double ti = t[i];
        const double* a = x1.frame(i);
        const double* b = x0.frame(i);
        double* o = out.frame(i);
        for (int d = 0; d < x1.dim; ++d) o[d] = ti * a[d] + (1.0 - ti) * b[d];
    }
    return out;
}

LatentSequence target_velocity(const LatentSequence& x1, const LatentSequence& x0) {
    if (!same_shape(x1, x0))
        throw std::invalid_argument("target_velocity: x1 is " + std::to_string(x1.frames) + "x" +
                                    std::to_string(x1.dim) + " but x0 is " +
                                    std::to_string(x0.frames) + "x" + std::to_string(x0.dim));
    LatentSequence out = LatentSequence::zeros(x1.frames, x1.dim);
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = x1.data[k] - x0.data[k];
    return out;
}

double sample_timestep_logitnormal(Rng& rng, double m, double sigma_ln) {
    if (!(sigma_ln > 0.0))
        throw std::invalid_argument("sample_timestep_logitnormal: scale must be > 0, got " +
                                    std::to_string(sigma_ln));
    const double z = rng.normal(m, sigma_ln);
    return 1.0 / (1.0 + std::exp(-z));
}

double gaussian_velocity_coeff(double t, double sigma1) {
    const double s2 = sigma1 * sigma1;
    const double num = t * s2 - (1.0 - t);
    const double den = t * t * s2 + (1.0 - t) * (1.0 - t);
    return num / den;
}

std::vector<double> closed_form_velocity_gaussian(std::span<const double> x_t, double t,
                                                  double sigma1) {
    const double c = gaussian_velocity_coeff(t, sigma1);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = c * x_t[i];
    return out;
}

}  // namespace dforce
