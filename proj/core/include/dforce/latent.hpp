#pragma once

#include <optional>
#include <vector>

#include "dforce/rng.hpp"

namespace dforce {

// A fixed-length sequence of real-valued frame vectors, optionally annotated
// with each frame's continuous noise level in [0,1] (0 = clean).
struct LatentSequence {
    int frames = 0;
    int dim = 0;
    std::vector<double> data;  // frames * dim, frame-major
    std::optional<std::vector<double>> per_frame_t;

    double* frame(int i) { return data.data() + static_cast<std::size_t>(i) * dim; }
    const double* frame(int i) const { return data.data() + static_cast<std::size_t>(i) * dim; }

    static LatentSequence zeros(int frames, int dim);
    static LatentSequence gaussian(int frames, int dim, Rng& rng);  // iid standard normal
};

// throws std::invalid_argument on bad shape or out-of-range annotations
void validate_latent(const LatentSequence& seq);

bool same_shape(const LatentSequence& a, const LatentSequence& b);

bool all_finite(const LatentSequence& seq);

}  // namespace dforce
