#pragma once

#include <cstdint>
#include <vector>

#include "dforce/latent.hpp"
#include "dforce/rng.hpp"

namespace dforce {

// Synthetic sequence families with known dynamics, used both as training data
// and as oracles for measuring how far a generated continuation strays.
enum class ToyKind {
    ConstVelocityBlob,  // frame_i = start + i*velocity (+ accumulated walk noise)
    BouncingPoint,      // point reflecting elastically inside [-1,1]^D
    LinearGaussian,     // frames drawn iid N(0, noise_scale^2 I)
};

struct ToyVideoSpec {
    ToyKind kind = ToyKind::ConstVelocityBlob;
    int dim = 2;
    int frames = 8;
    // process-noise scale for the dynamic kinds; the marginal standard
    // deviation for LinearGaussian
    double noise_scale = 0.0;
    std::uint64_t seed = 0;
};

void validate_toy_spec(const ToyVideoSpec& spec);

// n sequences of spec.frames frames, deterministic given the rng state. The
// constant-velocity kind draws a velocity with a fixed positive mean component
// (magnitude 1/(frames*sqrt(D)) per dim), so forward motion is statistically
// distinguishable from reversed motion; with noise_scale = 0 its frames obey
// frame_i = frame_0 + i*velocity exactly. The bouncing point never leaves
// [-1,1]^D and reflections preserve speed.
std::vector<LatentSequence> make_toy_dataset(const ToyVideoSpec& spec, int n, Rng& rng);

// convenience overload seeding the stream from spec.seed
std::vector<LatentSequence> make_toy_dataset(const ToyVideoSpec& spec, int n);

// How far a generated sequence departs from the dynamics implied by its own
// opening: fits the oracle model to the first spec.frames frames (least-squares
// line for the constant-velocity kind, two-point state plus exact reflection
// for the bouncing kind, the zero stationary mean for the iid kind), then
// returns the mean per-frame Euclidean distance between the remaining frames
// and the oracle's extrapolation. Sequences no longer than the fit window
// score 0.
double drift_metric(const LatentSequence& generated, const ToyVideoSpec& spec);

}  // namespace dforce
