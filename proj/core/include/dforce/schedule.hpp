#pragma once

#include <gmpxx.h>

#include <vector>

#include "dforce/rng.hpp"

// Per-frame discrete denoising timesteps. Convention throughout: a timestep
// counts remaining noise — 0 means the frame is clean, T means pure noise.
// A frame held at 0 acts as conditioning for the others.
namespace dforce {

struct ScheduleVector {
    int max_timestep = 0;        // T >= 1
    std::vector<int> timesteps;  // length F, entries in [0, T]

    int frames() const { return static_cast<int>(timesteps.size()); }
};

// true iff timesteps never decrease from one frame to the next
bool is_nondecreasing(const ScheduleVector& sv);

// throws std::invalid_argument naming the offending frame/value
void validate_schedule(const ScheduleVector& sv);

// A denoising plan: per-step timestep states, one per global update. The state
// before step 0 is implicitly all-T; the final step is the all-zero vector.
// Per frame, consecutive steps decrease by at most 1.
struct SchedulePlan {
    int frames = 0;
    int max_timestep = 0;
    std::vector<ScheduleVector> steps;

    int length() const { return static_cast<int>(steps.size()); }
};

void validate_plan(const SchedulePlan& plan);

// Count table over (frame, timestep) with exact big-integer entries.
// Rows 1..F and columns 1..T are the valid region; row/column 0 is unused
// padding so indices match the 1-based frame/timestep convention.
struct DPTable {
    int frames = 0;
    int max_timestep = 0;
    std::vector<mpz_class> cells;  // (F+1) x (T+1), row-major

    const mpz_class& at(int frame, int timestep) const {
        return cells[static_cast<std::size_t>(frame) * (max_timestep + 1) + timestep];
    }
    mpz_class& at(int frame, int timestep) {
        return cells[static_cast<std::size_t>(frame) * (max_timestep + 1) + timestep];
    }
};

// suffix.at(i, j) = number of non-decreasing sequences (t_i = j, ..., t_F)
// with values in [j, T]. Recurrence: at(i,j) = at(i,j+1) + at(i+1,j);
// boundaries at(i,T) = 1 and at(F,j) = 1.
DPTable build_suffix_table(int frames, int max_timestep);

// prefix.at(i, j) = number of non-decreasing sequences (t_1, ..., t_i = j)
// with values in [1, j]. Mirror recurrence with boundaries at(i,1) = 1 and
// at(1,j) = 1.
DPTable build_prefix_table(int frames, int max_timestep);

// number of non-decreasing timestep sequences of length F over [1, T];
// equals binomial(F + T - 1, F)
mpz_class count_nondecreasing(int frames, int max_timestep);

// number of unconstrained timestep sequences: T^F
mpz_class count_unconstrained(int frames, int max_timestep);

// Draws non-decreasing schedules by anchoring one uniformly chosen
// (frame, timestep) pair and propagating outward with visit probabilities
// proportional to the count-table entries, so that the completion is uniform
// over all valid schedules through the anchor.
class FoppSampler {
public:
    FoppSampler(int frames, int max_timestep);

    // uniform anchor (f ~ U{1..F}, t ~ U{1..T}), then complete both directions
    ScheduleVector sample(Rng& rng) const;

    // fixed anchor: frame in [1, F], timestep in [1, T]
    ScheduleVector sample_given(int frame, int timestep, Rng& rng) const;

    const DPTable& suffix_table() const { return suffix_; }
    const DPTable& prefix_table() const { return prefix_; }
    int frames() const { return frames_; }
    int max_timestep() const { return max_t_; }

private:
    int frames_ = 0;
    int max_t_ = 0;
    DPTable suffix_;
    DPTable prefix_;
    // cumulative sums per frame row, for exact inverse-CDF draws:
    // suffix_cum_[i][k] = sum over j in [k, T] of suffix.at(i, j)   (k in 1..T+1)
    // prefix_cum_[i][k] = sum over j in [1, k] of prefix.at(i, j)   (k in 0..T)
    std::vector<std::vector<mpz_class>> suffix_cum_;
    std::vector<std::vector<mpz_class>> prefix_cum_;
};

// one-off convenience around FoppSampler
ScheduleVector fopp_sample(int frames, int max_timestep, Rng& rng);

// Staggered decrement plan: a single knob s couples neighbouring frames.
// Each global step, frame 1 — and any frame whose left neighbour had already
// reached 0 before the step — lowers its own timestep by one; every other
// frame snaps to min(left neighbour + s, T) against the neighbour's
// post-update value. s = 0 is synchronous full-sequence denoising; s >= T is
// fully sequential, one frame at a time.
SchedulePlan ad_schedule(int frames, int max_timestep, int stagger);

// closed-form plan length: T + (F - 1) * min(s, T)
long long ad_plan_length(int frames, int max_timestep, int stagger);

}  // namespace dforce
