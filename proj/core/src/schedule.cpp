#include "dforce/schedule.hpp"

#include <stdexcept>
#include <string>

namespace dforce {

namespace {

void check_dims(int frames, int max_timestep, const char* where) {
    if (frames < 1)
        throw std::invalid_argument(std::string(where) + ": frames must be >= 1, got " +
                                    std::to_string(frames));
    if (max_timestep < 1)
        throw std::invalid_argument(std::string(where) + ": max_timestep must be >= 1, got " +
                                    std::to_string(max_timestep));
}

// Turns a uniform double u in [0,1) and an exact total into an exact integer
// threshold floor(u * total) in [0, total).
mpz_class exact_threshold(double u, const mpz_class& total) {
    const mpq_class uq(u);  // doubles embed exactly into rationals
    mpq_class scaled = uq * mpq_class(total);
    mpz_class r;
    mpz_fdiv_q(r.get_mpz_t(), scaled.get_num().get_mpz_t(), scaled.get_den().get_mpz_t());
    if (r < 0) r = 0;
    if (r >= total) r = total - 1;
    return r;
}

}  // namespace

bool is_nondecreasing(const ScheduleVector& sv) {
    for (int i = 1; i < sv.frames(); ++i)
        if (sv.timesteps[i] < sv.timesteps[i - 1]) return false;
    return true;
}

void validate_schedule(const ScheduleVector& sv) {
    if (sv.max_timestep < 1)
        throw std::invalid_argument("ScheduleVector: max_timestep must be >= 1, got " +
                                    std::to_string(sv.max_timestep));
    if (sv.timesteps.empty())
        throw std::invalid_argument("ScheduleVector: timesteps must be non-empty");
    for (int i = 0; i < sv.frames(); ++i) {
        const int t = sv.timesteps[i];
        if (t < 0 || t > sv.max_timestep)
            throw std::invalid_argument("ScheduleVector: frame " + std::to_string(i + 1) +
                                        " has timestep " + std::to_string(t) +
                                        " outside [0, " + std::to_string(sv.max_timestep) + "]");
    }
}

void validate_plan(const SchedulePlan& plan) {
    check_dims(plan.frames, plan.max_timestep, "SchedulePlan");
    if (plan.steps.empty()) throw std::invalid_argument("SchedulePlan: no steps");
    std::vector<int> prev(plan.frames, plan.max_timestep);
    for (std::size_t s = 0; s < plan.steps.size(); ++s) {
        const ScheduleVector& sv = plan.steps[s];
        if (sv.frames() != plan.frames || sv.max_timestep != plan.max_timestep)
            throw std::invalid_argument("SchedulePlan: step " + std::to_string(s) +
                                        " has mismatched shape");
        validate_schedule(sv);
        for (int i = 0; i < plan.frames; ++i) {
            const int d = prev[i] - sv.timesteps[i];
            if (d < 0 || d > 1)
                throw std::invalid_argument("SchedulePlan: frame " + std::to_string(i + 1) +
                                            " changes by " + std::to_string(-d) +
                                            " at step " + std::to_string(s));
            prev[i] = sv.timesteps[i];
        }
    }
    for (int i = 0; i < plan.frames; ++i)
        if (prev[i] != 0)
            throw std::invalid_argument("SchedulePlan: frame " + std::to_string(i + 1) +
                                        " does not end at timestep 0");
}

DPTable build_suffix_table(int frames, int max_timestep) {
    check_dims(frames, max_timestep, "build_suffix_table");
    DPTable table;
    table.frames = frames;
    table.max_timestep = max_timestep;
    table.cells.assign(static_cast<std::size_t>(frames + 1) * (max_timestep + 1), mpz_class(0));
    for (int j = 1; j <= max_timestep; ++j) table.at(frames, j) = 1;
    for (int i = frames; i >= 1; --i) table.at(i, max_timestep) = 1;
    for (int i = frames - 1; i >= 1; --i)
        for (int j = max_timestep - 1; j >= 1; --j)
            table.at(i, j) = table.at(i, j + 1) + table.at(i + 1, j);
    return table;
}

DPTable build_prefix_table(int frames, int max_timestep) {
    check_dims(frames, max_timestep, "build_prefix_table");
    DPTable table;
    table.frames = frames;
    table.max_timestep = max_timestep;
    table.cells.assign(static_cast<std::size_t>(frames + 1) * (max_timestep + 1), mpz_class(0));
    for (int j = 1; j <= max_timestep; ++j) table.at(1, j) = 1;
    for (int i = 1; i <= frames; ++i) table.at(i, 1) = 1;
    for (int i = 2; i <= frames; ++i)
        for (int j = 2; j <= max_timestep; ++j)
            table.at(i, j) = table.at(i, j - 1) + table.at(i - 1, j);
    return table;
}

mpz_class count_nondecreasing(int frames, int max_timestep) {
    check_dims(frames, max_timestep, "count_nondecreasing");
    mpz_class result;
    mpz_bin_uiui(result.get_mpz_t(), static_cast<unsigned long>(frames) + max_timestep - 1,
                 static_cast<unsigned long>(frames));
    return result;
}

mpz_class count_unconstrained(int frames, int max_timestep) {
    check_dims(frames, max_timestep, "count_unconstrained");
    mpz_class result;
    mpz_ui_pow_ui(result.get_mpz_t(), static_cast<unsigned long>(max_timestep),
                  static_cast<unsigned long>(frames));
    return result;
}

FoppSampler::FoppSampler(int frames, int max_timestep)
    : frames_(frames),
      max_t_(max_timestep),
      suffix_(build_suffix_table(frames, max_timestep)),
      prefix_(build_prefix_table(frames, max_timestep)) {
    suffix_cum_.assign(frames_ + 1, {});
    prefix_cum_.assign(frames_ + 1, {});
    for (int i = 1; i <= frames_; ++i) {
        auto& sc = suffix_cum_[i];
        sc.assign(static_cast<std::size_t>(max_t_) + 2, mpz_class(0));
        for (int k = max_t_; k >= 1; --k) sc[k] = sc[k + 1] + suffix_.at(i, k);
        auto& pc = prefix_cum_[i];
        pc.assign(static_cast<std::size_t>(max_t_) + 1, mpz_class(0));
        for (int k = 1; k <= max_t_; ++k) pc[k] = pc[k - 1] + prefix_.at(i, k);
    }
}

ScheduleVector FoppSampler::sample(Rng& rng) const {
    const int f = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(frames_)));
    const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_t_)));
    return sample_given(f, t, rng);
}

ScheduleVector FoppSampler::sample_given(int frame, int timestep, Rng& rng) const {
    if (frame < 1 || frame > frames_)
        throw std::invalid_argument("FoppSampler: anchor frame " + std::to_string(frame) +
                                    " outside [1, " + std::to_string(frames_) + "]");
    if (timestep < 1 || timestep > max_t_)
        throw std::invalid_argument("FoppSampler: anchor timestep " + std::to_string(timestep) +
                                    " outside [1, " + std::to_string(max_t_) + "]");
    ScheduleVector sv;
    sv.max_timestep = max_t_;
    sv.timesteps.assign(static_cast<std::size_t>(frames_), 0);
    sv.timesteps[frame - 1] = timestep;
    // later frames: each at least its left neighbour, weighted by suffix counts;
    // smallest k in [lo, T] with cumulative weight above an exact threshold
    for (int i = frame + 1; i <= frames_; ++i) {
        const int lo = sv.timesteps[i - 2];
        const auto& cum = suffix_cum_[i];
        const mpz_class& total = cum[lo];
        const mpz_class r = exact_threshold(rng.uniform(), total);
        int a = lo, b = max_t_;
        while (a < b) {  // weight of [lo, k] is total - cum[k+1]
            const int mid = (a + b) / 2;
            if (total - cum[mid + 1] > r)
                b = mid;
            else
                a = mid + 1;
        }
        sv.timesteps[i - 1] = a;
    }
    // earlier frames: each at most its right neighbour, weighted by prefix counts
    for (int i = frame - 1; i >= 1; --i) {
        const int hi = sv.timesteps[i];
        const auto& cum = prefix_cum_[i];
        const mpz_class& total = cum[hi];
        const mpz_class r = exact_threshold(rng.uniform(), total);
        int a = 1, b = hi;
        while (a < b) {  // weight of [1, k] is cum[k]
            const int mid = (a + b) / 2;
            if (cum[mid] > r)
                b = mid;
            else
                a = mid + 1;
        }
        sv.timesteps[i - 1] = a;
    }
    return sv;
}

ScheduleVector fopp_sample(int frames, int max_timestep, Rng& rng) {
    return FoppSampler(frames, max_timestep).sample(rng);
}

SchedulePlan ad_schedule(int frames, int max_timestep, int stagger) {
    check_dims(frames, max_timestep, "ad_schedule");
    if (stagger < 0)
        throw std::invalid_argument("ad_schedule: stagger must be >= 0, got " +
                                    std::to_string(stagger));
    SchedulePlan plan;
    plan.frames = frames;
    plan.max_timestep = max_timestep;
    std::vector<int> state(frames, max_timestep);
    bool all_zero = false;
    while (!all_zero) {
        // Self-denoise is decided on the state at the start of the step (has
        // my left neighbour already finished?), while the snap value tracks
        // the neighbour's post-update timestep. This is what makes stagger 0
        // march all frames down together and stagger >= T hand over exactly
        // one step after a frame finishes.
        const std::vector<int> before = state;
        for (int i = 0; i < frames; ++i) {
            if (i == 0 || before[i - 1] == 0) {
                if (state[i] > 0) --state[i];  // self-denoise
            } else {
                state[i] = std::min(state[i - 1] + stagger, max_timestep);
            }
        }
        ScheduleVector sv;
        sv.max_timestep = max_timestep;
        sv.timesteps = state;
        plan.steps.push_back(std::move(sv));
        all_zero = true;
        for (int v : state)
            if (v != 0) {
                all_zero = false;
                break;
            }
    }
    return plan;
}

long long ad_plan_length(int frames, int max_timestep, int stagger) {
    check_dims(frames, max_timestep, "ad_plan_length");
    if (stagger < 0)
        throw std::invalid_argument("ad_plan_length: stagger must be >= 0, got " +
                                    std::to_string(stagger));
    const long long eff = std::min(stagger, max_timestep);
    return static_cast<long long>(max_timestep) + static_cast<long long>(frames - 1) * eff;
}

}  // namespace dforce
