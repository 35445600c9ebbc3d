#include <doctest.h>

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dforce/rng.hpp"
#include "dforce/schedule.hpp"

using namespace dforce;

namespace {

// Odometer over all T^F timestep sequences with values in [1, T].
template <typename Fn>
void for_each_sequence(int frames, int max_t, Fn&& fn) {
    std::vector<int> seq(frames, 1);
    while (true) {
        fn(seq);
        int pos = frames - 1;
        while (pos >= 0 && seq[pos] == max_t) {
            seq[pos] = 1;
            --pos;
        }
        if (pos < 0) break;
        ++seq[pos];
    }
}

bool nondecr(const std::vector<int>& seq) {
    return std::is_sorted(seq.begin(), seq.end());
}

long long count_nondecr_bruteforce(int frames, int max_t) {
    long long n = 0;
    for_each_sequence(frames, max_t, [&](const std::vector<int>& s) {
        if (nondecr(s)) ++n;
    });
    return n;
}

}  // namespace

TEST_CASE("count tables match exhaustive enumeration for all small shapes") {
    for (int frames = 1; frames <= 5; ++frames) {
        for (int max_t = 1; max_t <= 5; ++max_t) {
            CAPTURE(frames);
            CAPTURE(max_t);
            const DPTable suffix = build_suffix_table(frames, max_t);
            const DPTable prefix = build_prefix_table(frames, max_t);

            // suffix.at(i, j): non-decreasing runs of length frames-i+1 that
            // start exactly at j; prefix.at(i, j): runs of length i that end
            // exactly at j
            for (int i = 1; i <= frames; ++i) {
                for (int j = 1; j <= max_t; ++j) {
                    long long start_at = 0;
                    for_each_sequence(frames - i + 1, max_t, [&](const std::vector<int>& s) {
                        if (s.front() == j && nondecr(s)) ++start_at;
                    });
                    long long end_at = 0;
                    for_each_sequence(i, max_t, [&](const std::vector<int>& s) {
                        if (s.back() == j && nondecr(s)) ++end_at;
                    });
                    CHECK(suffix.at(i, j) == mpz_class(static_cast<long>(start_at)));
                    CHECK(prefix.at(i, j) == mpz_class(static_cast<long>(end_at)));
                    CHECK(suffix.at(i, j) >= 1);
                    CHECK(prefix.at(i, j) >= 1);
                }
            }
        }
    }
}

TEST_CASE("non-decreasing count equals enumeration, binomial form, and table row sums") {
    for (int frames = 1; frames <= 6; ++frames) {
        for (int max_t = 1; max_t <= 6; ++max_t) {
            CAPTURE(frames);
            CAPTURE(max_t);
            const mpz_class counted = count_nondecreasing(frames, max_t);
            CHECK(counted == mpz_class(static_cast<long>(count_nondecr_bruteforce(frames, max_t))));

            mpz_class binom;
            mpz_bin_uiui(binom.get_mpz_t(), frames + max_t - 1, frames);
            CHECK(counted == binom);

            const DPTable suffix = build_suffix_table(frames, max_t);
            mpz_class row_sum = 0;
            for (int j = 1; j <= max_t; ++j) row_sum += suffix.at(1, j);
            CHECK(counted == row_sum);
        }
    }
}

TEST_CASE("frozen small-case table values") {
    {
        const DPTable s = build_suffix_table(3, 2);
        const DPTable p = build_prefix_table(3, 2);
        CHECK(s.at(1, 1) == 3);  // (1,1,1), (1,1,2), (1,2,2)
        CHECK(s.at(1, 2) == 1);  // (2,2,2)
        CHECK(p.at(3, 2) == 3);  // (1,1,2), (1,2,2), (2,2,2)
        CHECK(count_nondecreasing(3, 2) == 4);
    }
    {
        const DPTable s = build_suffix_table(2, 3);
        const DPTable p = build_prefix_table(2, 3);
        CHECK(s.at(1, 1) == 3);
        CHECK(s.at(1, 2) == 2);
        CHECK(s.at(1, 3) == 1);
        CHECK(p.at(2, 2) == 2);  // (1,2), (2,2)
        CHECK(count_unconstrained(2, 3) == 9);
    }
    CHECK(count_nondecreasing(1, 7) == 7);
}

TEST_CASE("unconstrained count at full scale is an exact power of ten") {
    const mpz_class big = count_unconstrained(16, 1000);
    std::string digits = big.get_str();
    CHECK(digits.size() == 49);
    CHECK(digits.front() == '1');
    CHECK(digits.substr(1) == std::string(48, '0'));
}

TEST_CASE("anchored draws are uniform over the valid completions") {
    struct Shape {
        int frames, max_t;
    };
    for (const Shape shape : {Shape{2, 2}, Shape{3, 2}, Shape{3, 3}}) {
        CAPTURE(shape.frames);
        CAPTURE(shape.max_t);
        FoppSampler sampler(shape.frames, shape.max_t);
        for (int f = 1; f <= shape.frames; ++f) {
            for (int t = 1; t <= shape.max_t; ++t) {
                CAPTURE(f);
                CAPTURE(t);
                // oracle: enumerate every non-decreasing sequence through (f, t)
                std::map<std::vector<int>, long long> hits;
                for_each_sequence(shape.frames, shape.max_t, [&](const std::vector<int>& s) {
                    if (nondecr(s) && s[f - 1] == t) hits[s] = 0;
                });
                const std::size_t support = hits.size();
                REQUIRE(support >= 1);

                const int draws = 20000;
                Rng rng(derive_seed(0xfeed, f * 100 + t));
                for (int d = 0; d < draws; ++d) {
                    const ScheduleVector sv = sampler.sample_given(f, t, rng);
                    REQUIRE(is_nondecreasing(sv));
                    REQUIRE(sv.timesteps[f - 1] == t);
                    auto it = hits.find(sv.timesteps);
                    REQUIRE(it != hits.end());
                    ++it->second;
                }
                double tv = 0.0;
                for (const auto& [seq, n] : hits)
                    tv += std::abs(static_cast<double>(n) / draws - 1.0 / support);
                tv *= 0.5;
                CHECK(tv < 0.05);
            }
        }
    }
}

TEST_CASE("full sampler draws valid schedules deterministically") {
    FoppSampler sampler(5, 7);
    Rng a(123), b(123), c(321);
    bool any_diff_seed_mismatch = false;
    for (int i = 0; i < 200; ++i) {
        const ScheduleVector sa = sampler.sample(a);
        const ScheduleVector sb = sampler.sample(b);
        const ScheduleVector sc = sampler.sample(c);
        CHECK(sa.timesteps == sb.timesteps);
        validate_schedule(sa);
        CHECK(is_nondecreasing(sa));
        for (int t : sa.timesteps) {
            CHECK(t >= 1);
            CHECK(t <= 7);
        }
        if (sa.timesteps != sc.timesteps) any_diff_seed_mismatch = true;
    }
    CHECK(any_diff_seed_mismatch);

    Rng one_off(9);
    const ScheduleVector sv = fopp_sample(4, 6, one_off);
    validate_schedule(sv);
    CHECK(is_nondecreasing(sv));
}

TEST_CASE("synchronous plan: equal timesteps marching down together") {
    const SchedulePlan plan = ad_schedule(3, 4, 0);
    REQUIRE(plan.length() == 4);
    const std::vector<std::vector<int>> want = {
        {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, {0, 0, 0}};
    for (int s = 0; s < 4; ++s) CHECK(plan.steps[s].timesteps == want[s]);
    validate_plan(plan);
}

TEST_CASE("fully sequential plan: one frame at a time") {
    const SchedulePlan plan = ad_schedule(2, 3, 3);
    REQUIRE(plan.length() == 6);
    // frame 2 holds at T until frame 1 reaches 0, then denoises alone
    for (int s = 0; s < 3; ++s) {
        CHECK(plan.steps[s].timesteps[0] == 2 - s);
        CHECK(plan.steps[s].timesteps[1] == 3);
    }
    for (int s = 3; s < 6; ++s) {
        CHECK(plan.steps[s].timesteps[0] == 0);
        CHECK(plan.steps[s].timesteps[1] == 5 - s);
    }
    validate_plan(plan);

    // with stagger >= T, every step changes exactly one frame
    const SchedulePlan seq = ad_schedule(3, 3, 3);
    REQUIRE(seq.length() == 9);
    std::vector<int> prev(3, 3);
    for (const ScheduleVector& sv : seq.steps) {
        int changed = 0;
        for (int i = 0; i < 3; ++i) {
            if (sv.timesteps[i] != prev[i]) ++changed;
            prev[i] = sv.timesteps[i];
        }
        CHECK(changed == 1);
    }
}

TEST_CASE("plan length closed form over a parameter grid") {
    CHECK(ad_plan_length(4, 10, 2) == 16);
    for (int frames = 1; frames <= 6; ++frames) {
        for (int max_t = 1; max_t <= 8; ++max_t) {
            for (int stagger = 0; stagger <= 10; ++stagger) {
                CAPTURE(frames);
                CAPTURE(max_t);
                CAPTURE(stagger);
                const SchedulePlan plan = ad_schedule(frames, max_t, stagger);
                CHECK(plan.length() == ad_plan_length(frames, max_t, stagger));
                validate_plan(plan);
                // every intermediate state keeps earlier frames at least as clean
                for (const ScheduleVector& sv : plan.steps) CHECK(is_nondecreasing(sv));
            }
        }
    }
}

TEST_CASE("validation errors name the offending entry") {
    ScheduleVector sv;
    sv.max_timestep = 5;
    sv.timesteps = {1, 1, 3, 5};
    CHECK_NOTHROW(validate_schedule(sv));
    CHECK(is_nondecreasing(sv));

    sv.timesteps = {2, 1};
    CHECK_NOTHROW(validate_schedule(sv));  // in-range but unordered is still well-formed
    CHECK_FALSE(is_nondecreasing(sv));

    sv.timesteps = {1, 6};
    try {
        validate_schedule(sv);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
    }

    sv.timesteps = {-1};
    CHECK_THROWS_AS(validate_schedule(sv), std::invalid_argument);
    sv.timesteps.clear();
    CHECK_THROWS_AS(validate_schedule(sv), std::invalid_argument);

    CHECK_THROWS_AS(build_suffix_table(0, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_prefix_table(3, 0), std::invalid_argument);
    CHECK_THROWS_AS(ad_schedule(2, 3, -1), std::invalid_argument);
    FoppSampler sampler(3, 3);
    Rng rng(1);
    CHECK_THROWS_AS(sampler.sample_given(0, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(sampler.sample_given(1, 4, rng), std::invalid_argument);
}
