#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dforce/flow.hpp"
#include "dforce/latent.hpp"
#include "dforce/rng.hpp"

using namespace dforce;

namespace {

LatentSequence random_latent(int frames, int dim, std::uint64_t seed) {
    Rng rng(seed);
    return LatentSequence::gaussian(frames, dim, rng);
}

}  // namespace

TEST_CASE("interpolate returns the endpoints exactly") {
    const LatentSequence x1 = random_latent(4, 3, 11);
    const LatentSequence x0 = random_latent(4, 3, 12);
    const std::vector<double> zeros(4, 0.0), ones(4, 1.0);

    const LatentSequence at0 = interpolate(x1, x0, zeros);
    const LatentSequence at1 = interpolate(x1, x0, ones);
    for (std::size_t k = 0; k < x0.data.size(); ++k) {
        CHECK(at0.data[k] == x0.data[k]);
        CHECK(at1.data[k] == x1.data[k]);
    }
}

TEST_CASE("interpolate matches direct arithmetic on a scalar frame") {
    LatentSequence x1 = LatentSequence::zeros(1, 1);
    LatentSequence x0 = LatentSequence::zeros(1, 1);
    x1.data[0] = 2.0;
    x0.data[0] = 0.0;
    const LatentSequence mid = interpolate(x1, x0, {0.25});
    CHECK(mid.data[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("interpolate is affine in each frame's parameter") {
    const LatentSequence x1 = random_latent(3, 5, 21);
    const LatentSequence x0 = random_latent(3, 5, 22);
    const std::vector<double> ta = {0.1, 0.4, 0.9};
    const std::vector<double> tb = {0.7, 0.2, 0.5};
    std::vector<double> tm(3);
    for (int i = 0; i < 3; ++i) tm[i] = 0.5 * (ta[i] + tb[i]);

    const LatentSequence a = interpolate(x1, x0, ta);
    const LatentSequence b = interpolate(x1, x0, tb);
    const LatentSequence m = interpolate(x1, x0, tm);
    for (std::size_t k = 0; k < m.data.size(); ++k)
        CHECK(m.data[k] == doctest::Approx(0.5 * (a.data[k] + b.data[k])).epsilon(1e-12));
}

TEST_CASE("interpolate rejects mismatched shapes and out-of-range parameters") {
    const LatentSequence x1 = random_latent(3, 2, 31);
    const LatentSequence other = random_latent(3, 4, 32);
    const LatentSequence shorter = random_latent(2, 2, 33);
    const std::vector<double> t3(3, 0.5);

    CHECK_THROWS_AS(interpolate(x1, other, t3), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(x1, shorter, t3), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(x1, x1, std::vector<double>(2, 0.5)), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(x1, x1, std::vector<double>{0.5, 1.5, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(interpolate(x1, x1, std::vector<double>{0.5, -0.1, 0.5}),
                    std::invalid_argument);
}

TEST_CASE("target_velocity is the frame-wise difference") {
    SUBCASE("identical inputs give the zero field") {
        const LatentSequence x = random_latent(4, 3, 41);
        const LatentSequence v = target_velocity(x, x);
        for (double value : v.data) CHECK(value == 0.0);
    }
    SUBCASE("matches direct arithmetic") {
        LatentSequence x1 = LatentSequence::zeros(1, 2);
        LatentSequence x0 = LatentSequence::zeros(1, 2);
        x1.data = {3.0, 1.0};
        x0.data = {1.0, 1.0};
        const LatentSequence v = target_velocity(x1, x0);
        CHECK(v.data[0] == 2.0);
        CHECK(v.data[1] == 0.0);
    }
    SUBCASE("anti-symmetry holds exactly") {
        const LatentSequence a = random_latent(5, 4, 42);
        const LatentSequence b = random_latent(5, 4, 43);
        const LatentSequence ab = target_velocity(a, b);
        const LatentSequence ba = target_velocity(b, a);
        for (std::size_t k = 0; k < ab.data.size(); ++k) CHECK(ab.data[k] == -ba.data[k]);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(target_velocity(random_latent(2, 2, 44), random_latent(2, 3, 45)),
                        std::invalid_argument);
    }
}

TEST_CASE("logit-normal timesteps: range, median, determinism") {
    const int n = 100000;
    Rng rng(777);
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) {
        draws[i] = sample_timestep_logitnormal(rng, 0.0, 1.0);
        CHECK(draws[i] > 0.0);
        CHECK(draws[i] < 1.0);
    }
    std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
    CHECK(std::abs(draws[n / 2] - 0.5) < 0.01);

    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i)
        CHECK(sample_timestep_logitnormal(a, 0.3, 0.7) == sample_timestep_logitnormal(b, 0.3, 0.7));

    Rng c(99), d(100);
    bool any_diff = false;
    for (int i = 0; i < 10; ++i)
        any_diff |= sample_timestep_logitnormal(c, 0.0, 1.0) != sample_timestep_logitnormal(d, 0.0, 1.0);
    CHECK(any_diff);

    Rng e(1);
    CHECK_THROWS_AS(sample_timestep_logitnormal(e, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sample_timestep_logitnormal(e, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("a positive location shifts the timestep law above one half") {
    Rng rng(555);
    int above = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i)
        if (sample_timestep_logitnormal(rng, 2.0, 1.0) > 0.5) ++above;
    CHECK(above > n * 0.9);  // Phi(2) ~ 0.977 of the mass lies above 0.5
}

TEST_CASE("discrete noise levels map onto the unit interval with endpoints swapped") {
    CHECK(flow_t_from_discrete(0, 10) == 1.0);
    CHECK(flow_t_from_discrete(10, 10) == 0.0);
    CHECK(flow_t_from_discrete(5, 10) == 0.5);
    CHECK(flow_t_from_discrete(1, 4) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("conditional-mean velocity coefficient: closed-form spot values") {
    CHECK(gaussian_velocity_coeff(0.5, 1.0) == 0.0);
    CHECK(gaussian_velocity_coeff(1.0, 2.0) == 1.0);   // clean end: (sigma1^2)/(sigma1^2)
    CHECK(gaussian_velocity_coeff(0.0, 2.0) == -1.0);  // noise end: -(1)/(1)
    // t=0.2, sigma1=2: numerator 0.2*4 - 0.8 = 0
    CHECK(gaussian_velocity_coeff(0.2, 2.0) == doctest::Approx(0.0).epsilon(1e-15));
    // t=0.5, sigma1=2: (2 - 0.5) / (1 + 0.25)
    CHECK(gaussian_velocity_coeff(0.5, 2.0) == doctest::Approx(1.2).epsilon(1e-15));

    const std::vector<double> x_t = {1.0, -2.0, 0.5};
    const std::vector<double> v = closed_form_velocity_gaussian(x_t, 0.5, 2.0);
    REQUIRE(v.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(v[i] == doctest::Approx(1.2 * x_t[i]).epsilon(1e-15));

    const std::vector<double> zero_in = {0.0, 0.0};
    for (double value : closed_form_velocity_gaussian(zero_in, 0.3, 1.7)) CHECK(value == 0.0);
}

TEST_CASE("conditional-mean coefficient matches Monte Carlo regression of v on x_t") {
    const int n = 1000000;
    const struct {
        double t, sigma1;
    } cases[] = {{0.5, 1.0}, {0.7, 1.5}, {0.9, 1.0}, {0.3, 2.0}};
    for (const auto& c : cases) {
        CAPTURE(c.t);
        CAPTURE(c.sigma1);
        Rng rng(static_cast<std::uint64_t>(c.t * 1000 + c.sigma1 * 7));
        double sxy = 0.0, sxx = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x1 = rng.normal(0.0, c.sigma1);
            const double x0 = rng.normal();
            const double xt = c.t * x1 + (1.0 - c.t) * x0;
            const double v = x1 - x0;
            sxy += v * xt;
            sxx += xt * xt;
        }
        const double beta = sxy / sxx;
        CHECK(std::abs(beta - gaussian_velocity_coeff(c.t, c.sigma1)) < 0.01);
    }
}

TEST_CASE("latent validation catches bad shapes and annotations") {
    LatentSequence ok = LatentSequence::zeros(2, 3);
    CHECK_NOTHROW(validate_latent(ok));
    ok.per_frame_t = std::vector<double>{0.0, 1.0};
    CHECK_NOTHROW(validate_latent(ok));

    LatentSequence bad = ok;
    bad.per_frame_t = std::vector<double>{0.5};
    CHECK_THROWS_AS(validate_latent(bad), std::invalid_argument);
    bad.per_frame_t = std::vector<double>{0.5, 1.5};
    CHECK_THROWS_AS(validate_latent(bad), std::invalid_argument);

    LatentSequence short_data = ok;
    short_data.data.pop_back();
    CHECK_THROWS_AS(validate_latent(short_data), std::invalid_argument);

    LatentSequence no_frames;
    CHECK_THROWS_AS(validate_latent(no_frames), std::invalid_argument);

    LatentSequence inf_seq = LatentSequence::zeros(1, 1);
    CHECK(all_finite(inf_seq));
    inf_seq.data[0] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(all_finite(inf_seq));
}
