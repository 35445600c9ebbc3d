#pragma once

#include <span>
#include <vector>

#include "dforce/latent.hpp"
#include "dforce/rng.hpp"

// Linear-interpolation flow machinery. The interpolation parameter t measures
// closeness to data: x_t = t*x1 + (1-t)*x0, so t=1 returns the sample and t=0
// returns pure noise. Discrete schedule timesteps (which count noise) map to
// this convention via flow_t = 1 - t_disc/T.
namespace dforce {

// frame i of the result is t[i]*x1_i + (1 - t[i])*x0_i
LatentSequence interpolate(const LatentSequence& x1, const LatentSequence& x0,
                           const std::vector<double>& t);

// x1 - x0, framewise; the regression target for the velocity field
LatentSequence target_velocity(const LatentSequence& x1, const LatentSequence& x0);

// sigmoid(z) with z ~ Normal(m, sigma_ln^2); strictly inside (0,1)
double sample_timestep_logitnormal(Rng& rng, double m, double sigma_ln);

// convert a discrete noise timestep on the uniform grid to the interpolation
// parameter: j = 0 (clean) -> 1, j = T (pure noise) -> 0
inline double flow_t_from_discrete(int t_disc, int max_timestep) {
    return 1.0 - static_cast<double>(t_disc) / max_timestep;
}

// E[x1 - x0 | x_t] when x1 ~ N(0, sigma1^2 I) and x0 ~ N(0, I):
// coefficient (t*sigma1^2 - (1-t)) / (t^2*sigma1^2 + (1-t)^2) times x_t
double gaussian_velocity_coeff(double t, double sigma1);
std::vector<double> closed_form_velocity_gaussian(std::span<const double> x_t, double t,
                                                  double sigma1);

}  // namespace dforce
