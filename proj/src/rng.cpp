#include "robust_embed/rng.hpp"

#include <cmath>
#include <numbers>

namespace robust_embed {

double Rng::normal(double mean, double stddev) {
    // Box-Muller on an open-interval uniform.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace robust_embed
