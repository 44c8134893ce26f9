#pragma once

// Central finite differences, used as the independent oracle for every
// analytic gradient in the test suites.

#include <algorithm>
#include <cmath>
#include <functional>

#include "robust_embed/autograd.hpp"

namespace robust_embed::testing {

inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double step = 1e-5) {
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = probe.data()[i];
        probe.data()[i] = saved + step;
        const double up = f(probe);
        probe.data()[i] = saved - step;
        const double down = f(probe);
        probe.data()[i] = saved;
        grad.data()[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Tensor-level relative error: max |a - b| / max(max|a|, max|b|, floor).
inline double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-7) {
    if (analytic.size() == 0) return 0.0;
    const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
    const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), floor});
    return diff / scale;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    std::uint64_t s = seed * 0x9e3779b97f4a7c15ULL + 1;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        m.data()[i] = scale * (static_cast<double>(s >> 11) * 0x1.0p-53 * 2.0 - 1.0);
    }
    return m;
}

}  // namespace robust_embed::testing
