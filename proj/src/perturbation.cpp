#include "robust_embed/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace robust_embed {

namespace {

constexpr double kBallSlack = 1e-12;

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::domain_error(std::string(what) + ": non-finite input");
    }
}

std::span<double> row_span(Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

std::span<double> all_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> all_of(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

void project_l1(std::span<double> v, double epsilon) {
    // Sort-based simplex projection of |v| followed by sign restoration.
    std::vector<double> u(v.size());
    std::transform(v.begin(), v.end(), u.begin(), [](double x) { return std::abs(x); });
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double t = (cumsum - epsilon) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    for (double& x : v) {
        const double mag = std::max(std::abs(x) - theta, 0.0);
        x = std::copysign(mag, x);
        if (mag == 0.0) x = 0.0;
    }
}

void check_shapes(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

}  // namespace

NormKind parse_norm(std::string_view name) {
    if (name == "l1" || name == "L1") return NormKind::l1;
    if (name == "l2" || name == "L2") return NormKind::l2;
    if (name == "linf" || name == "Linf" || name == "inf") return NormKind::linf;
    throw std::invalid_argument("unknown norm '" + std::string(name) + "' (expected l1, l2, linf)");
}

std::string_view norm_name(NormKind kind) {
    switch (kind) {
        case NormKind::l1: return "l1";
        case NormKind::l2: return "l2";
        case NormKind::linf: return "linf";
    }
    return "?";
}

void HyperParams::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("hyperparameters: " + msg); };
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail("epsilon must be >= 0");
    if (!(rho >= 0.0 && rho <= 1.0)) fail("rho must lie in [0, 1]");
    if (pgd_steps < 1 || fgsm_steps < 1) fail("K and T must be >= 1");
    if (!(tau > 0.0)) fail("tau must be > 0");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) fail("lambda1 and lambda2 must be >= 0");
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) fail("step sizes must be >= 0");
    if (!(sigma >= 0.0)) fail("sigma must be >= 0");
    if (!(learning_rate > 0.0)) fail("learning rate must be > 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
}

double norm(std::span<const double> v, NormKind kind) {
    double acc = 0.0;
    switch (kind) {
        case NormKind::l1:
            for (double x : v) acc += std::abs(x);
            return acc;
        case NormKind::l2:
            for (double x : v) acc += x * x;
            return std::sqrt(acc);
        case NormKind::linf:
            for (double x : v) acc = std::max(acc, std::abs(x));
            return acc;
    }
    return acc;
}

void project_ball_inplace(std::span<double> v, double epsilon, NormKind kind) {
    require_finite(v, "project_ball");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("project_ball: epsilon must be >= 0");
    if (epsilon == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    const double n = norm(v, kind);
    if (n <= epsilon * (1.0 + kBallSlack)) return;
    switch (kind) {
        case NormKind::linf:
            for (double& x : v) x = std::clamp(x, -epsilon, epsilon);
            break;
        case NormKind::l2: {
            const double s = epsilon / n;
            for (double& x : v) x *= s;
            break;
        }
        case NormKind::l1:
            project_l1(v, epsilon);
            break;
    }
}

std::vector<double> project_ball(std::span<const double> v, double epsilon, NormKind kind) {
    std::vector<double> out(v.begin(), v.end());
    project_ball_inplace(out, epsilon, kind);
    return out;
}

std::vector<double> scaling_index(std::span<const double> norms) {
    if (norms.empty()) throw std::invalid_argument("scaling_index: no tokens");
    double mx = 0.0;
    for (double n : norms) {
        if (!(n >= 0.0) || !std::isfinite(n)) throw std::invalid_argument("scaling_index: norms must be finite and >= 0");
        mx = std::max(mx, n);
    }
    std::vector<double> out(norms.size(), 1.0);
    if (mx == 0.0) return out;
    for (std::size_t i = 0; i < norms.size(); ++i) out[i] = norms[i] / mx;
    return out;
}

double max_row_norm(const Matrix& m, NormKind kind) {
    double mx = 0.0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) mx = std::max(mx, norm(row_span(m, r), kind));
    return mx;
}

double tensor_norm(const Matrix& m, NormKind kind) { return norm(all_of(m), kind); }

Matrix token_step(const Matrix& eta, const Matrix& grad, double gamma, const HyperParams& hp, const Batch& batch) {
    check_shapes(eta, grad, "token_step");
    if (eta.rows() != static_cast<Eigen::Index>(batch.size * batch.length)) {
        throw std::invalid_argument("token_step: perturbation rows do not match batch");
    }
    require_finite(all_of(eta), "token_step");
    require_finite(all_of(grad), "token_step");
    Matrix out = Matrix::Zero(eta.rows(), eta.cols());
    std::vector<double> norms;
    std::vector<Eigen::Index> rows;
    for (std::size_t b = 0; b < batch.size; ++b) {
        norms.clear();
        rows.clear();
        for (std::size_t i = 0; i < batch.length; ++i) {
            if (!batch.active(b, i)) continue;
            const auto r = static_cast<Eigen::Index>(b * batch.length + i);
            rows.push_back(r);
            norms.push_back(norm(row_span(eta, r), hp.norm));
        }
        if (rows.empty()) continue;
        const std::vector<double> n = scaling_index(norms);
        for (std::size_t t = 0; t < rows.size(); ++t) {
            const Eigen::Index r = rows[t];
            out.row(r) = eta.row(r);
            const double gn = norm(row_span(grad, r), hp.norm);
            if (gn > 0.0) out.row(r) += (gamma / gn) * grad.row(r);
            out.row(r) *= n[t];
            project_ball_inplace(row_span(out, r), hp.epsilon, hp.norm);
        }
    }
    return out;
}

Matrix pgd_step(const Matrix& delta, const Matrix& grad, double alpha, const HyperParams& hp) {
    check_shapes(delta, grad, "pgd_step");
    require_finite(all_of(grad), "pgd_step");
    Matrix out = delta;
    const double gn = tensor_norm(grad, hp.norm);
    if (gn > 0.0) out += (alpha / gn) * grad;
    project_ball_inplace(all_of(out), hp.epsilon, hp.norm);
    return out;
}

Matrix fgsm_step(const Matrix& delta, const Matrix& grad, double beta, const HyperParams& hp) {
    check_shapes(delta, grad, "fgsm_step");
    require_finite(all_of(grad), "fgsm_step");
    Matrix out = delta;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double g = grad.data()[i];
        const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        out.data()[i] += beta * s;
    }
    project_ball_inplace(all_of(out), hp.epsilon, hp.norm);
    return out;
}

Matrix combine(const Matrix& delta_pgd, const Matrix& delta_fgsm, double rho) {
    check_shapes(delta_pgd, delta_fgsm, "combine");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("combine: rho must lie in [0, 1]");
    if (rho == 1.0) return delta_pgd;
    if (rho == 0.0) return delta_fgsm;
    return rho * delta_pgd + (1.0 - rho) * delta_fgsm;
}

Matrix initial_delta(const Batch& batch, std::size_t dim, const HyperParams& hp, Rng& rng) {
    Matrix delta = Matrix::Zero(static_cast<Eigen::Index>(batch.size * batch.length), static_cast<Eigen::Index>(dim));
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index r = 0; r < delta.rows(); ++r) {
        if (!batch.mask[static_cast<std::size_t>(r)]) continue;
        for (Eigen::Index c = 0; c < delta.cols(); ++c) delta(r, c) = s * rng.uniform(-hp.sigma, hp.sigma);
    }
    project_ball_inplace(all_of(delta), hp.epsilon, hp.norm);
    return delta;
}

Matrix initial_vocab_table(std::size_t vocab_size, std::size_t dim, const HyperParams& hp, Rng& rng) {
    Matrix table(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(dim));
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = s * rng.uniform(-hp.sigma, hp.sigma);
    for (Eigen::Index r = 0; r < table.rows(); ++r) project_ball_inplace(row_span(table, r), hp.epsilon, hp.norm);
    return table;
}

Matrix gather_eta(const Batch& batch, const Matrix& vocab_table) {
    Matrix eta = Matrix::Zero(static_cast<Eigen::Index>(batch.size * batch.length), vocab_table.cols());
    for (std::size_t i = 0; i < batch.ids.size(); ++i) {
        if (!batch.mask[i]) continue;
        const int id = batch.ids[i];
        if (id < 0 || id >= vocab_table.rows()) throw std::out_of_range("gather_eta: token id outside table");
        eta.row(static_cast<Eigen::Index>(i)) = vocab_table.row(id);
    }
    return eta;
}

GenerateResult generate(const Batch& batch, const Matrix& delta0, Matrix& vocab_table, const HyperParams& hp,
                        const PerturbationObjective& objective) {
    hp.validate();
    const auto rows = static_cast<Eigen::Index>(batch.size * batch.length);
    if (delta0.rows() != rows || delta0.cols() != vocab_table.cols()) {
        throw std::invalid_argument("generate: delta0 shape does not match batch and table");
    }
    auto masked = [&batch](Matrix g) {
        for (std::size_t i = 0; i < batch.mask.size(); ++i) {
            if (!batch.mask[i]) g.row(static_cast<Eigen::Index>(i)).setZero();
        }
        return g;
    };

    GenerateResult result;
    result.delta_pgd = delta0;
    result.delta_fgsm = delta0;
    Matrix eta = gather_eta(batch, vocab_table);
    const int iterations = std::max(hp.pgd_steps, hp.fgsm_steps);
    for (int t = 1; t <= iterations; ++t) {
        Matrix eta_grad;
        if (t <= hp.pgd_steps) {
            LossGradient lg = objective(result.delta_pgd, eta);
            ++result.evaluations;
            result.delta_pgd = pgd_step(result.delta_pgd, masked(std::move(lg.grad_delta)), hp.alpha, hp);
            eta_grad = std::move(lg.grad_eta);
        }
        if (t <= hp.fgsm_steps) {
            LossGradient lg = objective(result.delta_fgsm, eta);
            ++result.evaluations;
            result.delta_fgsm = fgsm_step(result.delta_fgsm, masked(std::move(lg.grad_delta)), hp.beta, hp);
            if (t > hp.pgd_steps) eta_grad = std::move(lg.grad_eta);
        }
        eta = token_step(eta, masked(std::move(eta_grad)), hp.gamma, hp, batch);
    }
    for (std::size_t i = 0; i < batch.ids.size(); ++i) {
        if (batch.mask[i]) vocab_table.row(batch.ids[i]) = eta.row(static_cast<Eigen::Index>(i));
    }
    result.delta_final = combine(result.delta_pgd, result.delta_fgsm, hp.rho);
    result.eta_final = std::move(eta);
    return result;
}

}  // namespace robust_embed
