#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robust_embed/autograd.hpp"
#include "robust_embed/rng.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {

enum class NormKind { l1, l2, linf };

NormKind parse_norm(std::string_view name);
std::string_view norm_name(NormKind kind);

// All scalars of the adversarial training procedure. epsilon == 0 disables
// perturbations entirely (every projection collapses to the origin).
struct HyperParams {
    double epsilon = 1e-2;
    double alpha = 1e-5;   // PGD step
    double beta = 1e-3;    // FGSM step
    double gamma = 1e-3;   // token-level step
    double rho = 0.5;      // PGD/FGSM modulation
    double lambda1 = 1.0 / 128.0;
    double lambda2 = 0.005;
    double tau = 0.05;
    int pgd_steps = 5;     // K
    int fgsm_steps = 5;    // T
    NormKind norm = NormKind::linf;
    double sigma = 1e-2;   // uniform init range
    double learning_rate = 3e-5;
    int epochs = 4;
    std::size_t batch_size = 64;

    void validate() const;
};

double norm(std::span<const double> v, NormKind kind);

// Euclidean projection onto {x : ||x||_kind <= epsilon}, in place. Points
// already inside the ball (up to a 1e-12 relative slack) are left untouched,
// which makes the projection exactly idempotent.
void project_ball_inplace(std::span<double> v, double epsilon, NormKind kind);
std::vector<double> project_ball(std::span<const double> v, double epsilon, NormKind kind);

// n_i = norms_i / max_j norms_j; all-zero input gives all ones.
std::vector<double> scaling_index(std::span<const double> norms);

// Perturbation tensors are (batch*len) x dim, one row per token position.
// Rows at padded positions are kept at zero by every operation below.

Matrix token_step(const Matrix& eta, const Matrix& grad, double gamma, const HyperParams& hp,
                  const Batch& batch);
Matrix pgd_step(const Matrix& delta, const Matrix& grad, double alpha, const HyperParams& hp);
Matrix fgsm_step(const Matrix& delta, const Matrix& grad, double beta, const HyperParams& hp);
Matrix combine(const Matrix& delta_pgd, const Matrix& delta_fgsm, double rho);

// Largest per-row norm; the token-level bound applies row by row.
double max_row_norm(const Matrix& m, NormKind kind);
double tensor_norm(const Matrix& m, NormKind kind);

// delta^0: U(-sigma, sigma) / sqrt(dim) on active rows, projected into the ball.
Matrix initial_delta(const Batch& batch, std::size_t dim, const HyperParams& hp, Rng& rng);

// Persistent per-vocabulary token perturbation table, initialised like delta^0
// and projected row-wise.
Matrix initial_vocab_table(std::size_t vocab_size, std::size_t dim, const HyperParams& hp, Rng& rng);

// eta^0_i = V[w_i] for active positions.
Matrix gather_eta(const Batch& batch, const Matrix& vocab_table);

struct LossGradient {
    double loss = 0.0;
    Matrix grad_delta;
    Matrix grad_eta;
};

// Adversarial objective evaluated at X + delta + eta.
using PerturbationObjective = std::function<LossGradient(const Matrix& delta, const Matrix& eta)>;

struct GenerateResult {
    Matrix delta_final;
    Matrix eta_final;
    Matrix delta_pgd;
    Matrix delta_fgsm;
    int evaluations = 0;
};

// Runs max(K, T) iterations. The PGD and FGSM trajectories both start from
// delta0 and each is driven by the gradient at its own iterate; the token
// perturbation follows the gradient from the PGD evaluation while t <= K and
// from the FGSM evaluation afterwards. Rows of `vocab_table` for the batch's
// active tokens are overwritten with the final eta.
GenerateResult generate(const Batch& batch, const Matrix& delta0, Matrix& vocab_table, const HyperParams& hp,
                        const PerturbationObjective& objective);

}  // namespace robust_embed
