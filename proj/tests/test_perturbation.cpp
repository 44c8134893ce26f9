#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "robust_embed/objectives.hpp"
#include "robust_embed/perturbation.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace robust_embed {
namespace {

using Vec = std::vector<double>;

HyperParams params(double eps, NormKind kind) {
    HyperParams hp;
    hp.epsilon = eps;
    hp.norm = kind;
    return hp;
}

void expect_vec_near(const Vec& a, const Vec& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

TEST(Projection, WorkedExamples) {
    expect_vec_near(project_ball(Vec{0.2, -0.05}, 0.1, NormKind::linf), {0.1, -0.05}, 1e-15);
    expect_vec_near(project_ball(Vec{3, 4}, 1.0, NormKind::l2), {0.6, 0.8}, 1e-15);
    expect_vec_near(project_ball(Vec{0.8, 0.8}, 1.0, NormKind::l1), {0.5, 0.5}, 1e-15);
}

TEST(Projection, L1ExampleAgreesWithGridSearch) {
    // Exhaustive search over a 1e-3 grid of the L1 ball in two dimensions.
    const Vec v = {0.8, 0.8};
    double best = 1e9;
    Vec arg;
    for (int i = -1000; i <= 1000; ++i) {
        for (int j = -1000; j <= 1000; ++j) {
            const double x = i * 1e-3, y = j * 1e-3;
            if (std::abs(x) + std::abs(y) > 1.0 + 1e-12) continue;
            const double d = (x - v[0]) * (x - v[0]) + (y - v[1]) * (y - v[1]);
            if (d < best) {
                best = d;
                arg = {x, y};
            }
        }
    }
    expect_vec_near(project_ball(v, 1.0, NormKind::l1), arg, 1e-3);
}

TEST(Projection, MatchesBruteForceOraclesAndIsIdempotent) {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    std::uniform_real_distribution<double> radius(0.05, 2.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t dim = 1 + trial % 8;
        Vec v(dim);
        for (double& x : v) x = coord(gen);
        const double eps = radius(gen);
        const std::pair<NormKind, Vec> cases[] = {
            {NormKind::linf, testing::oracle_project_linf(v, eps)},
            {NormKind::l2, testing::oracle_project_l2(v, eps)},
            {NormKind::l1, testing::oracle_project_l1(v, eps)},
        };
        for (const auto& [kind, expected] : cases) {
            const Vec p = project_ball(v, eps, kind);
            expect_vec_near(p, expected, 1e-9);
            EXPECT_EQ(project_ball(p, eps, kind), p) << norm_name(kind);
        }
    }
}

TEST(Projection, InBallUnchangedAndRejectsNonFinite) {
    const Vec inside = {0.1, -0.2, 0.05};
    for (NormKind k : {NormKind::l1, NormKind::l2, NormKind::linf}) EXPECT_EQ(project_ball(inside, 1.0, k), inside);
    EXPECT_THROW(project_ball(Vec{1.0, std::nan("")}, 1.0, NormKind::l2), std::domain_error);
    EXPECT_THROW(project_ball(Vec{1.0, INFINITY}, 1.0, NormKind::linf), std::domain_error);
}

TEST(Projection, NonExpansive) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 200; ++t) {
        Vec a(6), b(6);
        for (auto& x : a) x = nd(gen);
        for (auto& x : b) x = nd(gen);
        for (NormKind k : {NormKind::l1, NormKind::l2, NormKind::linf}) {
            EXPECT_LE(testing::sq_dist(project_ball(a, 0.7, k), project_ball(b, 0.7, k)),
                      testing::sq_dist(a, b) + 1e-12);
        }
    }
}

TEST(ScalingIndex, Examples) {
    EXPECT_EQ(scaling_index(Vec{2, 4, 1}), (Vec{0.5, 1.0, 0.25}));
    EXPECT_EQ(scaling_index(Vec{3}), Vec{1.0});
    EXPECT_EQ(scaling_index(Vec{0, 0}), (Vec{1.0, 1.0}));
    EXPECT_THROW(scaling_index(Vec{}), std::invalid_argument);
}

TEST(TokenStep, SingleTokenUnitStep) {
    const Batch b = testing::batch_of({{2}});
    Matrix eta = Matrix::Zero(1, 2), grad(1, 2);
    grad << 1.0, 0.0;
    const Matrix out = token_step(eta, grad, 1e-3, params(1e-2, NormKind::linf), b);
    EXPECT_DOUBLE_EQ(out(0, 0), 1e-3);
    EXPECT_DOUBLE_EQ(out(0, 1), 0.0);
}

TEST(TokenStep, ZeroGammaOnlyRescales) {
    const Batch b = testing::batch_of({{2, 3}});
    Matrix eta(2, 2);
    eta << 0.004, 0.0, 0.0, 0.002;
    const Matrix out = token_step(eta, testing::random_matrix(2, 2, 1), 0.0, params(1e-2, NormKind::linf), b);
    EXPECT_DOUBLE_EQ(out(0, 0), 0.004);
    EXPECT_DOUBLE_EQ(out(1, 1), 0.001);  // n = 0.002 / 0.004
}

TEST(TokenStep, ZeroGradientSkipsAdditiveTerm) {
    const Batch b = testing::batch_of({{2, 3}});
    Matrix eta(2, 2);
    eta << 0.003, 0.0, 0.0, 0.003;
    Matrix grad = Matrix::Zero(2, 2);
    grad(0, 0) = 5.0;
    const Matrix out = token_step(eta, grad, 1e-3, params(1e-2, NormKind::l2), b);
    EXPECT_NEAR(out(0, 0), 0.004, 1e-15);
    EXPECT_DOUBLE_EQ(out(1, 1), 0.003);
}

TEST(TokenStep, PreservesScalingIndexOrdering) {
    // Equal starting perturbations, gradients with a 2:1 norm ratio.
    const Batch b = testing::batch_of({{2, 3}});
    Matrix eta = Matrix::Constant(2, 3, 0.002);
    Matrix grad(2, 3);
    grad << 2, 2, 2, 1, 1, 1;
    HyperParams hp = params(1e-2, NormKind::l2);
    Matrix cur = eta;
    for (int t = 0; t < 4; ++t) {
        cur = token_step(cur, grad, 1e-3, hp, b);
        EXPECT_GE(cur.row(0).norm() + 1e-15, cur.row(1).norm());
        EXPECT_LE(cur.row(0).norm(), hp.epsilon + 1e-12);
    }
    // Oracle: same-direction gradient leaves both tokens with equal norms,
    // since each token's gradient is normalized independently.
    const double expected = std::sqrt(3.0) * 0.002 + 1e-3;
    const Matrix one = token_step(eta, grad, 1e-3, hp, b);
    EXPECT_NEAR(one.row(0).norm(), expected, 1e-15);
    EXPECT_NEAR(one.row(1).norm(), expected, 1e-15);
}

TEST(TokenStep, PaddedRowsStayZero) {
    const Batch b = testing::batch_of({{2, 3}, {2}});
    const Matrix out = token_step(Matrix::Zero(4, 2), testing::random_matrix(4, 2, 9), 1e-3,
                                  params(1e-2, NormKind::linf), b);
    EXPECT_EQ(out.row(3), Matrix::Zero(1, 2));
    EXPECT_GT(out.row(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(PgdStep, Examples) {
    HyperParams hp = params(1.0, NormKind::l2);
    Matrix g(1, 2);
    g << 3, 4;
    const Matrix d = pgd_step(Matrix::Zero(1, 2), g, 0.1, hp);
    EXPECT_NEAR(d(0, 0), 0.06, 1e-15);
    EXPECT_NEAR(d(0, 1), 0.08, 1e-15);
    EXPECT_EQ(pgd_step(d, Matrix::Zero(1, 2), 0.1, hp), d);

    const Matrix far = pgd_step(Matrix::Zero(1, 2), g, 5.0, hp);
    EXPECT_NEAR(tensor_norm(far, NormKind::l2), 1.0, 1e-12);
    const Vec oracle = testing::oracle_project_l2({3.0, 4.0}, 1.0);
    EXPECT_NEAR(far(0, 0), oracle[0], 1e-12);
}

TEST(PgdStep, NormIsTakenOverWholeTensor) {
    HyperParams hp = params(10.0, NormKind::l2);
    Matrix g(2, 1);
    g << 3, 4;
    const Matrix d = pgd_step(Matrix::Zero(2, 1), g, 1.0, hp);
    EXPECT_NEAR(d(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(d(1, 0), 0.8, 1e-15);
}

TEST(FgsmStep, Examples) {
    HyperParams hp = params(0.01, NormKind::linf);
    Matrix g(1, 2);
    g << 0.3, -0.2;
    const Matrix d = fgsm_step(Matrix::Zero(1, 2), g, 1e-3, hp);
    EXPECT_DOUBLE_EQ(d(0, 0), 1e-3);
    EXPECT_DOUBLE_EQ(d(0, 1), -1e-3);
    EXPECT_EQ(fgsm_step(d, Matrix::Zero(1, 2), 1e-3, hp), d);

    Matrix cur = Matrix::Zero(1, 2);
    for (int i = 0; i < 40; ++i) cur = fgsm_step(cur, g, 1e-3, hp);
    const Vec oracle = testing::oracle_project_linf({40e-3, -40e-3}, 0.01);
    EXPECT_NEAR(cur(0, 0), oracle[0], 1e-15);
    EXPECT_NEAR(cur(0, 1), oracle[1], 1e-15);
    EXPECT_NEAR(tensor_norm(cur, NormKind::linf), 0.01, 1e-15);
}

TEST(Combine, Examples) {
    Matrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 1;
    const Matrix half = combine(a, b, 0.5);
    EXPECT_DOUBLE_EQ(half(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(half(0, 1), 0.5);
    EXPECT_EQ(combine(a, b, 1.0), a);
    EXPECT_EQ(combine(a, b, 0.0), b);
    EXPECT_THROW(combine(a, b, 1.5), std::invalid_argument);
    EXPECT_THROW(combine(a, b, -0.1), std::invalid_argument);
}

TEST(Combine, ConvexitySafe) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const NormKind k = static_cast<NormKind>(t % 3);
        Matrix a = testing::random_matrix(2, 3, 2 * t + 1), b = testing::random_matrix(2, 3, 2 * t + 2);
        project_ball_inplace({a.data(), 6}, 0.3, k);
        project_ball_inplace({b.data(), 6}, 0.3, k);
        EXPECT_LE(tensor_norm(combine(a, b, u(gen)), k), 0.3 + 1e-9);
    }
}

// Linear objective with a fixed gradient, used to test loop bookkeeping.
PerturbationObjective constant_gradient(Matrix g) {
    return [g](const Matrix& delta, const Matrix&) {
        return LossGradient{(g.cwiseProduct(delta)).sum(), g, g};
    };
}

TEST(Generate, SingleStepDegeneratesToOnePgdStep) {
    const Batch b = testing::batch_of({{2, 3, 4}});
    HyperParams hp = params(0.05, NormKind::l2);
    hp.pgd_steps = hp.fgsm_steps = 1;
    hp.rho = 1.0;
    hp.alpha = 0.01;
    const Matrix g = testing::random_matrix(3, 4, 3);
    const Matrix d0 = 0.001 * testing::random_matrix(3, 4, 4);
    Matrix table = Matrix::Zero(6, 4);
    const GenerateResult r = generate(b, d0, table, hp, constant_gradient(g));
    EXPECT_EQ(r.delta_final, pgd_step(d0, g, hp.alpha, hp));
    EXPECT_EQ(r.evaluations, 2);
}

TEST(Generate, RunsMaxOfKAndTIterationsAndWritesTableBack) {
    const Batch b = testing::batch_of({{2, 3, 4}, {2, 5}});
    HyperParams hp = params(0.05, NormKind::linf);
    hp.pgd_steps = 3;
    hp.fgsm_steps = 5;
    Matrix table = Matrix::Zero(7, 4);
    const GenerateResult r =
        generate(b, Matrix::Zero(6, 4), table, hp, constant_gradient(testing::random_matrix(6, 4, 5)));
    EXPECT_EQ(r.evaluations, 8);
    EXPECT_EQ(table.row(3), r.eta_final.row(1));
    EXPECT_EQ(table.row(5), r.eta_final.row(4));
    EXPECT_EQ(table.row(6), Matrix::Zero(1, 4));      // not in the batch
    EXPECT_EQ(r.delta_final.row(5), Matrix::Zero(1, 4));  // padding
}

TEST(Generate, GoldenDeltaFromToyEncoder) {
    const Encoder enc(testing::tiny_config(), 21);
    const Batch b = testing::batch_of({{2, 5, 7, 3}, {2, 9, 4}});
    const HyperParams hp;
    Rng rng(3);
    const Matrix d0 = initial_delta(b, 8, hp, rng);
    Matrix table = initial_vocab_table(12, 8, hp, rng);
    const auto objective =
        make_perturbation_objective(enc, b, enc.embed(b, 1), enc.encode(b, 2), hp.tau);
    const GenerateResult r = generate(b, d0, table, hp, objective);
    EXPECT_NEAR(r.delta_final.sum(), -0.0023348694803128761, 1e-12);
    EXPECT_NEAR(r.delta_final(0, 0), 0.0029273588716023876, 1e-14);
    EXPECT_NEAR(r.delta_final(5, 7), -0.0017227064755745928, 1e-14);
    EXPECT_NEAR(r.eta_final.sum(), 0.010254496550655431, 1e-12);
}

TEST(Generate, ObjectiveGradientsMatchFiniteDifferences) {
    const Encoder enc(testing::tiny_config(), 22);
    const Batch b = testing::batch_of({{2, 5, 7, 3}, {2, 9, 4}, {2, 6}});
    const auto objective = make_perturbation_objective(enc, b, enc.embed(b, 1), enc.encode(b, 2), 0.05);
    const Matrix delta = 0.01 * testing::random_matrix(12, 8, 1);
    const Matrix eta = 0.01 * testing::random_matrix(12, 8, 2);
    const LossGradient lg = objective(delta, eta);
    auto by_delta = [&](const Matrix& d) { return objective(d, eta).loss; };
    auto by_eta = [&](const Matrix& e) { return objective(delta, e).loss; };
    EXPECT_LT(testing::relative_error(lg.grad_delta, testing::numeric_gradient(by_delta, delta)), 1e-4);
    EXPECT_LT(testing::relative_error(lg.grad_eta, testing::numeric_gradient(by_eta, eta)), 1e-4);
}

TEST(Generate, BoundedUnderFuzz) {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        HyperParams hp;
        hp.norm = static_cast<NormKind>(trial % 3);
        hp.epsilon = 1e-3 + u(gen);
        hp.alpha = 2.0 * u(gen);
        hp.beta = 2.0 * u(gen);
        hp.gamma = 2.0 * u(gen);
        hp.rho = u(gen);
        hp.sigma = 3.0 * hp.epsilon;
        hp.pgd_steps = 1 + trial % 4;
        hp.fgsm_steps = 1 + (trial / 4) % 4;
        const Batch b = testing::batch_of({{2, 3, 4}, {2, 5}});
        Rng rng(static_cast<std::uint64_t>(trial));
        Matrix table = initial_vocab_table(6, 3, hp, rng);
        const Matrix d0 = initial_delta(b, 3, hp, rng);
        const GenerateResult r =
            generate(b, d0, table, hp, constant_gradient(testing::random_matrix(6, 3, 100 + trial, 5.0)));
        EXPECT_LE(tensor_norm(r.delta_final, hp.norm), hp.epsilon + 1e-9);
        EXPECT_LE(tensor_norm(r.delta_pgd, hp.norm), hp.epsilon + 1e-9);
        EXPECT_LE(tensor_norm(r.delta_fgsm, hp.norm), hp.epsilon + 1e-9);
        EXPECT_LE(max_row_norm(r.eta_final, hp.norm), hp.epsilon + 1e-9);
        EXPECT_LE(max_row_norm(table, hp.norm), hp.epsilon + 1e-9);
    }
}

TEST(HyperParams, Validation) {
    HyperParams hp;
    EXPECT_NO_THROW(hp.validate());
    hp.rho = 1.5;
    EXPECT_THROW(hp.validate(), std::invalid_argument);
    hp = HyperParams{};
    hp.pgd_steps = 0;
    EXPECT_THROW(hp.validate(), std::invalid_argument);
    hp = HyperParams{};
    hp.tau = 0.0;
    EXPECT_THROW(hp.validate(), std::invalid_argument);
    EXPECT_EQ(parse_norm("linf"), NormKind::linf);
    EXPECT_THROW(parse_norm("l3"), std::invalid_argument);
}

}  // namespace
}  // namespace robust_embed
