#pragma once

// Random tiny training instances whose analytic gradients are compared with
// central finite differences. Shared by the unit tests and the acceptance run.

#include <algorithm>
#include <string>
#include <vector>

#include "robust_embed/objectives.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

namespace robust_embed::testing {

struct GradientCase {
    Encoder encoder;
    Discriminator discriminator;
    Batch batch;
    Batch edited;
    std::vector<double> labels;
    Matrix delta;
    Matrix eta;
    HyperParams hp;
};

inline GradientCase make_gradient_case(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "gradient-case"));
    const std::size_t vocab = 10;
    const std::size_t dim = rng.below(2) ? 8 : 4;
    const std::size_t B = 2 + rng.below(3);
    std::vector<std::vector<int>> rows;
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<int> r = {Vocabulary::kCls};
        const std::size_t len = 1 + rng.below(3);  // total length 2..4
        for (std::size_t i = 0; i < len; ++i) r.push_back(static_cast<int>(3 + rng.below(vocab - 3)));
        rows.push_back(r);
    }
    Batch batch = batch_of(rows);
    Batch edited = batch;
    std::vector<double> labels(batch.ids.size(), 1.0);
    for (std::size_t i = 0; i < edited.ids.size(); ++i) {
        if (!edited.mask[i] || edited.ids[i] == Vocabulary::kCls) continue;
        if (rng.uniform() < 0.4) {
            edited.ids[i] = 3 + (edited.ids[i] - 3 + 1 + static_cast<int>(rng.below(vocab - 4))) % static_cast<int>(vocab - 3);
            labels[i] = 0.0;
        }
    }
    const HyperParams hp;
    EncoderConfig cfg = tiny_config(vocab, dim);
    const auto rows_n = static_cast<Eigen::Index>(batch.ids.size());
    Matrix delta = 0.05 * random_matrix(rows_n, static_cast<Eigen::Index>(dim), seed * 3 + 1);
    Matrix eta = 0.05 * random_matrix(rows_n, static_cast<Eigen::Index>(dim), seed * 3 + 2);
    for (Eigen::Index r = 0; r < rows_n; ++r) {
        if (!batch.mask[static_cast<std::size_t>(r)]) {
            delta.row(r).setZero();
            eta.row(r).setZero();
        }
    }
    return GradientCase{Encoder(cfg, derive_seed(seed, "enc")), Discriminator(dim, 5, derive_seed(seed, "disc")),
                        std::move(batch), std::move(edited), std::move(labels), std::move(delta), std::move(eta), hp};
}

enum class LossPart { contrastive, rtd, total };

inline Var pick(const TotalLossTerms& t, LossPart part) {
    switch (part) {
        case LossPart::contrastive: return t.robust;
        case LossPart::rtd: return t.rtd;
        case LossPart::total: return t.total;
    }
    return t.total;
}

// Evaluates one loss part; when `grads` is given, also returns analytic
// gradients ordered as: delta, eta, encoder params..., discriminator params...
inline double evaluate_case(const GradientCase& c, LossPart part, std::vector<Matrix>* grads) {
    TotalLossInputs in;
    in.batch = &c.batch;
    in.edited = &c.edited;
    in.rtd_labels = c.labels;
    in.anchor_seed = 17;
    in.positive_seed = 18;
    Graph g;
    const auto ew = c.encoder.bind(g, true);
    const auto dw = c.discriminator.bind(g, true);
    Var d = g.leaf(c.delta, true);
    Var e = g.leaf(c.eta, true);
    const TotalLossTerms t = total_loss(g, c.encoder, ew, c.discriminator, dw, in, d, e, c.hp);
    Var loss = pick(t, part);
    if (grads) {
        g.backward(loss);
        grads->push_back(g.grad(d));
        grads->push_back(g.grad(e));
        for (Var v : ew.vars()) grads->push_back(g.grad(v));
        for (Var v : dw) grads->push_back(g.grad(v));
    }
    return g.value(loss)(0, 0);
}

struct GradientReport {
    double worst = 0.0;
    std::string where;
};

// Worst relative error over every differentiable input of the chosen loss.
// Each tensor is compared relative to its own scale, floored at 1e-3 of the
// largest gradient entry of the loss: parameters whose exact gradient is zero
// (e.g. attention key biases) are then judged against the loss's gradient
// scale instead of pure finite-difference round-off. The absolute 1e-7 floor
// is the resolution of a 1e-5 central difference on losses with O(1/tau) logits.
inline GradientReport check_case_gradients(const GradientCase& base, LossPart part) {
    std::vector<Matrix> analytic;
    evaluate_case(base, part, &analytic);
    std::vector<std::pair<std::string, Matrix>> numeric;
    GradientCase c = base;
    numeric.emplace_back("delta", numeric_gradient([&](const Matrix& m) {
        c.delta = m;
        const double v = evaluate_case(c, part, nullptr);
        c.delta = base.delta;
        return v;
    }, base.delta));
    numeric.emplace_back("eta", numeric_gradient([&](const Matrix& m) {
        c.eta = m;
        const double v = evaluate_case(c, part, nullptr);
        c.eta = base.eta;
        return v;
    }, base.eta));
    auto params_of = [&](auto& model, auto& base_model) {
        for (std::size_t i = 0; i < base_model.parameters().size(); ++i) {
            const Parameter& p = base_model.parameters()[i];
            numeric.emplace_back(p.name, numeric_gradient([&](const Matrix& m) {
                model.parameters()[i].value = m;
                const double v = evaluate_case(c, part, nullptr);
                model.parameters()[i].value = p.value;
                return v;
            }, p.value));
        }
    };
    params_of(c.encoder, base.encoder);
    params_of(c.discriminator, base.discriminator);

    double scale = 0.0;
    for (const auto& a : analytic) {
        if (a.size() > 0) scale = std::max(scale, a.cwiseAbs().maxCoeff());
    }
    GradientReport report;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double err = relative_error(analytic[k], numeric[k].second, std::max(1e-3 * scale, 1e-7));
        if (err > report.worst) {
            report.worst = err;
            report.where = numeric[k].first;
        }
    }
    return report;
}

}  // namespace robust_embed::testing
