#include "robust_embed/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace robust_embed {

double cosine_sim(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_sim: dimension mismatch");
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (!(nu > 0.0) || !(nv > 0.0)) throw std::domain_error("cosine_sim: zero vector");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double contrastive_loss(std::span<const double> z, const std::vector<Vector>& positives,
                        const std::vector<Vector>& negatives, double tau) {
    if (positives.empty()) throw std::invalid_argument("contrastive_loss: empty positive set");
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
    std::vector<double> pos;
    std::vector<double> all;
    for (const auto& p : positives) pos.push_back(cosine_sim(z, p) / tau);
    all = pos;
    for (const auto& n : negatives) all.push_back(cosine_sim(z, n) / tau);
    const double mx = *std::max_element(all.begin(), all.end());
    double zp = 0.0;
    double za = 0.0;
    for (double s : pos) zp += std::exp(s - mx);
    for (double s : all) za += std::exp(s - mx);
    return std::max(0.0, std::log(za) - std::log(zp));
}

Var batch_contrastive_loss(Graph& g, Var anchors, std::span<const CandidateGroup> groups, double tau) {
    if (groups.empty()) throw std::invalid_argument("batch_contrastive_loss: no candidate groups");
    const auto n = static_cast<std::size_t>(g.value(anchors).rows());
    std::vector<Var> blocks;
    for (const auto& grp : groups) {
        if (static_cast<std::size_t>(g.value(grp.embeddings).rows()) != n) {
            throw std::invalid_argument("batch_contrastive_loss: candidate group row count mismatch");
        }
        blocks.push_back(grp.embeddings);
    }
    Var cands = row_normalize(g, concat_rows(g, blocks));
    Var sim = matmul_nt(g, row_normalize(g, anchors), cands);
    const std::size_t m = n * groups.size();
    std::vector<std::uint8_t> positive(n * m, 0);
    std::vector<std::uint8_t> valid(n * m, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < groups.size(); ++k) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t at = i * m + k * n + j;
                if (j == i && groups[k].positive_own) {
                    positive[at] = 1;
                    valid[at] = 1;
                } else if (j != i && groups[k].negative_others) {
                    valid[at] = 1;
                }
            }
        }
    }
    return contrastive_cross_entropy(g, sim, positive, valid, tau);
}

UnigramGenerator::UnigramGenerator(std::vector<double> counts) : counts_(std::move(counts)) {
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        if (Vocabulary::is_special(static_cast<int>(i))) counts_[i] = 0.0;
        if (!(counts_[i] >= 0.0)) throw std::invalid_argument("UnigramGenerator: negative count");
        total_ += counts_[i];
    }
}

UnigramGenerator UnigramGenerator::from_corpus(std::span<const TokenSequence> corpus, std::size_t vocab_size) {
    std::vector<double> counts(vocab_size, 0.0);
    for (const auto& s : corpus) {
        for (std::size_t i = 0; i < s.ids.size(); ++i) {
            if (s.mask[i] && s.ids[i] >= 0 && static_cast<std::size_t>(s.ids[i]) < vocab_size) {
                counts[static_cast<std::size_t>(s.ids[i])] += 1.0;
            }
        }
    }
    return UnigramGenerator(std::move(counts));
}

int UnigramGenerator::sample(int original, Rng& rng) const {
    double excluded = 0.0;
    if (original >= 0 && static_cast<std::size_t>(original) < counts_.size()) {
        excluded = counts_[static_cast<std::size_t>(original)];
    }
    const double mass = total_ - excluded;
    if (!(mass > 0.0)) throw std::runtime_error("UnigramGenerator: no replacement token available");
    double u = rng.uniform() * mass;
    int last = -1;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        if (static_cast<int>(i) == original || counts_[i] == 0.0) continue;
        last = static_cast<int>(i);
        if (u < counts_[i]) return last;
        u -= counts_[i];
    }
    return last;
}

std::size_t rtd_mask_count(std::size_t maskable, double mask_rate) {
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw std::invalid_argument("rtd: mask_rate must lie in (0, 1)");
    const auto n = static_cast<std::size_t>(std::floor(mask_rate * static_cast<double>(maskable) + 0.5));
    return std::min(maskable, std::max<std::size_t>(1, n));
}

RtdInstance rtd_edit(const TokenSequence& x, double mask_rate, const TokenGenerator& generator, Rng& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < x.ids.size(); ++i) {
        if (x.mask[i] && x.ids[i] != Vocabulary::kCls && x.ids[i] != Vocabulary::kPad) candidates.push_back(i);
    }
    if (candidates.empty()) throw std::invalid_argument("rtd_edit: sequence has no maskable tokens");
    const std::size_t count = rtd_mask_count(candidates.size(), mask_rate);
    // Partial Fisher-Yates over the candidate positions.
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng.below(candidates.size() - k));
        std::swap(candidates[k], candidates[pick]);
    }
    RtdInstance out;
    out.original = x.ids;
    out.edited = x.ids;
    out.labels.assign(x.ids.size(), 1);
    std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t pos : chosen) {
        const int replacement = generator.sample(x.ids[pos], rng);
        if (replacement == x.ids[pos]) throw std::logic_error("rtd_edit: generator returned the original token");
        out.edited[pos] = replacement;
        out.labels[pos] = 0;
    }
    return out;
}

Discriminator::Discriminator(std::size_t dim, std::size_t hidden, std::uint64_t init_seed) : dim_(dim) {
    if (dim == 0 || hidden == 0) throw std::invalid_argument("Discriminator: sizes must be positive");
    Rng rng(init_seed);
    const auto D = static_cast<Eigen::Index>(dim);
    const auto H = static_cast<Eigen::Index>(hidden);
    auto normal = [&rng](Eigen::Index r, Eigen::Index c, double std) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, std);
        return m;
    };
    params_.add("discriminator.w1", normal(2 * D, H, 1.0 / std::sqrt(2.0 * static_cast<double>(D))));
    params_.add("discriminator.b1", Matrix::Zero(1, H));
    params_.add("discriminator.w2", normal(H, 1, 1.0 / std::sqrt(static_cast<double>(H))));
    params_.add("discriminator.b2", Matrix::Zero(1, 1));
}

Discriminator Discriminator::zeros(std::size_t dim, std::size_t hidden) {
    Discriminator d(dim, hidden, 0);
    for (auto& p : d.params_) p.value.setZero();
    return d;
}

Var Discriminator::logits(Graph& g, const std::vector<Var>& w, Var tokens, Var context) const {
    if (w.size() != 4) throw std::invalid_argument("Discriminator: expected 4 bound parameters");
    Var x = concat_cols(g, tokens, context);
    Var hidden = tanh(g, add_row(g, matmul(g, x, w[0]), w[1]));
    return add_row(g, matmul(g, hidden, w[2]), w[3]);
}

std::vector<double> Discriminator::probabilities(const Matrix& tokens, std::span<const double> h) const {
    if (h.size() != dim_ || tokens.cols() != static_cast<Eigen::Index>(dim_)) {
        throw std::invalid_argument("Discriminator: dimension mismatch");
    }
    Graph g;
    const auto w = bind(g, false);
    Matrix context(tokens.rows(), tokens.cols());
    for (Eigen::Index r = 0; r < context.rows(); ++r) {
        for (Eigen::Index c = 0; c < context.cols(); ++c) context(r, c) = h[static_cast<std::size_t>(c)];
    }
    const Matrix& lg = g.value(logits(g, w, g.constant(tokens), g.constant(context)));
    std::vector<double> p(static_cast<std::size_t>(lg.rows()));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-lg(static_cast<Eigen::Index>(i), 0)));
    return p;
}

double rtd_loss(std::span<const double> probabilities, std::span<const int> labels) {
    if (probabilities.size() != labels.size()) throw std::invalid_argument("rtd_loss: size mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        const double p = probabilities[j];
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::domain_error("rtd_loss: discriminator output " + std::to_string(p) + " outside [0, 1]");
        }
        const double q = labels[j] ? p : 1.0 - p;
        if (q == 0.0) throw std::domain_error("rtd_loss: zero probability assigned to the true label");
        total -= std::log(q);
    }
    return total;
}

double rtd_loss(const RtdInstance& instance, std::span<const double> h, const Discriminator& discriminator) {
    if (static_cast<std::size_t>(instance.perturbed.rows()) != instance.labels.size()) {
        throw std::invalid_argument("rtd_loss: perturbed embeddings missing or mismatched");
    }
    return rtd_loss(discriminator.probabilities(instance.perturbed, h), instance.labels);
}

TotalLossTerms total_loss(Graph& g, const Encoder& encoder, const Encoder::Bound& ew,
                          const Discriminator& discriminator, const std::vector<Var>& dw,
                          const TotalLossInputs& in, Var delta_final, Var eta, const HyperParams& hp) {
    if (!in.batch || !in.edited) throw std::invalid_argument("total_loss: batch and edited batch required");
    const Batch& batch = *in.batch;
    const Batch& edited = *in.edited;
    if (edited.size != batch.size || edited.length != batch.length) {
        throw std::invalid_argument("total_loss: edited batch layout differs from batch");
    }
    if (in.rtd_labels.size() != edited.ids.size()) throw std::invalid_argument("total_loss: rtd label count mismatch");

    Var x = encoder.embed(g, ew, batch, in.anchor_seed);
    Var x_pos = encoder.embed(g, ew, batch, in.positive_seed);
    Var z = encoder.encode_from_embeddings(g, ew, x, batch);
    Var z_pos = encoder.encode_from_embeddings(g, ew, x_pos, batch);

    TotalLossTerms terms;
    if (in.adversarial) {
        Var z_adv = encoder.encode_from_embeddings(g, ew, add(g, x, delta_final), batch);
        const CandidateGroup robust_groups[] = {{z_pos, true, true}, {z_adv, true, false}, {z, false, true}};
        terms.robust = batch_contrastive_loss(g, z, robust_groups, hp.tau);
        const CandidateGroup reg_groups[] = {{z_pos, true, true}, {z, false, true}};
        terms.regularizer = batch_contrastive_loss(g, z_adv, reg_groups, hp.tau);
    } else {
        const CandidateGroup groups[] = {{z_pos, true, true}, {z, false, true}};
        terms.robust = batch_contrastive_loss(g, z, groups, hp.tau);
        terms.regularizer = g.constant(Matrix::Zero(1, 1));
    }

    Var x_edited = encoder.embed(g, ew, edited, std::nullopt);
    Var x_adv = add(g, x_edited, eta);
    Var context = repeat_rows(g, z, batch.length);
    Var logits = discriminator.logits(g, dw, x_adv, context);
    std::vector<double> weights(edited.mask.begin(), edited.mask.end());
    terms.rtd = bce_with_logits_sum(g, logits, in.rtd_labels, weights);

    terms.total = add(g, add(g, terms.robust, scale(g, terms.regularizer, hp.lambda1)), scale(g, terms.rtd, hp.lambda2));
    return terms;
}

PerturbationObjective make_perturbation_objective(const Encoder& encoder, const Batch& batch,
                                                  Matrix anchor_embeddings, Matrix positive_embeddings,
                                                  double tau) {
    return [&encoder, &batch, x = std::move(anchor_embeddings), z_pos = std::move(positive_embeddings),
            tau](const Matrix& delta, const Matrix& eta) {
        Graph g;
        const auto w = encoder.bind(g, false);
        Var input = g.leaf(x + delta + eta, true);
        Var a = encoder.encode_from_embeddings(g, w, input, batch);
        const CandidateGroup groups[] = {{g.constant(z_pos), true, true}, {a, false, true}};
        Var loss = batch_contrastive_loss(g, a, groups, tau);
        g.backward(loss);
        LossGradient out;
        out.loss = g.value(loss)(0, 0);
        out.grad_delta = g.grad(input);
        out.grad_eta = out.grad_delta;
        return out;
    };
}

}  // namespace robust_embed
