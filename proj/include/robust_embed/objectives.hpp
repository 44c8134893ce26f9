#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "robust_embed/autograd.hpp"
#include "robust_embed/encoder.hpp"
#include "robust_embed/parameters.hpp"
#include "robust_embed/perturbation.hpp"
#include "robust_embed/rng.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {

using Vector = std::vector<double>;

// u.v / (|u| |v|); throws on a zero vector.
double cosine_sim(std::span<const double> u, std::span<const double> v);

// -log( sum_pos exp(sim/tau) / sum_{pos+neg} exp(sim/tau) ) for one anchor.
double contrastive_loss(std::span<const double> z, const std::vector<Vector>& positives,
                        const std::vector<Vector>& negatives, double tau);

// One block of candidate embeddings (batch x dim, row i belongs to sentence i)
// for the batched contrastive loss. For anchor i, row i of a group is a
// positive when `positive_own` is set; rows j != i are negatives when
// `negative_others` is set. Everything else is ignored.
struct CandidateGroup {
    Var embeddings;
    bool positive_own = false;
    bool negative_others = false;
};

// Mean over anchors of the per-anchor contrastive loss.
Var batch_contrastive_loss(Graph& g, Var anchors, std::span<const CandidateGroup> groups, double tau);

// Replacement sampler used to build edited sentences.
class TokenGenerator {
public:
    virtual ~TokenGenerator() = default;
    // A token id different from `original`.
    virtual int sample(int original, Rng& rng) const = 0;
};

// Samples replacements from corpus unigram frequencies, never returning the
// original token or a special token.
class UnigramGenerator final : public TokenGenerator {
public:
    explicit UnigramGenerator(std::vector<double> counts);
    static UnigramGenerator from_corpus(std::span<const TokenSequence> corpus, std::size_t vocab_size);

    int sample(int original, Rng& rng) const override;

private:
    std::vector<double> counts_;
    double total_ = 0.0;
};

struct RtdInstance {
    std::vector<int> original;
    std::vector<int> edited;
    std::vector<int> labels;  // 1 = original token kept, 0 = replaced
    Matrix perturbed;         // X'' + eta, one row per position
};

// max(1, round-half-up(rate * active non-[CLS] tokens)).
std::size_t rtd_mask_count(std::size_t maskable, double mask_rate);

// Picks positions to mask (never [CLS] or padding) and replaces them with
// generator samples. `perturbed` is left empty.
RtdInstance rtd_edit(const TokenSequence& x, double mask_rate, const TokenGenerator& generator, Rng& rng);

// Per-token replaced-token detector: 2-layer MLP over [token embedding ; h].
class Discriminator {
public:
    Discriminator(std::size_t dim, std::size_t hidden, std::uint64_t init_seed);
    static Discriminator zeros(std::size_t dim, std::size_t hidden);

    std::size_t dim() const { return dim_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    std::vector<Var> bind(Graph& g, bool trainable) const { return params_.bind(g, trainable); }

    // n x 1 logits for token rows `tokens` (n x dim) paired with `context` rows (n x dim).
    Var logits(Graph& g, const std::vector<Var>& w, Var tokens, Var context) const;

    // Probability that each row of `tokens` is an original token, given h.
    std::vector<double> probabilities(const Matrix& tokens, std::span<const double> h) const;

private:
    std::size_t dim_;
    ParameterSet params_;
};

// Binary cross-entropy summed over positions. Probabilities must lie in
// [0, 1] and must not assign zero probability to the true label.
double rtd_loss(std::span<const double> probabilities, std::span<const int> labels);
double rtd_loss(const RtdInstance& instance, std::span<const double> h, const Discriminator& discriminator);

// Inputs of the total objective for one minibatch.
struct TotalLossInputs {
    const Batch* batch = nullptr;
    const Batch* edited = nullptr;       // same layout as batch
    std::vector<double> rtd_labels;      // per position of `edited`; 1 = original
    std::uint64_t anchor_seed = 0;       // dropout mask m1
    std::uint64_t positive_seed = 0;     // dropout mask m2
    bool adversarial = true;             // false: plain dual-dropout contrastive baseline
};

struct TotalLossTerms {
    Var robust;       // L_con(z, {z+, z_adv}, {z-})
    Var regularizer;  // L_con(z_adv, {z+}, {z-})
    Var rtd;          // summed over sentences
    Var total;
};

// delta_final and eta are graph variables so callers can differentiate w.r.t.
// them; the trainer passes constants.
TotalLossTerms total_loss(Graph& g, const Encoder& encoder, const Encoder::Bound& ew,
                          const Discriminator& discriminator, const std::vector<Var>& dw,
                          const TotalLossInputs& in, Var delta_final, Var eta, const HyperParams& hp);

// L_con(X + delta + eta, {X+}) with in-batch negatives, differentiated w.r.t.
// the perturbation. `anchor_embeddings` is X, `positive_embeddings` is the
// pooled z+ of X+.
PerturbationObjective make_perturbation_objective(const Encoder& encoder, const Batch& batch,
                                                  Matrix anchor_embeddings, Matrix positive_embeddings,
                                                  double tau);

}  // namespace robust_embed
