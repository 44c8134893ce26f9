#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "robust_embed/attacks.hpp"
#include "robust_embed/autograd.hpp"
#include "robust_embed/encoder.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {

struct StsExample {
    std::string sentence_a;
    std::string sentence_b;
    double gold = 0.0;  // [0, 5]
};

struct LabeledText {
    std::string text;
    int label = 0;
};

// `sentence_a<TAB>sentence_b<TAB>score` and `text<TAB>label`; malformed
// lines raise errors carrying the line number.
std::vector<StsExample> load_sts_tsv(const std::filesystem::path& path);
std::vector<LabeledText> load_classification_tsv(const std::filesystem::path& path);
void save_sts_tsv(const std::filesystem::path& path, std::span<const StsExample> data);
void save_classification_tsv(const std::filesystem::path& path, std::span<const LabeledText> data);

// Frozen encoder + vocabulary; dropout is never applied at inference.
class SentenceEmbedder {
public:
    SentenceEmbedder(const Encoder& encoder, const Vocabulary& vocab) : encoder_(&encoder), vocab_(&vocab) {}

    Matrix embed(std::span<const std::string> texts) const;
    std::vector<double> embed(const std::string& text) const;
    const Encoder& encoder() const { return *encoder_; }

private:
    const Encoder* encoder_;
    const Vocabulary* vocab_;
};

// 2.5 * (1 + cos(z_a, z_b)); zero embeddings are an error.
double sts_score(std::span<const double> za, std::span<const double> zb);
double sts_score(const SentenceEmbedder& model, const std::string& a, const std::string& b);

// Rank correlation with average ranks for ties.
double spearman(std::span<const double> pred, std::span<const double> gold);

// Inputs must be unit-normalized row-wise.
double alignment(const Matrix& a, const Matrix& b);
double uniformity(const Matrix& embeddings);
Matrix normalize_rows(const Matrix& m);

// Multinomial logistic regression on fixed features.
class LogisticRegression {
public:
    struct Options {
        double l2 = 1e-4;
        double learning_rate = 0.5;
        std::size_t iterations = 500;
    };

    static LogisticRegression fit(const Matrix& features, std::span<const int> labels, const Options& options);
    static LogisticRegression fit(const Matrix& features, std::span<const int> labels) {
        return fit(features, labels, Options{});
    }

    std::vector<double> probabilities(std::span<const double> x) const;
    int predict(std::span<const double> x) const;
    std::size_t classes() const { return static_cast<std::size_t>(weights_.cols()); }

private:
    std::vector<double> mean_;
    std::vector<double> scale_;
    Matrix weights_;  // (features + 1) x classes, last row is the bias
};

double accuracy(const LogisticRegression& model, const Matrix& features, std::span<const int> labels);

// Trains a probe on frozen embeddings of `train`, reports accuracy on `test`.
double transfer_probe(const SentenceEmbedder& model, std::span<const LabeledText> train,
                      std::span<const LabeledText> test);

// Sentence classifier used as an attack victim: embedder + probe.
VictimModel classification_victim(const SentenceEmbedder& model, const LogisticRegression& probe);

enum class AttackKind { synonym, character };

struct AdvStsResult {
    std::vector<StsExample> adversarial;
    std::vector<AttackResult> attacks;
    double success_rate = 0.0;
    double mean_queries = 0.0;
};

// Attacks the longer sentence of each pair (ties: sentence_a) to push the
// predicted score away from gold; success when the deviation grows by at
// least `delta_threshold`. Rate is over all examples.
using PairScorer = std::function<double(const std::string& a, const std::string& b)>;

AdvStsResult build_advsts(const PairScorer& scorer, std::span<const StsExample> data, AttackKind kind,
                          const Lexicon& lexicon, double delta_threshold, const AttackOptions& options,
                          std::size_t workers = 1);
AdvStsResult build_advsts(const SentenceEmbedder& model, std::span<const StsExample> data, AttackKind kind,
                          const Lexicon& lexicon, double delta_threshold, const AttackOptions& options,
                          std::size_t workers = 1);

// Named finite scalars, written as `<stem>.txt` (`metric=value` lines) and
// `<stem>.json`.
class MetricReport {
public:
    void set(const std::string& name, double value);
    double at(const std::string& name) const;
    bool contains(const std::string& name) const { return values_.count(name) != 0; }
    const std::map<std::string, double>& values() const { return values_; }

    void write(const std::filesystem::path& dir, const std::string& stem = "report") const;
    // Parses a `metric=value` file; errors name the offending line.
    static MetricReport read(const std::filesystem::path& file);

private:
    std::map<std::string, double> values_;
};

// Runs fn(i) for i in [0, n) over at most `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace robust_embed
