#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace robust_embed {

// What a victim reports for one input. Classifiers fill `label` and
// `probabilities`; regressors fill `score` and leave label at -1.
struct VictimOutput {
    int label = -1;
    std::vector<double> probabilities;
    double score = 0.0;
};

// Black-box model with exact query accounting. Copies share the prediction
// closure but own independent counters, so concurrent attacks on distinct
// examples each keep their own tally.
class VictimModel {
public:
    using Predict = std::function<VictimOutput(const std::string& text)>;

    explicit VictimModel(Predict predict);

    VictimOutput query(const std::string& text);
    std::size_t queries() const { return queries_; }

private:
    std::shared_ptr<const Predict> predict_;
    std::size_t queries_ = 0;
};

// Defines what the attacker is pushing towards.
class GoalFunction {
public:
    virtual ~GoalFunction() = default;
    // Larger is more damaging; attacks greedily increase it.
    virtual double damage(const VictimOutput& out) const = 0;
    virtual bool succeeded(const VictimOutput& out) const = 0;
    // Whether the example counts towards the success rate at all.
    virtual bool eligible(const VictimOutput& original) const = 0;
};

// Label flip against a gold label; eligible only if the victim is right.
class ClassificationGoal final : public GoalFunction {
public:
    explicit ClassificationGoal(int gold_label) : gold_(gold_label) {}
    double damage(const VictimOutput& out) const override;
    bool succeeded(const VictimOutput& out) const override { return out.label != gold_; }
    bool eligible(const VictimOutput& original) const override { return original.label == gold_; }

private:
    int gold_;
};

// Pushes a regression score away from gold; success once the deviation has
// grown by at least `threshold` over the original prediction's deviation.
class RegressionGoal final : public GoalFunction {
public:
    RegressionGoal(double gold, double original_prediction, double threshold);
    double damage(const VictimOutput& out) const override;
    bool succeeded(const VictimOutput& out) const override;
    bool eligible(const VictimOutput&) const override { return true; }

private:
    double gold_;
    double baseline_;
    double threshold_;
};

// Lowers the victim's own score (used when no gold label is involved).
class ScoreDropGoal final : public GoalFunction {
public:
    explicit ScoreDropGoal(double original_score) : original_(original_score) {}
    double damage(const VictimOutput& out) const override { return original_ - out.score; }
    bool succeeded(const VictimOutput&) const override { return false; }
    bool eligible(const VictimOutput&) const override { return true; }

private:
    double original_;
};

// Synonym lexicon, one entry per line: `word<TAB>syn1,syn2,...`.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::map<std::string, std::vector<std::string>> entries);
    static Lexicon load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    const std::vector<std::string>& synonyms(const std::string& word) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, std::vector<std::string>> entries_;
};

struct AttackOptions {
    std::size_t query_budget = 2000;
    double max_fraction_modified = 0.4;
    bool pwws_ordering = false;  // saliency-weighted word order
    std::uint64_t seed = 0;      // character-level edit sampling
};

struct AttackResult {
    std::string original_text;
    std::string perturbed_text;
    VictimOutput original_output;
    VictimOutput perturbed_output;
    bool eligible = true;
    bool success = false;
    std::size_t queries = 0;
    std::size_t words_modified = 0;
};

// Leave-one-out importance: L + 1 queries, most important first, ties by position.
std::vector<std::size_t> word_importance(VictimModel& victim, const std::string& text, const GoalFunction& goal);
std::vector<std::size_t> word_importance(VictimModel& victim, const std::string& text);

AttackResult synonym_swap_attack(VictimModel& victim, const std::string& text, const Lexicon& lexicon,
                                 const GoalFunction& goal, const AttackOptions& options);

AttackResult char_bugger_attack(VictimModel& victim, const std::string& text, const GoalFunction& goal,
                                const AttackOptions& options);

// Successes over eligible examples; throws when none is eligible.
double success_rate(std::span<const AttackResult> results);
// Mean victim queries over eligible examples.
double mean_queries(std::span<const AttackResult> results);

// Candidate character-level edits of one word (swap, delete, insert,
// visually similar substitution), sampled deterministically from `seed`.
std::vector<std::string> char_bugs(const std::string& word, std::uint64_t seed);

}  // namespace robust_embed
