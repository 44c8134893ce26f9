#include "robust_embed/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "robust_embed/rng.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {

namespace {

// Queries against a per-attack budget; nullopt once it is spent.
class BudgetedVictim {
public:
    BudgetedVictim(VictimModel& victim, std::size_t budget)
        : victim_(victim), start_(victim.queries()), budget_(budget) {}

    std::optional<VictimOutput> query(const std::string& text) {
        if (used() >= budget_) return std::nullopt;
        return victim_.query(text);
    }
    std::size_t used() const { return victim_.queries() - start_; }

private:
    VictimModel& victim_;
    std::size_t start_;
    std::size_t budget_;
};

std::string join_without(const std::vector<std::string>& words, std::size_t skip) {
    std::vector<std::string> rest;
    rest.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i != skip) rest.push_back(words[i]);
    }
    return join_words(rest);
}

// Stable order by descending key; equal keys keep position order.
std::vector<std::size_t> order_by(const std::vector<double>& key) {
    std::vector<std::size_t> idx(key.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&key](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return idx;
}

// Leave-one-out damage deltas; nullopt if the budget ran out.
std::optional<std::vector<double>> saliency(BudgetedVictim& bv, const std::vector<std::string>& words,
                                            const GoalFunction& goal, double base_damage) {
    std::vector<double> delta(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto out = bv.query(join_without(words, i));
        if (!out) return std::nullopt;
        delta[i] = goal.damage(*out) - base_damage;
    }
    return delta;
}

using CandidateFn = std::function<std::vector<std::string>(const std::string& word, std::size_t index)>;

AttackResult greedy_attack(VictimModel& victim, const std::string& text, const GoalFunction& goal,
                           const AttackOptions& options, const CandidateFn& candidates) {
    if (options.query_budget == 0) throw std::invalid_argument("attack: query budget must be positive");
    if (!(options.max_fraction_modified >= 0.0 && options.max_fraction_modified <= 1.0)) {
        throw std::invalid_argument("attack: max_fraction_modified must lie in [0, 1]");
    }
    std::vector<std::string> words = split_words(text);
    if (words.empty()) throw std::invalid_argument("attack: empty text");

    BudgetedVictim bv(victim, options.query_budget);
    AttackResult result;
    result.original_text = text;
    result.perturbed_text = text;
    auto finish = [&]() {
        result.queries = bv.used();
        if (result.words_modified > 0) result.perturbed_text = join_words(words);
        return result;
    };

    result.original_output = *bv.query(text);
    result.perturbed_output = result.original_output;
    result.eligible = goal.eligible(result.original_output);
    if (!result.eligible) return finish();
    if (goal.succeeded(result.original_output)) {
        result.success = true;
        return finish();
    }
    double current = goal.damage(result.original_output);

    const auto sal = saliency(bv, words, goal, current);
    if (!sal) return finish();

    std::vector<std::size_t> order;
    std::vector<std::optional<std::string>> preferred(words.size());
    if (options.pwws_ordering) {
        // Softmax-weighted saliency times the best single substitution gain.
        const double mx = *std::max_element(sal->begin(), sal->end());
        std::vector<double> w(words.size());
        double z = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] = std::exp((*sal)[i] - mx));
        std::vector<double> key(words.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < words.size(); ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (const std::string& c : candidates(words[i], i)) {
                std::vector<std::string> trial = words;
                trial[i] = c;
                const auto out = bv.query(join_words(trial));
                if (!out) return finish();
                const double gain = goal.damage(*out) - current;
                if (gain > best) {
                    best = gain;
                    preferred[i] = c;
                }
            }
            if (preferred[i]) key[i] = (w[i] / z) * best;
        }
        order = order_by(key);
    } else {
        order = order_by(*sal);
    }

    const auto max_modified =
        static_cast<std::size_t>(std::floor(options.max_fraction_modified * static_cast<double>(words.size())));
    for (std::size_t i : order) {
        if (result.words_modified >= max_modified) break;
        std::vector<std::string> cands;
        if (preferred[i]) {
            cands.push_back(*preferred[i]);
        } else if (!options.pwws_ordering) {
            cands = candidates(words[i], i);
        }
        if (cands.empty()) continue;
        // Successful substitutions rank above unsuccessful ones, then by damage.
        std::optional<VictimOutput> best_out;
        std::string best_word;
        double best = current;
        bool best_success = false;
        for (const std::string& c : cands) {
            std::vector<std::string> trial = words;
            trial[i] = c;
            const auto out = bv.query(join_words(trial));
            if (!out) return finish();
            const double d = goal.damage(*out);
            const bool ok = goal.succeeded(*out);
            if ((ok && !best_success) || (ok == best_success && d > best)) {
                best = d;
                best_success = ok;
                best_out = out;
                best_word = c;
            }
        }
        if (!best_out) continue;
        words[i] = best_word;
        ++result.words_modified;
        current = best;
        result.perturbed_output = *best_out;
        if (goal.succeeded(*best_out)) {
            result.success = true;
            break;
        }
    }
    return finish();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

VictimModel::VictimModel(Predict predict) : predict_(std::make_shared<const Predict>(std::move(predict))) {
    if (!*predict_) throw std::invalid_argument("VictimModel: empty prediction function");
}

VictimOutput VictimModel::query(const std::string& text) {
    ++queries_;
    return (*predict_)(text);
}

double ClassificationGoal::damage(const VictimOutput& out) const {
    if (gold_ >= 0 && static_cast<std::size_t>(gold_) < out.probabilities.size()) {
        return 1.0 - out.probabilities[static_cast<std::size_t>(gold_)];
    }
    return out.label != gold_ ? 1.0 : 0.0;
}

RegressionGoal::RegressionGoal(double gold, double original_prediction, double threshold)
    : gold_(gold), baseline_(std::abs(original_prediction - gold)), threshold_(threshold) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("RegressionGoal: threshold must be >= 0");
}

double RegressionGoal::damage(const VictimOutput& out) const { return std::abs(out.score - gold_); }

bool RegressionGoal::succeeded(const VictimOutput& out) const {
    if (std::isinf(threshold_)) return false;
    return damage(out) - baseline_ >= threshold_;
}

Lexicon::Lexicon(std::map<std::string, std::vector<std::string>> entries) : entries_(std::move(entries)) {}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon " + path.string());
    std::map<std::string, std::vector<std::string>> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected word<TAB>synonyms");
        }
        const std::string word = to_lower(trim(line.substr(0, tab)));
        if (word.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": empty word");
        auto& syns = entries[word];
        std::string rest = line.substr(tab + 1);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            const auto comma = rest.find(',', pos);
            const std::string s = to_lower(trim(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
            if (!s.empty() && s != word && std::find(syns.begin(), syns.end(), s) == syns.end()) syns.push_back(s);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    return Lexicon(std::move(entries));
}

void Lexicon::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write lexicon " + path.string());
    for (const auto& [word, syns] : entries_) {
        out << word << '\t';
        for (std::size_t i = 0; i < syns.size(); ++i) out << (i ? "," : "") << syns[i];
        out << '\n';
    }
}

const std::vector<std::string>& Lexicon::synonyms(const std::string& word) const {
    static const std::vector<std::string> none;
    const auto it = entries_.find(word);
    return it == entries_.end() ? none : it->second;
}

std::vector<std::size_t> word_importance(VictimModel& victim, const std::string& text, const GoalFunction& goal) {
    const std::vector<std::string> words = split_words(text);
    if (words.empty()) throw std::invalid_argument("word_importance: empty text");
    BudgetedVictim bv(victim, std::numeric_limits<std::size_t>::max());
    const double base = goal.damage(*bv.query(text));
    return order_by(*saliency(bv, words, goal, base));
}

std::vector<std::size_t> word_importance(VictimModel& victim, const std::string& text) {
    const std::vector<std::string> words = split_words(text);
    if (words.empty()) throw std::invalid_argument("word_importance: empty text");
    BudgetedVictim bv(victim, std::numeric_limits<std::size_t>::max());
    const VictimOutput original = *bv.query(text);
    const ScoreDropGoal goal(original.score);
    return order_by(*saliency(bv, words, goal, 0.0));
}

AttackResult synonym_swap_attack(VictimModel& victim, const std::string& text, const Lexicon& lexicon,
                                 const GoalFunction& goal, const AttackOptions& options) {
    return greedy_attack(victim, text, goal, options,
                         [&lexicon](const std::string& word, std::size_t) { return lexicon.synonyms(word); });
}

AttackResult char_bugger_attack(VictimModel& victim, const std::string& text, const GoalFunction& goal,
                                const AttackOptions& options) {
    return greedy_attack(victim, text, goal, options, [&options](const std::string& word, std::size_t index) {
        return char_bugs(word, derive_seed(options.seed, word, index));
    });
}

std::vector<std::string> char_bugs(const std::string& word, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> out;
    auto add = [&](std::string s) {
        if (s != word && !s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    };
    const std::size_t n = word.size();
    // Inner positions keep the first and last character when the word is long enough.
    auto inner = [&](std::size_t lo_pad, std::size_t count) -> std::size_t {
        return lo_pad + static_cast<std::size_t>(rng.below(count));
    };
    if (n >= 2) {
        std::string s = word;
        const std::size_t p = n >= 4 ? inner(1, n - 3) : 0;
        std::swap(s[p], s[p + 1]);
        add(s);
    }
    if (n >= 2) {
        std::string s = word;
        s.erase(n >= 3 ? inner(1, n - 2) : 1, 1);
        add(s);
    }
    {
        std::string s = word;
        const char c = static_cast<char>('a' + rng.below(26));
        s.insert(n >= 2 ? inner(1, n - 1) : n, 1, c);
        add(s);
    }
    static const std::map<char, char> visual = {{'o', '0'}, {'l', '1'}, {'i', '1'}, {'a', '@'}, {'e', '3'},
                                                {'s', '$'}, {'b', '6'}, {'g', '9'}, {'t', '7'}};
    std::vector<std::size_t> spots;
    for (std::size_t i = 0; i < n; ++i) {
        if (visual.count(word[i])) spots.push_back(i);
    }
    if (!spots.empty()) {
        std::string s = word;
        const std::size_t p = spots[rng.below(spots.size())];
        s[p] = visual.at(s[p]);
        add(s);
    }
    return out;
}

double success_rate(std::span<const AttackResult> results) {
    if (results.empty()) throw std::invalid_argument("success_rate: no results");
    std::size_t eligible = 0, successes = 0;
    for (const auto& r : results) {
        if (!r.eligible) continue;
        ++eligible;
        successes += r.success ? 1 : 0;
    }
    if (eligible == 0) throw std::invalid_argument("success_rate: no eligible examples");
    return static_cast<double>(successes) / static_cast<double>(eligible);
}

double mean_queries(std::span<const AttackResult> results) {
    std::size_t eligible = 0;
    double total = 0.0;
    for (const auto& r : results) {
        if (!r.eligible) continue;
        ++eligible;
        total += static_cast<double>(r.queries);
    }
    if (eligible == 0) throw std::invalid_argument("mean_queries: no eligible examples");
    return total / static_cast<double>(eligible);
}

}  // namespace robust_embed
