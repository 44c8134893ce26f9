#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "robust_embed/attacks.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {
namespace {

namespace fs = std::filesystem;

std::size_t count_word(const std::string& text, const std::string& word) {
    std::size_t n = 0;
    for (const auto& w : split_words(text)) n += w == word;
    return n;
}

// Scores the number of occurrences of "good".
VictimModel good_counter() {
    return VictimModel([](const std::string& text) {
        VictimOutput out;
        out.score = static_cast<double>(count_word(text, "good"));
        return out;
    });
}

// Positive iff the text contains the keyword.
VictimModel keyword_classifier(const std::string& keyword) {
    return VictimModel([keyword](const std::string& text) {
        VictimOutput out;
        const bool hit = count_word(text, keyword) > 0;
        out.label = hit ? 1 : 0;
        out.probabilities = hit ? std::vector<double>{0.1, 0.9} : std::vector<double>{0.8, 0.2};
        return out;
    });
}

// Positive iff the exact token "excellent" is present.
VictimModel spelling_classifier() {
    return VictimModel([](const std::string& text) {
        VictimOutput out;
        out.label = count_word(text, "excellent") > 0 ? 1 : 0;
        out.probabilities = out.label ? std::vector<double>{0.0, 1.0} : std::vector<double>{1.0, 0.0};
        return out;
    });
}

Lexicon toy_lexicon() {
    return Lexicon({{"good", {"fine", "nice"}}, {"day", {"afternoon"}}, {"movie", {"film"}}});
}

TEST(WordImportance, KeywordRankedFirst) {
    VictimModel v = good_counter();
    const auto order = word_importance(v, "a good day");
    ASSERT_EQ(order.size(), 3u);
    EXPECT_EQ(order[0], 1u);
    EXPECT_EQ(v.queries(), 4u);
}

TEST(WordImportance, SingleWordAndTies) {
    VictimModel v = good_counter();
    EXPECT_EQ(word_importance(v, "hello"), std::vector<std::size_t>{0});
    EXPECT_EQ(v.queries(), 2u);
    // No word matters: position order is kept.
    EXPECT_EQ(word_importance(v, "x y z"), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(WordImportance, QueriesGrowByLengthPlusOne) {
    VictimModel v = good_counter();
    const std::string text = "one two three good five six seven";
    const std::size_t before = v.queries();
    word_importance(v, text);
    EXPECT_EQ(v.queries() - before, split_words(text).size() + 1);
}

TEST(SynonymSwap, FlipsKeywordVictim) {
    VictimModel v = keyword_classifier("good");
    const ClassificationGoal goal(1);
    const AttackResult r = synonym_swap_attack(v, "a good day", toy_lexicon(), goal, AttackOptions{});
    EXPECT_TRUE(r.eligible);
    EXPECT_TRUE(r.success);
    EXPECT_GE(r.words_modified, 1u);
    EXPECT_EQ(count_word(r.perturbed_text, "good"), 0u);
    EXPECT_EQ(r.perturbed_output.label, 0);
    EXPECT_EQ(r.queries, v.queries());
}

TEST(SynonymSwap, BudgetExhaustionIsFailure) {
    VictimModel v = keyword_classifier("good");
    AttackOptions o;
    o.query_budget = 2;  // original + one saliency query, nothing left to substitute
    const AttackResult r = synonym_swap_attack(v, "a good day", toy_lexicon(), ClassificationGoal(1), o);
    EXPECT_FALSE(r.success);
    EXPECT_LE(r.queries, 2u);
}

TEST(SynonymSwap, IneligibleWhenOriginallyWrong) {
    VictimModel v = keyword_classifier("good");
    const AttackResult r = synonym_swap_attack(v, "a bad day", toy_lexicon(), ClassificationGoal(1), AttackOptions{});
    EXPECT_FALSE(r.eligible);
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.queries, 1u);
}

TEST(SynonymSwap, NoSynonymsMeansNoChange) {
    VictimModel v = keyword_classifier("good");
    const AttackResult r = synonym_swap_attack(v, "a good day", Lexicon{}, ClassificationGoal(1), AttackOptions{});
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.words_modified, 0u);
    EXPECT_EQ(r.perturbed_text, r.original_text);
}

TEST(SynonymSwap, RejectsBadInput) {
    VictimModel v = keyword_classifier("good");
    EXPECT_THROW(synonym_swap_attack(v, "   ", toy_lexicon(), ClassificationGoal(1), AttackOptions{}),
                 std::invalid_argument);
    AttackOptions o;
    o.query_budget = 0;
    EXPECT_THROW(synonym_swap_attack(v, "a good day", toy_lexicon(), ClassificationGoal(1), o), std::invalid_argument);
}

TEST(SynonymSwap, ModificationCapAndTextConsistency) {
    // A victim that only flips once every word has changed is never beaten
    // within the cap, so the cap is exercised fully.
    VictimModel v([](const std::string& text) {
        VictimOutput out;
        const auto words = split_words(text);
        std::size_t originals = 0;
        for (const auto& w : words) originals += w == "good" || w == "movie" || w == "day";
        out.label = originals > 0 ? 1 : 0;
        out.probabilities = {1.0 - 0.2 * static_cast<double>(originals), 0.2 * static_cast<double>(originals)};
        return out;
    });
    for (const std::string text : {"good movie day", "a good movie on a good day", "good"}) {
        const AttackResult r = synonym_swap_attack(v, text, toy_lexicon(), ClassificationGoal(1), AttackOptions{});
        const std::size_t cap = static_cast<std::size_t>(std::floor(0.4 * static_cast<double>(split_words(text).size())));
        EXPECT_LE(r.words_modified, cap) << text;
        EXPECT_EQ(r.perturbed_text != r.original_text, r.words_modified > 0) << text;
    }
}

TEST(SynonymSwap, PwwsOrderingAlsoSucceeds) {
    VictimModel v = keyword_classifier("good");
    AttackOptions o;
    o.pwws_ordering = true;
    const AttackResult r = synonym_swap_attack(v, "a good day", toy_lexicon(), ClassificationGoal(1), o);
    EXPECT_TRUE(r.success);
}

TEST(CharBugger, BreaksSpellingVictimWithOneEdit) {
    VictimModel v = spelling_classifier();
    const AttackResult r = char_bugger_attack(v, "an excellent film", ClassificationGoal(1), AttackOptions{});
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.words_modified, 1u);
    EXPECT_EQ(count_word(r.perturbed_text, "excellent"), 0u);
    EXPECT_EQ(split_words(r.perturbed_text).size(), 3u);
}

TEST(CharBugger, SingleWordTextIsCappedAtZeroEdits) {
    // floor(0.4 * 1) = 0 words may change.
    VictimModel v = spelling_classifier();
    const AttackResult r = char_bugger_attack(v, "excellent", ClassificationGoal(1), AttackOptions{});
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.perturbed_text, "excellent");
}

TEST(CharBugger, RejectsEmptyText) {
    VictimModel v = spelling_classifier();
    EXPECT_THROW(char_bugger_attack(v, "", ClassificationGoal(1), AttackOptions{}), std::invalid_argument);
}

TEST(CharBugger, SeededRunsAreReproducible) {
    AttackOptions o;
    o.seed = 9;
    VictimModel a = spelling_classifier(), b = spelling_classifier();
    const auto ra = char_bugger_attack(a, "an excellent excellent film", ClassificationGoal(1), o);
    const auto rb = char_bugger_attack(b, "an excellent excellent film", ClassificationGoal(1), o);
    EXPECT_EQ(ra.perturbed_text, rb.perturbed_text);
    EXPECT_EQ(ra.queries, rb.queries);
    EXPECT_EQ(char_bugs("excellent", 3), char_bugs("excellent", 3));
}

TEST(CharBugger, EditsAreSmall) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (const auto& bug : char_bugs("excellent", seed)) {
            EXPECT_NE(bug, "excellent");
            EXPECT_LE(std::abs(static_cast<long>(bug.size()) - 9L), 1L) << bug;
        }
    }
}

TEST(RegressionGoal, InfiniteThresholdNeverSucceeds) {
    const RegressionGoal goal(2.0, 2.5, std::numeric_limits<double>::infinity());
    VictimOutput far;
    far.score = 100.0;
    EXPECT_FALSE(goal.succeeded(far));
    EXPECT_THROW(RegressionGoal(2.0, 2.5, -1.0), std::invalid_argument);
    const RegressionGoal unit(2.0, 2.5, 1.0);
    far.score = 3.5;
    EXPECT_TRUE(unit.succeeded(far));
    far.score = 3.4;
    EXPECT_FALSE(unit.succeeded(far));
}

AttackResult outcome(bool eligible, bool success, std::size_t queries = 10) {
    AttackResult r;
    r.eligible = eligible;
    r.success = success;
    r.queries = queries;
    return r;
}

TEST(SuccessRate, Aggregates) {
    std::vector<AttackResult> rs;
    for (int i = 0; i < 10; ++i) rs.push_back(outcome(true, i < 4));
    EXPECT_DOUBLE_EQ(success_rate(rs), 0.4);
    rs.push_back(outcome(false, false, 1));  // ignored
    EXPECT_DOUBLE_EQ(success_rate(rs), 0.4);
    EXPECT_DOUBLE_EQ(mean_queries(rs), 10.0);

    std::vector<AttackResult> none(5, outcome(true, false)), all(5, outcome(true, true));
    EXPECT_EQ(success_rate(none), 0.0);
    EXPECT_EQ(success_rate(all), 1.0);

    std::vector<AttackResult> ineligible(3, outcome(false, false));
    EXPECT_THROW(success_rate(ineligible), std::invalid_argument);
    EXPECT_THROW(success_rate(std::vector<AttackResult>{}), std::invalid_argument);
}

TEST(LexiconFile, LoadNormalizesAndReportsLine) {
    const fs::path p = fs::temp_directory_path() / "robust_embed_lexicon_test.tsv";
    {
        std::ofstream out(p);
        out << "Good\tfine, Nice,good,fine\n\nmovie\tfilm\n";
    }
    const Lexicon lex = Lexicon::load(p);
    EXPECT_EQ(lex.size(), 2u);
    EXPECT_EQ(lex.synonyms("good"), (std::vector<std::string>{"fine", "nice"}));
    EXPECT_TRUE(lex.synonyms("absent").empty());

    const fs::path q = fs::temp_directory_path() / "robust_embed_lexicon_roundtrip.tsv";
    lex.save(q);
    EXPECT_EQ(Lexicon::load(q).synonyms("movie"), std::vector<std::string>{"film"});

    {
        std::ofstream out(p);
        out << "good\tfine\nbroken line\n";
    }
    try {
        Lexicon::load(p);
        FAIL() << "expected error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(Lexicon::load(fs::temp_directory_path() / "robust_embed_no_such_lexicon.tsv"), std::runtime_error);
    fs::remove(p);
    fs::remove(q);
}

}  // namespace
}  // namespace robust_embed
