#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace robust_embed {

// Small synthetic review-style language: a subject, one or two sentiment
// adjectives drawn from synonym clusters, optional intensifiers and fillers.
// Every sentence carries a single polarity, which doubles as its label.

struct ToySentence {
    std::string text;
    int polarity = 0;  // 1 positive, 0 negative
    int subject = 0;
    int cluster = 0;   // adjective synonym cluster of the first adjective
    int aspect = 0;
};

struct ToyPair {
    std::string a;
    std::string b;
    double score = 0.0;  // in [0, 5]
};

struct ToyLabeled {
    std::string text;
    int label = 0;
};

class ToyLanguage {
public:
    explicit ToyLanguage(std::uint64_t seed);

    ToySentence sentence();
    // Same meaning, synonyms and templates resampled.
    ToySentence paraphrase(const ToySentence& s);

    std::vector<std::string> corpus(std::size_t n);
    std::vector<ToyLabeled> sentiment(std::size_t n);
    std::vector<ToyPair> sts(std::size_t n);

    // word -> synonyms, covering every adjective and subject noun.
    static std::map<std::string, std::vector<std::string>> lexicon();

private:
    ToySentence render(int polarity, int subject, int cluster, int aspect);
    std::uint64_t next();
    std::size_t below(std::size_t n);

    std::uint64_t state_;
};

}  // namespace robust_embed
