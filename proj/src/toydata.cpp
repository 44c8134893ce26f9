#include "robust_embed/toydata.hpp"

#include <algorithm>
#include <array>
#include <string_view>

#include "robust_embed/rng.hpp"

namespace robust_embed {

namespace {

using Cluster = std::array<std::string_view, 4>;

constexpr std::array<Cluster, 5> kPositive = {{
    {"good", "fine", "nice", "decent"},
    {"great", "excellent", "superb", "terrific"},
    {"happy", "glad", "pleased", "cheerful"},
    {"beautiful", "lovely", "pretty", "charming"},
    {"fun", "enjoyable", "entertaining", "amusing"},
}};

constexpr std::array<Cluster, 5> kNegative = {{
    {"bad", "poor", "awful", "lousy"},
    {"terrible", "horrible", "dreadful", "atrocious"},
    {"sad", "unhappy", "gloomy", "miserable"},
    {"ugly", "hideous", "unsightly", "grim"},
    {"boring", "dull", "tedious", "bland"},
}};

// Subjects come in synonym pairs.
constexpr std::array<std::array<std::string_view, 2>, 6> kSubjects = {{
    {"movie", "film"},
    {"book", "novel"},
    {"meal", "dinner"},
    {"hotel", "inn"},
    {"song", "track"},
    {"game", "match"},
}};

constexpr std::array<std::string_view, 8> kAspects = {"acting", "music", "plot", "ending",
                                                      "staff", "food", "price", "view"};
constexpr std::array<std::string_view, 5> kIntensifiers = {"very", "really", "quite", "truly", "rather"};
constexpr std::array<std::string_view, 5> kFillers = {"today", "overall", "honestly", "in the end", "for sure"};

const Cluster& cluster_of(int polarity, int cluster) {
    return polarity ? kPositive[static_cast<std::size_t>(cluster)] : kNegative[static_cast<std::size_t>(cluster)];
}

}  // namespace

ToyLanguage::ToyLanguage(std::uint64_t seed) : state_(mix64(seed)) {}

std::uint64_t ToyLanguage::next() {
    state_ = mix64(state_);
    return state_;
}

std::size_t ToyLanguage::below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

ToySentence ToyLanguage::render(int polarity, int subject, int cluster, int aspect) {
    const auto& c1 = cluster_of(polarity, cluster);
    const int cluster2 = static_cast<int>(below(kPositive.size()));
    const auto& c2 = cluster_of(polarity, cluster2);
    const std::string subj(kSubjects[static_cast<std::size_t>(subject)][below(2)]);
    const std::string adj1(c1[below(4)]);
    const std::string adj2(c2[below(4)]);
    const std::string aspect_word(kAspects[static_cast<std::size_t>(aspect)]);
    const std::string intens = below(2) ? std::string(kIntensifiers[below(kIntensifiers.size())]) + " " : "";
    const std::string filler = below(3) == 0 ? " " + std::string(kFillers[below(kFillers.size())]) : "";

    std::string text;
    switch (below(4)) {
        case 0: text = "the " + subj + " was " + intens + adj1 + filler; break;
        case 1: text = "the " + subj + " was " + intens + adj1 + " and the " + aspect_word + " felt " + adj2; break;
        case 2: text = "i thought the " + subj + " was " + intens + adj1 + filler; break;
        default: text = "a " + intens + adj1 + " " + subj + " with a " + adj2 + " " + aspect_word; break;
    }
    return ToySentence{text, polarity, subject, cluster, aspect};
}

ToySentence ToyLanguage::sentence() {
    const int polarity = static_cast<int>(below(2));
    const int subject = static_cast<int>(below(kSubjects.size()));
    const int cluster = static_cast<int>(below(kPositive.size()));
    const int aspect = static_cast<int>(below(kAspects.size()));
    return render(polarity, subject, cluster, aspect);
}

ToySentence ToyLanguage::paraphrase(const ToySentence& s) { return render(s.polarity, s.subject, s.cluster, s.aspect); }

std::vector<std::string> ToyLanguage::corpus(std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sentence().text);
    return out;
}

std::vector<ToyLabeled> ToyLanguage::sentiment(std::size_t n) {
    std::vector<ToyLabeled> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ToySentence s = sentence();
        out.push_back({s.text, s.polarity});
    }
    return out;
}

std::vector<ToyPair> ToyLanguage::sts(std::size_t n) {
    std::vector<ToyPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ToySentence a = sentence();
        ToySentence b;
        switch (below(3)) {
            case 0: b = paraphrase(a); break;
            case 1: b = render(a.polarity, static_cast<int>(below(kSubjects.size())), static_cast<int>(below(5)),
                               static_cast<int>(below(kAspects.size())));
                    break;
            default: b = sentence(); break;
        }
        // Weighted agreement 0.4/0.3/0.2/0.1 on the 0-5 scale, kept in exact halves.
        const int points = 4 * (a.polarity == b.polarity) + 3 * (a.subject == b.subject) +
                           2 * (a.cluster == b.cluster && a.polarity == b.polarity) + (a.aspect == b.aspect);
        out.push_back({a.text, b.text, 0.5 * points});
    }
    return out;
}

std::map<std::string, std::vector<std::string>> ToyLanguage::lexicon() {
    std::map<std::string, std::vector<std::string>> lex;
    auto add_cluster = [&lex](auto const& words) {
        for (auto w : words) {
            auto& syns = lex[std::string(w)];
            for (auto s : words) {
                if (s != w) syns.emplace_back(s);
            }
        }
    };
    for (const auto& c : kPositive) add_cluster(c);
    for (const auto& c : kNegative) add_cluster(c);
    for (const auto& s : kSubjects) add_cluster(s);
    return lex;
}

}  // namespace robust_embed
