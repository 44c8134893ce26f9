// Regenerates the bundled toy datasets: make_toy_data <dir> [seed]
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "robust_embed/attacks.hpp"
#include "robust_embed/evaluation.hpp"
#include "robust_embed/rng.hpp"
#include "robust_embed/toydata.hpp"

int main(int argc, char** argv) {
    using namespace robust_embed;
    if (argc < 2 || argc > 3) {
        std::cerr << "usage: make_toy_data <dir> [seed]\n";
        return 1;
    }
    try {
        const std::filesystem::path dir = argv[1];
        const std::uint64_t seed = argc == 3 ? std::stoull(argv[2]) : 2024;
        std::filesystem::create_directories(dir);

        ToyLanguage corpus_lang(derive_seed(seed, "corpus"));
        std::ofstream corpus(dir / "toy_corpus.txt");
        for (const auto& line : corpus_lang.corpus(512)) corpus << line << '\n';

        ToyLanguage sts_lang(derive_seed(seed, "sts"));
        std::vector<StsExample> sts;
        for (const auto& p : sts_lang.sts(200)) sts.push_back({p.a, p.b, p.score});
        save_sts_tsv(dir / "mini_sts.tsv", sts);

        auto labeled = [](ToyLanguage lang, std::size_t n) {
            std::vector<LabeledText> out;
            for (const auto& ex : lang.sentiment(n)) out.push_back({ex.text, ex.label});
            return out;
        };
        save_classification_tsv(dir / "sentiment_train.tsv", labeled(ToyLanguage(derive_seed(seed, "train")), 400));
        save_classification_tsv(dir / "sentiment_test.tsv", labeled(ToyLanguage(derive_seed(seed, "test")), 200));

        Lexicon(ToyLanguage::lexicon()).save(dir / "lexicon.tsv");
        std::cout << "wrote toy data to " << dir.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
