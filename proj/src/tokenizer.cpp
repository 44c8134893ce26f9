#include "robust_embed/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace robust_embed {

std::size_t TokenSequence::active() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

Batch make_batch(std::span<const TokenSequence> sequences) {
    if (sequences.empty()) throw std::invalid_argument("make_batch: empty batch");
    Batch batch;
    batch.size = sequences.size();
    for (const auto& s : sequences) batch.length = std::max(batch.length, s.ids.size());
    if (batch.length == 0) throw std::invalid_argument("make_batch: zero-length sequences");
    batch.ids.assign(batch.size * batch.length, Vocabulary::kPad);
    batch.mask.assign(batch.size * batch.length, 0);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const auto& s = sequences[b];
        if (s.mask.size() != s.ids.size()) throw std::invalid_argument("make_batch: ids/mask length mismatch");
        for (std::size_t i = 0; i < s.ids.size(); ++i) {
            batch.ids[b * batch.length + i] = s.ids[i];
            batch.mask[b * batch.length + i] = s.mask[i];
        }
        if (s.active() == 0) throw std::invalid_argument("make_batch: sequence without active positions");
    }
    return batch;
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) words.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return words;
}

std::string join_words(std::span<const std::string> words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

Vocabulary::Vocabulary() {
    add("[PAD]");
    add("[UNK]");
    add("[CLS]");
}

int Vocabulary::add(const std::string& word) {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    const int id = static_cast<int>(words_.size());
    words_.push_back(word);
    index_.emplace(word, id);
    return id;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& word) const { return index_.count(word) != 0; }

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
        throw std::out_of_range("Vocabulary: unknown id " + std::to_string(id));
    }
    return words_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
    Vocabulary v;
    for (const auto& line : corpus) {
        for (const auto& w : split_words(to_lower(line))) v.add(w);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path.string());
    Vocabulary v;
    v.words_.clear();
    v.index_.clear();
    std::string line;
    while (std::getline(in, line)) v.add(line);
    if (v.size() < kFirstWord || v.word(kPad) != "[PAD]" || v.word(kUnk) != "[UNK]" ||
        v.word(kCls) != "[CLS]") {
        throw std::runtime_error("vocabulary file lacks the special tokens: " + path.string());
    }
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path.string());
    for (const auto& w : words_) out << w << '\n';
}

TokenSequence Vocabulary::tokenize_words(std::span<const std::string> words, std::size_t max_len) const {
    if (max_len == 0) throw std::invalid_argument("tokenize: max_len must be positive");
    TokenSequence seq;
    seq.raw_text = join_words(words);
    seq.ids.push_back(kCls);
    for (const auto& w : words) {
        if (seq.ids.size() >= max_len) break;
        seq.ids.push_back(id(to_lower(w)));
    }
    seq.mask.assign(seq.ids.size(), 1);
    return seq;
}

TokenSequence Vocabulary::tokenize(std::string_view text, std::size_t max_len) const {
    auto words = split_words(text);
    TokenSequence seq = tokenize_words(words, max_len);
    seq.raw_text = std::string(text);
    return seq;
}

}  // namespace robust_embed
