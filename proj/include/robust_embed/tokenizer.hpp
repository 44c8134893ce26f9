#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace robust_embed {

// One tokenized sentence. ids[0] is always the [CLS] marker whose final
// hidden state is pooled into the sentence embedding.
struct TokenSequence {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    std::string raw_text;

    std::size_t length() const { return ids.size(); }
    std::size_t active() const;
};

// Packed batch of equal-length sequences, row-major (batch x len).
struct Batch {
    std::size_t size = 0;
    std::size_t length = 0;
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;

    int id(std::size_t b, std::size_t pos) const { return ids[b * length + pos]; }
    bool active(std::size_t b, std::size_t pos) const { return mask[b * length + pos] != 0; }
};

// Pads every sequence to the longest one. Throws on an empty batch.
Batch make_batch(std::span<const TokenSequence> sequences);

std::vector<std::string> split_words(std::string_view text);
std::string to_lower(std::string_view text);
std::string join_words(std::span<const std::string> words);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kFirstWord = 3;

    Vocabulary();

    // Every distinct lowercased whitespace token of `corpus`, in first-seen order.
    static Vocabulary build(std::span<const std::string> corpus);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int add(const std::string& word);
    int id(const std::string& word) const;  // kUnk when absent
    bool contains(const std::string& word) const;
    const std::string& word(int id) const;
    std::size_t size() const { return words_.size(); }

    static bool is_special(int id) { return id < kFirstWord; }

    // [CLS] followed by word ids, truncated to max_len.
    TokenSequence tokenize(std::string_view text, std::size_t max_len) const;
    TokenSequence tokenize_words(std::span<const std::string> words, std::size_t max_len) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace robust_embed
