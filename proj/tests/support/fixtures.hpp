#pragma once

// Tiny deterministic models and batches shared by the unit and acceptance suites.

#include <string>
#include <vector>

#include "robust_embed/encoder.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed::testing {

inline EncoderConfig tiny_config(std::size_t vocab = 12, std::size_t dim = 8, double dropout = 0.1) {
    EncoderConfig c;
    c.vocab_size = vocab;
    c.dim = dim;
    c.layers = 1;
    c.heads = 2;
    c.max_len = 4;
    c.ffn_mult = 2;
    c.dropout_p = dropout;
    return c;
}

// Sequences of explicit ids; shorter ones are padded by make_batch.
inline Batch batch_of(const std::vector<std::vector<int>>& rows) {
    std::vector<TokenSequence> seqs;
    for (const auto& r : rows) {
        TokenSequence s;
        s.ids = r;
        s.mask.assign(r.size(), 1);
        seqs.push_back(std::move(s));
    }
    return make_batch(seqs);
}

inline std::vector<std::string> toy_lines() {
    return {"the movie was good", "the film was great fun", "a bad meal", "the hotel was awful",
            "i thought the book was lovely", "the song was dull", "a nice game", "the dinner was terrible"};
}

}  // namespace robust_embed::testing
