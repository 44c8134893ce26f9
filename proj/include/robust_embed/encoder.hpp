#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "robust_embed/autograd.hpp"
#include "robust_embed/parameters.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t dim = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t max_len = 32;
    std::size_t ffn_mult = 4;
    double dropout_p = 0.1;

    void validate() const;
};

// Small post-LN transformer. Dropout is applied once, to the output of the
// embedding layer; the stack above it is deterministic, so two dropout seeds
// on the same batch give the two views of a positive pair.
//
// Parameter names (checkpoint contract):
//   embeddings.token, embeddings.position, embeddings.ln.{gain,bias}
//   layer<i>.attn.{wq,bq,wk,bk,wv,bv,wo,bo}, layer<i>.ln1.{gain,bias}
//   layer<i>.ffn.{w1,b1,w2,b2}, layer<i>.ln2.{gain,bias}
//   pooler.{weight,bias}
class Encoder {
public:
    Encoder(EncoderConfig config, std::uint64_t init_seed);

    // Every parameter, including layer-norm gains, set to zero.
    static Encoder zeros(EncoderConfig config);

    const EncoderConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    // Parameters bound into one graph.
    class Bound {
    public:
        Bound(const ParameterSet& params, std::vector<Var> vars) : params_(&params), vars_(std::move(vars)) {}
        Var operator[](std::string_view name) const;
        const std::vector<Var>& vars() const { return vars_; }

    private:
        const ParameterSet* params_;
        std::vector<Var> vars_;
    };

    Bound bind(Graph& g, bool trainable) const;

    // (batch*len) x dim token embeddings; no dropout when seed is empty.
    Var embed(Graph& g, const Bound& w, const Batch& batch, std::optional<std::uint64_t> dropout_seed) const;
    // batch x dim pooled sentence embeddings from token embeddings.
    Var encode_from_embeddings(Graph& g, const Bound& w, Var x, const Batch& batch) const;

    Matrix embed(const Batch& batch, std::optional<std::uint64_t> dropout_seed) const;
    Matrix encode_from_embeddings(const Matrix& x, const Batch& batch) const;
    Matrix encode(const Batch& batch, std::optional<std::uint64_t> dropout_seed) const;

private:
    explicit Encoder(EncoderConfig config);
    void check_batch(const Batch& batch) const;

    EncoderConfig config_;
    ParameterSet params_;
};

// Bernoulli keep-mask scaled by 1/(1-p), drawn from a stream seeded by `seed`.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed);

}  // namespace robust_embed
