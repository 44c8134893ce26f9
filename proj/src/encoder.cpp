#include "robust_embed/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "robust_embed/rng.hpp"

namespace robust_embed {

namespace {

std::string layer_name(std::size_t layer, std::string_view suffix) {
    return "layer" + std::to_string(layer) + "." + std::string(suffix);
}

Var linear(Graph& g, Var x, Var w, Var b) { return add_row(g, matmul(g, x, w), b); }

}  // namespace

void EncoderConfig::validate() const {
    if (vocab_size <= static_cast<std::size_t>(Vocabulary::kCls)) {
        throw std::invalid_argument("EncoderConfig: vocab_size must cover the special tokens");
    }
    if (dim == 0 || layers == 0 || heads == 0 || max_len == 0 || ffn_mult == 0) {
        throw std::invalid_argument("EncoderConfig: dim, layers, heads, max_len, ffn_mult must be positive");
    }
    if (dim % heads != 0) throw std::invalid_argument("EncoderConfig: dim must be divisible by heads");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw std::invalid_argument("EncoderConfig: dropout_p must lie in [0, 1)");
    }
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
    Matrix mask(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep_scale;
    return mask;
}

Encoder::Encoder(EncoderConfig config) : config_(config) { config_.validate(); }

Encoder::Encoder(EncoderConfig config, std::uint64_t init_seed) : Encoder(config) {
    const auto D = static_cast<Eigen::Index>(config_.dim);
    const auto F = static_cast<Eigen::Index>(config_.dim * config_.ffn_mult);
    Rng rng(init_seed);
    auto normal = [&rng](Eigen::Index r, Eigen::Index c, double std) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, std);
        return m;
    };
    const double wd = 1.0 / std::sqrt(static_cast<double>(D));
    const double wf = 1.0 / std::sqrt(static_cast<double>(F));

    params_.add("embeddings.token", normal(static_cast<Eigen::Index>(config_.vocab_size), D, 1.0));
    params_.add("embeddings.position", normal(static_cast<Eigen::Index>(config_.max_len), D, 0.1));
    params_.add("embeddings.ln.gain", Matrix::Ones(1, D));
    params_.add("embeddings.ln.bias", Matrix::Zero(1, D));
    for (std::size_t l = 0; l < config_.layers; ++l) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            params_.add(layer_name(l, std::string("attn.") + w), normal(D, D, wd));
            params_.add(layer_name(l, std::string("attn.b") + (w + 1)), Matrix::Zero(1, D));
        }
        params_.add(layer_name(l, "ln1.gain"), Matrix::Ones(1, D));
        params_.add(layer_name(l, "ln1.bias"), Matrix::Zero(1, D));
        params_.add(layer_name(l, "ffn.w1"), normal(D, F, wd));
        params_.add(layer_name(l, "ffn.b1"), Matrix::Zero(1, F));
        params_.add(layer_name(l, "ffn.w2"), normal(F, D, wf));
        params_.add(layer_name(l, "ffn.b2"), Matrix::Zero(1, D));
        params_.add(layer_name(l, "ln2.gain"), Matrix::Ones(1, D));
        params_.add(layer_name(l, "ln2.bias"), Matrix::Zero(1, D));
    }
    params_.add("pooler.weight", normal(D, D, wd));
    params_.add("pooler.bias", Matrix::Zero(1, D));
}

Encoder Encoder::zeros(EncoderConfig config) {
    Encoder e(config, 0);
    for (auto& p : e.params_) p.value.setZero();
    return e;
}

Var Encoder::Bound::operator[](std::string_view name) const {
    for (std::size_t i = 0; i < params_->size(); ++i) {
        if ((*params_)[i].name == name) return vars_[i];
    }
    throw std::out_of_range("unknown encoder parameter: " + std::string(name));
}

Encoder::Bound Encoder::bind(Graph& g, bool trainable) const { return Bound(params_, params_.bind(g, trainable)); }

void Encoder::check_batch(const Batch& batch) const {
    if (batch.size == 0 || batch.length == 0) throw std::invalid_argument("encoder: empty batch");
    if (batch.length > config_.max_len) {
        throw std::invalid_argument("encoder: sequence length " + std::to_string(batch.length) +
                                    " exceeds max_len " + std::to_string(config_.max_len));
    }
    if (batch.ids.size() != batch.size * batch.length || batch.mask.size() != batch.ids.size()) {
        throw std::invalid_argument("encoder: malformed batch");
    }
    for (int id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw std::out_of_range("encoder: unknown token id " + std::to_string(id));
        }
    }
}

Var Encoder::embed(Graph& g, const Bound& w, const Batch& batch, std::optional<std::uint64_t> dropout_seed) const {
    check_batch(batch);
    std::vector<int> positions(batch.ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % batch.length);
    Var tok = gather_rows(g, w["embeddings.token"], batch.ids);
    Var pos = gather_rows(g, w["embeddings.position"], positions);
    Var x = layer_norm(g, add(g, tok, pos), w["embeddings.ln.gain"], w["embeddings.ln.bias"]);
    if (dropout_seed && config_.dropout_p > 0.0) {
        x = mul(g, x, g.constant(dropout_mask(batch.ids.size(), config_.dim, config_.dropout_p, *dropout_seed)));
    }
    return x;
}

Var Encoder::encode_from_embeddings(Graph& g, const Bound& w, Var x, const Batch& batch) const {
    check_batch(batch);
    const Matrix& xv = g.value(x);
    if (xv.rows() != static_cast<Eigen::Index>(batch.size * batch.length) ||
        xv.cols() != static_cast<Eigen::Index>(config_.dim)) {
        throw std::invalid_argument("encode_from_embeddings: embeddings do not match batch shape");
    }
    if (!xv.allFinite()) throw std::domain_error("encode_from_embeddings: non-finite embeddings");

    Var h = x;
    for (std::size_t l = 0; l < config_.layers; ++l) {
        auto p = [&](std::string_view s) { return w[layer_name(l, s)]; };
        Var q = linear(g, h, p("attn.wq"), p("attn.bq"));
        Var k = linear(g, h, p("attn.wk"), p("attn.bk"));
        Var v = linear(g, h, p("attn.wv"), p("attn.bv"));
        Var a = attention(g, q, k, v, batch.size, batch.length, config_.heads, batch.mask);
        Var o = linear(g, a, p("attn.wo"), p("attn.bo"));
        h = layer_norm(g, add(g, h, o), p("ln1.gain"), p("ln1.bias"));
        Var f = linear(g, gelu(g, linear(g, h, p("ffn.w1"), p("ffn.b1"))), p("ffn.w2"), p("ffn.b2"));
        h = layer_norm(g, add(g, h, f), p("ln2.gain"), p("ln2.bias"));
    }
    std::vector<int> cls(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) cls[b] = static_cast<int>(b * batch.length);
    Var c = select_rows(g, h, cls);
    return tanh(g, linear(g, c, w["pooler.weight"], w["pooler.bias"]));
}

Matrix Encoder::embed(const Batch& batch, std::optional<std::uint64_t> dropout_seed) const {
    Graph g;
    const Bound w = bind(g, false);
    return g.value(embed(g, w, batch, dropout_seed));
}

Matrix Encoder::encode_from_embeddings(const Matrix& x, const Batch& batch) const {
    Graph g;
    const Bound w = bind(g, false);
    return g.value(encode_from_embeddings(g, w, g.constant(x), batch));
}

Matrix Encoder::encode(const Batch& batch, std::optional<std::uint64_t> dropout_seed) const {
    Graph g;
    const Bound w = bind(g, false);
    return g.value(encode_from_embeddings(g, w, embed(g, w, batch, dropout_seed), batch));
}

}  // namespace robust_embed
