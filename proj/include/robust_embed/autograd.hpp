#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. A Graph is a tape: every op appends a node whose value is
// computed eagerly and whose backward closure is recorded only when one of its
// inputs requires a gradient. Graphs are single-use and never shared between
// threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace robust_embed {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
    int id = -1;
};

class Graph {
public:
    // Receives the upstream gradient and this node's own forward value.
    using Backward = std::function<void(Graph&, const Matrix& upstream, const Matrix& output)>;

    Var leaf(Matrix value, bool requires_grad = false);
    Var constant(Matrix value) { return leaf(std::move(value), false); }

    const Matrix& value(Var v) const { return nodes_[index(v)].value; }
    bool requires_grad(Var v) const { return nodes_[index(v)].requires_grad; }

    // Gradient of the last backward() root w.r.t. v; zero matrix when v did not
    // participate.
    Matrix grad(Var v) const;

    // Seeds d(root)/d(root) = 1; root must be 1x1.
    void backward(Var root);

    void accumulate(Var v, const Matrix& g);

    // Appends an op node. `backward` is dropped when no parent needs a gradient.
    Var push(Matrix value, std::span<const Var> parents, Backward backward);
    Var push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
        return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                    std::move(backward));
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };

    std::size_t index(Var v) const;

    std::vector<Node> nodes_;
};

// ---- elementwise and linear algebra ----
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);  // elementwise
Var scale(Graph& g, Var a, double c);
Var add_row(Graph& g, Var a, Var row);  // broadcasts a 1xm row over every row of a
Var matmul(Graph& g, Var a, Var b);
Var matmul_nt(Graph& g, Var a, Var b);  // a * b^T
Var tanh(Graph& g, Var a);
Var gelu(Graph& g, Var a);  // tanh approximation
Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps = 1e-12);

// ---- shape manipulation ----
Var gather_rows(Graph& g, Var table, std::span<const int> ids);
Var select_rows(Graph& g, Var a, std::span<const int> rows);
Var repeat_rows(Graph& g, Var a, std::size_t times);  // row r -> rows r*times .. r*times+times-1
Var concat_cols(Graph& g, Var a, Var b);
Var concat_rows(Graph& g, std::span<const Var> parts);
Var row_normalize(Graph& g, Var a);  // unit L2 rows; zero rows are an error

// ---- reductions and losses ----
Var sum(Graph& g, Var a);

// Multi-head scaled dot-product self-attention over a packed (batch*len) x dim
// input. Keys whose key_mask entry is 0 are excluded from every softmax.
Var attention(Graph& g, Var q, Var k, Var v, std::size_t batch, std::size_t len,
              std::size_t heads, std::span<const std::uint8_t> key_mask);

// Mean over rows of -log(sum_{pos} exp(s/tau) / sum_{valid} exp(s/tau)).
// Masks are row-major with the same shape as `sim`; every positive must also
// be valid and every row needs at least one positive.
Var contrastive_cross_entropy(Graph& g, Var sim, const std::vector<std::uint8_t>& positive,
                              const std::vector<std::uint8_t>& valid, double tau);

// Sum over rows with weight != 0 of binary cross-entropy between sigmoid(logit)
// and label (1 = positive class). `logits` is n x 1.
Var bce_with_logits_sum(Graph& g, Var logits, std::span<const double> labels,
                        std::span<const double> weights);

}  // namespace robust_embed
