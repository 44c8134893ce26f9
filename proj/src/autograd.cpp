#include "robust_embed/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace robust_embed {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
    }
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::size_t Graph::index(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw std::out_of_range("Graph: variable does not belong to this graph");
    }
    return static_cast<std::size_t>(v.id);
}

Var Graph::leaf(Matrix value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::push(Matrix value, std::span<const Var> parents, Backward backward) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[index(p)].requires_grad;
    nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix Graph::grad(Var v) const {
    const Node& n = nodes_[index(v)];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Graph::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[index(v)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Graph::backward(Var root) {
    const std::size_t r = index(root);
    if (nodes_[r].value.rows() != 1 || nodes_[r].value.cols() != 1) {
        throw std::invalid_argument("Graph::backward: root must be a scalar");
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[r].requires_grad) return;
    nodes_[r].grad = Matrix::Ones(1, 1);
    for (std::size_t i = r + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.size() == 0) continue;
        // Closures only accumulate into earlier nodes; no reallocation happens.
        n.backward(*this, n.grad, n.value);
    }
}

Var add(Graph& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "add");
    return g.push(g.value(a) + g.value(b), {a, b}, [a, b](Graph& gr, const Matrix& up, const Matrix&) {
        gr.accumulate(a, up);
        gr.accumulate(b, up);
    });
}

Var sub(Graph& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "sub");
    return g.push(g.value(a) - g.value(b), {a, b}, [a, b](Graph& gr, const Matrix& up, const Matrix&) {
        gr.accumulate(a, up);
        gr.accumulate(b, -up);
    });
}

Var mul(Graph& g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "mul");
    Matrix out = g.value(a).cwiseProduct(g.value(b));
    return g.push(std::move(out), {a, b}, [a, b](Graph& gr, const Matrix& up, const Matrix&) {
        if (gr.requires_grad(a)) gr.accumulate(a, up.cwiseProduct(gr.value(b)));
        if (gr.requires_grad(b)) gr.accumulate(b, up.cwiseProduct(gr.value(a)));
    });
}

Var scale(Graph& g, Var a, double c) {
    return g.push(g.value(a) * c, {a}, [a, c](Graph& gr, const Matrix& up, const Matrix&) {
        gr.accumulate(a, up * c);
    });
}

Var add_row(Graph& g, Var a, Var row) {
    const Matrix& av = g.value(a);
    const Matrix& rv = g.value(row);
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
        throw std::invalid_argument("add_row: row must be 1 x cols");
    }
    Matrix out = av.rowwise() + rv.row(0);
    return g.push(std::move(out), {a, row}, [a, row](Graph& gr, const Matrix& up, const Matrix&) {
        gr.accumulate(a, up);
        if (gr.requires_grad(row)) gr.accumulate(row, up.colwise().sum());
    });
}

Var matmul(Graph& g, Var a, Var b) {
    const Matrix& av = g.value(a);
    const Matrix& bv = g.value(b);
    if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix out = av * bv;
    return g.push(std::move(out), {a, b}, [a, b](Graph& gr, const Matrix& up, const Matrix&) {
        if (gr.requires_grad(a)) gr.accumulate(a, up * gr.value(b).transpose());
        if (gr.requires_grad(b)) gr.accumulate(b, gr.value(a).transpose() * up);
    });
}

Var matmul_nt(Graph& g, Var a, Var b) {
    const Matrix& av = g.value(a);
    const Matrix& bv = g.value(b);
    if (av.cols() != bv.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    Matrix out = av * bv.transpose();
    return g.push(std::move(out), {a, b}, [a, b](Graph& gr, const Matrix& up, const Matrix&) {
        if (gr.requires_grad(a)) gr.accumulate(a, up * gr.value(b));
        if (gr.requires_grad(b)) gr.accumulate(b, up.transpose() * gr.value(a));
    });
}

Var tanh(Graph& g, Var a) {
    Matrix out = g.value(a).array().tanh().matrix();
    return g.push(std::move(out), {a}, [a](Graph& gr, const Matrix& up, const Matrix& y) {
        gr.accumulate(a, (up.array() * (1.0 - y.array().square())).matrix());
    });
}

Var gelu(Graph& g, Var a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
    constexpr double kA = 0.044715;
    const Matrix& x = g.value(a);
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
    }
    return g.push(std::move(out), {a}, [a](Graph& gr, const Matrix& up, const Matrix&) {
        const Matrix& xv = gr.value(a);
        Matrix d(xv.rows(), xv.cols());
        for (Eigen::Index i = 0; i < xv.size(); ++i) {
            const double v = xv.data()[i];
            const double t = std::tanh(kC * (v + kA * v * v * v));
            const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
            d.data()[i] = up.data()[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
        gr.accumulate(a, d);
    });
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps) {
    const Matrix& xv = g.value(x);
    const Matrix& gv = g.value(gain);
    const Matrix& bv = g.value(bias);
    if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != xv.cols() || bv.cols() != xv.cols()) {
        throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
    }
    const auto n = xv.rows();
    const auto d = xv.cols();
    auto xhat = std::make_shared<Matrix>(n, d);
    auto inv_std = std::make_shared<Eigen::VectorXd>(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = xv.row(r).mean();
        const double var = (xv.row(r).array() - mean).square().mean();
        (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
        xhat->row(r) = (xv.row(r).array() - mean) * (*inv_std)(r);
    }
    Matrix out = (xhat->array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
    return g.push(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat, inv_std](Graph& gr, const Matrix& up, const Matrix&) {
                      if (gr.requires_grad(gain)) {
                          gr.accumulate(gain, up.cwiseProduct(*xhat).colwise().sum());
                      }
                      if (gr.requires_grad(bias)) gr.accumulate(bias, up.colwise().sum());
                      if (!gr.requires_grad(x)) return;
                      const Matrix& gv2 = gr.value(gain);
                      Matrix dxhat = up.array().rowwise() * gv2.row(0).array();
                      Matrix dx(up.rows(), up.cols());
                      for (Eigen::Index r = 0; r < up.rows(); ++r) {
                          const double m1 = dxhat.row(r).mean();
                          const double m2 = dxhat.row(r).cwiseProduct(xhat->row(r)).mean();
                          dx.row(r) = (*inv_std)(r) *
                                      (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
                      }
                      gr.accumulate(x, dx);
                  });
}

Var gather_rows(Graph& g, Var table, std::span<const int> ids) {
    const Matrix& tv = g.value(table);
    Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows()) {
            throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                                    std::to_string(tv.rows()) + " rows");
        }
        out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return g.push(std::move(out), {table}, [table, idx = std::move(idx)](Graph& gr, const Matrix& up, const Matrix&) {
        const Matrix& t = gr.value(table);
        Matrix d = Matrix::Zero(t.rows(), t.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += up.row(static_cast<Eigen::Index>(i));
        gr.accumulate(table, d);
    });
}

Var select_rows(Graph& g, Var a, std::span<const int> rows) {
    const Matrix& av = g.value(a);
    Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= av.rows()) throw std::out_of_range("select_rows: row out of range");
        out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
    }
    std::vector<int> idx(rows.begin(), rows.end());
    return g.push(std::move(out), {a}, [a, idx = std::move(idx)](Graph& gr, const Matrix& up, const Matrix&) {
        const Matrix& av2 = gr.value(a);
        Matrix d = Matrix::Zero(av2.rows(), av2.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += up.row(static_cast<Eigen::Index>(i));
        gr.accumulate(a, d);
    });
}

Var repeat_rows(Graph& g, Var a, std::size_t times) {
    const Matrix& av = g.value(a);
    const auto t = static_cast<Eigen::Index>(times);
    Matrix out(av.rows() * t, av.cols());
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
        for (Eigen::Index k = 0; k < t; ++k) out.row(r * t + k) = av.row(r);
    }
    return g.push(std::move(out), {a}, [a, t](Graph& gr, const Matrix& up, const Matrix&) {
        const Matrix& av2 = gr.value(a);
        Matrix d = Matrix::Zero(av2.rows(), av2.cols());
        for (Eigen::Index r = 0; r < av2.rows(); ++r) {
            for (Eigen::Index k = 0; k < t; ++k) d.row(r) += up.row(r * t + k);
        }
        gr.accumulate(a, d);
    });
}

Var concat_cols(Graph& g, Var a, Var b) {
    const Matrix& av = g.value(a);
    const Matrix& bv = g.value(b);
    if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row count mismatch");
    Matrix out(av.rows(), av.cols() + bv.cols());
    out << av, bv;
    const auto ac = av.cols();
    const auto bc = bv.cols();
    return g.push(std::move(out), {a, b}, [a, b, ac, bc](Graph& gr, const Matrix& up, const Matrix&) {
        if (gr.requires_grad(a)) gr.accumulate(a, up.leftCols(ac));
        if (gr.requires_grad(b)) gr.accumulate(b, up.rightCols(bc));
    });
}

Var concat_rows(Graph& g, std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const auto cols = g.value(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
        if (g.value(p).cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
        rows += g.value(p).rows();
    }
    Matrix out(rows, cols);
    Eigen::Index offset = 0;
    for (Var p : parts) {
        const Matrix& pv = g.value(p);
        out.middleRows(offset, pv.rows()) = pv;
        offset += pv.rows();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return g.push(std::move(out), parts, [ps = std::move(ps)](Graph& gr, const Matrix& up, const Matrix&) {
        Eigen::Index off = 0;
        for (Var p : ps) {
            const auto r = gr.value(p).rows();
            if (gr.requires_grad(p)) gr.accumulate(p, up.middleRows(off, r));
            off += r;
        }
    });
}

Var row_normalize(Graph& g, Var a) {
    const Matrix& av = g.value(a);
    auto norms = std::make_shared<Eigen::VectorXd>(av.rowwise().norm());
    for (Eigen::Index r = 0; r < norms->size(); ++r) {
        if (!((*norms)(r) > 0.0)) throw std::domain_error("row_normalize: zero-length row");
    }
    Matrix out = av.array().colwise() / norms->array();
    return g.push(std::move(out), {a}, [a, norms](Graph& gr, const Matrix& up, const Matrix& y) {
        Matrix d(up.rows(), up.cols());
        for (Eigen::Index r = 0; r < up.rows(); ++r) {
            const double proj = y.row(r).dot(up.row(r));
            d.row(r) = (up.row(r) - proj * y.row(r)) / (*norms)(r);
        }
        gr.accumulate(a, d);
    });
}

Var sum(Graph& g, Var a) {
    Matrix out(1, 1);
    out(0, 0) = g.value(a).sum();
    return g.push(std::move(out), {a}, [a](Graph& gr, const Matrix& up, const Matrix&) {
        const Matrix& av = gr.value(a);
        gr.accumulate(a, Matrix::Constant(av.rows(), av.cols(), up(0, 0)));
    });
}

Var attention(Graph& g, Var q, Var k, Var v, std::size_t batch, std::size_t len, std::size_t heads,
              std::span<const std::uint8_t> key_mask) {
    const Matrix& qv = g.value(q);
    const Matrix& kv = g.value(k);
    const Matrix& vv = g.value(v);
    const auto B = static_cast<Eigen::Index>(batch);
    const auto L = static_cast<Eigen::Index>(len);
    const auto H = static_cast<Eigen::Index>(heads);
    const auto D = qv.cols();
    if (qv.rows() != B * L || kv.rows() != B * L || vv.rows() != B * L || kv.cols() != D ||
        vv.cols() != D) {
        throw std::invalid_argument("attention: q/k/v must all be (batch*len) x dim");
    }
    if (H == 0 || D % H != 0) throw std::invalid_argument("attention: dim not divisible by heads");
    if (key_mask.size() != static_cast<std::size_t>(B * L)) {
        throw std::invalid_argument("attention: key mask size mismatch");
    }
    const Eigen::Index dh = D / H;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    auto probs = std::make_shared<std::vector<Matrix>>();
    probs->reserve(static_cast<std::size_t>(B * H));
    Matrix out = Matrix::Zero(B * L, D);
    for (Eigen::Index b = 0; b < B; ++b) {
        bool any = false;
        for (Eigen::Index j = 0; j < L; ++j) any = any || key_mask[static_cast<std::size_t>(b * L + j)] != 0;
        if (!any) throw std::invalid_argument("attention: sequence without any active position");
        for (Eigen::Index h = 0; h < H; ++h) {
            Matrix scores = qv.block(b * L, h * dh, L, dh) * kv.block(b * L, h * dh, L, dh).transpose();
            scores *= inv_sqrt;
            for (Eigen::Index i = 0; i < L; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j < L; ++j) {
                    if (key_mask[static_cast<std::size_t>(b * L + j)]) mx = std::max(mx, scores(i, j));
                }
                double total = 0.0;
                for (Eigen::Index j = 0; j < L; ++j) {
                    const double e =
                        key_mask[static_cast<std::size_t>(b * L + j)] ? std::exp(scores(i, j) - mx) : 0.0;
                    scores(i, j) = e;
                    total += e;
                }
                scores.row(i) /= total;
            }
            out.block(b * L, h * dh, L, dh) = scores * vv.block(b * L, h * dh, L, dh);
            probs->push_back(std::move(scores));
        }
    }
    return g.push(std::move(out), {q, k, v},
                  [q, k, v, B, L, H, dh, inv_sqrt, probs](Graph& gr, const Matrix& up, const Matrix&) {
                      const Matrix& qv2 = gr.value(q);
                      const Matrix& kv2 = gr.value(k);
                      const Matrix& vv2 = gr.value(v);
                      Matrix dq = Matrix::Zero(qv2.rows(), qv2.cols());
                      Matrix dk = Matrix::Zero(kv2.rows(), kv2.cols());
                      Matrix dv = Matrix::Zero(vv2.rows(), vv2.cols());
                      for (Eigen::Index b = 0; b < B; ++b) {
                          for (Eigen::Index h = 0; h < H; ++h) {
                              const Matrix& p = (*probs)[static_cast<std::size_t>(b * H + h)];
                              const auto dout = up.block(b * L, h * dh, L, dh);
                              dv.block(b * L, h * dh, L, dh) += p.transpose() * dout;
                              Matrix dp = dout * vv2.block(b * L, h * dh, L, dh).transpose();
                              Matrix ds = p.cwiseProduct(dp);
                              const Eigen::VectorXd row_dot = ds.rowwise().sum();
                              ds -= p.cwiseProduct(row_dot.replicate(1, L));
                              ds *= inv_sqrt;
                              dq.block(b * L, h * dh, L, dh) += ds * kv2.block(b * L, h * dh, L, dh);
                              dk.block(b * L, h * dh, L, dh) += ds.transpose() * qv2.block(b * L, h * dh, L, dh);
                          }
                      }
                      gr.accumulate(q, dq);
                      gr.accumulate(k, dk);
                      gr.accumulate(v, dv);
                  });
}

Var contrastive_cross_entropy(Graph& g, Var sim, const std::vector<std::uint8_t>& positive,
                              const std::vector<std::uint8_t>& valid, double tau) {
    const Matrix& s = g.value(sim);
    const auto n = s.rows();
    const auto m = s.cols();
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive_cross_entropy: tau must be positive");
    if (positive.size() != static_cast<std::size_t>(n * m) || valid.size() != positive.size()) {
        throw std::invalid_argument("contrastive_cross_entropy: mask size mismatch");
    }
    // Softmax weights over valid and over positive entries, kept for backward.
    auto w_valid = std::make_shared<Matrix>(Matrix::Zero(n, m));
    auto w_pos = std::make_shared<Matrix>(Matrix::Zero(n, m));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool has_pos = false;
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::size_t at = static_cast<std::size_t>(i * m + j);
            if (positive[at] && !valid[at]) {
                throw std::invalid_argument("contrastive_cross_entropy: positive entry not marked valid");
            }
            has_pos = has_pos || positive[at];
            if (valid[at]) mx = std::max(mx, s(i, j) / tau);
        }
        if (!has_pos) throw std::invalid_argument("contrastive_cross_entropy: row without positives");
        double z_valid = 0.0;
        double z_pos = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::size_t at = static_cast<std::size_t>(i * m + j);
            if (!valid[at]) continue;
            const double e = std::exp(s(i, j) / tau - mx);
            (*w_valid)(i, j) = e;
            z_valid += e;
            if (positive[at]) {
                (*w_pos)(i, j) = e;
                z_pos += e;
            }
        }
        w_valid->row(i) /= z_valid;
        w_pos->row(i) /= z_pos;
        total += std::log(z_valid) - std::log(z_pos);
    }
    Matrix out(1, 1);
    out(0, 0) = total / static_cast<double>(n);
    return g.push(std::move(out), {sim}, [sim, w_valid, w_pos, tau, n](Graph& gr, const Matrix& up, const Matrix&) {
        gr.accumulate(sim, (*w_valid - *w_pos) * (up(0, 0) / (tau * static_cast<double>(n))));
    });
}

Var bce_with_logits_sum(Graph& g, Var logits, std::span<const double> labels,
                        std::span<const double> weights) {
    const Matrix& x = g.value(logits);
    if (x.cols() != 1 || static_cast<std::size_t>(x.rows()) != labels.size() ||
        labels.size() != weights.size()) {
        throw std::invalid_argument("bce_with_logits_sum: logits must be n x 1 matching labels/weights");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (weights[i] == 0.0) continue;
        const double xi = x(static_cast<Eigen::Index>(i), 0);
        total += weights[i] * (labels[i] * softplus(-xi) + (1.0 - labels[i]) * softplus(xi));
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<double> w(weights.begin(), weights.end());
    return g.push(std::move(out), {logits},
                  [logits, y = std::move(y), w = std::move(w)](Graph& gr, const Matrix& up, const Matrix&) {
                      const Matrix& xv = gr.value(logits);
                      Matrix d = Matrix::Zero(xv.rows(), 1);
                      for (std::size_t i = 0; i < y.size(); ++i) {
                          const auto r = static_cast<Eigen::Index>(i);
                          d(r, 0) = up(0, 0) * w[i] * (sigmoid(xv(r, 0)) - y[i]);
                      }
                      gr.accumulate(logits, d);
                  });
}

}  // namespace robust_embed
