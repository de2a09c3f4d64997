// SPDX-License-Identifier: Apache-2.0
#include "slotspe/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace slotspe {

namespace {

// C = A * B
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = &c(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            const double* brow = &b(p, 0);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A^T * B
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = &b(p, 0);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a(p, i);
            if (av == 0.0) continue;
            double* crow = &c(i, 0);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a(i, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = &b(j, 0);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c(i, j) += acc;
        }
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string_view op_name(OpKind op) {
    switch (op) {
        case OpKind::input: return "input";
        case OpKind::constant: return "constant";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::add: return "add";
        case OpKind::scale: return "scale";
        case OpKind::row_softmax: return "row_softmax";
        case OpKind::column_softmax: return "column_softmax";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::relu: return "relu";
        case OpKind::layer_norm: return "layer_norm";
        case OpKind::gru_cell: return "gru_cell";
        case OpKind::mean_pool: return "mean_pool";
        case OpKind::concat_rows: return "concat_rows";
        case OpKind::concat_cols: return "concat_cols";
        case OpKind::mul: return "mul";
        case OpKind::squared_error: return "squared_error";
        case OpKind::cosine_similarity: return "cosine_similarity";
        case OpKind::log: return "log";
        case OpKind::clamp: return "clamp";
        case OpKind::gather_rows: return "gather_rows";
        case OpKind::stop_gradient: return "stop_gradient";
        case OpKind::exp: return "exp";
        case OpKind::sum: return "sum";
        case OpKind::reciprocal: return "reciprocal";
    }
    return "unknown";
}

GraphError::GraphError(std::size_t node, OpKind op, const std::string& what)
    : std::runtime_error("node " + std::to_string(node) + " (" + std::string(op_name(op)) + "): " + what),
      node_(node),
      op_(op) {}

void Graph::fail(std::size_t id, OpKind op, const std::string& what) const { throw GraphError(id, op, what); }

Var Graph::record(Node node) {
    const std::size_t id = nodes_.size();
    for (std::size_t p : node.parents) {
        if (p >= id) fail(id, node.op, "parent index out of range");
        node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
    }
    nodes_.push_back(std::move(node));
    try {
        evaluate(id);
    } catch (...) {
        nodes_.pop_back();
        throw;
    }
    return Var{id};
}

Var Graph::input(const std::string& name, const Tensor& value) {
    if (auto it = inputs_.find(name); it != inputs_.end()) return Var{it->second};
    Node n;
    n.op = OpKind::input;
    n.requires_grad = true;
    n.name = name;
    n.value = value;
    n.value.quantize_in_place();
    if (!n.value.all_finite()) fail(nodes_.size(), OpKind::input, "non-finite value bound to '" + name + "'");
    const std::size_t id = nodes_.size();
    nodes_.push_back(std::move(n));
    inputs_[name] = id;
    return Var{id};
}

Var Graph::constant(Tensor value) {
    Node n;
    n.op = OpKind::constant;
    n.value = std::move(value);
    n.value.quantize_in_place();
    if (!n.value.all_finite()) fail(nodes_.size(), OpKind::constant, "non-finite constant");
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Graph::Broadcast Graph::broadcast_kind(OpKind op, Var a, Var b) const {
    const Shape sa = shape(a), sb = shape(b);
    if (sa == sb) return Broadcast::same;
    if (sb.rows == 1 && sb.cols == 1) return Broadcast::scalar;
    if (sb.rows == 1 && sb.cols == sa.cols) return Broadcast::row;
    if (sb.cols == 1 && sb.rows == sa.rows) return Broadcast::column;
    fail(nodes_.size(), op, "incompatible shapes " + sa.str() + " and " + sb.str());
}

Var Graph::matmul(Var a, Var b) {
    if (shape(a).cols != shape(b).rows)
        fail(nodes_.size(), OpKind::matmul, "inner extents differ: " + shape(a).str() + " * " + shape(b).str());
    Node n;
    n.op = OpKind::matmul;
    n.parents = {a.id, b.id};
    return record(std::move(n));
}

Var Graph::transpose(Var a) {
    Node n;
    n.op = OpKind::transpose;
    n.parents = {a.id};
    return record(std::move(n));
}

Var Graph::add(Var a, Var b) {
    Node n;
    n.op = OpKind::add;
    n.broadcast = broadcast_kind(OpKind::add, a, b);
    n.parents = {a.id, b.id};
    return record(std::move(n));
}

Var Graph::mul(Var a, Var b) {
    Node n;
    n.op = OpKind::mul;
    n.broadcast = broadcast_kind(OpKind::mul, a, b);
    n.parents = {a.id, b.id};
    return record(std::move(n));
}

Var Graph::scale(Var a, double factor) {
    Node n;
    n.op = OpKind::scale;
    n.parents = {a.id};
    n.a = factor;
    return record(std::move(n));
}

#define SLOTSPE_UNARY(fn, kind)    \
    Var Graph::fn(Var a) {         \
        Node n;                    \
        n.op = OpKind::kind;       \
        n.parents = {a.id};        \
        return record(std::move(n)); \
    }

SLOTSPE_UNARY(row_softmax, row_softmax)
SLOTSPE_UNARY(column_softmax, column_softmax)
SLOTSPE_UNARY(sigmoid, sigmoid)
SLOTSPE_UNARY(relu, relu)
SLOTSPE_UNARY(exp, exp)
SLOTSPE_UNARY(log, log)
SLOTSPE_UNARY(mean_pool, mean_pool)
SLOTSPE_UNARY(sum, sum)
SLOTSPE_UNARY(reciprocal, reciprocal)
SLOTSPE_UNARY(stop_gradient, stop_gradient)

#undef SLOTSPE_UNARY

Var Graph::clamp(Var a, double lo, double hi) {
    if (!(lo <= hi)) fail(nodes_.size(), OpKind::clamp, "empty clamp interval");
    Node n;
    n.op = OpKind::clamp;
    n.parents = {a.id};
    n.a = lo;
    n.b = hi;
    return record(std::move(n));
}

Var Graph::layer_norm(Var a, double eps) {
    Node n;
    n.op = OpKind::layer_norm;
    n.parents = {a.id};
    n.a = eps;
    return record(std::move(n));
}

Var Graph::gru_cell(Var x, Var h, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
    const Shape sx = shape(x), sh = shape(h);
    const std::size_t hidden = sh.cols;
    const auto bad = [&](const std::string& what) { fail(nodes_.size(), OpKind::gru_cell, what); };
    if (sx.rows != sh.rows) bad("x and h row counts differ: " + sx.str() + " vs " + sh.str());
    if (shape(w_ih) != Shape{sx.cols, 3 * hidden}) bad("w_ih must be " + Shape{sx.cols, 3 * hidden}.str());
    if (shape(w_hh) != Shape{hidden, 3 * hidden}) bad("w_hh must be " + Shape{hidden, 3 * hidden}.str());
    if (shape(b_ih) != Shape{1, 3 * hidden} || shape(b_hh) != Shape{1, 3 * hidden}) bad("gru biases must be 1x3H");
    Node n;
    n.op = OpKind::gru_cell;
    n.parents = {x.id, h.id, w_ih.id, w_hh.id, b_ih.id, b_hh.id};
    return record(std::move(n));
}

Var Graph::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) fail(nodes_.size(), OpKind::concat_rows, "no parts");
    Node n;
    n.op = OpKind::concat_rows;
    for (Var p : parts) {
        if (shape(p).cols != shape(parts[0]).cols) fail(nodes_.size(), OpKind::concat_rows, "column extents differ");
        n.parents.push_back(p.id);
    }
    return record(std::move(n));
}

Var Graph::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) fail(nodes_.size(), OpKind::concat_cols, "no parts");
    Node n;
    n.op = OpKind::concat_cols;
    for (Var p : parts) {
        if (shape(p).rows != shape(parts[0]).rows) fail(nodes_.size(), OpKind::concat_cols, "row extents differ");
        n.parents.push_back(p.id);
    }
    return record(std::move(n));
}

Var Graph::squared_error(Var a, Var b) {
    if (shape(a) != shape(b)) fail(nodes_.size(), OpKind::squared_error, "shapes differ: " + shape(a).str() + " vs " + shape(b).str());
    Node n;
    n.op = OpKind::squared_error;
    n.parents = {a.id, b.id};
    return record(std::move(n));
}

Var Graph::cosine_similarity(Var a, Var b) {
    if (shape(a) != shape(b)) fail(nodes_.size(), OpKind::cosine_similarity, "shapes differ: " + shape(a).str() + " vs " + shape(b).str());
    Node n;
    n.op = OpKind::cosine_similarity;
    n.parents = {a.id, b.id};
    return record(std::move(n));
}

Var Graph::gather_rows(Var a, std::vector<std::size_t> rows) {
    for (std::size_t r : rows)
        if (r >= shape(a).rows) fail(nodes_.size(), OpKind::gather_rows, "row index " + std::to_string(r) + " out of range");
    Node n;
    n.op = OpKind::gather_rows;
    n.parents = {a.id};
    n.index = std::move(rows);
    return record(std::move(n));
}

void Graph::evaluate(std::size_t id) {
    Node& n = nodes_[id];
    const auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].value; };

    switch (n.op) {
        case OpKind::input:
        case OpKind::constant:
            return;
        case OpKind::stop_gradient:
            if (frozen_stop_gradient_ && !n.value.empty()) return;
            n.value = in(0);
            break;
        case OpKind::matmul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (a.cols() != b.rows()) fail(id, n.op, "inner extents differ");
            Tensor out(a.rows(), b.cols());
            gemm_nn(a, b, out);
            multiply_adds_ += static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols();
            n.value = std::move(out);
            break;
        }
        case OpKind::transpose: {
            const Tensor& a = in(0);
            Tensor out(a.cols(), a.rows());
            for (std::size_t i = 0; i < a.rows(); ++i)
                for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
            n.value = std::move(out);
            break;
        }
        case OpKind::add:
        case OpKind::mul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            Tensor out(a.rows(), a.cols());
            const bool is_add = n.op == OpKind::add;
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < a.cols(); ++j) {
                    double bv = 0.0;
                    switch (n.broadcast) {
                        case Broadcast::same: bv = b(i, j); break;
                        case Broadcast::scalar: bv = b[0]; break;
                        case Broadcast::row: bv = b(0, j); break;
                        case Broadcast::column: bv = b(i, 0); break;
                    }
                    out(i, j) = is_add ? a(i, j) + bv : a(i, j) * bv;
                }
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::scale: {
            Tensor out = in(0);
            for (double& v : out.values()) v *= n.a;
            n.value = std::move(out);
            break;
        }
        case OpKind::row_softmax: {
            Tensor out = in(0);
            for (std::size_t i = 0; i < out.rows(); ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < out.cols(); ++j) mx = std::max(mx, out(i, j));
                double total = 0.0;
                for (std::size_t j = 0; j < out.cols(); ++j) {
                    out(i, j) = std::exp(out(i, j) - mx);
                    total += out(i, j);
                }
                for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) /= total;
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::column_softmax: {
            Tensor out = in(0);
            const std::size_t rows = out.rows(), cols = out.cols();
            std::vector<double> mx(cols, -std::numeric_limits<double>::infinity()), total(cols, 0.0);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) mx[j] = std::max(mx[j], out(i, j));
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) {
                    out(i, j) = std::exp(out(i, j) - mx[j]);
                    total[j] += out(i, j);
                }
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) out(i, j) /= total[j];
            n.value = std::move(out);
            break;
        }
        case OpKind::sigmoid: {
            Tensor out = in(0);
            for (double& v : out.values()) v = sigmoid_scalar(v);
            n.value = std::move(out);
            break;
        }
        case OpKind::relu: {
            Tensor out = in(0);
            for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
            n.value = std::move(out);
            break;
        }
        case OpKind::exp: {
            Tensor out = in(0);
            for (double& v : out.values()) v = std::exp(v);
            n.value = std::move(out);
            break;
        }
        case OpKind::log: {
            Tensor out = in(0);
            for (double& v : out.values()) v = std::log(v);
            n.value = std::move(out);
            break;
        }
        case OpKind::reciprocal: {
            Tensor out = in(0);
            for (double& v : out.values()) v = 1.0 / v;
            n.value = std::move(out);
            break;
        }
        case OpKind::clamp: {
            Tensor out = in(0);
            for (double& v : out.values()) v = std::clamp(v, n.a, n.b);
            n.value = std::move(out);
            break;
        }
        case OpKind::layer_norm: {
            const Tensor& a = in(0);
            Tensor out(a.rows(), a.cols());
            Tensor inv_std(a.rows(), 1);
            const double cols = static_cast<double>(a.cols());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                double mean = 0.0;
                for (std::size_t j = 0; j < a.cols(); ++j) mean += a(i, j);
                mean /= cols;
                double var = 0.0;
                for (std::size_t j = 0; j < a.cols(); ++j) var += (a(i, j) - mean) * (a(i, j) - mean);
                var /= cols;
                const double is = 1.0 / std::sqrt(var + n.a);
                inv_std(i, 0) = is;
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = (a(i, j) - mean) * is;
            }
            // The adjoint uses the unrounded normalized values.
            n.saved = {std::move(inv_std), out};
            n.value = std::move(out);
            break;
        }
        case OpKind::gru_cell: {
            const Tensor& x = in(0);
            const Tensor& h = in(1);
            const Tensor& w_ih = in(2);
            const Tensor& w_hh = in(3);
            const Tensor& b_ih = in(4);
            const Tensor& b_hh = in(5);
            const std::size_t rows = h.rows(), hidden = h.cols();
            Tensor gi(rows, 3 * hidden), gh(rows, 3 * hidden);
            gemm_nn(x, w_ih, gi);
            gemm_nn(h, w_hh, gh);
            multiply_adds_ += static_cast<std::uint64_t>(rows) * 3 * hidden * (x.cols() + hidden);
            Tensor r(rows, hidden), z(rows, hidden), cand(rows, hidden), ghn(rows, hidden), out(rows, hidden);
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < hidden; ++j) {
                    const double rv = sigmoid_scalar(gi(i, j) + b_ih(0, j) + gh(i, j) + b_hh(0, j));
                    const double zv = sigmoid_scalar(gi(i, hidden + j) + b_ih(0, hidden + j) + gh(i, hidden + j) +
                                                     b_hh(0, hidden + j));
                    const double hn = gh(i, 2 * hidden + j) + b_hh(0, 2 * hidden + j);
                    const double nv = std::tanh(gi(i, 2 * hidden + j) + b_ih(0, 2 * hidden + j) + rv * hn);
                    r(i, j) = rv;
                    z(i, j) = zv;
                    cand(i, j) = nv;
                    ghn(i, j) = hn;
                    out(i, j) = (1.0 - zv) * nv + zv * h(i, j);
                }
            }
            n.saved = {std::move(r), std::move(z), std::move(cand), std::move(ghn)};
            n.value = std::move(out);
            break;
        }
        case OpKind::mean_pool: {
            const Tensor& a = in(0);
            Tensor out(1, a.cols());
            for (std::size_t i = 0; i < a.rows(); ++i)
                for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
            for (double& v : out.values()) v /= static_cast<double>(a.rows());
            n.value = std::move(out);
            break;
        }
        case OpKind::sum: {
            double total = 0.0;
            for (double v : in(0).values()) total += v;
            n.value = Tensor::scalar(total);
            break;
        }
        case OpKind::concat_rows: {
            std::size_t rows = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) rows += in(k).rows();
            Tensor out(rows, in(0).cols());
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                const auto src = in(k).values();
                std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
                offset += src.size();
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::concat_cols: {
            std::size_t cols = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) cols += in(k).cols();
            const std::size_t rows = in(0).rows();
            Tensor out(rows, cols);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                const Tensor& part = in(k);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < part.cols(); ++j) out(i, offset + j) = part(i, j);
                offset += part.cols();
            }
            n.value = std::move(out);
            break;
        }
        case OpKind::squared_error: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            double total = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
            n.value = Tensor::scalar(total / static_cast<double>(a.size()));
            break;
        }
        case OpKind::cosine_similarity: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            Tensor out(a.rows(), 1), norms(a.rows(), 2);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (std::size_t j = 0; j < a.cols(); ++j) {
                    dot += a(i, j) * b(i, j);
                    na += a(i, j) * a(i, j);
                    nb += b(i, j) * b(i, j);
                }
                na = std::sqrt(na);
                nb = std::sqrt(nb);
                norms(i, 0) = na;
                norms(i, 1) = nb;
                if (na == 0.0 || nb == 0.0) {
                    ++zero_norm_rows_;
                    out(i, 0) = 0.0;
                } else {
                    out(i, 0) = dot / (na * nb);
                }
            }
            n.saved = {std::move(norms)};
            n.value = std::move(out);
            break;
        }
        case OpKind::gather_rows: {
            const Tensor& a = in(0);
            Tensor out(n.index.size(), a.cols());
            for (std::size_t i = 0; i < n.index.size(); ++i)
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(n.index[i], j);
            n.value = std::move(out);
            break;
        }
    }
    n.value.quantize_in_place();
    if (!n.value.all_finite()) fail(id, n.op, "non-finite output");
}

std::optional<Var> Graph::find_input(const std::string& name) const {
    if (auto it = inputs_.find(name); it != inputs_.end()) return Var{it->second};
    return std::nullopt;
}

std::vector<std::string> Graph::input_names() const {
    std::vector<std::string> names;
    names.reserve(inputs_.size());
    for (const auto& [name, id] : inputs_) names.push_back(name);
    return names;
}

void Graph::replay(const Bindings& bindings, bool freeze_stop_gradient) {
    for (const auto& [name, value] : bindings) {
        auto it = inputs_.find(name);
        if (it == inputs_.end()) continue;
        Node& n = nodes_[it->second];
        if (value.shape() != n.value.shape())
            fail(it->second, OpKind::input,
                 "binding '" + name + "' has shape " + value.shape().str() + ", expected " + n.value.shape().str());
        n.value = value;
        n.value.quantize_in_place();
        if (!n.value.all_finite()) fail(it->second, OpKind::input, "non-finite value bound to '" + name + "'");
    }
    frozen_stop_gradient_ = freeze_stop_gradient;
    multiply_adds_ = 0;
    zero_norm_rows_ = 0;
    try {
        for (std::size_t id = 0; id < nodes_.size(); ++id) evaluate(id);
    } catch (...) {
        frozen_stop_gradient_ = false;
        throw;
    }
    frozen_stop_gradient_ = false;
}

bool Graph::depends_on(Var from, Var to) const {
    if (from.id < to.id) return false;
    std::vector<char> live(from.id + 1, 0);
    live[from.id] = 1;
    for (std::size_t id = from.id + 1; id-- > to.id;) {
        if (!live[id]) continue;
        if (id == to.id) return true;
        for (std::size_t p : nodes_[id].parents) live[p] = 1;
    }
    return false;
}

Gradients Graph::backward(Var seed) const {
    if (!seed.valid() || seed.id >= nodes_.size()) throw std::invalid_argument("backward: invalid seed");
    const Node& s = nodes_[seed.id];
    if (s.value.size() != 1) fail(seed.id, s.op, "backward seed must be scalar, got " + s.value.shape().str());

    std::vector<Tensor> adj(seed.id + 1);
    adj[seed.id] = Tensor(1, 1, 1.0);

    const auto acc = [&](std::size_t parent) -> Tensor& {
        if (adj[parent].empty() && nodes_[parent].value.size() != 0)
            adj[parent] = Tensor(nodes_[parent].value.rows(), nodes_[parent].value.cols());
        return adj[parent];
    };

    for (std::size_t id = seed.id + 1; id-- > 0;) {
        if (adj[id].empty()) continue;
        const Node& n = nodes_[id];
        if (!n.requires_grad) continue;
        const auto need = [&](std::size_t k) { return nodes_[n.parents[k]].requires_grad; };
        const Tensor& dy = adj[id];
        const Tensor& y = n.value;
        const auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].value; };

        switch (n.op) {
            case OpKind::input:
            case OpKind::constant:
            case OpKind::stop_gradient:
                break;
            case OpKind::matmul: {
                if (need(0)) gemm_nt(dy, in(1), acc(n.parents[0]));
                if (need(1)) gemm_tn(in(0), dy, acc(n.parents[1]));
                break;
            }
            case OpKind::transpose: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < dy.rows(); ++i)
                    for (std::size_t j = 0; j < dy.cols(); ++j) da(j, i) += dy(i, j);
                break;
            }
            case OpKind::add:
            case OpKind::mul: {
                const bool is_add = n.op == OpKind::add;
                const Tensor& a = in(0);
                const Tensor& b = in(1);
                Tensor& da = acc(n.parents[0]);
                Tensor& db = acc(n.parents[1]);
                for (std::size_t i = 0; i < dy.rows(); ++i) {
                    for (std::size_t j = 0; j < dy.cols(); ++j) {
                        double* bslot = nullptr;
                        double bv = 0.0;
                        switch (n.broadcast) {
                            case Broadcast::same: bslot = &db(i, j); bv = b(i, j); break;
                            case Broadcast::scalar: bslot = &db[0]; bv = b[0]; break;
                            case Broadcast::row: bslot = &db(0, j); bv = b(0, j); break;
                            case Broadcast::column: bslot = &db(i, 0); bv = b(i, 0); break;
                        }
                        const double g = dy(i, j);
                        if (is_add) {
                            da(i, j) += g;
                            *bslot += g;
                        } else {
                            da(i, j) += g * bv;
                            *bslot += g * a(i, j);
                        }
                    }
                }
                break;
            }
            case OpKind::scale: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += n.a * dy[i];
                break;
            }
            case OpKind::row_softmax: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j) da(i, j) += y(i, j) * (dy(i, j) - dot);
                }
                break;
            }
            case OpKind::column_softmax: {
                Tensor& da = acc(n.parents[0]);
                std::vector<double> dot(y.cols(), 0.0);
                for (std::size_t i = 0; i < y.rows(); ++i)
                    for (std::size_t j = 0; j < y.cols(); ++j) dot[j] += dy(i, j) * y(i, j);
                for (std::size_t i = 0; i < y.rows(); ++i)
                    for (std::size_t j = 0; j < y.cols(); ++j) da(i, j) += y(i, j) * (dy(i, j) - dot[j]);
                break;
            }
            case OpKind::sigmoid: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case OpKind::relu: {
                Tensor& da = acc(n.parents[0]);
                const Tensor& a = in(0);
                for (std::size_t i = 0; i < y.size(); ++i)
                    if (a[i] > 0.0) da[i] += dy[i];
                break;
            }
            case OpKind::exp: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] * y[i];
                break;
            }
            case OpKind::log: {
                Tensor& da = acc(n.parents[0]);
                const Tensor& a = in(0);
                for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] / a[i];
                break;
            }
            case OpKind::reciprocal: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < y.size(); ++i) da[i] -= dy[i] * y[i] * y[i];
                break;
            }
            case OpKind::clamp: {
                Tensor& da = acc(n.parents[0]);
                const Tensor& a = in(0);
                for (std::size_t i = 0; i < y.size(); ++i)
                    if (a[i] >= n.a && a[i] <= n.b) da[i] += dy[i];
                break;
            }
            case OpKind::layer_norm: {
                Tensor& da = acc(n.parents[0]);
                const Tensor& inv_std = n.saved[0];
                const Tensor& xhat = n.saved[1];
                const double cols = static_cast<double>(y.cols());
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double mean_dy = 0.0, mean_dyy = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) {
                        mean_dy += dy(i, j);
                        mean_dyy += dy(i, j) * xhat(i, j);
                    }
                    mean_dy /= cols;
                    mean_dyy /= cols;
                    for (std::size_t j = 0; j < y.cols(); ++j)
                        da(i, j) += inv_std(i, 0) * (dy(i, j) - mean_dy - xhat(i, j) * mean_dyy);
                }
                break;
            }
            case OpKind::gru_cell: {
                const Tensor& x = in(0);
                const Tensor& h = in(1);
                const Tensor& w_ih = in(2);
                const Tensor& w_hh = in(3);
                const Tensor& r = n.saved[0];
                const Tensor& z = n.saved[1];
                const Tensor& cand = n.saved[2];
                const Tensor& ghn = n.saved[3];
                const std::size_t rows = h.rows(), hidden = h.cols();
                Tensor dgi(rows, 3 * hidden), dgh(rows, 3 * hidden);
                Tensor& dh = acc(n.parents[1]);
                for (std::size_t i = 0; i < rows; ++i) {
                    for (std::size_t j = 0; j < hidden; ++j) {
                        const double g = dy(i, j);
                        const double zv = z(i, j), nv = cand(i, j), rv = r(i, j);
                        dh(i, j) += g * zv;
                        const double dn = g * (1.0 - zv) * (1.0 - nv * nv);
                        const double dz = g * (h(i, j) - nv) * zv * (1.0 - zv);
                        const double dr = dn * ghn(i, j) * rv * (1.0 - rv);
                        dgi(i, j) = dr;
                        dgi(i, hidden + j) = dz;
                        dgi(i, 2 * hidden + j) = dn;
                        dgh(i, j) = dr;
                        dgh(i, hidden + j) = dz;
                        dgh(i, 2 * hidden + j) = dn * rv;
                    }
                }
                if (need(0)) gemm_nt(dgi, w_ih, acc(n.parents[0]));
                gemm_nt(dgh, w_hh, dh);
                if (need(2)) gemm_tn(x, dgi, acc(n.parents[2]));
                if (need(3)) gemm_tn(h, dgh, acc(n.parents[3]));
                Tensor& db_ih = acc(n.parents[4]);
                Tensor& db_hh = acc(n.parents[5]);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < 3 * hidden; ++j) {
                        db_ih(0, j) += dgi(i, j);
                        db_hh(0, j) += dgh(i, j);
                    }
                break;
            }
            case OpKind::mean_pool: {
                Tensor& da = acc(n.parents[0]);
                const double inv = 1.0 / static_cast<double>(da.rows());
                for (std::size_t i = 0; i < da.rows(); ++i)
                    for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += dy(0, j) * inv;
                break;
            }
            case OpKind::sum: {
                Tensor& da = acc(n.parents[0]);
                for (double& v : da.values()) v += dy[0];
                break;
            }
            case OpKind::concat_rows: {
                std::size_t offset = 0;
                for (std::size_t k = 0; k < n.parents.size(); ++k) {
                    Tensor& da = acc(n.parents[k]);
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[offset + i];
                    offset += da.size();
                }
                break;
            }
            case OpKind::concat_cols: {
                std::size_t offset = 0;
                for (std::size_t k = 0; k < n.parents.size(); ++k) {
                    Tensor& da = acc(n.parents[k]);
                    for (std::size_t i = 0; i < da.rows(); ++i)
                        for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) += dy(i, offset + j);
                    offset += da.cols();
                }
                break;
            }
            case OpKind::squared_error: {
                const Tensor& a = in(0);
                const Tensor& b = in(1);
                Tensor& da = acc(n.parents[0]);
                Tensor& db = acc(n.parents[1]);
                const double k = 2.0 * dy[0] / static_cast<double>(a.size());
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const double g = k * (a[i] - b[i]);
                    da[i] += g;
                    db[i] -= g;
                }
                break;
            }
            case OpKind::cosine_similarity: {
                const Tensor& a = in(0);
                const Tensor& b = in(1);
                const Tensor& norms = n.saved[0];
                Tensor& da = acc(n.parents[0]);
                Tensor& db = acc(n.parents[1]);
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    const double na = norms(i, 0), nb = norms(i, 1);
                    if (na == 0.0 || nb == 0.0) continue;
                    const double c = y(i, 0), g = dy(i, 0);
                    for (std::size_t j = 0; j < a.cols(); ++j) {
                        da(i, j) += g * (b(i, j) / (na * nb) - c * a(i, j) / (na * na));
                        db(i, j) += g * (a(i, j) / (na * nb) - c * b(i, j) / (nb * nb));
                    }
                }
                break;
            }
            case OpKind::gather_rows: {
                Tensor& da = acc(n.parents[0]);
                for (std::size_t i = 0; i < n.index.size(); ++i)
                    for (std::size_t j = 0; j < da.cols(); ++j) da(n.index[i], j) += dy(i, j);
                break;
            }
        }
    }

    Gradients grads;
    for (const auto& [name, id] : inputs_) {
        if (id <= seed.id && !adj[id].empty())
            grads[name] = std::move(adj[id]);
        else
            grads[name] = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
    return grads;
}

std::map<std::string, Tensor> forward(Graph& graph, const Bindings& bindings) {
    graph.replay(bindings);
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : graph.outputs()) out[name] = graph.value(v);
    return out;
}

Gradients backward(const Graph& graph, Var seed) { return graph.backward(seed); }

FiniteDiffReport finite_diff_check(Graph& graph, Var seed, const Bindings& point, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    graph.replay(point);
    const Gradients analytic = graph.backward(seed);

    Bindings base;
    for (const auto& name : graph.input_names()) base[name] = graph.value(*graph.find_input(name));

    FiniteDiffReport report;
    for (const auto& [name, value] : base) {
        const Tensor& grad = analytic.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            Tensor probe = value;
            probe[i] = value[i] + step;
            graph.replay({{name, probe}}, true);
            const double up = graph.value(seed).item();
            probe[i] = value[i] - step;
            graph.replay({{name, probe}}, true);
            const double down = graph.value(seed).item();
            graph.replay({{name, value}}, true);

            const double numeric = (up - down) / (2.0 * step);
            const double a = grad[i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            ++report.checked;
            if (err > report.max_rel_error || report.checked == 1) {
                report.max_rel_error = err;
                report.worst_input = name;
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    graph.replay(base);
    return report;
}

}  // namespace slotspe
