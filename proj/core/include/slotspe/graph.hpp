// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "slotspe/tensor.hpp"

namespace slotspe {

// Reverse-mode differentiation over a recorded tape.
//
// Ops are evaluated eagerly as they are recorded, so model code reads like
// ordinary tensor code. The recording can later be replayed with new input
// bindings (forward), which is what the finite-difference checker relies on.
// Values that depend on a discrete decision (top-K masks, gather indices) are
// recorded as constants, so a replay keeps the decision taken at recording time.

enum class OpKind : std::uint8_t {
    input,
    constant,
    matmul,
    transpose,
    add,
    scale,
    row_softmax,
    column_softmax,
    sigmoid,
    relu,
    layer_norm,
    gru_cell,
    mean_pool,
    concat_rows,
    concat_cols,
    mul,
    squared_error,
    cosine_similarity,
    log,
    clamp,
    gather_rows,
    stop_gradient,
    exp,
    sum,
    reciprocal,
};

std::string_view op_name(OpKind op);

struct Var {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t id = npos;
    bool valid() const { return id != npos; }
    bool operator==(const Var&) const = default;
};

class GraphError : public std::runtime_error {
public:
    GraphError(std::size_t node, OpKind op, const std::string& what);
    std::size_t node() const { return node_; }
    OpKind op() const { return op_; }

private:
    std::size_t node_;
    OpKind op_;
};

using Bindings = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

class Graph {
public:
    /// Named free input. Binding the same name twice returns the existing node.
    Var input(const std::string& name, const Tensor& value);
    Var constant(Tensor value);

    Var matmul(Var a, Var b);
    Var transpose(Var a);
    /// Elementwise; `b` may also be 1x1, 1xC (row) or Rx1 (column) and is broadcast.
    Var add(Var a, Var b);
    Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }
    Var scale(Var a, double factor);
    Var row_softmax(Var a);
    Var column_softmax(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var exp(Var a);
    Var log(Var a);
    /// Adjoint passes through inside [lo, hi], zero outside.
    Var clamp(Var a, double lo, double hi);
    /// Per-row normalization to zero mean and unit variance (no affine part).
    Var layer_norm(Var a, double eps = 1e-5);
    /// Batched GRU cell, one row per sequence. Gate order in the packed
    /// weights is (reset, update, candidate).
    Var gru_cell(Var x, Var h, Var w_ih, Var w_hh, Var b_ih, Var b_hh);
    /// Mean over rows, 1xC.
    Var mean_pool(Var a);
    /// Sum of all entries, 1x1.
    Var sum(Var a);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(std::span<const Var> parts);
    /// Elementwise product with the same broadcast rules as add.
    Var mul(Var a, Var b);
    Var reciprocal(Var a);
    /// Mean of squared differences over all entries, 1x1.
    Var squared_error(Var a, Var b);
    /// Row-wise cosine, Rx1. Rows where either operand has zero norm yield 0
    /// and are counted in zero_norm_rows().
    Var cosine_similarity(Var a, Var b);
    Var gather_rows(Var a, std::vector<std::size_t> rows);
    Var stop_gradient(Var a);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    Shape shape(Var v) const { return nodes_.at(v.id).value.shape(); }
    OpKind op(Var v) const { return nodes_.at(v.id).op; }
    std::span<const std::size_t> parents(Var v) const { return nodes_.at(v.id).parents; }
    std::size_t size() const { return nodes_.size(); }

    std::optional<Var> find_input(const std::string& name) const;
    std::vector<std::string> input_names() const;

    void mark_output(const std::string& name, Var v) { outputs_[name] = v; }
    const std::map<std::string, Var>& outputs() const { return outputs_; }

    std::uint64_t multiply_adds() const { return multiply_adds_; }
    std::size_t zero_norm_rows() const { return zero_norm_rows_; }

    /// Re-evaluates every node with new values for the named inputs. With
    /// freeze_stop_gradient the stop-gradient nodes keep their recorded value,
    /// which makes the replayed function the one whose derivative backward()
    /// computes.
    void replay(const Bindings& bindings, bool freeze_stop_gradient = false);

    /// d(seed)/d(input) for every named input; unreachable inputs get zeros.
    Gradients backward(Var seed) const;

    /// True when `to` is an ancestor of `from` (or equal).
    bool depends_on(Var from, Var to) const;

private:
    enum class Broadcast : std::uint8_t { same, scalar, row, column };

    struct Node {
        OpKind op = OpKind::constant;
        std::vector<std::size_t> parents;
        Tensor value;
        std::vector<Tensor> saved;
        std::string name;
        double a = 0.0;
        double b = 0.0;
        Broadcast broadcast = Broadcast::same;
        bool requires_grad = false;
        std::vector<std::size_t> index;
    };

    Var record(Node node);
    void evaluate(std::size_t id);
    Broadcast broadcast_kind(OpKind op, Var a, Var b) const;
    [[noreturn]] void fail(std::size_t id, OpKind op, const std::string& what) const;

    std::vector<Node> nodes_;
    std::map<std::string, std::size_t> inputs_;
    std::map<std::string, Var> outputs_;
    std::uint64_t multiply_adds_ = 0;
    std::size_t zero_norm_rows_ = 0;
    bool frozen_stop_gradient_ = false;
};

/// Replays `graph` with `bindings` and returns every marked output.
std::map<std::string, Tensor> forward(Graph& graph, const Bindings& bindings);

/// Gradient of a scalar node with respect to all named inputs.
Gradients backward(const Graph& graph, Var seed);

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_input;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

/// Central differences over every element of every named input, compared
/// against backward() with |a-b| / max(|a|,|b|,1e-8). Stop-gradient outputs
/// are held at their values from the evaluation point. Never throws on a
/// large error; the graph is restored to `point` on return.
FiniteDiffReport finite_diff_check(Graph& graph, Var seed, const Bindings& point, double step);

}  // namespace slotspe
