// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "slotspe/graph.hpp"
#include "slotspe/rng.hpp"
#include "slotspe/tensor.hpp"

namespace slotspe {

/// Named parameter tensors. Frozen entries are stored and checkpointed like
/// any other parameter but never receive gradients or optimizer updates.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        bool trainable = true;
    };

    void add(const std::string& name, Tensor value, bool trainable = true);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get_mut(const std::string& name);
    bool trainable(const std::string& name) const;
    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::size_t parameter_count() const;

    bool operator==(const ParamStore& other) const;

private:
    std::map<std::string, Entry> entries_;
};

/// Per-graph view of a ParamStore: trainable entries become named graph
/// inputs, frozen entries become constants. Each name is bound at most once.
class BoundParams {
public:
    BoundParams(Graph& graph, const ParamStore& store) : graph_(graph), store_(store) {}

    Var operator()(const std::string& name);
    Graph& graph() { return graph_; }
    const ParamStore& store() const { return store_; }

private:
    Graph& graph_;
    const ParamStore& store_;
    std::map<std::string, Var> frozen_;
};

/// Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) fill, variance 1/fan_in.
Tensor uniform_init(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in);

/// Registers `<prefix>.w` (in x out) and `<prefix>.b` (1 x out).
void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);

/// x * w + b with the parameters registered by add_linear.
Var linear(BoundParams& p, const std::string& prefix, Var x);

/// Registers LayerNorm gain/bias `<prefix>.gain`, `<prefix>.bias` (1 x width).
void add_layer_norm(ParamStore& store, const std::string& prefix, std::size_t width);

/// Affine layer norm.
Var layer_norm(BoundParams& p, const std::string& prefix, Var x);

}  // namespace slotspe
