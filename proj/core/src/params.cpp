// SPDX-License-Identifier: Apache-2.0
#include "slotspe/params.hpp"

#include <cmath>
#include <stdexcept>

namespace slotspe {

void ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    if (contains(name)) throw std::logic_error("parameter '" + name + "' registered twice");
    entries_.emplace(name, Entry{std::move(value), trainable});
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second.value;
}

Tensor& ParamStore::get_mut(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second.value;
}

bool ParamStore::trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second.trainable;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (const auto& [name, e] : entries_) {
        auto it = other.entries_.find(name);
        if (it == other.entries_.end() || it->second.trainable != e.trainable || !(it->second.value == e.value))
            return false;
    }
    return true;
}

Var BoundParams::operator()(const std::string& name) {
    if (store_.trainable(name)) return graph_.input(name, store_.get(name));
    if (auto it = frozen_.find(name); it != frozen_.end()) return it->second;
    Var v = graph_.constant(store_.get(name));
    frozen_.emplace(name, v);
    return v;
}

Tensor uniform_init(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    Tensor t(rows, cols);
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    t.quantize_in_place();
    return t;
}

void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    store.add(prefix + ".w", uniform_init(rng, in, out, in));
    store.add(prefix + ".b", uniform_init(rng, 1, out, in));
}

Var linear(BoundParams& p, const std::string& prefix, Var x) {
    Graph& g = p.graph();
    return g.add(g.matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

void add_layer_norm(ParamStore& store, const std::string& prefix, std::size_t width) {
    store.add(prefix + ".gain", Tensor(1, width, 1.0));
    store.add(prefix + ".bias", Tensor(1, width, 0.0));
}

Var layer_norm(BoundParams& p, const std::string& prefix, Var x) {
    Graph& g = p.graph();
    return g.add(g.mul(g.layer_norm(x), p(prefix + ".gain")), p(prefix + ".bias"));
}

}  // namespace slotspe
