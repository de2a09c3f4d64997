// SPDX-License-Identifier: Apache-2.0
#include "slotspe/fusion_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slotspe {

void add_self_attention_params(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng) {
    add_layer_norm(store, prefix + ".ln", width);
    for (const char* m : {".q.w", ".k.w", ".v.w", ".o.w"})
        store.add(prefix + m, uniform_init(rng, width, width, width));
    add_layer_norm(store, prefix + ".ln_ff", width);
    add_linear(store, prefix + ".ff1", width, width, rng);
    add_linear(store, prefix + ".ff2", width, width, rng);
}

void add_cross_attention_params(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng) {
    add_layer_norm(store, prefix + ".ln", width);
    for (const char* m : {".q.w", ".k.w", ".v.w"}) store.add(prefix + m, uniform_init(rng, width, width, width));
    store.add(prefix + ".gru.w_ih", uniform_init(rng, width, 3 * width, width));
    store.add(prefix + ".gru.w_hh", uniform_init(rng, width, 3 * width, width));
    store.add(prefix + ".gru.b_ih", uniform_init(rng, 1, 3 * width, width));
    store.add(prefix + ".gru.b_hh", uniform_init(rng, 1, 3 * width, width));
    add_linear(store, prefix + ".mlp1", width, width, rng);
    add_linear(store, prefix + ".mlp2", width, width, rng);
}

void add_risk_head_params(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t bins,
                          Rng& rng) {
    add_linear(store, prefix + ".hidden", 3 * width, width, rng);
    add_linear(store, prefix + ".out", width, bins, rng);
}

Var masked_self_attention(BoundParams& p, const std::string& prefix, Var slots,
                          const std::vector<std::size_t>& selected) {
    Graph& g = p.graph();
    const std::size_t rows = g.shape(slots).rows;
    if (selected.empty()) return slots;
    std::vector<std::size_t> position(rows, rows);
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i] >= rows) throw std::out_of_range("masked_self_attention: selected index out of range");
        position[selected[i]] = i;
    }

    const double width = static_cast<double>(g.shape(slots).cols);
    Var active = g.gather_rows(slots, selected);
    Var normed = layer_norm(p, prefix + ".ln", active);
    Var q = g.matmul(normed, p(prefix + ".q.w"));
    Var k = g.matmul(normed, p(prefix + ".k.w"));
    Var v = g.matmul(normed, p(prefix + ".v.w"));
    Var attn = g.row_softmax(g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(width)));
    Var x = g.add(active, g.matmul(g.matmul(attn, v), p(prefix + ".o.w")));
    Var ff = linear(p, prefix + ".ff2", g.relu(linear(p, prefix + ".ff1", layer_norm(p, prefix + ".ln_ff", x))));
    Var refined = g.add(x, ff);
    if (selected.size() == rows && std::is_sorted(selected.begin(), selected.end())) return refined;

    // Reassemble in original order from runs of refined / untouched rows.
    std::vector<Var> parts;
    std::size_t i = 0;
    while (i < rows) {
        const bool from_refined = position[i] != rows;
        std::vector<std::size_t> run;
        while (i < rows && (position[i] != rows) == from_refined) {
            run.push_back(from_refined ? position[i] : i);
            ++i;
        }
        parts.push_back(g.gather_rows(from_refined ? refined : slots, std::move(run)));
    }
    return parts.size() == 1 ? parts.front() : g.concat_rows(parts);
}

namespace {

Var cross_update(BoundParams& p, const std::string& prefix, Var self, Var self_normed, Var other_normed) {
    Graph& g = p.graph();
    const double width = static_cast<double>(g.shape(self).cols);
    Var q = g.matmul(self_normed, p(prefix + ".q.w"));
    Var k = g.matmul(other_normed, p(prefix + ".k.w"));
    Var v = g.matmul(other_normed, p(prefix + ".v.w"));
    Var attn = g.row_softmax(g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(width)));
    Var u = g.matmul(attn, v);
    Var next = g.gru_cell(u, self, p(prefix + ".gru.w_ih"), p(prefix + ".gru.w_hh"), p(prefix + ".gru.b_ih"),
                          p(prefix + ".gru.b_hh"));
    return g.add(next, linear(p, prefix + ".mlp2", g.relu(linear(p, prefix + ".mlp1", next))));
}

}  // namespace

std::pair<Var, Var> iterative_cross_attention(BoundParams& p, const std::string& prefix, Var histology_slots,
                                              Var genomic_slots, std::size_t layers) {
    if (layers == 0) throw std::invalid_argument("iterative_cross_attention: layers must be at least 1");
    Var h = histology_slots;
    Var gsl = genomic_slots;
    for (std::size_t l = 0; l < layers; ++l) {
        Var nh = layer_norm(p, prefix + ".ln", h);
        Var ng = layer_norm(p, prefix + ".ln", gsl);
        Var next_h = cross_update(p, prefix, h, nh, ng);
        Var next_g = cross_update(p, prefix, gsl, ng, nh);
        h = next_h;
        gsl = next_g;
    }
    return {h, gsl};
}

Var pool_concat(Graph& g, Var cross_h, Var cross_g, Var self_h, Var self_g) {
    const Var joint[] = {cross_h, cross_g};
    const Var pooled[] = {g.mean_pool(g.concat_rows(joint)), g.mean_pool(self_h), g.mean_pool(self_g)};
    return g.concat_cols(pooled);
}

Var risk_head(BoundParams& p, const std::string& prefix, Var fused) {
    Graph& g = p.graph();
    return linear(p, prefix + ".out", g.relu(linear(p, prefix + ".hidden", g.layer_norm(fused))));
}

}  // namespace slotspe
