// SPDX-License-Identifier: Apache-2.0
#include "slotspe/recon_heads.hpp"

#include <cmath>
#include <stdexcept>

#include "slotspe/error.hpp"

namespace slotspe {

void add_decoder_params(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng) {
    add_layer_norm(store, prefix + ".ln_q", width);
    add_layer_norm(store, prefix + ".ln_kv", width);
    for (const char* m : {".q.w", ".k.w", ".v.w", ".o.w"})
        store.add(prefix + m, uniform_init(rng, width, width, width));
    add_layer_norm(store, prefix + ".ln_ff", width);
    add_linear(store, prefix + ".ff1", width, width, rng);
    add_linear(store, prefix + ".ff2", width, width, rng);
}

void add_recon_shared_params(ParamStore& store, std::size_t genomic_instances, std::size_t width, Rng& rng) {
    store.add(kPositions, uniform_init(rng, genomic_instances, width, 1));
    store.add(std::string(kQueryMap) + ".w", uniform_init(rng, width, width, width), false);
    store.add(std::string(kQueryMap) + ".b", uniform_init(rng, 1, width, width), false);
}

Var decoder_block(BoundParams& p, const std::string& prefix, Var queries, Var slots) {
    Graph& g = p.graph();
    const double width = static_cast<double>(g.shape(queries).cols);
    Var q = g.matmul(layer_norm(p, prefix + ".ln_q", queries), p(prefix + ".q.w"));
    Var kv = layer_norm(p, prefix + ".ln_kv", slots);
    Var k = g.matmul(kv, p(prefix + ".k.w"));
    Var v = g.matmul(kv, p(prefix + ".v.w"));
    Var attn = g.row_softmax(g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(width)));
    Var x = g.add(queries, g.matmul(g.matmul(attn, v), p(prefix + ".o.w")));
    Var ff = linear(p, prefix + ".ff2", g.relu(linear(p, prefix + ".ff1", layer_norm(p, prefix + ".ln_ff", x))));
    return g.add(x, ff);
}

namespace {

Var position_queries(BoundParams& p, Var target) {
    Var pos = p(kPositions);
    if (target.valid()) {
        const Shape want = p.graph().shape(pos);
        const Shape got = p.graph().shape(target);
        if (want != got)
            throw DataError("genomic reconstruction: target is " + got.str() + " but the position table is " +
                            want.str());
    }
    return pos;
}

}  // namespace

Reconstruction reconstruct_genomic(BoundParams& p, const std::string& head, Var slots, Var target) {
    if (!target.valid()) throw std::invalid_argument("reconstruct_genomic: target required");
    Var out = decoder_block(p, head, position_queries(p, target), slots);
    return {out, p.graph().squared_error(out, target)};
}

Reconstruction reconstruct_histology(BoundParams& p, const std::string& head, Var slots, Var bag) {
    Graph& g = p.graph();
    Var queries = linear(p, kQueryMap, bag);
    Var out = decoder_block(p, head, queries, slots);
    Var mean_cos = g.mean_pool(g.cosine_similarity(out, bag));
    Var loss = g.add(g.scale(mean_cos, -1.0), g.constant(Tensor::scalar(1.0)));
    return {out, loss};
}

SlotSet cross_modal_encode(BoundParams& p, const std::string& genomic_prefix, Var histology_bag,
                           std::size_t iterations, InitMode mode, Rng* rng, Aggregation aggregation, CrossInit init,
                           Var genomic_slots) {
    Var start;
    if (init == CrossInit::encoded_genomic) {
        if (!genomic_slots.valid())
            throw std::invalid_argument("cross_modal_encode: encoded_genomic init needs genomic slots");
        start = genomic_slots;
    } else {
        start = init_slots(p, genomic_prefix, mode, rng);
    }
    return encode_from(p, genomic_prefix, start, histology_bag, iterations, aggregation);
}

Reconstruction cross_modal_reconstruct(BoundParams& p, const std::string& head, Var cross_slots, Var target) {
    Var out = decoder_block(p, head, position_queries(p, target), cross_slots);
    Reconstruction r{out, Var{}};
    if (target.valid()) r.loss = p.graph().squared_error(out, target);
    return r;
}

}  // namespace slotspe
