// SPDX-License-Identifier: Apache-2.0
#include "slotspe/slot_encoder.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace slotspe {

namespace {
constexpr double kAggregationEps = 1e-8;
constexpr double kInitLogStd = -2.3;  // std ~ 0.1
}  // namespace

void add_slot_params(ParamStore& store, const std::string& prefix, std::size_t slots, std::size_t width, Rng& rng) {
    store.add(prefix + ".init_mean", uniform_init(rng, slots, width, 1));
    store.add(prefix + ".init_log_std", Tensor(slots, width, kInitLogStd));
    add_layer_norm(store, prefix + ".ln_input", width);
    store.add(prefix + ".ln_slots.gain", Tensor(1, width, 1.0));
    store.add(prefix + ".q.w", uniform_init(rng, width, width, width));
    store.add(prefix + ".k.w", uniform_init(rng, width, width, width));
    store.add(prefix + ".v.w", uniform_init(rng, width, width, width));
    store.add(prefix + ".gru.w_ih", uniform_init(rng, width, 3 * width, width));
    store.add(prefix + ".gru.w_hh", uniform_init(rng, width, 3 * width, width));
    store.add(prefix + ".gru.b_ih", uniform_init(rng, 1, 3 * width, width));
    store.add(prefix + ".gru.b_hh", uniform_init(rng, 1, 3 * width, width));
    add_linear(store, prefix + ".mlp1", width, width, rng);
    add_linear(store, prefix + ".mlp2", width, width, rng);
}

Var init_slots(BoundParams& p, const std::string& prefix, InitMode mode, Rng* rng) {
    Graph& g = p.graph();
    Var mean = p(prefix + ".init_mean");
    if (mode == InitMode::deterministic) return mean;
    if (rng == nullptr) throw std::invalid_argument("init_slots: stochastic mode needs an rng");
    const Shape s = g.shape(mean);
    Tensor noise(s.rows, s.cols);
    for (double& v : noise.values()) v = rng->normal();
    Var std = g.exp(p(prefix + ".init_log_std"));
    return g.add(mean, g.mul(std, g.constant(std::move(noise))));
}

ProjectedBag project_bag(BoundParams& p, const std::string& prefix, Var bag) {
    Graph& g = p.graph();
    Var normed = layer_norm(p, prefix + ".ln_input", bag);
    return {g.matmul(normed, p(prefix + ".k.w")), g.matmul(normed, p(prefix + ".v.w"))};
}

SlotSet slot_attention_step(BoundParams& p, const std::string& prefix, Var slots, const ProjectedBag& bag,
                            Aggregation aggregation) {
    Graph& g = p.graph();
    const double width = static_cast<double>(g.shape(slots).cols);
    const std::size_t instances = g.shape(bag.keys).rows;

    Var q = g.matmul(g.mul(g.layer_norm(slots), p(prefix + ".ln_slots.gain")), p(prefix + ".q.w"));
    Var logits = g.scale(g.matmul(q, g.transpose(bag.keys)), 1.0 / std::sqrt(width));
    Var attn = g.column_softmax(logits);

    Var weights = attn;
    if (aggregation == Aggregation::weighted_mean) {
        Var mass = g.matmul(attn, g.constant(Tensor(instances, 1, 1.0)));
        Var inv = g.reciprocal(g.add(mass, g.constant(Tensor::scalar(kAggregationEps))));
        weights = g.mul(attn, inv);
    }
    Var updates = g.matmul(weights, bag.values);

    Var next = g.gru_cell(updates, slots, p(prefix + ".gru.w_ih"), p(prefix + ".gru.w_hh"), p(prefix + ".gru.b_ih"),
                          p(prefix + ".gru.b_hh"));
    Var mlp = linear(p, prefix + ".mlp2", g.relu(linear(p, prefix + ".mlp1", next)));
    return {g.add(next, mlp), attn, 1};
}

SlotSet encode_from(BoundParams& p, const std::string& prefix, Var initial_slots, Var bag, std::size_t iterations,
                    Aggregation aggregation) {
    if (iterations == 0) throw std::invalid_argument("encode: iterations must be at least 1");
    const ProjectedBag projected = project_bag(p, prefix, bag);
    SlotSet out{initial_slots, Var{}, 0};
    for (std::size_t t = 0; t < iterations; ++t) {
        SlotSet step = slot_attention_step(p, prefix, out.slots, projected, aggregation);
        out.slots = step.slots;
        out.attention = step.attention;
        out.iterations = t + 1;
    }
    return out;
}

SlotSet encode(BoundParams& p, const std::string& prefix, Var bag, std::size_t iterations, InitMode mode, Rng* rng,
               Aggregation aggregation) {
    return encode_from(p, prefix, init_slots(p, prefix, mode, rng), bag, iterations, aggregation);
}

std::vector<std::size_t> assignment_map(const Tensor& attention) {
    std::vector<std::size_t> out(attention.cols(), 0);
    for (std::size_t j = 0; j < attention.cols(); ++j) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < attention.rows(); ++k)
            if (attention(k, j) > attention(best, j)) best = k;
        out[j] = best;
    }
    return out;
}

std::string assignment_csv(const Tensor& attention) {
    std::ostringstream os;
    os.precision(9);
    os << "instance_index,slot_index,max_attention\n";
    const auto slots = assignment_map(attention);
    for (std::size_t j = 0; j < slots.size(); ++j) os << j << ',' << slots[j] << ',' << attention(slots[j], j) << '\n';
    return os.str();
}

}  // namespace slotspe
