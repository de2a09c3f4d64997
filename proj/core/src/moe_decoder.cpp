// SPDX-License-Identifier: Apache-2.0
#include "slotspe/moe_decoder.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace slotspe {

namespace {
// exp() arguments are clamped to this window. Kept slots sit at or below the
// reference score, so only slots outside the selection ever reach the top.
constexpr double kExpLow = -80.0;
constexpr double kExpHigh = 30.0;
}  // namespace

void add_moe_params(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t bins, Rng& rng) {
    add_linear(store, prefix + ".gate", width, 1, rng);
    add_linear(store, prefix + ".pred1", width, width, rng);
    add_linear(store, prefix + ".pred2", width, bins, rng);
}

Var gate_scores(BoundParams& p, const std::string& prefix, Var slots) {
    Graph& g = p.graph();
    return g.transpose(linear(p, prefix + ".gate", slots));
}

GateMask gumbel_topk_mask(Graph& g, Var scores, std::size_t k, double temperature, Rng* rng, bool training) {
    const Tensor& r = g.value(scores);
    const std::size_t n = r.cols();
    if (r.rows() != 1) throw std::invalid_argument("gumbel_topk_mask: scores must be a row vector");
    if (k < 1 || k > n)
        throw std::invalid_argument("gumbel_topk_mask: K=" + std::to_string(k) + " outside [1, " +
                                    std::to_string(n) + "]");
    if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_topk_mask: temperature must be positive");
    if (training && rng == nullptr) throw std::invalid_argument("gumbel_topk_mask: training needs an rng");

    std::vector<double> perturbed(r.values().begin(), r.values().end());
    Var logits = scores;
    if (training) {
        Tensor noise(1, n);
        for (double& v : noise.values()) v = rng->gumbel();
        Var noise_var = g.constant(noise);
        logits = g.add(scores, noise_var);
        const Tensor& nq = g.value(noise_var);
        for (std::size_t i = 0; i < n; ++i) perturbed[i] += nq[i];
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return perturbed[a] > perturbed[b]; });

    GateMask m;
    m.k = k;
    m.temperature = temperature;
    m.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(m.selected.begin(), m.selected.end());
    m.hard = Tensor(1, n, 0.0);
    for (std::size_t i : m.selected) m.hard[i] = 1.0;

    m.soft = g.row_softmax(g.scale(logits, 1.0 / temperature));
    Var relaxed = g.sub(m.soft, g.stop_gradient(m.soft));
    m.mask = g.add(g.constant(m.hard), relaxed);
    return m;
}

GateMask full_mask(Graph& g, std::size_t slots) {
    GateMask m;
    m.k = slots;
    m.hard = Tensor(1, slots, 1.0);
    m.selected.resize(slots);
    std::iota(m.selected.begin(), m.selected.end(), 0);
    m.mask = g.constant(m.hard);
    m.soft = g.constant(Tensor(1, slots, 1.0 / static_cast<double>(slots)));
    return m;
}

Var renormalize_weights(Graph& g, Var scores, const GateMask& mask, double temperature) {
    const Tensor& r = g.value(scores);
    if (r.shape() != mask.hard.shape()) throw std::invalid_argument("renormalize_weights: mask does not match scores");
    if (mask.selected.empty()) throw std::invalid_argument("renormalize_weights: mask selects no slot");

    // The softmax normalizer cancels in the ratio, so scores are shifted by
    // the largest kept score and exponentiated directly.
    double top = r[mask.selected.front()];
    for (std::size_t i : mask.selected) top = std::max(top, r[i]);
    Var shifted = g.scale(g.add(scores, g.constant(Tensor::scalar(-top))), 1.0 / temperature);
    Var e = g.exp(g.clamp(shifted, kExpLow, kExpHigh));
    Var masked = g.mul(e, mask.mask);
    return g.mul(masked, g.reciprocal(g.sum(masked)));
}

Var slot_logits(BoundParams& p, const std::string& prefix, Var slots) {
    Graph& g = p.graph();
    return linear(p, prefix + ".pred2", g.relu(linear(p, prefix + ".pred1", slots)));
}

Var gated_mixture(Graph& g, Var weights, Var logits) { return g.matmul(weights, logits); }

std::string gate_csv(const Tensor& scores, const Tensor& hard, const Tensor& weights) {
    std::ostringstream os;
    os.precision(9);
    os << "slot_index,r,selected,w\n";
    for (std::size_t k = 0; k < scores.size(); ++k)
        os << k << ',' << scores[k] << ',' << (hard[k] != 0.0 ? 1 : 0) << ',' << weights[k] << '\n';
    return os.str();
}

}  // namespace slotspe
