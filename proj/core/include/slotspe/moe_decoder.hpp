// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "slotspe/params.hpp"

namespace slotspe {

// Selective slot activation. Every slot predicts survival logits of its own;
// a gate scores the slots, a Gumbel top-K draw keeps K of them and the
// patient prediction is the renormalized mixture over the kept slots.
//
// Parameters under `<prefix>.`: gate (D -> 1), pred1 (D -> D), pred2 (D -> N_t).

void add_moe_params(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t bins, Rng& rng);

struct GateMask {
    Var mask;  ///< 1 x S, hard + (soft - stopgrad(soft)); evaluates to `hard`
    Var soft;  ///< 1 x S relaxed probabilities
    Tensor hard;
    std::vector<std::size_t> selected;  ///< ascending
    std::size_t k = 0;
    double temperature = 1.0;
};

/// 1 x S retention scores.
Var gate_scores(BoundParams& p, const std::string& prefix, Var slots);

/// Training adds Gumbel(0, 1) noise to the scores before the relaxation and
/// the top-K; inference takes the top-K of the raw scores. Ties go to the
/// lowest index.
GateMask gumbel_topk_mask(Graph& g, Var scores, std::size_t k, double temperature, Rng* rng, bool training);

/// Mask that keeps every slot; used when selective activation is switched off.
GateMask full_mask(Graph& g, std::size_t slots);

/// softmax(r / temperature) masked by the straight-through mask and
/// renormalized over the kept slots, 1 x S.
Var renormalize_weights(Graph& g, Var scores, const GateMask& mask, double temperature);

/// S x N_t, one-hidden-layer MLP applied to each slot.
Var slot_logits(BoundParams& p, const std::string& prefix, Var slots);

/// 1 x N_t, sum_k w_k * logits_k.
Var gated_mixture(Graph& g, Var weights, Var logits);

/// CSV with header slot_index,r,selected,w.
std::string gate_csv(const Tensor& scores, const Tensor& hard, const Tensor& weights);

}  // namespace slotspe
