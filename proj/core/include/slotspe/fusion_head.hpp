// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "slotspe/params.hpp"

namespace slotspe {

// Slot interactions after encoding: masked self-attention within each
// modality, iterative cross-attention between them with a single shared
// block, pooled concatenation and the risk head.
//
// Self-attention `<prefix>.`: ln, q.w, k.w, v.w, o.w, ln_ff, ff1, ff2.
// Cross-attention `<prefix>.`: ln, q.w, k.w, v.w, gru.*, mlp1, mlp2.
// Risk head `<prefix>.`: hidden (3D -> D), out (D -> N_t).

void add_self_attention_params(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng);
void add_cross_attention_params(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng);
void add_risk_head_params(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t bins,
                          Rng& rng);

/// Self-attention among the `selected` rows only; every other row is copied
/// through unchanged.
Var masked_self_attention(BoundParams& p, const std::string& prefix, Var slots,
                          const std::vector<std::size_t>& selected);

/// L rounds; in each round both directions read the previous round's slots.
std::pair<Var, Var> iterative_cross_attention(BoundParams& p, const std::string& prefix, Var histology_slots,
                                              Var genomic_slots, std::size_t layers);

/// [ mean(cross_h ; cross_g) | mean(self_h) | mean(self_g) ], 1 x 3D.
Var pool_concat(Graph& g, Var cross_h, Var cross_g, Var self_h, Var self_g);

/// 1 x N_t logits. The fused vector is layer-normalized (no affine part) before
/// the hidden layer.
Var risk_head(BoundParams& p, const std::string& prefix, Var fused);

}  // namespace slotspe
