// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "slotspe/config.hpp"
#include "slotspe/params.hpp"
#include "slotspe/slot_encoder.hpp"

namespace slotspe {

// Reconstruction heads decode slots back to instance embeddings. Each head is
// one pre-norm decoder block: cross-attention from queries to slots, then a
// two-layer feed-forward, both residual.
//
// Shared entries: `positions` (M_g x D) and the frozen `qmap` (D -> D).
// Per head `<prefix>.`: ln_q, ln_kv, q.w, k.w, v.w, o.w, ln_ff, ff1, ff2.

inline constexpr const char* kPositions = "positions";
inline constexpr const char* kQueryMap = "qmap";

void add_decoder_params(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng);

/// Position table and frozen query map.
void add_recon_shared_params(ParamStore& store, std::size_t genomic_instances, std::size_t width, Rng& rng);

/// queries (N x D), slots (S x D) -> N x D.
Var decoder_block(BoundParams& p, const std::string& prefix, Var queries, Var slots);

struct Reconstruction {
    Var features;  ///< reconstructed instances
    Var loss;      ///< 1x1, invalid when no target was given
};

/// Mean squared error over all M_g * D entries against `target`.
Reconstruction reconstruct_genomic(BoundParams& p, const std::string& head, Var slots, Var target);

/// 1 - mean cosine between reconstructed and original rows; queries come
/// from the frozen map applied to `bag`.
Reconstruction reconstruct_histology(BoundParams& p, const std::string& head, Var slots, Var bag);

/// Slot attention over histology instances with the genomic branch's slot
/// parameters. With CrossInit::encoded_genomic, `genomic_slots` must be valid.
SlotSet cross_modal_encode(BoundParams& p, const std::string& genomic_prefix, Var histology_bag,
                           std::size_t iterations, InitMode mode, Rng* rng, Aggregation aggregation,
                           CrossInit init = CrossInit::learned_init, Var genomic_slots = {});

/// Decodes cross-modal slots to pathway embeddings; the loss is only formed
/// when `target` is valid.
Reconstruction cross_modal_reconstruct(BoundParams& p, const std::string& head, Var cross_slots, Var target = {});

}  // namespace slotspe
