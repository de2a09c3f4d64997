// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "slotspe/config.hpp"
#include "slotspe/params.hpp"

namespace slotspe {

// Slot attention: S learnable slots compete (softmax over slots, per
// instance) for the instances of a bag and are refined by a GRU and a
// residual MLP over T iterations.
//
// Parameters under `<prefix>.`: init_mean, init_log_std (S x D), ln_input,
// ln_slots.gain, q.w, k.w, v.w (D x D), gru.{w_ih,w_hh,b_ih,b_hh}, mlp1, mlp2.
// The slot norm has no bias: a shift shared by every query cancels in the
// softmax over slots.

enum class InitMode { stochastic, deterministic };

void add_slot_params(ParamStore& store, const std::string& prefix, std::size_t slots, std::size_t width, Rng& rng);

struct SlotSet {
    Var slots;      ///< S x D
    Var attention;  ///< S x M, columns sum to 1 (final iteration)
    std::size_t iterations = 0;
};

/// Keys and values of a bag, projected once and reused by every iteration.
struct ProjectedBag {
    Var keys;
    Var values;
};

/// mean + exp(log_std) * N(0, 1) per element in stochastic mode, the mean otherwise.
Var init_slots(BoundParams& p, const std::string& prefix, InitMode mode, Rng* rng);

ProjectedBag project_bag(BoundParams& p, const std::string& prefix, Var bag);

SlotSet slot_attention_step(BoundParams& p, const std::string& prefix, Var slots, const ProjectedBag& bag,
                            Aggregation aggregation);

/// T iterations from init_slots().
SlotSet encode(BoundParams& p, const std::string& prefix, Var bag, std::size_t iterations, InitMode mode, Rng* rng,
               Aggregation aggregation);

/// T iterations from caller-provided initial slots.
SlotSet encode_from(BoundParams& p, const std::string& prefix, Var initial_slots, Var bag, std::size_t iterations,
                    Aggregation aggregation);

/// Per instance, the slot with the largest attention; ties go to the lowest index.
std::vector<std::size_t> assignment_map(const Tensor& attention);

/// CSV with header instance_index,slot_index,max_attention.
std::string assignment_csv(const Tensor& attention);

}  // namespace slotspe
