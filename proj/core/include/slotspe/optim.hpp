// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "slotspe/graph.hpp"
#include "slotspe/params.hpp"

namespace slotspe {

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::uint64_t step = 0;
    /// Steps refused because a gradient was not finite.
    std::uint64_t skipped = 0;

    bool operator==(const AdamState&) const = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update of every trainable entry; entries missing
/// from `grads` see a zero gradient. Returns false (and leaves everything but
/// the skip counter untouched) when any gradient is non-finite.
bool adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr);

}  // namespace slotspe
