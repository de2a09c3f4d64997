// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slotspe/graph.hpp"

namespace slotspe {

// Discrete-time survival with a sigmoid hazard per bin. Bins are 1-based and
// censor = 1 marks a right-censored record.

inline constexpr double kHazardFloor = 1e-7;

struct HazardCurve {
    std::vector<double> hazards;   ///< h_t, clamped to [1e-7, 1 - 1e-7]
    std::vector<double> survival;  ///< S_t = prod_{k <= t} (1 - h_k)
    double risk = 0.0;             ///< -sum_t S_t
};

HazardCurve hazards_from_logits(std::span<const double> logits);

/// Curve from hazards given directly (clamped the same way).
HazardCurve curve_from_hazards(std::span<const double> hazards);

/// Event: -log S_{t-1} - log h_t. Censored: -log S_t.
double nll_loss(const HazardCurve& curve, std::size_t bin, int censor);

/// Same loss on a 1 x N_t logit node, 1x1.
Var nll_loss(Graph& g, Var logits, std::size_t bin, int censor);

/// One patient's loss terms; reconstruction terms are zero when disabled.
struct LossTerms {
    double surv_fused = 0.0;
    double surv_hist = 0.0;
    double surv_gen = 0.0;
    double recon_g = 0.0;
    double recon_h = 0.0;
    double recon_cross = 0.0;
};

struct LossReport {
    double total = 0.0;
    double surv_fused = 0.0;
    double surv_hist = 0.0;
    double surv_gen = 0.0;
    double recon_g = 0.0;
    double recon_h = 0.0;
    double recon_cross = 0.0;
    double lambda = 0.0;
};

/// Batch mean of every component; total = survival terms + lambda * reconstruction terms.
LossReport total_loss(std::span<const LossTerms> batch, double lambda);

}  // namespace slotspe
