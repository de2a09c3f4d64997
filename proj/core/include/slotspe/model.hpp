// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "slotspe/bag.hpp"
#include "slotspe/config.hpp"
#include "slotspe/moe_decoder.hpp"
#include "slotspe/params.hpp"
#include "slotspe/recon_heads.hpp"
#include "slotspe/slot_encoder.hpp"
#include "slotspe/survival.hpp"

namespace slotspe {

namespace names {
inline constexpr const char* slot_h = "slot_h";
inline constexpr const char* slot_g = "slot_g";
inline constexpr const char* moe_h = "moe_h";
inline constexpr const char* moe_g = "moe_g";
inline constexpr const char* recon_g = "recon_g";
inline constexpr const char* recon_h = "recon_h";
inline constexpr const char* recon_cross = "recon_cross";
inline constexpr const char* self_h = "self_h";
inline constexpr const char* self_g = "self_g";
inline constexpr const char* cross = "cross";
inline constexpr const char* risk = "risk";
}  // namespace names

struct Model {
    ModelConfig config;
    ParamStore params;
    /// Optimizer steps applied so far; zero means untrained.
    std::uint64_t steps = 0;

    bool operator==(const Model&) const = default;
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

struct PatientData {
    const FeatureBag* histology = nullptr;
    /// Null when genomics are missing; the imputed bag is used instead.
    const FeatureBag* genomic = nullptr;
    /// Histology rows to use, in order; empty means all of them.
    std::vector<std::size_t> histology_rows;
};

struct ForwardOptions {
    bool training = false;
    /// Required in training mode (slot init and Gumbel noise).
    Rng* rng = nullptr;
    /// Weight of the reconstruction terms; they are not built at all when 0.
    double lambda = 0.0;
};

struct Label {
    std::size_t bin = 1;
    int censor = 0;
};

struct BranchOutput {
    SlotSet slots;
    Var scores;
    GateMask gate;
    Var weights;
    Var slot_logits;
    Var logits;  ///< gated mixture, 1 x N_t
};

struct PatientGraph {
    BranchOutput histology;
    BranchOutput genomic;
    Var fused;         ///< z, 1 x 3D
    Var logits;        ///< fused prediction, 1 x N_t
    Var imputed;       ///< reconstructed genomic bag when genomics were missing
    Var loss;          ///< per-patient total; valid with a label
    Var surv_fused, surv_hist, surv_gen;
    Var recon_g, recon_h, recon_cross;
};

/// Records one patient's forward pass (and loss when `label` is given) on `p`'s graph.
PatientGraph build_patient(BoundParams& p, const Model& model, const PatientData& data, const ForwardOptions& options,
                           const std::optional<Label>& label = std::nullopt);

/// Values of the recorded loss terms; absent terms are zero.
LossTerms loss_terms(const Graph& g, const PatientGraph& pg);

/// Genomic surrogate from histology alone, deterministic. Throws
/// std::logic_error for a model that has never been trained.
FeatureBag impute_genomic(const Model& model, const FeatureBag& histology);

/// Throws DataError when a bag does not fit the model's width or M_g.
void check_patient(const Model& model, const PatientData& data);

}  // namespace slotspe
