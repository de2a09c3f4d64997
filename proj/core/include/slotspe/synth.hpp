// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "slotspe/cohort.hpp"

namespace slotspe {

/// Planted-signal cohort generator.
///
/// Each patient carries a latent set of prognostic events. Event k adds a
/// fixed direction to a fixed block of pathway rows in the genomic bag and,
/// with probability `coupling`, a paired direction to a random subset of
/// histology instances (otherwise the histology motif presence is flipped).
/// Survival time is a deterministic decreasing function of the weighted event
/// set, with a small multiplicative jitter that never reorders distinct sets.
struct SynthConfig {
    std::size_t num_patients = 200;
    std::size_t min_instances = 64;
    std::size_t max_instances = 128;
    std::size_t genomic_instances = 32;
    std::size_t width = 32;
    std::size_t motifs = 4;
    double motif_strength = 4.0;
    double censor_fraction = 0.25;
    double noise = 1.0;
    double coupling = 0.9;
    std::uint64_t seed = 7;
};

void validate_synth_config(const SynthConfig& config);

/// In-memory cohort; records are not discretized.
Dataset generate_synthetic(const SynthConfig& config);

/// Writes bags under out_dir/{histology,genomic}/ plus out_dir/manifest.json.
Cohort synth_cohort(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace slotspe
