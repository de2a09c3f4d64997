// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "slotspe/synth.hpp"
#include "slotspe/tensor.hpp"

namespace slotspe {

/// How slot attention aggregates values: the weighted mean normalizes each
/// slot's attention row, the plain sum uses the column-softmax weights as is.
enum class Aggregation { weighted_mean, sum };

/// Starting point of the histology-driven genomic slots: the genomic branch's
/// learned initialization, or its encoded slots for the same patient.
enum class CrossInit { learned_init, encoded_genomic };

struct ModelConfig {
    /// Bag width d; slots use the same width.
    std::size_t width = 256;
    std::size_t slots_histology = 16;
    std::size_t slots_genomic = 16;
    std::size_t iterations = 10;
    std::size_t fusion_layers = 3;
    double k_fraction = 0.25;
    double gate_temperature = 0.01;
    std::size_t num_bins = 4;
    /// Pathway count M_g of the cohort the model is built for.
    std::size_t genomic_instances = 330;
    Aggregation aggregation = Aggregation::weighted_mean;
    CrossInit cross_init = CrossInit::learned_init;
    bool selective_activation = true;
    bool cross_reconstruction = true;

    /// ceil(k_fraction * slots), at least 1.
    std::size_t top_k(std::size_t slots) const;

    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    ModelConfig model;
    double learning_rate = 5e-4;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lambda = 0.1;
    std::size_t patch_subsample = 4096;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
    std::size_t folds = 5;
    std::size_t bootstrap_replicates = 1000;
    double rmst_horizon = 60.0;

    bool operator==(const TrainConfig&) const = default;
};

void validate(const ModelConfig& c);
void validate(const TrainConfig& c);

/// JSON with the same field names as the structs. Parsing starts from the
/// defaults, so a document only needs the fields it overrides; unknown
/// fields are rejected.
std::string to_json_string(const TrainConfig& c);
TrainConfig train_config_from_json(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);

std::string to_json_string(const SynthConfig& c);
SynthConfig synth_config_from_json(std::string_view text);
SynthConfig load_synth_config(const std::filesystem::path& path);

}  // namespace slotspe
