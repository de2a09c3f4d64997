// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slotspe/checkpoint.hpp"
#include "slotspe/cohort.hpp"
#include "slotspe/stats.hpp"
#include "slotspe/survival.hpp"

namespace slotspe {

struct EpochLog {
    std::size_t epoch = 0;  ///< 1-based
    LossReport loss;        ///< mean over the epoch's patients
    std::size_t steps = 0;
    std::size_t skipped_steps = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> log;
};

/// Worker threads for per-patient passes: $SLOTSPE_THREADS, else 1.
std::size_t worker_threads();

/// Trains on the `train` rows of `data`. Every patient needs a time bin.
/// Throws DivergenceError after two consecutive batches with a non-finite
/// loss.
TrainResult train(const TrainConfig& config, const Dataset& data, std::span<const std::size_t> train,
                  std::size_t fold = 0, const std::function<void(const EpochLog&)>& on_epoch = {});

struct PatientPrediction {
    std::string patient_id;
    double time_months = 0.0;
    int censor = 0;
    int time_bin = 0;
    double risk = 0.0;
    /// 1 when risk is above the cutoff (high-risk group).
    int high_risk = 0;
    std::vector<double> hazards;
    std::vector<double> survival;
};

struct EvalMetrics {
    std::size_t fold = 0;
    bool missing_genomics = false;
    double c_index = 0.0;
    double risk_cutoff = 0.0;
    std::optional<LogRankResult> logrank;
    std::optional<BootstrapResult> rmst;
    std::vector<PatientPrediction> predictions;
};

/// Predicts every `rows` patient, splits them at the median risk and
/// computes C-index, log-rank and RMST statistics. With missing_genomics the
/// genomic bags are never read; they are imputed from histology.
EvalMetrics evaluate(const Checkpoint& ckpt, const Dataset& data, std::span<const std::size_t> rows,
                     bool missing_genomics);

/// Metrics JSON document (predictions excluded).
std::string metrics_json(const EvalMetrics& m);
/// patient_id,time_months,censor,time_bin,risk,high_risk
std::string predictions_csv(const std::vector<PatientPrediction>& p);
std::vector<PatientPrediction> parse_predictions_csv(const std::string& text);

struct InferResult {
    HazardCurve curve;
    std::vector<double> logits;
    bool imputed = false;
    std::optional<FeatureBag> imputed_genomic;
    Tensor attention_histology;
    Tensor attention_genomic;
    Tensor scores_histology, hard_histology, weights_histology;
    Tensor scores_genomic, hard_genomic, weights_genomic;
};

/// Deterministic single-patient prediction; genomics are imputed when null.
InferResult infer(const Model& model, const FeatureBag& histology, const FeatureBag* genomic);

}  // namespace slotspe
