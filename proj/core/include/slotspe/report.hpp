// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slotspe/stats.hpp"
#include "slotspe/trainer.hpp"

namespace slotspe {

struct FoldReport {
    std::size_t fold = 0;
    double c_index = 0.0;
    /// Validation predictions with their high/low group.
    std::vector<PatientPrediction> predictions;
};

/// Mean and population standard deviation.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_population_std(std::span<const double> v);

struct ReportSummary {
    std::size_t folds = 0;
    MeanStd c_index;
    std::optional<LogRankResult> logrank;
    std::optional<BootstrapResult> rmst;
    KMEstimate km_high;
    KMEstimate km_low;
    double horizon = 60.0;
};

/// Per-fold C-index summary plus KM / log-rank / RMST on the pooled groups.
ReportSummary summarize(std::span<const FoldReport> folds, double horizon, std::size_t replicates,
                        std::uint64_t seed);

/// fold,c_index,n_patients
std::string folds_csv(std::span<const FoldReport> folds);
std::string summary_json(const ReportSummary& s);
/// Standalone SVG: one step path per risk group plus annotations.
std::string km_svg(const ReportSummary& s);

/// Writes folds.csv, summary.json and km.svg into `out_dir`.
void write_report(std::span<const FoldReport> folds, const std::filesystem::path& out_dir, double horizon,
                  std::size_t replicates, std::uint64_t seed);

}  // namespace slotspe
