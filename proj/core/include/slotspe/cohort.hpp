// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slotspe/bag.hpp"

namespace slotspe {

struct SurvivalRecord {
    std::string patient_id;
    double time_months = 0.0;
    /// 0 = event observed, 1 = right-censored.
    int censor = 0;
    /// 1-based interval index, 0 until discretize_times assigns it.
    int time_bin = 0;
};

struct Cohort {
    std::vector<SurvivalRecord> records;
    std::vector<std::filesystem::path> histology_paths;
    std::vector<std::optional<std::filesystem::path>> genomic_paths;
    /// Ascending interior edges (n_bins - 1 of them); empty until discretized.
    std::vector<double> bin_edges;

    std::size_t size() const { return records.size(); }
    std::size_t num_bins() const { return bin_edges.empty() ? 0 : bin_edges.size() + 1; }
};

/// Throws DataError on inconsistent records (censor flags, negative times,
/// path count mismatch, unsorted edges).
void validate_cohort(const Cohort& cohort);

/// Manifest: {"patients": [{"id", "time_months", "censor", "histology_path",
/// "genomic_path" | null, "time_bin"?}], "bin_edges": [...] | null}. Relative
/// bag paths resolve against the manifest's directory.
Cohort load_manifest(const std::filesystem::path& path);
void save_manifest(const Cohort& cohort, const std::filesystem::path& path);

/// Linear interpolation between order statistics of an ascending sample:
/// position p * (n - 1).
double quantile_sorted(std::span<const double> sorted, double p);

/// Edges are the 1/n .. (n-1)/n quantiles of uncensored event times; each
/// record gets 1 + (number of edges strictly below its time). Censored
/// records use the same edges. Returns the edges.
std::vector<double> discretize_times(Cohort& cohort, std::size_t n_bins);

/// Bin of a raw time under fixed edges.
int assign_bin(std::span<const double> edges, double time_months);

/// Seeded shuffle, then contiguous folds; the first (n mod k) folds get one extra.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

FoldSplit fold_split(std::size_t n, std::size_t k, std::size_t fold, std::uint64_t seed);

/// Cohort with bags in memory.
struct Dataset {
    Cohort cohort;
    std::vector<FeatureBag> histology;
    std::vector<std::optional<FeatureBag>> genomic;

    std::size_t size() const { return cohort.size(); }
};

/// Loads every bag the cohort references. With load_genomic false no genomic
/// file is opened and every genomic slot is empty.
Dataset load_dataset(const Cohort& cohort, bool load_genomic = true);

/// Checks modality tags, a shared width d, and a shared genomic M_g.
void validate_dataset(const Dataset& data);

}  // namespace slotspe
