// SPDX-License-Identifier: Apache-2.0
#include "slotspe/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "slotspe/rng.hpp"

namespace slotspe {

using nlohmann::json;

void validate_cohort(const Cohort& cohort) {
    if (cohort.histology_paths.size() != cohort.records.size() || cohort.genomic_paths.size() != cohort.records.size())
        throw DataError("cohort: bag path lists do not match the record count");
    for (const auto& r : cohort.records) {
        if (r.censor != 0 && r.censor != 1)
            throw DataError("patient '" + r.patient_id + "': censor must be 0 or 1");
        if (!std::isfinite(r.time_months) || r.time_months < 0.0)
            throw DataError("patient '" + r.patient_id + "': time_months must be finite and nonnegative");
    }
    for (std::size_t i = 1; i < cohort.bin_edges.size(); ++i)
        if (!(cohort.bin_edges[i] > cohort.bin_edges[i - 1]))
            throw DataError("cohort: bin edges must be strictly increasing");
    if (!cohort.bin_edges.empty()) {
        const int n_bins = static_cast<int>(cohort.num_bins());
        for (const auto& r : cohort.records)
            if (r.time_bin < 1 || r.time_bin > n_bins)
                throw DataError("patient '" + r.patient_id + "': time_bin outside [1, " + std::to_string(n_bins) + "]");
    }
}

Cohort load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        throw DataError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    const auto base = path.parent_path();
    const auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    Cohort cohort;
    try {
        for (const auto& p : doc.at("patients")) {
            SurvivalRecord r;
            r.patient_id = p.at("id").get<std::string>();
            r.time_months = p.at("time_months").get<double>();
            r.censor = p.at("censor").get<int>();
            if (p.contains("time_bin") && !p["time_bin"].is_null()) r.time_bin = p["time_bin"].get<int>();
            cohort.records.push_back(r);
            cohort.histology_paths.push_back(resolve(p.at("histology_path").get<std::string>()));
            if (p.contains("genomic_path") && !p["genomic_path"].is_null())
                cohort.genomic_paths.emplace_back(resolve(p["genomic_path"].get<std::string>()));
            else
                cohort.genomic_paths.emplace_back(std::nullopt);
        }
        if (doc.contains("bin_edges") && !doc["bin_edges"].is_null())
            cohort.bin_edges = doc["bin_edges"].get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError("manifest '" + path.string() + "': " + e.what());
    }
    validate_cohort(cohort);
    return cohort;
}

void save_manifest(const Cohort& cohort, const std::filesystem::path& path) {
    const auto base = path.parent_path();
    const auto rel = [&](const std::filesystem::path& p) {
        if (base.empty()) return p.generic_string();
        auto r = p.lexically_relative(base);
        return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
    };
    json patients = json::array();
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& r = cohort.records[i];
        json p;
        p["id"] = r.patient_id;
        p["time_months"] = r.time_months;
        p["censor"] = r.censor;
        p["histology_path"] = rel(cohort.histology_paths[i]);
        p["genomic_path"] = cohort.genomic_paths[i] ? json(rel(*cohort.genomic_paths[i])) : json(nullptr);
        if (r.time_bin > 0) p["time_bin"] = r.time_bin;
        patients.push_back(std::move(p));
    }
    json doc;
    doc["patients"] = std::move(patients);
    doc["bin_edges"] = cohort.bin_edges.empty() ? json(nullptr) : json(cohort.bin_edges);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write manifest '" + path.string() + "'");
    os << doc.dump(2) << '\n';
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

int assign_bin(std::span<const double> edges, double time_months) {
    int below = 0;
    for (double e : edges)
        if (e < time_months) ++below;
    return below + 1;
}

std::vector<double> discretize_times(Cohort& cohort, std::size_t n_bins) {
    if (n_bins < 2) throw std::invalid_argument("discretize_times: n_bins must be at least 2");
    std::vector<double> events;
    for (const auto& r : cohort.records)
        if (r.censor == 0) events.push_back(r.time_months);
    if (events.size() < n_bins)
        throw DataError("discretize_times: " + std::to_string(events.size()) + " uncensored records, need at least " +
                        std::to_string(n_bins));
    std::sort(events.begin(), events.end());
    std::vector<double> edges;
    for (std::size_t k = 1; k < n_bins; ++k)
        edges.push_back(quantile_sorted(events, static_cast<double>(k) / static_cast<double>(n_bins)));
    for (std::size_t k = 1; k < edges.size(); ++k)
        if (!(edges[k] > edges[k - 1])) throw DataError("discretize_times: degenerate (non-increasing) bin edges");
    if (edges.size() == 1 && (events.front() == events.back()))
        throw DataError("discretize_times: all event times identical");
    for (auto& r : cohort.records) r.time_bin = assign_bin(edges, r.time_months);
    cohort.bin_edges = edges;
    return edges;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be at least 2");
    if (k > n) throw std::invalid_argument("kfold_split: k exceeds the number of patients");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t at = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                        order.begin() + static_cast<std::ptrdiff_t>(at + size));
        std::sort(folds[f].begin(), folds[f].end());
        at += size;
    }
    return folds;
}

FoldSplit fold_split(std::size_t n, std::size_t k, std::size_t fold, std::uint64_t seed) {
    if (fold >= k) throw std::invalid_argument("fold index " + std::to_string(fold) + " out of range");
    const auto folds = kfold_split(n, k, seed);
    FoldSplit split;
    split.validation = folds[fold];
    for (std::size_t f = 0; f < k; ++f)
        if (f != fold) split.train.insert(split.train.end(), folds[f].begin(), folds[f].end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

Dataset load_dataset(const Cohort& cohort, bool load_genomic) {
    validate_cohort(cohort);
    Dataset data;
    data.cohort = cohort;
    data.histology.reserve(cohort.size());
    data.genomic.reserve(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        data.histology.push_back(load_bag(cohort.histology_paths[i]));
        if (load_genomic && cohort.genomic_paths[i])
            data.genomic.emplace_back(load_bag(*cohort.genomic_paths[i]));
        else
            data.genomic.emplace_back(std::nullopt);
    }
    validate_dataset(data);
    return data;
}

void validate_dataset(const Dataset& data) {
    validate_cohort(data.cohort);
    if (data.histology.size() != data.size() || data.genomic.size() != data.size())
        throw DataError("dataset: bag count does not match the record count");
    std::size_t width = 0, genomic_rows = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& id = data.cohort.records[i].patient_id;
        const auto& h = data.histology[i];
        validate_bag(h);
        if (h.modality != Modality::histology) throw DataError("patient '" + id + "': histology bag has genomic tag");
        if (width == 0) width = h.width;
        if (h.width != width) throw DataError("patient '" + id + "': histology width differs from cohort");
        if (const auto& g = data.genomic[i]) {
            validate_bag(*g);
            if (g->modality != Modality::genomic) throw DataError("patient '" + id + "': genomic bag has histology tag");
            if (g->width != width) throw DataError("patient '" + id + "': genomic width differs from cohort");
            if (genomic_rows == 0) genomic_rows = g->instances;
            if (g->instances != genomic_rows)
                throw DataError("patient '" + id + "': genomic pathway count differs from cohort");
        }
    }
}

}  // namespace slotspe
