// SPDX-License-Identifier: Apache-2.0
#include "slotspe/synth.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "slotspe/rng.hpp"

namespace slotspe {

namespace {

std::vector<double> unit_direction(Rng& rng, std::size_t width) {
    std::vector<double> v(width);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::string patient_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%04zu", i);
    return buf;
}

}  // namespace

void validate_synth_config(const SynthConfig& c) {
    const auto bad = [](const std::string& what) { throw std::invalid_argument("synth config: " + what); };
    if (c.num_patients < 2) bad("num_patients must be at least 2");
    if (c.min_instances < 1 || c.max_instances < c.min_instances) bad("instance range is empty");
    if (c.genomic_instances < 1 || c.width < 1) bad("genomic_instances and width must be positive");
    if (c.motifs < 1 || c.motifs > 16) bad("motifs must be in [1, 16]");
    if (c.motifs > c.genomic_instances) bad("motifs cannot exceed genomic_instances");
    if (!(c.censor_fraction >= 0.0 && c.censor_fraction < 1.0)) bad("censor_fraction must be in [0, 1)");
    if (!(c.motif_strength >= 0.0) || !(c.noise >= 0.0)) bad("strength and noise must be nonnegative");
    if (!(c.coupling >= 0.0 && c.coupling <= 1.0)) bad("coupling must be in [0, 1]");
}

Dataset generate_synthetic(const SynthConfig& c) {
    validate_synth_config(c);
    Rng rng(c.seed);

    std::vector<std::vector<double>> hist_dir(c.motifs), gen_dir(c.motifs);
    for (std::size_t k = 0; k < c.motifs; ++k) {
        hist_dir[k] = unit_direction(rng, c.width);
        gen_dir[k] = unit_direction(rng, c.width);
    }
    // Each genomic event owns a disjoint block of pathway rows.
    const std::size_t block = std::max<std::size_t>(1, c.genomic_instances / c.motifs);
    std::vector<std::size_t> pathway_order(c.genomic_instances);
    for (std::size_t i = 0; i < pathway_order.size(); ++i) pathway_order[i] = i;
    rng.shuffle(pathway_order);

    // Event weights 2^(K-1-k), normalized so the score lies in [0, 1].
    std::vector<double> weight(c.motifs);
    double total_weight = 0.0;
    for (std::size_t k = 0; k < c.motifs; ++k) total_weight += weight[k] = std::ldexp(1.0, int(c.motifs - 1 - k));
    const double t_max = 120.0, t_min = 6.0;
    const double decay = std::log(t_max / t_min);

    Dataset data;
    for (std::size_t i = 0; i < c.num_patients; ++i) {
        std::vector<bool> event(c.motifs);
        double score = 0.0;
        for (std::size_t k = 0; k < c.motifs; ++k) {
            event[k] = rng.uniform() < 0.5;
            if (event[k]) score += weight[k] / total_weight;
        }

        FeatureBag gen;
        gen.modality = Modality::genomic;
        gen.instances = c.genomic_instances;
        gen.width = c.width;
        gen.values.resize(gen.instances * gen.width);
        std::vector<double> gvals(gen.values.size());
        for (double& v : gvals) v = c.noise * rng.normal();
        for (std::size_t k = 0; k < c.motifs; ++k) {
            if (!event[k]) continue;
            for (std::size_t b = 0; b < block; ++b) {
                const std::size_t row = pathway_order[(k * block + b) % c.genomic_instances];
                for (std::size_t j = 0; j < c.width; ++j) gvals[row * c.width + j] += c.motif_strength * gen_dir[k][j];
            }
        }
        for (std::size_t q = 0; q < gvals.size(); ++q) gen.values[q] = static_cast<float>(gvals[q]);

        FeatureBag hist;
        hist.modality = Modality::histology;
        hist.instances = c.min_instances + rng.uniform_index(c.max_instances - c.min_instances + 1);
        hist.width = c.width;
        std::vector<double> hvals(hist.instances * hist.width);
        for (double& v : hvals) v = c.noise * rng.normal();
        for (std::size_t k = 0; k < c.motifs; ++k) {
            const bool coupled = rng.uniform() < c.coupling;
            const bool present = coupled ? bool(event[k]) : !event[k];
            const double fraction = rng.uniform(0.15, 0.35);
            const std::size_t count = std::max<std::size_t>(1, std::size_t(std::lround(fraction * double(hist.instances))));
            if (!present) continue;
            for (std::size_t row : rng.sample_without_replacement(hist.instances, count))
                for (std::size_t j = 0; j < c.width; ++j) hvals[row * c.width + j] += c.motif_strength * hist_dir[k][j];
        }
        hist.values.resize(hvals.size());
        for (std::size_t q = 0; q < hvals.size(); ++q) hist.values[q] = static_cast<float>(hvals[q]);

        SurvivalRecord r;
        r.patient_id = patient_name(i);
        r.time_months = t_max * std::exp(-decay * score + 0.02 * rng.normal());
        data.cohort.records.push_back(r);
        data.histology.push_back(std::move(hist));
        data.genomic.emplace_back(std::move(gen));
    }

    // Exactly round(fraction * N) patients are censored, chosen uniformly.
    const auto n_censored = static_cast<std::size_t>(std::lround(c.censor_fraction * double(c.num_patients)));
    for (std::size_t i : rng.sample_without_replacement(c.num_patients, n_censored)) {
        auto& r = data.cohort.records[i];
        r.censor = 1;
        r.time_months *= rng.uniform(0.4, 1.0);
    }

    data.cohort.histology_paths.resize(c.num_patients);
    data.cohort.genomic_paths.resize(c.num_patients);
    return data;
}

Cohort synth_cohort(const SynthConfig& config, const std::filesystem::path& out_dir) {
    Dataset data = generate_synthetic(config);
    std::filesystem::create_directories(out_dir / "histology");
    std::filesystem::create_directories(out_dir / "genomic");
    Cohort& cohort = data.cohort;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& id = cohort.records[i].patient_id;
        cohort.histology_paths[i] = out_dir / "histology" / (id + ".bag");
        cohort.genomic_paths[i] = out_dir / "genomic" / (id + ".bag");
        write_bag(data.histology[i], cohort.histology_paths[i]);
        write_bag(*data.genomic[i], *cohort.genomic_paths[i]);
    }
    save_manifest(cohort, out_dir / "manifest.json");
    return cohort;
}

}  // namespace slotspe
