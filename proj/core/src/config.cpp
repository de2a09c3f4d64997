// SPDX-License-Identifier: Apache-2.0
#include "slotspe/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace slotspe {

using nlohmann::json;

std::size_t ModelConfig::top_k(std::size_t slots) const {
    const auto k = static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(slots) - 1e-9));
    return std::clamp<std::size_t>(k, 1, slots);
}

void validate(const ModelConfig& c) {
    const auto bad = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
    if (c.width == 0) bad("width must be positive");
    if (c.slots_histology == 0 || c.slots_genomic == 0) bad("slot counts must be positive");
    if (c.iterations == 0) bad("iterations must be at least 1");
    if (c.fusion_layers == 0) bad("fusion_layers must be at least 1");
    if (!(c.k_fraction > 0.0 && c.k_fraction <= 1.0)) bad("k_fraction must be in (0, 1]");
    if (!(c.gate_temperature > 0.0)) bad("gate_temperature must be positive");
    if (c.num_bins < 1) bad("num_bins must be positive");
    if (c.genomic_instances == 0) bad("genomic_instances must be positive");
}

void validate(const TrainConfig& c) {
    validate(c.model);
    const auto bad = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
    if (!(c.learning_rate > 0.0)) bad("learning_rate must be positive");
    if (c.batch_size == 0) bad("batch_size must be positive");
    if (!(c.lambda >= 0.0)) bad("lambda must be nonnegative");
    if (c.patch_subsample == 0) bad("patch_subsample must be positive");
    if (c.folds < 2) bad("folds must be at least 2");
    if (c.bootstrap_replicates == 0) bad("bootstrap_replicates must be positive");
    if (!(c.rmst_horizon > 0.0)) bad("rmst_horizon must be positive");
}

namespace {

json model_json(const ModelConfig& c) {
    return json{{"width", c.width},
                {"slots_histology", c.slots_histology},
                {"slots_genomic", c.slots_genomic},
                {"iterations", c.iterations},
                {"fusion_layers", c.fusion_layers},
                {"k_fraction", c.k_fraction},
                {"gate_temperature", c.gate_temperature},
                {"num_bins", c.num_bins},
                {"genomic_instances", c.genomic_instances},
                {"aggregation", c.aggregation == Aggregation::weighted_mean ? "weighted_mean" : "sum"},
                {"cross_init", c.cross_init == CrossInit::learned_init ? "learned_init" : "encoded_genomic"},
                {"selective_activation", c.selective_activation},
                {"cross_reconstruction", c.cross_reconstruction}};
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw std::invalid_argument(std::string(what) + ": unknown field '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ModelConfig model_from(const json& j) {
    ModelConfig c;
    reject_unknown(j, {"width", "slots_histology", "slots_genomic", "iterations", "fusion_layers", "k_fraction",
                       "gate_temperature", "num_bins", "genomic_instances", "aggregation", "cross_init",
                       "selective_activation", "cross_reconstruction"},
                   "model config");
    read(j, "width", c.width);
    read(j, "slots_histology", c.slots_histology);
    read(j, "slots_genomic", c.slots_genomic);
    read(j, "iterations", c.iterations);
    read(j, "fusion_layers", c.fusion_layers);
    read(j, "k_fraction", c.k_fraction);
    read(j, "gate_temperature", c.gate_temperature);
    read(j, "num_bins", c.num_bins);
    read(j, "genomic_instances", c.genomic_instances);
    read(j, "selective_activation", c.selective_activation);
    read(j, "cross_reconstruction", c.cross_reconstruction);
    if (j.contains("aggregation")) {
        const auto s = j["aggregation"].get<std::string>();
        if (s == "weighted_mean") c.aggregation = Aggregation::weighted_mean;
        else if (s == "sum") c.aggregation = Aggregation::sum;
        else throw std::invalid_argument("model config: aggregation must be 'weighted_mean' or 'sum'");
    }
    if (j.contains("cross_init")) {
        const auto s = j["cross_init"].get<std::string>();
        if (s == "learned_init") c.cross_init = CrossInit::learned_init;
        else if (s == "encoded_genomic") c.cross_init = CrossInit::encoded_genomic;
        else throw std::invalid_argument("model config: cross_init must be 'learned_init' or 'encoded_genomic'");
    }
    return c;
}

json parse(std::string_view text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string(what) + ": " + e.what());
    }
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

std::string to_json_string(const TrainConfig& c) {
    json j{{"model", model_json(c.model)},
           {"learning_rate", c.learning_rate},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lambda", c.lambda},
           {"patch_subsample", c.patch_subsample},
           {"seed", c.seed},
           {"precision", c.precision == Precision::f32 ? "f32" : "f64"},
           {"folds", c.folds},
           {"bootstrap_replicates", c.bootstrap_replicates},
           {"rmst_horizon", c.rmst_horizon}};
    return j.dump(2);
}

TrainConfig train_config_from_json(std::string_view text) {
    const json j = parse(text, "train config");
    TrainConfig c;
    try {
        reject_unknown(j, {"model", "learning_rate", "epochs", "batch_size", "lambda", "patch_subsample", "seed",
                           "precision", "folds", "bootstrap_replicates", "rmst_horizon"},
                       "train config");
        if (j.contains("model")) c.model = model_from(j["model"]);
        read(j, "learning_rate", c.learning_rate);
        read(j, "epochs", c.epochs);
        read(j, "batch_size", c.batch_size);
        read(j, "lambda", c.lambda);
        read(j, "patch_subsample", c.patch_subsample);
        read(j, "seed", c.seed);
        read(j, "folds", c.folds);
        read(j, "bootstrap_replicates", c.bootstrap_replicates);
        read(j, "rmst_horizon", c.rmst_horizon);
        if (j.contains("precision")) {
            const auto s = j["precision"].get<std::string>();
            if (s == "f32") c.precision = Precision::f32;
            else if (s == "f64") c.precision = Precision::f64;
            else throw std::invalid_argument("train config: precision must be 'f32' or 'f64'");
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("train config: ") + e.what());
    }
    validate(c);
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) { return train_config_from_json(slurp(path)); }

std::string to_json_string(const SynthConfig& c) {
    json j{{"num_patients", c.num_patients},   {"min_instances", c.min_instances},
           {"max_instances", c.max_instances}, {"genomic_instances", c.genomic_instances},
           {"width", c.width},                 {"motifs", c.motifs},
           {"motif_strength", c.motif_strength}, {"censor_fraction", c.censor_fraction},
           {"noise", c.noise},                 {"coupling", c.coupling},
           {"seed", c.seed}};
    return j.dump(2);
}

SynthConfig synth_config_from_json(std::string_view text) {
    const json j = parse(text, "synth config");
    SynthConfig c;
    try {
        reject_unknown(j, {"num_patients", "min_instances", "max_instances", "genomic_instances", "width", "motifs",
                           "motif_strength", "censor_fraction", "noise", "coupling", "seed"},
                       "synth config");
        read(j, "num_patients", c.num_patients);
        read(j, "min_instances", c.min_instances);
        read(j, "max_instances", c.max_instances);
        read(j, "genomic_instances", c.genomic_instances);
        read(j, "width", c.width);
        read(j, "motifs", c.motifs);
        read(j, "motif_strength", c.motif_strength);
        read(j, "censor_fraction", c.censor_fraction);
        read(j, "noise", c.noise);
        read(j, "coupling", c.coupling);
        read(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("synth config: ") + e.what());
    }
    validate_synth_config(c);
    return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) { return synth_config_from_json(slurp(path)); }

}  // namespace slotspe
