// SPDX-License-Identifier: Apache-2.0
#include "slotspe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "slotspe/error.hpp"

namespace slotspe {

using nlohmann::json;

std::size_t worker_threads() {
    if (const char* env = std::getenv("SLOTSPE_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
    }
    return 1;
}

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kPatientStreamBase = 1ull << 32;

struct PatientPass {
    bool ok = false;
    std::string error;
    LossTerms terms;
    Gradients grads;
};

// Runs job(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) job(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

PatientPass run_patient(const TrainConfig& config, const Model& model, const Dataset& data, std::size_t row,
                        Rng& rng) {
    PatientPass out;
    const FeatureBag& h = data.histology.at(row);
    PatientData pd{&h, data.genomic.at(row) ? &*data.genomic[row] : nullptr, {}};
    if (h.instances > config.patch_subsample)
        pd.histology_rows = rng.sample_without_replacement(h.instances, config.patch_subsample);
    const SurvivalRecord& rec = data.cohort.records.at(row);
    if (rec.time_bin < 1) throw DataError("patient " + rec.patient_id + " has no time bin; run discretize first");
    try {
        Graph g;
        BoundParams p(g, model.params);
        ForwardOptions opt{true, &rng, config.lambda};
        PatientGraph pg = build_patient(p, model, pd, opt, Label{static_cast<std::size_t>(rec.time_bin), rec.censor});
        out.terms = loss_terms(g, pg);
        out.grads = g.backward(pg.loss);
        out.ok = true;
    } catch (const GraphError& e) {
        out.error = rec.patient_id + ": " + e.what();
    }
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, std::span<const std::size_t> train_rows,
                  std::size_t fold, const std::function<void(const EpochLog&)>& on_epoch) {
    validate(config);
    if (train_rows.empty()) throw DataError("training split is empty");
    std::size_t events = 0;
    for (std::size_t r : train_rows) events += data.cohort.records.at(r).censor == 0 ? 1 : 0;
    if (events < 2) throw DataError("training split has fewer than 2 uncensored events");

    PrecisionScope precision_scope(config.precision);
    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.config = config;
    ck.fold = fold;
    ck.model = init_model(config.model, config.seed);
    Rng shuffle_rng = Rng::substream(config.seed, kShuffleStream);
    const std::size_t threads = worker_threads();

    std::size_t failed_in_a_row = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(train_rows.begin(), train_rows.end());
        shuffle_rng.shuffle(order);
        EpochLog log;
        log.epoch = epoch + 1;
        std::vector<LossTerms> epoch_terms;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            std::vector<PatientPass> passes(n);
            parallel_for(n, threads, [&](std::size_t i) {
                const std::size_t row = order[start + i];
                Rng rng = Rng::substream(config.seed, kPatientStreamBase * (epoch + 1) + row);
                passes[i] = run_patient(config, ck.model, data, row, rng);
            });

            const auto bad = std::find_if(passes.begin(), passes.end(), [](const PatientPass& p) { return !p.ok; });
            if (bad != passes.end()) {
                if (++failed_in_a_row >= 2)
                    throw DivergenceError("non-finite loss in two consecutive batches (epoch " +
                                          std::to_string(epoch + 1) + "): " + bad->error);
                ++log.skipped_steps;
                continue;
            }
            failed_in_a_row = 0;

            // Canonical order: batch position.
            Gradients total;
            for (PatientPass& p : passes) {
                epoch_terms.push_back(p.terms);
                for (auto& [name, g] : p.grads) {
                    auto [it, inserted] = total.try_emplace(name, std::move(g));
                    if (inserted) continue;
                    for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
                }
            }
            for (auto& [name, g] : total)
                for (double& v : g.values()) v /= static_cast<double>(n);

            if (adam_step(ck.model.params, total, ck.adam, config.learning_rate)) {
                ++ck.model.steps;
                ++log.steps;
            } else {
                ++log.skipped_steps;
            }
        }
        log.loss = total_loss(epoch_terms, config.lambda);
        ck.epoch = epoch + 1;
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    ck.rng_state = shuffle_rng.state();
    return result;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
}

}  // namespace

EvalMetrics evaluate(const Checkpoint& ckpt, const Dataset& data, std::span<const std::size_t> rows,
                     bool missing_genomics) {
    if (rows.empty()) throw DataError("evaluation fold is empty");
    PrecisionScope precision_scope(ckpt.config.precision);
    EvalMetrics m;
    m.fold = ckpt.fold;
    m.missing_genomics = missing_genomics;

    std::vector<PatientPrediction> preds(rows.size());
    parallel_for(rows.size(), worker_threads(), [&](std::size_t i) {
        const std::size_t row = rows[i];
        const SurvivalRecord& rec = data.cohort.records.at(row);
        const FeatureBag* gen = nullptr;
        if (!missing_genomics) {
            if (!data.genomic.at(row)) throw DataError("patient " + rec.patient_id + " has no genomic bag");
            gen = &*data.genomic[row];
        }
        const InferResult r = infer(ckpt.model, data.histology.at(row), gen);
        preds[i] = {rec.patient_id, rec.time_months, rec.censor, rec.time_bin, r.curve.risk, 0,
                    r.curve.hazards, r.curve.survival};
    });

    std::vector<double> risks, times;
    std::vector<int> censor;
    for (const auto& p : preds) {
        risks.push_back(p.risk);
        times.push_back(p.time_months);
        censor.push_back(p.censor);
    }
    m.c_index = concordance_index(risks, times, censor);
    m.risk_cutoff = median(risks);

    SurvivalGroup high, low;
    for (auto& p : preds) {
        p.high_risk = p.risk > m.risk_cutoff ? 1 : 0;
        SurvivalGroup& grp = p.high_risk ? high : low;
        grp.times.push_back(p.time_months);
        grp.events.push_back(p.censor == 0 ? 1 : 0);
    }
    if (!high.times.empty() && !low.times.empty()) {
        try {
            m.logrank = logrank_test(high.times, high.events, low.times, low.events);
        } catch (const std::invalid_argument&) {
        }
        try {
            m.rmst = bootstrap_stats(high, low, ckpt.config.rmst_horizon, ckpt.config.bootstrap_replicates,
                                     ckpt.config.seed);
        } catch (const std::invalid_argument&) {
        }
    }
    m.predictions = std::move(preds);
    return m;
}

std::string metrics_json(const EvalMetrics& m) {
    json j{{"fold", m.fold},
           {"missing_genomics", m.missing_genomics},
           {"n_patients", m.predictions.size()},
           {"c_index", m.c_index},
           {"risk_cutoff", m.risk_cutoff},
           {"logrank_statistic", nullptr},
           {"logrank_p", nullptr},
           {"rmst_high", nullptr},
           {"rmst_low", nullptr},
           {"delta", nullptr},
           {"delta_ci", nullptr},
           {"delta_p", nullptr},
           {"ratio", nullptr},
           {"ratio_ci", nullptr},
           {"bootstrap_replicates", nullptr},
           {"bootstrap_skipped", nullptr}};
    if (m.logrank) {
        j["logrank_statistic"] = m.logrank->statistic;
        j["logrank_p"] = m.logrank->p_value;
    }
    if (m.rmst) {
        const BootstrapResult& b = *m.rmst;
        j["rmst_high"] = b.rmst_high;
        j["rmst_low"] = b.rmst_low;
        j["delta"] = b.delta;
        j["delta_ci"] = {b.delta_ci.lo, b.delta_ci.hi};
        j["delta_p"] = b.delta_p;
        j["ratio"] = b.ratio;
        j["ratio_ci"] = {b.ratio_ci.lo, b.ratio_ci.hi};
        j["bootstrap_replicates"] = b.replicates;
        j["bootstrap_skipped"] = b.skipped;
    }
    return j.dump(2) + "\n";
}

std::string predictions_csv(const std::vector<PatientPrediction>& preds) {
    std::ostringstream os;
    os.precision(17);
    os << "patient_id,time_months,censor,time_bin,risk,high_risk\n";
    for (const auto& p : preds)
        os << p.patient_id << ',' << p.time_months << ',' << p.censor << ',' << p.time_bin << ',' << p.risk << ','
           << p.high_risk << '\n';
    return os.str();
}

std::vector<PatientPrediction> parse_predictions_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "patient_id,time_months,censor,time_bin,risk,high_risk")
        throw DataError("predictions csv: unexpected header");
    std::vector<PatientPrediction> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 6) throw DataError("predictions csv: line " + std::to_string(line_no) + " has " +
                                           std::to_string(f.size()) + " fields");
        try {
            PatientPrediction p;
            p.patient_id = f[0];
            p.time_months = std::stod(f[1]);
            p.censor = std::stoi(f[2]);
            p.time_bin = std::stoi(f[3]);
            p.risk = std::stod(f[4]);
            p.high_risk = std::stoi(f[5]);
            out.push_back(std::move(p));
        } catch (const std::logic_error&) {
            throw DataError("predictions csv: bad number on line " + std::to_string(line_no));
        }
    }
    return out;
}

InferResult infer(const Model& model, const FeatureBag& histology, const FeatureBag* genomic) {
    InferResult r;
    FeatureBag imputed;
    if (genomic == nullptr) {
        imputed = impute_genomic(model, histology);
        r.imputed = true;
        r.imputed_genomic = imputed;
        genomic = &imputed;
    }
    Graph g;
    BoundParams p(g, model.params);
    PatientData pd{&histology, genomic, {}};
    ForwardOptions opt;
    PatientGraph pg = build_patient(p, model, pd, opt);
    const Tensor& logits = g.value(pg.logits);
    r.logits.assign(logits.values().begin(), logits.values().end());
    r.curve = hazards_from_logits(r.logits);
    r.attention_histology = g.value(pg.histology.slots.attention);
    r.attention_genomic = g.value(pg.genomic.slots.attention);
    r.scores_histology = g.value(pg.histology.scores);
    r.hard_histology = pg.histology.gate.hard;
    r.weights_histology = g.value(pg.histology.weights);
    r.scores_genomic = g.value(pg.genomic.scores);
    r.hard_genomic = pg.genomic.gate.hard;
    r.weights_genomic = g.value(pg.genomic.weights);
    return r;
}

}  // namespace slotspe
