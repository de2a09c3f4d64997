// SPDX-License-Identifier: Apache-2.0
// slotspe: command-line front end (synth, discretize, train, eval, infer, report).
#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slotspe/bag.hpp"
#include "slotspe/checkpoint.hpp"
#include "slotspe/cohort.hpp"
#include "slotspe/config.hpp"
#include "slotspe/error.hpp"
#include "slotspe/moe_decoder.hpp"
#include "slotspe/report.hpp"
#include "slotspe/slot_encoder.hpp"
#include "slotspe/synth.hpp"
#include "slotspe/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace slotspe;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path.string() + "'");
    os << text;
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

FoldSplit split_for(const Cohort& cohort, const TrainConfig& config, std::size_t fold) {
    if (fold >= config.folds)
        throw UsageError("--fold " + std::to_string(fold) + " is outside [0, " + std::to_string(config.folds) + ")");
    return fold_split(cohort.size(), config.folds, fold, config.seed);
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
    std::string config, out;
};

int run_synth(const SynthArgs& a) {
    SynthConfig sc = a.config.empty() ? SynthConfig{} : load_synth_config(a.config);
    ensure_dir(a.out);
    Cohort c = synth_cohort(sc, a.out);
    std::cout << "wrote " << c.size() << " patients to " << (fs::path(a.out) / "manifest.json").string() << "\n";
    return kOk;
}

// ---- discretize -----------------------------------------------------------

struct DiscretizeArgs {
    std::string manifest;
    std::size_t bins = 4;
};

int run_discretize(const DiscretizeArgs& a) {
    if (a.bins < 1) throw UsageError("--bins must be at least 1");
    Cohort c = load_manifest(a.manifest);
    const auto edges = discretize_times(c, a.bins);
    save_manifest(c, a.manifest);
    std::cout << "edges:";
    for (double e : edges) std::cout << ' ' << e;
    std::cout << "\n";
    return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string manifest, config, out;
    std::size_t fold = 0;
};

int run_train(const TrainArgs& a) {
    TrainConfig config = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    Cohort cohort = load_manifest(a.manifest);
    if (cohort.bin_edges.empty()) throw DataError("manifest has no time bins; run `slotspe discretize` first");
    const FoldSplit split = split_for(cohort, config, a.fold);
    Dataset data = load_dataset(cohort);
    ensure_dir(a.out);

    std::ostringstream log;
    log << "epoch,total,surv_fused,surv_hist,surv_gen,recon_g,recon_h,recon_cross,steps,skipped_steps\n";
    TrainResult r = train(config, data, split.train, a.fold, [&](const EpochLog& e) {
        const LossReport& l = e.loss;
        log << e.epoch << ',' << l.total << ',' << l.surv_fused << ',' << l.surv_hist << ',' << l.surv_gen << ','
            << l.recon_g << ',' << l.recon_h << ',' << l.recon_cross << ',' << e.steps << ',' << e.skipped_steps
            << "\n";
        std::cerr << "epoch " << e.epoch << " loss " << l.total << "\n";
    });
    save_checkpoint(r.checkpoint, fs::path(a.out) / "checkpoint.sspc");
    write_text(fs::path(a.out) / "train_log.csv", log.str());
    std::cout << "checkpoint: " << (fs::path(a.out) / "checkpoint.sspc").string() << "\n";
    return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, manifest, out;
    std::size_t fold = 0;
    bool missing_genomics = false;
};

int run_eval(const EvalArgs& a) {
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    Cohort cohort = load_manifest(a.manifest);
    const FoldSplit split = split_for(cohort, ckpt.config, a.fold);
    Dataset data = load_dataset(cohort, !a.missing_genomics);
    EvalMetrics m = evaluate(ckpt, data, split.validation, a.missing_genomics);
    m.fold = a.fold;
    const std::string doc = metrics_json(m);
    const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() : fs::path(a.out);
    if (!out.empty()) ensure_dir(out);
    write_text(out / "metrics.json", doc + "\n");
    write_text(out / "predictions.csv", predictions_csv(m.predictions));
    std::cout << doc << "\n";
    return kOk;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
    std::string checkpoint, histology, genomic, out;
};

FeatureBag load_modality(const std::string& path, Modality expected) {
    FeatureBag bag = load_bag(path);
    if (bag.modality != expected)
        throw DataError("'" + path + "': expected a " + std::string(modality_name(expected)) + " bag, found " +
                        std::string(modality_name(bag.modality)));
    return bag;
}

int run_infer(const InferArgs& a) {
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    FeatureBag hist = load_modality(a.histology, Modality::histology);
    std::optional<FeatureBag> gen;
    if (!a.genomic.empty()) gen = load_modality(a.genomic, Modality::genomic);
    InferResult r = infer(ckpt.model, hist, gen ? &*gen : nullptr);

    const fs::path out(a.out);
    ensure_dir(out);
    json doc;
    doc["hazards"] = r.curve.hazards;
    doc["survival"] = r.curve.survival;
    doc["risk"] = r.curve.risk;
    doc["logits"] = r.logits;
    doc["imputed_genomics"] = r.imputed;
    doc["histology_slot_of_instance"] = assignment_map(r.attention_histology);
    doc["genomic_slot_of_instance"] = assignment_map(r.attention_genomic);
    write_text(out / "prediction.json", doc.dump(2) + "\n");
    write_text(out / "assignment_histology.csv", assignment_csv(r.attention_histology));
    write_text(out / "assignment_genomic.csv", assignment_csv(r.attention_genomic));
    write_text(out / "gate_histology.csv", gate_csv(r.scores_histology, r.hard_histology, r.weights_histology));
    write_text(out / "gate_genomic.csv", gate_csv(r.scores_genomic, r.hard_genomic, r.weights_genomic));
    if (r.imputed_genomic) {
        write_bag(*r.imputed_genomic, out / "imputed_genomic.bag");
        write_text(out / "imputed_genomic.json", json{{"imputed", true}, {"source", a.histology}}.dump(2) + "\n");
    }
    std::cout << doc.dump() << "\n";
    return kOk;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
    std::string runs, out;
    double horizon = 60.0;
    std::size_t replicates = 1000;
    std::uint64_t seed = 0;
};

// Every directory under --runs (or --runs itself) holding metrics.json and
// predictions.csv is one fold.
int run_report(const ReportArgs& a) {
    std::vector<fs::path> dirs;
    const fs::path root(a.runs);
    if (!fs::is_directory(root)) throw DataError("--runs '" + a.runs + "' is not a directory");
    auto is_run = [](const fs::path& d) {
        return fs::exists(d / "metrics.json") && fs::exists(d / "predictions.csv");
    };
    if (is_run(root)) dirs.push_back(root);
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && is_run(e.path())) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw DataError("no runs (metrics.json + predictions.csv) under '" + a.runs + "'");

    std::vector<FoldReport> folds;
    for (const auto& d : dirs) {
        json m;
        try {
            m = json::parse(read_text(d / "metrics.json"));
        } catch (const json::exception& e) {
            throw DataError("'" + (d / "metrics.json").string() + "': " + e.what());
        }
        FoldReport f;
        try {
            f.fold = m.at("fold").get<std::size_t>();
            f.c_index = m.at("c_index").get<double>();
        } catch (const json::exception& e) {
            throw DataError("'" + (d / "metrics.json").string() + "': " + e.what());
        }
        f.predictions = parse_predictions_csv(read_text(d / "predictions.csv"));
        folds.push_back(std::move(f));
    }
    ensure_dir(a.out);
    write_report(folds, a.out, a.horizon, a.replicates, a.seed);
    std::cout << read_text(fs::path(a.out) / "summary.json");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slotspe: synthetic cohorts, training, evaluation and reporting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "slotspe 0.1.0");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a planted-signal cohort");
    s->add_option("--config", synth.config, "synthetic cohort JSON (defaults when omitted)")->check(CLI::ExistingFile);
    s->add_option("--out", synth.out, "output directory")->required();

    DiscretizeArgs disc;
    auto* d = app.add_subcommand("discretize", "assign time bins from event-time quantiles (rewrites the manifest)");
    d->add_option("--manifest", disc.manifest, "cohort manifest")->required()->check(CLI::ExistingFile);
    d->add_option("--bins", disc.bins, "number of time bins")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train one cross-validation fold");
    t->add_option("--manifest", tr.manifest, "discretized cohort manifest")->required()->check(CLI::ExistingFile);
    t->add_option("--config", tr.config, "training config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    t->add_option("--fold", tr.fold, "fold index")->required();
    t->add_option("--out", tr.out, "run directory")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on its validation fold");
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    e->add_option("--manifest", ev.manifest, "discretized cohort manifest")->required()->check(CLI::ExistingFile);
    e->add_option("--fold", ev.fold, "fold index")->required();
    e->add_flag("--missing-genomics", ev.missing_genomics, "impute genomics from histology; genomic bags are not read");
    e->add_option("--out", ev.out, "output directory (default: the checkpoint's directory)");

    InferArgs in;
    auto* i = app.add_subcommand("infer", "predict one patient");
    i->add_option("--checkpoint", in.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    i->add_option("--histology", in.histology, "histology bag")->required();
    i->add_option("--genomic", in.genomic, "genomic bag (imputed when omitted)");
    i->add_option("--out", in.out, "output directory")->required();

    ReportArgs rep;
    auto* r = app.add_subcommand("report", "aggregate fold runs into CSV, JSON and a KM plot");
    r->add_option("--runs", rep.runs, "directory of eval outputs, one subdirectory per fold")->required();
    r->add_option("--out", rep.out, "output directory")->required();
    r->add_option("--horizon", rep.horizon, "RMST horizon in months")->capture_default_str();
    r->add_option("--replicates", rep.replicates, "bootstrap replicates")->capture_default_str();
    r->add_option("--seed", rep.seed, "bootstrap seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*s) return run_synth(synth);
        if (*d) return run_discretize(disc);
        if (*t) return run_train(tr);
        if (*e) return run_eval(ev);
        if (*i) return run_infer(in);
        if (*r) return run_report(rep);
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return kUsage;
    } catch (const DataError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return kData;
    } catch (const DivergenceError& err) {
        std::cerr << "diverged: " << err.what() << "\n";
        return kDiverged;
    } catch (const std::invalid_argument& err) {
        std::cerr << "invalid configuration: " << err.what() << "\n";
        return kUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kData;
    }
    return kUsage;
}
