// SPDX-License-Identifier: Apache-2.0
// Shared fixtures and independent oracles for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "slotspe/cohort.hpp"
#include "slotspe/graph.hpp"
#include "slotspe/model.hpp"
#include "slotspe/rng.hpp"
#include "slotspe/synth.hpp"
#include "slotspe/tensor.hpp"

namespace slotspe::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("slotspe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo = -2.0, double hi = 2.0) {
    Tensor t(rows, cols);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Magnitudes in [0.2, 2] with a random sign: keeps relu/clamp kinks out of
// reach of a 1e-5 step.
inline Tensor away_from_zero(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    for (double& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 2.0);
    return t;
}

enum class Sampling { general, positive, away_from_zero };

struct OpCase {
    std::string name;
    std::vector<Shape> shapes;
    std::function<Var(Graph&, std::span<const Var>)> build;
    Sampling sampling = Sampling::general;
    double range = 2.0;
};

inline std::vector<OpCase> op_cases() {
    using S = std::span<const Var>;
    std::vector<OpCase> c;
    c.push_back({"matmul", {{3, 4}, {4, 2}}, [](Graph& g, S x) { return g.matmul(x[0], x[1]); }});
    c.push_back({"transpose", {{3, 4}}, [](Graph& g, S x) { return g.transpose(x[0]); }});
    c.push_back({"add", {{3, 4}, {3, 4}}, [](Graph& g, S x) { return g.add(x[0], x[1]); }});
    c.push_back({"add_row", {{3, 4}, {1, 4}}, [](Graph& g, S x) { return g.add(x[0], x[1]); }});
    c.push_back({"add_column", {{3, 4}, {3, 1}}, [](Graph& g, S x) { return g.add(x[0], x[1]); }});
    c.push_back({"add_scalar", {{3, 4}, {1, 1}}, [](Graph& g, S x) { return g.add(x[0], x[1]); }});
    c.push_back({"scale", {{3, 4}}, [](Graph& g, S x) { return g.scale(x[0], -1.7); }});
    c.push_back({"row_softmax", {{3, 5}}, [](Graph& g, S x) { return g.row_softmax(x[0]); }});
    c.push_back({"column_softmax", {{4, 3}}, [](Graph& g, S x) { return g.column_softmax(x[0]); }});
    c.push_back({"sigmoid", {{3, 4}}, [](Graph& g, S x) { return g.sigmoid(x[0]); }});
    c.push_back({"relu", {{3, 4}}, [](Graph& g, S x) { return g.relu(x[0]); }, Sampling::away_from_zero});
    c.push_back({"exp", {{3, 4}}, [](Graph& g, S x) { return g.exp(x[0]); }});
    c.push_back({"log", {{3, 4}}, [](Graph& g, S x) { return g.log(x[0]); }, Sampling::positive});
    c.push_back({"clamp", {{3, 4}}, [](Graph& g, S x) { return g.clamp(x[0], -0.1, 0.1); }, Sampling::away_from_zero});
    c.push_back({"layer_norm", {{3, 6}}, [](Graph& g, S x) { return g.layer_norm(x[0]); }});
    c.push_back({"gru_cell", {{2, 3}, {2, 4}, {3, 12}, {4, 12}, {1, 12}, {1, 12}},
                 [](Graph& g, S x) { return g.gru_cell(x[0], x[1], x[2], x[3], x[4], x[5]); },
                 Sampling::general, 0.5});
    c.push_back({"mean_pool", {{5, 3}}, [](Graph& g, S x) { return g.mean_pool(x[0]); }});
    c.push_back({"sum", {{3, 4}}, [](Graph& g, S x) { return g.sum(x[0]); }});
    c.push_back({"concat_rows", {{2, 3}, {4, 3}}, [](Graph& g, S x) { return g.concat_rows(x); }});
    c.push_back({"concat_cols", {{3, 2}, {3, 4}}, [](Graph& g, S x) { return g.concat_cols(x); }});
    c.push_back({"mul", {{3, 4}, {3, 4}}, [](Graph& g, S x) { return g.mul(x[0], x[1]); }});
    c.push_back({"mul_row", {{3, 4}, {1, 4}}, [](Graph& g, S x) { return g.mul(x[0], x[1]); }});
    c.push_back({"mul_column", {{3, 4}, {3, 1}}, [](Graph& g, S x) { return g.mul(x[0], x[1]); }});
    c.push_back({"reciprocal", {{3, 4}}, [](Graph& g, S x) { return g.reciprocal(x[0]); }, Sampling::positive});
    c.push_back({"squared_error", {{3, 4}, {3, 4}}, [](Graph& g, S x) { return g.squared_error(x[0], x[1]); }});
    c.push_back({"cosine_similarity", {{3, 4}, {3, 4}},
                 [](Graph& g, S x) { return g.cosine_similarity(x[0], x[1]); }});
    c.push_back({"gather_rows", {{4, 3}}, [](Graph& g, S x) { return g.gather_rows(x[0], {2, 0, 2, 3}); }});
    c.push_back({"stop_gradient", {{3, 4}},
                 [](Graph& g, S x) { return g.add(g.mul(g.stop_gradient(x[0]), x[0]), x[0]); }});
    return c;
}

inline void round_to_float(Tensor& t) {
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

struct OpGraph {
    Graph graph;
    Var f;
    Bindings point;
};

// f(x) = sum(op(x) * W) for a random constant W at a random point. Point and
// W are representable in binary32.
inline void record_op(OpGraph& out, const OpCase& op, std::uint64_t seed) {
    Rng rng(seed);
    Graph& g = out.graph;
    Bindings& point = out.point;
    std::vector<Var> inputs;
    for (std::size_t i = 0; i < op.shapes.size(); ++i) {
        const Shape s = op.shapes[i];
        Tensor t = op.sampling == Sampling::positive      ? random_tensor(rng, s.rows, s.cols, 0.5, 2.0)
                   : op.sampling == Sampling::away_from_zero ? away_from_zero(rng, s.rows, s.cols)
                                                             : random_tensor(rng, s.rows, s.cols, -op.range, op.range);
        round_to_float(t);
        const std::string name = "x" + std::to_string(i);
        point[name] = t;
        inputs.push_back(g.input(name, t));
    }
    Var y = op.build(g, inputs);
    Tensor w = random_tensor(rng, g.shape(y).rows, g.shape(y).cols, 0.5, 1.5);
    round_to_float(w);
    out.f = g.sum(g.mul(y, g.constant(w)));
}

inline FiniteDiffReport op_fd_report(const OpCase& op, std::uint64_t seed, double step) {
    OpGraph og;
    record_op(og, op, seed);
    return finite_diff_check(og.graph, og.f, og.point, step);
}

// Seeds whose point is generic for `op`: no gradient entry lies strictly
// between 0 and 1e-6 in magnitude, where the relative error of a central
// difference is dominated by rounding.
inline std::vector<std::uint64_t> generic_seeds(const OpCase& op, std::uint64_t first, std::size_t count) {
    PrecisionScope ps(Precision::f64);
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = first; out.size() < count; ++s) {
        OpGraph og;
        record_op(og, op, s);
        bool generic = true;
        for (const auto& [name, g] : og.graph.backward(og.f))
            for (double v : g.values())
                if (v != 0.0 && std::abs(v) < 1e-6) generic = false;
        if (generic) out.push_back(s);
    }
    return out;
}

// Gradient recorded in 32-bit mode against 64-bit central differences at the
// same point: max |a-b| / max(|a|,|b|,1e-8).
inline double op_f32_error(const OpCase& op, std::uint64_t seed) {
    Gradients analytic;
    {
        PrecisionScope ps(Precision::f32);
        OpGraph og;
        record_op(og, op, seed);
        analytic = og.graph.backward(og.f);
    }
    PrecisionScope ps(Precision::f64);
    OpGraph og;
    record_op(og, op, seed);
    const double h = 1e-5;
    double worst = 0.0;
    for (const auto& [name, t] : og.point) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            Bindings up = og.point, down = og.point;
            up[name][i] += h;
            down[name][i] -= h;
            og.graph.replay(up, true);
            const double fp = og.graph.value(og.f).item();
            og.graph.replay(down, true);
            const double fm = og.graph.value(og.f).item();
            const double num = (fp - fm) / (2 * h), a = analytic.at(name)[i];
            worst = std::max(worst, std::abs(num - a) / std::max({std::abs(num), std::abs(a), 1e-8}));
        }
    }
    return worst;
}

// ---- micro cohort: S=4, M_h=8, M_g=6, d=8 ----------------------------------

inline ModelConfig micro_model_config() {
    ModelConfig mc;
    mc.width = 8;
    mc.genomic_instances = 6;
    mc.slots_histology = 4;
    mc.slots_genomic = 4;
    mc.iterations = 3;
    mc.fusion_layers = 3;
    mc.num_bins = 4;
    mc.gate_temperature = 1.0;
    return mc;
}

inline Dataset micro_dataset(std::size_t patients = 4) {
    SynthConfig sc;
    sc.num_patients = patients;
    sc.min_instances = 8;
    sc.max_instances = 8;
    sc.genomic_instances = 6;
    sc.width = 8;
    sc.motifs = 2;
    sc.censor_fraction = 0.25;
    return generate_synthetic(sc);
}

struct MicroLoss {
    Graph graph;
    Var loss;
    Bindings point;
};

// Batch-mean training loss (lambda = 0.1) of the four micro patients,
// recorded in training mode with fixed noise streams.
inline void build_micro_loss(MicroLoss& out, const Model& model, const Dataset& data) {
    BoundParams p(out.graph, model.params);
    Var total;
    const std::size_t n = data.size();
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::substream(5, i);
        PatientData pd{&data.histology[i], &*data.genomic[i], {}};
        ForwardOptions opt{true, &rng, 0.1};
        PatientGraph pg = build_patient(p, model, pd, opt, Label{1 + i % 4, data.cohort.records[i].censor});
        total = total.valid() ? out.graph.add(total, pg.loss) : pg.loss;
    }
    out.loss = out.graph.scale(total, 1.0 / double(n));
    for (const auto& name : out.graph.input_names()) out.point[name] = model.params.get(name);
}

// ---- independent survival oracles -----------------------------------------

// Every ordered pair, no sorting.
inline double brute_c_index(std::span<const double> risk, std::span<const double> time, std::span<const int> censor) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < risk.size(); ++i)
        for (std::size_t j = 0; j < risk.size(); ++j) {
            if (i == j || censor[i] != 0 || !(time[i] < time[j])) continue;
            den += 1.0;
            if (risk[i] > risk[j]) num += 1.0;
            else if (risk[i] == risk[j]) num += 0.5;
        }
    return num / den;
}

// (O - E)^2 / V over the pooled distinct event times.
inline double brute_logrank(std::span<const double> ta, std::span<const int> ea, std::span<const double> tb,
                            std::span<const int> eb) {
    std::vector<double> times;
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (ea[i]) times.push_back(ta[i]);
    for (std::size_t i = 0; i < tb.size(); ++i)
        if (eb[i]) times.push_back(tb[i]);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    double o_minus_e = 0.0, var = 0.0;
    for (double t : times) {
        double na = 0, nb = 0, da = 0, db = 0;
        for (std::size_t i = 0; i < ta.size(); ++i) {
            if (ta[i] >= t) ++na;
            if (ta[i] == t && ea[i]) ++da;
        }
        for (std::size_t i = 0; i < tb.size(); ++i) {
            if (tb[i] >= t) ++nb;
            if (tb[i] == t && eb[i]) ++db;
        }
        const double n = na + nb, d = da + db;
        o_minus_e += da - d * na / n;
        if (n > 1) var += d * (na / n) * (nb / n) * (n - d) / (n - 1);
    }
    return o_minus_e * o_minus_e / var;
}

// Direct discrete-time likelihood: product form, logged at the end.
inline double direct_nll(std::span<const double> h, std::size_t bin, int censor) {
    double surv_before = 1.0;
    for (std::size_t k = 0; k + 1 < bin; ++k) surv_before *= 1.0 - h[k];
    if (censor) return -std::log(surv_before * (1.0 - h[bin - 1]));
    return -std::log(surv_before * h[bin - 1]);
}

}  // namespace slotspe::testing
