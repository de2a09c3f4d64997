// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "slotspe/model.hpp"
#include "slotspe/slot_encoder.hpp"
#include "slotspe/stats.hpp"
#include "slotspe/synth.hpp"

using namespace slotspe;

namespace {

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

ModelConfig desk_model() {
    ModelConfig mc;
    mc.width = 32;
    mc.genomic_instances = 32;
    mc.slots_histology = mc.slots_genomic = 8;
    mc.iterations = 3;
    return mc;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = random_tensor(rng, n, n), b = random_tensor(rng, n, n);
    for (auto _ : state) {
        Graph g;
        benchmark::DoNotOptimize(g.value(g.matmul(g.constant(a), g.constant(b))));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Encode(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const Model model = init_model(desk_model(), 1);
    Rng rng(2);
    const Tensor bag = random_tensor(rng, m, 32);
    for (auto _ : state) {
        Graph g;
        BoundParams p(g, model.params);
        SlotSet s = encode(p, "slot_h", g.constant(bag), 3, InitMode::deterministic, nullptr,
                           Aggregation::weighted_mean);
        benchmark::DoNotOptimize(g.value(s.slots));
    }
}
BENCHMARK(BM_Encode)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

void BM_PatientForwardBackward(benchmark::State& state) {
    SynthConfig sc;
    sc.num_patients = 4;
    const Dataset d = generate_synthetic(sc);
    const Model model = init_model(desk_model(), 1);
    const PatientData pd{&d.histology[0], &*d.genomic[0], {}};
    std::uint64_t stream = 0;
    for (auto _ : state) {
        Graph g;
        BoundParams p(g, model.params);
        Rng rng = Rng::substream(3, stream++);
        PatientGraph pg = build_patient(p, model, pd, ForwardOptions{true, &rng, 0.1}, Label{2, 0});
        benchmark::DoNotOptimize(g.backward(pg.loss));
    }
}
BENCHMARK(BM_PatientForwardBackward)->Unit(benchmark::kMillisecond);

void BM_ConcordanceIndex(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(4);
    std::vector<double> risk(n), time(n);
    std::vector<int> censor(n);
    for (std::size_t i = 0; i < n; ++i) {
        risk[i] = rng.normal();
        time[i] = rng.uniform(1.0, 100.0);
        censor[i] = rng.uniform() < 0.3;
    }
    for (auto _ : state) benchmark::DoNotOptimize(concordance_index(risk, time, censor));
}
BENCHMARK(BM_ConcordanceIndex)->Arg(200)->Arg(1000);

}  // namespace
BENCHMARK_MAIN();
