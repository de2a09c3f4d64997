// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "slotspe/bag.hpp"
#include "slotspe/cohort.hpp"
#include "slotspe/config.hpp"
#include "slotspe/synth.hpp"
#include "support/support.hpp"

using namespace slotspe;
using slotspe::testing::TempDir;

namespace {

FeatureBag small_bag() {
    FeatureBag b;
    b.modality = Modality::genomic;
    b.instances = 3;
    b.width = 2;
    b.values = {1, 2, 3, 4, 5, 6};
    return b;
}

BagError::Kind decode_kind(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_bag(bytes);
    } catch (const BagError& e) {
        return e.kind();
    }
    FAIL("bag decoded");
    return BagError::Kind::io;
}

Cohort cohort_of(std::vector<double> times, std::vector<int> censor) {
    Cohort c;
    for (std::size_t i = 0; i < times.size(); ++i) {
        SurvivalRecord r;
        r.patient_id = "p" + std::to_string(i);
        r.time_months = times[i];
        r.censor = censor.empty() ? 0 : censor[i];
        c.records.push_back(r);
        c.histology_paths.emplace_back("h" + std::to_string(i) + ".bag");
        c.genomic_paths.emplace_back(std::nullopt);
    }
    return c;
}

}  // namespace

TEST_CASE("bag round trip 3x2") {
    TempDir dir("bag");
    const FeatureBag b = small_bag();
    write_bag(b, dir / "b.bag");
    CHECK(load_bag(dir / "b.bag") == b);
}

TEST_CASE("bag header layout") {
    const auto bytes = encode_bag(small_bag());
    REQUIRE(bytes.size() == kBagHeaderBytes + 6 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SSPE");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 1);  // genomic
    CHECK(bytes[7] == 0);
    CHECK(bytes[8] == 3);
    CHECK(bytes[12] == 2);
    // 1.0f little-endian
    CHECK(bytes[16] == 0x00);
    CHECK(bytes[19] == 0x3f);
}

TEST_CASE("malformed bags are classified") {
    auto good = encode_bag(small_bag());
    auto bad = good;
    bad[0] = 'X';
    CHECK(decode_kind(bad) == BagError::Kind::bad_magic);
    bad = good;
    bad[4] = 2;
    CHECK(decode_kind(bad) == BagError::Kind::version_mismatch);
    bad = good;
    bad[8] = 9;  // M = 9 but payload holds 3 rows
    CHECK(decode_kind(bad) == BagError::Kind::truncated);
    bad = good;
    bad.resize(10);
    CHECK(decode_kind(bad) == BagError::Kind::truncated);
    bad = good;
    bad.push_back(0);
    CHECK(decode_kind(bad) == BagError::Kind::trailing_bytes);
    bad = good;
    bad[16] = 0x00;
    bad[17] = 0x00;
    bad[18] = 0xc0;
    bad[19] = 0x7f;  // NaN
    CHECK(decode_kind(bad) == BagError::Kind::non_finite);
    bad = good;
    bad[6] = 7;
    CHECK(decode_kind(bad) == BagError::Kind::bad_header);
}

TEST_CASE("100 random bags round trip bitwise") {
    Rng rng(21);
    TempDir dir("bags");
    for (int i = 0; i < 100; ++i) {
        FeatureBag b;
        b.modality = rng.uniform() < 0.5 ? Modality::histology : Modality::genomic;
        b.instances = 1 + rng.uniform_index(20);
        b.width = 1 + rng.uniform_index(9);
        for (std::size_t k = 0; k < b.instances * b.width; ++k) b.values.push_back(float(rng.normal() * 100.0));
        const auto path = dir / ("b" + std::to_string(i) + ".bag");
        write_bag(b, path);
        const FeatureBag back = load_bag(path);
        CHECK(back == b);
        CHECK(encode_bag(back) == encode_bag(b));
    }
}

TEST_CASE("quantile rule interpolates order statistics") {
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(quantile_sorted(v, 0.25) == doctest::Approx(2.75));
    CHECK(quantile_sorted(v, 0.5) == doctest::Approx(4.5));
    CHECK(quantile_sorted(v, 0.75) == doctest::Approx(6.25));
    CHECK(quantile_sorted(v, 0.0) == 1.0);
    CHECK(quantile_sorted(v, 1.0) == 8.0);
}

TEST_CASE("discretize uncensored 1..8 into four bins") {
    Cohort c = cohort_of({1, 2, 3, 4, 5, 6, 7, 8}, {});
    const auto edges = discretize_times(c, 4);
    REQUIRE(edges.size() == 3);
    CHECK(edges[0] == doctest::Approx(2.75));
    CHECK(edges[1] == doctest::Approx(4.5));
    CHECK(edges[2] == doctest::Approx(6.25));
    std::vector<int> bins;
    for (const auto& r : c.records) bins.push_back(r.time_bin);
    CHECK(bins == std::vector<int>{1, 1, 2, 2, 3, 3, 4, 4});
}

TEST_CASE("discretize two bins at the median") {
    Cohort c = cohort_of({1, 2, 3, 4}, {});
    const auto edges = discretize_times(c, 2);
    REQUIRE(edges.size() == 1);
    CHECK(edges[0] == doctest::Approx(2.5));
    CHECK(c.records[1].time_bin == 1);
    CHECK(c.records[2].time_bin == 2);
}

TEST_CASE("discretize rejects degenerate and sparse inputs") {
    Cohort same = cohort_of({5, 5, 5, 5, 5}, {});
    CHECK_THROWS_AS(discretize_times(same, 4), DataError);
    Cohort sparse = cohort_of({1, 2, 3, 4}, {0, 1, 1, 1});
    CHECK_THROWS_AS(discretize_times(sparse, 4), DataError);
}

TEST_CASE("censored times beyond the last edge land in the last bin") {
    Cohort c = cohort_of({1, 2, 3, 4, 5, 6, 7, 8, 100}, {0, 0, 0, 0, 0, 0, 0, 0, 1});
    discretize_times(c, 4);
    CHECK(c.records.back().time_bin == 4);
}

TEST_CASE("bins lie in range and uncensored bin sizes differ by at most one") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 8 + rng.uniform_index(40);
        std::vector<double> t;
        std::vector<int> c;
        for (std::size_t i = 0; i < n; ++i) {
            t.push_back(rng.uniform(0.0, 100.0));
            c.push_back(rng.uniform() < 0.3 ? 1 : 0);
        }
        for (std::size_t i = 0; i < 4; ++i) c[i] = 0;
        Cohort co = cohort_of(t, c);
        discretize_times(co, 4);
        std::vector<int> count(5, 0);
        for (const auto& r : co.records) {
            CHECK(r.time_bin >= 1);
            CHECK(r.time_bin <= 4);
            if (!r.censor) ++count[r.time_bin];
        }
        const auto [lo, hi] = std::minmax_element(count.begin() + 1, count.end());
        CHECK(*hi - *lo <= 1);
    }
}

TEST_CASE("kfold sizes, disjointness and determinism") {
    auto f10 = kfold_split(10, 5, 3);
    for (const auto& f : f10) CHECK(f.size() == 2);
    auto f11 = kfold_split(11, 5, 3);
    std::vector<std::size_t> sizes;
    for (const auto& f : f11) sizes.push_back(f.size());
    CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});
    std::set<std::size_t> all;
    std::size_t total = 0;
    for (const auto& f : f11) {
        total += f.size();
        all.insert(f.begin(), f.end());
    }
    CHECK(total == 11);
    CHECK(all.size() == 11);
    CHECK(kfold_split(11, 5, 3) == f11);
    CHECK_THROWS(kfold_split(3, 5, 0));
}

TEST_CASE("manifest round trip keeps bins and missing genomics") {
    TempDir dir("manifest");
    Cohort c = cohort_of({1, 2, 3, 4, 5, 6, 7, 8}, {0, 0, 1, 0, 0, 0, 1, 0});
    c.genomic_paths[2] = dir / "g2.bag";
    discretize_times(c, 4);
    save_manifest(c, dir / "m.json");
    Cohort back = load_manifest(dir / "m.json");
    REQUIRE(back.size() == 8);
    CHECK(back.bin_edges == c.bin_edges);
    CHECK(back.records[2].censor == 1);
    CHECK(back.records[5].time_bin == c.records[5].time_bin);
    CHECK(back.genomic_paths[2].has_value());
    CHECK_FALSE(back.genomic_paths[3].has_value());
}

TEST_CASE("manifest errors are data errors") {
    TempDir dir("badmanifest");
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(load_manifest(dir / "bad.json"), DataError);
    std::ofstream(dir / "censor.json")
        << R"({"patients":[{"id":"a","time_months":1,"censor":2,"histology_path":"a.bag","genomic_path":null}],"bin_edges":null})";
    CHECK_THROWS_AS(load_manifest(dir / "censor.json"), DataError);
}

TEST_CASE("synthetic cohort is reproducible") {
    SynthConfig sc;
    sc.num_patients = 12;
    sc.min_instances = 5;
    sc.max_instances = 9;
    sc.genomic_instances = 8;
    sc.width = 4;
    const Dataset a = generate_synthetic(sc);
    const Dataset b = generate_synthetic(sc);
    CHECK(a.histology == b.histology);
    CHECK(a.genomic == b.genomic);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.cohort.records[i].time_months == b.cohort.records[i].time_months);
        CHECK(a.cohort.records[i].censor == b.cohort.records[i].censor);
        CHECK(a.histology[i].instances >= 5);
        CHECK(a.histology[i].instances <= 9);
    }
}

TEST_CASE("censor fraction zero censors nobody") {
    SynthConfig sc;
    sc.num_patients = 30;
    sc.censor_fraction = 0.0;
    sc.min_instances = sc.max_instances = 4;
    sc.genomic_instances = 8;
    sc.width = 4;
    for (const auto& r : generate_synthetic(sc).cohort.records) CHECK(r.censor == 0);
}

TEST_CASE("synthetic cohort on disk loads back") {
    TempDir dir("synth");
    SynthConfig sc;
    sc.num_patients = 6;
    sc.min_instances = sc.max_instances = 4;
    sc.genomic_instances = 8;
    sc.width = 4;
    Cohort c = synth_cohort(sc, dir.path());
    Cohort back = load_manifest(dir / "manifest.json");
    const Dataset d = load_dataset(back);
    validate_dataset(d);
    CHECK(d.histology == generate_synthetic(sc).histology);
    const Dataset no_gen = load_dataset(back, false);
    for (const auto& g : no_gen.genomic) CHECK_FALSE(g.has_value());
}

TEST_CASE("config JSON round trip and unknown keys") {
    TrainConfig tc;
    tc.epochs = 3;
    tc.model.width = 16;
    tc.model.aggregation = Aggregation::sum;
    CHECK(train_config_from_json(to_json_string(tc)) == tc);
    CHECK(train_config_from_json("{}") == TrainConfig{});
    CHECK_THROWS(train_config_from_json(R"({"epochz": 3})"));
    SynthConfig sc;
    sc.seed = 99;
    CHECK(synth_config_from_json(to_json_string(sc)).seed == 99);
}

TEST_CASE("train config defaults") {
    const TrainConfig tc;
    CHECK(tc.learning_rate == 5e-4);
    CHECK(tc.epochs == 30);
    CHECK(tc.batch_size == 32);
    CHECK(tc.lambda == 0.1);
    CHECK(tc.model.slots_histology == 16);
    CHECK(tc.model.slots_genomic == 16);
    CHECK(tc.model.iterations == 10);
    CHECK(tc.model.fusion_layers == 3);
    CHECK(tc.model.k_fraction == 0.25);
    CHECK(tc.model.gate_temperature == 0.01);
    CHECK(tc.patch_subsample == 4096);
    CHECK(tc.model.num_bins == 4);
    CHECK(tc.model.width == 256);
}
