// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "slotspe/stats.hpp"
#include "slotspe/survival.hpp"
#include "support/support.hpp"

using namespace slotspe;
namespace oracle = slotspe::testing;

// ---- survival head and loss ------------------------------------------------

TEST_CASE("zero logits give halving survival") {
    const std::vector<double> logits(4, 0.0);
    const HazardCurve c = hazards_from_logits(logits);
    CHECK(c.hazards == std::vector<double>(4, 0.5));
    CHECK(c.survival[0] == doctest::Approx(0.5));
    CHECK(c.survival[1] == doctest::Approx(0.25));
    CHECK(c.survival[2] == doctest::Approx(0.125));
    CHECK(c.survival[3] == doctest::Approx(0.0625));
    CHECK(c.risk == doctest::Approx(-0.9375));
}

TEST_CASE("very negative logits keep everyone alive") {
    const std::vector<double> logits(4, -40.0);
    const HazardCurve c = hazards_from_logits(logits);
    for (double s : c.survival) CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(c.risk == doctest::Approx(-4.0).epsilon(1e-5));
}

TEST_CASE("survival is non-increasing and hazards are clamped") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> logits;
        for (int k = 0; k < 6; ++k) logits.push_back(rng.uniform(-30.0, 30.0));
        const HazardCurve c = hazards_from_logits(logits);
        for (std::size_t k = 0; k < c.hazards.size(); ++k) {
            CHECK(c.hazards[k] >= kHazardFloor);
            CHECK(c.hazards[k] <= 1.0 - kHazardFloor);
            if (k) CHECK(c.survival[k] <= c.survival[k - 1]);
        }
    }
}

TEST_CASE("nll golden values") {
    const HazardCurve halves = curve_from_hazards(std::vector<double>(4, 0.5));
    CHECK(nll_loss(halves, 1, 1) == doctest::Approx(0.6931).epsilon(1e-4));
    CHECK(nll_loss(halves, 2, 0) == doctest::Approx(1.3863).epsilon(1e-4));
    const HazardCurve sure = curve_from_hazards(std::vector<double>(4, 1.0 - 1e-7));
    CHECK(nll_loss(sure, 1, 0) < 1e-6);
}

TEST_CASE("nll matches the direct likelihood on 1000 random triples") {
    PrecisionScope ps(Precision::f64);
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> h;
        for (int k = 0; k < 4; ++k) h.push_back(rng.uniform(0.01, 0.99));
        const std::size_t bin = 1 + rng.uniform_index(4);
        const int censor = rng.uniform() < 0.3;
        CHECK(std::abs(nll_loss(curve_from_hazards(h), bin, censor) - oracle::direct_nll(h, bin, censor)) < 1e-9);
    }
}

TEST_CASE("graph nll agrees with the scalar nll") {
    PrecisionScope ps(Precision::f64);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> logits;
        for (int k = 0; k < 4; ++k) logits.push_back(rng.uniform(-3.0, 3.0));
        const std::size_t bin = 1 + rng.uniform_index(4);
        const int censor = rng.uniform() < 0.5;
        Graph g;
        Var l = g.input("l", Tensor::row(logits));
        CHECK(g.value(nll_loss(g, l, bin, censor)).item() ==
              doctest::Approx(nll_loss(hazards_from_logits(logits), bin, censor)).epsilon(1e-12));
    }
}

TEST_CASE("total loss accounting") {
    std::vector<LossTerms> batch{{1.0, 2.0, 3.0, 0.5, 0.25, 0.125}, {3.0, 2.0, 1.0, 0.5, 0.75, 0.375}};
    const LossReport zero = total_loss(batch, 0.0);
    CHECK(zero.total == doctest::Approx(2.0 + 2.0 + 2.0));
    const LossReport r = total_loss(batch, 0.1);
    CHECK(r.total == doctest::Approx(r.surv_fused + r.surv_hist + r.surv_gen +
                                     0.1 * (r.recon_g + r.recon_h + r.recon_cross)));
    std::vector<LossTerms> perfect{{1.0, 1.0, 1.0, 0.0, 0.0, 0.0}};
    CHECK(total_loss(perfect, 5.0).total == doctest::Approx(3.0));
}

// ---- C-index -----------------------------------------------------------------

TEST_CASE("c-index golden cases") {
    const std::vector<double> t{1, 2, 3};
    const std::vector<int> none{0, 0, 0};
    CHECK(concordance_index(std::vector<double>{3, 2, 1}, t, none) == 1.0);
    CHECK(concordance_index(std::vector<double>{2, 3, 1}, t, none) == doctest::Approx(2.0 / 3.0));
    CHECK(concordance_index(std::vector<double>{1, 2}, std::vector<double>{1, 2}, std::vector<int>{0, 1}) == 0.0);
    CHECK_THROWS(concordance_index(std::vector<double>{1, 2}, std::vector<double>{1, 2}, std::vector<int>{1, 1}));
}

TEST_CASE("c-index equals the pairwise enumerator on random cohorts") {
    Rng rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(49);
        std::vector<double> risk, time;
        std::vector<int> censor;
        for (std::size_t i = 0; i < n; ++i) {
            risk.push_back(double(rng.uniform_index(10)));  // ties on purpose
            time.push_back(double(1 + rng.uniform_index(30)));
            censor.push_back(rng.uniform() < 0.3);
        }
        bool comparable = false;
        for (std::size_t i = 0; i < n && !comparable; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (!censor[i] && time[i] < time[j]) comparable = true;
        if (!comparable) continue;
        ++checked;
        CHECK(concordance_index(risk, time, censor) == oracle::brute_c_index(risk, time, censor));
    }
    CHECK(checked > 900);
}

// ---- Kaplan-Meier, log-rank, RMST -------------------------------------------

TEST_CASE("kaplan-meier golden cases") {
    const KMEstimate all = km_estimate(std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 1});
    CHECK(all.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(all.at(2) == doctest::Approx(1.0 / 3.0));
    CHECK(all.at(3) == doctest::Approx(0.0));
    CHECK(all.at(0.5) == 1.0);
    const KMEstimate cens = km_estimate(std::vector<double>{1, 2, 3}, std::vector<int>{1, 0, 1});
    CHECK(cens.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(cens.at(2.5) == doctest::Approx(2.0 / 3.0));
    CHECK(cens.at(3) == doctest::Approx(0.0));
    const KMEstimate none = km_estimate(std::vector<double>{1, 2, 3}, std::vector<int>{0, 0, 0});
    CHECK(none.at(10) == 1.0);
}

TEST_CASE("log-rank golden cases") {
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    const std::vector<int> ev{1, 1, 1};
    const LogRankResult same = logrank_test(a, ev, a, ev);
    CHECK(same.statistic == doctest::Approx(0.0));
    CHECK(same.p_value == doctest::Approx(1.0));
    const LogRankResult r = logrank_test(a, ev, b, ev);
    CHECK(std::abs(r.statistic - oracle::brute_logrank(a, ev, b, ev)) < 1e-10);
}

TEST_CASE("log-rank equals the O-E/V oracle on random groups") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> ta, tb;
        std::vector<int> ea, eb;
        for (std::size_t i = 0, n = 3 + rng.uniform_index(20); i < n; ++i) {
            ta.push_back(double(1 + rng.uniform_index(15)));
            ea.push_back(rng.uniform() < 0.7);
        }
        for (std::size_t i = 0, n = 3 + rng.uniform_index(20); i < n; ++i) {
            tb.push_back(double(1 + rng.uniform_index(15)));
            eb.push_back(rng.uniform() < 0.7);
        }
        ea[0] = eb[0] = 1;
        const double expect = oracle::brute_logrank(ta, ea, tb, eb);
        if (!std::isfinite(expect)) continue;
        CHECK(std::abs(logrank_test(ta, ea, tb, eb).statistic - expect) < 1e-10);
    }
}

TEST_CASE("chi-square tail at the 5% critical value") {
    CHECK(std::abs(chi_square_sf(3.841, 1.0) - 0.05) < 2e-4);
    CHECK(chi_square_sf(0.0, 1.0) == doctest::Approx(1.0));
    // Q(1, x) = exp(-x) exercises both branches
    CHECK(regularized_gamma_q(1.0, 0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(regularized_gamma_q(1.0, 7.0) == doctest::Approx(std::exp(-7.0)).epsilon(1e-12));
}

TEST_CASE("rmst golden cases") {
    const KMEstimate none = km_estimate(std::vector<double>{1, 2, 3}, std::vector<int>{0, 0, 0});
    CHECK(rmst(none, 60.0) == 60.0);
    const KMEstimate all = km_estimate(std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 1});
    CHECK(rmst(all, 3.0) == 2.0);
    CHECK(rmst(all, 0.5) == 0.5);
}

TEST_CASE("rmst is bounded by and monotone in the horizon") {
    Rng rng(4);
    std::vector<double> t;
    std::vector<int> e;
    for (int i = 0; i < 30; ++i) {
        t.push_back(rng.uniform(0.0, 80.0));
        e.push_back(rng.uniform() < 0.6);
    }
    const KMEstimate km = km_estimate(t, e);
    double prev = 0.0;
    for (double h = 1.0; h <= 100.0; h += 3.0) {
        const double r = rmst(km, h);
        CHECK(r <= h + 1e-12);
        CHECK(r >= prev);
        prev = r;
    }
}

TEST_CASE("bootstrap on identical groups straddles no effect") {
    SurvivalGroup g;
    Rng rng(6);
    for (int i = 0; i < 40; ++i) {
        g.times.push_back(rng.uniform(1.0, 70.0));
        g.events.push_back(rng.uniform() < 0.7);
    }
    const BootstrapResult r = bootstrap_stats(g, g, 60.0, 300, 11);
    CHECK(r.delta == doctest::Approx(0.0));
    CHECK(r.delta_ci.lo <= 0.0);
    CHECK(r.delta_ci.hi >= 0.0);
    CHECK(r.ratio_ci.lo <= 1.0);
    CHECK(r.ratio_ci.hi >= 1.0);
    CHECK(r.delta_p > 0.05);
    const BootstrapResult again = bootstrap_stats(g, g, 60.0, 300, 11);
    CHECK(again.delta_ci.lo == r.delta_ci.lo);
    CHECK(again.delta_p == r.delta_p);
}
