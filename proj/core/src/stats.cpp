// SPDX-License-Identifier: Apache-2.0
#include "slotspe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "slotspe/cohort.hpp"
#include "slotspe/rng.hpp"

namespace slotspe {

double concordance_index(std::span<const double> risks, std::span<const double> times,
                         std::span<const int> censor) {
    const std::size_t n = risks.size();
    if (times.size() != n || censor.size() != n) throw std::invalid_argument("concordance_index: length mismatch");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

    double credit = 0.0;
    std::uint64_t pairs = 0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t i = order[a];
        if (censor[i] != 0) continue;
        for (std::size_t b = a + 1; b < n; ++b) {
            const std::size_t j = order[b];
            if (!(times[i] < times[j])) continue;
            ++pairs;
            if (risks[i] > risks[j]) credit += 1.0;
            else if (risks[i] == risks[j]) credit += 0.5;
        }
    }
    if (pairs == 0) throw std::invalid_argument("concordance_index: no comparable pairs");
    return credit / static_cast<double>(pairs);
}

double KMEstimate::at(double t) const {
    double s = 1.0;
    for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) s = survival[i];
    return s;
}

KMEstimate km_estimate(std::span<const double> times, std::span<const int> events) {
    if (times.size() != events.size()) throw std::invalid_argument("km_estimate: length mismatch");
    if (times.empty()) throw std::invalid_argument("km_estimate: empty sample");
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

    KMEstimate km;
    std::size_t at_risk = times.size();
    double s = 1.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = times[order[i]];
        std::size_t d = 0, leaving = 0;
        while (i < order.size() && times[order[i]] == t) {
            d += events[order[i]] != 0 ? 1 : 0;
            ++leaving;
            ++i;
        }
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            km.times.push_back(t);
            km.at_risk.push_back(at_risk);
            km.events.push_back(d);
            km.survival.push_back(s);
        }
        at_risk -= leaving;
    }
    return km;
}

LogRankResult logrank_test(std::span<const double> times_a, std::span<const int> events_a,
                           std::span<const double> times_b, std::span<const int> events_b) {
    if (times_a.empty() || times_b.empty()) throw std::invalid_argument("logrank_test: empty group");
    if (times_a.size() != events_a.size() || times_b.size() != events_b.size())
        throw std::invalid_argument("logrank_test: length mismatch");

    std::vector<double> grid;
    for (std::size_t i = 0; i < times_a.size(); ++i)
        if (events_a[i]) grid.push_back(times_a[i]);
    for (std::size_t i = 0; i < times_b.size(); ++i)
        if (events_b[i]) grid.push_back(times_b[i]);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    auto tally = [](std::span<const double> times, std::span<const int> events, double t, double& n, double& d) {
        n = 0.0;
        d = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] >= t) n += 1.0;
            if (times[i] == t && events[i]) d += 1.0;
        }
    };

    double observed_minus_expected = 0.0, variance = 0.0;
    for (double t : grid) {
        double na, da, nb, db;
        tally(times_a, events_a, t, na, da);
        tally(times_b, events_b, t, nb, db);
        const double n = na + nb, d = da + db;
        observed_minus_expected += da - d * na / n;
        if (n > 1.0) variance += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
    }
    if (!(variance > 0.0)) throw std::invalid_argument("logrank_test: zero variance");
    LogRankResult r;
    r.statistic = observed_minus_expected * observed_minus_expected / variance;
    r.p_value = chi_square_sf(r.statistic, 1.0);
    return r;
}

namespace {

constexpr int kGammaMaxIter = 500;
constexpr double kGammaEps = 1e-15;

// Lower series for P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < kGammaMaxIter; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kGammaEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kGammaMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kGammaEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("regularized_gamma_q: need a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_fraction(a, x);
}

double chi_square_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return regularized_gamma_q(dof / 2.0, x / 2.0);
}

double rmst(const KMEstimate& km, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("rmst: horizon must be positive");
    double area = 0.0, s = 1.0, prev = 0.0;
    for (std::size_t i = 0; i < km.times.size() && km.times[i] < horizon; ++i) {
        area += s * (km.times[i] - prev);
        prev = km.times[i];
        s = km.survival[i];
    }
    return area + s * (horizon - prev);
}

namespace {

constexpr double kMaxSkipFraction = 0.2;

bool has_event(const SurvivalGroup& g) {
    return std::any_of(g.events.begin(), g.events.end(), [](int e) { return e != 0; });
}

double group_rmst(const SurvivalGroup& g, double horizon) { return rmst(km_estimate(g.times, g.events), horizon); }

SurvivalGroup resample(const SurvivalGroup& g, Rng& rng) {
    SurvivalGroup out;
    out.times.reserve(g.times.size());
    out.events.reserve(g.times.size());
    for (std::size_t i = 0; i < g.times.size(); ++i) {
        const std::size_t j = rng.uniform_index(g.times.size());
        out.times.push_back(g.times[j]);
        out.events.push_back(g.events[j]);
    }
    return out;
}

Interval percentile_interval(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {quantile_sorted(v, 0.025), quantile_sorted(v, 0.975)};
}

}  // namespace

BootstrapResult bootstrap_stats(const SurvivalGroup& high, const SurvivalGroup& low, double horizon,
                                std::size_t replicates, std::uint64_t seed) {
    if (replicates < 1) throw std::invalid_argument("bootstrap_stats: need at least one replicate");
    if (high.times.empty() || low.times.empty()) throw std::invalid_argument("bootstrap_stats: empty group");
    if (high.times.size() != high.events.size() || low.times.size() != low.events.size())
        throw std::invalid_argument("bootstrap_stats: length mismatch");

    BootstrapResult r;
    r.rmst_high = group_rmst(high, horizon);
    r.rmst_low = group_rmst(low, horizon);
    r.delta = r.rmst_high - r.rmst_low;
    r.ratio = r.rmst_high / r.rmst_low;

    std::vector<double> deltas, log_ratios;
    deltas.reserve(replicates);
    log_ratios.reserve(replicates);
    for (std::size_t b = 0; b < replicates; ++b) {
        Rng rng = Rng::substream(seed, b);
        const SurvivalGroup h = resample(high, rng);
        const SurvivalGroup l = resample(low, rng);
        if (!has_event(h) || !has_event(l)) {
            ++r.skipped;
            continue;
        }
        const double rh = group_rmst(h, horizon), rl = group_rmst(l, horizon);
        deltas.push_back(rh - rl);
        log_ratios.push_back(std::log(rh / rl));
    }
    if (static_cast<double>(r.skipped) > kMaxSkipFraction * static_cast<double>(replicates) || deltas.empty())
        throw std::invalid_argument("bootstrap_stats: " + std::to_string(r.skipped) + " of " +
                                    std::to_string(replicates) + " resamples had no events");
    r.replicates = deltas.size();

    r.delta_ci = percentile_interval(deltas);
    const Interval lr = percentile_interval(log_ratios);
    r.ratio_ci = {std::exp(lr.lo), std::exp(lr.hi)};

    const double n = static_cast<double>(deltas.size());
    const double below = static_cast<double>(std::count_if(deltas.begin(), deltas.end(), [](double d) { return d <= 0.0; }));
    const double above = static_cast<double>(std::count_if(deltas.begin(), deltas.end(), [](double d) { return d >= 0.0; }));
    const double floor = std::min(1.0, 2.0 / static_cast<double>(replicates));
    r.delta_p = std::clamp(2.0 * std::min(below, above) / n, floor, 1.0);
    return r;
}

}  // namespace slotspe
