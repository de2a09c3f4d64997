// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace slotspe {

// Survival evaluation. concordance_index takes censor flags as stored in a
// SurvivalRecord (1 = censored); the KM, log-rank and bootstrap routines take
// event flags (1 = event observed).

/// Harrell's C over pairs with time_i < time_j and i an event; ties in risk
/// count one half. Throws when no pair is comparable.
double concordance_index(std::span<const double> risks, std::span<const double> times,
                         std::span<const int> censor);

struct KMEstimate {
    std::vector<double> times;  ///< distinct event times, ascending
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;
    std::vector<double> survival;  ///< S(t) just after each time

    /// Step-function value at t (1 before the first event time).
    double at(double t) const;
};

KMEstimate km_estimate(std::span<const double> times, std::span<const int> events);

struct LogRankResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-group log-rank test with one degree of freedom. Throws when the
/// variance is zero.
LogRankResult logrank_test(std::span<const double> times_a, std::span<const int> events_a,
                           std::span<const double> times_b, std::span<const int> events_b);

/// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double dof);

/// Area under the KM step function on [0, horizon].
double rmst(const KMEstimate& km, double horizon);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct BootstrapResult {
    double rmst_high = 0.0;
    double rmst_low = 0.0;
    double delta = 0.0;
    Interval delta_ci;
    double delta_p = 1.0;
    double ratio = 0.0;
    Interval ratio_ci;
    std::size_t replicates = 0;
    std::size_t skipped = 0;
};

struct SurvivalGroup {
    std::vector<double> times;
    std::vector<int> events;
};

/// Percentile bootstrap of the RMST difference and (log-scale) ratio.
/// Resamples without an event in either group are skipped; more than 20%
/// skipped is an error.
BootstrapResult bootstrap_stats(const SurvivalGroup& high, const SurvivalGroup& low, double horizon,
                                std::size_t replicates, std::uint64_t seed);

}  // namespace slotspe
