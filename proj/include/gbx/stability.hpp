#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "gbx/policy.hpp"
#include "gbx/qtable.hpp"
#include "gbx/simenv.hpp"

namespace gbx {

class DegenerateSamplesError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kSignificanceLevel = 0.05;

// Regularized incomplete beta function I_x(a, b), evaluated with the
// Lentz continued fraction; absolute accuracy ~1e-13 (well under the 1e-9
// the t-test needs), no external statistics dependency.
double regularized_incomplete_beta(double a, double b, double x);

// Lower-tail CDF of Student's t with (possibly fractional) dof.
double student_t_cdf(double t, double dof);

// Welch two-sample one-tailed t-test; returns the p-value for the
// alternative "candidate mean < baseline mean". Requires two samples per
// side; throws DegenerateSamplesError when both sides have zero variance.
double t_test_one_tailed(std::span<const double> baseline,
                         std::span<const double> candidate);

struct RegressionTest {
    std::uint32_t benchmark_id = 0;
    double baseline_mean = 0.0;
    double candidate_mean = 0.0;
    double p_value = 0.5;
    bool significant = false;
};

// Welch test wrapped with the degenerate-sample convention: exactly equal
// constant sets are a non-regression, a strictly lower constant set is a
// certain regression.
RegressionTest regression_test(std::uint32_t benchmark_id,
                               std::span<const double> baseline,
                               std::span<const double> candidate);

// 100 * (1 - significant regressions / total). Throws on empty input.
double stability_metric(std::span<const RegressionTest> tests);

struct StabilityReport {
    Checkin checkin = 0;
    std::vector<RegressionTest> dnn;
    double dnn_stability = 100.0;
    bool has_table = false;
    std::vector<RegressionTest> table;
    double table_stability = 100.0;
};

// Drift sweep of a frozen policy: at t0 and after every `stride` check-ins
// up to `horizon`, compare the policy (and, when given, the q-table lookup
// with default fallback for unknown keys) against the all-wave64 baseline
// with a Welch test per benchmark. Baseline and candidates share noise
// streams so exact parity never flags a regression.
std::vector<StabilityReport> drift_sweep(SimSuite suite, const BehaviorPolicy& frozen,
                                         const QTable* table, std::uint64_t horizon,
                                         std::uint64_t stride, int n_samples,
                                         std::uint64_t seed, int jobs = 1);

void write_stability_csv(std::ostream& os, std::span<const StabilityReport> reports);

} // namespace gbx
