#include "gbx/stability.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "gbx/parallel.hpp"
#include "gbx/rng.hpp"

namespace gbx {

namespace {

constexpr std::uint64_t kSweepTag = 0x535750;

double mean_of(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(xs.size() - 1);
}

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) {
        throw std::domain_error("incomplete beta requires positive shape parameters");
    }
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (!(dof > 0.0)) {
        throw std::domain_error("degrees of freedom must be positive");
    }
    const double x = dof / (dof + t * t);
    const double tail = 0.5 * regularized_incomplete_beta(dof / 2.0, 0.5, x);
    return t <= 0.0 ? tail : 1.0 - tail;
}

double t_test_one_tailed(std::span<const double> baseline,
                         std::span<const double> candidate) {
    if (baseline.size() < 2 || candidate.size() < 2) {
        throw ValidationError("t-test needs at least two samples per side");
    }
    const double ma = mean_of(baseline);
    const double mb = mean_of(candidate);
    const double va = sample_variance(baseline, ma);
    const double vb = sample_variance(candidate, mb);
    if (va == 0.0 && vb == 0.0) {
        throw DegenerateSamplesError("both sample sets have zero variance");
    }
    const auto na = static_cast<double>(baseline.size());
    const auto nb = static_cast<double>(candidate.size());
    const double se2 = va / na + vb / nb;
    const double t = (mb - ma) / std::sqrt(se2);
    double dof = se2 * se2;
    double denom = 0.0;
    if (va > 0.0) denom += (va / na) * (va / na) / (na - 1.0);
    if (vb > 0.0) denom += (vb / nb) * (vb / nb) / (nb - 1.0);
    dof /= denom;
    return student_t_cdf(t, dof);
}

RegressionTest regression_test(std::uint32_t benchmark_id,
                               std::span<const double> baseline,
                               std::span<const double> candidate) {
    RegressionTest out;
    out.benchmark_id = benchmark_id;
    out.baseline_mean = mean_of(baseline);
    out.candidate_mean = mean_of(candidate);
    try {
        out.p_value = t_test_one_tailed(baseline, candidate);
    } catch (const DegenerateSamplesError&) {
        if (out.candidate_mean < out.baseline_mean) {
            out.p_value = 0.0;
        } else if (out.candidate_mean == out.baseline_mean) {
            out.p_value = 0.5;
        } else {
            out.p_value = 1.0;
        }
    }
    out.significant = out.p_value < kSignificanceLevel;
    return out;
}

double stability_metric(std::span<const RegressionTest> tests) {
    if (tests.empty()) {
        throw ValidationError("stability metric needs at least one test");
    }
    std::size_t significant = 0;
    for (const auto& t : tests) significant += t.significant ? 1 : 0;
    return 100.0 * (1.0 - static_cast<double>(significant) /
                              static_cast<double>(tests.size()));
}

std::vector<StabilityReport> drift_sweep(SimSuite suite, const BehaviorPolicy& frozen,
                                         const QTable* table, std::uint64_t horizon,
                                         std::uint64_t stride, int n_samples,
                                         std::uint64_t seed, int jobs) {
    if (horizon > 0) {
        if (stride == 0) throw ValidationError("stride must be positive");
        if (horizon % stride != 0) {
            throw ValidationError("stride must divide the sweep horizon");
        }
    }
    if (n_samples < 2) {
        throw ValidationError("stability sweep needs at least two samples per run");
    }

    const std::uint64_t checkpoints = horizon == 0 ? 0 : horizon / stride;
    std::vector<StabilityReport> reports;
    reports.reserve(checkpoints + 1);

    for (std::uint64_t cp = 0; cp <= checkpoints; ++cp) {
        if (cp > 0) suite.advance_checkins(stride);

        const auto& benchmarks = suite.benchmarks();
        StabilityReport report;
        report.checkin = suite.checkin();
        report.has_table = table != nullptr;
        report.dnn.resize(benchmarks.size());
        if (table) report.table.resize(benchmarks.size());

        parallel_for(benchmarks.size(), jobs, [&](std::size_t bi) {
            const SimBenchmark& bench = benchmarks[bi];
            // one noise stream per (checkpoint, benchmark), shared by the
            // baseline and both candidates
            const std::uint64_t run_seed = derive_seed({seed, kSweepTag, cp, bench.id});

            ActionAssignment base_assign;
            ActionAssignment dnn_assign;
            ActionAssignment table_assign;
            for (auto id : bench.shader_ids) {
                const auto [state, key] = suite.compile(id, kDefaultAction);
                base_assign[id] = Action::Wave64;
                dnn_assign[id] = select_greedy(frozen, state);
                if (table) {
                    table_assign[id] = table->entries().contains(key)
                                           ? table->greedy_action(key)
                                           : kDefaultAction;
                }
            }

            const auto base = suite.run_benchmark(bench.id, base_assign, n_samples, run_seed);
            const auto dnn = suite.run_benchmark(bench.id, dnn_assign, n_samples, run_seed);
            report.dnn[bi] = regression_test(bench.id, base.samples, dnn.samples);
            if (table) {
                const auto tbl =
                    suite.run_benchmark(bench.id, table_assign, n_samples, run_seed);
                report.table[bi] = regression_test(bench.id, base.samples, tbl.samples);
            }
        });

        report.dnn_stability = stability_metric(report.dnn);
        if (table) report.table_stability = stability_metric(report.table);
        reports.push_back(std::move(report));
    }
    return reports;
}

namespace {

void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

} // namespace

void write_stability_csv(std::ostream& os, std::span<const StabilityReport> reports) {
    const bool with_table = !reports.empty() && reports.front().has_table;
    os << "t,benchmark,baseline_mean,candidate_mean,p_value,significant,stability_pct_at_t";
    if (with_table) {
        os << ",table_mean,table_p_value,table_significant,table_stability_pct_at_t";
    }
    os << '\n';
    std::string line;
    for (const auto& report : reports) {
        for (std::size_t bi = 0; bi < report.dnn.size(); ++bi) {
            const auto& t = report.dnn[bi];
            line.clear();
            line += std::to_string(report.checkin);
            line += ',';
            line += std::to_string(t.benchmark_id);
            line += ',';
            append_double(line, t.baseline_mean);
            line += ',';
            append_double(line, t.candidate_mean);
            line += ',';
            append_double(line, t.p_value);
            line += ',';
            line += t.significant ? '1' : '0';
            line += ',';
            append_double(line, report.dnn_stability);
            if (with_table) {
                const auto& tt = report.table[bi];
                line += ',';
                append_double(line, tt.candidate_mean);
                line += ',';
                append_double(line, tt.p_value);
                line += ',';
                line += tt.significant ? '1' : '0';
                line += ',';
                append_double(line, report.table_stability);
            }
            line += '\n';
            os << line;
        }
    }
}

} // namespace gbx
