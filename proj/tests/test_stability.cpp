#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gbx/rng.hpp"
#include "gbx/stability.hpp"

using namespace gbx;

namespace {

// Reference values computed with an independent statistics package and
// frozen here as fixtures.
struct WelchFixture {
    const char* name;
    std::vector<double> baseline;
    std::vector<double> candidate;
    double p_expected;
};

const std::vector<WelchFixture>& fixtures() {
    static const std::vector<WelchFixture> fx = {
        {"clear_regression",
         {100.1, 99.8, 100.3, 99.9, 100.0, 100.2, 99.7, 100.1, 99.95, 100.05},
         {90.1, 89.8, 90.3, 89.9, 90.0, 90.2, 89.7, 90.1, 89.95, 90.05},
         3.9495420530522157e-28},
        {"improvement",
         {60.0, 60.5, 59.5, 60.2, 59.8, 60.1, 59.9, 60.3},
         {61.0, 61.5, 60.5, 61.2, 60.8, 61.1, 60.9, 61.3},
         0.9999920352457622},
        {"small_n", {10.0, 11.0, 12.0}, {9.0, 10.0, 11.0}, 0.1439320673633454},
        {"unequal_var",
         {50.0, 52.0, 48.0, 51.0, 49.0},
         {49.5, 50.5, 45.0, 55.0, 48.2, 51.1, 47.9},
         0.3886411230905616},
        {"near_parity",
         {100.0, 100.4, 99.6, 100.2, 99.8, 100.1, 99.9, 100.3, 99.7, 100.0},
         {99.95, 100.35, 99.55, 100.15, 99.75, 100.05, 99.85, 100.25, 99.65, 99.95},
         0.3350748244389301},
    };
    return fx;
}

} // namespace

TEST_CASE("regularized incomplete beta matches reference values") {
    CHECK(regularized_incomplete_beta(0.5, 0.5, 0.3) ==
          doctest::Approx(0.36901011956554536).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(5.0, 0.5, 0.9) ==
          doctest::Approx(0.3166429150200122).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(4.5, 0.5, 0.99) ==
          doctest::Approx(0.7698749998921366).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(9.0, 0.5, 0.5) ==
          doctest::Approx(0.0004895949065735807).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(2.0, 3.0, 0.4) ==
          doctest::Approx(0.5247999999999999).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(50.0, 0.5, 0.999) ==
          doctest::Approx(0.7523690199653766).epsilon(1e-9));
    CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("student t lower-tail cdf matches reference values") {
    CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(student_t_cdf(-2.5, 9.3) == doctest::Approx(0.016538905157534048).epsilon(1e-9));
    CHECK(student_t_cdf(1.7, 17.2) == doctest::Approx(0.9464292673722308).epsilon(1e-9));
    CHECK(student_t_cdf(-6.0, 3.5) == doctest::Approx(0.002944476322457821).epsilon(1e-9));
    CHECK(student_t_cdf(-0.3, 29.9) == doctest::Approx(0.38312649574137525).epsilon(1e-9));
    CHECK(student_t_cdf(4.2, 2.2) == doctest::Approx(0.977904282008075).epsilon(1e-9));
}

TEST_CASE("welch one-tailed test matches the reference oracle on every fixture") {
    for (const auto& fx : fixtures()) {
        INFO(fx.name);
        const double p = t_test_one_tailed(fx.baseline, fx.candidate);
        CHECK(std::abs(p - fx.p_expected) < 1e-6);
    }
}

TEST_CASE("the derived clear-regression fixture is significant far below 1e-6") {
    const auto& fx = fixtures().front();
    CHECK(t_test_one_tailed(fx.baseline, fx.candidate) < 1e-6);
}

TEST_CASE("permuted equal samples give p = 0.5 exactly") {
    const std::vector<double> a = {10.0, 11.5, 9.5, 10.5, 10.2, 9.8};
    std::vector<double> b = a;
    std::rotate(b.begin(), b.begin() + 2, b.end());
    CHECK(t_test_one_tailed(a, b) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("candidate far above baseline lands in the wrong tail") {
    const std::vector<double> a = {10.0, 10.5, 9.5, 10.2};
    const std::vector<double> b = {20.0, 20.5, 19.5, 20.2};
    CHECK(t_test_one_tailed(a, b) > 0.95);
}

TEST_CASE("degenerate and undersized sample sets are rejected") {
    const std::vector<double> flat = {5.0, 5.0, 5.0};
    CHECK_THROWS_AS(t_test_one_tailed(flat, flat), DegenerateSamplesError);
    const std::vector<double> one = {5.0};
    const std::vector<double> ok = {5.0, 6.0};
    CHECK_THROWS_AS(t_test_one_tailed(one, ok), ValidationError);

    // regression_test applies the caller convention for degenerate sets
    const std::vector<double> lower = {4.0, 4.0, 4.0};
    const std::vector<double> higher = {6.0, 6.0, 6.0};
    CHECK(regression_test(0, flat, flat).significant == false);
    CHECK(regression_test(0, flat, flat).p_value == 0.5);
    CHECK(regression_test(0, flat, lower).significant == true);
    CHECK(regression_test(0, flat, higher).significant == false);
}

TEST_CASE("stability metric arithmetic") {
    auto make = [](int significant, int total) {
        std::vector<RegressionTest> tests(total);
        for (int i = 0; i < significant; ++i) tests[i].significant = true;
        return tests;
    };
    CHECK(stability_metric(make(0, 150)) == 100.0);
    CHECK(stability_metric(make(3, 150)) == doctest::Approx(98.0).epsilon(1e-12));
    CHECK(stability_metric(make(150, 150)) == 0.0);
    CHECK_THROWS_AS(stability_metric({}), ValidationError);
}

TEST_CASE("stability metric is permutation invariant") {
    SplitMix64 rng(77);
    std::vector<RegressionTest> tests(40);
    for (auto& t : tests) t.significant = rng.next_below(2) == 1;
    const double before = stability_metric(tests);
    for (int round = 0; round < 10; ++round) {
        for (std::size_t i = tests.size(); i > 1; --i) {
            std::swap(tests[i - 1], tests[rng.next_below(i)]);
        }
        CHECK(stability_metric(tests) == before);
    }
}

TEST_CASE("drift sweep shape and baseline-identical policy") {
    SuiteSpec spec;
    spec.benchmark_count = 4;
    spec.shaders_min = 3;
    spec.shaders_max = 5;
    spec.pipelines_min = 1;
    spec.pipelines_max = 2;
    spec.exec_fraction = {0.06, 0.12};
    spec.noise_sigma = 0.004;
    spec.drift_rate = 0.01;
    SimSuite suite = SimSuite::generate(spec, 71);

    // a policy that always answers wave64: zero weights with a wave64 bias
    BehaviorPolicy beh{PolicyNet::zeros(), 1, 0};
    beh.net.biases[2][1] = 5.0f;

    const auto reports = drift_sweep(suite, beh, nullptr, 1000, 250, 10, 5);
    REQUIRE(reports.size() == 5);
    for (const auto& rep : reports) {
        // candidate samples are identical to baseline samples: never a regression
        CHECK(rep.dnn_stability == 100.0);
        for (const auto& t : rep.dnn) {
            CHECK(t.p_value == doctest::Approx(0.5).epsilon(1e-12));
        }
    }

    const auto single = drift_sweep(suite, beh, nullptr, 0, 250, 10, 5);
    CHECK(single.size() == 1);
    CHECK(single.front().checkin == suite.checkin());

    CHECK_THROWS_AS(drift_sweep(suite, beh, nullptr, 1000, 300, 10, 5), ValidationError);
    CHECK_THROWS_AS(drift_sweep(suite, beh, nullptr, 1000, 0, 10, 5), ValidationError);
    CHECK_THROWS_AS(drift_sweep(suite, beh, nullptr, 1000, 250, 1, 5), ValidationError);
}

TEST_CASE("drift sweep reports the table fallback column when a table is given") {
    SuiteSpec spec;
    spec.benchmark_count = 3;
    spec.shaders_min = 2;
    spec.shaders_max = 4;
    spec.pipelines_min = 1;
    spec.pipelines_max = 1;
    spec.noise_sigma = 0.004;
    spec.drift_rate = 0.0;
    SimSuite suite = SimSuite::generate(spec, 73);

    QTable table;
    for (const auto& sh : suite.shaders()) {
        const auto key = suite.compile(sh.id, Action::Wave64).second;
        table.update(key, Action::Wave64, 1.0, 0);
        table.update(key, Action::Wave32, 0.9, 0);
    }
    BehaviorPolicy beh{PolicyNet::zeros(), 1, 0};
    beh.net.biases[2][1] = 5.0f;

    const auto reports = drift_sweep(suite, beh, &table, 500, 250, 8, 9);
    REQUIRE(reports.size() == 3);
    for (const auto& rep : reports) {
        CHECK(rep.has_table);
        CHECK(rep.table.size() == rep.dnn.size());
        // table picks wave64 for known keys and falls back to wave64
        // otherwise, so it matches the baseline exactly too
        CHECK(rep.table_stability == 100.0);
    }
}
