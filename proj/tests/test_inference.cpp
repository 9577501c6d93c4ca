#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace evalpower;
using Catch::Approx;

namespace {

ClmmFit synthetic_fit(const std::vector<double>& beta, const Eigen::MatrixXd& beta_vcov) {
    const int S = static_cast<int>(beta.size()) + 1;
    ClmmFit f;
    f.params = testsupport::make_params(3, S, beta, 0.0, 0.0);
    f.converged = true;
    const int k = 2 + S - 1;
    f.vcov_fixed = Eigen::MatrixXd::Identity(k, k) * 0.01;
    f.vcov_fixed.bottomRightCorner(S - 1, S - 1) = beta_vcov;
    return f;
}

} // namespace

TEST_CASE("contrast estimates are differences of effects") {
    const auto fit = synthetic_fit({1.0, 0.3}, Eigen::Matrix2d::Identity());
    const auto cs = pairwise_contrasts(fit, Adjustment::none);
    REQUIRE(cs.size() == 3);
    CHECK(cs[2].system_a == "s1");
    CHECK(cs[2].system_b == "s2");
    CHECK(cs[2].estimate == Approx(0.7));
    CHECK(cs[2].std_error == Approx(std::sqrt(2.0)));
    CHECK(cs[2].z_value == Approx(0.7 / std::sqrt(2.0)));
    CHECK(cs[0].estimate == Approx(-1.0));
    CHECK(cs[0].std_error == Approx(1.0));
}

TEST_CASE("covariance enters the contrast variance") {
    Eigen::Matrix2d v;
    v << 0.5, 0.2, 0.2, 0.3;
    const auto cs = pairwise_contrasts(synthetic_fit({0.4, -0.1}, v), Adjustment::none);
    CHECK(cs[2].std_error == Approx(std::sqrt(0.5 + 0.3 - 0.4)));
}

TEST_CASE("tukey adjustment with two systems equals the two-sided z test") {
    for (double b : {0.05, 0.3, 1.0, 2.5}) {
        Eigen::MatrixXd v(1, 1);
        v << 0.25;
        const auto cs = pairwise_contrasts(synthetic_fit({b}, v), Adjustment::tukey);
        const double z = b / 0.5;
        CHECK(cs[0].p_adjusted == Approx(std::erfc(z / std::sqrt(2.0))).margin(1e-8));
    }
}

TEST_CASE("studentized range quantiles match published table values") {
    const std::vector<std::pair<int, double>> q95 = {{2, 2.772}, {3, 3.314}, {4, 3.633}, {5, 3.858}, {10, 4.474}};
    for (const auto& [k, q] : q95) CHECK(studentized_range_cdf(q, k) == Approx(0.95).margin(2e-4));
    CHECK(studentized_range_cdf(3.643, 5) == Approx(0.9255).margin(2e-3));
}

TEST_CASE("studentized range cdf matches a direct Monte Carlo range simulation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    const int k = 4, reps = 200000;
    int below = 0;
    for (int r = 0; r < reps; ++r) {
        double lo = 1e9, hi = -1e9;
        for (int i = 0; i < k; ++i) {
            const double z = n01(rng);
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
        below += hi - lo <= 3.0;
    }
    CHECK(studentized_range_cdf(3.0, k) == Approx(below / double(reps)).margin(4e-3));
}

TEST_CASE("contrast properties: count, antisymmetry, p ordering") {
    Eigen::Matrix3d v = Eigen::Matrix3d::Identity() * 0.04;
    v(0, 1) = v(1, 0) = 0.01;
    const auto fit = synthetic_fit({0.5, -0.2, 0.1}, v);
    const auto cs = pairwise_contrasts(fit, Adjustment::tukey);
    CHECK(cs.size() == 6);
    for (const auto& c : cs) {
        CHECK(c.p_adjusted >= c.p_raw);
        CHECK(c.p_raw >= 0.0);
        CHECK(c.p_adjusted <= 1.0);
    }
    // Swapping the reference flips signs of the contrasts involving it but keeps p-values.
    auto swapped = fit;
    std::swap(swapped.params.systems[0], swapped.params.systems[1]);
    const auto cs2 = pairwise_contrasts(swapped, Adjustment::tukey);
    CHECK(cs2[0].estimate == Approx(-cs[0].estimate));
    CHECK(cs2[0].p_adjusted == Approx(cs[0].p_adjusted));
}

TEST_CASE("non-converged fits and singular covariances are rejected") {
    auto fit = synthetic_fit({0.5}, Eigen::MatrixXd::Identity(1, 1));
    fit.converged = false;
    CHECK_THROWS_AS(pairwise_contrasts(fit, Adjustment::tukey), Error);
    CHECK_NOTHROW(pairwise_contrasts(fit, Adjustment::tukey, true));
    fit.converged = true;
    fit.vcov_fixed.setConstant(std::nan(""));
    try {
        pairwise_contrasts(fit, Adjustment::tukey);
        FAIL("expected SingularVcov");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SingularVcov);
    }
}

TEST_CASE("significance groups bracket indistinguishable systems") {
    // Effects 2.0, 1.9, 0.0 with tight variance: the two top systems tie.
    Eigen::Matrix2d v = Eigen::Matrix2d::Identity() * 0.01;
    const auto fit = synthetic_fit({2.0, 1.9}, v);
    const auto cs = pairwise_contrasts(fit, Adjustment::tukey);
    const auto groups = significance_groups(fit, cs);
    REQUIRE(groups.size() == 3);
    CHECK(groups[0].system == "s1");
    CHECK(groups[0].letters == "a");
    CHECK(groups[1].letters == "a");
    CHECK(groups[2].system == "s0");
    CHECK(groups[2].letters == "b");
}
