#pragma once

// Cumulative logit link: log-probability of one observed category and its
// derivatives with respect to the linear predictor eta and to the two
// thresholds bracketing the category.
//
//   p = F(mu_y - eta) - F(mu_{y-1} - eta),  mu_0 = -inf, mu_C = +inf

#include "evalpower/numeric.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace evalpower::clmm {

struct LinkTerms {
    double logp = 0.0;
    double d1 = 0.0, d2 = 0.0, d3 = 0.0;  // d^k logp / d eta^k
    // Partials w.r.t. the upper (mu_y) and lower (mu_{y-1}) thresholds of
    // logp, d1 and d2. Zero when that threshold is infinite.
    double up_l = 0.0, up_d1 = 0.0, up_d2 = 0.0;
    double lo_l = 0.0, lo_d1 = 0.0, lo_d2 = 0.0;
};

namespace detail {

struct LogisticPoint {
    double F = 0.0, Fc = 0.0, f = 0.0, f1 = 0.0, f2 = 0.0;  // Fc = 1 - F
};

inline LogisticPoint logistic_point(double x) noexcept {
    LogisticPoint p;
    p.F = num::logistic(x);
    p.Fc = num::logistic(-x);
    p.f = p.F * p.Fc;
    p.f1 = p.f * (p.Fc - p.F);
    p.f2 = p.f * (1.0 - 6.0 * p.F * p.Fc);
    return p;
}

} // namespace detail

// y is the 0-based category; mu holds the C-1 thresholds.
inline LinkTerms link_terms(int y, double eta, const Eigen::VectorXd& mu, bool with_mu_partials) {
    const int C = static_cast<int>(mu.size()) + 1;
    const bool has_up = y < C - 1, has_lo = y > 0;
    detail::LogisticPoint up, lo;
    if (has_up) up = detail::logistic_point(mu(y) - eta);
    else up.F = 1.0;
    if (has_lo) lo = detail::logistic_point(mu(y - 1) - eta);
    else lo.Fc = 1.0;

    // Difference of CDFs taken on the side that avoids cancellation.
    const double p = (has_lo && mu(y - 1) - eta > 0.0) ? lo.Fc - up.Fc : up.F - lo.F;

    LinkTerms t;
    t.logp = std::log(p);
    const double p1 = -(up.f - lo.f);
    const double p2 = up.f1 - lo.f1;
    const double p3 = -(up.f2 - lo.f2);
    const double r1 = p1 / p, r2 = p2 / p, r3 = p3 / p;
    t.d1 = r1;
    t.d2 = r2 - r1 * r1;
    t.d3 = r3 - 3.0 * r2 * r1 + 2.0 * r1 * r1 * r1;
    if (!with_mu_partials) return t;

    auto partials = [&](double dp, double dp1, double dp2, double& l, double& l1, double& l2) {
        l = dp / p;
        l1 = dp1 / p - r1 * l;
        l2 = dp2 / p - r2 * l - 2.0 * r1 * l1;
    };
    if (has_up) partials(up.f, -up.f1, up.f2, t.up_l, t.up_d1, t.up_d2);
    if (has_lo) partials(-lo.f, lo.f1, -lo.f2, t.lo_l, t.lo_d1, t.lo_d2);
    return t;
}

// P(Y = c) for c = 0..C-1 at linear predictor eta.
inline Eigen::VectorXd category_probabilities(const Eigen::VectorXd& mu, double eta) {
    const int C = static_cast<int>(mu.size()) + 1;
    Eigen::VectorXd p(C);
    double prev = 0.0;
    for (int c = 0; c < C - 1; ++c) {
        const double cum = num::logistic(mu(c) - eta);
        p(c) = cum - prev;
        prev = cum;
    }
    p(C - 1) = 1.0 - prev;
    return p;
}

} // namespace evalpower::clmm
