#pragma once

// Pairwise Wald contrasts between systems of a fitted CLMM, with Tukey
// adjustment via the studentized range distribution at infinite df.

#include "evalpower/clmm/params.hpp"
#include "evalpower/error.hpp"
#include "evalpower/numeric.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace evalpower {

enum class Adjustment { tukey, none };

inline std::string to_string(Adjustment a) { return a == Adjustment::tukey ? "tukey" : "none"; }

inline Adjustment parse_adjustment(const std::string& s) {
    if (s == "tukey") return Adjustment::tukey;
    if (s == "none") return Adjustment::none;
    throw Error(Errc::SchemaViolation, "unknown adjustment '" + s + "'");
}

struct ContrastResult {
    std::string system_a, system_b;
    double estimate = 0.0;  // beta_a - beta_b, logit scale
    double std_error = 0.0;
    double z_value = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
};

// P(range of k iid standard normals <= q):
//   k * integral phi(z) [Phi(z) - Phi(z - q)]^(k-1) dz
inline double studentized_range_cdf(double q, int k) {
    if (k < 2) throw Error(Errc::DimensionMismatch, "studentized range needs k >= 2");
    if (!(q > 0.0)) return 0.0;
    if (std::isinf(q)) return 1.0;
    auto integrand = [&](double z) {
        const double inner = num::normal_cdf(z) - num::normal_cdf(z - q);
        return num::normal_pdf(z) * std::pow(std::max(inner, 0.0), k - 1);
    };
    double err = 0.0;
    const double v = k * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -9.0, 9.0 + q, 12,
                                                                                       1e-12, &err);
    return std::clamp(v, 0.0, 1.0);
}

inline double tukey_p(double z, int k) { return 1.0 - studentized_range_cdf(std::fabs(z) * std::sqrt(2.0), k); }

// All S(S-1)/2 contrasts in system order: (s_i, s_j) for i < j.
inline std::vector<ContrastResult> pairwise_contrasts(const ClmmFit& fit, Adjustment adjust, bool allow_nonconverged = false) {
    if (!fit.converged && !allow_nonconverged)
        throw Error(Errc::NotConverged, "the fit did not converge; rerun with a simpler random structure or override");
    const auto& p = fit.params;
    const int S = p.n_systems();
    const Eigen::VectorXd beta = p.full_beta();
    std::vector<ContrastResult> out;
    for (int i = 0; i < S; ++i)
        for (int j = i + 1; j < S; ++j) {
            ContrastResult c;
            c.system_a = p.systems[i];
            c.system_b = p.systems[j];
            c.estimate = beta(i) - beta(j);
            const double var = fit.beta_cov(i, i) + fit.beta_cov(j, j) - 2.0 * fit.beta_cov(i, j);
            if (!std::isfinite(var) || var <= 0.0)
                throw Error(Errc::SingularVcov, "variance of " + c.system_a + " - " + c.system_b + " is not positive");
            c.std_error = std::sqrt(var);
            c.z_value = c.estimate / c.std_error;
            c.p_raw = num::normal_two_sided_p(c.z_value);
            c.p_adjusted = adjust == Adjustment::tukey ? std::clamp(tukey_p(c.z_value, S), c.p_raw, 1.0) : c.p_raw;
            out.push_back(c);
        }
    return out;
}

// Compact letter display: systems sorted by effect (best first); systems
// sharing a letter are not significantly different at `alpha`.
struct SignificanceGroup {
    std::string system;
    double effect = 0.0;
    std::string letters;
};

inline std::vector<SignificanceGroup> significance_groups(const ClmmFit& fit, const std::vector<ContrastResult>& contrasts,
                                                          double alpha = 0.05) {
    const auto& p = fit.params;
    const int S = p.n_systems();
    const Eigen::VectorXd beta = p.full_beta();
    std::vector<int> order(S);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return beta(a) > beta(b); });

    std::vector<std::vector<bool>> differ(S, std::vector<bool>(S, false));
    auto pos = [&](const std::string& s) { return static_cast<int>(std::find(p.systems.begin(), p.systems.end(), s) - p.systems.begin()); };
    for (const auto& c : contrasts) {
        const int a = pos(c.system_a), b = pos(c.system_b);
        differ[a][b] = differ[b][a] = c.p_adjusted < alpha;
    }
    // Maximal runs of consecutive (sorted) systems that are pairwise
    // indistinguishable.
    std::vector<std::pair<int, int>> runs;
    for (int i = 0; i < S; ++i) {
        int j = i;
        while (j + 1 < S) {
            bool ok = true;
            for (int k = i; k <= j && ok; ++k) ok = !differ[order[k]][order[j + 1]];
            if (!ok) break;
            ++j;
        }
        if (runs.empty() || j > runs.back().second) runs.emplace_back(i, j);
    }
    std::vector<SignificanceGroup> out(S);
    for (int r = 0; r < S; ++r) {
        out[r].system = p.systems[order[r]];
        out[r].effect = beta(order[r]);
    }
    for (std::size_t g = 0; g < runs.size(); ++g)
        for (int r = runs[g].first; r <= runs[g].second; ++r) out[r].letters += static_cast<char>('a' + g % 26);
    return out;
}

} // namespace evalpower
