#pragma once

// Maximum-likelihood fitting of the CLMM.
//
// Free parameters (all unconstrained):
//   thresholds  mu_1 = tau_1, mu_{c+1} = mu_c + exp(tau_{c+1})
//   beta        as is
//   covariances log-Cholesky factors per grouping factor; diagonal entries
//               of L are exp(theta), off-diagonals free
// The objective is the Laplace log-likelihood, maximized by BFGS with the
// analytic gradient.

#include "evalpower/clmm/laplace.hpp"
#include "evalpower/clmm/params.hpp"
#include "evalpower/data_model.hpp"
#include "evalpower/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace evalpower {

namespace clmm {

// Maps the free parameter vector onto (mu, beta, L_annot, L_doc).
struct ParamLayout {
    int levels = 0;
    int n_systems = 0;
    RandomStructure structure = RandomStructure::maximal;
    bool with_doc = true;

    int q() const { return structure == RandomStructure::maximal || structure == RandomStructure::diagonal ? n_systems : 1; }
    bool has_random() const { return structure != RandomStructure::none; }
    int n_thresholds() const { return levels - 1; }
    int n_beta() const { return n_systems - 1; }
    int n_cov_per_factor() const {
        switch (structure) {
        case RandomStructure::maximal: return q() * (q() + 1) / 2;
        case RandomStructure::diagonal: return q();
        case RandomStructure::intercepts_only: return 1;
        case RandomStructure::none: return 0;
        }
        return 0;
    }
    int n_factors() const { return has_random() ? (with_doc ? 2 : 1) : 0; }
    int size() const { return n_thresholds() + n_beta() + n_factors() * n_cov_per_factor(); }
    bool engine_doc() const { return has_random() && with_doc; }

    Eigen::VectorXd thresholds(const Eigen::VectorXd& theta) const {
        Eigen::VectorXd mu(n_thresholds());
        for (int c = 0; c < n_thresholds(); ++c) mu(c) = c == 0 ? theta(0) : mu(c - 1) + std::exp(theta(c));
        return mu;
    }

    Eigen::VectorXd beta(const Eigen::VectorXd& theta) const { return theta.segment(n_thresholds(), n_beta()); }

    Eigen::MatrixXd factor(const Eigen::VectorXd& theta, int which) const {
        const int qq = q();
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(qq, qq);
        if (which >= n_factors()) return L;
        int k = n_thresholds() + n_beta() + which * n_cov_per_factor();
        if (structure == RandomStructure::maximal) {
            for (int c = 0; c < qq; ++c)
                for (int r = c; r < qq; ++r, ++k) L(r, c) = r == c ? std::exp(theta(k)) : theta(k);
        } else {
            for (int c = 0; c < qq; ++c, ++k) L(c, c) = std::exp(theta(k));
        }
        return L;
    }

    // Chain rule from natural-coordinate gradients to theta.
    Eigen::VectorXd chain(const Eigen::VectorXd& theta, const LaplaceEngine::Evaluation& ev) const {
        Eigen::VectorXd g(size());
        // d mu_c / d tau_1 = 1; d mu_c / d tau_k = exp(tau_k) for c >= k.
        double tail = 0.0;
        for (int c = n_thresholds() - 1; c >= 0; --c) {
            tail += ev.grad_mu(c);
            g(c) = c == 0 ? tail : tail * std::exp(theta(c));
        }
        g.segment(n_thresholds(), n_beta()) = ev.grad_beta;
        for (int f = 0; f < n_factors(); ++f) {
            const Eigen::MatrixXd& G = f == 0 ? ev.grad_annot : ev.grad_doc;
            const Eigen::MatrixXd L = factor(theta, f);
            int k = n_thresholds() + n_beta() + f * n_cov_per_factor();
            const int qq = q();
            if (structure == RandomStructure::maximal) {
                for (int c = 0; c < qq; ++c)
                    for (int r = c; r < qq; ++r, ++k) g(k) = r == c ? G(r, c) * L(r, c) : G(r, c);
            } else {
                for (int c = 0; c < qq; ++c, ++k) g(k) = G(c, c) * L(c, c);
            }
        }
        return g;
    }

    // Full S x S covariance implied by a factor.
    Eigen::MatrixXd covariance(const Eigen::MatrixXd& L) const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_systems, n_systems);
        if (!has_random()) return out;
        out.topLeftCorner(q(), q()) = L * L.transpose();
        return out;
    }
};

// Laplace log-likelihood and gradient over the free parameters of a layout.
class Objective {
public:
    Objective(const Dataset& ds, const std::vector<std::string>& systems, const std::string& reference, int levels,
              RandomStructure structure, bool with_doc)
        : data_(compile(ds, systems, reference, levels)) {
        layout_.levels = levels;
        layout_.n_systems = static_cast<int>(systems.size());
        layout_.structure = structure;
        layout_.with_doc = with_doc && structure != RandomStructure::none;
        engine_ = std::make_unique<LaplaceEngine>(data_, layout_.q(), layout_.engine_doc());
    }

    const ParamLayout& layout() const { return layout_; }
    const CompiledData& data() const { return data_; }

    LaplaceEngine::Evaluation natural(const Eigen::VectorXd& mu, const Eigen::VectorXd& beta, const Eigen::MatrixXd& L_annot,
                                      const Eigen::MatrixXd& L_doc, bool with_gradient) {
        return engine_->evaluate(mu, beta, L_annot, L_doc, with_gradient);
    }

    double value(const Eigen::VectorXd& theta) {
        return engine_->evaluate(layout_.thresholds(theta), layout_.beta(theta), layout_.factor(theta, 0),
                                 layout_.factor(theta, 1), false)
            .loglik;
    }

    double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        auto ev = engine_->evaluate(layout_.thresholds(theta), layout_.beta(theta), layout_.factor(theta, 0),
                                    layout_.factor(theta, 1), true);
        grad = layout_.chain(theta, ev);
        return ev.loglik;
    }

private:
    CompiledData data_;
    ParamLayout layout_;
    std::unique_ptr<LaplaceEngine> engine_;
};

} // namespace clmm

// Laplace-approximated marginal log-likelihood at fixed parameters.
// With all covariances zero this is the plain cumulative-logit likelihood.
inline double clmm_loglik(const ClmmParams& params, const Dataset& ds) {
    params.validate();
    const auto data = clmm::compile(ds, params.systems, params.reference, params.levels);
    clmm::LaplaceEngine engine(data, params.n_systems(), params.include_doc_effects);
    const auto L_doc = params.include_doc_effects ? psd_factor(params.sigma_doc)
                                                  : Eigen::MatrixXd::Zero(params.n_systems(), params.n_systems()).eval();
    return engine.evaluate(params.thresholds, params.beta, psd_factor(params.sigma_annot), L_doc, false).loglik;
}

struct ClmmFitOptions {
    RandomStructure structure = RandomStructure::maximal;
    bool include_doc_effects = true;
    double tolerance = 1e-8;           // relative log-likelihood change
    double gradient_tolerance = 1e-5;  // infinity norm
    int max_iter = 500;
    bool compute_vcov = true;
};

namespace clmm {

inline Eigen::VectorXd starting_values(const ParamLayout& layout, const Dataset& ds) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.size());
    const int C = layout.levels;
    std::vector<double> counts(C, 0.5);
    for (const auto& r : ds.records()) counts[r.value - 1] += 1.0;
    double total = 0.0;
    for (double c : counts) total += c;
    double cum = 0.0, prev_mu = 0.0;
    for (int c = 0; c < C - 1; ++c) {
        cum += counts[c];
        const double p = cum / total;
        const double mu = std::log(p / (1.0 - p));
        theta(c) = c == 0 ? mu : std::log(mu - prev_mu);
        prev_mu = mu;
    }
    const int q = layout.q();
    const double log_sd = 0.5 * std::log(0.5);
    for (int f = 0; f < layout.n_factors(); ++f) {
        int k = layout.n_thresholds() + layout.n_beta() + f * layout.n_cov_per_factor();
        if (layout.structure == RandomStructure::maximal) {
            for (int c = 0; c < q; ++c)
                for (int r = c; r < q; ++r, ++k) theta(k) = r == c ? log_sd : 0.0;
        } else {
            for (int c = 0; c < q; ++c, ++k) theta(k) = log_sd;
        }
    }
    return theta;
}

struct BfgsResult {
    Eigen::VectorXd theta;
    double loglik = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Maximizes the objective. Evaluations that fail numerically count as -inf.
inline BfgsResult maximize(Objective& obj, Eigen::VectorXd theta, double ftol, double gtol, int max_iter) {
    constexpr double kMaxStep = 2.0;
    const int n = static_cast<int>(theta.size());
    auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        try {
            const double v = obj.value_and_gradient(x, g);
            if (!std::isfinite(v) || !g.allFinite()) return -std::numeric_limits<double>::infinity();
            return v;
        } catch (const Error& e) {
            if (e.code() != Errc::NonFiniteLikelihood) throw;
            return -std::numeric_limits<double>::infinity();
        }
    };

    BfgsResult res;
    Eigen::VectorXd g(n), g_new(n), x_new(n);
    double f = eval(theta, g);
    if (!std::isfinite(f)) throw Error(Errc::NonFiniteLikelihood, "log-likelihood not finite at starting values");
    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);  // inverse Hessian of -loglik
    double last_rel = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < max_iter; ++it) {
        const double gnorm = g.cwiseAbs().maxCoeff();
        if (gnorm < gtol && last_rel < ftol) {
            res.converged = true;
            break;
        }
        // Ascent direction for loglik.
        Eigen::VectorXd d = Hinv * g;
        if (g.dot(d) <= 0.0) {
            Hinv.setIdentity();
            d = g;
        }
        const double dmax = d.cwiseAbs().maxCoeff();
        double alpha = dmax > kMaxStep ? kMaxStep / dmax : 1.0;
        const double slope = g.dot(d);
        double f_new = -std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int half = 0; half < 60; ++half, alpha *= 0.5) {
            x_new = theta + alpha * d;
            f_new = eval(x_new, g_new);
            if (!std::isfinite(f_new)) continue;
            // Near the optimum the expected gain drops below the round-off of
            // the log-likelihood; there the slope along d must shrink instead.
            const bool armijo = f_new >= f + 1e-4 * alpha * slope;
            const bool within_noise = f_new >= f - 1e-11 * std::max(1.0, std::fabs(f)) &&
                                      std::fabs(g_new.dot(d)) <= 0.9 * slope;
            if (armijo || within_noise) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.converged = gnorm < gtol;
            break;
        }
        const Eigen::VectorXd s = x_new - theta;
        const Eigen::VectorXd y = g - g_new;  // gradient change of -loglik
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (it == 0) Hinv *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Eigen::VectorXd Hy = Hinv * y;
            Hinv += rho * rho * (sy + y.dot(Hy)) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
        }
        last_rel = std::fabs(f_new - f) / std::max(1.0, std::fabs(f_new));
        theta = x_new;
        f = f_new;
        g = g_new;
    }
    if (it >= max_iter) res.converged = g.cwiseAbs().maxCoeff() < gtol && last_rel < ftol;
    res.theta = theta;
    res.loglik = f;
    res.gradient_norm = g.cwiseAbs().maxCoeff();
    res.iterations = it;
    return res;
}

// Systems whose scores all lie strictly above or strictly below every
// other system's scores.
inline std::vector<std::string> separated_systems(const Dataset& ds) {
    const std::size_t S = ds.systems().size();
    std::vector<int> lo(S, ds.n_levels() + 1), hi(S, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto s = ds.system_index(i);
        lo[s] = std::min(lo[s], ds.records()[i].value);
        hi[s] = std::max(hi[s], ds.records()[i].value);
    }
    std::vector<std::string> out;
    for (std::size_t s = 0; s < S; ++s) {
        int others_lo = ds.n_levels() + 1, others_hi = 0;
        for (std::size_t o = 0; o < S; ++o)
            if (o != s && hi[o] > 0) {
                others_lo = std::min(others_lo, lo[o]);
                others_hi = std::max(others_hi, hi[o]);
            }
        if (hi[s] == 0 || others_hi == 0) continue;
        if (lo[s] > others_hi || hi[s] < others_lo) out.push_back(ds.systems()[s]);
    }
    return out;
}

// Observed information of (thresholds, beta) at fixed covariances, by
// central differences of the analytic gradient; returns its inverse.
inline std::optional<Eigen::MatrixXd> fixed_effect_vcov(Objective& obj, const Eigen::VectorXd& mu,
                                                        const Eigen::VectorXd& beta, const Eigen::MatrixXd& L_annot,
                                                        const Eigen::MatrixXd& L_doc) {
    const int nm = static_cast<int>(mu.size()), nb = static_cast<int>(beta.size()), k = nm + nb;
    Eigen::MatrixXd info(k, k);
    auto grad_at = [&](int j, double delta) {
        Eigen::VectorXd m = mu, b = beta;
        if (j < nm) m(j) += delta;
        else b(j - nm) += delta;
        const auto ev = obj.natural(m, b, L_annot, L_doc, true);
        Eigen::VectorXd g(k);
        g << ev.grad_mu, ev.grad_beta;
        return g;
    };
    try {
        for (int j = 0; j < k; ++j) {
            const double h = 1e-4 * std::max(1.0, std::fabs(j < nm ? mu(j) : beta(j - nm)));
            info.col(j) = -(grad_at(j, h) - grad_at(j, -h)) / (2.0 * h);
        }
    } catch (const Error& e) {
        if (e.code() != Errc::NonFiniteLikelihood) throw;
        return std::nullopt;
    }
    info = 0.5 * (info + info.transpose()).eval();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) return std::nullopt;
    Eigen::MatrixXd vcov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    if (!vcov.allFinite()) return std::nullopt;
    return 0.5 * (vcov + vcov.transpose());
}

} // namespace clmm

// Fits the CLMM by maximum (Laplace) likelihood. Non-convergence is
// reported through `converged`, not thrown.
inline ClmmFit clmm_fit(const Dataset& ds, const ClmmFitOptions& opt = {}) {
    if (ds.kind() != JudgementKind::score) throw Error(Errc::DimensionMismatch, "the ordinal model applies to score data only");
    if (ds.empty()) throw Error(Errc::EmptyDataset, "no records");
    if (ds.systems().size() < 2) throw Error(Errc::DegenerateData, "at least two systems are required");
    const int first = ds.records().front().value;
    if (std::all_of(ds.records().begin(), ds.records().end(), [&](const auto& r) { return r.value == first; }))
        throw Error(Errc::DegenerateData, "all judgements have the same value");
    if (opt.structure != RandomStructure::none && ds.annotators().size() < 2)
        throw Error(Errc::DegenerateData, "annotator effects need at least two annotators");
    const bool with_doc = opt.include_doc_effects && opt.structure != RandomStructure::none;
    if (with_doc && ds.documents().size() < 2)
        throw Error(Errc::DegenerateData, "document effects need at least two documents");

    clmm::Objective obj(ds, ds.systems(), ds.reference_system(), ds.n_levels(), opt.structure, with_doc);
    const auto& layout = obj.layout();
    auto res = clmm::maximize(obj, clmm::starting_values(layout, ds), opt.tolerance, opt.gradient_tolerance, opt.max_iter);

    ClmmFit fit;
    fit.structure = opt.structure;
    fit.converged = res.converged;
    fit.n_iterations = res.iterations;
    fit.gradient_norm = res.gradient_norm;
    auto& p = fit.params;
    p.levels = ds.n_levels();
    p.systems = ds.systems();
    p.reference = ds.reference_system();
    p.thresholds = layout.thresholds(res.theta);
    p.beta = layout.beta(res.theta);
    const Eigen::MatrixXd L_annot = layout.factor(res.theta, 0), L_doc = layout.factor(res.theta, 1);
    p.sigma_annot = layout.covariance(L_annot);
    p.sigma_doc = with_doc ? layout.covariance(L_doc) : Eigen::MatrixXd::Zero(p.n_systems(), p.n_systems()).eval();
    p.include_doc_effects = with_doc;

    // Re-evaluate at the optimum so the reported value matches the parameters exactly.
    fit.log_likelihood = obj.natural(p.thresholds, p.beta, L_annot, L_doc, false).loglik;

    const int k = p.levels - 1 + p.n_systems() - 1;
    fit.vcov_fixed = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    if (opt.compute_vcov) {
        if (auto v = clmm::fixed_effect_vcov(obj, p.thresholds, p.beta, L_annot, L_doc)) fit.vcov_fixed = *v;
        else fit.warnings.push_back("SingularVcov: observed information of the fixed effects is not invertible");
    }
    fit.separated_systems = clmm::separated_systems(ds);
    for (const auto& s : fit.separated_systems)
        fit.warnings.push_back("SeparationDetected: scores of '" + s + "' are perfectly separated from all others");
    if (!fit.converged)
        fit.warnings.push_back("NotConverged: gradient norm " + std::to_string(fit.gradient_norm) + " after " +
                               std::to_string(fit.n_iterations) + " iterations");
    return fit;
}

inline ClmmFit clmm_fit(const Dataset& ds, RandomStructure structure, double tolerance, int max_iter) {
    ClmmFitOptions opt;
    opt.structure = structure;
    opt.tolerance = tolerance;
    opt.max_iter = max_iter;
    return clmm_fit(ds, opt);
}

} // namespace evalpower
