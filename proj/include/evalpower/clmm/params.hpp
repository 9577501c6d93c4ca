#pragma once

// Parameters and fit results of the cumulative-link mixed model
//
//   logit P(Y <= c) = mu_c - (x'beta + z'u_annot + z'u_doc)
//
// x dummy-codes the system against the reference. Random effects use the
// same coding with an intercept in front, so both covariance matrices are
// S x S in the order [intercept, non-reference systems...].

#include "evalpower/error.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace evalpower {

enum class RandomStructure { maximal, diagonal, intercepts_only, none };

inline std::string to_string(RandomStructure s) {
    switch (s) {
    case RandomStructure::maximal: return "maximal";
    case RandomStructure::diagonal: return "diagonal";
    case RandomStructure::intercepts_only: return "intercepts_only";
    case RandomStructure::none: return "none";
    }
    return "maximal";
}

inline RandomStructure parse_random_structure(const std::string& s) {
    if (s == "maximal") return RandomStructure::maximal;
    if (s == "diagonal") return RandomStructure::diagonal;
    if (s == "intercepts_only") return RandomStructure::intercepts_only;
    if (s == "none") return RandomStructure::none;
    throw Error(Errc::SchemaViolation, "unknown random-effect structure '" + s + "'");
}

struct ClmmParams {
    int levels = 7;
    std::vector<std::string> systems;
    std::string reference;
    Eigen::VectorXd thresholds;   // levels - 1, strictly increasing
    Eigen::VectorXd beta;         // one per non-reference system, in `systems` order
    Eigen::MatrixXd sigma_annot;  // S x S
    Eigen::MatrixXd sigma_doc;    // S x S
    bool include_doc_effects = true;

    int n_systems() const { return static_cast<int>(systems.size()); }

    int reference_position() const {
        auto it = std::find(systems.begin(), systems.end(), reference);
        if (it == systems.end()) throw Error(Errc::DimensionMismatch, "reference '" + reference + "' not in systems");
        return static_cast<int>(it - systems.begin());
    }

    std::vector<std::string> non_reference_systems() const {
        std::vector<std::string> out;
        for (const auto& s : systems)
            if (s != reference) out.push_back(s);
        return out;
    }

    // Fixed effect of every system in `systems` order (reference = 0).
    Eigen::VectorXd full_beta() const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n_systems());
        const int ref = reference_position();
        for (int s = 0, k = 0; s < n_systems(); ++s)
            if (s != ref) out(s) = beta(k++);
        return out;
    }

    void validate() const {
        const int S = n_systems();
        if (levels < 2) throw Error(Errc::DimensionMismatch, "levels must be >= 2");
        if (S < 1) throw Error(Errc::DimensionMismatch, "no systems");
        reference_position();
        if (thresholds.size() != levels - 1)
            throw Error(Errc::DimensionMismatch, "expected " + std::to_string(levels - 1) + " thresholds");
        for (int c = 1; c < thresholds.size(); ++c)
            if (!(thresholds(c) > thresholds(c - 1)))
                throw Error(Errc::DimensionMismatch, "thresholds must be strictly increasing");
        if (beta.size() != S - 1) throw Error(Errc::DimensionMismatch, "expected " + std::to_string(S - 1) + " betas");
        for (const auto* m : {&sigma_annot, &sigma_doc}) {
            if (m->rows() != S || m->cols() != S)
                throw Error(Errc::DimensionMismatch, "covariance matrices must be " + std::to_string(S) + "x" +
                                                         std::to_string(S));
            const double scale = std::max(1.0, m->cwiseAbs().maxCoeff());
            if (((*m) - m->transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
                throw Error(Errc::DimensionMismatch, "covariance matrix is not symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*m, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-9 * scale)
                throw Error(Errc::DimensionMismatch, "covariance matrix is not positive semi-definite");
        }
    }
};

// A square factor L with L L' = sigma, for possibly singular PSD sigma.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& sigma) {
    if (sigma.size() == 0) return sigma;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sigma + sigma.transpose()));
    Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

struct ClmmFit {
    ClmmParams params;
    RandomStructure structure = RandomStructure::maximal;
    Eigen::MatrixXd vcov_fixed;  // over (thresholds, beta)
    double log_likelihood = 0.0;
    bool converged = false;
    int n_iterations = 0;
    double gradient_norm = 0.0;
    std::vector<std::string> warnings;
    std::vector<std::string> separated_systems;

    // Covariance of the fixed effects of systems i and j (positions in
    // params.systems); zero for the reference.
    double beta_cov(int i, int j) const {
        const int ref = params.reference_position();
        if (i == ref || j == ref) return 0.0;
        const int off = params.levels - 1;
        const int bi = off + (i < ref ? i : i - 1), bj = off + (j < ref ? j : j - 1);
        return vcov_fixed(bi, bj);
    }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
        std::vector<double> row(m.cols());
        for (int c = 0; c < m.cols(); ++c) row[c] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) throw Error(Errc::SchemaViolation, "ragged matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

} // namespace detail

inline nlohmann::json to_json(const ClmmParams& p) {
    return {{"levels", p.levels},
            {"systems", p.systems},
            {"reference", p.reference},
            {"thresholds", detail::to_std(p.thresholds)},
            {"beta", detail::to_std(p.beta)},
            {"sigma_annot", detail::matrix_to_json(p.sigma_annot)},
            {"sigma_doc", detail::matrix_to_json(p.sigma_doc)},
            {"include_doc_effects", p.include_doc_effects}};
}

// Reads the parameter keys; extra keys (e.g. from a fit file) are ignored.
inline ClmmParams params_from_json(const nlohmann::json& j) {
    try {
        ClmmParams p;
        p.levels = j.at("levels").get<int>();
        p.systems = j.at("systems").get<std::vector<std::string>>();
        p.reference = j.at("reference").get<std::string>();
        p.thresholds = detail::vector_from_json(j.at("thresholds"));
        p.beta = detail::vector_from_json(j.at("beta"));
        p.sigma_annot = detail::matrix_from_json(j.at("sigma_annot"));
        p.sigma_doc = detail::matrix_from_json(j.at("sigma_doc"));
        p.include_doc_effects = j.value("include_doc_effects", true);
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("model JSON: ") + e.what());
    }
}

inline nlohmann::json to_json(const ClmmFit& f) {
    auto j = to_json(f.params);
    std::vector<std::string> labels;
    for (int c = 1; c < f.params.levels; ++c) labels.push_back("threshold" + std::to_string(c) + "|" + std::to_string(c + 1));
    for (const auto& s : f.params.non_reference_systems()) labels.push_back("beta:" + s);
    j["structure"] = to_string(f.structure);
    j["vcov_labels"] = labels;
    j["vcov_fixed"] = detail::matrix_to_json(f.vcov_fixed);
    j["log_likelihood"] = f.log_likelihood;
    j["converged"] = f.converged;
    j["n_iterations"] = f.n_iterations;
    j["gradient_norm"] = f.gradient_norm;
    j["warnings"] = f.warnings;
    j["separated_systems"] = f.separated_systems;
    return j;
}

inline ClmmFit fit_from_json(const nlohmann::json& j) {
    try {
        ClmmFit f;
        f.params = params_from_json(j);
        f.structure = parse_random_structure(j.value("structure", std::string("maximal")));
        f.vcov_fixed = detail::matrix_from_json(j.at("vcov_fixed"));
        f.log_likelihood = j.value("log_likelihood", 0.0);
        f.converged = j.value("converged", false);
        f.n_iterations = j.value("n_iterations", 0);
        f.gradient_norm = j.value("gradient_norm", 0.0);
        f.warnings = j.value("warnings", std::vector<std::string>{});
        f.separated_systems = j.value("separated_systems", std::vector<std::string>{});
        const int k = f.params.levels - 1 + f.params.n_systems() - 1;
        if (f.vcov_fixed.rows() != k || f.vcov_fixed.cols() != k)
            throw Error(Errc::SchemaViolation, "vcov_fixed must be " + std::to_string(k) + "x" + std::to_string(k));
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("fit JSON: ") + e.what());
    }
}

} // namespace evalpower
