#pragma once

// Small builders shared by the unit tests.

#include "evalpower/evalpower.hpp"
#include "oracles/clmm_oracles.hpp"

#include <optional>
#include <string>
#include <vector>

namespace testsupport {

// Code of the evalpower::Error thrown by fn, if any.
template <typename Fn>
std::optional<evalpower::Errc> error_code(Fn&& fn) {
    try {
        fn();
    } catch (const evalpower::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline std::vector<std::string> system_names(int S) {
    std::vector<std::string> out;
    for (int s = 0; s < S; ++s) out.push_back("s" + std::to_string(s));
    return out;
}

inline evalpower::Dataset dataset_from_rows(const std::vector<oracle::Row>& rows, int levels, int S) {
    std::vector<evalpower::JudgementRecord> recs;
    for (const auto& r : rows)
        recs.push_back({"a" + std::to_string(r.annot), "d" + std::to_string(r.doc), "s" + std::to_string(r.system), r.y,
                        evalpower::JudgementKind::score});
    return evalpower::Dataset(recs, levels, evalpower::JudgementKind::score, system_names(S), "s0");
}

inline std::vector<oracle::Row> rows_from_dataset(const evalpower::Dataset& ds) {
    std::vector<oracle::Row> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
        rows.push_back({static_cast<int>(ds.annotator_index(i)), static_cast<int>(ds.document_index(i)),
                        static_cast<int>(ds.system_position(ds.records()[i].system_id)), ds.records()[i].value});
    return rows;
}

inline evalpower::ClmmParams make_params(int levels, int S, const std::vector<double>& beta, double var_annot,
                                         double var_doc, double slope_var = 0.0) {
    evalpower::ClmmParams p;
    p.levels = levels;
    p.systems = system_names(S);
    p.reference = "s0";
    p.thresholds.resize(levels - 1);
    for (int c = 0; c < levels - 1; ++c) p.thresholds(c) = -2.0 + 4.0 * (c + 0.5) / (levels - 1);
    p.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    p.sigma_annot = Eigen::MatrixXd::Zero(S, S);
    p.sigma_doc = Eigen::MatrixXd::Zero(S, S);
    p.sigma_annot(0, 0) = var_annot;
    p.sigma_doc(0, 0) = var_doc;
    for (int s = 1; s < S; ++s) {
        p.sigma_annot(s, s) = slope_var;
        p.sigma_doc(s, s) = slope_var;
    }
    return p;
}

} // namespace testsupport
