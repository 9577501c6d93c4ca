#pragma once

// Synthetic judgements drawn from CLMM parameters over a block design.

#include "evalpower/clmm/params.hpp"
#include "evalpower/data_model.hpp"
#include "evalpower/design_types.hpp"
#include "evalpower/error.hpp"
#include "evalpower/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace evalpower {

// Random effects are drawn once per annotator and per document (documents
// only when params.include_doc_effects); every judgement then gets an
// independent logistic error. Record order is block, annotator, document,
// system.
inline Dataset clmm_sample(const ClmmParams& params, const StudyDesign& design, std::uint64_t seed) {
    params.validate();
    design.validate();
    const int S = params.n_systems();
    const int ref = params.reference_position();
    for (const auto& blk : design.blocks)
        for (const auto& s : blk.systems)
            if (std::find(params.systems.begin(), params.systems.end(), s) == params.systems.end())
                throw Error(Errc::DimensionMismatch, "design system '" + s + "' has no parameters");

    // Design row of system s: [1, dummies for non-reference systems].
    auto design_row = [&](int s) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(S);
        z(0) = 1.0;
        if (s != ref) z(s < ref ? s + 1 : s) = 1.0;
        return z;
    };
    std::vector<Eigen::VectorXd> Z;
    for (int s = 0; s < S; ++s) Z.push_back(design_row(s));
    const Eigen::VectorXd beta = params.full_beta();
    const Eigen::MatrixXd L_annot = psd_factor(params.sigma_annot);
    const Eigen::MatrixXd L_doc = psd_factor(params.sigma_doc);

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](const Eigen::MatrixXd& L) {
        Eigen::VectorXd e(S);
        for (int k = 0; k < S; ++k) e(k) = normal(rng);
        return (L * e).eval();
    };
    std::unordered_map<std::string, Eigen::VectorXd> u_annot, u_doc;
    for (const auto& blk : design.blocks) {
        for (const auto& a : blk.annotator_ids) u_annot.emplace(a, draw(L_annot));
        for (const auto& d : blk.document_ids)
            u_doc.emplace(d, params.include_doc_effects ? draw(L_doc) : Eigen::VectorXd::Zero(S).eval());
    }

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<JudgementRecord> records;
    records.reserve(design.total_judgements());
    for (const auto& blk : design.blocks) {
        const auto& systems = blk.systems.empty() ? params.systems : blk.systems;
        std::vector<int> pos;
        for (const auto& s : systems) pos.push_back(static_cast<int>(std::find(params.systems.begin(), params.systems.end(), s) - params.systems.begin()));
        for (const auto& a : blk.annotator_ids)
            for (const auto& d : blk.document_ids) {
                const Eigen::VectorXd u = u_annot.at(a) + u_doc.at(d);
                for (std::size_t k = 0; k < systems.size(); ++k) {
                    const int s = pos[k];
                    const double eta = beta(s) + Z[s].dot(u);
                    double v = unif(rng);
                    while (v <= 0.0) v = unif(rng);
                    const double latent = eta + std::log(v / (1.0 - v));
                    int y = 1;
                    while (y < params.levels && latent > params.thresholds(y - 1)) ++y;
                    records.push_back({a, d, systems[k], y, JudgementKind::score});
                }
            }
    }
    return Dataset(std::move(records), params.levels, JudgementKind::score, params.systems, params.reference);
}

} // namespace evalpower
