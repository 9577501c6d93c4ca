#pragma once

// Monte Carlo type-I error and power experiments: sample studies from a
// CLMM over a family of block designs, analyse each with the configured
// tests, and report rejection rates with their Monte Carlo standard errors.

#include "evalpower/classical_tests.hpp"
#include "evalpower/clmm.hpp"
#include "evalpower/data_model.hpp"
#include "evalpower/design.hpp"
#include "evalpower/error.hpp"
#include "evalpower/inference.hpp"
#include "evalpower/parallel.hpp"
#include "evalpower/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace evalpower {

enum class Analysis { ttest_raw, ttest_docavg, art_raw, art_docavg, artagg, clmm_contrasts };

inline const std::vector<Analysis>& all_analyses() {
    static const std::vector<Analysis> all = {Analysis::ttest_raw, Analysis::ttest_docavg, Analysis::art_raw,
                                              Analysis::art_docavg, Analysis::artagg,      Analysis::clmm_contrasts};
    return all;
}

inline std::string to_string(Analysis a) {
    switch (a) {
    case Analysis::ttest_raw: return "ttest_raw";
    case Analysis::ttest_docavg: return "ttest_docavg";
    case Analysis::art_raw: return "art_raw";
    case Analysis::art_docavg: return "art_docavg";
    case Analysis::artagg: return "artagg";
    case Analysis::clmm_contrasts: return "clmm_contrasts";
    }
    return "ttest_raw";
}

inline Analysis parse_analysis(const std::string& s) {
    for (auto a : all_analyses())
        if (to_string(a) == s) return a;
    throw Error(Errc::SchemaViolation, "unknown analysis '" + s + "'");
}

// fixed_pair: one pre-registered pair. any_pair: reject when any pair is
// significant after multiplicity adjustment (Tukey for the CLMM,
// Bonferroni for the classical tests).
enum class PairRule { fixed_pair, any_pair };

inline std::string to_string(PairRule r) { return r == PairRule::fixed_pair ? "fixed_pair" : "any_pair"; }

inline PairRule parse_pair_rule(const std::string& s) {
    if (s == "fixed_pair") return PairRule::fixed_pair;
    if (s == "any_pair") return PairRule::any_pair;
    throw Error(Errc::SchemaViolation, "unknown pair rule '" + s + "'");
}

// How the nested arm of a design comparison treats document effects.
enum class NestedDocEffects { omit_from_generation_and_fit, omit_from_fit };

inline std::string to_string(NestedDocEffects m) {
    return m == NestedDocEffects::omit_from_generation_and_fit ? "generation_and_fit" : "fit_only";
}

inline NestedDocEffects parse_nested_doc_effects(const std::string& s) {
    if (s == "generation_and_fit") return NestedDocEffects::omit_from_generation_and_fit;
    if (s == "fit_only") return NestedDocEffects::omit_from_fit;
    throw Error(Errc::SchemaViolation, "unknown nested document-effect mode '" + s + "'");
}

struct SimulationConfig {
    ClmmParams params;
    int n_documents = 100;
    int judgements_per_summary = 3;
    std::vector<int> total_annotators = {3, 15, 30, 60, 150, 300};
    int block_size = 5;  // documents per block in design comparisons
    std::size_t trials = 2000;
    double alpha = 0.05;
    std::vector<Analysis> analyses = {Analysis::ttest_raw, Analysis::ttest_docavg};
    bool null_mode = false;  // force beta = 0 in power and design comparisons
    PairRule pair_rule = PairRule::fixed_pair;
    std::optional<std::pair<std::string, std::string>> pair;
    std::size_t art_permutations = 999;
    RandomStructure clmm_structure = RandomStructure::maximal;
    int clmm_max_iter = 500;
    NestedDocEffects nested_doc_effects = NestedDocEffects::omit_from_generation_and_fit;
    unsigned threads = 0;  // 0: EVALPOWER_THREADS or hardware concurrency

    void validate() const {
        params.validate();
        if (trials < 1) throw Error(Errc::ConfigInfeasible, "trials must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::ConfigInfeasible, "alpha must lie in (0, 1)");
        if (n_documents < 1 || judgements_per_summary < 1 || block_size < 1)
            throw Error(Errc::ConfigInfeasible, "document, judgement and block counts must be >= 1");
        if (params.n_systems() < 2) throw Error(Errc::ConfigInfeasible, "at least two systems are required");
        if (analyses.empty()) throw Error(Errc::ConfigInfeasible, "no analyses configured");
        if (pair) {
            for (const auto& s : {pair->first, pair->second})
                if (std::find(params.systems.begin(), params.systems.end(), s) == params.systems.end())
                    throw Error(Errc::ConfigInfeasible, "pair system '" + s + "' is not in the model");
            if (pair->first == pair->second) throw Error(Errc::ConfigInfeasible, "pair systems must differ");
        }
    }
};

struct SimulationRow {
    std::string experiment;  // type1, power, compare_designs
    std::string arm;         // crossed / nested
    int total_annotators = 0;
    int n_blocks = 0;
    int docs_per_block = 0;
    std::size_t judgements = 0;
    Analysis analysis = Analysis::ttest_raw;
    std::size_t trials = 0;
    std::size_t valid = 0;       // trials where the analysis produced a p-value
    std::size_t rejections = 0;
    double rate = std::numeric_limits<double>::quiet_NaN();       // rejections / valid
    double mc_stderr = std::numeric_limits<double>::quiet_NaN();  // sqrt(rate (1 - rate) / valid)
    bool absent = false;  // analysis not applicable to this design
    std::string note;
};

struct SimulationReport {
    std::uint64_t seed = 0;
    std::string pair_a, pair_b;
    PairRule pair_rule = PairRule::fixed_pair;
    std::vector<SimulationRow> rows;

    const SimulationRow* find(const std::string& arm, int total_annotators, Analysis a) const {
        for (const auto& r : rows)
            if (r.arm == arm && r.total_annotators == total_annotators && r.analysis == a) return &r;
        return nullptr;
    }
};

namespace sim {

// Pre-registered pair: explicit, else the first two systems when all
// effects are equal, else the pair with the largest effect difference.
inline std::pair<int, int> choose_pair(const SimulationConfig& cfg, const Eigen::VectorXd& beta) {
    const auto& sys = cfg.params.systems;
    auto pos = [&](const std::string& s) { return static_cast<int>(std::find(sys.begin(), sys.end(), s) - sys.begin()); };
    if (cfg.pair) return {pos(cfg.pair->first), pos(cfg.pair->second)};
    std::pair<int, int> best = {0, 1};
    double gap = -1.0;
    for (int i = 0; i < beta.size(); ++i)
        for (int j = i + 1; j < beta.size(); ++j)
            if (std::fabs(beta(i) - beta(j)) > gap + 1e-15) {
                gap = std::fabs(beta(i) - beta(j));
                best = {i, j};
            }
    return best;
}

struct DesignPoint {
    std::string arm;
    int total_annotators = 0;
    int n_blocks = 0;
    int docs_per_block = 0;
    int annotators_per_block = 0;
    bool doc_effects_in_generation = true;
    bool doc_effects_in_fit = true;
};

struct TrialOutcome {
    // Per analysis: -1 failed/absent, 0 not rejected, 1 rejected.
    std::vector<int> result;
    std::vector<std::string> error;
};

inline std::vector<std::pair<std::vector<double>, std::vector<double>>> unit_pairs(const Dataset& ds, Analysis a,
                                                                                const StudyDesign& design,
                                                                                const std::vector<std::pair<int, int>>& pairs) {
    std::vector<std::pair<std::vector<double>, std::vector<double>>> out;
    if (a == Analysis::ttest_raw || a == Analysis::art_raw) {
        for (auto [i, j] : pairs) out.push_back(paired_judgements(ds, ds.systems()[i], ds.systems()[j]));
        return out;
    }
    const auto table = aggregate(ds, a == Analysis::artagg ? AggregateUnit::per_block : AggregateUnit::per_document,
                                 a == Analysis::artagg ? &design : nullptr);
    for (auto [i, j] : pairs) out.emplace_back(table.column(i), table.column(j));
    return out;
}

// Every judgement of one system lies strictly above every judgement of the
// other. The maximum likelihood contrast is then infinite and its Wald test
// degenerates, so the pair counts as significant.
inline bool pair_separated(const Dataset& ds, int a, int b) {
    int lo_a = ds.n_levels() + 1, hi_a = 0, lo_b = ds.n_levels() + 1, hi_b = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int s = static_cast<int>(ds.system_index(i)), v = ds.records()[i].value;
        if (s == a) {
            lo_a = std::min(lo_a, v);
            hi_a = std::max(hi_a, v);
        } else if (s == b) {
            lo_b = std::min(lo_b, v);
            hi_b = std::max(hi_b, v);
        }
    }
    return lo_a > hi_b || lo_b > hi_a;
}

inline TrialOutcome run_trial(const SimulationConfig& cfg, const ClmmParams& gen_params, const DesignPoint& dp,
                              const std::pair<int, int>& pair, std::uint64_t trial_seed) {
    const int S = gen_params.n_systems();
    const auto design = generate_block_design(dp.n_blocks, dp.docs_per_block, dp.annotators_per_block, gen_params.systems,
                                              derive_seed(trial_seed, {1}));
    ClmmParams p = gen_params;
    p.include_doc_effects = dp.doc_effects_in_generation && gen_params.include_doc_effects;
    const Dataset ds = clmm_sample(p, design, derive_seed(trial_seed, {0}));

    std::vector<std::pair<int, int>> pairs;
    if (cfg.pair_rule == PairRule::fixed_pair) pairs.push_back(pair);
    else
        for (int i = 0; i < S; ++i)
            for (int j = i + 1; j < S; ++j) pairs.emplace_back(i, j);
    const double n_pairs = static_cast<double>(pairs.size());

    TrialOutcome out;
    out.result.assign(cfg.analyses.size(), -1);
    out.error.assign(cfg.analyses.size(), "");
    for (std::size_t k = 0; k < cfg.analyses.size(); ++k) {
        const Analysis a = cfg.analyses[k];
        try {
            double p_min = 1.0;
            if (a == Analysis::clmm_contrasts) {
                bool separated = false;
                for (auto [i, j] : pairs) separated = separated || pair_separated(ds, i, j);
                if (separated) {
                    out.result[k] = 1;
                    continue;
                }
                ClmmFitOptions opt;
                opt.structure = cfg.clmm_structure;
                opt.include_doc_effects = dp.doc_effects_in_fit;
                opt.max_iter = cfg.clmm_max_iter;
                const auto fit = clmm_fit(ds, opt);
                const auto cs = pairwise_contrasts(fit, Adjustment::tukey);
                for (const auto& c : cs) {
                    const int i = ds.system_position(c.system_a), j = ds.system_position(c.system_b);
                    const bool chosen = (i == pair.first && j == pair.second) || (i == pair.second && j == pair.first);
                    if (cfg.pair_rule == PairRule::any_pair) p_min = std::min(p_min, c.p_adjusted);
                    else if (chosen) p_min = c.p_raw;
                }
            } else {
                const auto samples = unit_pairs(ds, a, design, pairs);
                for (std::size_t q = 0; q < samples.size(); ++q) {
                    const auto& [x, y] = samples[q];
                    double pv;
                    if (a == Analysis::ttest_raw || a == Analysis::ttest_docavg) {
                        pv = paired_t_test(x, y).p_value;
                    } else {
                        ArtOptions opt;
                        opt.permutations = cfg.art_permutations;
                        opt.seed = derive_seed(trial_seed, {2, static_cast<std::uint64_t>(k), q});
                        pv = art_test(x, y, opt).p_value;
                    }
                    p_min = std::min(p_min, cfg.pair_rule == PairRule::any_pair ? std::min(1.0, pv * n_pairs) : pv);
                }
            }
            out.result[k] = p_min < cfg.alpha ? 1 : 0;
        } catch (const Error& e) {
            out.error[k] = errc_name(e.code());
        }
    }
    return out;
}

inline std::vector<SimulationRow> run_point(const SimulationConfig& cfg, const ClmmParams& gen_params, const DesignPoint& dp,
                                            const std::pair<int, int>& pair, std::uint64_t root, std::uint64_t point_id,
                                            const std::string& experiment) {
    std::vector<TrialOutcome> outcomes(cfg.trials);
    parallel_for(cfg.trials, resolve_threads(cfg.threads), [&](std::size_t t) {
        outcomes[t] = run_trial(cfg, gen_params, dp, pair, derive_seed(root, {point_id, t}));
    });
    std::vector<SimulationRow> rows;
    for (std::size_t k = 0; k < cfg.analyses.size(); ++k) {
        SimulationRow row;
        row.experiment = experiment;
        row.arm = dp.arm;
        row.total_annotators = dp.total_annotators;
        row.n_blocks = dp.n_blocks;
        row.docs_per_block = dp.docs_per_block;
        row.judgements = static_cast<std::size_t>(dp.n_blocks) * dp.docs_per_block * dp.annotators_per_block *
                         static_cast<std::size_t>(gen_params.n_systems());
        row.analysis = cfg.analyses[k];
        row.trials = cfg.trials;
        if (row.analysis == Analysis::artagg && dp.n_blocks < 2) {
            row.absent = true;
            row.note = "TooFewBlocks";
            rows.push_back(row);
            continue;
        }
        std::map<std::string, std::size_t> errors;
        for (const auto& o : outcomes) {
            if (o.result[k] < 0) {
                ++errors[o.error[k]];
                continue;
            }
            ++row.valid;
            row.rejections += static_cast<std::size_t>(o.result[k]);
        }
        for (const auto& [name, n] : errors) {
            if (!row.note.empty()) row.note += ";";
            row.note += name + "=" + std::to_string(n);
        }
        if (row.valid > 0) {
            row.rate = static_cast<double>(row.rejections) / static_cast<double>(row.valid);
            row.mc_stderr = std::sqrt(row.rate * (1.0 - row.rate) / static_cast<double>(row.valid));
        }
        rows.push_back(row);
    }
    return rows;
}

// Total annotators N with r judgements per summary: N / r blocks of
// n_documents / (N / r) documents each.
inline DesignPoint annotator_point(const SimulationConfig& cfg, int total) {
    const int r = cfg.judgements_per_summary;
    if (total < r || total % r != 0)
        throw Error(Errc::ConfigInfeasible, std::to_string(total) + " annotators cannot be split into blocks of " +
                                                std::to_string(r));
    const int blocks = total / r;
    if (cfg.n_documents % blocks != 0)
        throw Error(Errc::ConfigInfeasible, std::to_string(cfg.n_documents) + " documents do not divide into " +
                                                std::to_string(blocks) + " blocks");
    DesignPoint dp;
    dp.total_annotators = total;
    dp.n_blocks = blocks;
    dp.docs_per_block = cfg.n_documents / blocks;
    dp.annotators_per_block = r;
    dp.arm = r == 1 ? "nested" : "crossed";
    dp.doc_effects_in_fit = r > 1;
    return dp;
}

inline SimulationReport sweep_annotators(const SimulationConfig& cfg, const ClmmParams& gen, std::uint64_t seed,
                                         const std::string& experiment) {
    cfg.validate();
    std::vector<DesignPoint> points;
    for (int n : cfg.total_annotators) points.push_back(annotator_point(cfg, n));
    const auto pair = choose_pair(cfg, gen.full_beta());
    SimulationReport rep;
    rep.seed = seed;
    rep.pair_a = gen.systems[pair.first];
    rep.pair_b = gen.systems[pair.second];
    rep.pair_rule = cfg.pair_rule;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto rows = run_point(cfg, gen, points[i], pair, seed, i, experiment);
        rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    }
    return rep;
}

} // namespace sim

// Rejection rates with all fixed effects set to zero.
inline SimulationReport simulate_type1(const SimulationConfig& cfg, std::uint64_t seed) {
    ClmmParams gen = cfg.params;
    gen.beta.setZero();
    return sim::sweep_annotators(cfg, gen, seed, "type1");
}

// Rejection rates at the model's fixed effects (zeroed under null_mode).
inline SimulationReport simulate_power(const SimulationConfig& cfg, std::uint64_t seed) {
    ClmmParams gen = cfg.params;
    if (cfg.null_mode) gen.beta.setZero();
    return sim::sweep_annotators(cfg, gen, seed, "power");
}

// Judgement budgets are matched between a crossed arm (budget / unit blocks
// of block_size documents, r annotators each) and a nested arm (the same
// number of judgements from annotators who each judge their own block of
// block_size documents). The nested analysis has no document effects.
inline SimulationReport compare_designs_power(const SimulationConfig& cfg, const std::vector<std::size_t>& budgets,
                                              std::uint64_t seed) {
    cfg.validate();
    const std::size_t S = static_cast<std::size_t>(cfg.params.n_systems());
    const int r = cfg.judgements_per_summary;
    if (r < 2) throw Error(Errc::ConfigInfeasible, "the crossed arm needs at least two judgements per summary");
    const std::size_t unit = static_cast<std::size_t>(cfg.block_size) * S * static_cast<std::size_t>(r);
    ClmmParams gen = cfg.params;
    if (cfg.null_mode) gen.beta.setZero();
    const auto pair = sim::choose_pair(cfg, gen.full_beta());

    std::vector<sim::DesignPoint> points;
    for (auto budget : budgets) {
        if (budget == 0 || budget % unit != 0)
            throw Error(Errc::ConfigInfeasible, "budget " + std::to_string(budget) + " is not a positive multiple of " +
                                                    std::to_string(unit) + " judgements");
        const int blocks = static_cast<int>(budget / unit);
        sim::DesignPoint crossed;
        crossed.arm = "crossed";
        crossed.n_blocks = blocks;
        crossed.docs_per_block = cfg.block_size;
        crossed.annotators_per_block = r;
        crossed.total_annotators = blocks * r;
        sim::DesignPoint nested = crossed;
        nested.arm = "nested";
        nested.n_blocks = blocks * r;
        nested.annotators_per_block = 1;
        nested.doc_effects_in_fit = false;
        nested.doc_effects_in_generation = cfg.nested_doc_effects == NestedDocEffects::omit_from_fit;
        points.push_back(crossed);
        points.push_back(nested);
    }
    SimulationReport rep;
    rep.seed = seed;
    rep.pair_a = gen.systems[pair.first];
    rep.pair_b = gen.systems[pair.second];
    rep.pair_rule = cfg.pair_rule;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto rows = sim::run_point(cfg, gen, points[i], pair, seed, i, "compare_designs");
        rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    }
    return rep;
}

inline void write_report_csv(const SimulationReport& rep, std::ostream& out) {
    out << "experiment,arm,total_annotators,n_blocks,docs_per_block,judgements,analysis,trials,valid,rejections,rate,"
           "mc_stderr,absent,pair,pair_rule,seed,note\n";
    for (const auto& r : rep.rows) {
        out << r.experiment << ',' << r.arm << ',' << r.total_annotators << ',' << r.n_blocks << ',' << r.docs_per_block
            << ',' << r.judgements << ',' << to_string(r.analysis) << ',' << r.trials << ',' << r.valid << ','
            << r.rejections << ',';
        if (r.absent || r.valid == 0) out << ",,";
        else out << detail::format_double(r.rate) << ',' << detail::format_double(r.mc_stderr) << ',';
        out << (r.absent ? "true" : "false") << ',' << rep.pair_a << '|' << rep.pair_b << ',' << to_string(rep.pair_rule)
            << ',' << rep.seed << ',' << r.note << '\n';
    }
}

// Config JSON: {"model": ClmmParams, "documents", "judgements_per_summary",
// "annotators", "block_size", "trials", "alpha", "analyses", "null_mode",
// "pair_rule", "pair", "art_permutations", "structure", "nested_doc_effects"}.
// Every key except "model" is optional.
inline SimulationConfig simulation_config_from_json(const nlohmann::json& j, SimulationConfig cfg = {}) {
    try {
        if (j.contains("model")) cfg.params = params_from_json(j.at("model"));
        cfg.n_documents = j.value("documents", cfg.n_documents);
        cfg.judgements_per_summary = j.value("judgements_per_summary", cfg.judgements_per_summary);
        cfg.total_annotators = j.value("annotators", cfg.total_annotators);
        cfg.block_size = j.value("block_size", cfg.block_size);
        cfg.trials = j.value("trials", cfg.trials);
        cfg.alpha = j.value("alpha", cfg.alpha);
        if (j.contains("analyses")) {
            cfg.analyses.clear();
            for (const auto& a : j.at("analyses")) cfg.analyses.push_back(parse_analysis(a.get<std::string>()));
        }
        cfg.null_mode = j.value("null_mode", cfg.null_mode);
        if (j.contains("pair_rule")) cfg.pair_rule = parse_pair_rule(j.at("pair_rule").get<std::string>());
        if (j.contains("pair")) {
            const auto p = j.at("pair").get<std::vector<std::string>>();
            if (p.size() != 2) throw Error(Errc::SchemaViolation, "pair must name exactly two systems");
            cfg.pair = std::make_pair(p[0], p[1]);
        }
        cfg.art_permutations = j.value("art_permutations", cfg.art_permutations);
        if (j.contains("structure")) cfg.clmm_structure = parse_random_structure(j.at("structure").get<std::string>());
        if (j.contains("nested_doc_effects"))
            cfg.nested_doc_effects = parse_nested_doc_effects(j.at("nested_doc_effects").get<std::string>());
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("simulation config: ") + e.what());
    }
}

inline nlohmann::json to_json(const SimulationConfig& cfg) {
    nlohmann::json analyses = nlohmann::json::array();
    for (auto a : cfg.analyses) analyses.push_back(to_string(a));
    nlohmann::json j = {{"model", to_json(cfg.params)},
                        {"documents", cfg.n_documents},
                        {"judgements_per_summary", cfg.judgements_per_summary},
                        {"annotators", cfg.total_annotators},
                        {"block_size", cfg.block_size},
                        {"trials", cfg.trials},
                        {"alpha", cfg.alpha},
                        {"analyses", analyses},
                        {"null_mode", cfg.null_mode},
                        {"pair_rule", to_string(cfg.pair_rule)},
                        {"art_permutations", cfg.art_permutations},
                        {"structure", to_string(cfg.clmm_structure)},
                        {"nested_doc_effects", to_string(cfg.nested_doc_effects)}};
    if (cfg.pair) j["pair"] = {cfg.pair->first, cfg.pair->second};
    return j;
}

} // namespace evalpower
