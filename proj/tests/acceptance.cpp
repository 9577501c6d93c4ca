// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion; run with
// criterion numbers as arguments to select a subset.

#include "support.hpp"
#include "oracles/stat_oracles.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace evalpower;

namespace {

struct Outcome {
    enum Status { pass, fail, skip } status = fail;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

ClmmParams load_model(const std::string& name) {
    std::ifstream in(std::string(EVALPOWER_DATA_DIR) + "/" + name);
    return params_from_json(nlohmann::json::parse(in));
}

// Shared by criteria 1-3: the raw and per-document t-tests over the full
// annotator sweep on the shipped null model.
const SimulationReport& null_sweep() {
    static const SimulationReport rep = [] {
        SimulationConfig cfg;
        cfg.params = load_model("likert_null_model.json");
        cfg.trials = 2000;
        cfg.analyses = {Analysis::ttest_raw, Analysis::ttest_docavg};
        return simulate_type1(cfg, 20240601);
    }();
    return rep;
}

Outcome criterion1() {
    const auto* r = null_sweep().find("crossed", 3, Analysis::ttest_raw);
    const bool ok = r && r->rate >= 0.30 && r->rate <= 0.50;
    return {ok ? Outcome::pass : Outcome::fail,
            "ttest_raw at 3 annotators: rate " + fmt("%.4f", r ? r->rate : NAN) + " over " +
                std::to_string(r ? r->valid : 0) + " trials, band [0.30, 0.50]"};
}

Outcome criterion2() {
    std::ostringstream d;
    bool ok = true;
    const auto* r = null_sweep().find("crossed", 300, Analysis::ttest_docavg);
    ok = r && std::fabs(r->rate - 0.05) <= 0.02;
    d << "ttest_docavg at 300 annotators: " << fmt("%.4f", r ? r->rate : NAN) << ";";

    SimulationConfig cfg;
    cfg.params = load_model("likert_null_model.json");
    cfg.params.sigma_annot.setZero();
    cfg.params.sigma_doc.setZero();
    cfg.trials = 2000;
    cfg.total_annotators = {60};
    cfg.analyses = all_analyses();
    cfg.clmm_structure = RandomStructure::intercepts_only;
    const auto rep = simulate_type1(cfg, 20240602);
    d << " zero covariances at 60 annotators:";
    for (auto a : all_analyses()) {
        const auto* z = rep.find("crossed", 60, a);
        const bool in = z && z->valid >= cfg.trials * 99 / 100 && std::fabs(z->rate - 0.05) <= 0.02;
        ok = ok && in;
        d << " " << to_string(a) << "=" << fmt("%.4f", z ? z->rate : NAN);
        if (z && z->valid != cfg.trials) d << "(" << z->valid << " valid)";
    }
    d << "; band 0.05 +- 0.02";
    return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

Outcome criterion3() {
    const auto& rep = null_sweep();
    std::vector<const SimulationRow*> rows;
    for (int n : {3, 15, 30, 60, 150, 300}) rows.push_back(rep.find("crossed", n, Analysis::ttest_raw));
    bool ok = true;
    std::ostringstream d;
    d << "ttest_raw rates";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        d << " " << rows[i]->total_annotators << ":" << fmt("%.4f", rows[i]->rate);
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            const double se = std::hypot(rows[i]->mc_stderr, rows[j]->mc_stderr);
            if (rows[j]->rate > rows[i]->rate + 2.0 * se) {
                ok = false;
                d << " [increase to " << rows[j]->total_annotators << "]";
            }
        }
    }
    const double ratio = rows[0]->rate / 0.05;
    ok = ok && ratio >= 6.0;
    d << "; rate(3)/0.05 = " << fmt("%.2f", ratio);
    return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

Outcome criterion4() {
    SimulationConfig cfg;
    cfg.params = load_model("likert_effect_model.json");
    cfg.trials = 200;
    cfg.block_size = 5;
    cfg.analyses = {Analysis::clmm_contrasts};
    cfg.clmm_structure = RandomStructure::maximal;
    std::vector<std::size_t> budgets;
    for (int b : {1, 2, 3, 4, 6, 10, 20}) budgets.push_back(static_cast<std::size_t>(b) * 75);
    const auto rep = compare_designs_power(cfg, budgets, 20240604);
    bool ok = true;
    std::ostringstream d;
    d << "pair " << rep.pair_a << "|" << rep.pair_b << ", clmm_contrasts nested/crossed:";
    for (auto budget : budgets) {
        const SimulationRow *nested = nullptr, *crossed = nullptr;
        for (const auto& r : rep.rows) {
            if (r.judgements != budget || r.analysis != Analysis::clmm_contrasts) continue;
            (r.arm == "nested" ? nested : crossed) = &r;
        }
        if (!nested || !crossed) {
            ok = false;
            d << " " << budget << ":missing";
            continue;
        }
        const double se = std::hypot(nested->mc_stderr, crossed->mc_stderr);
        const bool good = nested->rate >= crossed->rate - 2.0 * se;
        ok = ok && good;
        d << " " << budget << ":" << fmt("%.3f", nested->rate) << "/" << fmt("%.3f", crossed->rate) << (good ? "" : "!");
    }
    return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

double laplace_quadrature_gap() {
    double worst = 0.0;
    const std::vector<double> fb = {0.0, 0.4, -0.2, 0.8};
    for (int rep = 0; rep < 8; ++rep) {
        const auto p = testsupport::make_params(4, 4, {0.4, -0.2, 0.8}, 0.03, 0.03);
        const auto design = generate_block_design(1, 2, 2, testsupport::system_names(4), 500 + rep);
        const auto ds = clmm_sample(p, design, 600 + rep);
        const std::vector<double> mu(p.thresholds.data(), p.thresholds.data() + 3);
        const double exact =
            oracle::quadrature_crossed_intercepts(testsupport::rows_from_dataset(ds), mu, fb, 0.03, 0.03, 30);
        worst = std::max(worst, std::fabs(clmm_loglik(p, ds) - exact));
    }
    for (int rep = 0; rep < 8; ++rep) {
        auto p = testsupport::make_params(4, 2, {0.5}, 0.03, 0.0, 0.02);
        p.sigma_annot(0, 1) = p.sigma_annot(1, 0) = -0.01;
        p.include_doc_effects = false;
        const auto design = generate_block_design(1, 2, 2, testsupport::system_names(2), 700 + rep);
        const auto ds = clmm_sample(p, design, 800 + rep);
        const std::vector<double> mu(p.thresholds.data(), p.thresholds.data() + 3);
        const Eigen::Matrix2d sigma = p.sigma_annot;
        const double exact =
            oracle::quadrature_annotator_slopes(testsupport::rows_from_dataset(ds), mu, {0.0, 0.5}, sigma);
        worst = std::max(worst, std::fabs(clmm_loglik(p, ds) - exact));
    }
    return worst;
}

double plain_fit_gap() {
    double worst = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const auto truth = testsupport::make_params(5, 4, {0.6, -0.4, 0.2}, 0.0, 0.0);
        const auto design = generate_block_design(5, 6, 3, testsupport::system_names(4), 900 + rep);
        const auto ds = clmm_sample(truth, design, 950 + rep);
        ClmmFitOptions opt;
        opt.structure = RandomStructure::none;
        const auto fit = clmm_fit(ds, opt);
        const auto ref = oracle::plain_fit(testsupport::rows_from_dataset(ds), 5, 4);
        if (!fit.converged) return INFINITY;
        for (int s = 1; s < 4; ++s) worst = std::max(worst, std::fabs(fit.params.beta(s - 1) - ref.beta[s]));
    }
    return worst;
}

// Per-coefficient coverage of 95% Wald intervals for the true effects.
std::vector<double> wald_coverage(std::size_t reps, std::size_t& failed) {
    const std::vector<double> beta = {0.6, -0.4};
    const auto truth = testsupport::make_params(7, 3, beta, 0.5, 0.3, 0.1);
    std::vector<std::array<int, 2>> hit(reps, {0, 0});
    std::vector<char> ok(reps, 0);
    parallel_for(reps, resolve_threads(), [&](std::size_t r) {
        const auto design = generate_block_design(8, 5, 3, testsupport::system_names(3), derive_seed(31, {r, 0}));
        const auto ds = clmm_sample(truth, design, derive_seed(31, {r, 1}));
        try {
            const auto fit = clmm_fit(ds);
            if (!fit.converged) return;
            for (int k = 0; k < 2; ++k) {
                const double se = std::sqrt(fit.beta_cov(k + 1, k + 1));
                hit[r][k] = std::fabs(fit.params.beta(k) - beta[k]) <= 1.959963984540054 * se;
            }
            ok[r] = 1;
        } catch (const Error&) {
        }
    });
    std::vector<double> cov(2, 0.0);
    std::size_t used = 0;
    for (std::size_t r = 0; r < reps; ++r)
        if (ok[r]) {
            ++used;
            for (int k = 0; k < 2; ++k) cov[k] += hit[r][k];
        }
    failed = reps - used;
    for (auto& c : cov) c /= static_cast<double>(std::max<std::size_t>(used, 1));
    return cov;
}

double gradient_relative_error() {
    double worst = 0.0;
    const auto truth = testsupport::make_params(5, 3, {0.5, -0.3}, 0.8, 0.5, 0.2);
    const auto design = generate_block_design(3, 4, 3, testsupport::system_names(3), 21);
    const auto ds = clmm_sample(truth, design, 22);
    for (auto structure : {RandomStructure::maximal, RandomStructure::diagonal, RandomStructure::intercepts_only,
                           RandomStructure::none}) {
        clmm::Objective obj(ds, ds.systems(), ds.reference_system(), 5, structure, true);
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n01;
        Eigen::VectorXd theta = clmm::starting_values(obj.layout(), ds);
        for (int k = 0; k < theta.size(); ++k) theta(k) += 0.3 * n01(rng);
        Eigen::VectorXd g, fd(theta.size());
        obj.value_and_gradient(theta, g);
        for (int k = 0; k < theta.size(); ++k) {
            const double h = 1e-5;
            Eigen::VectorXd tp = theta, tm = theta;
            tp(k) += h;
            tm(k) -= h;
            fd(k) = (obj.value(tp) - obj.value(tm)) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / fd.norm());
    }
    return worst;
}

Outcome criterion5() {
    const double a = laplace_quadrature_gap();
    const double b = plain_fit_gap();
    std::size_t failed = 0;
    const auto cov = wald_coverage(200, failed);
    const double d = gradient_relative_error();
    const bool ok = a <= 1e-3 && b <= 1e-4 && failed == 0 &&
                    std::all_of(cov.begin(), cov.end(), [](double c) { return c >= 0.90 && c <= 0.98; }) && d <= 1e-4;
    std::ostringstream s;
    s << "(a) Laplace vs quadrature max gap " << fmt("%.2e", a) << " (b) plain-fit beta gap " << fmt("%.2e", b)
      << " (c) Wald coverage " << fmt("%.3f", cov[0]) << "/" << fmt("%.3f", cov[1]) << " over 200 replications, "
      << failed << " failed fits (d) gradient relative error " << fmt("%.2e", d);
    return {ok ? Outcome::pass : Outcome::fail, s.str()};
}

Outcome criterion6() {
    std::mt19937_64 rng(6);
    std::size_t art_bad = 0, art_cases = 0;
    ArtOptions opt;
    opt.exhaustive = true;
    std::uniform_int_distribution<int> val(-6, 6);
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t n = 1 + rep % 10;
        std::vector<double> x(n), y(n);
        std::vector<long long> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = val(rng);
            x[i] = d[i] / 4.0 + 3.0;
            y[i] = 3.0;
        }
        ++art_cases;
        if (art_test(x, y, opt).p_value != oracle::sign_flip_exact(d)) ++art_bad;
    }

    double t_gap = 0.0, p_gap = 0.0;
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rep % 40;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = n01(rng) + 0.2;
            y[i] = n01(rng);
        }
        const auto r = paired_t_test(x, y);
        const auto o = oracle::paired_t(x, y);
        t_gap = std::max(t_gap, std::fabs(r.statistic - o.t));
        p_gap = std::max(p_gap, std::fabs(r.p_value - o.p));
    }

    double alpha_gap = 0.0;
    bool perfect = true;
    std::uniform_int_distribution<int> n_units(2, 8), m(1, 4), level(1, 5);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::vector<int>> units(n_units(rng));
        for (auto& u : units) {
            u.resize(m(rng));
            for (auto& v : u) v = level(rng);
        }
        units[0] = {level(rng), level(rng)};
        if (units[0][0] == units[0][1]) units[0][1] = units[0][0] % 5 + 1;
        std::vector<JudgementRecord> recs, same;
        for (std::size_t u = 0; u < units.size(); ++u)
            for (std::size_t i = 0; i < units[u].size(); ++i) {
                recs.push_back({"a" + std::to_string(i), "d" + std::to_string(u), "S", units[u][i]});
                same.push_back({"a" + std::to_string(i), "d" + std::to_string(u), "S", units[u][0]});
            }
        const Dataset ds(recs, 5, JudgementKind::score);
        alpha_gap = std::max(alpha_gap, std::fabs(krippendorff_alpha(ds) - oracle::alpha_pairs(units, true)));
        alpha_gap = std::max(alpha_gap, std::fabs(krippendorff_alpha(ds, AlphaMetric::interval) -
                                                  oracle::alpha_pairs(units, false)));
        perfect = perfect && krippendorff_alpha(Dataset(same, 5, JudgementKind::score)) == 1.0;
    }
    const bool ok = art_bad == 0 && t_gap <= 1e-10 && p_gap <= 1e-6 && alpha_gap <= 1e-12 && perfect;
    std::ostringstream s;
    s << "exhaustive ART " << art_cases - art_bad << "/" << art_cases << " exact; t-test max |dt| " << fmt("%.1e", t_gap)
      << ", |dp| " << fmt("%.1e", p_gap) << "; alpha max gap " << fmt("%.1e", alpha_gap) << " on 50 instances"
      << (perfect ? ", 1.0 under perfect agreement" : ", perfect agreement not 1.0");
    return {ok ? Outcome::pass : Outcome::fail, s.str()};
}

// Expects coh_likert.csv, coh_rank.csv, rep_likert.csv and rep_rank.csv in
// the directory named by EVALPOWER_STUDY_DATA.
Outcome criterion7() {
    const char* dir = std::getenv("EVALPOWER_STUDY_DATA");
    if (!dir || !*dir) return {Outcome::skip, "EVALPOWER_STUDY_DATA not set; criterion 6 oracles stand in"};
    struct Arm {
        const char* file;
        JudgementKind kind;
        int levels;
        double alpha, shr;
        std::map<std::string, double> means;
    };
    const std::vector<Arm> arms = {
        {"coh_likert.csv", JudgementKind::score, 7, 0.22, 0.96,
         {{"BART", 5.25}, {"ref", 4.33}, {"ASR", 4.17}, {"PG", 4.81}, {"seneca", 3.52}}},
        {"coh_rank.csv", JudgementKind::rank, 5, 0.43, 0.98,
         {{"BART", 1.73}, {"ref", 3.31}, {"ASR", 3.17}, {"PG", 2.68}, {"seneca", 4.11}}},
        {"rep_likert.csv", JudgementKind::score, 7, 0.27, 0.95,
         {{"BART", 5.85}, {"ref", 6.14}, {"ASR", 4.88}, {"PG", 5.63}, {"seneca", 5.16}}},
        {"rep_rank.csv", JudgementKind::rank, 5, 0.18, 0.91,
         {{"BART", 2.88}, {"ref", 2.41}, {"ASR", 3.51}, {"PG", 2.92}, {"seneca", 3.27}}},
    };
    bool ok = true;
    std::ostringstream s;
    try {
        for (const auto& arm : arms) {
            const auto ds = ingest_judgements((std::filesystem::path(dir) / arm.file).string(), arm.levels, arm.kind);
            const double a = krippendorff_alpha(ds, AlphaMetric::ordinal);
            const double shr = split_half_reliability(ds, infer_design(ds), 1000, 7, resolve_threads()).mean;
            const auto means = system_means(ds);
            bool means_ok = true;
            for (const auto& [sys, v] : arm.means) means_ok = means_ok && std::fabs(means.mean_of(sys) - v) <= 0.01;
            ok = ok && std::fabs(a - arm.alpha) <= 0.01 && std::fabs(shr - arm.shr) <= 0.02 && means_ok;
            s << arm.file << ": alpha " << fmt("%.3f", a) << " SHR " << fmt("%.3f", shr)
              << (means_ok ? " means ok; " : " means off; ");
        }
    } catch (const Error& e) {
        return {Outcome::fail, std::string(e.what())};
    }
    return {ok ? Outcome::pass : Outcome::fail, s.str()};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Outcome (*)()> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                 criterion5, criterion6, criterion7};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        const int id = static_cast<int>(c) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[c]();
        } catch (const std::exception& e) {
            o = {Outcome::fail, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::skip ? "SKIP" : "FAIL";
        std::printf("%s criterion %d: %s (%.0f s)\n", tag, id, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.status == Outcome::fail;
    }
    return failures == 0 ? 0 : 1;
}
