// evalpower command-line tool.
//
// Every subcommand reads CSV/JSON, writes CSV/JSON to --out (stdout when
// omitted) and, for file outputs, a sidecar <out>.manifest.json recording
// the command, resolved options, seed, tool version and input digests.
// Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.

#include "evalpower/evalpower.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef EVALPOWER_VERSION
#define EVALPOWER_VERSION "0.0.0"
#endif

namespace ep = evalpower;
using nlohmann::json;

namespace {

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ep::Error(ep::Errc::FileNotFound, "cannot open '" + path + "'");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ep::Error(ep::Errc::FileNotFound, "cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ep::Error(ep::Errc::SchemaViolation, "'" + path + "' is not valid JSON: " + e.what());
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ep::Error(ep::Errc::SchemaViolation, "'" + item + "' is not an integer");
        }
    }
    return out;
}

// Shared state of one invocation.
struct Run {
    CLI::App* command = nullptr;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string out;
    std::vector<std::string> inputs;

    void resolve_seed(const CLI::Option* opt) {
        if (opt->count() > 0) return;
        seed = std::random_device{}();
        seed = (seed << 32) ^ std::random_device{}();
        std::cerr << "seed: " << seed << '\n';
    }

    json options() const {
        json j = json::object();
        for (const auto* opt : command->get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
            const auto& name = opt->get_lnames().front();
            if (opt->count() > 0) {
                const auto& r = opt->results();
                j[name] = r.size() == 1 ? json(r.front()) : json(r);
            } else if (!opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            } else if (opt->get_type_size() == 0) {
                j[name] = false;
            }
        }
        j["seed"] = std::to_string(seed);
        j["threads"] = ep::resolve_threads(threads);
        return j;
    }

    void write_manifest(const std::string& path) const {
        json m;
        m["command"] = command->get_name();
        m["config"] = options();
        m["seed"] = seed;
        m["tool_version"] = EVALPOWER_VERSION;
        m["timestamp"] = utc_timestamp();
        json digests = json::array();
        for (const auto& in : inputs) digests.push_back({{"path", in}, {"sha256", sha256_file(in)}});
        m["inputs"] = digests;
        std::ofstream f(path + ".manifest.json");
        if (!f) throw ep::Error(ep::Errc::FileNotFound, "cannot write '" + path + ".manifest.json'");
        f << m.dump(2) << '\n';
    }

    template <typename Writer>
    void emit(const std::string& path, Writer&& write) const {
        if (path.empty() || path == "-") {
            write(std::cout);
            return;
        }
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ep::Error(ep::Errc::FileNotFound, "cannot write '" + path + "'");
        write(f);
        f.close();
        write_manifest(path);
    }

    void emit_json(const json& j) const {
        emit(out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }
};

struct Common {
    Run run;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
    c.seed_opt = sub->add_option("--seed", c.run.seed, "Root random seed; generated and printed when absent");
    sub->add_option("--threads", c.run.threads, "Worker threads (0: EVALPOWER_THREADS or all cores)")->capture_default_str();
    sub->add_option("--out", c.run.out, "Output file (stdout when omitted)");
}

struct DataArgs {
    std::string input;
    int levels = 7;
    std::string kind = "score";
    std::string reference;
};

void add_data(CLI::App* sub, DataArgs& d) {
    sub->add_option("--input", d.input, "Judgement CSV (annotator_id,document_id,system_id,value)")->required();
    sub->add_option("--levels", d.levels, "Number of scale levels")->capture_default_str();
    sub->add_option("--kind", d.kind, "Judgement kind: score or rank")->capture_default_str();
    sub->add_option("--reference", d.reference, "Reference system (default: first system)");
}

ep::Dataset load_data(const DataArgs& d, Run& run) {
    run.inputs.push_back(d.input);
    return ep::ingest_judgements(d.input, d.levels, ep::parse_judgement_kind(d.kind), d.reference);
}

ep::StudyDesign load_design(const std::string& path, const ep::Dataset& ds, Run& run) {
    if (path.empty()) return ep::infer_design(ds);
    run.inputs.push_back(path);
    auto d = ep::design_from_json(read_json(path), ds.systems());
    d.validate();
    return d;
}

json means_json(const ep::SystemScoreTable& t) {
    json j = json::object();
    for (std::size_t s = 0; s < t.systems.size(); ++s) j[t.systems[s]] = {{"mean", t.means[s]}, {"count", t.counts[s]}};
    return j;
}

// ---------------------------------------------------------------------------
// Simulation options
// ---------------------------------------------------------------------------

struct SimArgs {
    std::string model, config;
    int docs = 100, reps = 3, block_size = 5, max_iter = 500;
    std::string annotators;
    std::size_t trials = 2000, art_permutations = 999;
    double alpha = 0.05;
    std::string analyses, pair, pair_rule = "fixed_pair", structure = "maximal";
    std::string nested_doc_effects = "generation_and_fit";
    std::string budgets, budget_blocks;
    bool null_mode = false;
    std::map<std::string, CLI::Option*> opts;
};

void add_sim(CLI::App* sub, SimArgs& s, const std::string& default_annotators, const std::string& default_analyses,
             bool power, bool compare) {
    auto& o = s.opts;
    s.annotators = default_annotators;
    s.analyses = default_analyses;
    o["model"] = sub->add_option("--model", s.model, "Model parameter JSON (thresholds, beta, covariances)");
    o["config"] = sub->add_option("--config", s.config, "Simulation config JSON; explicit flags override it");
    o["docs"] = sub->add_option("--docs", s.docs, "Documents per simulated study")->capture_default_str();
    o["reps"] = sub->add_option("--reps", s.reps, "Judgements per summary (annotators per block)")->capture_default_str();
    if (!compare)
        o["annotators"] = sub->add_option("--annotators", s.annotators, "Total annotator counts, comma separated")
                              ->capture_default_str();
    o["trials"] = sub->add_option("--trials", s.trials, "Monte Carlo trials per configuration")->capture_default_str();
    o["alpha"] = sub->add_option("--alpha", s.alpha, "Significance level")->capture_default_str();
    o["analyses"] = sub->add_option("--analyses", s.analyses,
                                    "Comma list of ttest_raw, ttest_docavg, art_raw, art_docavg, artagg, clmm_contrasts")
                        ->capture_default_str();
    o["pair"] = sub->add_option("--pair", s.pair, "Tested pair A,B (default: largest effect difference)");
    o["pair-rule"] = sub->add_option("--pair-rule", s.pair_rule, "fixed_pair or any_pair")->capture_default_str();
    o["structure"] = sub->add_option("--structure", s.structure, "CLMM random effects: maximal, diagonal, intercepts_only, none")
                         ->capture_default_str();
    o["max-iter"] = sub->add_option("--max-iter", s.max_iter, "CLMM optimizer iteration limit")->capture_default_str();
    o["art-permutations"] =
        sub->add_option("--art-permutations", s.art_permutations, "Permutations per ART")->capture_default_str();
    if (power) o["null-mode"] = sub->add_flag("--null-mode", s.null_mode, "Set all system effects to zero");
    if (compare) {
        o["block-size"] = sub->add_option("--block-size", s.block_size, "Documents per block")->capture_default_str();
        o["budgets"] = sub->add_option("--budgets", s.budgets, "Judgement budgets, comma separated");
        o["budget-blocks"] = sub->add_option("--budget-blocks", s.budget_blocks,
                                             "Budgets as numbers of crossed blocks (default 1,2,3,4,6,10,20)");
        o["nested-doc-effects"] =
            sub->add_option("--nested-doc-effects", s.nested_doc_effects,
                            "Nested arm: generation_and_fit omits document effects from data and model; fit_only only from the model")
                ->capture_default_str();
    }
}

ep::SimulationConfig sim_config(const SimArgs& s, Run& run) {
    ep::SimulationConfig cfg;
    cfg.analyses.clear();
    for (const auto& a : split_list(s.analyses)) cfg.analyses.push_back(ep::parse_analysis(a));
    if (!s.config.empty()) {
        run.inputs.push_back(s.config);
        cfg = ep::simulation_config_from_json(read_json(s.config), cfg);
    }
    auto given = [&](const char* name) {
        auto it = s.opts.find(name);
        return it != s.opts.end() && it->second->count() > 0;
    };
    auto use = [&](const char* name) { return given(name) || s.config.empty(); };
    if (!s.model.empty()) {
        run.inputs.push_back(s.model);
        cfg.params = ep::params_from_json(read_json(s.model));
    } else if (s.config.empty()) {
        throw ep::Error(ep::Errc::ConfigInfeasible, "either --model or --config is required");
    }
    if (use("docs")) cfg.n_documents = s.docs;
    if (use("reps")) cfg.judgements_per_summary = s.reps;
    if (use("annotators")) cfg.total_annotators = parse_int_list(s.annotators);
    if (use("trials")) cfg.trials = s.trials;
    if (use("alpha")) cfg.alpha = s.alpha;
    if (given("analyses")) {
        cfg.analyses.clear();
        for (const auto& a : split_list(s.analyses)) cfg.analyses.push_back(ep::parse_analysis(a));
    }
    if (given("pair")) {
        const auto p = split_list(s.pair);
        if (p.size() != 2) throw ep::Error(ep::Errc::ConfigInfeasible, "--pair needs exactly two systems");
        cfg.pair = std::make_pair(p[0], p[1]);
    }
    if (use("pair-rule")) cfg.pair_rule = ep::parse_pair_rule(s.pair_rule);
    if (use("structure")) cfg.clmm_structure = ep::parse_random_structure(s.structure);
    if (use("max-iter")) cfg.clmm_max_iter = s.max_iter;
    if (use("art-permutations")) cfg.art_permutations = s.art_permutations;
    if (given("null-mode")) cfg.null_mode = s.null_mode;
    if (use("block-size")) cfg.block_size = s.block_size;
    if (use("nested-doc-effects")) cfg.nested_doc_effects = ep::parse_nested_doc_effects(s.nested_doc_effects);
    cfg.threads = run.threads;
    return cfg;
}

void emit_report(const ep::SimulationReport& rep, Run& run) {
    run.emit(run.out, [&](std::ostream& os) { ep::write_report_csv(rep, os); });
}

// ---------------------------------------------------------------------------

int dispatch(int argc, char** argv) {
    CLI::App app{"Statistical analysis and power simulation for human evaluation studies"};
    app.set_version_flag("--version", EVALPOWER_VERSION);
    app.require_subcommand(1);

    auto sub = [&](const std::string& name, const std::string& desc) { return app.add_subcommand(name, desc); };

    // ingest
    Common ingest_c;
    DataArgs ingest_d;
    auto* ingest = sub("ingest", "Validate a judgement CSV and summarize it");
    add_data(ingest, ingest_d);
    add_common(ingest, ingest_c);
    ingest->callback([&] {
        auto& run = ingest_c.run;
        run.command = ingest;
        run.resolve_seed(ingest_c.seed_opt);
        const auto ds = load_data(ingest_d, run);
        json j = {{"records", ds.size()},
                  {"annotators", ds.annotators().size()},
                  {"documents", ds.documents().size()},
                  {"systems", ds.systems()},
                  {"reference", ds.reference_system()},
                  {"kind", ep::to_string(ds.kind())},
                  {"levels", ds.n_levels()}};
        if (!ds.empty()) {
            j["system_means"] = means_json(ep::system_means(ds));
            try {
                j["design"] = ep::to_json(ep::infer_design(ds));
            } catch (const ep::Error& e) {
                j["design"] = nullptr;
                j["design_error"] = e.what();
            }
        }
        run.emit_json(j);
    });

    // fit
    Common fit_c;
    DataArgs fit_d;
    std::string fit_structure = "maximal";
    bool fit_no_doc = false, fit_allow = false;
    ep::ClmmFitOptions fit_opt;
    auto* fit = sub("fit", "Fit the cumulative link mixed model");
    add_data(fit, fit_d);
    fit->add_option("--structure", fit_structure, "Random effects: maximal, diagonal, intercepts_only, none")->capture_default_str();
    fit->add_flag("--no-doc-effects", fit_no_doc, "Omit document random effects");
    fit->add_option("--tolerance", fit_opt.tolerance, "Relative log-likelihood change for convergence")->capture_default_str();
    fit->add_option("--gradient-tolerance", fit_opt.gradient_tolerance, "Gradient max-norm for convergence")
        ->capture_default_str();
    fit->add_option("--max-iter", fit_opt.max_iter, "Optimizer iteration limit")->capture_default_str();
    fit->add_flag("--allow-nonconverged", fit_allow, "Write the fit even when the optimizer did not converge");
    add_common(fit, fit_c);
    fit->callback([&] {
        auto& run = fit_c.run;
        run.command = fit;
        run.resolve_seed(fit_c.seed_opt);
        const auto ds = load_data(fit_d, run);
        fit_opt.structure = ep::parse_random_structure(fit_structure);
        fit_opt.include_doc_effects = !fit_no_doc;
        const auto f = ep::clmm_fit(ds, fit_opt);
        for (const auto& w : f.warnings) std::cerr << "warning: " << w << '\n';
        if (!f.converged && !fit_allow)
            throw ep::Error(ep::Errc::NotConverged, "gradient norm " + std::to_string(f.gradient_norm) + " after " +
                                                       std::to_string(f.n_iterations) +
                                                       " iterations; use --allow-nonconverged or a simpler --structure");
        run.emit_json(ep::to_json(f));
    });

    // contrasts
    Common con_c;
    std::string con_model, con_adjust = "tukey", con_groups;
    double con_alpha = 0.05;
    bool con_allow = false;
    auto* con = sub("contrasts", "Pairwise system contrasts from a fitted model");
    con->add_option("--model", con_model, "Fit JSON written by 'fit'")->required();
    con->add_option("--adjust", con_adjust, "Multiplicity adjustment: tukey or none")->capture_default_str();
    con->add_option("--alpha", con_alpha, "Level for significance groups")->capture_default_str();
    con->add_option("--groups-out", con_groups, "Also write significance groups (CSV)");
    con->add_flag("--allow-nonconverged", con_allow, "Accept a fit that did not converge");
    add_common(con, con_c);
    con->callback([&] {
        auto& run = con_c.run;
        run.command = con;
        run.resolve_seed(con_c.seed_opt);
        run.inputs.push_back(con_model);
        const auto f = ep::fit_from_json(read_json(con_model));
        const auto cs = ep::pairwise_contrasts(f, ep::parse_adjustment(con_adjust), con_allow);
        run.emit(run.out, [&](std::ostream& os) {
            os << "system_a,system_b,estimate,std_error,z_value,p_raw,p_adjusted\n";
            for (const auto& c : cs)
                os << c.system_a << ',' << c.system_b << ',' << ep::detail::format_double(c.estimate) << ','
                   << ep::detail::format_double(c.std_error) << ',' << ep::detail::format_double(c.z_value) << ','
                   << ep::detail::format_double(c.p_raw) << ',' << ep::detail::format_double(c.p_adjusted) << '\n';
        });
        if (!con_groups.empty()) {
            const auto groups = ep::significance_groups(f, cs, con_alpha);
            run.emit(con_groups, [&](std::ostream& os) {
                os << "system,effect,group\n";
                for (const auto& g : groups) os << g.system << ',' << ep::detail::format_double(g.effect) << ',' << g.letters << '\n';
            });
        }
    });

    // test
    Common test_c;
    DataArgs test_d;
    std::string test_a, test_b, test_method = "ttest", test_unit = "document", test_scheme = "paired", test_design;
    ep::ArtOptions test_art;
    auto* test = sub("test", "Compare two systems with a t-test, ART or ARTagg");
    add_data(test, test_d);
    test->add_option("--a", test_a, "First system")->required();
    test->add_option("--b", test_b, "Second system")->required();
    test->add_option("--method", test_method, "ttest, art or artagg")->capture_default_str();
    test->add_option("--unit", test_unit, "Units for ttest/art: raw (per judgement) or document (per-document means)")
        ->capture_default_str();
    test->add_option("--permutations", test_art.permutations, "ART permutations")->capture_default_str();
    test->add_option("--scheme", test_scheme, "ART permutation scheme: paired or unpaired")->capture_default_str();
    test->add_flag("--exhaustive", test_art.exhaustive, "Enumerate all permutations when feasible");
    test->add_option("--design", test_design, "Design JSON for artagg (default: inferred from the data)");
    add_common(test, test_c);
    test->callback([&] {
        auto& run = test_c.run;
        run.command = test;
        run.resolve_seed(test_c.seed_opt);
        const auto ds = load_data(test_d, run);
        test_art.seed = run.seed;
        test_art.scheme = ep::parse_permutation_scheme(test_scheme);
        const auto method = ep::parse_test_method(test_method);
        ep::TestResult r;
        if (method == ep::TestMethod::artagg) {
            r = ep::artagg_test(ds, load_design(test_design, ds, run), test_a, test_b, test_art);
        } else {
            std::vector<double> x, y;
            if (test_unit == "raw") {
                std::tie(x, y) = ep::paired_judgements(ds, test_a, test_b);
            } else if (test_unit == "document") {
                const auto t = ep::aggregate(ds, ep::AggregateUnit::per_document);
                x = t.column(ds.system_position(test_a));
                y = t.column(ds.system_position(test_b));
            } else {
                throw ep::Error(ep::Errc::SchemaViolation, "unknown unit '" + test_unit + "'");
            }
            r = method == ep::TestMethod::ttest ? ep::paired_t_test(x, y) : ep::art_test(x, y, test_art);
        }
        run.emit_json({{"system_a", test_a},
                       {"system_b", test_b},
                       {"method", ep::to_string(r.method)},
                       {"statistic", r.statistic},
                       {"p_value", r.p_value},
                       {"n_units", r.n_units},
                       {"exhaustive", r.exhaustive}});
    });

    // reliability
    Common rel_c;
    DataArgs rel_d;
    std::string rel_metric = "ordinal";
    auto* rel = sub("reliability", "Krippendorff's alpha over summaries");
    add_data(rel, rel_d);
    rel->add_option("--metric", rel_metric, "ordinal or interval")->capture_default_str();
    add_common(rel, rel_c);
    rel->callback([&] {
        auto& run = rel_c.run;
        run.command = rel;
        run.resolve_seed(rel_c.seed_opt);
        const auto ds = load_data(rel_d, run);
        const auto metric = ep::parse_alpha_metric(rel_metric);
        run.emit_json({{"metric", ep::to_string(metric)}, {"alpha", ep::krippendorff_alpha(ds, metric)}, {"records", ds.size()}});
    });

    // shr
    Common shr_c;
    DataArgs shr_d;
    std::size_t shr_trials = 1000;
    std::string shr_design;
    bool shr_all = false;
    auto* shr = sub("shr", "Split-half reliability of system rankings");
    add_data(shr, shr_d);
    shr->add_option("--trials", shr_trials, "Random splits")->capture_default_str();
    shr->add_option("--design", shr_design, "Design JSON (default: inferred from the data)");
    shr->add_flag("--correlations", shr_all, "Include every trial's correlation");
    add_common(shr, shr_c);
    shr->callback([&] {
        auto& run = shr_c.run;
        run.command = shr;
        run.resolve_seed(shr_c.seed_opt);
        const auto ds = load_data(shr_d, run);
        const auto res = ep::split_half_reliability(ds, load_design(shr_design, ds, run), shr_trials, run.seed,
                                                    ep::resolve_threads(run.threads));
        json j = {{"mean", res.mean}, {"stddev", res.stddev}, {"trials", res.trials}};
        if (shr_all) j["correlations"] = res.correlations;
        run.emit_json(j);
    });

    // cost-curve
    Common cost_c;
    DataArgs cost_d;
    ep::CostCurveOptions cost_opt;
    std::string cost_durations, cost_design, cost_samples;
    auto* cost = sub("cost-curve", "Correlation with the full study against annotation minutes");
    add_data(cost, cost_d);
    cost->add_option("--durations", cost_durations, "CSV annotator_id,duration_minutes (default: duration column of --input)");
    cost->add_option("--design", cost_design, "Design JSON (default: inferred from the data)");
    cost->add_option("--samples-per-size", cost_opt.samples_per_size, "Subsamples per block count")->capture_default_str();
    cost->add_option("--min-blocks", cost_opt.min_blocks, "Smallest subsample in blocks")->capture_default_str();
    cost->add_option("--max-blocks", cost_opt.max_blocks, "Largest subsample in blocks (0: all but one)")->capture_default_str();
    cost->add_option("--bucket-width", cost_opt.bucket_width, "Bucket width in minutes")->capture_default_str();
    cost->add_option("--samples-out", cost_samples, "Also write every subsample (CSV)");
    add_common(cost, cost_c);
    cost->callback([&] {
        auto& run = cost_c.run;
        run.command = cost;
        run.resolve_seed(cost_c.seed_opt);
        const auto ds = load_data(cost_d, run);
        auto durations = ds.durations();
        if (!cost_durations.empty()) {
            run.inputs.push_back(cost_durations);
            durations = ep::read_durations_csv(cost_durations);
        }
        cost_opt.seed = run.seed;
        const auto curve = ep::cost_efficiency_curve(ds, load_design(cost_design, ds, run), durations, cost_opt);
        using ep::detail::format_double;
        run.emit(run.out, [&](std::ostream& os) {
            os << "minutes_low,minutes_high,n,mean,ci_low,ci_high\n";
            for (const auto& b : curve.buckets)
                os << format_double(b.minutes_low) << ',' << format_double(b.minutes_high) << ',' << b.n << ','
                   << format_double(b.mean) << ',' << format_double(b.ci_low) << ',' << format_double(b.ci_high) << '\n';
        });
        if (!cost_samples.empty())
            run.emit(cost_samples, [&](std::ostream& os) {
                os << "n_blocks,minutes,correlation\n";
                for (const auto& s : curve.samples)
                    os << s.n_blocks << ',' << format_double(s.minutes) << ',' << format_double(s.correlation) << '\n';
            });
    });

    // design
    auto* design = sub("design", "Generate block designs or draw budget-matched subdesigns");
    design->require_subcommand(1);
    Common gen_c;
    int gen_blocks = 20, gen_docs = 5, gen_ann = 3;
    std::string gen_systems;
    auto* gen = design->add_subcommand("generate", "Generate a block design");
    gen->add_option("--blocks", gen_blocks, "Number of blocks")->capture_default_str();
    gen->add_option("--docs-per-block", gen_docs, "Documents per block")->capture_default_str();
    gen->add_option("--annotators-per-block", gen_ann, "Annotators per block")->capture_default_str();
    gen->add_option("--systems", gen_systems, "Comma-separated system ids")->required();
    add_common(gen, gen_c);
    gen->callback([&] {
        auto& run = gen_c.run;
        run.command = gen;
        run.resolve_seed(gen_c.seed_opt);
        run.emit_json(ep::to_json(ep::generate_block_design(gen_blocks, gen_docs, gen_ann, split_list(gen_systems), run.seed)));
    });
    Common subs_c;
    DataArgs subs_d;
    std::string subs_kind = "nested", subs_design, subs_design_out;
    std::size_t subs_budget = 0, subs_block = 5;
    auto* subs = design->add_subcommand("subsample", "Draw a budget-matched nested or crossed subdesign from real data");
    add_data(subs, subs_d);
    subs->add_option("--design", subs_design, "Source design JSON (default: inferred from the data)");
    subs->add_option("--design-kind", subs_kind, "nested or crossed")->capture_default_str();
    subs->add_option("--budget", subs_budget, "Number of judgements to keep")->required();
    subs->add_option("--block-size", subs_block, "Documents per block")->capture_default_str();
    subs->add_option("--design-out", subs_design_out, "Also write the subdesign (JSON)");
    add_common(subs, subs_c);
    subs->callback([&] {
        auto& run = subs_c.run;
        run.command = subs;
        run.resolve_seed(subs_c.seed_opt);
        const auto ds = load_data(subs_d, run);
        const auto s = ep::sample_subdesign(ds, load_design(subs_design, ds, run), ep::parse_design_kind(subs_kind),
                                            subs_budget, subs_block, run.seed);
        run.emit(run.out, [&](std::ostream& os) { ep::write_judgements_csv(s.data, os); });
        if (!subs_design_out.empty())
            run.emit(subs_design_out, [&](std::ostream& os) { os << ep::to_json(s.design).dump(2) << '\n'; });
    });

    // simulations
    Common t1_c;
    SimArgs t1_s;
    auto* t1 = sub("simulate-type1", "Type-I error rates over total annotator counts (all effects zero)");
    add_sim(t1, t1_s, "3,15,30,60,150,300", "ttest_raw,ttest_docavg", false, false);
    add_common(t1, t1_c);
    t1->callback([&] {
        auto& run = t1_c.run;
        run.command = t1;
        run.resolve_seed(t1_c.seed_opt);
        emit_report(ep::simulate_type1(sim_config(t1_s, run), run.seed), run);
    });

    Common pw_c;
    SimArgs pw_s;
    auto* pw = sub("simulate-power", "Power over total annotator counts at the model's effects");
    add_sim(pw, pw_s, "3,6,12,15,30,60,75", "clmm_contrasts,artagg", true, false);
    add_common(pw, pw_c);
    pw->callback([&] {
        auto& run = pw_c.run;
        run.command = pw;
        run.resolve_seed(pw_c.seed_opt);
        emit_report(ep::simulate_power(sim_config(pw_s, run), run.seed), run);
    });

    Common cd_c;
    SimArgs cd_s;
    auto* cd = sub("compare-designs", "Power of nested versus crossed designs at equal judgement budgets");
    add_sim(cd, cd_s, "", "clmm_contrasts,artagg", true, true);
    add_common(cd, cd_c);
    cd->callback([&] {
        auto& run = cd_c.run;
        run.command = cd;
        run.resolve_seed(cd_c.seed_opt);
        const auto cfg = sim_config(cd_s, run);
        std::vector<std::size_t> budgets;
        if (!cd_s.budgets.empty()) {
            for (int b : parse_int_list(cd_s.budgets)) {
                if (b <= 0) throw ep::Error(ep::Errc::ConfigInfeasible, "budgets must be positive");
                budgets.push_back(static_cast<std::size_t>(b));
            }
        } else {
            const std::size_t unit = static_cast<std::size_t>(cfg.block_size) * cfg.params.systems.size() *
                                     static_cast<std::size_t>(cfg.judgements_per_summary);
            for (int b : parse_int_list(cd_s.budget_blocks.empty() ? "1,2,3,4,6,10,20" : cd_s.budget_blocks)) {
                if (b <= 0) throw ep::Error(ep::Errc::ConfigInfeasible, "budget blocks must be positive");
                budgets.push_back(static_cast<std::size_t>(b) * unit);
            }
        }
        emit_report(ep::compare_designs_power(cfg, budgets, run.seed), run);
    });

    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
        std::cerr << "UnknownFlag: unknown subcommand '" << argv[1] << "'\n";
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ExtrasError& e) {
        std::cerr << "UnknownFlag: " << e.what() << '\n';
        return 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << "UsageError: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ep::Error& e) {
        std::cerr << e.what() << '\n';
        return ep::is_numerical(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "Error: " << e.what() << '\n';
        return 1;
    }
}
