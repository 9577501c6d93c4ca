#pragma once

// Annotation reliability: Krippendorff's alpha over summaries, split-half
// reliability of system rankings, and cost-efficiency curves.

#include "evalpower/data_model.hpp"
#include "evalpower/design_types.hpp"
#include "evalpower/error.hpp"
#include "evalpower/numeric.hpp"
#include "evalpower/parallel.hpp"
#include "evalpower/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace evalpower {

enum class AlphaMetric { ordinal, interval };

inline std::string to_string(AlphaMetric m) { return m == AlphaMetric::ordinal ? "ordinal" : "interval"; }

inline AlphaMetric parse_alpha_metric(const std::string& s) {
    if (s == "ordinal") return AlphaMetric::ordinal;
    if (s == "interval") return AlphaMetric::interval;
    throw Error(Errc::SchemaViolation, "unknown alpha metric '" + s + "'");
}

// Units are summaries (document, system); their values are the judgements
// from all annotators. Units with a single value are not pairable.
inline double krippendorff_alpha(const Dataset& ds, AlphaMetric metric = AlphaMetric::ordinal) {
    std::map<int, int> level_of;  // observed value -> dense index
    for (const auto& r : ds.records()) level_of.emplace(r.value, 0);
    std::vector<int> values;
    for (auto& [v, idx] : level_of) {
        idx = static_cast<int>(values.size());
        values.push_back(v);
    }
    const std::size_t K = values.size(), S = ds.systems().size();

    std::map<std::size_t, std::vector<int>> unit_counts;  // document * S + system
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& c = unit_counts[ds.document_index(i) * S + ds.system_index(i)];
        if (c.empty()) c.assign(K, 0);
        ++c[level_of.at(ds.records()[i].value)];
    }

    std::vector<double> o(K * K, 0.0);
    bool pairable = false;
    for (const auto& [unit, c] : unit_counts) {
        const int m = std::accumulate(c.begin(), c.end(), 0);
        if (m < 2) continue;
        pairable = true;
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < K; ++b)
                o[a * K + b] += static_cast<double>(c[a]) * (c[b] - (a == b ? 1 : 0)) / (m - 1);
    }
    if (!pairable) throw Error(Errc::NoPairableValues, "no summary has two or more judgements");

    std::vector<double> n(K, 0.0);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b) n[a] += o[a * K + b];
    const double total = std::accumulate(n.begin(), n.end(), 0.0);

    auto delta2 = [&](std::size_t a, std::size_t b) {
        if (metric == AlphaMetric::interval) {
            const double d = values[a] - values[b];
            return d * d;
        }
        const std::size_t lo = std::min(a, b), hi = std::max(a, b);
        double s = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) s += n[g];
        s -= 0.5 * (n[lo] + n[hi]);
        return s * s;
    };
    double observed = 0.0, expected = 0.0;
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b) {
            if (a == b) continue;
            const double d = delta2(a, b);
            observed += o[a * K + b] * d;
            expected += n[a] * n[b] * d;
        }
    if (observed == 0.0) return 1.0;
    return 1.0 - (total - 1.0) * observed / expected;
}

struct ShrResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t trials = 0;
    std::vector<double> correlations;  // one per trial
};

namespace detail {

// Per-block (sum, count) of every system's judgements.
struct BlockSums {
    std::size_t n_blocks = 0, n_systems = 0;
    std::vector<double> sum;
    std::vector<double> count;
};

inline BlockSums block_sums(const Dataset& ds, const StudyDesign& design) {
    const auto table = aggregate(ds, AggregateUnit::per_block, &design);
    BlockSums out;
    out.n_blocks = table.units.size();
    out.n_systems = table.systems.size();
    out.sum.resize(table.means.size());
    out.count.resize(table.means.size());
    for (std::size_t c = 0; c < table.means.size(); ++c) {
        out.count[c] = static_cast<double>(table.counts[c]);
        out.sum[c] = table.means[c] * out.count[c];
    }
    return out;
}

inline std::vector<double> pooled_means(const BlockSums& bs, const std::vector<std::size_t>& blocks) {
    std::vector<double> s(bs.n_systems, 0.0), c(bs.n_systems, 0.0);
    for (auto b : blocks)
        for (std::size_t k = 0; k < bs.n_systems; ++k) {
            s[k] += bs.sum[b * bs.n_systems + k];
            c[k] += bs.count[b * bs.n_systems + k];
        }
    for (std::size_t k = 0; k < bs.n_systems; ++k) s[k] /= c[k];
    return s;
}

inline bool all_equal(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

} // namespace detail

// Each trial shuffles the blocks and splits them into two equal halves (an
// odd block out is dropped), then correlates the per-half system means.
inline ShrResult split_half_reliability(const Dataset& ds, const StudyDesign& design, std::size_t trials = 1000,
                                        std::uint64_t seed = 0, unsigned threads = 1) {
    design.validate();
    if (design.blocks.size() < 2)
        throw Error(Errc::TooFewBlocks, "split-half reliability needs at least two blocks");
    if (trials < 1) throw Error(Errc::InvalidCount, "trials must be >= 1");
    const auto bs = detail::block_sums(ds, design);
    const std::size_t half = bs.n_blocks / 2;

    ShrResult out;
    out.trials = trials;
    out.correlations.assign(trials, 0.0);
    parallel_for(trials, threads, [&](std::size_t t) {
        std::vector<std::size_t> order(bs.n_blocks);
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = make_rng(seed, {t});
        std::shuffle(order.begin(), order.end(), rng);
        const std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
        const std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(half),
                                              order.begin() + static_cast<std::ptrdiff_t>(2 * half));
        const auto a = detail::pooled_means(bs, first), b = detail::pooled_means(bs, second);
        if (detail::all_equal(a) || detail::all_equal(b))
            throw Error(Errc::ZeroVariance, "trial " + std::to_string(t) + ": a half has identical system means");
        out.correlations[t] = num::pearson(a, b);
    });
    out.mean = num::mean(out.correlations);
    out.stddev = trials > 1 ? num::sample_sd(out.correlations) : 0.0;
    return out;
}

struct CostSample {
    std::size_t n_blocks = 0;
    double minutes = 0.0;
    double correlation = 0.0;  // NaN when the subsample's system means are all equal
};

struct CostBucket {
    double minutes_low = 0.0, minutes_high = 0.0;
    std::size_t n = 0;
    double mean = 0.0, ci_low = 0.0, ci_high = 0.0;
};

struct CostCurve {
    std::vector<CostSample> samples;
    std::vector<CostBucket> buckets;
};

struct CostCurveOptions {
    std::size_t samples_per_size = 100;
    std::size_t min_blocks = 2;
    std::size_t max_blocks = 0;  // 0: all blocks but one
    double bucket_width = 10.0;  // minutes
    std::uint64_t seed = 0;
};

// Subsamples of whole blocks, scored by the Pearson correlation of their
// system means with the full study's, against total annotator minutes.
inline CostCurve cost_efficiency_curve(const Dataset& ds, const StudyDesign& design,
                                       const std::map<std::string, double>& durations, const CostCurveOptions& opt = {}) {
    design.validate();
    const std::size_t nb = design.blocks.size();
    const std::size_t max_blocks = opt.max_blocks == 0 ? (nb > 2 ? nb - 1 : nb) : std::min(opt.max_blocks, nb);
    if (nb < 2 || opt.min_blocks > max_blocks)
        throw Error(Errc::TooFewBlocks, "cost curve needs at least " + std::to_string(std::max<std::size_t>(opt.min_blocks, 2)) +
                                            " blocks");
    std::vector<double> block_minutes(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b)
        for (const auto& a : design.blocks[b].annotator_ids) {
            auto it = durations.find(a);
            if (it == durations.end()) throw Error(Errc::MissingDuration, "no duration for annotator '" + a + "'");
            block_minutes[b] += it->second;
        }
    const auto bs = detail::block_sums(ds, design);
    std::vector<std::size_t> all(nb);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto full = detail::pooled_means(bs, all);

    CostCurve curve;
    for (std::size_t k = std::max<std::size_t>(opt.min_blocks, 1); k <= max_blocks; ++k)
        for (std::size_t s = 0; s < opt.samples_per_size; ++s) {
            auto rng = make_rng(opt.seed, {k, s});
            auto order = all;
            std::shuffle(order.begin(), order.end(), rng);
            order.resize(k);
            CostSample cs;
            cs.n_blocks = k;
            for (auto b : order) cs.minutes += block_minutes[b];
            cs.correlation = num::pearson(detail::pooled_means(bs, order), full);
            curve.samples.push_back(cs);
        }

    std::map<long long, std::vector<double>> by_bucket;
    for (const auto& cs : curve.samples)
        if (std::isfinite(cs.correlation))
            by_bucket[static_cast<long long>(std::floor(cs.minutes / opt.bucket_width))].push_back(cs.correlation);
    for (const auto& [idx, vals] : by_bucket) {
        CostBucket b;
        b.minutes_low = static_cast<double>(idx) * opt.bucket_width;
        b.minutes_high = b.minutes_low + opt.bucket_width;
        b.n = vals.size();
        b.mean = num::mean(vals);
        const double half = vals.size() > 1 ? 1.96 * num::sample_sd(vals) / std::sqrt(static_cast<double>(vals.size())) : 0.0;
        b.ci_low = b.mean - half;
        b.ci_high = b.mean + half;
        curve.buckets.push_back(b);
    }
    return curve;
}

} // namespace evalpower
