#pragma once

// Judgement datasets: CSV ingestion, validation and aggregation.

#include "evalpower/design_types.hpp"
#include "evalpower/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace evalpower {

enum class JudgementKind { score, rank };

inline std::string to_string(JudgementKind k) { return k == JudgementKind::score ? "score" : "rank"; }

inline JudgementKind parse_judgement_kind(const std::string& s) {
    if (s == "score") return JudgementKind::score;
    if (s == "rank") return JudgementKind::rank;
    throw Error(Errc::SchemaViolation, "unknown judgement kind '" + s + "'");
}

struct JudgementRecord {
    std::string annotator_id;
    std::string document_id;
    std::string system_id;
    int value = 0;
    JudgementKind kind = JudgementKind::score;
};

// Validated, immutable collection of judgements.
//
// Ranks are stored as given (1 = best). Scores lie in 1..n_levels.
class Dataset {
public:
    Dataset() = default;

    // Validates every invariant; throws evalpower::Error on violation.
    // An empty `systems` list means "order of first appearance"; an empty
    // `reference` means the first system.
    Dataset(std::vector<JudgementRecord> records, int n_levels, JudgementKind kind,
            std::vector<std::string> systems = {}, std::string reference = {},
            std::map<std::string, double> durations = {})
        : records_(std::move(records)), n_levels_(n_levels), kind_(kind), systems_(std::move(systems)),
          reference_(std::move(reference)), durations_(std::move(durations)) {
        validate_and_index();
    }

    const std::vector<JudgementRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    int n_levels() const noexcept { return n_levels_; }
    JudgementKind kind() const noexcept { return kind_; }
    const std::vector<std::string>& systems() const noexcept { return systems_; }
    const std::string& reference_system() const noexcept { return reference_; }
    const std::vector<std::string>& annotators() const noexcept { return annotators_; }
    const std::vector<std::string>& documents() const noexcept { return documents_; }
    const std::map<std::string, double>& durations() const noexcept { return durations_; }

    // Dense indices of record i.
    std::size_t annotator_index(std::size_t i) const noexcept { return ann_idx_[i]; }
    std::size_t document_index(std::size_t i) const noexcept { return doc_idx_[i]; }
    std::size_t system_index(std::size_t i) const noexcept { return sys_idx_[i]; }

    std::size_t system_position(std::string_view id) const {
        auto it = std::find(systems_.begin(), systems_.end(), id);
        if (it == systems_.end()) throw Error(Errc::SchemaViolation, "unknown system '" + std::string(id) + "'");
        return static_cast<std::size_t>(it - systems_.begin());
    }

    std::size_t reference_position() const { return system_position(reference_); }

    Dataset with_reference(std::string reference) const {
        return Dataset(records_, n_levels_, kind_, systems_, std::move(reference), durations_);
    }

    // Records satisfying `keep`, same scale, systems and reference.
    Dataset filter(const std::function<bool(const JudgementRecord&)>& keep) const {
        std::vector<JudgementRecord> out;
        for (const auto& r : records_)
            if (keep(r)) out.push_back(r);
        return Dataset(std::move(out), n_levels_, kind_, systems_, reference_, durations_);
    }

private:
    void validate_and_index() {
        if (n_levels_ < 2) throw Error(Errc::OutOfRange, "number of levels must be >= 2");
        std::vector<std::string> seen_systems;
        std::set<std::string> seen_set;
        std::set<std::tuple<std::string, std::string, std::string>> keys;
        std::unordered_map<std::string, std::size_t> ann_map, doc_map;
        for (std::size_t i = 0; i < records_.size(); ++i) {
            auto& r = records_[i];
            r.kind = kind_;
            if (r.value < 1 || r.value > n_levels_)
                throw Error(Errc::OutOfRange, "record " + std::to_string(i) + ": value " + std::to_string(r.value) +
                                                  " outside 1.." + std::to_string(n_levels_));
            if (!keys.emplace(r.annotator_id, r.document_id, r.system_id).second)
                throw Error(Errc::DuplicateKey, "record " + std::to_string(i) + ": duplicate (" + r.annotator_id +
                                                    ", " + r.document_id + ", " + r.system_id + ")");
            if (seen_set.insert(r.system_id).second) seen_systems.push_back(r.system_id);
            if (ann_map.emplace(r.annotator_id, annotators_.size()).second) annotators_.push_back(r.annotator_id);
            if (doc_map.emplace(r.document_id, documents_.size()).second) documents_.push_back(r.document_id);
        }
        if (systems_.empty()) {
            systems_ = seen_systems;
        } else {
            std::set<std::string> declared(systems_.begin(), systems_.end());
            if (declared.size() != systems_.size()) throw Error(Errc::SchemaViolation, "duplicate system in system list");
            for (const auto& s : seen_systems)
                if (!declared.count(s)) throw Error(Errc::SchemaViolation, "record system '" + s + "' not declared");
        }
        if (reference_.empty() && !systems_.empty()) reference_ = systems_.front();
        if (!reference_.empty() && std::find(systems_.begin(), systems_.end(), reference_) == systems_.end())
            throw Error(Errc::SchemaViolation, "reference system '" + reference_ + "' is not among the systems");

        std::unordered_map<std::string, std::size_t> sys_map;
        for (std::size_t s = 0; s < systems_.size(); ++s) sys_map.emplace(systems_[s], s);
        ann_idx_.resize(records_.size());
        doc_idx_.resize(records_.size());
        sys_idx_.resize(records_.size());
        for (std::size_t i = 0; i < records_.size(); ++i) {
            ann_idx_[i] = ann_map.at(records_[i].annotator_id);
            doc_idx_[i] = doc_map.at(records_[i].document_id);
            sys_idx_[i] = sys_map.at(records_[i].system_id);
        }

        if (kind_ == JudgementKind::rank) validate_rank_groups();
    }

    // Within each (annotator, document) the ranks must be exactly 1..k.
    void validate_rank_groups() const {
        std::map<std::pair<std::size_t, std::size_t>, std::vector<int>> groups;
        for (std::size_t i = 0; i < records_.size(); ++i)
            groups[{ann_idx_[i], doc_idx_[i]}].push_back(records_[i].value);
        for (auto& [key, values] : groups) {
            std::sort(values.begin(), values.end());
            for (std::size_t k = 0; k < values.size(); ++k)
                if (values[k] != static_cast<int>(k) + 1)
                    throw Error(Errc::InvalidRankGroup, "ranks of annotator '" + annotators_[key.first] +
                                                            "' on document '" + documents_[key.second] +
                                                            "' are not a permutation of 1.." +
                                                            std::to_string(values.size()));
        }
    }

    std::vector<JudgementRecord> records_;
    int n_levels_ = 7;
    JudgementKind kind_ = JudgementKind::score;
    std::vector<std::string> systems_;
    std::string reference_;
    std::map<std::string, double> durations_;
    std::vector<std::string> annotators_, documents_;
    std::vector<std::size_t> ann_idx_, doc_idx_, sys_idx_;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader = "annotator_id,document_id,system_id,value";
inline constexpr std::string_view kDurationColumn = "duration_minutes";

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

} // namespace detail

// Parses judgement CSV text. The header must be exactly
// annotator_id,document_id,system_id,value with an optional trailing
// duration_minutes column (one total per annotator, repeated on each row).
inline Dataset parse_judgements(std::istream& in, int n_levels, JudgementKind kind, std::string reference = {}) {
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::MalformedRow, "missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool with_duration = false;
    if (line == kCsvHeader) {
        with_duration = false;
    } else if (line == std::string(kCsvHeader) + "," + std::string(kDurationColumn)) {
        with_duration = true;
    } else {
        throw Error(Errc::MalformedRow, "line 1: header must be '" + std::string(kCsvHeader) + "'");
    }
    const std::size_t n_cols = with_duration ? 5 : 4;

    std::vector<JudgementRecord> records;
    std::map<std::string, double> durations;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto where = "line " + std::to_string(line_no) + ": ";
        auto cols = detail::split_csv_line(line);
        if (cols.size() != n_cols)
            throw Error(Errc::MalformedRow, where + "expected " + std::to_string(n_cols) + " columns, got " +
                                                std::to_string(cols.size()));
        for (std::size_t c = 0; c < 3; ++c)
            if (cols[c].empty()) throw Error(Errc::MalformedRow, where + "empty identifier");
        int value = 0;
        const auto& v = cols[3];
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
        if (ec != std::errc() || ptr != v.data() + v.size())
            throw Error(Errc::MalformedRow, where + "value '" + v + "' is not an integer");
        if (value < 1 || value > n_levels)
            throw Error(Errc::OutOfRange, where + "value " + std::to_string(value) + " outside 1.." +
                                              std::to_string(n_levels));
        if (with_duration) {
            double minutes = 0.0;
            const auto& dv = cols[4];
            auto [dp, dec] = std::from_chars(dv.data(), dv.data() + dv.size(), minutes);
            if (dec != std::errc() || dp != dv.data() + dv.size() || !(minutes >= 0.0))
                throw Error(Errc::MalformedRow, where + "duration '" + dv + "' is not a non-negative number");
            auto [it, inserted] = durations.emplace(cols[0], minutes);
            if (!inserted && it->second != minutes)
                throw Error(Errc::MalformedRow, where + "inconsistent duration for annotator '" + cols[0] + "'");
        }
        records.push_back({std::move(cols[0]), std::move(cols[1]), std::move(cols[2]), value, kind});
    }
    return Dataset(std::move(records), n_levels, kind, {}, std::move(reference), std::move(durations));
}

inline Dataset ingest_judgements(const std::string& path, int n_levels, JudgementKind kind, std::string reference = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::FileNotFound, "cannot open '" + path + "'");
    return parse_judgements(in, n_levels, kind, std::move(reference));
}

// Writes the dataset back as CSV, in record order.
inline void write_judgements_csv(const Dataset& ds, std::ostream& out) {
    const bool with_duration = !ds.durations().empty();
    out << kCsvHeader;
    if (with_duration) out << ',' << kDurationColumn;
    out << '\n';
    for (const auto& r : ds.records()) {
        out << r.annotator_id << ',' << r.document_id << ',' << r.system_id << ',' << r.value;
        if (with_duration) {
            auto it = ds.durations().find(r.annotator_id);
            if (it != ds.durations().end()) out << ',' << detail::format_double(it->second);
            else out << ',';
        }
        out << '\n';
    }
}

// Optional per-annotator durations file: annotator_id,duration_minutes.
inline std::map<std::string, double> read_durations_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::FileNotFound, "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::MalformedRow, "missing header row in durations file");
    std::map<std::string, double> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = detail::split_csv_line(line);
        double minutes = 0.0;
        if (cols.size() != 2)
            throw Error(Errc::MalformedRow, "durations line " + std::to_string(line_no) + ": expected 2 columns");
        auto [p, ec] = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), minutes);
        if (ec != std::errc() || p != cols[1].data() + cols[1].size())
            throw Error(Errc::MalformedRow, "durations line " + std::to_string(line_no) + ": bad number");
        out[cols[0]] = minutes;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct SystemScoreTable {
    std::vector<std::string> systems;
    std::vector<double> means;
    std::vector<std::size_t> counts;

    double mean_of(std::string_view id) const {
        for (std::size_t s = 0; s < systems.size(); ++s)
            if (systems[s] == id) return means[s];
        throw Error(Errc::SchemaViolation, "unknown system '" + std::string(id) + "'");
    }
};

inline SystemScoreTable system_means(const Dataset& ds) {
    if (ds.empty()) throw Error(Errc::EmptyDataset, "no records");
    const std::size_t S = ds.systems().size();
    std::vector<double> sums(S, 0.0);
    std::vector<std::size_t> counts(S, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        sums[ds.system_index(i)] += ds.records()[i].value;
        ++counts[ds.system_index(i)];
    }
    SystemScoreTable t{ds.systems(), std::vector<double>(S, 0.0), counts};
    for (std::size_t s = 0; s < S; ++s) t.means[s] = counts[s] ? sums[s] / static_cast<double>(counts[s]) : 0.0;
    return t;
}

enum class AggregateUnit { per_document, per_block };

// One mean per (unit, system); stored row-major as units x systems.
struct AggregateTable {
    AggregateUnit unit = AggregateUnit::per_document;
    std::vector<std::string> units;
    std::vector<std::string> systems;
    std::vector<double> means;
    std::vector<std::size_t> counts;

    double at(std::size_t u, std::size_t s) const { return means[u * systems.size() + s]; }

    std::vector<double> column(std::size_t s) const {
        std::vector<double> out(units.size());
        for (std::size_t u = 0; u < units.size(); ++u) out[u] = at(u, s);
        return out;
    }

    struct Row {
        std::string unit;
        std::string system;
        double mean;
        std::size_t count;
    };

    std::vector<Row> rows() const {
        std::vector<Row> out;
        for (std::size_t u = 0; u < units.size(); ++u)
            for (std::size_t s = 0; s < systems.size(); ++s)
                out.push_back({units[u], systems[s], at(u, s), counts[u * systems.size() + s]});
        return out;
    }
};

inline std::string block_unit_name(std::size_t b) { return "block" + std::to_string(b); }

// Averages judgements per (document, system) or per (block, system).
// Per-block aggregation needs the design; every cell must be non-empty.
inline AggregateTable aggregate(const Dataset& ds, AggregateUnit unit, const StudyDesign* design = nullptr) {
    AggregateTable t;
    t.unit = unit;
    t.systems = ds.systems();
    const std::size_t S = t.systems.size();
    std::vector<std::size_t> unit_of_record(ds.size());
    if (unit == AggregateUnit::per_document) {
        t.units = ds.documents();
        for (std::size_t i = 0; i < ds.size(); ++i) unit_of_record[i] = ds.document_index(i);
    } else {
        if (design == nullptr) throw Error(Errc::MissingDesign, "per-block aggregation requires a study design");
        const auto block_of = design->block_of_document();
        for (std::size_t b = 0; b < design->blocks.size(); ++b) t.units.push_back(block_unit_name(b));
        for (std::size_t i = 0; i < ds.size(); ++i) {
            auto it = block_of.find(ds.records()[i].document_id);
            if (it == block_of.end())
                throw Error(Errc::MissingDesign, "document '" + ds.records()[i].document_id + "' is in no block");
            unit_of_record[i] = it->second;
        }
    }
    std::vector<double> sums(t.units.size() * S, 0.0);
    t.counts.assign(t.units.size() * S, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::size_t cell = unit_of_record[i] * S + ds.system_index(i);
        sums[cell] += ds.records()[i].value;
        ++t.counts[cell];
    }
    t.means.assign(sums.size(), 0.0);
    for (std::size_t c = 0; c < sums.size(); ++c) {
        if (t.counts[c] == 0)
            throw Error(Errc::IncompleteCell, "no judgements for (" + t.units[c / S] + ", " + t.systems[c % S] + ")");
        t.means[c] = sums[c] / static_cast<double>(t.counts[c]);
    }
    return t;
}

// Raw judgements of two systems paired by (annotator, document).
inline std::pair<std::vector<double>, std::vector<double>> paired_judgements(const Dataset& ds, std::string_view sys_a,
                                                                           std::string_view sys_b) {
    const std::size_t a = ds.system_position(sys_a), b = ds.system_position(sys_b);
    std::map<std::pair<std::size_t, std::size_t>, std::pair<int, int>> cells;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::size_t s = ds.system_index(i);
        if (s != a && s != b) continue;
        auto& cell = cells.try_emplace({ds.annotator_index(i), ds.document_index(i)}, 0, 0).first->second;
        (s == a ? cell.first : cell.second) = ds.records()[i].value;
    }
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [key, v] : cells) {
        if (v.first == 0 || v.second == 0)
            throw Error(Errc::IncompleteCell, "annotator '" + ds.annotators()[key.first] + "' on document '" +
                                                  ds.documents()[key.second] + "' lacks one of the paired systems");
        out.first.push_back(v.first);
        out.second.push_back(v.second);
    }
    return out;
}

} // namespace evalpower
