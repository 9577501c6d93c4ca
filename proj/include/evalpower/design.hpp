#pragma once

// Block design generation, inference from data, and budget-matched
// nested/crossed subsampling.

#include "evalpower/data_model.hpp"
#include "evalpower/design_types.hpp"
#include "evalpower/error.hpp"
#include "evalpower/random.hpp"

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace evalpower {

namespace detail {

inline std::string padded_id(const char* prefix, std::size_t i, std::size_t total) {
    const int width = static_cast<int>(std::to_string(std::max<std::size_t>(total, 1)).size());
    std::ostringstream os;
    os << prefix << std::setw(width) << std::setfill('0') << i + 1;
    return os.str();
}

} // namespace detail

// Documents doc1..docN are shuffled into blocks under `seed`; annotators
// ann1..annM are numbered block by block.
inline StudyDesign generate_block_design(int n_blocks, int docs_per_block, int annotators_per_block,
                                         const std::vector<std::string>& systems, std::uint64_t seed) {
    if (n_blocks < 1 || docs_per_block < 1 || annotators_per_block < 1)
        throw Error(Errc::InvalidCount, "block, document and annotator counts must all be >= 1");
    if (systems.empty()) throw Error(Errc::InvalidCount, "at least one system is required");
    const std::size_t n_docs = static_cast<std::size_t>(n_blocks) * docs_per_block;
    const std::size_t n_ann = static_cast<std::size_t>(n_blocks) * annotators_per_block;

    std::vector<std::size_t> doc_order(n_docs);
    std::iota(doc_order.begin(), doc_order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(doc_order.begin(), doc_order.end(), rng);

    StudyDesign d;
    d.kind = annotators_per_block == 1 ? DesignKind::nested : DesignKind::crossed;
    d.judgements_per_summary = annotators_per_block;
    d.blocks.resize(n_blocks);
    for (int b = 0; b < n_blocks; ++b) {
        auto& blk = d.blocks[b];
        for (int a = 0; a < annotators_per_block; ++a)
            blk.annotator_ids.push_back(detail::padded_id("ann", static_cast<std::size_t>(b) * annotators_per_block + a, n_ann));
        for (int k = 0; k < docs_per_block; ++k)
            blk.document_ids.push_back(
                detail::padded_id("doc", doc_order[static_cast<std::size_t>(b) * docs_per_block + k], n_docs));
        blk.systems = systems;
    }
    return d;
}

// Recovers the block structure of a dataset as the connected components of
// the annotator-document graph. Incomplete blocks are rejected.
inline StudyDesign infer_design(const Dataset& ds) {
    if (ds.empty()) throw Error(Errc::EmptyDataset, "cannot infer a design from an empty dataset");
    const std::size_t A = ds.annotators().size(), D = ds.documents().size();
    std::vector<std::size_t> parent(A + D);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto ra = find(ds.annotator_index(i)), rd = find(A + ds.document_index(i));
        if (ra != rd) parent[std::max(ra, rd)] = std::min(ra, rd);
    }
    std::map<std::size_t, std::size_t> block_of_root;
    StudyDesign d;
    auto block_for = [&](std::size_t node) -> Block& {
        auto [it, inserted] = block_of_root.emplace(find(node), d.blocks.size());
        if (inserted) d.blocks.emplace_back().systems = ds.systems();
        return d.blocks[it->second];
    };
    for (std::size_t a = 0; a < A; ++a) block_for(a).annotator_ids.push_back(ds.annotators()[a]);
    for (std::size_t k = 0; k < D; ++k) block_for(A + k).document_ids.push_back(ds.documents()[k]);

    std::vector<std::size_t> records_in_block(d.blocks.size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) ++records_in_block[block_of_root.at(find(ds.annotator_index(i)))];
    const std::size_t S = ds.systems().size();
    for (std::size_t b = 0; b < d.blocks.size(); ++b) {
        const auto& blk = d.blocks[b];
        const std::size_t expected = blk.annotator_ids.size() * blk.document_ids.size() * S;
        if (records_in_block[b] != expected)
            throw Error(Errc::IncompleteBlock, "block containing annotator '" + blk.annotator_ids.front() + "' has " +
                                                   std::to_string(records_in_block[b]) + " judgements, expected " +
                                                   std::to_string(expected));
    }
    const std::size_t r = d.blocks.front().annotator_ids.size();
    for (const auto& blk : d.blocks)
        if (blk.annotator_ids.size() != r)
            throw Error(Errc::IncompleteBlock, "blocks have differing numbers of annotators");
    d.judgements_per_summary = static_cast<int>(r);
    d.kind = r == 1 ? DesignKind::nested : DesignKind::crossed;
    return d;
}

struct Subsample {
    Dataset data;
    StudyDesign design;
};

// Draws a budget-matched subdesign from real judgements.
//
// crossed: whole blocks (all r annotators) restricted to `block_size`
//          documents each; granularity block_size * S * r judgements.
// nested:  one annotator from each of several distinct blocks, keeping
//          `block_size` of the documents that annotator judged; granularity
//          block_size * S judgements and one judgement per summary.
inline Subsample sample_subdesign(const Dataset& ds, const StudyDesign& design, DesignKind kind,
                                  std::size_t n_judgements, std::size_t block_size, std::uint64_t seed) {
    if (block_size == 0) throw Error(Errc::Unsatisfiable, "block size must be >= 1");
    const std::size_t S = ds.systems().size();
    const std::size_t r = kind == DesignKind::crossed ? static_cast<std::size_t>(design.judgements_per_summary) : 1;
    if (kind == DesignKind::crossed && r < 2)
        throw Error(Errc::Unsatisfiable, "crossed subsampling needs a source design with >= 2 annotators per block");
    const std::size_t unit = block_size * S * r;
    if (n_judgements == 0 || n_judgements % unit != 0)
        throw Error(Errc::Unsatisfiable, "budget " + std::to_string(n_judgements) + " is not a positive multiple of " +
                                             std::to_string(unit) + " judgements");
    const std::size_t n_units = n_judgements / unit;

    std::vector<std::size_t> eligible;
    for (std::size_t b = 0; b < design.blocks.size(); ++b)
        if (design.blocks[b].document_ids.size() >= block_size) eligible.push_back(b);
    if (n_units > eligible.size())
        throw Error(Errc::Unsatisfiable, "budget needs " + std::to_string(n_units) + " blocks but only " +
                                             std::to_string(eligible.size()) + " are available");

    Rng rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    Subsample out;
    out.design.kind = kind;
    out.design.judgements_per_summary = static_cast<int>(r);
    std::set<std::pair<std::string, std::string>> keep;  // (annotator, document)
    for (std::size_t u = 0; u < n_units; ++u) {
        const auto& src = design.blocks[eligible[u]];
        auto docs = src.document_ids;
        std::shuffle(docs.begin(), docs.end(), rng);
        docs.resize(block_size);
        Block blk;
        blk.document_ids = docs;
        blk.systems = src.systems.empty() ? ds.systems() : src.systems;
        if (kind == DesignKind::crossed) {
            blk.annotator_ids = src.annotator_ids;
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, src.annotator_ids.size() - 1);
            blk.annotator_ids = {src.annotator_ids[pick(rng)]};
        }
        for (const auto& a : blk.annotator_ids)
            for (const auto& d : blk.document_ids) keep.emplace(a, d);
        out.design.blocks.push_back(std::move(blk));
    }
    out.data = ds.filter([&](const JudgementRecord& rec) { return keep.count({rec.annotator_id, rec.document_id}) > 0; });
    if (out.data.size() != n_judgements)
        throw Error(Errc::Unsatisfiable, "source data is missing judgements for the sampled cells");
    return out;
}

} // namespace evalpower
