#pragma once

// StudyDesign: which annotators judge which documents.
//
// A block is a set of documents whose summaries (one per system) are all
// judged by the same set of annotators. Blocks never share annotators or
// documents. A design with one annotator per block is nested; with r >= 2
// annotators per block it is crossed.

#include "evalpower/error.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace evalpower {

enum class DesignKind { crossed, nested };

inline std::string to_string(DesignKind k) { return k == DesignKind::crossed ? "crossed" : "nested"; }

inline DesignKind parse_design_kind(const std::string& s) {
    if (s == "crossed") return DesignKind::crossed;
    if (s == "nested") return DesignKind::nested;
    throw Error(Errc::SchemaViolation, "unknown design kind '" + s + "'");
}

struct Block {
    std::vector<std::string> annotator_ids;
    std::vector<std::string> document_ids;
    std::vector<std::string> systems;
};

struct StudyDesign {
    std::vector<Block> blocks;
    DesignKind kind = DesignKind::crossed;
    int judgements_per_summary = 1;

    std::size_t total_annotators() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.annotator_ids.size();
        return n;
    }

    std::size_t total_documents() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.document_ids.size();
        return n;
    }

    std::size_t total_judgements() const {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.annotator_ids.size() * b.document_ids.size() * b.systems.size();
        return n;
    }

    // document id -> block index
    std::map<std::string, std::size_t> block_of_document() const {
        std::map<std::string, std::size_t> out;
        for (std::size_t b = 0; b < blocks.size(); ++b)
            for (const auto& d : blocks[b].document_ids) out.emplace(d, b);
        return out;
    }

    std::map<std::string, std::size_t> block_of_annotator() const {
        std::map<std::string, std::size_t> out;
        for (std::size_t b = 0; b < blocks.size(); ++b)
            for (const auto& a : blocks[b].annotator_ids) out.emplace(a, b);
        return out;
    }

    // Throws Errc::InvalidCount on any structural violation.
    void validate() const {
        if (judgements_per_summary < 1)
            throw Error(Errc::InvalidCount, "judgements_per_summary must be >= 1");
        if ((kind == DesignKind::nested) != (judgements_per_summary == 1))
            throw Error(Errc::InvalidCount, "nested designs have exactly one judgement per summary");
        std::set<std::string> annotators, documents;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const auto& blk = blocks[b];
            if (blk.annotator_ids.empty() || blk.document_ids.empty() || blk.systems.empty())
                throw Error(Errc::InvalidCount, "block " + std::to_string(b) + " has an empty set");
            if (static_cast<int>(blk.annotator_ids.size()) != judgements_per_summary)
                throw Error(Errc::InvalidCount, "block " + std::to_string(b) + " has " +
                                                    std::to_string(blk.annotator_ids.size()) +
                                                    " annotators, expected " +
                                                    std::to_string(judgements_per_summary));
            for (const auto& a : blk.annotator_ids)
                if (!annotators.insert(a).second)
                    throw Error(Errc::InvalidCount, "annotator '" + a + "' appears in more than one block");
            for (const auto& d : blk.document_ids)
                if (!documents.insert(d).second)
                    throw Error(Errc::InvalidCount, "document '" + d + "' appears in more than one block");
        }
    }
};

inline nlohmann::json to_json(const StudyDesign& d) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : d.blocks)
        blocks.push_back({{"annotators", b.annotator_ids}, {"documents", b.document_ids}, {"systems", b.systems}});
    return {{"blocks", blocks}, {"kind", to_string(d.kind)}, {"judgements_per_summary", d.judgements_per_summary}};
}

// `systems` is optional per block; when absent the fallback list is used.
inline StudyDesign design_from_json(const nlohmann::json& j, const std::vector<std::string>& fallback_systems = {}) {
    try {
        StudyDesign d;
        d.kind = parse_design_kind(j.at("kind").get<std::string>());
        d.judgements_per_summary = j.at("judgements_per_summary").get<int>();
        for (const auto& jb : j.at("blocks")) {
            Block b;
            b.annotator_ids = jb.at("annotators").get<std::vector<std::string>>();
            b.document_ids = jb.at("documents").get<std::vector<std::string>>();
            b.systems = jb.contains("systems") ? jb.at("systems").get<std::vector<std::string>>() : fallback_systems;
            d.blocks.push_back(std::move(b));
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("design JSON: ") + e.what());
    }
}

} // namespace evalpower
