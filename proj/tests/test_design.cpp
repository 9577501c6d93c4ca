#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace evalpower;
using testsupport::error_code;

namespace {

void check_disjoint(const StudyDesign& d) {
    std::set<std::string> annotators, documents;
    for (const auto& b : d.blocks) {
        for (const auto& a : b.annotator_ids) CHECK(annotators.insert(a).second);
        for (const auto& doc : b.document_ids) CHECK(documents.insert(doc).second);
    }
}

} // namespace

TEST_CASE("generated designs have the product sizes") {
    const auto five = testsupport::system_names(5);
    const auto d = generate_block_design(20, 5, 3, five, 11);
    CHECK(d.total_annotators() == 60);
    CHECK(d.total_documents() == 100);
    CHECK(d.total_judgements() == 1500);
    CHECK(d.kind == DesignKind::crossed);
    CHECK_NOTHROW(d.validate());
    check_disjoint(d);

    const auto minimal = generate_block_design(1, 1, 1, {"A"}, 0);
    CHECK(minimal.total_annotators() == 1);
    CHECK(minimal.total_judgements() == 1);
    CHECK(minimal.kind == DesignKind::nested);

    const auto small = generate_block_design(4, 5, 3, five, 0);
    CHECK(small.total_annotators() == 12);
    CHECK(small.total_judgements() == 300);
}

TEST_CASE("generation is deterministic under the seed") {
    const auto s = testsupport::system_names(3);
    CHECK(to_json(generate_block_design(6, 4, 2, s, 5)) == to_json(generate_block_design(6, 4, 2, s, 5)));
    CHECK(to_json(generate_block_design(6, 4, 2, s, 5)) != to_json(generate_block_design(6, 4, 2, s, 6)));
}

TEST_CASE("generation rejects non-positive counts") {
    const auto s = testsupport::system_names(2);
    CHECK(error_code([&] { generate_block_design(0, 5, 3, s, 0); }) == Errc::InvalidCount);
    CHECK(error_code([&] { generate_block_design(2, 0, 3, s, 0); }) == Errc::InvalidCount);
    CHECK(error_code([&] { generate_block_design(2, 5, -1, s, 0); }) == Errc::InvalidCount);
    CHECK(error_code([&] { generate_block_design(2, 5, 1, {}, 0); }) == Errc::InvalidCount);
}

TEST_CASE("validation catches structural violations") {
    auto d = generate_block_design(3, 2, 2, {"A", "B"}, 0);
    auto shared = d;
    shared.blocks[1].annotator_ids[0] = shared.blocks[0].annotator_ids[0];
    CHECK(error_code([&] { shared.validate(); }) == Errc::InvalidCount);
    auto kind = d;
    kind.kind = DesignKind::nested;
    CHECK(error_code([&] { kind.validate(); }) == Errc::InvalidCount);
    auto empty = d;
    empty.blocks[2].document_ids.clear();
    CHECK(error_code([&] { empty.validate(); }) == Errc::InvalidCount);
}

TEST_CASE("design JSON round trip") {
    const auto d = generate_block_design(3, 2, 2, {"A", "B"}, 1);
    const auto back = design_from_json(to_json(d));
    CHECK(to_json(back) == to_json(d));
    CHECK(error_code([] { design_from_json(nlohmann::json{{"blocks", 1}}); }) == Errc::SchemaViolation);
}

TEST_CASE("designs are inferred from data") {
    const auto p = testsupport::make_params(7, 5, {0.5, -0.3, 1.0, 0.1}, 0.8, 0.4);
    const auto design = generate_block_design(20, 5, 3, p.systems, 1);
    const auto ds = clmm_sample(p, design, 1);
    const auto inferred = infer_design(ds);
    CHECK(inferred.blocks.size() == 20);
    CHECK(inferred.judgements_per_summary == 3);
    CHECK(inferred.total_judgements() == 1500);
    const auto doc_block = design.block_of_document(), ann_block = design.block_of_annotator();
    for (const auto& b : inferred.blocks) {
        const auto home = doc_block.at(b.document_ids.front());
        for (const auto& doc : b.document_ids) CHECK(doc_block.at(doc) == home);
        for (const auto& a : b.annotator_ids) CHECK(ann_block.at(a) == home);
    }

    auto partial = ds.records();
    partial.pop_back();
    const Dataset broken(partial, 7, JudgementKind::score, ds.systems(), ds.reference_system());
    CHECK(error_code([&] { infer_design(broken); }) == Errc::IncompleteBlock);
}

TEST_CASE("budget-matched subdesigns") {
    const auto p = testsupport::make_params(7, 5, {0.5, -0.3, 1.0, 0.1}, 0.8, 0.4);
    const auto design = generate_block_design(20, 5, 3, p.systems, 1);
    const auto ds = clmm_sample(p, design, 1);

    const auto crossed = sample_subdesign(ds, design, DesignKind::crossed, 150, 5, 3);
    CHECK(crossed.data.size() == 150);
    CHECK(crossed.data.annotators().size() == 6);
    CHECK(crossed.data.documents().size() == 10);
    CHECK_NOTHROW(crossed.design.validate());

    const auto nested = sample_subdesign(ds, design, DesignKind::nested, 150, 5, 3);
    CHECK(nested.data.size() == 150);
    CHECK(nested.data.annotators().size() == 6);
    CHECK(nested.data.documents().size() == 30);
    CHECK(nested.design.kind == DesignKind::nested);
    CHECK_NOTHROW(nested.design.validate());
    check_disjoint(nested.design);
    // One judgement per summary, each reused verbatim from the source.
    std::set<std::pair<std::string, std::string>> summaries;
    for (const auto& r : nested.data.records()) CHECK(summaries.emplace(r.document_id, r.system_id).second);

    const auto one = sample_subdesign(ds, design, DesignKind::nested, 25, 5, 0);
    CHECK(one.data.annotators().size() == 1);
    CHECK(one.data.size() == 25);

    std::vector<JudgementRecord> single;
    for (const auto& r : ds.records())
        if (r.system_id == "s0") single.push_back(r);
    const Dataset one_system(single, 7, JudgementKind::score);
    const auto minimal = sample_subdesign(one_system, design, DesignKind::nested, 5, 5, 0);
    CHECK(minimal.data.size() == 5);
    CHECK(minimal.data.annotators().size() == 1);
}

TEST_CASE("nested subdesigns cover r times more documents") {
    const auto p = testsupport::make_params(7, 5, {0.5, -0.3, 1.0, 0.1}, 0.8, 0.4);
    const auto design = generate_block_design(20, 5, 3, p.systems, 1);
    const auto ds = clmm_sample(p, design, 1);
    for (std::size_t blocks : {1, 2, 4, 6}) {
        const std::size_t budget = blocks * 75;
        const auto c = sample_subdesign(ds, design, DesignKind::crossed, budget, 5, blocks);
        const auto n = sample_subdesign(ds, design, DesignKind::nested, budget, 5, blocks);
        CHECK(n.data.documents().size() == 3 * c.data.documents().size());
        CHECK(n.data.size() == c.data.size());
    }
}

TEST_CASE("infeasible budgets") {
    const auto p = testsupport::make_params(7, 5, {0.5, -0.3, 1.0, 0.1}, 0.8, 0.4);
    const auto design = generate_block_design(4, 5, 3, p.systems, 1);
    const auto ds = clmm_sample(p, design, 1);
    CHECK(error_code([&] { sample_subdesign(ds, design, DesignKind::crossed, 100, 5, 0); }) == Errc::Unsatisfiable);
    CHECK(error_code([&] { sample_subdesign(ds, design, DesignKind::crossed, 75 * 5, 5, 0); }) == Errc::Unsatisfiable);
    CHECK(error_code([&] { sample_subdesign(ds, design, DesignKind::nested, 0, 5, 0); }) == Errc::Unsatisfiable);
}
