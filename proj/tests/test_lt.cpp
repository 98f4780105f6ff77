#include <gtest/gtest.h>

#include <random>

#include <plumber/lt.hpp>

using namespace plumber;

namespace {

CacheGeometry g16() {
    CacheGeometry g;
    g.num_sets = 16;
    return g;
}

PhysAddr at(const CacheGeometry& g, uint64_t tag, uint64_t set, uint64_t off) {
    return compose_addr(g, tag, set, off);
}

// Hand-written prefetch template in the shape produced by the stride analysis.
LeakageTemplate prefetch_fixture() {
    LeakageTemplate lt;
    lt.code_template = {{TemplateInstr::Load, "l1"}, {TemplateInstr::Arith, "n1"}, {TemplateInstr::Load, "l2"},
                        {TemplateInstr::Arith, "n2"}, {TemplateInstr::Load, "l3"}};
    lt.behaviors = {"P0", "P3", "P4"};
    const auto stride = "set(l2) - set(l1) = set(l3) - set(l2) && |set(l2) - set(l1)| in [1,4] && "
                        "page(l1) = page(l2) && page(l2) = page(l3)";
    lt.relation_map = {{"P4", {parse_predicate(std::string(stride) + " && n2 = 3")}},
                       {"P3", {parse_predicate(stride)}},
                       {"P0", {Conjunction{}}}};
    lt.metadata.geom = g16();
    lt.metadata.tested = {{"n1", 0, 10}, {"n2", 0, 10}};
    lt.metadata.provenance = {"stride-16", "gap-sweep"};
    return lt;
}

}  // namespace

TEST(Lt, PredicateExamples) {
    CacheGeometry g;
    auto p = parse_predicate("set(l2) = set(l1) + 1");
    EXPECT_TRUE(eval_predicate(p, g, {{"l1", at(g, 5, 10, 0)}, {"l2", at(g, 9, 11, 0)}}));
    EXPECT_FALSE(eval_predicate(p, g, {{"l1", at(g, 5, 10, 0)}, {"l2", at(g, 9, 12, 0)}}));

    auto q = parse_predicate("bus(l1) != bus(l2) + 1 mod 4");
    EXPECT_TRUE(eval_predicate(q, g, {{"l1", at(g, 1, 1, 2 * 16)}, {"l2", at(g, 1, 1, 0)}}));
    // bus 1 after bus 0 is excluded; so is 0 after 3 through the wrap
    EXPECT_FALSE(eval_predicate(q, g, {{"l1", at(g, 1, 1, 16)}, {"l2", at(g, 1, 1, 0)}}));
    EXPECT_FALSE(eval_predicate(q, g, {{"l1", at(g, 1, 1, 0)}, {"l2", at(g, 1, 1, 48)}}));

    EXPECT_THROW(eval_predicate(parse_predicate("set(l3) < 4"), g, {{"l1", at(g, 0, 0, 0)}}), MissingBinding);
    EXPECT_THROW(eval_predicate(parse_predicate("n1 < 4"), g, {}), MissingBinding);
    EXPECT_TRUE(eval_predicate(parse_predicate("true"), g, {}));
}

TEST(Lt, PredicateSyntax) {
    CacheGeometry g;
    AddressBinding b{{"a", at(g, 0x12, 7, 0x24)}};
    CountBinding c{{"n", 3}};
    EXPECT_TRUE(eval_predicate(parse_predicate("bits(a,4,5) = 2 && word(a) = 9"), g, b, c));
    EXPECT_TRUE(eval_predicate(parse_predicate("set(a) in {1,7} && tag(a) notin {0} && n*2 - 1 = 5"), g, b, c));
    EXPECT_TRUE(eval_predicate(parse_predicate("(set(a), n) in {(7,3)} && set(a) - 10 mod 4 = 1"), g, b, c));
    EXPECT_TRUE(eval_predicate(parse_predicate("|set(a) - 10| >= 3 && n in [0,10] && 2 > n - 2"), g, b, c));
    EXPECT_THROW(parse_predicate("set(a) =="), SyntaxError);
    EXPECT_THROW(parse_predicate("set(a) = 1 &&"), SyntaxError);
    EXPECT_THROW(parse_predicate("bits(a,9,2) = 0"), SyntaxError);

    // render then parse gives the same tree
    for (const char* s : {"set(l2) - set(l1) = set(l3) - set(l2)", "bus(x) != 3*bus(y) + 1 mod 4",
                          "(bus(x),bus(y)) notin {(0,1),(2,3)}", "|set(l2) - set(l1)| in [1,4]"}) {
        auto p = parse_predicate(s);
        EXPECT_EQ(parse_predicate(render_predicate(p)), p) << s;
    }
}

TEST(Lt, RoundTripFixture) {
    auto lt = prefetch_fixture();
    const std::string text = serialize_lt(lt);
    auto back = deserialize_lt(text);
    EXPECT_EQ(back, lt);
    EXPECT_EQ(serialize_lt(back), text);
}

TEST(Lt, CorruptedFieldsReportPath) {
    auto j = lt_to_json(prefetch_fixture());
    auto expect_path = [](const nlohmann::json& bad, const std::string& path) {
        try {
            lt_from_json(bad);
            ADD_FAILURE() << "accepted corrupt input at " << path;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.path, path);
        }
    };
    auto a = j;
    a["relation_map"][1]["conjunctions"][0][0]["op"] = "~";
    expect_path(a, "/relation_map/1/conjunctions/0/0/op");
    auto b = j;
    b["metadata"]["geometry"]["num_sets"] = "sixteen";
    expect_path(b, "/metadata/geometry/num_sets");
    auto c = j;
    c["code_template"][0].erase("symbol");
    expect_path(c, "/code_template/0/symbol");
    auto d = j;
    d["relation_map"][0]["conjunctions"][0][0]["lhs"]["args"][0]["field"] = "colour";
    expect_path(d, "/relation_map/0/conjunctions/0/0/lhs/args/0/field");
    EXPECT_THROW(deserialize_lt("{ not json"), ParseError);

    auto v = j;
    v["schema_version"] = 2;
    EXPECT_THROW(lt_from_json(v), SchemaVersionMismatch);
    // a v1 file read by the v1 reader
    EXPECT_NO_THROW(lt_from_json(j));
}

TEST(Lt, ClosureAndUnboundSymbols) {
    auto lt = prefetch_fixture();
    lt.relation_map[1].conjunctions[0].push_back(parse_predicate("set(l9) = 0")[0]);
    EXPECT_THROW(check_closed(lt), UnboundSymbol);
    EXPECT_THROW(deserialize_lt(serialize_lt(lt)), UnboundSymbol);
    auto lt2 = prefetch_fixture();
    lt2.relation_map[0].conjunctions[0].push_back(parse_predicate("n7 = 0")[0]);
    EXPECT_THROW(check_closed(lt2), UnboundSymbol);
}

TEST(Lt, FirstMatchAndUndecidable) {
    auto lt = prefetch_fixture();
    const auto g = lt.metadata.geom;
    AddressBinding stride{{"l1", at(g, 3, 1, 0)}, {"l2", at(g, 3, 2, 0)}, {"l3", at(g, 3, 3, 0)}};
    EXPECT_EQ(evaluate_lt(lt, stride, {{"n1", 0}, {"n2", 3}}), "P4");
    EXPECT_EQ(evaluate_lt(lt, stride, {{"n1", 0}, {"n2", 2}}), "P3");
    EXPECT_EQ(evaluate_lt(lt, stride, {{"n1", 0}, {"n2", 11}}), undecidable);
    AddressBinding flat{{"l1", at(g, 3, 1, 0)}, {"l2", at(g, 3, 2, 0)}, {"l3", at(g, 3, 4, 0)}};
    EXPECT_EQ(evaluate_lt(lt, flat, {{"n1", 0}, {"n2", 3}}), "P0");
    EXPECT_THROW(evaluate_lt(lt, stride, {{"n1", 0}}), MissingBinding);
}

TEST(Lt, RoundTripPreservesEvaluation) {
    auto lt = prefetch_fixture();
    lt.relation_map.insert(lt.relation_map.begin(),
                           {"X", {parse_predicate("(bus(l1),bus(l3)) in {(1,2)} && tag(l1) - tag(l2) mod 4 = 1")}});
    lt.behaviors.push_back("X");
    auto back = deserialize_lt(serialize_lt(lt));
    const auto g = lt.metadata.geom;
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<uint64_t> tag(0, 7), set(0, 15), off(0, 63), n(0, 12);
    for (int i = 0; i < 5000; ++i) {
        AddressBinding b{{"l1", at(g, tag(rng), set(rng), off(rng))},
                         {"l2", at(g, tag(rng), set(rng), off(rng))},
                         {"l3", at(g, tag(rng), set(rng), off(rng))}};
        CountBinding c{{"n1", static_cast<int64_t>(n(rng))}, {"n2", static_cast<int64_t>(n(rng))}};
        for (const auto& br : lt.relation_map)
            for (size_t k = 0; k < br.conjunctions.size(); ++k)
                ASSERT_EQ(eval_predicate(br.conjunctions[k], g, b, c),
                          eval_predicate(back.relation_map[&br - lt.relation_map.data()].conjunctions[k], g, b, c));
        ASSERT_EQ(evaluate_lt(lt, b, c), evaluate_lt(back, b, c));
    }
}

TEST(Lt, AssembleOrdersAndMarksInconclusive) {
    CacheGeometry g = g16();
    const BitRange set = g.range(Field::set), bus = g.range(Field::bus);
    Relation eq;
    eq.kind = Relation::StrideEq;
    eq.cols = {0, 1, 2};
    eq.bits = {set, set, set};
    Relation bound;
    bound.kind = Relation::StrideBound;
    bound.cols = {0, 1};
    bound.bits = {set, set};
    bound.diffs = {-4, -3, -2, -1, 1, 2, 3, 4};
    Relation same;
    same.kind = Relation::SameField;
    same.cols = {0, 1, 2};
    same.field = Field::page;
    Relation busx;
    busx.kind = Relation::ExcludedLinear;
    busx.cols = {0, 1};
    busx.bits = {bus, bus};
    busx.a = 1;
    busx.b = 1;
    busx.modulus = 4;

    ClassAnalysis p3{"P3"}, p0{"P0"}, pb{"PB"};
    p3.relations = {eq, bound, same};
    p0.relations = {same};
    pb.relations = {busx};
    std::vector<TemplateInstr> code = {{TemplateInstr::Load, "l1"}, {TemplateInstr::Load, "l2"},
                                       {TemplateInstr::Load, "l3"}};
    LtMetadata md{g, {}, {"fixture"}};
    auto lt = assemble_lt(code, {p0, pb, p3}, md);
    ASSERT_EQ(lt.relation_map.size(), 3u);
    EXPECT_EQ(lt.relation_map[0].behavior, "P3");
    EXPECT_EQ(lt.relation_map[1].behavior, "PB");
    EXPECT_EQ(lt.relation_map[2].behavior, "P0");
    EXPECT_TRUE(lt.relation_map[2].conjunctions[0].empty());
    EXPECT_EQ(render_predicate(lt.relation_map[0].conjunctions[0]),
              "set(l2) - set(l1) = set(l3) - set(l2) && |set(l2) - set(l1)| in [1,4] && page(l1) = page(l2) && "
              "page(l2) = page(l3)");
    EXPECT_EQ(render_predicate(lt.relation_map[1].conjunctions[0]), "bus(l1) != bus(l2) + 1 mod 4");
    EXPECT_TRUE(lt.inconclusive.empty());

    // two relation-free behaviors: neither may act as the catch-all
    ClassAnalysis q0{"Q0"};
    auto lt2 = assemble_lt(code, {p3, p0, q0}, md);
    EXPECT_EQ(lt2.relation_map.size(), 1u);
    EXPECT_EQ(lt2.inconclusive, (std::vector<std::string>{"P0", "Q0"}));
    EXPECT_EQ(lt2.behaviors.size(), 3u);

    // a relation on a column past the template's loads
    Relation far = busx;
    far.cols = {0, 3};
    ClassAnalysis bad{"B"};
    bad.relations = {far};
    EXPECT_THROW(assemble_lt(code, {bad}, md), UnboundSymbol);
}

TEST(Lt, NeverTwoBehaviors) {
    // first-match order makes the outcome a function of the binding even when
    // several rules hold at once
    auto lt = prefetch_fixture();
    const auto g = lt.metadata.geom;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        AddressBinding b{{"l1", at(g, 1, rng() % 16, 0)}, {"l2", at(g, 1, rng() % 16, 0)}, {"l3", at(g, 1, rng() % 16, 0)}};
        CountBinding c{{"n1", 0}, {"n2", static_cast<int64_t>(rng() % 12)}};
        std::vector<std::string> matching;
        for (const auto& br : lt.relation_map)
            for (const auto& conj : br.conjunctions)
                if (eval_predicate(conj, g, b, c)) matching.push_back(br.behavior);
        const auto out = evaluate_lt(lt, b, c);
        if (c["n2"] > 10) EXPECT_EQ(out, undecidable);
        else EXPECT_EQ(out, matching.front());
    }
}
