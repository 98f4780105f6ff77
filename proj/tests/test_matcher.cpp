#include <gtest/gtest.h>

#include <set>

#include <plumber/matcher.hpp>

using namespace plumber;

namespace {

// Brute force over all load triples: the set of start indices at which the
// prefetch pattern can match, written without the pattern engine.
std::set<size_t> oracle_starts(const AsmListing& l) {
    auto gp = [](std::string s) {
        if (!s.empty() && s.front() == '[') s.erase(0, 1);
        if (!s.empty() && s.back() == ']') s.pop_back();
        if (s == "sp" || s == "xzr" || s == "wzr") return true;
        if (s.size() < 2 || (s[0] != 'x' && s[0] != 'w')) return false;
        for (size_t i = 1; i < s.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        return std::stoi(s.substr(1)) <= 30;
    };
    auto ok = [&](const AsmInstr& a) {
        return a.cls == InstrClass::load && a.ops.size() >= 3 && gp(a.ops[0]) && a.ops[0].front() != '[' &&
               a.ops[1].front() == '[' && a.ops[1].back() != ']' && gp(a.ops[1]) && a.ops[2].front() != '[' &&
               gp(a.ops[2]);
    };
    auto base = [](const AsmInstr& a) { return a.ops[1].substr(1); };
    std::set<size_t> out;
    const auto& v = l.instrs;
    for (size_t i = 0; i < v.size(); ++i) {
        if (!ok(v[i])) continue;
        for (size_t j = i + 1; j <= i + 6 && j < v.size(); ++j) {
            if (!ok(v[j]) || v[j].section != v[i].section || base(v[j]) != base(v[i])) continue;
            for (size_t k = j + 1; k <= j + 6 && k < v.size(); ++k)
                if (ok(v[k]) && v[k].section == v[i].section && base(v[k]) == base(v[i])) out.insert(i);
        }
    }
    return out;
}

}  // namespace

TEST(Matcher, ParseListing) {
    auto l = parse_listing("SECTION f\n1000: ldr x0, [x1, x2]\n1004: nop\nthis is not code\n1008: b.ne 1000\n"
                           "1006: add x1, x1, #1\n100c: frobnicate x1\n");
    ASSERT_EQ(l.instrs.size(), 3u);
    EXPECT_EQ(l.instrs[0].cls, InstrClass::load);
    EXPECT_EQ(l.instrs[0].ops, (std::vector<std::string>{"x0", "[x1", "x2]"}));
    EXPECT_EQ(l.instrs[0].section, "f");
    EXPECT_EQ(l.instrs[1].mnemonic, "nop");
    EXPECT_TRUE(l.instrs[1].ops.empty());
    EXPECT_EQ(l.instrs[2].cls, InstrClass::branch);
    ASSERT_EQ(l.warnings.size(), 3u);
    EXPECT_EQ(l.warnings[0].line, 4);
    EXPECT_EQ(l.warnings[1].line, 6);  // address goes backwards
    EXPECT_EQ(l.warnings[2].line, 7);
}

TEST(Matcher, MnemonicTableFromConfig) {
    auto t = MnemonicTable::from_json(nlohmann::json::parse(R"({"LOAD": ["ld*"], "ARITH": ["fadd"]})"));
    auto l = parse_listing("10: ldxr x0, [x1]\n14: fadd d0, d1, d2\n18: ldr x0, [x1]\n", t);
    ASSERT_EQ(l.instrs.size(), 3u);
    EXPECT_EQ(l.instrs[0].cls, InstrClass::load);
    EXPECT_EQ(l.instrs[1].cls, InstrClass::arith);
    EXPECT_THROW(MnemonicTable::from_json(nlohmann::json::parse(R"({"JUMP": ["j"]})")), ConfigError);
}

TEST(Matcher, CompilePattern) {
    auto p = compile_pattern(prefetch_pattern);
    EXPECT_EQ(p.instr_count(), 3u);
    EXPECT_EQ(p.gap_count(), 2u);
    EXPECT_EQ(p.groups.size(), 1u);
    EXPECT_EQ(p.reference_count(), 2u);

    EXPECT_THROW(compile_pattern("LOAD(op1=g1) LOAD(op1>g1)"), BadBackreference);
    EXPECT_THROW(compile_pattern("LOAD(op1>g1) LOAD(op1>g1)"), BadBackreference);
    EXPECT_THROW(compile_pattern("LOAD .{5,2} LOAD"), BadQuantifier);
    EXPECT_THROW(compile_pattern("LOAD .{0,} LOAD"), BadQuantifier);
    EXPECT_THROW(compile_pattern("LOAD{0}"), BadQuantifier);
    EXPECT_THROW(compile_pattern("LOAD .{0,1}"), BadQuantifier);
    EXPECT_THROW(compile_pattern("JUMP"), SyntaxError);
    EXPECT_THROW(compile_pattern("LOAD(op1:QQ)"), SyntaxError);
}

TEST(Matcher, RepetitionAndAdjacency) {
    auto p = compile_pattern("LOAD{3}");
    EXPECT_EQ(p.instr_count(), 3u);
    auto l = parse_listing("0: ldr x0, [x1]\n4: ldr x0, [x1]\n8: nop\nc: ldr x0, [x1]\n10: ldr x0, [x2]\n"
                           "14: ldr x0, [x3]\n");
    auto m = match_pattern(l, p);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].indices, (std::vector<size_t>{3, 4, 5}));
    EXPECT_EQ(m[0].gaps, (std::vector<unsigned>{0, 0}));

    // a capture on a repeated element is defined once and referenced by the copies
    auto q = compile_pattern("LOAD(op1>b){3}");
    EXPECT_TRUE(match_pattern(l, q).empty());
}

TEST(Matcher, PrefetchPatternExamples) {
    auto p = compile_pattern(prefetch_pattern);
    auto l = parse_listing(
        "SECTION a\n0: ldr x0, [x1, x2]\n4: add x3, x3, #1\n8: ldr x4, [x1, x5, lsl#3]\nc: nop\n10: nop\n"
        "14: ldr x6, [x1, x7]\n"
        "SECTION b\n100: ldr x0, [x1, x2]\n104: ldr x0, [x2, x2]\n108: ldr x0, [x1, x2]\n");
    auto m = match_pattern(l, p);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].section, "a");
    EXPECT_EQ(m[0].indices, (std::vector<size_t>{0, 2, 5}));
    EXPECT_EQ(m[0].gaps, (std::vector<unsigned>{1, 2}));
    EXPECT_EQ(m[0].captures.at("g1"), "x1");
}

TEST(Matcher, OverlappingStartsAllReported) {
    auto p = compile_pattern(prefetch_pattern);
    std::string text;
    for (int i = 0; i < 5; ++i) text += std::to_string(i * 4) + ": ldr x0, [x1, x2]\n";
    auto m = match_pattern(parse_listing(text), p);
    ASSERT_EQ(m.size(), 3u);
    for (size_t i = 0; i < 3; ++i) EXPECT_EQ(m[i].indices.front(), i);
}

TEST(Matcher, PlantRecoveryAndGapArithmetic) {
    auto p = compile_pattern(prefetch_pattern);
    for (uint64_t seed : {1, 2, 3}) {
        auto corpus = synthetic_corpus(seed, 120, 7);
        auto l = parse_listing(corpus.text);
        ASSERT_TRUE(l.warnings.empty());
        auto m = match_pattern(l, p);

        std::set<size_t> starts;
        for (const auto& c : m) {
            starts.insert(c.indices.front());
            for (size_t i = 0; i + 1 < c.indices.size(); ++i)
                EXPECT_EQ(c.gaps[i], c.indices[i + 1] - c.indices[i] - 1);
            const auto base = c.captures.at("g1");
            for (size_t i : c.indices) {
                EXPECT_EQ(l.instrs[i].cls, InstrClass::load);
                EXPECT_EQ(l.instrs[i].ops[1], "[" + base);
                EXPECT_EQ(l.instrs[i].section, c.section);
            }
        }
        EXPECT_EQ(starts, oracle_starts(l)) << "seed " << seed;

        ASSERT_EQ(corpus.plants.size(), 7u);
        for (const auto& plant : corpus.plants) {
            size_t first = 0;
            while (l.instrs[first].section != plant.section) ++first;
            std::vector<size_t> want;
            for (size_t o : plant.offsets) want.push_back(first + o);
            bool found = false;
            for (const auto& c : m) found |= c.indices == want;
            EXPECT_TRUE(found) << plant.section;
        }
    }
}

TEST(Matcher, ScaleSmoke) {
    auto p = compile_pattern(prefetch_pattern);
    auto corpus = synthetic_corpus(11, 2000, 429);
    auto l = parse_listing(corpus.text);
    auto m = match_pattern(l, p);
    EXPECT_GE(m.size(), 429u);
}

TEST(Matcher, TraceFormat) {
    AccessTrace t{{0x10000, 0x80000040}, {0x10008, 0x80000080}};
    EXPECT_EQ(parse_trace_jsonl(trace_to_jsonl(t)), t);
    EXPECT_THROW(parse_trace_jsonl("{\"instr_addr\": 1}\n"), ParseError);
    EXPECT_THROW(parse_trace_jsonl("nope\n"), ParseError);
}

TEST(Matcher, ClassifyTrace) {
    CacheGeometry g;
    LeakageTemplate lt;
    lt.code_template = {{TemplateInstr::Load, "l1"}, {TemplateInstr::Arith, "n1"}, {TemplateInstr::Load, "l2"},
                        {TemplateInstr::Arith, "n2"}, {TemplateInstr::Load, "l3"}};
    lt.behaviors = {"P0", "P3"};
    lt.relation_map = {
        {"P3", {parse_predicate("set(l2) - set(l1) = set(l3) - set(l2) && |set(l2) - set(l1)| in [1,4] && "
                                "page(l1) = page(l2) && page(l2) = page(l3)")}},
        {"P0", {Conjunction{}}}};
    lt.metadata.geom = g;
    lt.metadata.tested = {{"n1", 0, 10}, {"n2", 0, 10}};

    auto a = [&](uint64_t set) { return compose_addr(g, 0x4000, set, 0).value; };
    // a repeated line is skipped when picking the three loads
    AccessTrace consecutive{{0x100, a(5)}, {0x104, a(5)}, {0x108, a(6)}, {0x110, a(7)}};
    EXPECT_EQ(classify_trace(consecutive, lt, g), "P3");
    AccessTrace scattered{{0x100, a(5)}, {0x108, a(9)}, {0x110, a(7)}};
    EXPECT_EQ(classify_trace(scattered, lt, g), "P0");
    AccessTrace far{{0x100, a(5)}, {0x100 + 4 * 41, a(6)}, {0x100 + 4 * 43, a(7)}};
    EXPECT_EQ(classify_trace(far, lt, g), undecidable);
    EXPECT_THROW(classify_trace({{0x100, a(5)}, {0x104, a(5) + 8}}, lt, g), InsufficientTrace);
}

TEST(Matcher, ConfusionReport) {
    std::vector<std::string> expected, actual;
    for (int i = 0; i < 66; ++i) expected.push_back("P0"), actual.push_back("P0");
    for (int i = 0; i < 6; ++i) expected.push_back("P3"), actual.push_back("P3");
    for (int i = 0; i < 28; ++i) expected.push_back(undecidable), actual.push_back("P3");
    auto m = confusion_report(expected, actual);
    EXPECT_EQ(m.expected_labels, (std::vector<std::string>{"P0", "P3", undecidable}));
    EXPECT_EQ(m.rows(), (std::vector<std::vector<uint64_t>>{{66, 0, 0}, {0, 6, 28}}));
    EXPECT_TRUE(m.pass());

    auto same = confusion_report({"P0", "P4", "P4"}, {"P0", "P4", "P4"});
    EXPECT_EQ(same.rows(), (std::vector<std::vector<uint64_t>>{{1, 0}, {0, 2}}));

    auto bad = confusion_report({"P0", "P3"}, {"P3", "P3"});
    EXPECT_FALSE(bad.pass());
    EXPECT_NE(bad.render().find("FAIL"), std::string::npos);
    EXPECT_THROW(confusion_report({"P0"}, {}), LengthMismatch);
}
