#include <gtest/gtest.h>

#include <random>

#include "plumber/gts.hpp"

using namespace plumber;

TEST(Gts, TwoLoadsShareTagSymbol) {
    auto ast = parse_gts("M[t=t1,s=s1] M[t=t1,s=s1+1]");
    ASSERT_EQ(ast.body.kind, OpKind::Seq);
    ASSERT_EQ(ast.body.seq.size(), 2u);
    const auto& a = ast.body.seq[0].dir;
    const auto& b = ast.body.seq[1].dir;
    EXPECT_EQ(a.tag->sym, b.tag->sym);
    EXPECT_EQ(a.set->sym, b.set->sym);
    EXPECT_EQ(a.set->delta, 0);
    EXPECT_EQ(b.set->delta, 1);
    EXPECT_EQ(ast.symbols.size(), 2u);
}

TEST(Gts, PowerAndRep) {
    auto p = parse_gts("(M)^{5}");
    ASSERT_EQ(p.body.seq.size(), 1u);
    EXPECT_EQ(p.body.seq[0].kind, Item::Power);
    EXPECT_EQ(p.body.seq[0].n, 5u);
    ASSERT_EQ(p.body.seq[0].body.size(), 1u);
    EXPECT_FALSE(p.body.seq[0].body[0].dir.tag.has_value());

    auto r = parse_gts("rep{ M[t=t1,s=s1] ; 3 }");
    EXPECT_EQ(r.body.kind, OpKind::Rep);
    EXPECT_EQ(r.body.n, 3u);
    EXPECT_EQ(r.body.kids.at(0).seq.size(), 1u);
}

TEST(Gts, Errors) {
    EXPECT_THROW(parse_gts("M[t="), SyntaxError);
    EXPECT_THROW(parse_gts("Q"), UnknownDirective);
    EXPECT_THROW(parse_gts("M[x=t1]"), MalformedAttribute);
    EXPECT_THROW(parse_gts("M[t=t1,t=t2]"), MalformedAttribute);
    EXPECT_THROW(parse_gts("offmut{ linemut{ M } }"), SyntaxError);
    EXPECT_THROW(parse_gts("pre{ A } M"), SyntaxError);
}

TEST(Gts, Render) {
    auto ast = parse_gts("(M[t=t1,s=s1])^{2,s+=1}");
    EXPECT_EQ(render_gts(ast), "(M[t=t1,s=s1])^{2,s+=1}");
    EXPECT_EQ(render_gts(parse_gts("")), "");
}

TEST(Gts, RoundTripCorpus) {
    const char* corpus[] = {
        "offmut{ M[t=t1,s=s1] M[t=t2,s=s1] M[t=t3,s=s1] M[t=t3,s=s1] M[t=t3,s=s1] }",
        "shuffle{ M[t=t1,s=s1] M[t=t2,s=s1] M[t=t3,s=s1] M[t=t3,s=s1] M[t=t3,s=s1] }",
        "subset{ M[t=t1,s=s1,w=1] M[t=t2,s=s1,w=4] M[t=t3,s=s1] }",
        "linemut{ (M[t=t1])^{3} }",
        "(M[t=t1,s=s1] W(3))^{2,s+=1} M[t=t1,s=s1+2]",
        "merge{ merge{ (M[t=t1,s=s1])^{3,s+=1} | (M[t=t2,s=s2])^{3,s+=1} } | (M[t=t3,s=s3])^{3,s+=1} }",
        "pre{ M[t=t1,s=s1] } M[t=t1,s=s1] M[t=t1,s=s1+1] M[t=t1,s=s1+2]",
        "slide{ M[t=t1,s=s1-2] M[t=t1,s=s1+3]; 4 }",
        "rep{ SB(v,T) B(v,F,3) A NOP M; 1000 }",
        "M[t=t1,s=s1] (A)^{4} M[t=t1,s=s1+1] # trailing comment",
    };
    for (const char* src : corpus) {
        auto a = parse_gts(src);
        auto text = render_gts(a);
        auto b = parse_gts(text);
        EXPECT_EQ(a, b) << src;
        EXPECT_EQ(render_gts(b), text);
    }
}

namespace {

std::string random_seq(std::mt19937& rng, int depth) {
    std::string s;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) {
        switch (rng() % (depth > 0 ? 6 : 4)) {
            case 0: s += "M[t=t" + std::to_string(rng() % 3) + ",s=s" + std::to_string(rng() % 2) + "+" + std::to_string(rng() % 4) + "] "; break;
            case 1: s += "A "; break;
            case 2: s += "B(v" + std::to_string(rng() % 2) + "," + (rng() % 2 ? "T" : "F") + "," + std::to_string(1 + rng() % 4) + ") "; break;
            case 3: s += "W(" + std::to_string(1 + rng() % 3) + ") "; break;
            case 4: s += "(" + random_seq(rng, depth - 1) + ")^{" + std::to_string(1 + rng() % 3) + ",s+=1} "; break;
            default: s += "(" + random_seq(rng, depth - 1) + ")^{2} "; break;
        }
    }
    return s;
}

std::string random_op(std::mt19937& rng, int depth) {
    if (depth == 0) return random_seq(rng, 1);
    switch (rng() % 6) {
        case 0: return "shuffle{" + random_op(rng, depth - 1) + "}";
        case 1: return "subset{" + random_op(rng, depth - 1) + "}";
        case 2: return "slide{" + random_op(rng, depth - 1) + ";" + std::to_string(1 + rng() % 3) + "}";
        case 3: return "merge{" + random_op(rng, depth - 1) + "|" + random_op(rng, depth - 1) + "}";
        case 4: return "rep{" + random_op(rng, depth - 1) + ";" + std::to_string(1 + rng() % 5) + "}";
        default: return random_seq(rng, 2);
    }
}

}  // namespace

TEST(Gts, RoundTripRandom) {
    std::mt19937 rng(11);
    for (int i = 0; i < 300; ++i) {
        const std::string src = random_op(rng, 3);
        auto a = parse_gts(src);
        EXPECT_EQ(parse_gts(render_gts(a)), a) << src;
    }
}

TEST(Gts, BoolSpellings) {
    auto a = parse_gts("SB(x,true) SB(x,0) B(x,1,2)");
    ASSERT_EQ(a.body.seq.size(), 3u);
    EXPECT_TRUE(a.body.seq[0].dir.value);
    EXPECT_FALSE(a.body.seq[1].dir.value);
    EXPECT_TRUE(a.body.seq[2].dir.value);
    EXPECT_EQ(a.vars.size(), 1u);
}
