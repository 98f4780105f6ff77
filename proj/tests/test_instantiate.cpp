#include <gtest/gtest.h>

#include <set>

#include "plumber/instantiate.hpp"

using namespace plumber;

namespace {

TestcaseFamily family_of(const std::string& src, AddressStore& store, size_t variant = 0) {
    auto vs = expand(parse_gts(src), 0);
    std::vector<DirectiveSeq> seqs;
    for (auto& v : vs) seqs.push_back(v.seq);
    store.prepare(seqs);
    return instantiate(vs.at(variant).seq, vs.at(variant).plan, store);
}

}  // namespace

TEST(Instantiate, FamilySizes) {
    CacheGeometry g;
    AddressStore s1(g, 1);
    EXPECT_EQ(family_of("offmut{ (M[t=t1,s=s1])^{5} }", s1).size(), 1048576u);
    AddressStore s2(g, 1);
    EXPECT_EQ(family_of("linemut{ (M[t=t1,s=s1])^{3} }", s2).size(), uint64_t{1} << 21);
    AddressStore s3(g, 1);
    auto f = family_of("rep{ M[t=t1,s=s1]; 10000 }", s3);
    EXPECT_EQ(f.size(), 1u);
    EXPECT_EQ(f.at(0).run_count, 10000u);
}

TEST(Instantiate, AllocExamples) {
    CacheGeometry g;
    AddressStore st(g, 9);
    const PhysAddr a = alloc_address(st, {"t1", 0}, {"s1", 0});
    const PhysAddr b = alloc_address(st, {"t1", 0}, {"s1", 1});
    EXPECT_TRUE(same_tag(g, a, b));
    EXPECT_EQ((extract_field(g, a, Field::set) + 1) % g.num_sets, extract_field(g, b, Field::set));
    EXPECT_EQ(alloc_address(st, {"t1", 0}, {"s1", 0}), a);
    const PhysAddr c = alloc_address(st, {"t2", 0}, {"s1", 0});
    EXPECT_TRUE(same_set(g, a, c));
    EXPECT_FALSE(same_tag(g, a, c));
}

TEST(Instantiate, TagOverflow) {
    CacheGeometry g;
    AddressStore st(g, 1);
    st.pin_tag("t1", g.range(Field::tag).mask());
    EXPECT_THROW(alloc_address(st, {"t1", 1}, {"s1", 0}), UnsatisfiableRelation);
}

TEST(Instantiate, FrozenStore) {
    CacheGeometry g;
    AddressStore st(g, 1);
    st.freeze();
    EXPECT_THROW(alloc_address(st, {"t9", 0}, {"s9", 0}), StoreExhausted);
}

TEST(Instantiate, SetExhaustion) {
    CacheGeometry g;
    g.num_sets = 2;
    AddressStore st(g, 1);
    alloc_address(st, {"t", 0}, {"a", 0});
    alloc_address(st, {"t", 0}, {"b", 0});
    EXPECT_THROW(alloc_address(st, {"t", 0}, {"c", 0}), StoreExhausted);
}

TEST(Instantiate, FieldConsistency) {
    CacheGeometry g;
    AddressStore st(g, 4);
    auto f = family_of("M[t=t1,s=s1,w=3] A M[t=t1,s=s1+2] M[t=t2,s=s1-1,w=15]", st);
    auto tc = f.at(0);
    ASSERT_EQ(tc.instrs.size(), 4u);
    const uint64_t t1 = st.tag_bindings().at("t1"), s1 = st.set_bindings().at("s1");
    EXPECT_EQ(extract_field(g, tc.instrs[0].addr, Field::tag), t1);
    EXPECT_EQ(extract_field(g, tc.instrs[0].addr, Field::set), s1);
    EXPECT_EQ(extract_field(g, tc.instrs[0].addr, Field::word), 3u);
    EXPECT_EQ(extract_field(g, tc.instrs[2].addr, Field::set), (s1 + 2) % g.num_sets);
    EXPECT_EQ(extract_field(g, tc.instrs[3].addr, Field::set), (s1 + g.num_sets - 1) % g.num_sets);
    EXPECT_EQ(extract_field(g, tc.instrs[3].addr, Field::word), 15u);
    EXPECT_NE(extract_field(g, tc.instrs[3].addr, Field::tag), t1);
    EXPECT_EQ(tc.instrs[1].kind, Instr::Arith);
}

TEST(Instantiate, OffsetEnumerationComplete) {
    CacheGeometry g;
    for (int k = 1; k <= 3; ++k) {
        AddressStore st(g, 2);
        std::string src = "offmut{ ";
        for (int i = 0; i < k; ++i) src += "M[t=t" + std::to_string(i) + ",s=s1] ";
        auto f = family_of(src + "}", st);
        std::set<std::vector<uint64_t>> seen;
        for (uint64_t i = 0; i < f.size(); ++i) {
            auto tc = f.at(i);
            std::vector<uint64_t> w;
            for (const auto& in : tc.instrs) w.push_back(extract_field(g, in.addr, Field::word));
            seen.insert(w);
        }
        EXPECT_EQ(seen.size(), uint64_t{1} << (4 * k));
        EXPECT_EQ(f.size(), seen.size());
    }
}

TEST(Instantiate, DeterministicUnderSeed) {
    CacheGeometry g;
    AddressStore a(g, 77), b(g, 77);
    auto fa = family_of("shuffle{ M[t=t1,s=s1] M[t=t2,s=s1] M[t=t3,s=s2] }", a, 3);
    auto fb = family_of("shuffle{ M[t=t1,s=s1] M[t=t2,s=s1] M[t=t3,s=s2] }", b, 3);
    EXPECT_EQ(fa.at(0).instrs, fb.at(0).instrs);
}

TEST(Instantiate, PreconditionFollowsMutatedLoad) {
    CacheGeometry g;
    AddressStore st(g, 5);
    auto f = family_of("pre{ M[t=t1,s=s1] } linemut{ M[t=t1,s=s1] M[t=t1,s=s1] M[t=t1,s=s1] }", st);
    auto tc = f.at(f.size() - 3);
    ASSERT_EQ(tc.pre_loads.size(), 1u);
    EXPECT_EQ(tc.pre_loads[0], tc.instrs[0].addr);
}

TEST(Instantiate, SlideStaysInsidePage) {
    CacheGeometry g;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        AddressStore st(g, seed);
        auto vs = expand(parse_gts("slide{ (M[t=t1,s=s1])^{3,s+=1}; 8 }"), 0);
        std::vector<DirectiveSeq> seqs;
        for (auto& v : vs) seqs.push_back(v.seq);
        st.prepare(seqs);
        const uint64_t s1 = st.set_bindings().at("s1");
        EXPECT_EQ(s1 / g.lines_per_page(), (s1 + 9) / g.lines_per_page());
    }
}
