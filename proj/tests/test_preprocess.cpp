#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "plumber/preprocess.hpp"

using namespace plumber;

namespace {

std::set<std::string> rendered(const std::vector<ExpandedVariant>& vs) {
    std::set<std::string> out;
    for (const auto& v : vs) out.insert(render_directives(v.seq.instructions));
    return out;
}

std::vector<std::string> distinct_loads(int k) {
    std::vector<std::string> v;
    for (int i = 0; i < k; ++i) v.push_back("M[t=t" + std::to_string(i) + ",s=s0]");
    return v;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
    return s;
}

// Brute-force oracles, written without next_permutation or bit tricks shared
// with the expander.
void perms(std::vector<std::string> rest, std::vector<std::string>& cur, std::set<std::string>& out) {
    if (rest.empty()) {
        out.insert(join(cur));
        return;
    }
    for (size_t i = 0; i < rest.size(); ++i) {
        auto r = rest;
        cur.push_back(r[i]);
        r.erase(r.begin() + static_cast<long>(i));
        perms(r, cur, out);
        cur.pop_back();
    }
}

void subsets(const std::vector<std::string>& in, size_t i, std::vector<std::string>& cur, std::set<std::string>& out) {
    if (i == in.size()) {
        if (!cur.empty()) out.insert(join(cur));
        return;
    }
    cur.push_back(in[i]);
    subsets(in, i + 1, cur, out);
    cur.pop_back();
    subsets(in, i + 1, cur, out);
}

void merges(const std::vector<std::string>& a, size_t i, const std::vector<std::string>& b, size_t j,
            std::vector<std::string>& cur, std::set<std::string>& out) {
    if (i == a.size() && j == b.size()) {
        out.insert(join(cur));
        return;
    }
    if (i < a.size()) {
        cur.push_back(a[i]);
        merges(a, i + 1, b, j, cur, out);
        cur.pop_back();
    }
    if (j < b.size()) {
        cur.push_back(b[j]);
        merges(a, i, b, j + 1, cur, out);
        cur.pop_back();
    }
}

uint64_t fact(int k) { return k <= 1 ? 1 : k * fact(k - 1); }
uint64_t binom(int n, int k) { return k == 0 ? 1 : binom(n - 1, k - 1) * n / k; }

}  // namespace

TEST(Preprocess, ShuffleOmitsDuplicates) {
    auto vs = expand(parse_gts("shuffle{ M M M[t=t1,s=s1] }"), 0);
    EXPECT_EQ(vs.size(), 3u);
}

// The full sequence is itself a nonempty subset, so it is kept alongside the
// four shorter variants.
TEST(Preprocess, SubsetExample) {
    auto vs = expand(parse_gts("subset{ M M M[t=t1,s=s1] }"), 0);
    EXPECT_EQ(rendered(vs), (std::set<std::string>{"M[t=_t,s=_s] M[t=_t,s=_s]", "M[t=_t,s=_s] M[t=t1,s=s1]",
                                                   "M[t=_t,s=_s]", "M[t=t1,s=s1]",
                                                   "M[t=_t,s=_s] M[t=_t,s=_s] M[t=t1,s=s1]"}));
}

// All order-preserving interleavings are produced; the four hand-picked ones
// are among them.
TEST(Preprocess, MergeExample) {
    auto vs = expand(parse_gts("merge{ M[t=t1,s=s1] M[t=t2,s=s2] | M[t=t3,s=s3] M[t=t4,s=s4] }"), 0);
    EXPECT_EQ(vs.size(), 6u);
    auto r = rendered(vs);
    for (const char* v : {"M[t=t1,s=s1] M[t=t2,s=s2] M[t=t3,s=s3] M[t=t4,s=s4]",
                          "M[t=t1,s=s1] M[t=t3,s=s3] M[t=t2,s=s2] M[t=t4,s=s4]",
                          "M[t=t3,s=s3] M[t=t1,s=s1] M[t=t4,s=s4] M[t=t2,s=s2]",
                          "M[t=t3,s=s3] M[t=t4,s=s4] M[t=t1,s=s1] M[t=t2,s=s2]"})
        EXPECT_TRUE(r.count(v)) << v;
}

TEST(Preprocess, SlideShiftsSets) {
    auto vs = expand(parse_gts("slide{ M[t=t1,s=s1] M[t=t1,s=s1+1]; 3 }"), 0);
    ASSERT_EQ(vs.size(), 3u);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(vs[k].seq.instructions[0].set.delta, k);
        EXPECT_EQ(vs[k].seq.instructions[1].set.delta, k + 1);
    }
}

TEST(Preprocess, PowerIncrement) {
    auto vs = expand(parse_gts("(M[t=t1,s=s1])^{2,s+=1}"), 0);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(render_directives(vs[0].seq.instructions), "M[t=t1,s=s1] M[t=t1,s=s1+1]");
}

TEST(Preprocess, CountLawsAgainstBruteForce) {
    for (int k = 1; k <= 6; ++k) {
        auto loads = distinct_loads(k);
        std::set<std::string> p, s;
        std::vector<std::string> cur;
        perms(loads, cur, p);
        subsets(loads, 0, cur, s);
        auto ev = expand(parse_gts("shuffle{" + join(loads) + "}"), 0);
        EXPECT_EQ(ev.size(), fact(k));
        EXPECT_EQ(rendered(ev), p);
        auto sv = expand(parse_gts("subset{" + join(loads) + "}"), 0);
        EXPECT_EQ(sv.size(), (uint64_t{1} << k) - 1);
        EXPECT_EQ(rendered(sv), s);
        auto lv = expand(parse_gts("slide{" + join(loads) + ";" + std::to_string(k) + "}"), 0);
        EXPECT_EQ(lv.size(), static_cast<size_t>(k));
    }
    for (int p = 1; p <= 5; ++p)
        for (int q = 1; p + q <= 6; ++q) {
            auto all = distinct_loads(p + q);
            std::vector<std::string> a(all.begin(), all.begin() + p), b(all.begin() + p, all.end());
            std::set<std::string> m;
            std::vector<std::string> cur;
            merges(a, 0, b, 0, cur, m);
            auto mv = expand(parse_gts("merge{" + join(a) + "|" + join(b) + "}"), 0);
            EXPECT_EQ(mv.size(), binom(p + q, p));
            EXPECT_EQ(rendered(mv), m);
        }
}

TEST(Preprocess, RepetitionIsRunCount) {
    auto vs = expand(parse_gts("rep{ M ; 10000 }"), 0);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(vs[0].seq.run_count, 10000u);
}

TEST(Preprocess, MutationPlans) {
    auto vs = expand(parse_gts("offmut{ M[t=a,s=s] A M[t=b,s=s] }"), 0);
    ASSERT_EQ(vs.size(), 1u);
    EXPECT_EQ(vs[0].plan.mode, MutationMode::word_offset);
    EXPECT_EQ(vs[0].plan.targets, (std::vector<size_t>{0, 2}));
    auto ls = expand(parse_gts("linemut{ M[t=a,s=s] NOP M[t=b,s=s] }"), 0);
    EXPECT_EQ(ls.at(0).plan.mode, MutationMode::set_index);
    EXPECT_EQ(ls.at(0).plan.targets, (std::vector<size_t>{0, 2}));
}

TEST(Preprocess, WildcardDeterministicAndNonMemory) {
    auto ast = parse_gts("W(20)");
    auto a = expand(ast, 5), b = expand(ast, 5);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].seq.instructions, b[0].seq.instructions);
    EXPECT_EQ(a[0].seq.instructions.size(), 20u);
    for (const auto& d : a[0].seq.instructions) EXPECT_NE(d.kind, DirKind::Mem);
}

TEST(Preprocess, MergeOrderPreserved) {
    auto vs = expand(parse_gts("merge{ M[t=a,s=s] M[t=a,s=s+1] M[t=a,s=s+2] | M[t=b,s=s] M[t=b,s=s+1] }"), 0);
    for (const auto& v : vs) {
        int64_t last_a = -1, last_b = -1;
        for (const auto& d : v.seq.instructions) {
            auto& last = d.tag.sym == "a" ? last_a : last_b;
            EXPECT_GT(d.set.delta, last);
            last = d.set.delta;
        }
    }
}

TEST(Preprocess, Cap) {
    EXPECT_THROW(expand(parse_gts("shuffle{ M[t=a] M[t=b] M[t=c] M[t=d] M[t=e] }"), 0, 50), ExpansionTooLarge);
}
