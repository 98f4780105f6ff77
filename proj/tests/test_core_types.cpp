#include <gtest/gtest.h>

#include <bitset>
#include <random>

#include "plumber/core_types.hpp"

using namespace plumber;

namespace {

// Reads bits lo..hi by walking a bitset, independent of the mask arithmetic.
uint64_t slice_bits(uint64_t v, unsigned lo, unsigned hi) {
    std::bitset<64> b(v);
    uint64_t out = 0;
    for (unsigned i = hi + 1; i-- > lo;) out = (out << 1) | (b[i] ? 1 : 0);
    return out;
}

}  // namespace

TEST(CoreTypes, DefaultRanges) {
    CacheGeometry g;
    EXPECT_EQ(g.range(Field::set), (BitRange{6, 12}));
    EXPECT_EQ(g.range(Field::tag), (BitRange{13, 31}));
    EXPECT_EQ(g.range(Field::word), (BitRange{2, 5}));
    EXPECT_EQ(g.range(Field::bus), (BitRange{4, 5}));
    EXPECT_EQ(g.range(Field::page), (BitRange{12, 31}));
    EXPECT_EQ(g.range(Field::offset), (BitRange{0, 5}));
}

TEST(CoreTypes, ExtractExamples) {
    CacheGeometry g;
    EXPECT_EQ(extract_field(g, {0x80100020}, Field::bus), 2u);
    EXPECT_EQ(extract_field(g, {0x80100000}, Field::set), 0u);
    EXPECT_EQ(extract_field(g, {0x80100020}, Field::word), 8u);
    EXPECT_EQ(extract_field(g, {0x0}, Field::tag), 0u);
}

TEST(CoreTypes, ExtractMatchesOracle) {
    CacheGeometry g;
    std::mt19937_64 rng(7);
    const std::pair<Field, std::pair<unsigned, unsigned>> layout[] = {
        {Field::offset, {0, 5}}, {Field::set, {6, 12}}, {Field::tag, {13, 31}},
        {Field::word, {2, 5}},   {Field::bus, {4, 5}},  {Field::page, {12, 31}}};
    for (int i = 0; i < 10000; ++i) {
        const uint64_t v = rng() & 0xffffffffu;
        for (auto& [f, r] : layout) ASSERT_EQ(extract_field(g, {v}, f), slice_bits(v, r.first, r.second));
    }
}

TEST(CoreTypes, SameField) {
    CacheGeometry g;
    EXPECT_TRUE(same_field(g, Field::set, {{0x80100000}, {0x80100020}}));
    EXPECT_TRUE(same_tag(g, {0x80100000}, {0x80100020}));
    EXPECT_FALSE(same_field(g, Field::bus, {{0x80100000}, {0x80100020}}));
    EXPECT_FALSE(same_page(g, {0x80100000}, {0x80101000}));
}

TEST(CoreTypes, ComposeExamples) {
    CacheGeometry g;
    EXPECT_EQ(compose_addr(g, 0x40080, 0, 0x20).value, 0x80100020u);
    EXPECT_EQ(compose_addr(g, 0, 0, 0).value, 0u);
    EXPECT_EQ(compose_addr(g, 1, 127, 63).value, 0x3FFFu);
    EXPECT_THROW(compose_addr(g, 0, 128, 0), ComponentOutOfRange);
    EXPECT_THROW(compose_addr(g, 0, 0, 64), ComponentOutOfRange);
    EXPECT_THROW(compose_addr(g, uint64_t{1} << 19, 0, 0), ComponentOutOfRange);
}

TEST(CoreTypes, RoundTripAcrossGeometries) {
    std::mt19937_64 rng(3);
    for (uint64_t line : {16u, 32u, 64u, 128u})
        for (uint64_t sets : {1u, 16u, 128u, 256u}) {
            CacheGeometry g;
            g.line_size_bytes = line;
            g.num_sets = sets;
            g.bus_size_bytes = std::min<uint64_t>(16, line);
            g.validate();
            for (int i = 0; i < 200; ++i) {
                const uint64_t t = rng() & g.range(Field::tag).mask();
                const uint64_t s = rng() % sets;
                const uint64_t o = rng() % line;
                const PhysAddr a = compose_addr(g, t, s, o);
                ASSERT_EQ(extract_field(g, a, Field::tag), t);
                ASSERT_EQ(extract_field(g, a, Field::set), s);
                ASSERT_EQ(extract_field(g, a, Field::offset), o);
            }
        }
}

TEST(CoreTypes, PartitionAndNesting) {
    CacheGeometry g;
    const auto o = g.range(Field::offset), s = g.range(Field::set), t = g.range(Field::tag);
    EXPECT_EQ(o.lo, 0u);
    EXPECT_EQ(o.hi + 1, s.lo);
    EXPECT_EQ(s.hi + 1, t.lo);
    EXPECT_EQ(t.hi + 1, g.addr_bits);
    EXPECT_GE(g.range(Field::bus).lo, o.lo);
    EXPECT_LE(g.range(Field::bus).hi, o.hi);
    EXPECT_LE(g.range(Field::word).hi, o.hi);
}

TEST(CoreTypes, InvalidGeometry) {
    CacheGeometry g;
    g.num_sets = 100;
    EXPECT_THROW(g.validate(), InvalidGeometry);
    g = {};
    g.bus_size_bytes = 128;
    EXPECT_THROW(g.validate(), InvalidGeometry);
    g = {};
    g.associativity = 0;
    EXPECT_THROW(g.validate(), InvalidGeometry);
}

TEST(CoreTypes, WideValuesAreMasked) {
    CacheGeometry g;
    EXPECT_EQ(make_addr(g, 0x1'8010'0020ull).value, 0x80100020u);
    EXPECT_EQ(extract_field(g, {0x1'8010'0020ull}, Field::tag), 0x40080u);
}
