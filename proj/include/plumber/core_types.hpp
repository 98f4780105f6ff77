#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include "errors.hpp"

namespace plumber {

// `line` is the line index (tag and set together); it is not one of the
// address-notation fields but the prefetcher and the predicates need it.
enum class Field { offset, set, tag, word, bus, page, line };

inline constexpr Field all_fields[] = {Field::offset, Field::set,  Field::tag, Field::word,
                                       Field::bus,    Field::page, Field::line};

inline std::string_view field_name(Field f) {
    switch (f) {
        case Field::offset: return "offset";
        case Field::set: return "set";
        case Field::tag: return "tag";
        case Field::word: return "word";
        case Field::bus: return "bus";
        case Field::page: return "page";
        case Field::line: return "line";
    }
    return "?";
}

inline std::optional<Field> field_from_name(std::string_view s) {
    for (Field f : all_fields)
        if (field_name(f) == s) return f;
    return std::nullopt;
}

struct BitRange {
    unsigned lo = 0, hi = 0;  // inclusive
    [[nodiscard]] unsigned width() const { return hi - lo + 1; }
    [[nodiscard]] uint64_t count() const { return uint64_t{1} << width(); }
    [[nodiscard]] uint64_t mask() const {
        return width() >= 64 ? ~uint64_t{0} : ((uint64_t{1} << width()) - 1);
    }
    [[nodiscard]] uint64_t slice(uint64_t v) const { return (v >> lo) & mask(); }
    bool operator==(const BitRange&) const = default;
};

struct CacheGeometry {
    uint64_t line_size_bytes = 64;
    uint64_t num_sets = 128;
    unsigned associativity = 4;
    uint64_t bus_size_bytes = 16;
    uint64_t page_size_bytes = 4096;
    unsigned addr_bits = 32;

    bool operator==(const CacheGeometry&) const = default;

    void validate() const {
        auto pow2 = [](uint64_t v) { return v != 0 && std::has_single_bit(v); };
        if (!pow2(line_size_bytes) || line_size_bytes < 4)
            throw InvalidGeometry("line size must be a power of two >= 4");
        if (!pow2(num_sets)) throw InvalidGeometry("set count must be a power of two");
        if (associativity == 0) throw InvalidGeometry("associativity must be positive");
        if (!pow2(bus_size_bytes) || bus_size_bytes > line_size_bytes)
            throw InvalidGeometry("bus size must be a power of two dividing the line size");
        if (!pow2(page_size_bytes)) throw InvalidGeometry("page size must be a power of two");
        if (addr_bits == 0 || addr_bits > 64) throw InvalidGeometry("address width out of range");
        if (set_bits_hi_exclusive() > addr_bits)
            throw InvalidGeometry("line and set bits exceed the address width");
        if (log2(page_size_bytes) >= addr_bits)
            throw InvalidGeometry("page size exceeds the address width");
    }

    static unsigned log2(uint64_t v) { return static_cast<unsigned>(std::countr_zero(v)); }
    [[nodiscard]] unsigned line_bits() const { return log2(line_size_bytes); }
    [[nodiscard]] unsigned set_bits() const { return log2(num_sets); }
    [[nodiscard]] unsigned set_bits_hi_exclusive() const { return line_bits() + set_bits(); }
    [[nodiscard]] uint64_t words_per_line() const { return line_size_bytes / 4; }
    [[nodiscard]] uint64_t buses_per_line() const { return line_size_bytes / bus_size_bytes; }
    [[nodiscard]] uint64_t lines_per_page() const { return page_size_bytes / line_size_bytes; }
    [[nodiscard]] uint64_t addr_mask() const {
        return addr_bits >= 64 ? ~uint64_t{0} : ((uint64_t{1} << addr_bits) - 1);
    }

    [[nodiscard]] BitRange range(Field f) const {
        const unsigned lb = line_bits();
        switch (f) {
            case Field::offset: return {0, lb - 1};
            case Field::set:
                // a single-set cache has no index bits; report an empty-width
                // range at the line boundary
                return {lb, set_bits() == 0 ? lb : lb + set_bits() - 1};
            case Field::tag: return {lb + set_bits(), addr_bits - 1};
            case Field::word: return {2, lb - 1};
            case Field::bus: return {log2(bus_size_bytes), lb - 1};
            case Field::page: return {log2(page_size_bytes), addr_bits - 1};
            case Field::line: return {lb, addr_bits - 1};
        }
        return {};
    }
};

struct PhysAddr {
    uint64_t value = 0;
    bool operator==(const PhysAddr&) const = default;
    auto operator<=>(const PhysAddr&) const = default;
};

inline PhysAddr make_addr(const CacheGeometry& g, uint64_t v) { return {v & g.addr_mask()}; }

inline uint64_t extract_field(const CacheGeometry& g, PhysAddr a, Field f) {
    if (f == Field::set && g.set_bits() == 0) return 0;
    return g.range(f).slice(a.value & g.addr_mask());
}

inline bool same_field(const CacheGeometry& g, Field f, std::initializer_list<PhysAddr> as) {
    if (as.size() < 2) return true;
    const uint64_t v = extract_field(g, *as.begin(), f);
    for (PhysAddr a : as)
        if (extract_field(g, a, f) != v) return false;
    return true;
}

inline bool same_tag(const CacheGeometry& g, PhysAddr a, PhysAddr b) { return same_field(g, Field::tag, {a, b}); }
inline bool same_set(const CacheGeometry& g, PhysAddr a, PhysAddr b) { return same_field(g, Field::set, {a, b}); }
inline bool same_page(const CacheGeometry& g, PhysAddr a, PhysAddr b) { return same_field(g, Field::page, {a, b}); }

inline PhysAddr compose_addr(const CacheGeometry& g, uint64_t tag, uint64_t set, uint64_t offset) {
    const BitRange tr = g.range(Field::tag);
    if (tag > tr.mask()) throw ComponentOutOfRange("tag " + std::to_string(tag) + " out of range");
    if (set >= g.num_sets) throw ComponentOutOfRange("set " + std::to_string(set) + " out of range");
    if (offset >= g.line_size_bytes)
        throw ComponentOutOfRange("offset " + std::to_string(offset) + " out of range");
    return {(tag << tr.lo) | (set << g.line_bits()) | offset};
}

inline uint64_t line_index(const CacheGeometry& g, PhysAddr a) { return extract_field(g, a, Field::line); }
inline uint64_t line_base(const CacheGeometry& g, uint64_t line) { return line << g.line_bits(); }

}  // namespace plumber
