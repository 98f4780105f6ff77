#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "core_types.hpp"
#include "errors.hpp"
#include "instantiate.hpp"
#include "simulator.hpp"

namespace plumber {

// ---------------------------------------------------------------- labels

enum class ClassKey { previction, prefetch_count, prefetched_set, preloaded_eviction, mispredict_bucket };

inline std::string key_name(ClassKey k) {
    switch (k) {
        case ClassKey::previction: return "previction-occurred";
        case ClassKey::prefetch_count: return "prefetch-count";
        case ClassKey::prefetched_set: return "prefetched-address-set";
        case ClassKey::preloaded_eviction: return "eviction-of-preloaded";
        case ClassKey::mispredict_bucket: return "misprediction-rate-bucket";
    }
    return "?";
}

inline ClassKey key_from_name(const std::string& s) {
    for (ClassKey k : {ClassKey::previction, ClassKey::prefetch_count, ClassKey::prefetched_set,
                       ClassKey::preloaded_eviction, ClassKey::mispredict_bucket})
        if (key_name(k) == s) return k;
    throw UnknownKey("unknown classification key '" + s + "'");
}

inline std::string label(const Observation& o, ClassKey k) {
    switch (k) {
        case ClassKey::previction: return o.previctions.empty() ? "no-previction" : "previction";
        case ClassKey::prefetch_count: return "P" + std::to_string(o.prefetched.size());
        case ClassKey::prefetched_set: {
            std::vector<uint64_t> v = o.prefetched;
            std::sort(v.begin(), v.end());
            std::ostringstream s;
            s << "{";
            for (size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << std::hex << "0x" << v[i];
            s << "}";
            return s.str();
        }
        case ClassKey::preloaded_eviction: {
            std::set<uint64_t> present;
            for (const auto& [s, ls] : o.final_cache)
                for (const auto& l : ls) present.insert(l.addr);
            for (uint64_t p : o.pre_lines)
                if (!present.count(p)) return "evicted";
            return "not-evicted";
        }
        case ClassKey::mispredict_bucket: {
            if (o.branches == 0) return "mr-none";
            if (o.mispredicted == o.branches) return "mr-100";
            const uint64_t pct = o.mispredicted * 100 / o.branches;
            return "mr-" + std::to_string(pct / 10 * 10);
        }
    }
    return "?";
}

// ---------------------------------------------------------------- classes

struct BehaviorClass {
    std::string label;
    std::vector<uint64_t> ids;  // ascending
    std::map<uint64_t, std::pair<uint64_t, uint64_t>> trials;  // id -> (agreeing trials, total trials)
    bool operator==(const BehaviorClass&) const = default;
};

inline constexpr const char* unstable_label = "unstable";

// Per-testcase labels from several trials; a testcase joins the class of a
// label seen in at least `threshold` of its trials, otherwise "unstable".
inline std::vector<BehaviorClass> classify_trials(const std::vector<std::pair<uint64_t, std::vector<std::string>>>& runs,
                                                  double threshold = 0.95) {
    std::map<std::string, BehaviorClass> by;
    for (const auto& [id, labels] : runs) {
        if (labels.empty()) continue;
        std::map<std::string, uint64_t> c;
        for (const auto& l : labels) ++c[l];
        auto best = std::max_element(c.begin(), c.end(), [](auto& a, auto& b) { return a.second < b.second; });
        const bool stable = static_cast<double>(best->second) >= threshold * static_cast<double>(labels.size());
        const std::string lab = stable ? best->first : unstable_label;
        auto& cls = by[lab];
        cls.label = lab;
        cls.ids.push_back(id);
        cls.trials[id] = {best->second, labels.size()};
    }
    std::vector<BehaviorClass> out;
    for (auto& [l, c] : by) {
        std::sort(c.ids.begin(), c.ids.end());
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<BehaviorClass> classify(const std::vector<Observation>& obs, ClassKey key) {
    std::vector<std::pair<uint64_t, std::vector<std::string>>> runs;
    runs.reserve(obs.size());
    for (const auto& o : obs) runs.push_back({o.testcase_id, {label(o, key)}});
    return classify_trials(runs, 1.0);
}

inline std::vector<BehaviorClass> classify(const std::vector<Observation>& obs, const std::string& key) {
    return classify(obs, key_from_name(key));
}

// ---------------------------------------------------------------- bit tables

struct BitTable {
    CacheGeometry geom;
    std::vector<std::string> columns;
    std::vector<uint64_t> mutated;  // per column: bits the family varies
    std::vector<uint64_t> ids;
    std::vector<std::vector<uint64_t>> rows;

    [[nodiscard]] size_t count() const { return rows.size(); }

    // bits with one value in every row of this table
    [[nodiscard]] uint64_t constant_mask(size_t col) const {
        if (rows.empty()) return geom.addr_mask();
        uint64_t diff = 0;
        for (const auto& r : rows) diff |= r[col] ^ rows[0][col];
        return geom.addr_mask() & ~diff;
    }

    [[nodiscard]] BitRange mutated_range(size_t col) const {
        const uint64_t m = mutated.at(col);
        if (m == 0) throw DegenerateTable("column " + columns.at(col) + " has no mutated bits");
        const unsigned lo = static_cast<unsigned>(std::countr_zero(m));
        const unsigned hi = 63 - static_cast<unsigned>(std::countl_zero(m));
        return {lo, hi};
    }

    [[nodiscard]] std::string to_csv() const {
        std::ostringstream s;
        s << "id";
        for (const auto& c : columns) s << "," << c;
        s << "\n";
        for (size_t i = 0; i < rows.size(); ++i) {
            s << ids[i];
            for (uint64_t v : rows[i]) {
                s << ",";
                for (unsigned b = geom.addr_bits; b-- > 0;) s << ((v >> b) & 1);
            }
            s << "\n";
        }
        return s.str();
    }
};

inline std::vector<uint64_t> family_mutated_masks(const TestcaseFamily& fam) {
    const auto& plan = fam.plan();
    const CacheGeometry& g = fam.geometry();
    std::vector<uint64_t> out(plan.targets.size(), 0);
    if (plan.mode == MutationMode::none) return out;
    const unsigned shift = plan.mode == MutationMode::word_offset ? 2 : g.line_bits();
    std::vector<uint32_t> dom = fam.domain();
    for (size_t j = 0; j < out.size(); ++j)
        for (uint32_t v : dom) out[j] |= (uint64_t{v} << shift) ^ (uint64_t{dom.front()} << shift);
    return out;
}

inline BitTable build_bit_table(const BehaviorClass& cls, const TestcaseFamily& fam) {
    BitTable t;
    t.geom = fam.geometry();
    const auto& targets = fam.plan().targets;
    for (size_t j = 0; j < targets.size(); ++j) t.columns.push_back("l" + std::to_string(j + 1));
    t.mutated = family_mutated_masks(fam);
    std::vector<uint64_t> ids = cls.ids;
    std::sort(ids.begin(), ids.end());
    for (uint64_t id : ids) {
        const Testcase tc = fam.at(id);
        std::vector<uint64_t> row;
        for (size_t p : targets) row.push_back(tc.instrs.at(p).addr.value);
        t.ids.push_back(id);
        t.rows.push_back(std::move(row));
    }
    return t;
}

struct CellCond {
    size_t col = 0;
    BitRange bits;
    uint64_t value = 0;
};

inline void check_cond(const BitTable& t, const CellCond& c) {
    if (c.col >= t.columns.size()) throw BadRange("column index out of range");
    if (c.bits.lo > c.bits.hi || c.bits.hi >= t.geom.addr_bits) throw BadRange("bit range outside the address");
}

inline uint64_t nocc(const BitTable& t, const std::function<bool(const std::vector<uint64_t>&)>& cond) {
    return static_cast<uint64_t>(std::count_if(t.rows.begin(), t.rows.end(), cond));
}

inline uint64_t nocc(const BitTable& t, const std::vector<CellCond>& conj) {
    for (const auto& c : conj) check_cond(t, c);
    return nocc(t, [&](const std::vector<uint64_t>& r) {
        for (const auto& c : conj)
            if (c.bits.slice(r[c.col]) != c.value) return false;
        return true;
    });
}

// ---------------------------------------------------------------- relations

struct Relation {
    enum Kind {
        Constraint,      // value of cols[0] bits in `values` (or not in, when negated)
        Linear,          // y = a*x + b (mod modulus when modulus != 0); cols = {y, x}
        ExcludedLinear,  // negation of Linear
        DiffSet,         // y - x in diffs
        PairSet,         // (x, y) in cells (or not in, when negated)
        StrideEq,        // c1 - c0 == c2 - c1
        StrideBound,     // c1 - c0 in diffs
        SameField,       // all cols agree on `field` (a family invariant)
    } kind = Constraint;
    std::vector<size_t> cols;
    std::vector<BitRange> bits;  // one per col, absolute positions
    bool negated = false;
    std::vector<uint64_t> values;
    int64_t a = 0, b = 0;
    uint64_t modulus = 0;
    std::vector<int64_t> diffs;
    std::vector<std::pair<uint64_t, uint64_t>> cells;
    Field field = Field::page;
    bool operator==(const Relation&) const = default;

    [[nodiscard]] bool holds(const std::vector<uint64_t>& row, const CacheGeometry& g) const {
        auto v = [&](size_t i) { return bits[i].slice(row[cols[i]]); };
        switch (kind) {
            case Constraint: {
                const bool in = std::binary_search(values.begin(), values.end(), v(0));
                return in != negated;
            }
            case Linear:
            case ExcludedLinear: {
                const int64_t y = static_cast<int64_t>(v(0)), x = static_cast<int64_t>(v(1));
                int64_t rhs = a * x + b;
                bool eq;
                if (modulus) {
                    const int64_t m = static_cast<int64_t>(modulus);
                    eq = ((rhs % m) + m) % m == y;
                } else {
                    eq = rhs == y;
                }
                return kind == Linear ? eq : !eq;
            }
            case DiffSet:
            case StrideBound: {
                const int64_t d = static_cast<int64_t>(v(1)) - static_cast<int64_t>(v(0));
                return std::binary_search(diffs.begin(), diffs.end(), d);
            }
            case PairSet: {
                const bool in = std::binary_search(cells.begin(), cells.end(), std::pair{v(0), v(1)});
                return in != negated;
            }
            case StrideEq:
                return static_cast<int64_t>(v(1)) - static_cast<int64_t>(v(0)) ==
                       static_cast<int64_t>(v(2)) - static_cast<int64_t>(v(1));
            case SameField: {
                const uint64_t f0 = extract_field(g, {row[cols[0]]}, field);
                for (size_t c : cols)
                    if (extract_field(g, {row[c]}, field) != f0) return false;
                return true;
            }
        }
        return false;
    }
};

inline std::string bits_name(const CacheGeometry& g, BitRange r) {
    for (Field f : {Field::bus, Field::word, Field::set, Field::tag, Field::page, Field::offset, Field::line})
        if (g.range(f) == r) return std::string(field_name(f));
    return "bits[" + std::to_string(r.lo) + ".." + std::to_string(r.hi) + "]";
}

inline std::string render_relation(const Relation& r, const std::vector<std::string>& cols, const CacheGeometry& g) {
    auto term = [&](size_t i) {
        const std::string f = bits_name(g, r.bits[i]);
        if (f.rfind("bits", 0) == 0) return cols[r.cols[i]] + "." + f;
        return f + "(" + cols[r.cols[i]] + ")";
    };
    auto list = [](const auto& v) {
        std::string s = "{";
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s + "}";
    };
    std::string s;
    switch (r.kind) {
        case Relation::Constraint: return term(0) + (r.negated ? " not in " : " in ") + list(r.values);
        case Relation::Linear:
        case Relation::ExcludedLinear: {
            s = term(0) + (r.kind == Relation::Linear ? " = " : " != ");
            if (r.a != 1) s += std::to_string(r.a) + "*";
            s += term(1);
            if (r.b > 0) s += " + " + std::to_string(r.b);
            if (r.b < 0) s += " - " + std::to_string(-r.b);
            if (r.modulus) s += " mod " + std::to_string(r.modulus);
            return s;
        }
        case Relation::DiffSet: return term(1) + " - " + term(0) + " in " + list(r.diffs);
        case Relation::PairSet: {
            s = "(" + term(0) + "," + term(1) + (r.negated ? ") not in {" : ") in {");
            for (size_t i = 0; i < r.cells.size(); ++i)
                s += (i ? "," : "") + ("(" + std::to_string(r.cells[i].first) + "," + std::to_string(r.cells[i].second) + ")");
            return s + "}";
        }
        case Relation::StrideEq: return term(1) + " - " + term(0) + " = " + term(2) + " - " + term(1);
        case Relation::StrideBound: {
            const auto& d = r.diffs;
            const int64_t k = d.empty() ? 0 : d.back();
            bool symmetric = !d.empty() && static_cast<int64_t>(d.size()) == 2 * k;
            for (int64_t i = 1; symmetric && i <= k; ++i)
                symmetric = std::binary_search(d.begin(), d.end(), i) && std::binary_search(d.begin(), d.end(), -i);
            if (symmetric) return "1 <= |" + term(1) + " - " + term(0) + "| <= " + std::to_string(k);
            return term(1) + " - " + term(0) + " in " + list(d);
        }
        case Relation::SameField: {
            std::string n(field_name(r.field));
            n[0] = static_cast<char>(std::toupper(n[0]));
            s = "same" + n + "(";
            for (size_t i = 0; i < r.cols.size(); ++i) s += (i ? "," : "") + cols[r.cols[i]];
            return s + ")";
        }
    }
    return "?";
}

// ---------------------------------------------------------------- analysis

struct ValidationResult {
    bool valid = true;
    std::string reason;
    std::optional<std::vector<uint64_t>> witness;  // offending table row or missing combination
};

struct ClassAnalysis {
    std::string label;
    uint64_t rows = 0;
    std::vector<size_t> candidates;
    std::vector<std::pair<size_t, size_t>> candidate_pairs;
    std::vector<Relation> relations;
    std::vector<std::string> notes;
    ValidationResult validation;

    // true when nothing distinguishes this class beyond family invariants
    [[nodiscard]] bool fallback() const {
        return std::all_of(relations.begin(), relations.end(),
                           [](const Relation& r) { return r.kind == Relation::SameField; });
    }
};

struct CandidateSet {
    std::vector<size_t> columns;
    std::vector<size_t> unresolved;
    std::vector<std::pair<size_t, size_t>> pairs;
};

namespace detail {

inline uint64_t local(const BitTable& t, size_t col, uint64_t v) { return t.mutated_range(col).slice(v); }

// Counts of every local value of a column.
inline std::vector<uint64_t> column_counts(const BitTable& t, size_t col) {
    const BitRange r = t.mutated_range(col);
    if (r.width() > 20) throw DegenerateTable("mutated range too wide for exhaustive counting");
    std::vector<uint64_t> c(r.count(), 0);
    for (const auto& row : t.rows) ++c[r.slice(row[col])];
    return c;
}

inline std::vector<uint64_t> pair_counts(const BitTable& t, size_t a, size_t b) {
    const BitRange ra = t.mutated_range(a), rb = t.mutated_range(b);
    std::vector<uint64_t> c(ra.count() * rb.count(), 0);
    for (const auto& row : t.rows) ++c[ra.slice(row[a]) * rb.count() + rb.slice(row[b])];
    return c;
}

inline bool uniform(const std::vector<uint64_t>& c, uint64_t total) {
    if (total % c.size()) return false;
    const uint64_t e = total / c.size();
    return std::all_of(c.begin(), c.end(), [&](uint64_t x) { return x == e; });
}

// sub-ranges of [0, w) ordered by width, then position
inline std::vector<BitRange> subranges(unsigned w) {
    std::vector<BitRange> out;
    for (unsigned width = 1; width <= w; ++width)
        for (unsigned lo = 0; lo + width <= w; ++lo) out.push_back({lo, lo + width - 1});
    return out;
}

inline BitRange shift(BitRange local, BitRange base) { return {base.lo + local.lo, base.lo + local.hi}; }

struct Fit {
    int64_t a, b;
    uint64_t mod;
};

// Exact fits of y = a*x + b over the cells; the fit must reproduce the cell set.
inline std::vector<Fit> linear_fits(const std::set<std::pair<uint64_t, uint64_t>>& cells, uint64_t nx, uint64_t ny,
                                    bool modular) {
    std::vector<Fit> out;
    if (cells.size() < 2) return out;
    std::set<uint64_t> xs;
    for (auto& [x, y] : cells) xs.insert(x);
    if (xs.size() < 2) return out;
    auto exact = [&](int64_t a, int64_t b, uint64_t m) {
        size_t n = 0;
        for (uint64_t x = 0; x < nx; ++x) {
            int64_t y = a * static_cast<int64_t>(x) + b;
            if (m) y = ((y % static_cast<int64_t>(m)) + static_cast<int64_t>(m)) % static_cast<int64_t>(m);
            if (y < 0 || static_cast<uint64_t>(y) >= ny) continue;
            if (!cells.count({x, static_cast<uint64_t>(y)})) return false;
            ++n;
        }
        return n == cells.size();
    };
    const auto p1 = *cells.begin();
    auto it = std::find_if(cells.begin(), cells.end(), [&](auto& c) { return c.first != p1.first; });
    const auto p2 = *it;
    if (!modular) {
        const int64_t dx = static_cast<int64_t>(p2.first) - static_cast<int64_t>(p1.first);
        const int64_t dy = static_cast<int64_t>(p2.second) - static_cast<int64_t>(p1.second);
        if (dy % dx) return out;
        const int64_t a = dy / dx, b = static_cast<int64_t>(p1.second) - a * static_cast<int64_t>(p1.first);
        if (exact(a, b, 0)) out.push_back({a, b, 0});
        return out;
    }
    if (nx != ny) return out;
    const int64_t m = static_cast<int64_t>(nx);
    for (int64_t a = 0; a < m; ++a) {
        const int64_t b = (((static_cast<int64_t>(p1.second) - a * static_cast<int64_t>(p1.first)) % m) + m) % m;
        if (exact(a, b, nx)) out.push_back({a, b, nx});
    }
    return out;
}

}  // namespace detail

inline CandidateSet candidate_selection(const BitTable& t) {
    if (t.rows.empty()) throw DegenerateTable("empty bit table");
    CandidateSet cs;
    const size_t n = t.columns.size();
    for (size_t c = 0; c < n; ++c) {
        const auto counts = detail::column_counts(t, c);
        if (detail::uniform(counts, t.count())) continue;
        cs.columns.push_back(c);
        std::set<uint64_t> nz;
        for (uint64_t x : counts)
            if (x) nz.insert(x);
        const bool has_zero = std::count(counts.begin(), counts.end(), 0) > 0;
        if (!(has_zero && nz.size() == 1)) cs.unresolved.push_back(c);
    }
    std::vector<size_t> pool;
    if (cs.columns.empty()) {
        pool.resize(n);
        std::iota(pool.begin(), pool.end(), 0);
    } else {
        pool = cs.unresolved;
    }
    for (size_t i = 0; i < pool.size(); ++i)
        for (size_t j = i + 1; j < pool.size(); ++j) {
            const auto counts = detail::pair_counts(t, pool[i], pool[j]);
            if (!detail::uniform(counts, t.count())) cs.pairs.push_back({pool[i], pool[j]});
        }
    return cs;
}

namespace detail {

inline std::optional<Relation> column_constraint(const BitTable& t, size_t col) {
    const BitRange base = t.mutated_range(col);
    const auto counts = column_counts(t, col);
    std::set<uint64_t> allowed;
    for (uint64_t v = 0; v < counts.size(); ++v)
        if (counts[v]) allowed.insert(v);
    if (allowed.size() == counts.size()) return std::nullopt;
    for (BitRange sub : subranges(base.width())) {
        std::set<uint64_t> proj;
        for (uint64_t v : allowed) proj.insert(sub.slice(v));
        bool exact = true;
        for (uint64_t v = 0; v < counts.size() && exact; ++v) exact = (proj.count(sub.slice(v)) > 0) == (allowed.count(v) > 0);
        if (!exact) continue;
        Relation r;
        r.kind = Relation::Constraint;
        r.cols = {col};
        r.bits = {shift(sub, base)};
        std::vector<uint64_t> in(proj.begin(), proj.end()), out;
        for (uint64_t v = 0; v < sub.count(); ++v)
            if (!proj.count(v)) out.push_back(v);
        r.negated = out.size() < in.size();
        r.values = r.negated ? out : in;
        return r;
    }
    return std::nullopt;
}

inline std::optional<Relation> pair_relation(const BitTable& t, size_t ca, size_t cb) {
    const BitRange ba = t.mutated_range(ca), bb = t.mutated_range(cb);
    const auto counts = pair_counts(t, ca, cb);
    const uint64_t nb = bb.count();
    std::set<std::pair<uint64_t, uint64_t>> allowed;
    for (uint64_t i = 0; i < counts.size(); ++i)
        if (counts[i]) allowed.insert({i / nb, i % nb});
    if (allowed.size() == counts.size()) return std::nullopt;

    std::vector<std::pair<BitRange, BitRange>> subs;
    for (BitRange sa : subranges(ba.width()))
        for (BitRange sb : subranges(bb.width())) subs.push_back({sa, sb});
    std::stable_sort(subs.begin(), subs.end(),
                     [](auto& p, auto& q) { return p.first.width() + p.second.width() < q.first.width() + q.second.width(); });
    for (auto [sa, sb] : subs) {
        std::set<std::pair<uint64_t, uint64_t>> proj;
        for (auto [x, y] : allowed) proj.insert({sa.slice(x), sb.slice(y)});
        bool exact = true;
        for (uint64_t i = 0; i < counts.size() && exact; ++i) {
            const uint64_t x = i / nb, y = i % nb;
            exact = (proj.count({sa.slice(x), sb.slice(y)}) > 0) == (counts[i] > 0);
        }
        if (!exact) continue;
        const uint64_t nx = sa.count(), ny = sb.count();
        std::set<std::pair<uint64_t, uint64_t>> excluded;
        for (uint64_t x = 0; x < nx; ++x)
            for (uint64_t y = 0; y < ny; ++y)
                if (!proj.count({x, y})) excluded.insert({x, y});
        const BitRange ra = shift(sa, ba), rb = shift(sb, bb);

        // first column as a function of the second, then the other way round
        auto flip = [](const std::set<std::pair<uint64_t, uint64_t>>& s) {
            std::set<std::pair<uint64_t, uint64_t>> o;
            for (auto [x, y] : s) o.insert({y, x});
            return o;
        };
        auto try_fits = [&](const std::set<std::pair<uint64_t, uint64_t>>& cells, Relation::Kind kind)
            -> std::optional<Relation> {
            struct Orient {
                std::set<std::pair<uint64_t, uint64_t>> cells;  // (x, y) with y the dependent column
                size_t y, x;
                BitRange ry, rx;
                uint64_t nx, ny;
            };
            const Orient orients[2] = {{flip(cells), ca, cb, ra, rb, ny, nx}, {cells, cb, ca, rb, ra, nx, ny}};
            for (bool modular : {false, true})
                for (const auto& o : orients) {
                    auto fits = linear_fits(o.cells, o.nx, o.ny, modular);
                    if (fits.size() != 1) continue;
                    Relation r;
                    r.kind = kind;
                    r.cols = {o.y, o.x};
                    r.bits = {o.ry, o.rx};
                    r.a = fits[0].a;
                    r.b = fits[0].b;
                    r.modulus = fits[0].mod;
                    return r;
                }
            return std::nullopt;
        };
        if (auto r = try_fits(proj, Relation::Linear)) return r;
        if (auto r = try_fits(excluded, Relation::ExcludedLinear)) return r;
        // difference set with a = 1
        {
            std::set<int64_t> ds;
            for (auto [x, y] : proj) ds.insert(static_cast<int64_t>(y) - static_cast<int64_t>(x));
            bool exact_ds = nx == ny;
            for (uint64_t x = 0; x < nx && exact_ds; ++x)
                for (uint64_t y = 0; y < ny && exact_ds; ++y)
                    exact_ds = (ds.count(static_cast<int64_t>(y) - static_cast<int64_t>(x)) > 0) == (proj.count({x, y}) > 0);
            if (exact_ds) {
                Relation r;
                r.kind = Relation::DiffSet;
                r.cols = {ca, cb};
                r.bits = {ra, rb};
                r.diffs.assign(ds.begin(), ds.end());
                return r;
            }
        }
        Relation r;
        r.kind = Relation::PairSet;
        r.cols = {ca, cb};
        r.bits = {ra, rb};
        r.negated = excluded.size() < proj.size();
        const auto& src = r.negated ? excluded : proj;
        r.cells.assign(src.begin(), src.end());
        return r;
    }
    return std::nullopt;
}

// Each column's own values in the product space, as local mutated values.
struct ProductSpace {
    std::vector<BitRange> ranges;
    std::vector<uint64_t> fixed;  // an arbitrary row used for the non-mutated bits
    uint64_t size = 1;

    [[nodiscard]] std::vector<uint64_t> point(uint64_t idx) const {
        std::vector<uint64_t> row(ranges.size());
        for (size_t c = ranges.size(); c-- > 0;) {
            const uint64_t n = ranges[c].count();
            const uint64_t v = idx % n;
            idx /= n;
            row[c] = (fixed[c] & ~(ranges[c].mask() << ranges[c].lo)) | (v << ranges[c].lo);
        }
        return row;
    }
};

inline ProductSpace product_space(const BitTable& t) {
    ProductSpace p;
    for (size_t c = 0; c < t.columns.size(); ++c) {
        p.ranges.push_back(t.mutated_range(c));
        p.fixed.push_back(t.rows.empty() ? 0 : t.rows[0][c]);
        if (p.size > (uint64_t{1} << 24) / p.ranges.back().count())
            throw DegenerateTable("product space too large for exhaustive checks");
        p.size *= p.ranges.back().count();
    }
    return p;
}

inline bool all_hold(const std::vector<Relation>& rs, const std::vector<uint64_t>& row, const CacheGeometry& g,
                     std::optional<size_t> skip = std::nullopt) {
    for (size_t i = 0; i < rs.size(); ++i)
        if ((!skip || *skip != i) && !rs[i].holds(row, g)) return false;
    return true;
}

inline std::vector<uint64_t> key_of(const BitTable& t, const std::vector<uint64_t>& row) {
    std::vector<uint64_t> k;
    for (size_t c = 0; c < row.size(); ++c) k.push_back(t.mutated_range(c).slice(row[c]));
    return k;
}

}  // namespace detail

// Extracts relations for one class table. Columns flagged with zero-count
// values and otherwise uniform counts yield constraints; pairs yield linear,
// difference or explicit relations; equal-stride triples are detected among
// the remaining columns; redundant relations are pruned against the product
// space of mutated bits.
inline std::vector<Relation> extract_relations(const BitTable& t, const CandidateSet& cs,
                                               const std::vector<Field>& invariant_fields = {},
                                               std::vector<std::string>* notes = nullptr) {
    std::vector<Relation> rel;
    for (size_t c : cs.columns) {
        if (std::find(cs.unresolved.begin(), cs.unresolved.end(), c) != cs.unresolved.end()) continue;
        if (auto r = detail::column_constraint(t, c)) rel.push_back(*r);
    }
    for (auto [a, b] : cs.pairs)
        if (auto r = detail::pair_relation(t, a, b)) rel.push_back(*r);
        else if (notes) notes->push_back("no consistent relation for (" + t.columns[a] + "," + t.columns[b] + ")");

    // equal strides over columns left unexplained by single-column constraints
    std::vector<size_t> pool;
    for (auto [a, b] : cs.pairs) pool.push_back(a), pool.push_back(b);
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    for (size_t i = 0; i + 2 < pool.size(); ++i)
        for (size_t j = i + 1; j + 1 < pool.size(); ++j)
            for (size_t k = j + 1; k < pool.size(); ++k) {
                const size_t a = pool[i], b = pool[j], c = pool[k];
                const BitRange ra = t.mutated_range(a), rb = t.mutated_range(b), rc = t.mutated_range(c);
                std::set<int64_t> ds;
                bool eq = true;
                for (const auto& row : t.rows) {
                    const int64_t d1 = static_cast<int64_t>(rb.slice(row[b])) - static_cast<int64_t>(ra.slice(row[a]));
                    const int64_t d2 = static_cast<int64_t>(rc.slice(row[c])) - static_cast<int64_t>(rb.slice(row[b]));
                    if (d1 != d2) {
                        eq = false;
                        break;
                    }
                    ds.insert(d1);
                }
                if (!eq || ds.size() < 2) continue;
                Relation se;
                se.kind = Relation::StrideEq;
                se.cols = {a, b, c};
                se.bits = {ra, rb, rc};
                rel.push_back(se);
                Relation bd;
                bd.kind = Relation::StrideBound;
                bd.cols = {a, b};
                bd.bits = {ra, rb};
                bd.diffs.assign(ds.begin(), ds.end());
                rel.push_back(bd);
            }

    // prune relations implied by the others, explicit sets first
    if (rel.size() > 1) {
        const auto space = detail::product_space(t);
        std::vector<size_t> order(rel.size());
        std::iota(order.begin(), order.end(), 0);
        auto weight = [&](size_t i) {
            switch (rel[i].kind) {
                case Relation::PairSet: return 0;
                case Relation::DiffSet: return 1;
                default: return 2;
            }
        };
        std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return weight(x) < weight(y); });
        std::vector<bool> dropped(rel.size(), false);
        for (size_t i : order) {
            std::vector<Relation> others;
            for (size_t j = 0; j < rel.size(); ++j)
                if (j != i && !dropped[j]) others.push_back(rel[j]);
            bool implied = true;
            for (uint64_t p = 0; p < space.size && implied; ++p) {
                const auto row = space.point(p);
                if (detail::all_hold(others, row, t.geom) && !rel[i].holds(row, t.geom)) implied = false;
            }
            if (implied) dropped[i] = true;
        }
        std::vector<Relation> kept;
        for (size_t i = 0; i < rel.size(); ++i)
            if (!dropped[i]) kept.push_back(rel[i]);
        rel = std::move(kept);
    }

    // fields identical across all columns in every row of the table and not
    // touched by the mutation
    if (!rel.empty() && t.columns.size() >= 2)
        for (Field f : invariant_fields) {
            bool untouched = true;
            for (size_t c = 0; c < t.columns.size(); ++c)
                untouched = untouched && ((t.geom.range(f).mask() << t.geom.range(f).lo) & t.mutated[c]) == 0;
            if (!untouched) continue;
            Relation r;
            r.kind = Relation::SameField;
            r.field = f;
            for (size_t c = 0; c < t.columns.size(); ++c) {
                r.cols.push_back(c);
                r.bits.push_back(t.geom.range(f));
            }
            if (std::all_of(t.rows.begin(), t.rows.end(), [&](auto& row) { return r.holds(row, t.geom); }))
                rel.push_back(r);
        }
    return rel;
}

// Checks that every row satisfies the relations and that every combination
// of mutated bits allowed by them occurs in the table.
inline ValidationResult validate(const BitTable& t, const std::vector<Relation>& rs) {
    for (const auto& row : t.rows)
        for (const auto& r : rs)
            if (!r.holds(row, t.geom))
                return {false, "row violates " + render_relation(r, t.columns, t.geom), row};
    if (t.rows.empty()) return {};
    const auto space = detail::product_space(t);
    std::set<std::vector<uint64_t>> present;
    for (const auto& row : t.rows) present.insert(detail::key_of(t, row));
    for (uint64_t p = 0; p < space.size; ++p) {
        const auto row = space.point(p);
        if (detail::all_hold(rs, row, t.geom) && !present.count(detail::key_of(t, row)))
            return {false, "allowed combination missing from the table", row};
    }
    return {};
}

inline ValidationResult validate(const BitTable& t, const Relation& r) { return validate(t, std::vector<Relation>{r}); }

// A relation-free class stands for "everything else": each combination missing
// from its table has to be claimed by one of the specific classes.
inline ValidationResult validate_complement(const BitTable& t, const std::vector<const ClassAnalysis*>& specific) {
    if (t.rows.empty()) return {};
    const auto space = detail::product_space(t);
    std::set<std::vector<uint64_t>> present;
    for (const auto& row : t.rows) present.insert(detail::key_of(t, row));
    for (uint64_t p = 0; p < space.size; ++p) {
        const auto row = space.point(p);
        if (present.count(detail::key_of(t, row))) continue;
        const bool claimed = std::any_of(specific.begin(), specific.end(), [&](const ClassAnalysis* c) {
            return detail::all_hold(c->relations, row, t.geom);
        });
        if (!claimed) return {false, "combination missing from the table and claimed by no other class", row};
    }
    return {};
}

inline ClassAnalysis analyze_class(const BitTable& t, const std::string& label,
                                   const std::vector<Field>& invariant_fields = {}) {
    ClassAnalysis a;
    a.label = label;
    a.rows = t.count();
    if (t.rows.empty()) return a;
    const auto cs = candidate_selection(t);
    a.candidates = cs.columns;
    a.candidate_pairs = cs.pairs;
    a.relations = extract_relations(t, cs, invariant_fields, &a.notes);
    if (!cs.columns.empty() || !cs.pairs.empty())
        if (std::all_of(a.relations.begin(), a.relations.end(), [](auto& r) { return r.kind == Relation::SameField; }))
            a.notes.push_back("inconclusive: candidates found but no consistent relation");
    a.validation = validate(t, a.relations);
    return a;
}

// Predicts a class for a row from the extracted relations; fallback classes
// take rows no specific class claims. Returns nullopt when ambiguous.
inline std::optional<std::string> predict(const std::vector<ClassAnalysis>& classes, const std::vector<uint64_t>& row,
                                          const CacheGeometry& g) {
    std::vector<const ClassAnalysis*> hits, fallbacks;
    for (const auto& c : classes) {
        if (c.fallback()) {
            fallbacks.push_back(&c);
            continue;
        }
        if (detail::all_hold(c.relations, row, g)) hits.push_back(&c);
    }
    if (hits.size() == 1) return hits[0]->label;
    if (hits.empty() && fallbacks.size() == 1) return fallbacks[0]->label;
    return std::nullopt;
}

}  // namespace plumber
