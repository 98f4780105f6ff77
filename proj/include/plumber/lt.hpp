#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "analyze.hpp"
#include "core_types.hpp"
#include "errors.hpp"

namespace plumber {

// ---------------------------------------------------------------- predicates

struct Term {
    enum Kind { FieldOf, BitsOf, Const, Count, Add, Sub, Mul, Mod, Abs } kind = Const;
    std::string load;  // FieldOf, BitsOf
    Field field = Field::set;
    BitRange bits;
    int64_t value = 0;  // Const, and the modulus for Mod
    std::string sym;    // Count
    std::vector<Term> args;
    bool operator==(const Term&) const = default;

    static Term field_of(Field f, std::string l) {
        Term t;
        t.kind = FieldOf;
        t.field = f;
        t.load = std::move(l);
        return t;
    }
    static Term bits_of(std::string l, BitRange r) {
        Term t;
        t.kind = BitsOf;
        t.load = std::move(l);
        t.bits = r;
        return t;
    }
    static Term constant(int64_t v) {
        Term t;
        t.kind = Const;
        t.value = v;
        return t;
    }
    static Term count(std::string s) {
        Term t;
        t.kind = Count;
        t.sym = std::move(s);
        return t;
    }
    static Term binary(Kind k, Term a, Term b) {
        Term t;
        t.kind = k;
        t.args = {std::move(a), std::move(b)};
        return t;
    }
    static Term mod(Term a, int64_t m) {
        Term t;
        t.kind = Mod;
        t.value = m;
        t.args = {std::move(a)};
        return t;
    }
    static Term abs(Term a) {
        Term t;
        t.kind = Abs;
        t.args = {std::move(a)};
        return t;
    }
};

struct Atom {
    enum Op { Eq, Ne, Le, Lt, Ge, Gt, InRange, InSet, NotIn, PairIn, PairNotIn } op = Eq;
    Term lhs, rhs;
    int64_t lo = 0, hi = 0;
    std::vector<int64_t> values;
    std::vector<std::pair<int64_t, int64_t>> cells;
    bool operator==(const Atom&) const = default;
};

using Conjunction = std::vector<Atom>;  // empty means true

using AddressBinding = std::map<std::string, PhysAddr>;
using CountBinding = std::map<std::string, int64_t>;

inline int64_t eval_term(const Term& t, const CacheGeometry& g, const AddressBinding& b, const CountBinding& c) {
    auto addr = [&](const std::string& l) {
        auto it = b.find(l);
        if (it == b.end()) throw MissingBinding("load '" + l + "' is not bound");
        return it->second;
    };
    switch (t.kind) {
        case Term::FieldOf: return static_cast<int64_t>(extract_field(g, addr(t.load), t.field));
        case Term::BitsOf: return static_cast<int64_t>(t.bits.slice(addr(t.load).value));
        case Term::Const: return t.value;
        case Term::Count: {
            auto it = c.find(t.sym);
            if (it == c.end()) throw MissingBinding("count '" + t.sym + "' is not bound");
            return it->second;
        }
        case Term::Add: return eval_term(t.args[0], g, b, c) + eval_term(t.args[1], g, b, c);
        case Term::Sub: return eval_term(t.args[0], g, b, c) - eval_term(t.args[1], g, b, c);
        case Term::Mul: return eval_term(t.args[0], g, b, c) * eval_term(t.args[1], g, b, c);
        case Term::Mod: {
            const int64_t v = eval_term(t.args[0], g, b, c);
            return ((v % t.value) + t.value) % t.value;
        }
        case Term::Abs: {
            const int64_t v = eval_term(t.args[0], g, b, c);
            return v < 0 ? -v : v;
        }
    }
    return 0;
}

inline bool eval_atom(const Atom& a, const CacheGeometry& g, const AddressBinding& b, const CountBinding& c) {
    const int64_t l = eval_term(a.lhs, g, b, c);
    switch (a.op) {
        case Atom::Eq: return l == eval_term(a.rhs, g, b, c);
        case Atom::Ne: return l != eval_term(a.rhs, g, b, c);
        case Atom::Le: return l <= eval_term(a.rhs, g, b, c);
        case Atom::Lt: return l < eval_term(a.rhs, g, b, c);
        case Atom::Ge: return l >= eval_term(a.rhs, g, b, c);
        case Atom::Gt: return l > eval_term(a.rhs, g, b, c);
        case Atom::InRange: return l >= a.lo && l <= a.hi;
        case Atom::InSet: return std::find(a.values.begin(), a.values.end(), l) != a.values.end();
        case Atom::NotIn: return std::find(a.values.begin(), a.values.end(), l) == a.values.end();
        case Atom::PairIn:
        case Atom::PairNotIn: {
            const std::pair<int64_t, int64_t> p{l, eval_term(a.rhs, g, b, c)};
            const bool in = std::find(a.cells.begin(), a.cells.end(), p) != a.cells.end();
            return a.op == Atom::PairIn ? in : !in;
        }
    }
    return false;
}

inline bool eval_predicate(const Conjunction& p, const CacheGeometry& g, const AddressBinding& b,
                           const CountBinding& c = {}) {
    for (const auto& a : p)
        if (!eval_atom(a, g, b, c)) return false;
    return true;
}

inline void collect_symbols(const Term& t, std::set<std::string>& loads, std::set<std::string>& counts) {
    if (t.kind == Term::FieldOf || t.kind == Term::BitsOf) loads.insert(t.load);
    if (t.kind == Term::Count) counts.insert(t.sym);
    for (const auto& a : t.args) collect_symbols(a, loads, counts);
}

inline void collect_symbols(const Conjunction& p, std::set<std::string>& loads, std::set<std::string>& counts) {
    for (const auto& a : p) {
        collect_symbols(a.lhs, loads, counts);
        if (a.op <= Atom::Gt || a.op == Atom::PairIn || a.op == Atom::PairNotIn) collect_symbols(a.rhs, loads, counts);
    }
}

// ---------------------------------------------------------------- text form

inline std::string render_term(const Term& t, bool top = true) {
    switch (t.kind) {
        case Term::FieldOf: return std::string(field_name(t.field)) + "(" + t.load + ")";
        case Term::BitsOf:
            return "bits(" + t.load + "," + std::to_string(t.bits.lo) + "," + std::to_string(t.bits.hi) + ")";
        case Term::Const: return std::to_string(t.value);
        case Term::Count: return t.sym;
        case Term::Add:
        case Term::Sub: {
            std::string s = render_term(t.args[0], false) + (t.kind == Term::Add ? " + " : " - ") + render_term(t.args[1], false);
            return top ? s : "(" + s + ")";
        }
        case Term::Mul: return render_term(t.args[0], false) + "*" + render_term(t.args[1], false);
        case Term::Mod: {
            std::string s = render_term(t.args[0], true) + " mod " + std::to_string(t.value);
            return top ? s : "(" + s + ")";
        }
        case Term::Abs: return "|" + render_term(t.args[0], true) + "|";
    }
    return "?";
}

inline std::string render_atom(const Atom& a) {
    auto list = [](const std::vector<int64_t>& v) {
        std::string s = "{";
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s + "}";
    };
    static const char* ops[] = {" = ", " != ", " <= ", " < ", " >= ", " > "};
    if (a.op <= Atom::Gt) return render_term(a.lhs) + ops[a.op] + render_term(a.rhs);
    if (a.op == Atom::InRange)
        return render_term(a.lhs) + " in [" + std::to_string(a.lo) + "," + std::to_string(a.hi) + "]";
    if (a.op == Atom::InSet) return render_term(a.lhs) + " in " + list(a.values);
    if (a.op == Atom::NotIn) return render_term(a.lhs) + " notin " + list(a.values);
    std::string s = "(" + render_term(a.lhs) + "," + render_term(a.rhs) + (a.op == Atom::PairIn ? ") in {" : ") notin {");
    for (size_t i = 0; i < a.cells.size(); ++i)
        s += (i ? "," : "") + ("(" + std::to_string(a.cells[i].first) + "," + std::to_string(a.cells[i].second) + ")");
    return s + "}";
}

inline std::string render_predicate(const Conjunction& p) {
    if (p.empty()) return "true";
    std::string s;
    for (size_t i = 0; i < p.size(); ++i) s += (i ? " && " : "") + render_atom(p[i]);
    return s;
}

namespace detail {

class PredParser {
public:
    explicit PredParser(std::string_view s) : s_(s) {}

    Conjunction parse() {
        Conjunction out;
        skip();
        if (eat("true")) {
            expect_end();
            return out;
        }
        out.push_back(atom());
        while (eat("&&")) out.push_back(atom());
        expect_end();
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(1, static_cast<int>(pos_ + 1), what); }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool peek(std::string_view w) {
        skip();
        return s_.substr(pos_, w.size()) == w;
    }
    bool eat(std::string_view w) {
        if (!peek(w)) return false;
        // keywords must not run into an identifier
        if (std::isalpha(static_cast<unsigned char>(w.back())) && pos_ + w.size() < s_.size() &&
            (std::isalnum(static_cast<unsigned char>(s_[pos_ + w.size()])) || s_[pos_ + w.size()] == '_'))
            return false;
        pos_ += w.size();
        return true;
    }
    void need(std::string_view w) {
        if (!eat(w)) fail("'" + std::string(w) + "'");
    }
    void expect_end() {
        skip();
        if (pos_ != s_.size()) fail("end of predicate");
    }
    int64_t integer() {
        skip();
        bool neg = false;
        if (pos_ < s_.size() && s_[pos_] == '-') neg = true, ++pos_;
        if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_]))) fail("integer");
        int64_t v = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) v = v * 10 + (s_[pos_++] - '0');
        return neg ? -v : v;
    }
    std::string ident() {
        skip();
        size_t b = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (b == pos_ || std::isdigit(static_cast<unsigned char>(s_[b]))) fail("identifier");
        return std::string(s_.substr(b, pos_ - b));
    }
    std::vector<int64_t> int_set() {
        need("{");
        std::vector<int64_t> v;
        if (!eat("}")) {
            v.push_back(integer());
            while (eat(",")) v.push_back(integer());
            need("}");
        }
        return v;
    }

    Atom atom() {
        Atom a;
        if (peek("(")) {
            // a parenthesised pair, or a parenthesised expression
            const size_t save = pos_;
            eat("(");
            Term l = expr();
            if (eat(",")) {
                a.lhs = l;
                a.rhs = expr();
                need(")");
                if (eat("notin")) a.op = Atom::PairNotIn;
                else {
                    need("in");
                    a.op = Atom::PairIn;
                }
                need("{");
                if (!eat("}")) {
                    do {
                        need("(");
                        int64_t x = integer();
                        need(",");
                        int64_t y = integer();
                        need(")");
                        a.cells.push_back({x, y});
                    } while (eat(","));
                    need("}");
                }
                return a;
            }
            pos_ = save;
        }
        a.lhs = expr();
        if (eat("!=")) a.op = Atom::Ne, a.rhs = expr();
        else if (eat("<=")) a.op = Atom::Le, a.rhs = expr();
        else if (eat(">=")) a.op = Atom::Ge, a.rhs = expr();
        else if (eat("<")) a.op = Atom::Lt, a.rhs = expr();
        else if (eat(">")) a.op = Atom::Gt, a.rhs = expr();
        else if (eat("=")) a.op = Atom::Eq, a.rhs = expr();
        else if (eat("notin")) a.op = Atom::NotIn, a.values = int_set();
        else if (eat("in")) {
            if (eat("[")) {
                a.op = Atom::InRange;
                a.lo = integer();
                need(",");
                a.hi = integer();
                need("]");
            } else {
                a.op = Atom::InSet;
                a.values = int_set();
            }
        } else {
            fail("comparison");
        }
        return a;
    }

    Term expr() {
        Term t = additive();
        if (eat("mod")) t = Term::mod(t, integer());
        return t;
    }
    Term additive() {
        Term t = product();
        for (;;) {
            if (eat("+")) t = Term::binary(Term::Add, t, product());
            else if (peek("-") ) {
                eat("-");
                t = Term::binary(Term::Sub, t, product());
            } else
                return t;
        }
    }
    Term product() {
        Term t = factor();
        while (eat("*")) t = Term::binary(Term::Mul, t, factor());
        return t;
    }
    Term factor() {
        skip();
        if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-'))
            return Term::constant(integer());
        if (eat("|")) {
            Term t = expr();
            need("|");
            return Term::abs(t);
        }
        if (eat("(")) {
            Term t = expr();
            need(")");
            return t;
        }
        const std::string id = ident();
        if (id == "bits") {
            need("(");
            std::string l = ident();
            need(",");
            const int64_t lo = integer();
            need(",");
            const int64_t hi = integer();
            need(")");
            if (lo < 0 || hi < lo || hi > 63) fail("bit range");
            return Term::bits_of(l, {static_cast<unsigned>(lo), static_cast<unsigned>(hi)});
        }
        if (auto f = field_from_name(id); f && peek("(")) {
            need("(");
            std::string l = ident();
            need(")");
            return Term::field_of(*f, l);
        }
        return Term::count(id);
    }

    std::string_view s_;
    size_t pos_ = 0;
};

}  // namespace detail

inline Conjunction parse_predicate(std::string_view s) { return detail::PredParser(s).parse(); }

// ---------------------------------------------------------------- relations to predicates

inline Term relation_term(const CacheGeometry& g, BitRange r, const std::string& load) {
    for (Field f : {Field::bus, Field::word, Field::set, Field::tag, Field::page, Field::offset, Field::line})
        if (g.range(f) == r) return Term::field_of(f, load);
    return Term::bits_of(load, r);
}

inline Conjunction relation_to_predicate(const Relation& r, const std::vector<std::string>& loads,
                                         const CacheGeometry& g) {
    auto t = [&](size_t i) { return relation_term(g, r.bits[i], loads.at(r.cols[i])); };
    Conjunction out;
    Atom a;
    switch (r.kind) {
        case Relation::Constraint:
            a.op = r.negated ? Atom::NotIn : Atom::InSet;
            a.lhs = t(0);
            for (uint64_t v : r.values) a.values.push_back(static_cast<int64_t>(v));
            out.push_back(a);
            break;
        case Relation::Linear:
        case Relation::ExcludedLinear: {
            a.op = r.kind == Relation::Linear ? Atom::Eq : Atom::Ne;
            a.lhs = t(0);
            Term rhs = t(1);
            if (r.a != 1) rhs = Term::binary(Term::Mul, Term::constant(r.a), rhs);
            if (r.b > 0) rhs = Term::binary(Term::Add, rhs, Term::constant(r.b));
            if (r.b < 0) rhs = Term::binary(Term::Sub, rhs, Term::constant(-r.b));
            if (r.modulus) rhs = Term::mod(rhs, static_cast<int64_t>(r.modulus));
            a.rhs = rhs;
            out.push_back(a);
            break;
        }
        case Relation::DiffSet:
            a.op = Atom::InSet;
            a.lhs = Term::binary(Term::Sub, t(1), t(0));
            a.values = r.diffs;
            out.push_back(a);
            break;
        case Relation::PairSet:
            a.op = r.negated ? Atom::PairNotIn : Atom::PairIn;
            a.lhs = t(0);
            a.rhs = t(1);
            for (auto [x, y] : r.cells) a.cells.push_back({static_cast<int64_t>(x), static_cast<int64_t>(y)});
            out.push_back(a);
            break;
        case Relation::StrideEq:
            a.op = Atom::Eq;
            a.lhs = Term::binary(Term::Sub, t(1), t(0));
            a.rhs = Term::binary(Term::Sub, t(2), t(1));
            out.push_back(a);
            break;
        case Relation::StrideBound: {
            const auto& d = r.diffs;
            const int64_t k = d.empty() ? 0 : d.back();
            bool symmetric = !d.empty() && static_cast<int64_t>(d.size()) == 2 * k;
            for (int64_t i = 1; symmetric && i <= k; ++i)
                symmetric = std::binary_search(d.begin(), d.end(), i) && std::binary_search(d.begin(), d.end(), -i);
            if (symmetric) {
                a.op = Atom::InRange;
                a.lhs = Term::abs(Term::binary(Term::Sub, t(1), t(0)));
                a.lo = 1;
                a.hi = k;
            } else {
                a.op = Atom::InSet;
                a.lhs = Term::binary(Term::Sub, t(1), t(0));
                a.values = d;
            }
            out.push_back(a);
            break;
        }
        case Relation::SameField:
            for (size_t i = 1; i < r.cols.size(); ++i) {
                Atom e;
                e.op = Atom::Eq;
                e.lhs = Term::field_of(r.field, loads.at(r.cols[i - 1]));
                e.rhs = Term::field_of(r.field, loads.at(r.cols[i]));
                out.push_back(e);
            }
            break;
    }
    return out;
}

// ---------------------------------------------------------------- templates

struct TemplateInstr {
    enum Kind { Load, Wildcard, Arith } kind = Load;
    std::string symbol;  // Load: operand id; Arith: count symbol
    unsigned min = 0, max = 0;  // Wildcard
    bool operator==(const TemplateInstr&) const = default;
};

struct CountRange {
    std::string symbol;
    int64_t lo = 0, hi = 0;
    bool operator==(const CountRange&) const = default;
};

struct LtMetadata {
    CacheGeometry geom;
    std::vector<CountRange> tested;
    std::vector<std::string> provenance;
    bool operator==(const LtMetadata&) const = default;
};

struct BehaviorRules {
    std::string behavior;
    std::vector<Conjunction> conjunctions;
    bool operator==(const BehaviorRules&) const = default;
};

struct LeakageTemplate {
    std::vector<TemplateInstr> code_template;
    std::vector<std::string> behaviors;
    std::vector<BehaviorRules> relation_map;  // evaluation order: entries in order, conjunctions in order
    std::vector<std::string> inconclusive;
    LtMetadata metadata;
    bool operator==(const LeakageTemplate&) const = default;

    [[nodiscard]] std::vector<std::string> load_symbols() const {
        std::vector<std::string> out;
        for (const auto& i : code_template)
            if (i.kind == TemplateInstr::Load) out.push_back(i.symbol);
        return out;
    }
};

inline constexpr const char* undecidable = "undecidable";

inline void check_closed(const LeakageTemplate& lt) {
    std::set<std::string> loads, counts;
    for (const auto& i : lt.code_template)
        (i.kind == TemplateInstr::Load ? loads : counts).insert(i.symbol);
    for (const auto& br : lt.relation_map)
        for (const auto& c : br.conjunctions) {
            std::set<std::string> l, n;
            collect_symbols(c, l, n);
            for (const auto& s : l)
                if (!loads.count(s)) throw UnboundSymbol("load '" + s + "' is not in the code template");
            for (const auto& s : n)
                if (!counts.count(s)) throw UnboundSymbol("count '" + s + "' is not in the code template");
        }
}

// Evaluates the relation map in order; counts outside the tested ranges give
// "undecidable" rather than a guess. A binding that matches no rule is also
// undecidable.
inline std::string evaluate_lt(const LeakageTemplate& lt, const AddressBinding& b, const CountBinding& c = {}) {
    for (const auto& r : lt.metadata.tested) {
        auto it = c.find(r.symbol);
        if (it == c.end()) throw MissingBinding("count '" + r.symbol + "' is not bound");
        if (it->second < r.lo || it->second > r.hi) return undecidable;
    }
    for (const auto& br : lt.relation_map)
        for (const auto& conj : br.conjunctions)
            if (eval_predicate(conj, lt.metadata.geom, b, c)) return br.behavior;
    return undecidable;
}

// Groups validated class relations into a template; classes with relations
// come first (more atoms first), a single relation-free class becomes the
// catch-all, and any other relation-free class is marked inconclusive.
inline LeakageTemplate assemble_lt(std::vector<TemplateInstr> code, const std::vector<ClassAnalysis>& classes,
                                   LtMetadata meta, const std::vector<std::string>& column_loads = {}) {
    LeakageTemplate lt;
    lt.code_template = std::move(code);
    lt.metadata = std::move(meta);
    std::vector<std::string> loads = column_loads.empty() ? lt.load_symbols() : column_loads;
    std::vector<std::pair<size_t, BehaviorRules>> specific;
    std::vector<std::string> empty;
    for (const auto& c : classes) {
        if (c.label == unstable_label) continue;
        lt.behaviors.push_back(c.label);
        if (!c.validation.valid) {
            lt.inconclusive.push_back(c.label);
            continue;
        }
        Conjunction conj;
        for (const auto& r : c.relations) {
            if (r.cols.empty()) continue;
            for (size_t col : r.cols)
                if (col >= loads.size()) throw UnboundSymbol("relation column " + std::to_string(col) + " has no load symbol");
            auto part = relation_to_predicate(r, loads, lt.metadata.geom);
            conj.insert(conj.end(), part.begin(), part.end());
        }
        if (c.fallback()) {
            empty.push_back(c.label);
            continue;
        }
        specific.push_back({conj.size(), {c.label, {conj}}});
    }
    std::stable_sort(specific.begin(), specific.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (auto& [n, br] : specific) lt.relation_map.push_back(std::move(br));
    if (empty.size() == 1 && !specific.empty()) {
        lt.relation_map.push_back({empty[0], {Conjunction{}}});
    } else {
        for (auto& e : empty) lt.inconclusive.push_back(e);
    }
    check_closed(lt);
    return lt;
}

// ---------------------------------------------------------------- serialization

inline constexpr int lt_schema_version = 1;

namespace detail {

using nlohmann::json;

inline json geom_to_json(const CacheGeometry& g) {
    return json{{"line_size_bytes", g.line_size_bytes}, {"num_sets", g.num_sets},
                {"associativity", g.associativity},     {"bus_size_bytes", g.bus_size_bytes},
                {"page_size_bytes", g.page_size_bytes}, {"addr_bits", g.addr_bits}};
}

inline json term_to_json(const Term& t) {
    switch (t.kind) {
        case Term::FieldOf: return json{{"field", std::string(field_name(t.field))}, {"load", t.load}};
        case Term::BitsOf: return json{{"bits", {t.bits.lo, t.bits.hi}}, {"load", t.load}};
        case Term::Const: return json{{"const", t.value}};
        case Term::Count: return json{{"count", t.sym}};
        case Term::Add: return json{{"op", "+"}, {"args", {term_to_json(t.args[0]), term_to_json(t.args[1])}}};
        case Term::Sub: return json{{"op", "-"}, {"args", {term_to_json(t.args[0]), term_to_json(t.args[1])}}};
        case Term::Mul: return json{{"op", "*"}, {"args", {term_to_json(t.args[0]), term_to_json(t.args[1])}}};
        case Term::Mod: return json{{"op", "mod"}, {"modulus", t.value}, {"args", {term_to_json(t.args[0])}}};
        case Term::Abs: return json{{"op", "abs"}, {"args", {term_to_json(t.args[0])}}};
    }
    return {};
}

inline const char* atom_op_name(Atom::Op op) {
    static const char* names[] = {"=", "!=", "<=", "<", ">=", ">", "in_range", "in_set", "not_in", "pair_in", "pair_not_in"};
    return names[op];
}

inline json atom_to_json(const Atom& a) {
    json j{{"op", atom_op_name(a.op)}, {"lhs", term_to_json(a.lhs)}};
    if (a.op <= Atom::Gt || a.op == Atom::PairIn || a.op == Atom::PairNotIn) j["rhs"] = term_to_json(a.rhs);
    if (a.op == Atom::InRange) j["range"] = {a.lo, a.hi};
    if (a.op == Atom::InSet || a.op == Atom::NotIn) j["values"] = a.values;
    if (a.op == Atom::PairIn || a.op == Atom::PairNotIn) {
        j["cells"] = json::array();
        for (auto [x, y] : a.cells) j["cells"].push_back({x, y});
    }
    return j;
}

// Reads with a JSON-pointer style path for error reports.
struct Reader {
    const json& j;
    std::string path;

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(path.empty() ? "/" : path, what); }
    Reader at(const std::string& key) const {
        if (!j.is_object()) fail("expected an object");
        auto it = j.find(key);
        if (it == j.end()) Reader{j, path + "/" + key}.fail("missing field");
        return {*it, path + "/" + key};
    }
    Reader at(size_t i) const {
        if (!j.is_array() || i >= j.size()) fail("expected an array element");
        return {j[i], path + "/" + std::to_string(i)};
    }
    [[nodiscard]] bool has(const std::string& key) const { return j.is_object() && j.contains(key); }
    [[nodiscard]] size_t size() const {
        if (!j.is_array()) fail("expected an array");
        return j.size();
    }
    [[nodiscard]] std::string str() const {
        if (!j.is_string()) fail("expected a string");
        return j.get<std::string>();
    }
    [[nodiscard]] int64_t integer() const {
        if (!j.is_number_integer()) fail("expected an integer");
        return j.get<int64_t>();
    }
    [[nodiscard]] uint64_t unsigned_int() const {
        const int64_t v = integer();
        if (v < 0) fail("expected a non-negative integer");
        return static_cast<uint64_t>(v);
    }
};

inline Term term_from(const Reader& r) {
    if (r.has("field")) {
        auto f = field_from_name(r.at("field").str());
        if (!f) r.at("field").fail("unknown field");
        return Term::field_of(*f, r.at("load").str());
    }
    if (r.has("bits")) {
        auto b = r.at("bits");
        if (b.size() != 2) b.fail("expected [lo, hi]");
        const uint64_t lo = b.at(size_t{0}).unsigned_int(), hi = b.at(size_t{1}).unsigned_int();
        if (hi < lo || hi > 63) b.fail("bad bit range");
        return Term::bits_of(r.at("load").str(), {static_cast<unsigned>(lo), static_cast<unsigned>(hi)});
    }
    if (r.has("const")) return Term::constant(r.at("const").integer());
    if (r.has("count")) return Term::count(r.at("count").str());
    const std::string op = r.at("op").str();
    auto args = r.at("args");
    if (op == "mod") {
        if (args.size() != 1) args.fail("mod takes one argument");
        const int64_t m = r.at("modulus").integer();
        if (m <= 0) r.at("modulus").fail("modulus must be positive");
        return Term::mod(term_from(args.at(size_t{0})), m);
    }
    if (op == "abs") {
        if (args.size() != 1) args.fail("abs takes one argument");
        return Term::abs(term_from(args.at(size_t{0})));
    }
    const Term::Kind k = op == "+" ? Term::Add : op == "-" ? Term::Sub : op == "*" ? Term::Mul : Term::Const;
    if (k == Term::Const) r.at("op").fail("unknown operator '" + op + "'");
    if (args.size() != 2) args.fail("binary operator takes two arguments");
    return Term::binary(k, term_from(args.at(size_t{0})), term_from(args.at(size_t{1})));
}

inline Atom atom_from(const Reader& r) {
    Atom a;
    const std::string op = r.at("op").str();
    bool found = false;
    for (int i = 0; i <= Atom::PairNotIn; ++i)
        if (op == atom_op_name(static_cast<Atom::Op>(i))) a.op = static_cast<Atom::Op>(i), found = true;
    if (!found) r.at("op").fail("unknown comparison '" + op + "'");
    a.lhs = term_from(r.at("lhs"));
    if (a.op <= Atom::Gt || a.op == Atom::PairIn || a.op == Atom::PairNotIn) a.rhs = term_from(r.at("rhs"));
    if (a.op == Atom::InRange) {
        auto rg = r.at("range");
        if (rg.size() != 2) rg.fail("expected [lo, hi]");
        a.lo = rg.at(size_t{0}).integer();
        a.hi = rg.at(size_t{1}).integer();
    }
    if (a.op == Atom::InSet || a.op == Atom::NotIn) {
        auto v = r.at("values");
        for (size_t i = 0; i < v.size(); ++i) a.values.push_back(v.at(i).integer());
    }
    if (a.op == Atom::PairIn || a.op == Atom::PairNotIn) {
        auto c = r.at("cells");
        for (size_t i = 0; i < c.size(); ++i) {
            auto cell = c.at(i);
            if (cell.size() != 2) cell.fail("expected [x, y]");
            a.cells.push_back({cell.at(size_t{0}).integer(), cell.at(size_t{1}).integer()});
        }
    }
    return a;
}

inline CacheGeometry geom_from(const Reader& r) {
    CacheGeometry g;
    g.line_size_bytes = r.at("line_size_bytes").unsigned_int();
    g.num_sets = r.at("num_sets").unsigned_int();
    g.associativity = static_cast<unsigned>(r.at("associativity").unsigned_int());
    g.bus_size_bytes = r.at("bus_size_bytes").unsigned_int();
    g.page_size_bytes = r.at("page_size_bytes").unsigned_int();
    g.addr_bits = static_cast<unsigned>(r.at("addr_bits").unsigned_int());
    try {
        g.validate();
    } catch (const InvalidGeometry& e) {
        r.fail(e.what());
    }
    return g;
}

}  // namespace detail

inline nlohmann::json lt_to_json(const LeakageTemplate& lt) {
    using nlohmann::json;
    json j;
    j["schema"] = "plumber.lt";
    j["schema_version"] = lt_schema_version;
    j["code_template"] = json::array();
    for (const auto& i : lt.code_template) {
        switch (i.kind) {
            case TemplateInstr::Load: j["code_template"].push_back({{"kind", "load"}, {"symbol", i.symbol}}); break;
            case TemplateInstr::Arith: j["code_template"].push_back({{"kind", "arith"}, {"count", i.symbol}}); break;
            case TemplateInstr::Wildcard:
                j["code_template"].push_back({{"kind", "wildcard"}, {"min", i.min}, {"max", i.max}});
                break;
        }
    }
    j["behaviors"] = lt.behaviors;
    j["relation_map"] = json::array();
    for (const auto& br : lt.relation_map) {
        json cs = json::array();
        for (const auto& c : br.conjunctions) {
            json atoms = json::array();
            for (const auto& a : c) atoms.push_back(detail::atom_to_json(a));
            cs.push_back(atoms);
        }
        j["relation_map"].push_back({{"behavior", br.behavior}, {"conjunctions", cs}});
    }
    j["inconclusive"] = lt.inconclusive;
    json tested = json::array();
    for (const auto& r : lt.metadata.tested) tested.push_back({{"symbol", r.symbol}, {"lo", r.lo}, {"hi", r.hi}});
    j["metadata"] = {{"geometry", detail::geom_to_json(lt.metadata.geom)},
                     {"tested_ranges", tested},
                     {"provenance", lt.metadata.provenance}};
    return j;
}

inline std::string serialize_lt(const LeakageTemplate& lt) { return lt_to_json(lt).dump(2) + "\n"; }

inline LeakageTemplate lt_from_json(const nlohmann::json& j) {
    detail::Reader root{j, ""};
    const int64_t v = root.at("schema_version").integer();
    if (v != lt_schema_version)
        throw SchemaVersionMismatch("expected schema version " + std::to_string(lt_schema_version) + ", found " +
                                    std::to_string(v));
    if (root.at("schema").str() != "plumber.lt") root.at("schema").fail("not a leakage template");
    LeakageTemplate lt;
    auto code = root.at("code_template");
    for (size_t i = 0; i < code.size(); ++i) {
        auto e = code.at(i);
        const std::string k = e.at("kind").str();
        TemplateInstr ti;
        if (k == "load") {
            ti.kind = TemplateInstr::Load;
            ti.symbol = e.at("symbol").str();
        } else if (k == "arith") {
            ti.kind = TemplateInstr::Arith;
            ti.symbol = e.at("count").str();
        } else if (k == "wildcard") {
            ti.kind = TemplateInstr::Wildcard;
            ti.min = static_cast<unsigned>(e.at("min").unsigned_int());
            ti.max = static_cast<unsigned>(e.at("max").unsigned_int());
        } else {
            e.at("kind").fail("unknown template instruction '" + k + "'");
        }
        lt.code_template.push_back(ti);
    }
    auto bs = root.at("behaviors");
    for (size_t i = 0; i < bs.size(); ++i) lt.behaviors.push_back(bs.at(i).str());
    if (lt.behaviors.empty()) bs.fail("behaviors must be nonempty");
    auto rm = root.at("relation_map");
    for (size_t i = 0; i < rm.size(); ++i) {
        BehaviorRules br;
        br.behavior = rm.at(i).at("behavior").str();
        auto cs = rm.at(i).at("conjunctions");
        for (size_t k = 0; k < cs.size(); ++k) {
            Conjunction c;
            auto atoms = cs.at(k);
            for (size_t a = 0; a < atoms.size(); ++a) c.push_back(detail::atom_from(atoms.at(a)));
            br.conjunctions.push_back(std::move(c));
        }
        lt.relation_map.push_back(std::move(br));
    }
    auto inc = root.at("inconclusive");
    for (size_t i = 0; i < inc.size(); ++i) lt.inconclusive.push_back(inc.at(i).str());
    auto md = root.at("metadata");
    lt.metadata.geom = detail::geom_from(md.at("geometry"));
    auto tr = md.at("tested_ranges");
    for (size_t i = 0; i < tr.size(); ++i)
        lt.metadata.tested.push_back({tr.at(i).at("symbol").str(), tr.at(i).at("lo").integer(), tr.at(i).at("hi").integer()});
    auto pv = md.at("provenance");
    for (size_t i = 0; i < pv.size(); ++i) lt.metadata.provenance.push_back(pv.at(i).str());
    check_closed(lt);
    return lt;
}

inline LeakageTemplate deserialize_lt(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("/", e.what());
    }
    return lt_from_json(j);
}

}  // namespace plumber
