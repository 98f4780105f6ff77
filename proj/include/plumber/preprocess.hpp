#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gts.hpp"

namespace plumber {

// Unspecified tag/set attributes resolve to these reserved symbols, so that
// all default attributes of one GTS refer to the same value.
inline const std::string default_tag_symbol = "_t";
inline const std::string default_set_symbol = "_s";

struct SymExpr {
    std::string sym;
    int64_t delta = 0;
    bool operator==(const SymExpr&) const = default;
    auto operator<=>(const SymExpr&) const = default;
};

struct ConcreteDirective {
    DirKind kind = DirKind::Nop;
    SymExpr tag, set;  // Mem only
    std::optional<unsigned> word;
    std::string var;
    bool value = false;
    unsigned steps = 0;
    bool mutate = false;  // within the scope of the mutation operator
    bool operator==(const ConcreteDirective&) const = default;
    auto operator<=>(const ConcreteDirective&) const = default;
};

enum class MutationMode { none, word_offset, set_index };

struct DirectiveSeq {
    std::vector<ConcreteDirective> precondition;
    std::vector<ConcreteDirective> instructions;
    std::string provenance;
    uint64_t run_count = 1;
};

struct MutationPlan {
    MutationMode mode = MutationMode::none;
    std::vector<size_t> targets;  // instruction indices of mutated loads
    std::vector<uint32_t> domain; // restricts the enumerated values; empty means all
};

struct ExpandedVariant {
    DirectiveSeq seq;
    MutationPlan plan;
};

inline constexpr uint64_t default_expansion_cap = uint64_t{1} << 22;

std::string render_directive(const ConcreteDirective& d);

namespace detail {

struct Variant {
    std::vector<ConcreteDirective> dirs;
    std::string prov;
    uint64_t runs = 1;
    MutationMode mode = MutationMode::none;
};

class Expander {
public:
    Expander(const GtsAst& ast, uint64_t seed, uint64_t cap) : ast_(ast), rng_(seed), cap_(cap) {}

    std::vector<Variant> node(const OpNode& n) {
        std::vector<Variant> out;
        switch (n.kind) {
            case OpKind::Seq: {
                Variant v;
                v.dirs = items(n.seq);
                v.prov = "seq";
                out.push_back(std::move(v));
                break;
            }
            case OpKind::Shuffle:
                for (auto& v : node(n.kids[0])) shuffle(v, out);
                break;
            case OpKind::Subset:
                for (auto& v : node(n.kids[0])) subset(v, out);
                break;
            case OpKind::Slide:
                for (auto& v : node(n.kids[0]))
                    for (unsigned k = 0; k < n.n; ++k) {
                        Variant w = v;
                        for (auto& d : w.dirs)
                            if (d.kind == DirKind::Mem) d.set.delta += k;
                        w.prov += "/slide+" + std::to_string(k);
                        add(out, std::move(w));
                    }
                break;
            case OpKind::Merge: {
                auto left = node(n.kids[0]);
                auto right = node(n.kids[1]);
                for (auto& a : left)
                    for (auto& b : right) merge(a, b, out);
                break;
            }
            case OpKind::OffMut:
            case OpKind::LineMut:
                for (auto& v : node(n.kids[0])) {
                    v.mode = n.kind == OpKind::OffMut ? MutationMode::word_offset : MutationMode::set_index;
                    for (auto& d : v.dirs)
                        if (d.kind == DirKind::Mem) d.mutate = true;
                    v.prov += n.kind == OpKind::OffMut ? "/offmut" : "/linemut";
                    out.push_back(std::move(v));
                }
                break;
            case OpKind::Rep:
                for (auto& v : node(n.kids[0])) {
                    v.runs *= n.n;
                    v.prov += "/rep" + std::to_string(n.n);
                    out.push_back(std::move(v));
                }
                break;
        }
        dedup(out);
        if (out.size() > cap_) throw ExpansionTooLarge("variant count exceeds cap " + std::to_string(cap_));
        return out;
    }

    std::vector<ConcreteDirective> items(const std::vector<Item>& seq) {
        std::vector<ConcreteDirective> out;
        for (const Item& it : seq) {
            if (it.kind == Item::Dir) {
                out.push_back(concrete(it.dir));
            } else if (it.kind == Item::Wildcard) {
                for (unsigned i = 0; i < it.n; ++i) {
                    ConcreteDirective d;
                    d.kind = (rng_() & 1) ? DirKind::Arith : DirKind::Nop;
                    out.push_back(d);
                }
            } else {
                for (unsigned i = 0; i < it.n; ++i) {
                    auto copy = items(it.body);
                    if (it.attr)
                        for (auto& d : copy) {
                            if (d.kind != DirKind::Mem) continue;
                            (it.attr == 't' ? d.tag : d.set).delta += static_cast<int64_t>(i) * it.inc;
                        }
                    out.insert(out.end(), copy.begin(), copy.end());
                }
            }
        }
        return out;
    }

private:
    ConcreteDirective concrete(const Directive& d) const {
        ConcreteDirective c;
        c.kind = d.kind;
        if (d.kind == DirKind::Mem) {
            c.tag = d.tag ? SymExpr{ast_.symbols[static_cast<size_t>(d.tag->sym)], d.tag->delta}
                          : SymExpr{default_tag_symbol, 0};
            c.set = d.set ? SymExpr{ast_.symbols[static_cast<size_t>(d.set->sym)], d.set->delta}
                          : SymExpr{default_set_symbol, 0};
            c.word = d.word;
        }
        if (d.kind == DirKind::SetBranch || d.kind == DirKind::Branch) {
            c.var = ast_.vars[static_cast<size_t>(d.var)];
            c.value = d.value;
            c.steps = d.steps;
        }
        return c;
    }

    void add(std::vector<Variant>& out, Variant v) {
        out.push_back(std::move(v));
        if (out.size() > 2 * cap_ + 16)
            throw ExpansionTooLarge("variant count exceeds cap " + std::to_string(cap_));
    }

    static std::vector<int> class_ids(const std::vector<ConcreteDirective>& ds) {
        std::vector<int> ids;
        for (size_t i = 0; i < ds.size(); ++i) {
            int id = static_cast<int>(i);
            for (size_t j = 0; j < i; ++j)
                if (ds[j] == ds[i]) {
                    id = ids[j];
                    break;
                }
            ids.push_back(id);
        }
        return ids;
    }

    void shuffle(const Variant& v, std::vector<Variant>& out) {
        auto ids = class_ids(v.dirs);
        // distinct permutations of a multiset: k! / prod(m_i!)
        std::map<int, uint64_t> mult;
        for (int id : ids) ++mult[id];
        double count = 1;
        uint64_t k = 0;
        for (auto& [id, m] : mult)
            for (uint64_t j = 1; j <= m; ++j) count = count * static_cast<double>(++k) / static_cast<double>(j);
        if (count > static_cast<double>(cap_))
            throw ExpansionTooLarge("shuffle yields more than " + std::to_string(cap_) + " variants");
        std::vector<ConcreteDirective> by_id(v.dirs.size());
        for (size_t i = 0; i < ids.size(); ++i) by_id[static_cast<size_t>(ids[i])] = v.dirs[i];
        std::sort(ids.begin(), ids.end());
        do {
            Variant w = v;
            w.prov += "/shuffle[";
            for (size_t i = 0; i < ids.size(); ++i) {
                w.dirs[i] = by_id[static_cast<size_t>(ids[i])];
                w.prov += (i ? "," : "") + std::to_string(ids[i]);
            }
            w.prov += "]";
            add(out, std::move(w));
        } while (std::next_permutation(ids.begin(), ids.end()));
    }

    void subset(const Variant& v, std::vector<Variant>& out) {
        const size_t k = v.dirs.size();
        if (k > 40) throw ExpansionTooLarge("subset over more than 40 directives");
        std::set<std::vector<ConcreteDirective>> seen;
        for (uint64_t mask = (uint64_t{1} << k) - 1; mask >= 1; --mask) {
            Variant w = v;
            w.dirs.clear();
            w.prov += "/subset{";
            bool first = true;
            for (size_t i = 0; i < k; ++i)
                if (mask >> i & 1) {
                    w.dirs.push_back(v.dirs[i]);
                    w.prov += (first ? "" : ",") + std::to_string(i);
                    first = false;
                }
            w.prov += "}";
            if (seen.insert(w.dirs).second) add(out, std::move(w));
        }
    }

    void merge(const Variant& a, const Variant& b, std::vector<Variant>& out) {
        const size_t p = a.dirs.size(), q = b.dirs.size();
        double raw = 1;
        for (size_t i = 1; i <= q; ++i) raw = raw * static_cast<double>(p + i) / static_cast<double>(i);
        if (raw > 64.0 * static_cast<double>(cap_))
            throw ExpansionTooLarge("merge yields more than " + std::to_string(cap_) + " variants");
        std::set<std::vector<ConcreteDirective>> seen;
        std::string pick;
        Variant w;
        w.runs = a.runs * b.runs;
        w.mode = a.mode != MutationMode::none ? a.mode : b.mode;
        auto rec = [&](auto&& self, size_t i, size_t j) -> void {
            if (i == p && j == q) {
                if (seen.insert(w.dirs).second) {
                    Variant x = w;
                    x.prov = "merge(" + a.prov + "|" + b.prov + ")[" + pick + "]";
                    add(out, std::move(x));
                }
                return;
            }
            if (i < p) {
                w.dirs.push_back(a.dirs[i]);
                pick.push_back('a');
                self(self, i + 1, j);
                pick.pop_back();
                w.dirs.pop_back();
            }
            if (j < q) {
                w.dirs.push_back(b.dirs[j]);
                pick.push_back('b');
                self(self, i, j + 1);
                pick.pop_back();
                w.dirs.pop_back();
            }
        };
        rec(rec, 0, 0);
    }

    // Structurally identical variants are omitted; the first occurrence wins.
    static void dedup(std::vector<Variant>& vs) {
        std::set<std::pair<std::vector<ConcreteDirective>, uint64_t>> seen;
        std::vector<Variant> out;
        out.reserve(vs.size());
        for (auto& v : vs)
            if (seen.insert({v.dirs, v.runs}).second) out.push_back(std::move(v));
        vs = std::move(out);
    }

    const GtsAst& ast_;
    std::mt19937_64 rng_;
    uint64_t cap_;
};

}  // namespace detail

inline std::vector<ExpandedVariant> expand(const GtsAst& ast, uint64_t seed,
                                           uint64_t cap = default_expansion_cap) {
    detail::Expander ex(ast, seed, cap);
    std::vector<ConcreteDirective> pre;
    if (ast.pre) pre = ex.items(*ast.pre);
    std::vector<ExpandedVariant> out;
    if (ast.body.kind == OpKind::Seq && ast.body.seq.empty()) return out;
    for (auto& v : ex.node(ast.body)) {
        ExpandedVariant e;
        e.seq.precondition = pre;
        e.seq.instructions = std::move(v.dirs);
        e.seq.provenance = std::move(v.prov);
        e.seq.run_count = v.runs;
        e.plan.mode = v.mode;
        if (v.mode != MutationMode::none)
            for (size_t i = 0; i < e.seq.instructions.size(); ++i)
                if (e.seq.instructions[i].mutate) e.plan.targets.push_back(i);
        out.push_back(std::move(e));
    }
    return out;
}

inline std::string render_directive(const ConcreteDirective& d) {
    auto attr = [](char k, const SymExpr& e) {
        std::string s(1, k);
        s += "=" + e.sym;
        if (e.delta > 0) s += "+" + std::to_string(e.delta);
        if (e.delta < 0) s += "-" + std::to_string(-e.delta);
        return s;
    };
    switch (d.kind) {
        case DirKind::Mem: {
            std::string s = "M[" + attr('t', d.tag) + "," + attr('s', d.set);
            if (d.word) s += ",w=" + std::to_string(*d.word);
            return s + "]";
        }
        case DirKind::Arith: return "A";
        case DirKind::Nop: return "NOP";
        case DirKind::SetBranch: return "SB(" + d.var + "," + (d.value ? "T" : "F") + ")";
        case DirKind::Branch:
            return "B(" + d.var + "," + (d.value ? "T" : "F") + "," + std::to_string(d.steps) + ")";
    }
    return "";
}

inline std::string render_directives(const std::vector<ConcreteDirective>& ds) {
    std::string s;
    for (const auto& d : ds) s += (s.empty() ? "" : " ") + render_directive(d);
    return s;
}

}  // namespace plumber
