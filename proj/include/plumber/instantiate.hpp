#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "core_types.hpp"
#include "errors.hpp"
#include "preprocess.hpp"

namespace plumber {

struct Instr {
    enum Kind { Load, Arith, Nop, SetVar, Branch } kind = Nop;
    PhysAddr addr{};  // Load
    std::string var;  // SetVar, Branch
    bool value = false;
    unsigned steps = 0;  // Branch: pc advances by this many instructions when taken
    bool operator==(const Instr&) const = default;
};

struct Testcase {
    uint64_t id = 0;
    size_t variant = 0;
    std::vector<Instr> instrs;
    std::vector<PhysAddr> pre_loads;
    uint64_t run_count = 1;
    MutationMode mode = MutationMode::none;
    std::vector<size_t> targets;   // instruction indices of mutated loads
    std::vector<uint32_t> coords;  // one mutation coordinate per target
    std::string provenance;
    uint64_t code_base = 0x10000;

    [[nodiscard]] uint64_t instr_addr(size_t i) const { return code_base + 4 * i; }
    [[nodiscard]] std::vector<size_t> load_indices() const {
        std::vector<size_t> out;
        for (size_t i = 0; i < instrs.size(); ++i)
            if (instrs[i].kind == Instr::Load) out.push_back(i);
        return out;
    }
};

// Symbol names bind to concrete tag or set values. Tag and set symbols live in
// separate namespaces, keyed by the attribute slot they were used in.
class AddressStore {
public:
    AddressStore(const CacheGeometry& g, uint64_t seed) : geom_(g), rng_(seed) { g.validate(); }

    void pin_tag(const std::string& sym, uint64_t v) {
        if (v > geom_.range(Field::tag).mask()) throw UnsatisfiableRelation("pinned tag out of range");
        bind(tags_, used_tags_, sym, v);
    }
    void pin_set(const std::string& sym, uint64_t v) {
        if (v >= geom_.num_sets) throw UnsatisfiableRelation("pinned set out of range");
        bind(sets_, used_sets_, sym, v);
    }

    // Registers every symbol of a family with all deltas it is used with, so
    // base values are chosen with room for the whole relation.
    void prepare(const std::vector<DirectiveSeq>& seqs) {
        std::map<std::string, std::set<int64_t>> td, sd;
        auto scan = [&](const std::vector<ConcreteDirective>& ds) {
            for (const auto& d : ds)
                if (d.kind == DirKind::Mem) {
                    td[d.tag.sym].insert(d.tag.delta);
                    sd[d.set.sym].insert(d.set.delta);
                }
        };
        for (const auto& s : seqs) {
            scan(s.precondition);
            scan(s.instructions);
        }
        for (auto& [sym, ds] : td)
            if (!tags_.count(sym)) pick_tag(sym, ds);
        for (auto& [sym, ds] : sd)
            if (!sets_.count(sym)) pick_set(sym, ds);
    }

    void freeze() { frozen_ = true; }
    [[nodiscard]] bool frozen() const { return frozen_; }

    uint64_t tag_of(const SymExpr& e) {
        if (!tags_.count(e.sym)) pick_tag(e.sym, {e.delta});
        const int64_t v = static_cast<int64_t>(tags_.at(e.sym)) + e.delta;
        if (v < 0 || static_cast<uint64_t>(v) > geom_.range(Field::tag).mask())
            throw UnsatisfiableRelation("tag " + e.sym + (e.delta >= 0 ? "+" : "") +
                                        std::to_string(e.delta) + " leaves the tag range");
        return static_cast<uint64_t>(v);
    }

    uint64_t set_of(const SymExpr& e) {
        if (!sets_.count(e.sym)) pick_set(e.sym, {e.delta});
        const int64_t n = static_cast<int64_t>(geom_.num_sets);
        int64_t v = (static_cast<int64_t>(sets_.at(e.sym)) + e.delta) % n;
        return static_cast<uint64_t>(v < 0 ? v + n : v);
    }

    [[nodiscard]] const std::map<std::string, uint64_t>& tag_bindings() const { return tags_; }
    [[nodiscard]] const std::map<std::string, uint64_t>& set_bindings() const { return sets_; }
    [[nodiscard]] const std::vector<std::string>& log() const { return log_; }
    [[nodiscard]] const CacheGeometry& geometry() const { return geom_; }

private:
    void bind(std::map<std::string, uint64_t>& m, std::set<uint64_t>& used, const std::string& sym,
              uint64_t v) {
        m[sym] = v;
        used.insert(v);
        log_.push_back(sym + "=" + std::to_string(v));
    }

    void check_open(const std::string& sym) const {
        if (frozen_) throw StoreExhausted("store is frozen; symbol '" + sym + "' was never resolved");
    }

    void pick_tag(const std::string& sym, const std::set<int64_t>& deltas) {
        check_open(sym);
        const int64_t max = static_cast<int64_t>(geom_.range(Field::tag).mask());
        const int64_t lo = -*deltas.begin(), hi = max - *deltas.rbegin();
        if (lo > hi) throw UnsatisfiableRelation("tag deltas of " + sym + " exceed the tag range");
        std::uniform_int_distribution<int64_t> dist(std::max<int64_t>(lo, 0), hi);
        for (int attempt = 0; attempt < 4096; ++attempt) {
            const int64_t base = dist(rng_);
            bool ok = true;
            for (int64_t d : deltas) ok = ok && !used_tags_.count(static_cast<uint64_t>(base + d));
            if (!ok) continue;
            bind(tags_, used_tags_, sym, static_cast<uint64_t>(base));
            for (int64_t d : deltas) used_tags_.insert(static_cast<uint64_t>(base + d));
            return;
        }
        throw StoreExhausted("no free tag value for " + sym);
    }

    // Prefers bases whose deltas neither wrap around the set range nor straddle
    // a page boundary; falls back to any collision-free base.
    void pick_set(const std::string& sym, const std::set<int64_t>& deltas) {
        check_open(sym);
        const int64_t n = static_cast<int64_t>(geom_.num_sets);
        const unsigned page_shift = CacheGeometry::log2(geom_.page_size_bytes);
        const unsigned group_shift = page_shift > geom_.line_bits() ? page_shift - geom_.line_bits() : 0;
        std::vector<int64_t> tidy, any;
        for (int64_t base = 0; base < n; ++base) {
            bool free = true, contained = true;
            for (int64_t d : deltas) {
                int64_t v = base + d;
                int64_t w = ((v % n) + n) % n;
                free = free && !used_sets_.count(static_cast<uint64_t>(w));
                contained = contained && v >= 0 && v < n && (v >> group_shift) == ((base + *deltas.begin()) >> group_shift);
            }
            if (!free) continue;
            any.push_back(base);
            if (contained) tidy.push_back(base);
        }
        const auto& pool = tidy.empty() ? any : tidy;
        if (pool.empty()) throw StoreExhausted("no free set value for " + sym);
        std::uniform_int_distribution<size_t> dist(0, pool.size() - 1);
        const int64_t base = pool[dist(rng_)];
        bind(sets_, used_sets_, sym, static_cast<uint64_t>(base));
        for (int64_t d : deltas) used_sets_.insert(static_cast<uint64_t>(((base + d) % n + n) % n));
    }

    CacheGeometry geom_;
    std::mt19937_64 rng_;
    std::map<std::string, uint64_t> tags_, sets_;
    std::set<uint64_t> used_tags_, used_sets_;
    std::vector<std::string> log_;
    bool frozen_ = false;
};

inline PhysAddr alloc_address(AddressStore& store, const SymExpr& tag, const SymExpr& set,
                              std::optional<unsigned> word = std::nullopt) {
    const CacheGeometry& g = store.geometry();
    const unsigned w = word.value_or(0);
    if (w >= g.words_per_line()) throw UnsatisfiableRelation("word offset " + std::to_string(w) + " out of range");
    return compose_addr(g, store.tag_of(tag), store.set_of(set), uint64_t{w} * 4);
}

// The family of testcases produced by one directive sequence under its
// mutation plan. Elements are computed on demand by index.
class TestcaseFamily {
public:
    TestcaseFamily(DirectiveSeq seq, MutationPlan plan, AddressStore& store)
        : seq_(std::move(seq)), plan_(std::move(plan)), geom_(store.geometry()) {
        for (const auto& d : seq_.instructions) resolve(store, d);
        for (const auto& d : seq_.precondition) resolve(store, d);
        const uint64_t full = plan_.mode == MutationMode::word_offset ? geom_.words_per_line()
                            : plan_.mode == MutationMode::set_index   ? geom_.num_sets
                                                                      : 1;
        for (uint32_t v : plan_.domain)
            if (v >= full) throw UnsatisfiableRelation("mutation value " + std::to_string(v) + " out of range");
        if (plan_.domain.empty())
            for (uint64_t v = 0; v < full; ++v) domain_.push_back(static_cast<uint32_t>(v));
        else
            domain_ = plan_.domain;
        radix_ = domain_.size();
        size_ = 1;
        for (size_t i = 0; i < plan_.targets.size(); ++i) {
            if (size_ > (uint64_t{1} << 62) / radix_) throw ExpansionTooLarge("mutation space overflows");
            size_ *= radix_;
        }
        // a precondition load follows the mutated load it is written identically to
        for (const auto& p : seq_.precondition) {
            std::optional<size_t> follow;
            for (size_t j = 0; j < plan_.targets.size() && !follow; ++j) {
                const auto& d = seq_.instructions[plan_.targets[j]];
                if (d.tag == p.tag && d.set == p.set) follow = j;
            }
            pre_follow_.push_back(follow);
        }
    }

    [[nodiscard]] uint64_t size() const { return plan_.mode == MutationMode::none ? 1 : size_; }
    [[nodiscard]] const DirectiveSeq& seq() const { return seq_; }
    [[nodiscard]] const MutationPlan& plan() const { return plan_; }
    [[nodiscard]] const CacheGeometry& geometry() const { return geom_; }
    [[nodiscard]] const std::vector<uint32_t>& domain() const { return domain_; }

    [[nodiscard]] std::vector<uint32_t> coords_of(uint64_t index) const {
        std::vector<uint32_t> c(plan_.targets.size());
        for (size_t j = c.size(); j-- > 0;) {
            c[j] = domain_[index % radix_];
            index /= radix_;
        }
        return c;
    }

    [[nodiscard]] Testcase at(uint64_t index) const {
        Testcase tc;
        tc.id = index;
        tc.run_count = seq_.run_count;
        tc.mode = plan_.mode;
        tc.targets = plan_.targets;
        tc.provenance = seq_.provenance;
        if (plan_.mode != MutationMode::none) tc.coords = coords_of(index);
        std::vector<std::optional<uint32_t>> coord_at(seq_.instructions.size());
        for (size_t j = 0; j < plan_.targets.size() && !tc.coords.empty(); ++j)
            coord_at[plan_.targets[j]] = tc.coords[j];
        tc.instrs.reserve(seq_.instructions.size());
        for (size_t i = 0; i < seq_.instructions.size(); ++i) {
            const auto& d = seq_.instructions[i];
            Instr in;
            switch (d.kind) {
                case DirKind::Mem:
                    in.kind = Instr::Load;
                    in.addr = address(d, coord_at[i]);
                    break;
                case DirKind::Arith: in.kind = Instr::Arith; break;
                case DirKind::Nop: in.kind = Instr::Nop; break;
                case DirKind::SetBranch:
                    in.kind = Instr::SetVar;
                    in.var = d.var;
                    in.value = d.value;
                    break;
                case DirKind::Branch:
                    in.kind = Instr::Branch;
                    in.var = d.var;
                    in.value = d.value;
                    in.steps = d.steps;
                    break;
            }
            tc.instrs.push_back(std::move(in));
        }
        for (size_t k = 0; k < seq_.precondition.size(); ++k) {
            std::optional<uint32_t> c;
            if (pre_follow_[k] && !tc.coords.empty()) c = tc.coords[*pre_follow_[k]];
            tc.pre_loads.push_back(address(seq_.precondition[k], c));
        }
        return tc;
    }

private:
    struct Resolved {
        uint64_t tag, set;
        unsigned word;
    };

    void resolve(AddressStore& store, const ConcreteDirective& d) {
        if (d.kind != DirKind::Mem) return;
        const unsigned w = d.word.value_or(0);
        if (w >= geom_.words_per_line())
            throw UnsatisfiableRelation("word offset " + std::to_string(w) + " out of range");
        resolved_[key(d)] = {store.tag_of(d.tag), store.set_of(d.set), w};
    }

    static std::string key(const ConcreteDirective& d) {
        return d.tag.sym + "\x1f" + std::to_string(d.tag.delta) + "\x1f" + d.set.sym + "\x1f" +
               std::to_string(d.set.delta) + "\x1f" + std::to_string(d.word.value_or(0));
    }

    [[nodiscard]] PhysAddr address(const ConcreteDirective& d, std::optional<uint32_t> coord) const {
        Resolved r = resolved_.at(key(d));
        if (coord) {
            if (plan_.mode == MutationMode::word_offset) r.word = *coord;
            else r.set = *coord;
        }
        return compose_addr(geom_, r.tag, r.set, uint64_t{r.word} * 4);
    }

    DirectiveSeq seq_;
    MutationPlan plan_;
    CacheGeometry geom_;
    std::map<std::string, Resolved> resolved_;
    std::vector<std::optional<size_t>> pre_follow_;
    std::vector<uint32_t> domain_;
    uint64_t radix_ = 1, size_ = 1;
};

inline TestcaseFamily instantiate(const DirectiveSeq& seq, const MutationPlan& plan, AddressStore& store) {
    return TestcaseFamily(seq, plan, store);
}

}  // namespace plumber
