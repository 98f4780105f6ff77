#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lt.hpp"
#include "matcher.hpp"
#include "pipeline.hpp"

namespace plumber {

namespace detail {

inline Instr load_instr(PhysAddr a) {
    Instr i;
    i.kind = Instr::Load;
    i.addr = a;
    return i;
}

inline Instr arith_instr() {
    Instr i;
    i.kind = Instr::Arith;
    return i;
}

}  // namespace detail

// ---------------------------------------------------------------- previction

// Five same-set loads known to previct.
struct Witness {
    uint64_t set = 0;
    std::vector<uint64_t> tags;
    std::vector<unsigned> words;
    bool operator==(const Witness&) const = default;

    [[nodiscard]] std::vector<PhysAddr> loads(const CacheGeometry& g) const {
        std::vector<PhysAddr> out;
        for (size_t i = 0; i < tags.size(); ++i) out.push_back(compose_addr(g, tags[i], set, uint64_t{words[i]} * 4));
        return out;
    }
};

inline Testcase program_of(const std::vector<PhysAddr>& loads) {
    Testcase tc;
    for (PhysAddr a : loads) tc.instrs.push_back(detail::load_instr(a));
    return tc;
}

// Random 5-load same-set programs over three tags, kept when they previct.
inline std::vector<Witness> previction_witnesses(const SimConfig& cfg, size_t n, uint64_t seed) {
    const CacheGeometry& g = cfg.geom;
    std::mt19937_64 rng(seed);
    Simulator sim(cfg);
    std::vector<Witness> out;
    const uint64_t tags = g.range(Field::tag).count();
    for (int attempt = 0; out.size() < n && attempt < 1000000; ++attempt) {
        Witness w;
        w.set = rng() % g.num_sets;
        const uint64_t t0 = rng() % tags;
        std::vector<uint64_t> pool{t0, (t0 + 1 + rng() % (tags - 1)) % tags};
        do pool.push_back(rng() % tags);
        while (pool[2] == pool[0] || pool[2] == pool[1]);
        for (int i = 0; i < 5; ++i) {
            const uint64_t r = rng() % 5;
            w.tags.push_back(pool[r < 3 ? 0 : r - 2]);
            w.words.push_back(static_cast<unsigned>(rng() % g.words_per_line()));
        }
        if (std::find(out.begin(), out.end(), w) != out.end()) continue;
        sim.reset();
        if (!sim.execute(program_of(w.loads(g))).previctions.empty()) out.push_back(w);
    }
    if (out.size() < n) throw ScenarioConfigError("could not find enough previcting programs");
    return out;
}

struct MinimalityResult {
    uint64_t witnesses_previcting = 0;
    std::map<unsigned, uint64_t> cases, previcting;  // by subset size
};

// Every ordered choice of x of the 5 loads, under every combination of word
// offsets of the chosen loads; plus each 4-load deletion at the original words.
inline MinimalityResult e1_minimality(const SimConfig& cfg, const std::vector<Witness>& ws, unsigned xmax) {
    const CacheGeometry& g = cfg.geom;
    const unsigned wpl = g.words_per_line();
    Simulator sim(cfg);
    MinimalityResult res;
    auto run = [&](const std::vector<PhysAddr>& ls) {
        sim.reset();
        return !sim.execute(program_of(ls)).previctions.empty();
    };
    for (const auto& w : ws) {
        const auto loads = w.loads(g);
        res.witnesses_previcting += run(loads);
        for (size_t drop = 0; drop < 5; ++drop) {
            auto ls = loads;
            ls.erase(ls.begin() + static_cast<long>(drop));
            ++res.cases[4];
            res.previcting[4] += run(ls);
        }
        for (unsigned x = 1; x <= xmax && x < 5; ++x) {
            std::vector<size_t> pick(x);
            std::function<void(unsigned, uint32_t)> choose = [&](unsigned k, uint32_t used) {
                if (k == x) {
                    uint64_t combos = 1;
                    for (unsigned i = 0; i < x; ++i) combos *= wpl;
                    for (uint64_t c = 0; c < combos; ++c) {
                        std::vector<PhysAddr> ls;
                        uint64_t cc = c;
                        for (size_t p : pick) {
                            ls.push_back(compose_addr(g, w.tags[p], w.set, (cc % wpl) * 4));
                            cc /= wpl;
                        }
                        ++res.cases[x];
                        res.previcting[x] += run(ls);
                    }
                    return;
                }
                for (size_t i = 0; i < 5; ++i)
                    if (!(used >> i & 1)) {
                        pick[k] = i;
                        choose(k + 1, used | (1u << i));
                    }
            };
            choose(0, 0);
        }
    }
    return res;
}

inline const char* e2_gts = "shuffle{ M[t=t1,s=s1,w=12] M[t=t1,s=s1,w=4] M[t=t1,s=s1,w=0] M[t=t2,s=s1] M[t=t3,s=s1] }";

struct CaseStudy {
    RunResult run;
    std::vector<VariantAnalysis> analyses;
    std::vector<LeakageTemplate> lts;
    uint64_t disagreements = 0;

    [[nodiscard]] std::string archive() const { return archive_to_jsonl(run.records); }
    [[nodiscard]] std::string tables() const { return bit_tables_csv(analyses); }
    [[nodiscard]] std::string templates() const {
        std::string s;
        for (const auto& lt : lts) s += serialize_lt(lt);
        return s;
    }
};

inline CaseStudy analyze_case(RunResult run, const std::string& key, const CacheGeometry& g,
                              const std::vector<Field>& invariant = {}, double threshold = 0.95) {
    CaseStudy cs;
    cs.run = std::move(run);
    cs.analyses = analyze_records(cs.run.records, key, g, threshold, invariant);
    for (const auto& a : cs.analyses) {
        cs.disagreements += a.disagreements;
        if (!a.analyses.empty()) cs.lts.push_back(variant_lt(a, cs.run.variants[a.variant].seq, g));
    }
    return cs;
}

struct OrderingResult {
    CaseStudy cs;
    uint64_t previcting = 0, structural_violations = 0;
};

// Every ordering of three same-tag loads and two others, with the buses of
// the two loads at words 12 and 4 moved over a 4 x 4 grid.
inline OrderingResult e2_ordering(const SimConfig& cfg, uint64_t seed) {
    RunOptions opt;
    opt.sim = cfg;
    opt.seed = seed;
    const unsigned wpb = cfg.geom.bus_size_bytes / 4;
    opt.adjust = [wpb, &cfg](size_t, ExpandedVariant& ev) {
        ev.plan.mode = MutationMode::word_offset;
        ev.plan.targets.clear();
        for (unsigned w : {12u, 4u})
            for (size_t i = 0; i < ev.seq.instructions.size(); ++i)
                if (ev.seq.instructions[i].word == w) ev.plan.targets.push_back(i);
        ev.plan.domain.clear();
        for (unsigned w = 0; w < cfg.geom.words_per_line(); w += wpb) ev.plan.domain.push_back(w);
    };
    OrderingResult r;
    r.cs = analyze_case(run_gts(e2_gts, opt), key_name(ClassKey::previction), cfg.geom);
    for (const auto& rec : r.cs.run.records) {
        if (rec.first.previctions.empty()) continue;
        ++r.previcting;
        const auto& ins = r.cs.run.variants[rec.variant].seq.instructions;
        std::vector<size_t> pos;
        for (size_t i = 0; i < ins.size(); ++i)
            if (ins[i].tag.sym == "t1") pos.push_back(i);
        if (pos.size() != 3 || pos[2] - pos[0] != 2) ++r.structural_violations;
    }
    return r;
}

inline const char* e4_gts = "offmut{ M[t=t1,s=s1] M[t=t1,s=s1] M[t=t1,s=s1] M[t=t2,s=s1] M[t=t3,s=s1] }";

// Word offsets of the three same-tag loads; the other two stay at word 0.
inline CaseStudy e4_bus(const SimConfig& cfg, uint64_t seed) {
    RunOptions opt;
    opt.sim = cfg;
    opt.seed = seed;
    opt.keep_targets = 3;
    return analyze_case(run_gts(e4_gts, opt), key_name(ClassKey::previction), cfg.geom);
}

// ---------------------------------------------------------------- prefetching

inline const char* e6_gts = "linemut{ M[t=t1,s=s1] M[t=t1,s=s1] M[t=t1,s=s1] }";

// The tag pin places the family in the second quarter of a page at 16 sets.
inline CaseStudy e6_stride(const SimConfig& cfg, uint64_t seed) {
    RunOptions opt;
    opt.sim = cfg;
    opt.seed = seed;
    const uint64_t tags_per_page = cfg.geom.lines_per_page() / cfg.geom.num_sets;
    opt.pin_tags["t1"] = std::max<uint64_t>(tags_per_page, 1) * 37 + 1;
    return analyze_case(run_gts(e6_gts, opt), key_name(ClassKey::prefetch_count), cfg.geom, {Field::page});
}

inline std::string stride_gts(unsigned loads, unsigned stride) {
    return "(M[t=t1,s=s1])^{" + std::to_string(loads) + ",s+=" + std::to_string(stride) + "}";
}

// label of each n-load constant-stride family
inline std::map<unsigned, std::string> stride_family_labels(const SimConfig& cfg, unsigned loads, uint64_t seed) {
    std::map<unsigned, std::string> out;
    for (unsigned d = 1; d <= static_cast<unsigned>(cfg.max_stride); ++d) {
        if ((loads - 1) * d >= cfg.geom.num_sets || (loads - 1) * d >= cfg.geom.lines_per_page()) continue;
        RunOptions opt;
        opt.sim = cfg;
        opt.seed = mix_seed(seed, d);
        // start of a page, so the whole run and its prefetches fit
        const uint64_t tags_per_page = std::max<uint64_t>(cfg.geom.lines_per_page() / cfg.geom.num_sets, 1);
        opt.pin_tags["t1"] = tags_per_page * 37;
        opt.pin_sets["s1"] = 0;
        auto res = run_gts(stride_gts(loads, d), opt);
        out[d] = label(res.records.at(0).first, ClassKey::prefetch_count);
    }
    return out;
}

inline std::string gap_gts(unsigned g) {
    std::string s = "M[t=t1,s=s1] M[t=t1,s=s1+1] ";
    if (g) s += "(A)^{" + std::to_string(g) + "} ";
    return s + "M[t=t1,s=s1+2]";
}

struct GapSweep {
    std::map<unsigned, unsigned> counts;  // g -> prefetched lines
    std::vector<RunRecord> records;
};

inline GapSweep e7_gap_sweep(const SimConfig& cfg, unsigned gmax, uint64_t seed) {
    GapSweep out;
    for (unsigned g = 0; g <= gmax; ++g) {
        RunOptions opt;
        opt.sim = cfg;
        opt.seed = mix_seed(seed, g);
        // page start, so the page end never cuts the run short
        opt.pin_tags["t1"] = std::max<uint64_t>(cfg.geom.lines_per_page() / cfg.geom.num_sets, 1) * 37;
        opt.pin_sets["s1"] = 0;
        auto res = run_gts(gap_gts(g), opt);
        const auto& r = res.records.at(0);
        out.counts[g] = static_cast<unsigned>(r.first.prefetched.size());
        auto rec = r;
        rec.id = g;
        rec.variant = g;
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Template for three loads with two arith gaps: one rule per (gap group,
// room left in the page), longest runs first, then a catch-all P0.
inline LeakageTemplate prefetch_lt(const SimConfig& cfg, unsigned gmax, const std::map<unsigned, unsigned>& counts = {}) {
    const CacheGeometry& g = cfg.geom;
    const unsigned lb = g.line_bits();
    const unsigned pb = CacheGeometry::log2(g.page_size_bytes);
    const int64_t lpp = static_cast<int64_t>(g.lines_per_page());
    auto inpage = [&](const std::string& l) {
        Term t;
        t.kind = Term::BitsOf;
        t.load = l;
        t.bits = {lb, pb - 1};
        return t;
    };
    auto atom = [](Atom::Op op, Term l, Term r = {}) {
        Atom a;
        a.op = op;
        a.lhs = std::move(l);
        a.rhs = std::move(r);
        return a;
    };
    const Term d1 = Term::binary(Term::Sub, inpage("l2"), inpage("l1"));
    const Term d2 = Term::binary(Term::Sub, inpage("l3"), inpage("l2"));
    Conjunction base;
    base.push_back(atom(Atom::Eq, Term::field_of(Field::page, "l1"), Term::field_of(Field::page, "l2")));
    base.push_back(atom(Atom::Eq, Term::field_of(Field::page, "l2"), Term::field_of(Field::page, "l3")));
    base.push_back(atom(Atom::Eq, d1, d2));
    Atom bound = atom(Atom::InRange, Term::abs(d1));
    bound.lo = 1;
    bound.hi = cfg.max_stride;
    base.push_back(bound);

    std::map<unsigned, std::vector<int64_t>> groups;  // count -> gaps
    for (unsigned gap = 0; gap <= gmax; ++gap) {
        auto it = counts.find(gap);
        groups[it == counts.end() ? cfg.prefetch_count(gap) : it->second].push_back(gap);
    }
    std::map<unsigned, std::vector<Conjunction>, std::greater<>> by_count;
    for (auto& [c, gaps] : groups) {
        for (unsigned j = c; j >= 1; --j) {
            Conjunction conj = base;
            Atom in = atom(Atom::InSet, Term::count("n2"));
            in.values = gaps;
            conj.push_back(in);
            Atom room = atom(Atom::InRange, Term::binary(Term::Add, inpage("l3"),
                                                         Term::binary(Term::Mul, Term::constant(j), d2)));
            room.lo = 0;
            room.hi = lpp - 1;
            conj.push_back(room);
            by_count[j].push_back(std::move(conj));
        }
    }
    LeakageTemplate lt;
    lt.code_template = {{TemplateInstr::Load, "l1"}, {TemplateInstr::Arith, "n1"}, {TemplateInstr::Load, "l2"},
                        {TemplateInstr::Arith, "n2"}, {TemplateInstr::Load, "l3"}};
    for (auto& [j, conjs] : by_count) {
        lt.behaviors.push_back("P" + std::to_string(j));
        lt.relation_map.push_back({"P" + std::to_string(j), std::move(conjs)});
    }
    lt.behaviors.push_back("P0");
    lt.relation_map.push_back({"P0", {Conjunction{}}});
    lt.metadata.geom = g;
    lt.metadata.tested = {{"n1", 0, gmax}, {"n2", 0, gmax}};
    lt.metadata.provenance = {"gap sweep 0.." + std::to_string(gmax)};
    check_closed(lt);
    return lt;
}

// l1, n1 ariths, l2, n2 ariths, l3
inline Testcase gap_program(PhysAddr l1, unsigned n1, PhysAddr l2, unsigned n2, PhysAddr l3) {
    Testcase tc;
    tc.instrs.push_back(detail::load_instr(l1));
    for (unsigned i = 0; i < n1; ++i) tc.instrs.push_back(detail::arith_instr());
    tc.instrs.push_back(detail::load_instr(l2));
    for (unsigned i = 0; i < n2; ++i) tc.instrs.push_back(detail::arith_instr());
    tc.instrs.push_back(detail::load_instr(l3));
    return tc;
}

inline AccessTrace trace_of(const Testcase& tc) {
    AccessTrace t;
    for (size_t i = 0; i < tc.instrs.size(); ++i)
        if (tc.instrs[i].kind == Instr::Load) t.push_back({tc.instr_addr(i), tc.instrs[i].addr.value});
    return t;
}

// Simulator traces of three-load programs with arith gaps, labelled with the
// observed prefetch count. Out-of-range programs push one gap past gmax.
struct LabeledTrace {
    std::string label;
    AccessTrace trace;
    bool in_range = true;
    bool operator==(const LabeledTrace&) const = default;
};

inline std::vector<LabeledTrace> simulated_traces(const SimConfig& cfg, unsigned in_range, unsigned out_of_range,
                                                  unsigned gmax, uint64_t seed) {
    const CacheGeometry& g = cfg.geom;
    const uint64_t lpp = g.lines_per_page();
    const uint64_t pages = (g.addr_mask() + 1) / g.page_size_bytes;
    std::mt19937_64 rng(seed);
    Simulator sim(cfg);
    std::vector<LabeledTrace> out;
    for (unsigned i = 0; i < in_range + out_of_range; ++i) {
        const uint64_t page = rng() % pages;
        auto on_page = [&](int64_t k) { return PhysAddr{line_base(g, page * lpp + static_cast<uint64_t>(k))}; };
        std::vector<PhysAddr> at;
        if (rng() % 2) {
            // a stream candidate, strides a little past the prefetcher's limit included
            const int64_t d = (rng() % 2 ? 1 : -1) * static_cast<int64_t>(1 + rng() % static_cast<uint64_t>(cfg.max_stride + 1));
            int64_t first;
            do first = static_cast<int64_t>(rng() % lpp);
            while (first + 2 * d < 0 || first + 2 * d >= static_cast<int64_t>(lpp));
            at = {on_page(first), on_page(first + d), on_page(first + 2 * d)};
        } else {
            std::set<uint64_t> lines;
            while (at.size() < 3) {
                const uint64_t k = rng() % lpp;
                if (!lines.insert(k).second) continue;
                // now and then a load on some other page
                at.push_back(rng() % 4 ? on_page(static_cast<int64_t>(k)) : PhysAddr{line_base(g, rng() % (pages * lpp))});
            }
        }
        unsigned n1 = static_cast<unsigned>(rng() % (gmax + 1)), n2 = static_cast<unsigned>(rng() % (gmax + 1));
        const bool inside = i < in_range;
        if (!inside) (rng() % 2 ? n1 : n2) = gmax + 1 + static_cast<unsigned>(rng() % 20);
        const auto tc = gap_program(at[0], n1, at[1], n2, at[2]);
        sim.reset();
        out.push_back({label(sim.execute(tc), ClassKey::prefetch_count), trace_of(tc), inside});
    }
    return out;
}

inline std::string labeled_traces_to_jsonl(const std::vector<LabeledTrace>& ts) {
    std::string s;
    for (const auto& t : ts) {
        nlohmann::json acc = nlohmann::json::array();
        for (const auto& r : t.trace) acc.push_back({{"data_addr", r.data_addr}, {"instr_addr", r.instr_addr}});
        s += nlohmann::json{{"in_range", t.in_range}, {"label", t.label}, {"trace", acc}}.dump() + "\n";
    }
    return s;
}

inline std::vector<LabeledTrace> parse_labeled_traces(const std::string& text) {
    std::vector<LabeledTrace> out;
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string path = "line " + std::to_string(n);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path, e.what());
        }
        if (!j.is_object() || !j.contains("trace") || !j["trace"].is_array()) throw ParseError(path + "/trace", "expected an array");
        LabeledTrace t;
        if (j.contains("label")) {
            if (!j["label"].is_string()) throw ParseError(path + "/label", "expected a string");
            t.label = j["label"].get<std::string>();
        }
        t.in_range = j.value("in_range", true);
        std::string acc;
        for (const auto& a : j["trace"]) acc += a.dump() + "\n";
        try {
            t.trace = parse_trace_jsonl(acc);
        } catch (const ParseError& e) {
            throw ParseError(path + "/trace", e.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

struct PageBoundaryResult {
    uint64_t placements = 0, prefetched = 0, crossing = 0, truncated = 0;
};

// Random three-load streams anywhere in a page; counts prefetched lines that
// leave the trigger's page.
inline PageBoundaryResult e8_page_boundary(const SimConfig& cfg, uint64_t n, uint64_t seed) {
    const CacheGeometry& g = cfg.geom;
    const int64_t lpp = static_cast<int64_t>(g.lines_per_page());
    const uint64_t pages = (g.addr_mask() + 1) / g.page_size_bytes;
    std::mt19937_64 rng(seed);
    Simulator sim(cfg);
    PageBoundaryResult r;
    while (r.placements < n) {
        const int64_t d = 1 + static_cast<int64_t>(rng() % static_cast<uint64_t>(cfg.max_stride));
        const int64_t stride = rng() & 1 ? d : -d;
        const int64_t first = static_cast<int64_t>(rng() % static_cast<uint64_t>(lpp));
        const int64_t last = first + 2 * stride;
        if (last < 0 || last >= lpp) continue;
        const uint64_t page = rng() % pages;
        auto at = [&](int64_t k) { return PhysAddr{line_base(g, page * static_cast<uint64_t>(lpp) + static_cast<uint64_t>(k))}; };
        const unsigned gap = static_cast<unsigned>(rng() % 8);
        sim.reset();
        const auto o = sim.execute(gap_program(at(first), 0, at(first + stride), gap, at(last)));
        ++r.placements;
        r.prefetched += o.prefetched.size();
        for (uint64_t p : o.prefetched)
            if (extract_field(g, PhysAddr{p}, Field::page) != page) ++r.crossing;
        if (o.prefetched.size() < cfg.prefetch_count(gap)) ++r.truncated;
    }
    return r;
}

inline const char* e8_gts = "slide{ M[t=t1,s=s1] M[t=t1,s=s1+1] M[t=t1,s=s1+2] ; 16 }";
inline const char* e9_gts =
    "merge{ merge{ (M[t=t1,s=s1])^{3,s+=1} | (M[t=t2,s=s2])^{3,s+=1} } | (M[t=t3,s=s3])^{3,s+=1} }";
inline const char* e10_gts = "pre{ M[t=t1,s=s1] } M[t=t1,s=s1] M[t=t1,s=s1+1] M[t=t1,s=s1+2]";

struct StreamLimitResult {
    RunResult run;
    uint64_t interleavings = 0, exactly_two = 0;
};

// Three streams on three pages, every interleaving; counts the pages that
// received prefetches.
inline StreamLimitResult e9_stream_limit(const SimConfig& cfg, uint64_t seed) {
    RunOptions opt;
    opt.sim = cfg;
    opt.seed = seed;
    StreamLimitResult r;
    r.run = run_gts(e9_gts, opt);
    for (const auto& rec : r.run.records) {
        std::set<uint64_t> pages;
        for (uint64_t p : rec.first.prefetched) pages.insert(extract_field(cfg.geom, PhysAddr{p}, Field::page));
        ++r.interleavings;
        r.exactly_two += pages.size() == 2;
    }
    return r;
}

inline RunResult e10_preloaded(const SimConfig& cfg, uint64_t seed) {
    RunOptions opt;
    opt.sim = cfg;
    opt.seed = seed;
    return run_gts(e10_gts, opt);
}

// ---------------------------------------------------------------- eviction

struct GridPoint {
    unsigned S = 0, C = 0, D = 0, L = 1;
    bool operator==(const GridPoint&) const = default;
    auto operator<=>(const GridPoint&) const = default;
};

inline std::vector<GridPoint> eviction_grid(unsigned smax = 8, unsigned cmax = 4, unsigned dmax = 4, unsigned lmax = 2) {
    std::vector<GridPoint> out;
    for (unsigned S = 1; S <= smax; ++S)
        for (unsigned C = 1; C <= cmax; ++C)
            for (unsigned D = 1; D <= dmax; ++D)
                for (unsigned L = 1; L <= lmax; ++L) out.push_back({S, C, D, L});
    return out;
}

inline std::string grid_point_name(const GridPoint& p) {
    return "S=" + std::to_string(p.S) + ",C=" + std::to_string(p.C) + ",D=" + std::to_string(p.D) + ",L=" +
           std::to_string(p.L);
}

// Outer iterations of the strategy: s = 0, L, 2L, ... while s <= S - D.
inline unsigned outer_steps(const GridPoint& p) { return p.S < p.D ? 0 : (p.S - p.D) / p.L + 1; }

// The preloaded line shares the set with every accessed line; all loop bounds
// are inclusive.
inline std::string eviction_gts(const GridPoint& p, unsigned rep) {
    std::string body;
    const unsigned k = outer_steps(p);
    if (k == 0) {
        body = "NOP";
    } else {
        body = "(((M[t=t1,s=s1])^{" + std::to_string(p.D + 1) + ",t+=1})^{" + std::to_string(p.C + 1) + "})^{" +
               std::to_string(k) + ",t+=" + std::to_string(p.L) + "}";
    }
    return "pre{ M[t=t2,s=s1] } rep{ " + body + " ; " + std::to_string(rep) + " }";
}

struct EvictionSweep {
    std::vector<GridPoint> points;
    std::vector<std::string> labels;  // evicted / not-evicted / unstable
    std::vector<RunRecord> records;
};

inline EvictionSweep eviction_sweep(SimConfig cfg, const std::vector<GridPoint>& pts, unsigned rep, uint64_t seed,
                                    double threshold = 0.95) {
    // the strategy is about replacement alone
    cfg.previction = false;
    cfg.prefetcher = false;
    EvictionSweep out;
    const std::string key = key_name(ClassKey::preloaded_eviction);
    for (size_t i = 0; i < pts.size(); ++i) {
        RunOptions opt;
        opt.sim = cfg;
        opt.seed = mix_seed(seed, i);
        auto res = run_gts(eviction_gts(pts[i], rep), opt);
        auto rec = res.records.at(0);
        auto cls = classify_trials({{rec.id, rec.labels(key)}}, threshold);
        out.points.push_back(pts[i]);
        out.labels.push_back(cls.at(0).label);
        rec.id = i;
        rec.variant = i;
        rec.provenance = grid_point_name(pts[i]);
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Rebuilds a sweep from archived records, reading each grid point back from
// the provenance string.
inline EvictionSweep eviction_sweep_from_records(const std::vector<RunRecord>& records, double threshold = 0.95) {
    const std::string key = key_name(ClassKey::preloaded_eviction);
    EvictionSweep out;
    for (const auto& rec : records) {
        GridPoint p;
        if (std::sscanf(rec.provenance.c_str(), "S=%u,C=%u,D=%u,L=%u", &p.S, &p.C, &p.D, &p.L) != 4)
            throw ParseError("/provenance", "record " + std::to_string(rec.id) + " is not an eviction grid point");
        out.points.push_back(p);
        out.labels.push_back(classify_trials({{rec.id, rec.labels(key)}}, threshold).at(0).label);
        out.records.push_back(rec);
    }
    return out;
}

// Per (D, L) and, where needed, per C: the smallest S that evicts, when the
// behavior is monotone in S. Non-monotone or unstable combinations are
// reported inconclusive.
inline LeakageTemplate eviction_lt(const EvictionSweep& sw, const CacheGeometry& g, std::vector<std::string>* notes = nullptr) {
    using Key = std::tuple<unsigned, unsigned, unsigned>;  // C, D, L
    std::map<Key, std::map<unsigned, std::string>> by;
    for (size_t i = 0; i < sw.points.size(); ++i) {
        const auto& p = sw.points[i];
        by[{p.C, p.D, p.L}][p.S] = sw.labels[i];
    }
    std::map<Key, std::optional<unsigned>> theta;  // nullopt: never evicts
    std::set<Key> bad;
    for (const auto& [k, row] : by) {
        std::optional<unsigned> t;
        bool ok = true;
        for (const auto& [S, l] : row) {
            if (l == unstable_label) ok = false;
            if (l == "evicted" && !t) t = S;
            if (t && l != "evicted") ok = false;
        }
        if (!ok) {
            bad.insert(k);
            if (notes)
                notes->push_back("inconclusive: C=" + std::to_string(std::get<0>(k)) + " D=" +
                                 std::to_string(std::get<1>(k)) + " L=" + std::to_string(std::get<2>(k)));
            continue;
        }
        theta[k] = t;
    }
    auto atom_eq = [](const std::string& sym, int64_t v) {
        Atom a;
        a.op = Atom::Eq;
        a.lhs = Term::count(sym);
        a.rhs = Term::constant(v);
        return a;
    };
    std::vector<Conjunction> rules;
    std::set<std::pair<unsigned, unsigned>> dl;
    for (const auto& [k, t] : theta) dl.insert({std::get<1>(k), std::get<2>(k)});
    for (auto [D, L] : dl) {
        // drop C when every C agrees on the threshold
        std::set<std::optional<unsigned>> ts;
        bool complete = true;
        for (const auto& [k, row] : by)
            if (std::get<1>(k) == D && std::get<2>(k) == L) {
                if (!theta.count(k)) complete = false;
                else ts.insert(theta.at(k));
            }
        auto emit = [&](std::optional<unsigned> C, std::optional<unsigned> t) {
            if (!t) return;
            Conjunction c;
            if (C) c.push_back(atom_eq("C", *C));
            c.push_back(atom_eq("D", D));
            c.push_back(atom_eq("L", L));
            Atom ge;
            ge.op = Atom::Ge;
            ge.lhs = Term::count("S");
            ge.rhs = Term::constant(*t);
            c.push_back(ge);
            rules.push_back(std::move(c));
        };
        if (complete && ts.size() == 1) {
            emit(std::nullopt, *ts.begin());
        } else {
            for (const auto& [k, t] : theta)
                if (std::get<1>(k) == D && std::get<2>(k) == L) emit(std::get<0>(k), t);
        }
    }
    LeakageTemplate lt;
    lt.code_template = {{TemplateInstr::Load, "p"},   {TemplateInstr::Arith, "S"}, {TemplateInstr::Arith, "C"},
                        {TemplateInstr::Arith, "D"}, {TemplateInstr::Arith, "L"}};
    lt.behaviors = {"evicted", "not-evicted"};
    if (!rules.empty()) lt.relation_map.push_back({"evicted", std::move(rules)});
    if (bad.empty()) lt.relation_map.push_back({"not-evicted", {Conjunction{}}});
    else lt.inconclusive.push_back("not-evicted");
    lt.metadata.geom = g;
    unsigned smax = 0, cmax = 0, dmax = 0, lmax = 0;
    for (const auto& p : sw.points) {
        smax = std::max(smax, p.S);
        cmax = std::max(cmax, p.C);
        dmax = std::max(dmax, p.D);
        lmax = std::max(lmax, p.L);
    }
    lt.metadata.tested = {{"S", 1, smax}, {"C", 1, cmax}, {"D", 1, dmax}, {"L", 1, lmax}};
    lt.metadata.provenance = {"eviction strategy grid"};
    check_closed(lt);
    return lt;
}

inline std::string evaluate_grid_point(const LeakageTemplate& lt, const GridPoint& p) {
    return evaluate_lt(lt, {}, {{"S", p.S}, {"C", p.C}, {"D", p.D}, {"L", p.L}});
}

}  // namespace plumber
