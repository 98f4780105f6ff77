#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core_types.hpp"
#include "errors.hpp"
#include "instantiate.hpp"
#include "simulator.hpp"

namespace plumber {

struct ChannelScenario {
    std::string name;
    std::function<Testcase(bool)> sender;
    std::vector<PhysAddr> priming;  // lines the receiver loads before the sender runs
    std::vector<PhysAddr> probes;
    std::function<bool(const Observation&)> receiver;
};

inline std::vector<std::string> channel_names() { return {"PR_FR", "PR_PP", "PRF_CF", "PRF_IS", "PRF_OS"}; }

namespace detail {

inline Instr ld(PhysAddr a) {
    Instr i;
    i.kind = Instr::Load;
    i.addr = a;
    return i;
}
inline Instr arith() {
    Instr i;
    i.kind = Instr::Arith;
    return i;
}
inline Instr nop() { return Instr{}; }
inline Instr setvar(const std::string& v, bool value) {
    Instr i;
    i.kind = Instr::SetVar;
    i.var = v;
    i.value = value;
    return i;
}
// taken when the variable equals `value`; a taken branch moves pc by `steps`
inline Instr branch(const std::string& v, bool value, unsigned steps) {
    Instr i;
    i.kind = Instr::Branch;
    i.var = v;
    i.value = value;
    i.steps = steps;
    return i;
}

inline bool probed(const Observation& o, PhysAddr a) {
    for (auto [addr, present] : o.probes)
        if (addr == a.value) return present;
    throw ScenarioConfigError("address was not probed");
}

// Two adjacent gaps whose prefetch counts differ the most, searched over
// small gaps; the channel toggles between them.
struct GapPair {
    unsigned gap = 0;
    unsigned lo = 0, hi = 0;
    bool upper_is_hi = false;  // f(gap + 1) is the larger count
};

inline GapPair gap_pair(const SimConfig& cfg, unsigned min_gap) {
    GapPair best;
    unsigned best_d = 0;
    for (unsigned g = min_gap; g <= 10; ++g) {
        const unsigned a = cfg.prefetch_count(g), b = cfg.prefetch_count(g + 1);
        const unsigned d = a > b ? a - b : b - a;
        if (d > best_d) {
            best_d = d;
            best = {g, std::min(a, b), std::max(a, b), b > a};
        }
    }
    if (best_d == 0) throw ScenarioConfigError("prefetch count does not depend on the gap");
    return best;
}

// Offset past the trigger that is prefetched only by the longer run; six lines
// (x1 + 512 with 64-byte lines) when that falls inside the window.
inline unsigned probe_offset(const GapPair& p) { return p.lo < 6 && 6 <= p.hi ? 6 : p.hi; }

}  // namespace detail

// Builds one of the named channels for a simulator configuration.
inline ChannelScenario make_channel(const std::string& name, const SimConfig& cfg) {
    using namespace detail;
    const CacheGeometry& g = cfg.geom;
    g.validate();
    ChannelScenario s;
    s.name = name;
    const uint64_t max_tag = g.range(Field::tag).count();
    if (max_tag < 8) throw ScenarioConfigError("too few tags for the channel layout");

    if (name == "PR_FR" || name == "PR_PP") {
        if (!cfg.previction) throw ScenarioConfigError(name + " needs previction enabled");
        if (g.buses_per_line() < 2) throw ScenarioConfigError(name + " needs at least two buses per line");
        const bool pp = name == "PR_PP";
        if (pp && g.associativity < 4) throw ScenarioConfigError("PR_PP needs at least 4 ways");
        if (!pp && g.associativity < 3) throw ScenarioConfigError("PR_FR needs at least 3 ways");
        const uint64_t set = 5 % g.num_sets, bus = g.bus_size_bytes;
        // x1 sits on the bus after x2's when the bit is 1, which keeps the
        // sequence from previcting
        const PhysAddr x1_prev = compose_addr(g, 3, set, 0);
        const PhysAddr x1_keep = compose_addr(g, 3, set, bus);
        const PhysAddr x2 = compose_addr(g, 3, set, bus > 4 ? 4 : 0);
        const PhysAddr x3 = compose_addr(g, 3, set, (2 % g.buses_per_line()) * bus + (bus > 8 ? 8 : 0));
        // in PR_PP x4 and x5 share a line so the primed lines survive capacity
        const PhysAddr x4 = compose_addr(g, 4, set, 0);
        const PhysAddr x5 = compose_addr(g, pp ? 4 : 5, set, pp ? 8 : 0);
        s.sender = [=](bool bit) {
            Testcase tc;
            tc.provenance = name;
            tc.instrs = {setvar("s", bit), branch("s", true, 2), ld(x1_prev), branch("s", false, 2), ld(x1_keep),
                         ld(x2),           ld(x3),              ld(x4),      ld(x5)};
            return tc;
        };
        if (pp) {
            const PhysAddr p1 = compose_addr(g, 6, set, 0), p2 = compose_addr(g, 7, set, 0);
            s.priming = {p1, p2};
            s.probes = {p1};
            s.receiver = [p1](const Observation& o) { return probed(o, p1); };
        } else {
            s.probes = {x1_prev};
            s.receiver = [x1_prev](const Observation& o) { return probed(o, x1_prev); };
        }
        return s;
    }

    if (name == "PRF_CF" || name == "PRF_IS" || name == "PRF_OS") {
        if (!cfg.prefetcher) throw ScenarioConfigError(name + " needs the prefetcher enabled");
        if (g.lines_per_page() < 16 || g.num_sets < 16)
            throw ScenarioConfigError(name + " needs at least 16 lines per page and 16 sets");
        // line k of a page, starting two lines in
        auto line_at = [g](uint64_t page_no, uint64_t k) {
            const uint64_t lpp = g.lines_per_page();
            return PhysAddr{line_base(g, page_no * lpp + 2 + k)};
        };
        const uint64_t page = 0x40;

        if (name == "PRF_OS") {
            if (cfg.max_streams + 1 > g.associativity)
                throw ScenarioConfigError("PRF_OS needs one way per interleaved stream");
            const unsigned n = cfg.max_streams + 1;
            std::vector<uint64_t> pages;
            for (unsigned i = 0; i < n; ++i) pages.push_back(page + i);
            // the probe sits on the last stream, which only gets a prefetch
            // engine when the first stream goes unnoticed
            const PhysAddr x3 = line_at(pages[0], 0);
            const PhysAddr probe = line_at(pages.back(), 3);
            s.sender = [=](bool bit) {
                Testcase tc;
                tc.provenance = name;
                if (bit) tc.pre_loads = {x3};
                for (uint64_t k = 0; k < 3; ++k)
                    for (uint64_t p : pages) tc.instrs.push_back(ld(line_at(p, k)));
                return tc;
            };
            s.probes = {probe};
            s.receiver = [probe](const Observation& o) { return probed(o, probe); };
            return s;
        }

        const bool cf = name == "PRF_CF";
        const GapPair gp = gap_pair(cfg, cf ? 1 : 0);
        const PhysAddr probe = line_at(page, 2 + probe_offset(gp));
        if (2 + probe_offset(gp) + 3 >= g.lines_per_page())
            throw ScenarioConfigError(name + " prefetch window does not fit in a page");
        if (cf) {
            // the branch counts as one intervening instruction; the skipped
            // arith adds the second
            s.sender = [=](bool bit) {
                Testcase tc;
                tc.provenance = name;
                tc.instrs = {setvar("s", bit), ld(line_at(page, 0)), arith(), ld(line_at(page, 1))};
                for (unsigned i = 0; i + 1 < gp.gap; ++i) tc.instrs.push_back(arith());
                tc.instrs.push_back(branch("s", false, 2));
                tc.instrs.push_back(arith());
                tc.instrs.push_back(ld(line_at(page, 2)));
                tc.instrs.push_back(arith());
                tc.instrs.push_back(ld(line_at(page, 3)));
                return tc;
            };
            s.receiver = [probe, gp](const Observation& o) { return probed(o, probe) == gp.upper_is_hi; };
        } else {
            // x10 lives on another page; when the victim touched it earlier the
            // load is a hit and the prefetcher does not count it
            const PhysAddr x10 = line_at(page + 8, 5);
            s.sender = [=](bool bit) {
                Testcase tc;
                tc.provenance = name;
                if (bit) tc.pre_loads = {x10};
                tc.instrs = {ld(line_at(page, 0)), arith(), ld(line_at(page, 1))};
                for (unsigned i = 0; i < gp.gap; ++i) tc.instrs.push_back(arith());
                tc.instrs.push_back(ld(x10));
                tc.instrs.push_back(ld(line_at(page, 2)));
                return tc;
            };
            s.receiver = [probe, gp](const Observation& o) { return probed(o, probe) != gp.upper_is_hi; };
        }
        s.probes = {probe};
        return s;
    }
    throw ScenarioConfigError("unknown channel '" + name + "'");
}

// Runs every bit on a freshly reset simulator.
inline std::vector<bool> encode_decode(const ChannelScenario& scn, const std::vector<bool>& bits, const SimConfig& cfg) {
    if (!scn.sender || !scn.receiver) throw ScenarioConfigError("channel is missing a sender or receiver");
    Simulator sim(cfg);
    std::vector<bool> out;
    out.reserve(bits.size());
    for (bool b : bits) {
        sim.reset();
        Testcase tc = scn.sender(b);
        tc.pre_loads.insert(tc.pre_loads.begin(), scn.priming.begin(), scn.priming.end());
        out.push_back(scn.receiver(sim.execute(tc, scn.probes)));
    }
    return out;
}

// ---------------------------------------------------------------- branch predictor

struct BpLayout {
    unsigned setup_blocks = 9;  // branches on each setup path; with the setup branch they fill a 10-bit history
    unsigned alternate_every = 16;
};

// Initial branches x X, setup branch, setup-1 / setup-2 paths, Y nops and the
// spy branch. Every branch sits at an index of the same residue mod 3 so all
// share one history register and table.
inline Testcase bp_program(unsigned X, unsigned Y, bool v, const BpLayout& lay = {}) {
    using namespace detail;
    Testcase tc;
    tc.provenance = "bp";
    auto& in = tc.instrs;
    for (unsigned i = 0; i < X; ++i) {
        in.push_back(branch("b1", true, 3));
        in.push_back(setvar("b2", true));
        in.push_back(nop());
    }
    const unsigned path = 3 * lay.setup_blocks;
    in.push_back(setvar("b1", v));
    in.push_back(setvar("b2", true));
    in.push_back(nop());
    in.push_back(branch("b1", false, 3 + path));  // v false: skip to setup-2
    in.push_back(nop());
    in.push_back(nop());
    for (unsigned i = 0; i < lay.setup_blocks; ++i) {
        const bool last = i + 1 == lay.setup_blocks;
        in.push_back(branch("b2", true, last ? 3 + path : 3));
        in.push_back(setvar("b2", true));
        in.push_back(nop());
    }
    for (unsigned i = 0; i < lay.setup_blocks; ++i) {
        in.push_back(branch("b2", false, 3));
        in.push_back(setvar("b2", true));
        in.push_back(nop());
    }
    for (unsigned i = 0; i < Y + (3 - Y % 3) % 3; ++i) in.push_back(nop());
    in.push_back(branch("b1", true, 1));
    return tc;
}

inline double run_bp_experiment(unsigned X, unsigned Y, unsigned trials, SimConfig cfg = {},
                                const BpLayout& lay = {}) {
    if (trials == 0) throw ScenarioConfigError("misprediction rate is undefined for zero trials");
    cfg.previction = false;
    cfg.prefetcher = false;
    Simulator sim(cfg);
    const Testcase p1 = bp_program(X, Y, true, lay), p2 = bp_program(X, Y, false, lay);
    uint64_t missed = 0;
    for (unsigned t = 0; t < trials; ++t) {
        const bool v = (t / lay.alternate_every) % 2 == 0;
        const Observation o = sim.execute(v ? p1 : p2);
        if (o.last_branch && o.last_branch->mispredicted) ++missed;
    }
    return static_cast<double>(missed) / trials;
}

}  // namespace plumber
