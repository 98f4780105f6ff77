#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "core_types.hpp"
#include "instantiate.hpp"

namespace plumber {

enum class Origin { demand, prefetch, precondition };
enum class Policy { lru, fifo, random };

inline const char* origin_name(Origin o) {
    switch (o) {
        case Origin::demand: return "demand";
        case Origin::prefetch: return "prefetch";
        case Origin::precondition: return "precondition";
    }
    return "?";
}

inline const char* policy_name(Policy p) {
    switch (p) {
        case Policy::lru: return "lru";
        case Policy::fifo: return "fifo";
        case Policy::random: return "random";
    }
    return "?";
}

inline std::optional<Policy> policy_from_name(const std::string& s) {
    if (s == "lru") return Policy::lru;
    if (s == "fifo") return Policy::fifo;
    if (s == "random") return Policy::random;
    return std::nullopt;
}

struct SimConfig {
    CacheGeometry geom;
    Policy policy = Policy::lru;
    uint64_t seed = 0;
    bool previction = true;
    bool prefetcher = true;
    unsigned max_streams = 2;
    int64_t max_stride = 4;
    unsigned base_prefetch = 3;
    std::map<unsigned, unsigned> prefetch_by_gap{{3, 4}, {4, 7}, {5, 3}};
    unsigned fifth_load_total = 4;
    unsigned bp_tables = 3;
    unsigned bp_entries = 1024;
    unsigned bhr_bits = 10;

    [[nodiscard]] unsigned prefetch_count(unsigned gap) const {
        auto it = prefetch_by_gap.find(gap);
        return it == prefetch_by_gap.end() ? base_prefetch : it->second;
    }
};

struct CachedLine {
    uint64_t addr = 0;  // line base address
    Origin origin = Origin::demand;
    bool operator==(const CachedLine&) const = default;
};

struct PrevictionEvent {
    uint64_t line_addr = 0;
    size_t instr = 0;
    std::optional<uint64_t> preloaded_evicted;
    bool operator==(const PrevictionEvent&) const = default;
};

struct BranchEvent {
    size_t instr = 0;
    bool taken = false;
    bool mispredicted = false;
    bool operator==(const BranchEvent&) const = default;
};

struct Observation {
    uint64_t testcase_id = 0;
    std::vector<uint32_t> coords;
    std::vector<bool> hits;  // one per executed load
    std::vector<PrevictionEvent> previctions;
    std::vector<uint64_t> prefetched;  // line base addresses in issue order
    std::vector<uint64_t> evicted;     // line base addresses in eviction order
    uint64_t branches = 0, mispredicted = 0;
    std::optional<BranchEvent> last_branch;
    std::vector<std::pair<uint64_t, bool>> probes;
    std::map<uint64_t, std::vector<CachedLine>> final_cache;  // set index -> lines, most recent last
    std::vector<uint64_t> pre_lines;
    bool operator==(const Observation&) const = default;
};

class Simulator {
public:
    explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.geom.validate();
        sets_.resize(cfg_.geom.num_sets);
        pht_.resize(cfg_.bp_tables);
        bhr_.assign(cfg_.bp_tables, 0);
        reset();
    }

    [[nodiscard]] const SimConfig& config() const { return cfg_; }
    [[nodiscard]] const CacheGeometry& geom() const { return cfg_.geom; }

    void reseed(uint64_t seed) {
        cfg_.seed = seed;
        rng_.seed(seed);
    }

    void reset() {
        for (auto& s : sets_) s.clear();
        rng_.seed(cfg_.seed);
        clock_ = 0;
        clear_run_state();
        for (auto& t : pht_) t.clear();
        std::fill(bhr_.begin(), bhr_.end(), 0);
        previctions_ = mispredictions_ = prefetch_issues_ = 0;
    }

    enum class Access { hit, miss };

    Access cache_access(PhysAddr a) { return access(a, Origin::demand).first; }

    [[nodiscard]] bool probe(PhysAddr a) const {
        const uint64_t line = line_index(cfg_.geom, a);
        for (const auto& l : sets_[set_of_line(line)])
            if (l.line == line) return true;
        return false;
    }

    // Executes one testcase against the current state. Callers reset first
    // unless they want to keep a primed cache or trained predictor.
    Observation execute(const Testcase& tc, const std::vector<PhysAddr>& probes = {}) {
        clear_run_state();
        obs_ = Observation{};
        obs_.testcase_id = tc.id;
        obs_.coords = tc.coords;
        for (PhysAddr a : tc.pre_loads) {
            access(a, Origin::precondition);
            obs_.pre_lines.push_back(line_base(cfg_.geom, line_index(cfg_.geom, a)));
        }
        std::unordered_map<std::string, bool> vars;
        size_t pc = 0;
        while (pc < tc.instrs.size()) {
            const Instr& in = tc.instrs[pc];
            size_t next = pc + 1;
            switch (in.kind) {
                case Instr::Load: load(in.addr, pc); break;
                case Instr::Arith:
                case Instr::Nop: ++visible_; break;
                case Instr::SetVar:
                    vars[in.var] = in.value;
                    ++visible_;
                    break;
                case Instr::Branch: {
                    auto it = vars.find(in.var);
                    const bool v = it != vars.end() && it->second;
                    const bool taken = v == in.value;
                    const bool miss = branch_execute(tc.instr_addr(pc), taken);
                    obs_.last_branch = BranchEvent{pc, taken, miss};
                    ++visible_;
                    if (taken) next = pc + in.steps;
                    break;
                }
            }
            pc = next;
        }
        for (PhysAddr p : probes) obs_.probes.emplace_back(p.value, probe(p));
        for (size_t s = 0; s < sets_.size(); ++s) {
            if (sets_[s].empty()) continue;
            auto lines = sets_[s];
            std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.used < b.used; });
            auto& out = obs_.final_cache[s];
            for (const auto& l : lines) out.push_back({line_base(cfg_.geom, l.line), l.origin});
        }
        return std::move(obs_);
    }

    // Returns true when the branch was mispredicted.
    bool branch_execute(uint64_t branch_addr, bool taken) {
        const size_t t = branch_addr % cfg_.bp_tables;
        const uint64_t hmask = (uint64_t{1} << cfg_.bhr_bits) - 1;
        const uint64_t key = (branch_addr << cfg_.bhr_bits) | (bhr_[t] & hmask);
        auto& table = pht_[t];
        bool miss;
        auto it = table.find(key);
        if (it == table.end() && table.size() < cfg_.bp_entries) it = table.emplace(key, uint8_t{1}).first;
        if (it == table.end()) {
            miss = true;  // the table is full and holds no entry for this history
        } else {
            uint8_t& c = it->second;
            miss = (c >= 2) != taken;
            if (taken && c < 3) ++c;
            if (!taken && c > 0) --c;
        }
        bhr_[t] = ((bhr_[t] << 1) | (taken ? 1 : 0)) & hmask;
        ++obs_.branches;
        if (miss) {
            ++obs_.mispredicted;
            ++mispredictions_;
        }
        return miss;
    }

    [[nodiscard]] uint64_t pmu_previctions() const { return previctions_; }
    [[nodiscard]] uint64_t pmu_mispredictions() const { return mispredictions_; }
    [[nodiscard]] uint64_t pmu_prefetches() const { return prefetch_issues_; }
    [[nodiscard]] size_t occupancy(uint64_t set) const { return sets_.at(set).size(); }
    [[nodiscard]] uint64_t bhr(size_t table) const { return bhr_.at(table); }
    [[nodiscard]] size_t pht_entries(size_t table) const { return pht_.at(table).size(); }
    [[nodiscard]] unsigned active_streams() const { return static_cast<unsigned>(streams_.size()); }

private:
    struct Line {
        uint64_t line = 0;
        Origin origin = Origin::demand;
        uint64_t inserted = 0, used = 0;
        bool touched = false;  // a prefetched line that a demand load has used
    };

    struct Stream {
        uint64_t page = 0;
        uint64_t last = 0;
        int64_t stride = 0;
        unsigned matches = 3;
        unsigned ahead = 0;  // lines ahead of the trigger that were requested
        unsigned issued = 0;
        uint64_t trigger = 0;
    };

    struct MissRec {
        uint64_t line;
        uint64_t pos;
    };

    struct LoadRec {
        PhysAddr addr;
        size_t instr;
    };

    void clear_run_state() {
        streams_.clear();
        page_hist_.clear();
        window_.clear();
        visible_ = 0;
    }

    [[nodiscard]] uint64_t set_of_line(uint64_t line) const { return line & (cfg_.geom.num_sets - 1); }
    [[nodiscard]] uint64_t page_of_line(uint64_t line) const {
        const unsigned shift = CacheGeometry::log2(cfg_.geom.page_size_bytes) - cfg_.geom.line_bits();
        return line >> shift;
    }

    size_t victim(const std::vector<Line>& set) {
        if (cfg_.policy == Policy::random) {
            std::uniform_int_distribution<size_t> d(0, set.size() - 1);
            return d(rng_);
        }
        size_t v = 0;
        for (size_t i = 1; i < set.size(); ++i) {
            const uint64_t a = cfg_.policy == Policy::lru ? set[i].used : set[i].inserted;
            const uint64_t b = cfg_.policy == Policy::lru ? set[v].used : set[v].inserted;
            if (a < b) v = i;
        }
        return v;
    }

    void evict_at(std::vector<Line>& set, size_t i) {
        obs_.evicted.push_back(line_base(cfg_.geom, set[i].line));
        set.erase(set.begin() + static_cast<std::ptrdiff_t>(i));
    }

    // Returns hit/miss and, for hits, whether the line was an untouched prefetch.
    std::pair<Access, bool> access(PhysAddr a, Origin origin) {
        const uint64_t line = line_index(cfg_.geom, a);
        auto& set = sets_[set_of_line(line)];
        ++clock_;
        for (auto& l : set)
            if (l.line == line) {
                if (origin == Origin::prefetch) return {Access::hit, false};
                const bool fresh_prefetch = l.origin == Origin::prefetch && !l.touched;
                if (l.origin == Origin::prefetch) l.touched = true;
                l.used = clock_;
                return {Access::hit, fresh_prefetch};
            }
        if (set.size() >= cfg_.geom.associativity) evict_at(set, victim(set));
        set.push_back(Line{line, origin, clock_, clock_, false});
        return {Access::miss, false};
    }

    void load(PhysAddr a, size_t instr) {
        auto [res, fresh_prefetch] = access(a, Origin::demand);
        obs_.hits.push_back(res == Access::hit);
        const uint64_t pos = visible_;
        // the prefetcher ignores ordinary hits, so they do not count as
        // intervening instructions either
        if (res == Access::miss || fresh_prefetch) ++visible_;
        if (cfg_.previction) {
            window_.push_back({a, instr});
            if (window_.size() > 5) window_.pop_front();
            if (window_.size() == 5) previction_check(instr);
        }
        if (cfg_.prefetcher && (res == Access::miss || fresh_prefetch))
            prefetcher_on_access(line_index(cfg_.geom, a), pos, res == Access::miss);
    }

    void previction_check(size_t instr) {
        const CacheGeometry& g = cfg_.geom;
        const uint64_t set = extract_field(g, window_[0].addr, Field::set);
        for (const auto& r : window_)
            if (extract_field(g, r.addr, Field::set) != set) return;
        for (size_t i = 0; i + 2 < window_.size(); ++i) {
            const uint64_t tag = extract_field(g, window_[i].addr, Field::tag);
            if (extract_field(g, window_[i + 1].addr, Field::tag) != tag ||
                extract_field(g, window_[i + 2].addr, Field::tag) != tag)
                continue;
            bool others_differ = true;
            for (size_t j = 0; j < window_.size(); ++j)
                if ((j < i || j > i + 2) && extract_field(g, window_[j].addr, Field::tag) == tag)
                    others_differ = false;
            if (!others_differ) continue;
            const uint64_t nb = g.buses_per_line();
            const uint64_t b_first = extract_field(g, window_[i].addr, Field::bus);
            const uint64_t b_second = extract_field(g, window_[i + 1].addr, Field::bus);
            if (b_first == (b_second + 1) % nb) return;
            fire_previction(line_index(g, window_[i].addr), set, instr);
            return;
        }
    }

    void fire_previction(uint64_t line, uint64_t set_idx, size_t instr) {
        auto& set = sets_[set_idx];
        PrevictionEvent ev{line_base(cfg_.geom, line), instr, std::nullopt};
        size_t pre_count = 0;
        for (const auto& l : set) pre_count += l.origin == Origin::precondition;
        std::optional<uint64_t> pre_victim;
        if (pre_count == 2) {
            const Line* oldest = nullptr;
            for (const auto& l : set)
                if (l.origin == Origin::precondition && (!oldest || l.used < oldest->used)) oldest = &l;
            pre_victim = oldest->line;
        }
        for (size_t i = 0; i < set.size(); ++i)
            if (set[i].line == line) {
                evict_at(set, i);
                break;
            }
        if (pre_victim) {
            for (size_t i = 0; i < set.size(); ++i)
                if (set[i].line == *pre_victim) {
                    evict_at(set, i);
                    break;
                }
            ev.preloaded_evicted = line_base(cfg_.geom, *pre_victim);
        }
        obs_.previctions.push_back(ev);
        ++previctions_;
        window_.clear();
    }

    void issue(Stream& s, unsigned upto) {
        while (s.ahead < upto) {
            ++s.ahead;
            const int64_t target = static_cast<int64_t>(s.trigger) + s.stride * static_cast<int64_t>(s.ahead);
            if (target < 0) {
                s.ahead = upto;
                break;
            }
            const uint64_t line = static_cast<uint64_t>(target);
            if (page_of_line(line) != s.page) {
                s.ahead = upto;  // never cross into the next page
                break;
            }
            const PhysAddr a{line_base(cfg_.geom, line)};
            if (probe(a)) continue;
            access(a, Origin::prefetch);
            obs_.prefetched.push_back(a.value);
            ++s.issued;
            ++prefetch_issues_;
        }
    }

    void prefetcher_on_access(uint64_t line, uint64_t pos, bool miss) {
        const uint64_t page = page_of_line(line);
        for (auto& s : streams_) {
            if (s.page != page) continue;
            if (static_cast<int64_t>(line) - static_cast<int64_t>(s.last) != s.stride) continue;
            s.last = line;
            ++s.matches;
            // the fifth matching load tops a short run up
            if (s.matches == 5 && s.ahead < cfg_.fifth_load_total) issue(s, cfg_.fifth_load_total);
            return;
        }
        if (!miss) return;
        auto& hist = page_hist_[page];
        if (hist.size() == 2) {
            const int64_t d1 = static_cast<int64_t>(hist[1].line) - static_cast<int64_t>(hist[0].line);
            const int64_t d2 = static_cast<int64_t>(line) - static_cast<int64_t>(hist[1].line);
            const bool page_busy = std::any_of(streams_.begin(), streams_.end(),
                                               [&](const Stream& s) { return s.page == page; });
            if (d1 == d2 && d1 != 0 && std::abs(d1) <= cfg_.max_stride && !page_busy) {
                if (streams_.size() < cfg_.max_streams) {
                    Stream s;
                    s.page = page;
                    s.last = line;
                    s.stride = d1;
                    s.trigger = line;
                    const uint64_t gap = pos - hist[1].pos - 1;
                    issue(s, cfg_.prefetch_count(static_cast<unsigned>(std::min<uint64_t>(gap, 1u << 20))));
                    streams_.push_back(s);
                }
                hist.clear();
                return;
            }
            hist.pop_front();
        }
        hist.push_back({line, pos});
    }

    SimConfig cfg_;
    std::vector<std::vector<Line>> sets_;
    std::mt19937_64 rng_;
    uint64_t clock_ = 0;
    std::vector<Stream> streams_;
    std::map<uint64_t, std::deque<MissRec>> page_hist_;
    std::deque<LoadRec> window_;
    uint64_t visible_ = 0;
    std::vector<std::unordered_map<uint64_t, uint8_t>> pht_;
    std::vector<uint64_t> bhr_;
    uint64_t previctions_ = 0, mispredictions_ = 0, prefetch_issues_ = 0;
    Observation obs_;
};

}  // namespace plumber
