#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "analyze.hpp"
#include "gts.hpp"
#include "instantiate.hpp"
#include "lt.hpp"
#include "preprocess.hpp"
#include "simulator.hpp"

namespace plumber {

// splitmix64 step; every seed in a run is derived from the root seed with it
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct RunOptions {
    SimConfig sim;
    uint64_t seed = 1;
    uint64_t cap = default_expansion_cap;
    size_t shard_index = 0, shard_count = 1;
    unsigned jobs = 1;
    std::map<std::string, uint64_t> pin_tags, pin_sets;
    size_t keep_targets = 0;         // keep only the first k mutation targets (0 keeps all)
    std::vector<uint32_t> domain;    // mutation domain override
    std::function<void(size_t, ExpandedVariant&)> adjust;  // per-variant plan edits
};

struct RunRecord {
    uint64_t id = 0;
    size_t variant = 0;
    std::string provenance;
    std::vector<uint32_t> coords;
    std::vector<std::string> columns;  // "l<k>": k-th load of the program
    std::vector<uint64_t> mutated;
    std::vector<uint64_t> row;         // addresses of the mutated loads
    std::vector<uint64_t> loads;       // every load address, program order
    uint64_t trials = 1;
    std::map<std::string, std::map<std::string, uint64_t>> outcomes;  // key -> label -> trials
    Observation first;                 // observation of the first trial
    bool operator==(const RunRecord&) const = default;

    [[nodiscard]] std::vector<std::string> labels(const std::string& key) const {
        std::vector<std::string> out;
        auto it = outcomes.find(key);
        if (it == outcomes.end()) throw UnknownKey("record " + std::to_string(id) + " has no outcome for " + key);
        for (const auto& [l, n] : it->second) out.insert(out.end(), n, l);
        return out;
    }
};

struct RunResult {
    std::vector<ExpandedVariant> variants;
    std::vector<uint64_t> offsets;  // global id of each variant's first testcase
    uint64_t total = 0;
    std::vector<RunRecord> records;  // ascending id
    std::vector<std::string> store_log;
};

inline const std::vector<ClassKey>& all_keys() {
    static const std::vector<ClassKey> k{ClassKey::previction, ClassKey::prefetch_count, ClassKey::prefetched_set,
                                         ClassKey::preloaded_eviction, ClassKey::mispredict_bucket};
    return k;
}

// ---------------------------------------------------------------- archive format

inline constexpr int archive_schema_version = 1;

namespace detail {

using nlohmann::json;

inline json observation_to_json(const Observation& o) {
    json prev = json::array();
    for (const auto& p : o.previctions) {
        json e{{"line", p.line_addr}, {"instr", p.instr}};
        if (p.preloaded_evicted) e["preloaded_evicted"] = *p.preloaded_evicted;
        prev.push_back(e);
    }
    json cache = json::object();
    for (const auto& [s, ls] : o.final_cache) {
        json lines = json::array();
        for (const auto& l : ls) lines.push_back({{"addr", l.addr}, {"origin", origin_name(l.origin)}});
        cache[std::to_string(s)] = lines;
    }
    json probes = json::array();
    for (auto [a, p] : o.probes) probes.push_back({{"addr", a}, {"present", p}});
    json j{{"hits", o.hits},         {"previctions", prev},      {"prefetched", o.prefetched},
           {"evicted", o.evicted},   {"branches", o.branches},   {"mispredicted", o.mispredicted},
           {"probes", probes},       {"final_cache", cache},     {"pre_lines", o.pre_lines}};
    return j;
}

inline Origin origin_from_name(const std::string& s) {
    for (Origin o : {Origin::demand, Origin::prefetch, Origin::precondition})
        if (s == origin_name(o)) return o;
    throw ParseError("/observation/final_cache", "unknown line origin '" + s + "'");
}

inline Observation observation_from_json(const json& j) {
    Observation o;
    o.hits = j.at("hits").get<std::vector<bool>>();
    for (const auto& p : j.at("previctions")) {
        PrevictionEvent e;
        e.line_addr = p.at("line").get<uint64_t>();
        e.instr = p.at("instr").get<size_t>();
        if (p.contains("preloaded_evicted")) e.preloaded_evicted = p.at("preloaded_evicted").get<uint64_t>();
        o.previctions.push_back(e);
    }
    o.prefetched = j.at("prefetched").get<std::vector<uint64_t>>();
    o.evicted = j.at("evicted").get<std::vector<uint64_t>>();
    o.branches = j.at("branches").get<uint64_t>();
    o.mispredicted = j.at("mispredicted").get<uint64_t>();
    for (const auto& p : j.at("probes")) o.probes.emplace_back(p.at("addr").get<uint64_t>(), p.at("present").get<bool>());
    for (const auto& [s, ls] : j.at("final_cache").items()) {
        auto& out = o.final_cache[std::stoull(s)];
        for (const auto& l : ls) out.push_back({l.at("addr").get<uint64_t>(), origin_from_name(l.at("origin").get<std::string>())});
    }
    o.pre_lines = j.at("pre_lines").get<std::vector<uint64_t>>();
    return o;
}

}  // namespace detail

inline nlohmann::json record_to_json(const RunRecord& r) {
    return nlohmann::json{{"schema_version", archive_schema_version},
                          {"id", r.id},
                          {"variant", r.variant},
                          {"provenance", r.provenance},
                          {"coords", r.coords},
                          {"columns", r.columns},
                          {"mutated", r.mutated},
                          {"row", r.row},
                          {"loads", r.loads},
                          {"trials", r.trials},
                          {"outcomes", r.outcomes},
                          {"observation", detail::observation_to_json(r.first)}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema_version").get<int>() != archive_schema_version)
            throw SchemaVersionMismatch("archive schema version " + j.at("schema_version").dump());
        RunRecord r;
        r.id = j.at("id").get<uint64_t>();
        r.variant = j.at("variant").get<size_t>();
        r.provenance = j.at("provenance").get<std::string>();
        r.coords = j.at("coords").get<std::vector<uint32_t>>();
        r.columns = j.at("columns").get<std::vector<std::string>>();
        r.mutated = j.at("mutated").get<std::vector<uint64_t>>();
        r.row = j.at("row").get<std::vector<uint64_t>>();
        r.loads = j.at("loads").get<std::vector<uint64_t>>();
        r.trials = j.at("trials").get<uint64_t>();
        r.outcomes = j.at("outcomes").get<std::map<std::string, std::map<std::string, uint64_t>>>();
        r.first = detail::observation_from_json(j.at("observation"));
        r.first.testcase_id = r.id;
        r.first.coords = r.coords;
        if (r.columns.size() != r.row.size() || r.mutated.size() != r.row.size())
            throw ParseError("/row", "columns, mutated and row differ in length in record " + std::to_string(r.id));
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("/", std::string("malformed archive record: ") + e.what());
    }
}

inline std::string archive_to_jsonl(const std::vector<RunRecord>& rs) {
    std::string out;
    for (const auto& r : rs) out += record_to_json(r).dump() + "\n";
    return out;
}

inline std::vector<RunRecord> parse_archive(const std::string& text) {
    std::vector<RunRecord> out;
    std::istringstream in(text);
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(n), e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

// Concatenates shard outputs into id order; duplicates are an error.
inline std::vector<RunRecord> merge_records(std::vector<std::vector<RunRecord>> shards) {
    std::vector<RunRecord> out;
    for (auto& s : shards)
        for (auto& r : s) out.push_back(std::move(r));
    std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) { return a.id < b.id; });
    for (size_t i = 1; i < out.size(); ++i)
        if (out[i].id == out[i - 1].id) throw ParseError("/id", "record " + std::to_string(out[i].id) + " appears twice");
    return out;
}

// ---------------------------------------------------------------- running

inline RunRecord execute_testcase(Simulator& sim, const Testcase& tc, uint64_t gid, uint64_t root_seed,
                                  const std::vector<std::string>& columns, const std::vector<uint64_t>& mutated) {
    RunRecord r;
    r.id = gid;
    r.variant = tc.variant;
    r.provenance = tc.provenance;
    r.coords = tc.coords;
    r.columns = columns;
    r.mutated = mutated;
    for (size_t p : tc.targets) r.row.push_back(tc.instrs[p].addr.value);
    for (const auto& in : tc.instrs)
        if (in.kind == Instr::Load) r.loads.push_back(in.addr.value);
    r.trials = std::max<uint64_t>(tc.run_count, 1);
    for (uint64_t t = 0; t < r.trials; ++t) {
        sim.reseed(mix_seed(mix_seed(root_seed, gid), t));
        sim.reset();
        Observation o = sim.execute(tc);
        o.testcase_id = gid;
        for (ClassKey k : all_keys()) ++r.outcomes[key_name(k)][label(o, k)];
        if (t == 0) r.first = std::move(o);
    }
    return r;
}

inline std::vector<std::string> target_columns(const Testcase& tc) {
    std::vector<std::string> out;
    for (size_t p : tc.targets) {
        size_t k = 0;
        for (size_t i = 0; i <= p; ++i) k += tc.instrs[i].kind == Instr::Load;
        out.push_back("l" + std::to_string(k));
    }
    return out;
}

// parse -> expand -> bind -> instantiate -> execute
// Expansion plus the option-driven plan edits; the analysis side calls this
// again to recover each variant's directive sequence.
inline std::vector<ExpandedVariant> prepare_variants(const GtsAst& ast, const RunOptions& opt) {
    auto vs = expand(ast, mix_seed(opt.seed, 1), opt.cap);
    for (size_t v = 0; v < vs.size(); ++v) {
        auto& ev = vs[v];
        if (opt.keep_targets && ev.plan.targets.size() > opt.keep_targets) ev.plan.targets.resize(opt.keep_targets);
        if (!opt.domain.empty()) ev.plan.domain = opt.domain;
        if (opt.adjust) opt.adjust(v, ev);
    }
    return vs;
}

inline RunResult run_ast(const GtsAst& ast, const RunOptions& opt) {
    if (opt.shard_count == 0 || opt.shard_index >= opt.shard_count) throw ConfigError("bad shard specification");
    RunResult res;
    res.variants = prepare_variants(ast, opt);
    AddressStore store(opt.sim.geom, mix_seed(opt.seed, 2));
    for (const auto& [s, x] : opt.pin_tags) store.pin_tag(s, x);
    for (const auto& [s, x] : opt.pin_sets) store.pin_set(s, x);
    std::vector<DirectiveSeq> seqs;
    for (const auto& ev : res.variants) seqs.push_back(ev.seq);
    store.prepare(seqs);
    store.freeze();
    res.store_log = store.log();

    std::vector<std::unique_ptr<TestcaseFamily>> fams;
    for (const auto& ev : res.variants) {
        fams.push_back(std::make_unique<TestcaseFamily>(ev.seq, ev.plan, store));
        res.offsets.push_back(res.total);
        res.total += fams.back()->size();
    }
    // the cap bounds what one process executes; bigger families go through shards
    if (res.total / opt.shard_count > opt.cap)
        throw ExpansionTooLarge("shard would hold about " + std::to_string(res.total / opt.shard_count) +
                                " testcases, more than the cap of " + std::to_string(opt.cap));

    // work items: (variant, local index) in this shard
    std::vector<std::pair<size_t, uint64_t>> work;
    for (size_t v = 0; v < fams.size(); ++v)
        for (uint64_t i = 0; i < fams[v]->size(); ++i)
            if ((res.offsets[v] + i) % opt.shard_count == opt.shard_index) work.push_back({v, i});

    std::vector<std::vector<uint64_t>> masks;
    std::vector<std::vector<std::string>> cols;
    for (size_t v = 0; v < fams.size(); ++v) {
        masks.push_back(family_mutated_masks(*fams[v]));
        cols.push_back(target_columns(fams[v]->at(0)));
    }

    const unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(std::max<size_t>(work.size(), 1))));
    std::vector<std::vector<RunRecord>> parts(jobs);
    auto worker = [&](unsigned w) {
        Simulator sim(opt.sim);
        for (size_t k = w; k < work.size(); k += jobs) {
            auto [v, i] = work[k];
            Testcase tc = fams[v]->at(i);
            tc.variant = v;
            parts[w].push_back(execute_testcase(sim, tc, res.offsets[v] + i, opt.seed, cols[v], masks[v]));
        }
    };
    if (jobs == 1) {
        worker(0);
    } else {
        std::vector<std::thread> ts;
        for (unsigned w = 0; w < jobs; ++w) ts.emplace_back(worker, w);
        for (auto& t : ts) t.join();
    }
    res.records = merge_records(std::move(parts));
    return res;
}

inline RunResult run_gts(const std::string& text, const RunOptions& opt) { return run_ast(parse_gts(text), opt); }

// ---------------------------------------------------------------- analysis

struct VariantAnalysis {
    size_t variant = 0;
    std::string provenance;
    std::vector<std::string> columns;
    std::vector<BehaviorClass> classes;
    std::vector<BitTable> tables;           // one per stable class, when the variant mutates operands
    std::vector<ClassAnalysis> analyses;    // parallel to tables
    uint64_t rows = 0, disagreements = 0;   // analyzer prediction vs observed class
    std::vector<std::string> notes;
};

inline std::vector<VariantAnalysis> analyze_records(const std::vector<RunRecord>& records, const std::string& key,
                                                    const CacheGeometry& g, double threshold = 0.95,
                                                    const std::vector<Field>& invariant_fields = {}) {
    key_from_name(key);
    if (!(threshold > 0.5 && threshold <= 1.0)) throw ConfigError("class threshold must lie in (0.5, 1]");
    std::map<size_t, std::vector<const RunRecord*>> by;
    for (const auto& r : records) by[r.variant].push_back(&r);
    std::vector<VariantAnalysis> out;
    for (auto& [v, rs] : by) {
        std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->id < b->id; });
        VariantAnalysis va;
        va.variant = v;
        va.provenance = rs.front()->provenance;
        va.columns = rs.front()->columns;
        va.rows = rs.size();
        std::vector<std::pair<uint64_t, std::vector<std::string>>> runs;
        std::map<uint64_t, const RunRecord*> by_id;
        for (auto* r : rs) {
            runs.push_back({r->id, r->labels(key)});
            by_id[r->id] = r;
        }
        va.classes = classify_trials(runs, threshold);
        if (va.columns.empty()) {
            va.notes.push_back("no mutated operands; no candidates");
            out.push_back(std::move(va));
            continue;
        }
        for (const auto& c : va.classes) {
            if (c.label == unstable_label) continue;
            BitTable t;
            t.geom = g;
            t.columns = va.columns;
            t.mutated = rs.front()->mutated;
            for (uint64_t id : c.ids) {
                t.ids.push_back(id);
                t.rows.push_back(by_id.at(id)->row);
            }
            va.analyses.push_back(analyze_class(t, c.label, invariant_fields));
            va.tables.push_back(std::move(t));
        }
        std::vector<const ClassAnalysis*> specific;
        for (const auto& an : va.analyses)
            if (!an.fallback() && an.validation.valid) specific.push_back(&an);
        for (size_t i = 0; i < va.analyses.size(); ++i) {
            auto& an = va.analyses[i];
            if (!an.fallback() || an.validation.valid || specific.empty()) continue;
            auto v = validate_complement(va.tables[i], specific);
            if (v.valid) {
                an.validation = v;
                std::erase_if(an.notes, [](const std::string& n) { return n.rfind("inconclusive", 0) == 0; });
                an.notes.push_back("complement of the specific classes");
            }
        }
        for (const auto& c : va.classes) {
            if (c.label == unstable_label) continue;
            for (uint64_t id : c.ids) {
                auto p = predict(va.analyses, by_id.at(id)->row, g);
                if (!p || *p != c.label) ++va.disagreements;
            }
        }
        out.push_back(std::move(va));
    }
    return out;
}

// Code template of a directive sequence: loads become l1..ln, runs of
// arith/nop become one count slot, branch plumbing becomes a 1-wide wildcard.
inline std::pair<std::vector<TemplateInstr>, std::vector<CountRange>> sequence_template(const DirectiveSeq& seq) {
    std::vector<TemplateInstr> code;
    std::vector<CountRange> tested;
    size_t loads = 0, run = 0;
    auto flush = [&] {
        if (!run) return;
        const std::string sym = "n" + std::to_string(tested.size() + 1);
        code.push_back({TemplateInstr::Arith, sym, 0, 0});
        tested.push_back({sym, static_cast<int64_t>(run), static_cast<int64_t>(run)});
        run = 0;
    };
    for (const auto& d : seq.instructions) {
        switch (d.kind) {
            case DirKind::Mem:
                flush();
                code.push_back({TemplateInstr::Load, "l" + std::to_string(++loads), 0, 0});
                break;
            case DirKind::Arith:
            case DirKind::Nop: ++run; break;
            default:
                flush();
                code.push_back({TemplateInstr::Wildcard, "", 1, 1});
        }
    }
    flush();
    return {code, tested};
}

inline LeakageTemplate variant_lt(const VariantAnalysis& va, const DirectiveSeq& seq, const CacheGeometry& g) {
    auto [code, tested] = sequence_template(seq);
    LtMetadata meta;
    meta.geom = g;
    meta.tested = tested;
    meta.provenance = {va.provenance};
    return assemble_lt(code, va.analyses, meta, va.columns);
}

inline std::string bit_tables_csv(const std::vector<VariantAnalysis>& as) {
    std::string out;
    for (const auto& a : as)
        for (size_t i = 0; i < a.tables.size(); ++i)
            out += "# variant " + std::to_string(a.variant) + " class " + a.analyses[i].label + "\n" + a.tables[i].to_csv();
    return out;
}

inline std::string render_report(const std::vector<VariantAnalysis>& as, const CacheGeometry& g) {
    std::ostringstream s;
    for (const auto& a : as) {
        s << "variant " << a.variant << " (" << a.provenance << "): " << a.rows << " testcases\n";
        for (const auto& c : a.classes) s << "  class " << c.label << ": " << c.ids.size() << "\n";
        for (const auto& n : a.notes) s << "  note: " << n << "\n";
        for (const auto& an : a.analyses) {
            s << "  [" << an.label << "]";
            if (an.candidates.empty() && an.candidate_pairs.empty()) s << " no candidates";
            s << "\n";
            for (const auto& r : an.relations) s << "    " << render_relation(r, a.columns, g) << "\n";
            for (const auto& n : an.notes) s << "    note: " << n << "\n";
            s << "    validation: " << (an.validation.valid ? "valid" : "INVALID (" + an.validation.reason + ")") << "\n";
        }
        if (!a.analyses.empty()) s << "  disagreements: " << a.disagreements << "\n";
    }
    return s.str();
}

}  // namespace plumber
