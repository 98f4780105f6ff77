#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <variant>

#include "casestudies.hpp"
#include "scenarios.hpp"

namespace plumber {

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_cap = 3,
    exit_io = 4,
    exit_degenerate = 5,
    exit_parse = 6,
};

struct IoError : Error {
    using Error::Error;
};

struct TooManyParseFailures : Error {
    using Error::Error;
};

// ---------------------------------------------------------------- config files

// A flat subset of TOML: [section] headers, key = value lines, # comments.
// Values are quoted strings, booleans, integers (decimal or 0x) or floats.
using ConfigValue = std::variant<std::string, int64_t, double, bool>;

struct ConfigFile {
    std::map<std::string, ConfigValue> values;  // "section.key" -> value
    std::filesystem::path dir;                  // relative paths resolve here
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

inline ConfigValue parse_config_value(const std::string& v, int lineno) {
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (v.empty()) throw ConfigError(where + "missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw ConfigError(where + "unterminated string");
        std::string s;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                const char c = v[++i];
                s += c == 'n' ? '\n' : c == 't' ? '\t' : c;
            } else {
                s += v[i];
            }
        }
        return s;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    try {
        size_t used = 0;
        if (v.find_first_of(".eE") == std::string::npos || v.rfind("0x", 0) == 0) {
            const int64_t x = std::stoll(v, &used, 0);
            if (used == v.size()) return x;
        } else {
            const double x = std::stod(v, &used);
            if (used == v.size()) return x;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError(where + "cannot read value '" + v + "'");
}

}  // namespace detail

inline ConfigFile parse_config(const std::string& text, std::filesystem::path dir = {}) {
    ConfigFile cf;
    cf.dir = std::move(dir);
    std::istringstream in(text);
    std::string raw, section;
    for (int n = 1; std::getline(in, raw); ++n) {
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(n) + ": unterminated section");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cf.values.count(full)) throw ConfigError("config line " + std::to_string(n) + ": duplicate key " + full);
        cf.values[full] = detail::parse_config_value(detail::trim(line.substr(eq + 1)), n);
    }
    return cf;
}

inline std::pair<size_t, size_t> parse_shard(const std::string& text) {
    size_t i = 0, k = 0;
    char slash = 0;
    std::istringstream s(text);
    if (!(s >> i >> slash >> k) || slash != '/' || k == 0 || i >= k || !s.eof())
        throw ConfigError("shard must look like i/k with i < k");
    return {i, k};
}

struct GridBounds {
    unsigned smax = 8, cmax = 4, dmax = 4, lmax = 2, rep = 1;
};

struct ExperimentConfig {
    std::string experiment = "gts";  // gts | eviction
    RunOptions run;
    std::filesystem::path gts_path;
    std::string gts_text;
    std::string key = key_name(ClassKey::previction);
    double threshold = 0.95;
    std::vector<Field> invariant;
    std::filesystem::path archive;  // empty: next to the config
    GridBounds grid;
};

inline ExperimentConfig experiment_from(const ConfigFile& cf) {
    ExperimentConfig ec;
    ec.run.jobs = std::max(1u, std::thread::hardware_concurrency());
    std::set<std::string> used;
    auto get = [&](const std::string& k) -> const ConfigValue* {
        auto it = cf.values.find(k);
        if (it == cf.values.end()) return nullptr;
        used.insert(k);
        return &it->second;
    };
    auto str = [&](const std::string& k, std::string& dst) {
        if (auto v = get(k)) {
            if (!std::holds_alternative<std::string>(*v)) throw ConfigError(k + " must be a string");
            dst = std::get<std::string>(*v);
        }
    };
    auto num = [&](const std::string& k, auto& dst, int64_t lo = 0) {
        if (auto v = get(k)) {
            if (!std::holds_alternative<int64_t>(*v)) throw ConfigError(k + " must be an integer");
            const int64_t x = std::get<int64_t>(*v);
            if (x < lo) throw ConfigError(k + " must be at least " + std::to_string(lo));
            dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
        }
    };
    auto flag = [&](const std::string& k, bool& dst) {
        if (auto v = get(k)) {
            if (!std::holds_alternative<bool>(*v)) throw ConfigError(k + " must be true or false");
            dst = std::get<bool>(*v);
        }
    };

    str("experiment", ec.experiment);
    if (ec.experiment != "gts" && ec.experiment != "eviction")
        throw ConfigError("experiment must be \"gts\" or \"eviction\"");
    std::string gts, archive, policy = "lru", shard, invariant;
    str("gts", gts);
    str("archive", archive);
    str("key", ec.key);
    str("shard", shard);
    str("invariant", invariant);
    num("seed", ec.run.seed);
    num("cap", ec.run.cap, 1);
    num("jobs", ec.run.jobs, 1);
    num("keep_targets", ec.run.keep_targets);
    if (auto v = get("threshold")) {
        if (std::holds_alternative<double>(*v)) ec.threshold = std::get<double>(*v);
        else if (std::holds_alternative<int64_t>(*v)) ec.threshold = static_cast<double>(std::get<int64_t>(*v));
        else throw ConfigError("threshold must be a number");
    }

    CacheGeometry& g = ec.run.sim.geom;
    num("geometry.line_size", g.line_size_bytes, 1);
    num("geometry.sets", g.num_sets, 1);
    num("geometry.associativity", g.associativity, 1);
    num("geometry.bus_size", g.bus_size_bytes, 1);
    num("geometry.page_size", g.page_size_bytes, 1);
    num("geometry.addr_bits", g.addr_bits, 1);
    try {
        g.validate();
    } catch (const InvalidGeometry& e) {
        throw ConfigError(std::string("geometry: ") + e.what());
    }

    SimConfig& sim = ec.run.sim;
    str("simulator.policy", policy);
    auto p = policy_from_name(policy);
    if (!p) throw ConfigError("unknown replacement policy '" + policy + "'");
    sim.policy = *p;
    flag("simulator.previction", sim.previction);
    flag("simulator.prefetcher", sim.prefetcher);
    num("simulator.max_streams", sim.max_streams);
    num("simulator.max_stride", sim.max_stride, 1);

    num("eviction.smax", ec.grid.smax, 1);
    num("eviction.cmax", ec.grid.cmax, 1);
    num("eviction.dmax", ec.grid.dmax, 1);
    num("eviction.lmax", ec.grid.lmax, 1);
    num("eviction.rep", ec.grid.rep, 1);

    for (const auto& [k, v] : cf.values) {
        for (auto [prefix, dst] : {std::pair{"pin.tags.", &ec.run.pin_tags}, std::pair{"pin.sets.", &ec.run.pin_sets}})
            if (k.rfind(prefix, 0) == 0) {
                uint64_t x = 0;
                num(k, x);
                (*dst)[k.substr(std::string_view(prefix).size())] = x;
            }
    }
    for (const auto& [k, v] : cf.values)
        if (!used.count(k)) throw ConfigError("unknown config key '" + k + "'");

    key_from_name(ec.key);
    if (!(ec.threshold > 0.5 && ec.threshold <= 1.0)) throw ConfigError("threshold must lie in (0.5, 1]");
    if (!shard.empty()) std::tie(ec.run.shard_index, ec.run.shard_count) = parse_shard(shard);
    std::istringstream fs(invariant);
    for (std::string f; std::getline(fs, f, ',');) {
        f = detail::trim(f);
        if (f.empty()) continue;
        auto field = field_from_name(f);
        if (!field) throw ConfigError("unknown field '" + f + "' in invariant");
        ec.invariant.push_back(*field);
    }
    if (!archive.empty()) ec.archive = cf.dir / archive;
    if (ec.experiment == "gts") {
        if (gts.empty()) throw ConfigError("gts file not set");
        ec.gts_path = cf.dir / gts;
        std::ifstream in(ec.gts_path);
        if (!in) throw ConfigError("cannot open gts file " + ec.gts_path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        ec.gts_text = ss.str();
    }
    return ec;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return experiment_from(parse_config(ss.str(), path.parent_path()));
}

// ---------------------------------------------------------------- file helpers

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) throw IoError("cannot write " + p.string());
}

inline std::filesystem::path without_suffix(std::filesystem::path p, const std::string& suffix) {
    std::string s = p.string();
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
        s.resize(s.size() - suffix.size());
    return s;
}

// ---------------------------------------------------------------- commands

struct CliIo {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;
    void log(const std::string& s) const {
        if (!quiet) err << "[plumber] " << s << "\n";
    }
};

inline int cmd_run(const CliIo& io, const std::filesystem::path& config, std::optional<unsigned> jobs,
                   const std::string& shard, const std::string& archive) {
    auto ec = load_experiment(config);
    if (jobs) {
        if (*jobs == 0) throw ConfigError("jobs must be positive");
        ec.run.jobs = *jobs;
    }
    if (!shard.empty()) std::tie(ec.run.shard_index, ec.run.shard_count) = parse_shard(shard);
    std::filesystem::path out = archive.empty() ? ec.archive : std::filesystem::path(archive);
    if (out.empty()) out = without_suffix(config, ".toml").string() + ".jsonl";

    std::vector<RunRecord> records;
    if (ec.experiment == "eviction") {
        const auto grid = eviction_grid(ec.grid.smax, ec.grid.cmax, ec.grid.dmax, ec.grid.lmax);
        io.log("eviction grid: " + std::to_string(grid.size()) + " points, rep " + std::to_string(ec.grid.rep));
        auto sw = eviction_sweep(ec.run.sim, grid, ec.grid.rep, ec.run.seed, ec.threshold);
        for (auto& r : sw.records)
            if (r.id % ec.run.shard_count == ec.run.shard_index) records.push_back(std::move(r));
    } else {
        auto res = run_gts(ec.gts_text, ec.run);
        io.log("expanded " + std::to_string(res.variants.size()) + " variants, " + std::to_string(res.total) +
               " testcases");
        records = std::move(res.records);
    }
    io.log("shard " + std::to_string(ec.run.shard_index) + "/" + std::to_string(ec.run.shard_count) + ": " +
           std::to_string(records.size()) + " records");
    write_file(out, archive_to_jsonl(records));
    io.out << out.string() << "\n";
    return exit_ok;
}

inline std::vector<RunRecord> load_archives(const std::vector<std::string>& paths) {
    std::vector<std::vector<RunRecord>> shards;
    for (const auto& p : paths) {
        const std::string text = read_file(p);
        try {
            shards.push_back(parse_archive(text));
        } catch (const ParseError& e) {
            throw ParseError(p + ":" + e.path, e.what());
        }
    }
    return merge_records(std::move(shards));
}

inline int cmd_analyze(const CliIo& io, const std::vector<std::string>& archives, const std::string& config,
                       const std::string& key_flag, std::optional<double> threshold_flag, const std::string& prefix_flag) {
    ExperimentConfig ec;
    if (!config.empty()) ec = load_experiment(config);
    const std::string key = key_flag.empty() ? ec.key : key_flag;
    key_from_name(key);
    const double threshold = threshold_flag.value_or(ec.threshold);
    if (!(threshold > 0.5 && threshold <= 1.0)) throw ConfigError("threshold must lie in (0.5, 1]");
    const CacheGeometry& g = ec.run.sim.geom;
    const auto records = load_archives(archives);
    io.log("loaded " + std::to_string(records.size()) + " records");
    const std::filesystem::path prefix = prefix_flag.empty() ? without_suffix(archives.front(), ".jsonl") : std::filesystem::path(prefix_flag);

    if (ec.experiment == "eviction") {
        auto sw = eviction_sweep_from_records(records, threshold);
        std::vector<std::string> notes;
        const auto lt = eviction_lt(sw, g, &notes);
        std::ostringstream r;
        std::map<std::string, uint64_t> counts;
        for (const auto& l : sw.labels) ++counts[l];
        r << "eviction grid: " << sw.points.size() << " points\n";
        for (const auto& [l, n] : counts) r << "  class " << l << ": " << n << "\n";
        for (const auto& br : lt.relation_map)
            for (const auto& c : br.conjunctions) r << "  " << br.behavior << " <- " << render_predicate(c) << "\n";
        for (const auto& b : lt.inconclusive) r << "  inconclusive: " << b << "\n";
        for (const auto& n : notes) r << "  note: " << n << "\n";
        write_file(prefix.string() + ".lt.json", serialize_lt(lt));
        write_file(prefix.string() + ".report.txt", r.str());
        io.out << r.str();
        return exit_ok;
    }

    const auto as = analyze_records(records, key, g, threshold, ec.invariant);
    bool any_stable = false;
    for (const auto& a : as)
        for (const auto& c : a.classes) any_stable = any_stable || c.label != unstable_label;
    if (!any_stable) throw DegenerateTable("no class reaches the " + std::to_string(threshold) + " threshold");

    std::vector<ExpandedVariant> variants;
    if (!ec.gts_text.empty()) variants = prepare_variants(parse_gts(ec.gts_text), ec.run);
    std::vector<std::pair<size_t, LeakageTemplate>> lts;
    for (const auto& a : as) {
        if (a.analyses.empty()) continue;
        if (a.variant < variants.size()) {
            lts.push_back({a.variant, variant_lt(a, variants[a.variant].seq, g)});
        } else {
            // without the GTS only the loads are known
            const auto& rec = *std::find_if(records.begin(), records.end(), [&](const RunRecord& r) { return r.variant == a.variant; });
            std::vector<TemplateInstr> code;
            for (size_t i = 0; i < rec.loads.size(); ++i) code.push_back({TemplateInstr::Load, "l" + std::to_string(i + 1)});
            LtMetadata meta;
            meta.geom = g;
            meta.provenance = {a.provenance};
            lts.push_back({a.variant, assemble_lt(code, a.analyses, meta, a.columns)});
        }
    }
    const std::string report = render_report(as, g);
    write_file(prefix.string() + ".csv", bit_tables_csv(as));
    write_file(prefix.string() + ".report.txt", report);
    for (const auto& [v, lt] : lts)
        write_file(lts.size() == 1 ? prefix.string() + ".lt.json" : prefix.string() + ".v" + std::to_string(v) + ".lt.json",
                   serialize_lt(lt));
    io.log("wrote " + std::to_string(lts.size()) + " templates");
    io.out << report;
    return exit_ok;
}

inline LeakageTemplate load_lt(const std::filesystem::path& p) {
    const std::string text = read_file(p);
    try {
        return deserialize_lt(text);
    } catch (const SchemaVersionMismatch& e) {
        throw ConfigError(p.string() + ": " + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

inline int cmd_match(const CliIo& io, const std::string& listing_path, const std::string& lt_path,
                     const std::string& traces_path, const std::string& mnemonics, const std::string& pattern,
                     double max_failures) {
    const auto lt = load_lt(lt_path);
    MnemonicTable table = MnemonicTable::defaults();
    if (!mnemonics.empty()) {
        try {
            table = MnemonicTable::from_json(nlohmann::json::parse(read_file(mnemonics)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(mnemonics + ": " + e.what());
        }
    }
    const auto listing = parse_listing(read_file(listing_path), table);
    const double lines = static_cast<double>(listing.instrs.size() + listing.warnings.size());
    const double failed = lines == 0 ? 0.0 : static_cast<double>(listing.warnings.size()) / lines;
    for (const auto& w : listing.warnings) io.err << listing_path << ":" << w.line << ": " << w.text << "\n";
    if (failed > max_failures)
        throw TooManyParseFailures(std::to_string(listing.warnings.size()) + " unparsable lines exceed the limit");

    const auto cands = match_pattern(listing, compile_pattern(pattern.empty() ? prefetch_pattern : pattern));
    io.out << "candidates: " << cands.size() << "\n";
    for (const auto& c : cands) {
        io.out << c.section;
        for (size_t i : c.indices) io.out << " 0x" << std::hex << listing.instrs[i].addr << std::dec;
        for (size_t i = 0; i < c.gaps.size(); ++i) io.out << " n" << i + 1 << "=" << c.gaps[i];
        io.out << "\n";
    }
    if (traces_path.empty()) return exit_ok;

    std::vector<LabeledTrace> traces;
    try {
        traces = parse_labeled_traces(read_file(traces_path));
    } catch (const ParseError& e) {
        throw ParseError(traces_path + ":" + e.path, e.what());
    }
    std::vector<std::string> expected, actual;
    io.out << "traces: " << traces.size() << "\n";
    for (size_t i = 0; i < traces.size(); ++i) {
        std::string e;
        try {
            e = classify_trace(traces[i].trace, lt, lt.metadata.geom);
        } catch (const InsufficientTrace&) {
            e = undecidable;
        }
        io.out << "trace " << i << ": " << e << (traces[i].label.empty() ? "" : " (observed " + traces[i].label + ")")
               << "\n";
        if (!traces[i].label.empty()) {
            expected.push_back(e);
            actual.push_back(traces[i].label);
        }
    }
    if (!expected.empty()) io.out << confusion_report(expected, actual).render();
    return exit_ok;
}

inline int cmd_channel(const CliIo& io, const std::string& name, unsigned bits, uint64_t seed, const std::string& config,
                       bool show) {
    SimConfig cfg;
    if (!config.empty()) cfg = load_experiment(config).run.sim;
    const auto scn = make_channel(name, cfg);
    std::mt19937_64 rng(seed);
    std::vector<bool> sent(bits);
    for (auto&& b : sent) b = rng() & 1;
    const auto got = encode_decode(scn, sent, cfg);
    uint64_t errors = 0;
    for (size_t i = 0; i < sent.size(); ++i) errors += sent[i] != got[i];
    io.out << name << ": " << bits << " bits, " << errors << " errors\n";
    if (show) {
        for (bool b : sent) io.out << b;
        io.out << "\n";
        for (bool b : got) io.out << b;
        io.out << "\n";
    }
    return exit_ok;
}

inline int cmd_bp(const CliIo& io, const std::vector<unsigned>& xs, unsigned y, unsigned trials, const std::string& config) {
    SimConfig cfg;
    if (!config.empty()) cfg = load_experiment(config).run.sim;
    io.out << "X\tY\tmisprediction_rate\n";
    for (unsigned x : xs) io.out << x << "\t" << y << "\t" << run_bp_experiment(x, y, trials, cfg) << "\n";
    return exit_ok;
}

inline int cmd_report(const CliIo& io, const std::vector<std::string>& archives) {
    const auto records = load_archives(archives);
    std::set<size_t> variants;
    std::map<std::string, std::map<std::string, uint64_t>> totals;
    uint64_t trials = 0;
    for (const auto& r : records) {
        variants.insert(r.variant);
        trials += r.trials;
        for (const auto& [k, m] : r.outcomes)
            for (const auto& [l, n] : m) totals[k][l] += n;
    }
    io.out << "records: " << records.size() << "\nvariants: " << variants.size() << "\ntrials: " << trials << "\n";
    for (const auto& [k, m] : totals) {
        io.out << k << ":";
        for (const auto& [l, n] : m) io.out << " " << l << "=" << n;
        io.out << "\n";
    }
    return exit_ok;
}

inline int cmd_generate(const CliIo& io, const std::string& what, const std::string& out, uint64_t seed,
                        unsigned functions, unsigned plants, unsigned in_range, unsigned out_of_range, unsigned gmax) {
    SimConfig cfg;
    if (what == "corpus") {
        const auto c = synthetic_corpus(seed, functions, plants);
        nlohmann::json j = nlohmann::json::array();
        for (const auto& p : c.plants) j.push_back({{"section", p.section}, {"offsets", p.offsets}});
        write_file(out + ".s", c.text);
        write_file(out + ".plants.json", j.dump(2) + "\n");
    } else if (what == "traces") {
        write_file(out, labeled_traces_to_jsonl(simulated_traces(cfg, in_range, out_of_range, gmax, seed)));
    } else if (what == "prefetch-lt") {
        write_file(out, serialize_lt(prefetch_lt(cfg, gmax, e7_gap_sweep(cfg, gmax, seed).counts)));
    } else {
        throw ConfigError("unknown artifact '" + what + "'");
    }
    io.log("wrote " + what + " to " + out);
    return exit_ok;
}

// ---------------------------------------------------------------- entry point

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"plumber: testcase generation, simulation and leakage templates"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "no progress logging");

    std::string config, shard, archive, key, prefix, listing, lt, traces, mnemonics, pattern, name, what, gen_out;
    std::optional<unsigned> jobs;
    std::optional<double> threshold;
    std::vector<std::string> archives;
    double max_failures = 0.05;
    unsigned bits = 1000, y = 4, trials = 1024, functions = 500, plants = 50, in_range = 100, out_of_range = 40, gmax = 10;
    uint64_t seed = 1;
    bool show = false;
    std::vector<unsigned> xs;

    auto* run = app.add_subcommand("run", "expand a GTS, execute every testcase, write a JSONL archive");
    run->add_option("config", config, "experiment config")->required();
    run->add_option("-j,--jobs", jobs, "worker threads");
    run->add_option("--shard", shard, "run shard i of k, as i/k");
    run->add_option("-o,--archive", archive, "archive path");

    auto* analyze = app.add_subcommand("analyze", "classify, extract relations, assemble templates");
    analyze->add_option("archives", archives, "archives (shards are merged)")->required();
    analyze->add_option("-c,--config", config, "experiment config, for geometry and code templates");
    analyze->add_option("-k,--key", key, "classification key");
    analyze->add_option("-t,--threshold", threshold, "class threshold");
    analyze->add_option("-o,--out", prefix, "output prefix");

    auto* match = app.add_subcommand("match", "find template candidates in a listing, classify traces");
    match->add_option("listing", listing, "objdump-style listing")->required();
    match->add_option("--lt", lt, "leakage template (.lt.json)")->required();
    match->add_option("--traces", traces, "labelled traces (JSONL)");
    match->add_option("--mnemonics", mnemonics, "mnemonic table (JSON)");
    match->add_option("--pattern", pattern, "instruction pattern");
    match->add_option("--max-parse-failures", max_failures, "tolerated fraction of unparsable lines");

    auto* channel = app.add_subcommand("channel", "send random bits over a covert channel");
    channel->add_option("--name", name, "PR_FR, PR_PP, PRF_CF, PRF_IS or PRF_OS")->required();
    channel->add_option("--bits", bits, "bits to send");
    channel->add_option("--seed", seed, "bit source seed");
    channel->add_option("-c,--config", config, "experiment config, for geometry");
    channel->add_flag("--show", show, "print sent and received bits");

    auto* bp = app.add_subcommand("bp-experiment", "spy misprediction rate against PHT fill");
    bp->add_option("--x", xs, "prefix branches (repeatable)")->required();
    bp->add_option("--y", y, "nops before the setup");
    bp->add_option("--trials", trials, "spy trials");
    bp->add_option("-c,--config", config, "experiment config");

    auto* report = app.add_subcommand("report", "summarize archives");
    report->add_option("archives", archives, "archives")->required();

    auto* gen = app.add_subcommand("generate", "write synthetic corpora, traces or the prefetch template");
    gen->add_option("what", what, "corpus, traces or prefetch-lt")->required();
    gen->add_option("-o,--out", gen_out, "output path (corpus: prefix)")->required();
    gen->add_option("--seed", seed, "seed");
    gen->add_option("--functions", functions, "corpus functions");
    gen->add_option("--plants", plants, "planted instances");
    gen->add_option("--in-range", in_range, "in-range traces");
    gen->add_option("--out-of-range", out_of_range, "out-of-range traces");
    gen->add_option("--gmax", gmax, "largest tested gap");

    std::vector<const char*> argv{"plumber"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }

    const CliIo io{out, err, quiet};
    try {
        if (*run) return cmd_run(io, config, jobs, shard, archive);
        if (*analyze) return cmd_analyze(io, archives, config, key, threshold, prefix);
        if (*match) return cmd_match(io, listing, lt, traces, mnemonics, pattern, max_failures);
        if (*channel) return cmd_channel(io, name, bits, seed, config, show);
        if (*bp) return cmd_bp(io, xs, y, trials, config);
        if (*report) return cmd_report(io, archives);
        if (*gen) return cmd_generate(io, what, gen_out, seed, functions, plants, in_range, out_of_range, gmax);
    } catch (const ExpansionTooLarge& e) {
        err << "error: " << e.what() << " (split the run with --shard)\n";
        return exit_cap;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const DegenerateTable& e) {
        err << "error: degenerate classes: " << e.what() << "\n";
        return exit_degenerate;
    } catch (const TooManyParseFailures& e) {
        err << "error: " << e.what() << "\n";
        return exit_parse;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_parse;
    } catch (const Error& e) {
        // config, geometry, key, scenario and GTS syntax problems
        err << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_config;
}

}  // namespace plumber
