#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core_types.hpp"
#include "errors.hpp"
#include "lt.hpp"

namespace plumber {

enum class InstrClass { load, store, arith, branch, other };

inline std::string_view class_name(InstrClass c) {
    switch (c) {
        case InstrClass::load: return "LOAD";
        case InstrClass::store: return "STORE";
        case InstrClass::arith: return "ARITH";
        case InstrClass::branch: return "BRANCH";
        case InstrClass::other: return "OTHER";
    }
    return "?";
}

// Mnemonic -> class. Entries ending in '*' match by prefix ("b.*" covers b.eq).
class MnemonicTable {
public:
    MnemonicTable() = default;

    static MnemonicTable defaults() {
        MnemonicTable t;
        for (auto m : {"ldr", "ldrb", "ldrh", "ldrsb", "ldrsh", "ldrsw", "ldur", "ldp"}) t.add(m, InstrClass::load);
        for (auto m : {"str", "strb", "strh", "stur", "stp"}) t.add(m, InstrClass::store);
        for (auto m : {"add", "sub", "mul", "mov", "cmp", "and", "orr", "eor", "lsl", "lsr", "asr", "madd", "adds",
                       "subs", "neg", "movk", "adr", "adrp"})
            t.add(m, InstrClass::arith);
        for (auto m : {"b", "bl", "br", "blr", "ret", "cbz", "cbnz", "tbz", "tbnz", "b.*"}) t.add(m, InstrClass::branch);
        t.add("nop", InstrClass::other);
        return t;
    }

    // {"LOAD": ["ldr", ...], "BRANCH": ["b", "b.*"], ...}
    static MnemonicTable from_json(const nlohmann::json& j) {
        MnemonicTable t;
        if (!j.is_object()) throw ConfigError("mnemonic table must be an object");
        for (auto& [k, v] : j.items()) {
            std::optional<InstrClass> c;
            for (auto cand : {InstrClass::load, InstrClass::store, InstrClass::arith, InstrClass::branch, InstrClass::other})
                if (class_name(cand) == k) c = cand;
            if (!c) throw ConfigError("unknown instruction class '" + k + "'");
            if (!v.is_array()) throw ConfigError("class '" + k + "' needs a list of mnemonics");
            for (auto& m : v) {
                if (!m.is_string()) throw ConfigError("mnemonics must be strings");
                t.add(m.get<std::string>(), *c);
            }
        }
        return t;
    }

    void add(const std::string& m, InstrClass c) {
        if (!m.empty() && m.back() == '*') prefixes_.push_back({m.substr(0, m.size() - 1), c});
        else exact_[m] = c;
    }

    [[nodiscard]] std::optional<InstrClass> classify(const std::string& m) const {
        if (auto it = exact_.find(m); it != exact_.end()) return it->second;
        for (const auto& [p, c] : prefixes_)
            if (m.rfind(p, 0) == 0) return c;
        return std::nullopt;
    }

private:
    std::map<std::string, InstrClass> exact_;
    std::vector<std::pair<std::string, InstrClass>> prefixes_;
};

struct AsmInstr {
    uint64_t addr = 0;
    std::string mnemonic;
    std::vector<std::string> ops;
    std::string section;
    InstrClass cls = InstrClass::other;
    bool operator==(const AsmInstr&) const = default;
};

struct ListingWarning {
    int line = 0;
    std::string text;
};

struct AsmListing {
    std::vector<AsmInstr> instrs;
    std::vector<ListingWarning> warnings;  // unparsable lines, skipped
};

namespace detail {

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace detail

// "<hex-addr>: <mnemonic> <operands>" per line; "SECTION <name>" starts a section.
// Operands split on every comma, so "[x1, x2]" yields "[x1" and "x2]".
inline AsmListing parse_listing(std::string_view text, const MnemonicTable& table = MnemonicTable::defaults()) {
    AsmListing out;
    std::string section = "";
    std::optional<uint64_t> last;
    int lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto warn = [&](const std::string& why) { out.warnings.push_back({lineno, why + ": " + line}); };
        if (line.rfind("SECTION ", 0) == 0) {
            section = detail::trim(line.substr(8));
            last.reset();
            continue;
        }
        const size_t colon = line.find(':');
        if (colon == std::string::npos || colon == 0) {
            warn("no address");
            continue;
        }
        uint64_t addr = 0;
        std::string hex = line.substr(0, colon);
        if (hex.rfind("0x", 0) == 0) hex = hex.substr(2);
        if (hex.empty() || hex.size() > 16 ||
            !std::all_of(hex.begin(), hex.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
            warn("bad address");
            continue;
        }
        addr = std::stoull(hex, nullptr, 16);
        const std::string rest = detail::trim(line.substr(colon + 1));
        const size_t sp = rest.find_first_of(" \t");
        AsmInstr ins;
        ins.addr = addr;
        ins.section = section;
        ins.mnemonic = rest.substr(0, sp);
        if (ins.mnemonic.empty()) {
            warn("no mnemonic");
            continue;
        }
        auto cls = table.classify(ins.mnemonic);
        if (!cls) {
            warn("unknown mnemonic");
            continue;
        }
        ins.cls = *cls;
        if (sp != std::string::npos) {
            std::stringstream ss(rest.substr(sp));
            std::string tok;
            while (std::getline(ss, tok, ',')) ins.ops.push_back(detail::trim(tok));
        }
        if (last && addr <= *last) {
            warn("address not increasing");
            continue;
        }
        last = addr;
        out.instrs.push_back(std::move(ins));
    }
    return out;
}

// ---------------------------------------------------------------- patterns

enum class TokenClass { AG, QR, RO, IMM, REG, ANY };

inline bool token_matches(TokenClass c, const std::string& t) {
    static const std::regex gp(R"((x([0-9]|[12][0-9]|30)|w([0-9]|[12][0-9]|30)|sp|xzr|wzr))");
    switch (c) {
        case TokenClass::AG: return std::regex_match(t, gp);
        case TokenClass::QR: return t.size() > 1 && t[0] == '[' && std::regex_match(t.substr(1), gp);
        case TokenClass::RO: {
            std::string s = t;
            if (!s.empty() && s.back() == ']') s.pop_back();
            return std::regex_match(s, gp);
        }
        case TokenClass::IMM: return !t.empty() && t[0] == '#';
        case TokenClass::REG: return std::regex_match(t, std::regex(R"(\[?(x|w)[0-9]+\]?|\[?sp\]?)"));
        case TokenClass::ANY: return true;
    }
    return false;
}

struct OpConstraint {
    enum Kind { Class, Define, Reference } kind = Class;
    unsigned op = 0;
    TokenClass token = TokenClass::ANY;
    std::string group;
};

struct PatternElement {
    enum Kind { Instr, Gap } kind = Instr;
    std::optional<InstrClass> cls;  // nullopt: ANY
    std::vector<OpConstraint> ops;
    unsigned min = 0, max = 0;  // Gap
};

struct AsmPattern {
    std::vector<PatternElement> elements;  // instructions, with a gap between every adjacent pair
    std::vector<std::string> groups;       // capture table, in definition order

    [[nodiscard]] size_t instr_count() const {
        return std::count_if(elements.begin(), elements.end(), [](auto& e) { return e.kind == PatternElement::Instr; });
    }
    [[nodiscard]] size_t gap_count() const { return elements.size() - instr_count(); }
    [[nodiscard]] size_t reference_count() const {
        size_t n = 0;
        for (auto& e : elements)
            for (auto& o : e.ops) n += o.kind == OpConstraint::Reference;
        return n;
    }
};

namespace detail {

class PatternParser {
public:
    explicit PatternParser(std::string_view s) : s_(s) {}

    AsmPattern parse() {
        AsmPattern p;
        std::map<std::string, bool> defined;
        bool pending_gap = false;
        PatternElement gap;
        skip();
        while (pos_ < s_.size()) {
            if (eat(".")) {
                if (pending_gap) fail_q("two gaps in a row");
                if (p.elements.empty()) fail_q("a pattern cannot start with a gap");
                need("{");
                gap = PatternElement{PatternElement::Gap};
                gap.min = number();
                need(",");
                gap.max = number();
                need("}");
                if (gap.min > gap.max) fail_q("gap minimum exceeds maximum");
                pending_gap = true;
            } else {
                PatternElement e = element();
                unsigned reps = 1;
                if (eat("{")) {
                    reps = number();
                    need("}");
                    if (reps == 0) fail_q("repetition count must be positive");
                }
                for (unsigned r = 0; r < reps; ++r) {
                    PatternElement copy = e;
                    for (auto& o : copy.ops) {
                        if (o.kind == OpConstraint::Define) {
                            if (defined.count(o.group)) {
                                // later copies of a repeated element refer back to the first
                                if (r == 0) throw BadBackreference("group '" + o.group + "' defined twice");
                                o.kind = OpConstraint::Reference;
                            } else {
                                defined[o.group] = true;
                                p.groups.push_back(o.group);
                            }
                        } else if (o.kind == OpConstraint::Reference && !defined.count(o.group)) {
                            throw BadBackreference("group '" + o.group + "' used before its definition");
                        }
                    }
                    if (!p.elements.empty()) {
                        p.elements.push_back(pending_gap ? gap : PatternElement{PatternElement::Gap});
                        pending_gap = false;
                    }
                    p.elements.push_back(copy);
                }
            }
            skip();
        }
        if (pending_gap) fail_q("a pattern cannot end with a gap");
        if (p.elements.empty()) throw SyntaxError(1, 1, "pattern element");
        return p;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(1, static_cast<int>(pos_ + 1), what); }
    [[noreturn]] void fail_q(const std::string& what) const { throw BadQuantifier(what); }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(std::string_view w) {
        skip();
        if (s_.substr(pos_, w.size()) != w) return false;
        pos_ += w.size();
        return true;
    }
    void need(std::string_view w) {
        if (!eat(w)) fail("'" + std::string(w) + "'");
    }
    unsigned number() {
        skip();
        size_t b = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (b == pos_) {
            if (pos_ < s_.size() && s_[pos_] == '-') fail_q("negative bound");
            fail_q("gap and repetition bounds must be finite integers");
        }
        if (pos_ - b > 6) fail_q("bound too large");
        return static_cast<unsigned>(std::stoul(std::string(s_.substr(b, pos_ - b))));
    }
    std::string word() {
        skip();
        size_t b = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (b == pos_) fail("name");
        return std::string(s_.substr(b, pos_ - b));
    }

    PatternElement element() {
        PatternElement e;
        const std::string c = word();
        if (c == "LOAD") e.cls = InstrClass::load;
        else if (c == "STORE") e.cls = InstrClass::store;
        else if (c == "ARITH") e.cls = InstrClass::arith;
        else if (c == "BRANCH") e.cls = InstrClass::branch;
        else if (c != "ANY") fail("instruction class");
        if (eat("(")) {
            do {
                const std::string op = word();
                if (op.size() < 3 || op.rfind("op", 0) != 0 ||
                    !std::all_of(op.begin() + 2, op.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
                    fail("operand reference opN");
                OpConstraint oc;
                oc.op = static_cast<unsigned>(std::stoul(op.substr(2)));
                if (eat(":")) {
                    const std::string t = word();
                    oc.kind = OpConstraint::Class;
                    if (t == "AG") oc.token = TokenClass::AG;
                    else if (t == "QR") oc.token = TokenClass::QR;
                    else if (t == "RO") oc.token = TokenClass::RO;
                    else if (t == "IMM") oc.token = TokenClass::IMM;
                    else if (t == "REG") oc.token = TokenClass::REG;
                    else if (t == "ANY") oc.token = TokenClass::ANY;
                    else fail("token class");
                } else if (eat(">")) {
                    oc.kind = OpConstraint::Define;
                    oc.group = word();
                } else if (eat("=")) {
                    oc.kind = OpConstraint::Reference;
                    oc.group = word();
                } else {
                    fail("':', '>' or '='");
                }
                e.ops.push_back(oc);
            } while (eat(","));
            need(")");
        }
        return e;
    }

    std::string_view s_;
    size_t pos_ = 0;
};

// Keeps the bracket-stripped register so "[x1" and "x1]" compare equal.
inline std::string operand_key(const std::string& t) {
    std::string s = t;
    if (!s.empty() && s.front() == '[') s.erase(0, 1);
    if (!s.empty() && s.back() == ']') s.pop_back();
    return s;
}

}  // namespace detail

inline AsmPattern compile_pattern(std::string_view text) { return detail::PatternParser(text).parse(); }

struct CandidateSection {
    std::string section;
    std::vector<size_t> indices;              // listing index of each matched instruction element
    std::vector<unsigned> gaps;               // instructions strictly between consecutive matches
    std::map<std::string, std::string> captures;
    bool operator==(const CandidateSection&) const = default;
};

namespace detail {

inline bool element_matches(const PatternElement& e, const AsmInstr& ins, std::map<std::string, std::string>& caps) {
    if (e.cls && *e.cls != ins.cls) return false;
    for (const auto& o : e.ops) {
        if (o.op >= ins.ops.size()) return false;
        const std::string& tok = ins.ops[o.op];
        switch (o.kind) {
            case OpConstraint::Class:
                if (!token_matches(o.token, tok)) return false;
                break;
            case OpConstraint::Define: caps[o.group] = operand_key(tok); break;
            case OpConstraint::Reference:
                if (caps.at(o.group) != operand_key(tok)) return false;
                break;
        }
    }
    return true;
}

inline bool match_from(const AsmPattern& p, const std::vector<AsmInstr>& in, size_t elem, size_t idx,
                       CandidateSection& cur) {
    if (elem == p.elements.size()) return true;
    const auto& e = p.elements[elem];
    if (e.kind == PatternElement::Gap) {
        // shortest gap first
        for (unsigned g = e.min; g <= e.max; ++g) {
            const size_t next = idx + g;
            if (next >= in.size() || in[next].section != cur.section) return false;
            cur.gaps.push_back(g);
            if (match_from(p, in, elem + 1, next, cur)) return true;
            cur.gaps.pop_back();
        }
        return false;
    }
    if (idx >= in.size() || in[idx].section != cur.section) return false;
    auto saved = cur.captures;
    if (!element_matches(e, in[idx], cur.captures)) {
        cur.captures = saved;
        return false;
    }
    cur.indices.push_back(idx);
    if (match_from(p, in, elem + 1, idx + 1, cur)) return true;
    cur.indices.pop_back();
    cur.captures = std::move(saved);
    return false;
}

}  // namespace detail

// One candidate per start index (the one with the shortest gaps), so
// overlapping matches that begin at different instructions are all kept.
inline std::vector<CandidateSection> match_pattern(const AsmListing& l, const AsmPattern& p) {
    std::vector<CandidateSection> out;
    for (size_t i = 0; i < l.instrs.size(); ++i) {
        CandidateSection c;
        c.section = l.instrs[i].section;
        if (detail::match_from(p, l.instrs, 0, i, c)) out.push_back(std::move(c));
    }
    return out;
}

// The shipped prefetch pattern: three loads, at most five instructions apart,
// sharing the base register in operand 1.
inline constexpr const char* prefetch_pattern =
    "LOAD(op0:AG,op1:QR,op1>g1,op2:RO) .{0,5} LOAD(op0:AG,op1=g1,op2:RO) .{0,5} LOAD(op0:AG,op1=g1,op2:RO)";

// ---------------------------------------------------------------- traces

struct TraceRecord {
    uint64_t instr_addr = 0, data_addr = 0;
    bool operator==(const TraceRecord&) const = default;
};

using AccessTrace = std::vector<TraceRecord>;

inline AccessTrace parse_trace_jsonl(std::string_view text) {
    AccessTrace t;
    size_t pos = 0;
    int lineno = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++lineno;
        if (line.empty()) continue;
        const std::string path = "line " + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path, e.what());
        }
        for (auto key : {"instr_addr", "data_addr"})
            if (!j.contains(key) || !j[key].is_number_unsigned())
                throw ParseError(path + "/" + key, "expected an unsigned integer");
        t.push_back({j["instr_addr"].get<uint64_t>(), j["data_addr"].get<uint64_t>()});
    }
    return t;
}

inline std::string trace_to_jsonl(const AccessTrace& t) {
    std::string s;
    for (const auto& r : t) s += nlohmann::json{{"data_addr", r.data_addr}, {"instr_addr", r.instr_addr}}.dump() + "\n";
    return s;
}

// Picks the first three loads on pairwise distinct lines, derives the gap
// counts from instruction distances and evaluates the template. A negative
// distance (a loop going back) can never be in a tested range.
inline std::string classify_trace(const AccessTrace& trace, const LeakageTemplate& lt, const CacheGeometry& g,
                                  uint64_t instr_bytes = 4) {
    std::vector<TraceRecord> picked;
    for (const auto& r : trace) {
        if (picked.size() == 3) break;
        const uint64_t line = line_index(g, PhysAddr{r.data_addr});
        if (std::none_of(picked.begin(), picked.end(),
                         [&](const TraceRecord& p) { return line_index(g, PhysAddr{p.data_addr}) == line; }))
            picked.push_back(r);
    }
    if (picked.size() < 3) throw InsufficientTrace("fewer than three loads on distinct lines");
    const auto loads = lt.load_symbols();
    if (loads.size() < 3) throw UnboundSymbol("template has fewer than three loads");
    AddressBinding b;
    for (size_t i = 0; i < 3; ++i) b[loads[i]] = PhysAddr{picked[i].data_addr};
    CountBinding c;
    std::vector<std::string> counts;
    for (const auto& ti : lt.code_template)
        if (ti.kind == TemplateInstr::Arith) counts.push_back(ti.symbol);
    for (size_t i = 0; i < counts.size() && i < 2; ++i) {
        const int64_t d = static_cast<int64_t>(picked[i + 1].instr_addr) - static_cast<int64_t>(picked[i].instr_addr);
        c[counts[i]] = d / static_cast<int64_t>(instr_bytes) - 1;
    }
    return evaluate_lt(lt, b, c);
}

// ---------------------------------------------------------------- confusion

struct ConfusionMatrix {
    std::vector<std::string> actual_labels;    // rows
    std::vector<std::string> expected_labels;  // columns; undecidable kept last
    std::map<std::pair<std::string, std::string>, uint64_t> counts;  // (actual, expected)
    uint64_t misclassifications = 0;
    uint64_t undecidable_count = 0;

    [[nodiscard]] uint64_t at(const std::string& actual, const std::string& expected) const {
        auto it = counts.find({actual, expected});
        return it == counts.end() ? 0 : it->second;
    }
    [[nodiscard]] bool pass() const { return misclassifications == 0; }

    [[nodiscard]] std::vector<std::vector<uint64_t>> rows() const {
        std::vector<std::vector<uint64_t>> m;
        for (const auto& a : actual_labels) {
            m.emplace_back();
            for (const auto& e : expected_labels) m.back().push_back(at(a, e));
        }
        return m;
    }

    [[nodiscard]] std::string render() const {
        std::ostringstream o;
        o << "actual\\expected";
        for (const auto& e : expected_labels) o << "\t" << e;
        o << "\n";
        for (const auto& a : actual_labels) {
            o << a;
            for (const auto& e : expected_labels) o << "\t" << at(a, e);
            o << "\n";
        }
        o << "misclassifications: " << misclassifications << (pass() ? " PASS" : " FAIL") << "\n";
        return o.str();
    }
};

inline ConfusionMatrix confusion_report(const std::vector<std::string>& expected, const std::vector<std::string>& actual) {
    if (expected.size() != actual.size())
        throw LengthMismatch("expected " + std::to_string(expected.size()) + " labels, actual " +
                             std::to_string(actual.size()));
    ConfusionMatrix m;
    std::set<std::string> rows, cols;
    for (size_t i = 0; i < expected.size(); ++i) {
        rows.insert(actual[i]);
        cols.insert(expected[i]);
        ++m.counts[{actual[i], expected[i]}];
        if (expected[i] == undecidable) ++m.undecidable_count;
        else if (expected[i] != actual[i]) ++m.misclassifications;
    }
    // labels seen on either side get both a row and a column, so the diagonal is complete
    for (const auto& r : rows)
        if (r != undecidable) cols.insert(r);
    for (const auto& c : cols)
        if (c != undecidable) rows.insert(c);
    m.actual_labels.assign(rows.begin(), rows.end());
    for (const auto& c : cols)
        if (c != undecidable) m.expected_labels.push_back(c);
    if (cols.count(undecidable)) m.expected_labels.push_back(undecidable);
    return m;
}

}  // namespace plumber

namespace plumber {

// ---------------------------------------------------------------- synthetic corpora

struct PlantedInstance {
    std::string section;
    std::vector<size_t> offsets;  // positions of the three loads within the section
};

struct SyntheticCorpus {
    std::string text;
    std::vector<PlantedInstance> plants;
};

// Random functions over a small register file; `plants` of them receive one
// three-load sequence sharing a base register, with non-load filler between.
inline SyntheticCorpus synthetic_corpus(uint64_t seed, unsigned functions, unsigned plants) {
    std::mt19937_64 rng(seed);
    auto pick = [&](uint64_t n) { return static_cast<uint64_t>(rng() % n); };
    auto reg = [&] { return "x" + std::to_string(pick(8)); };
    auto filler = [&]() -> std::string {
        switch (pick(5)) {
            case 0: return "add " + reg() + ", " + reg() + ", " + reg();
            case 1: return "sub " + reg() + ", " + reg() + ", #" + std::to_string(pick(64));
            case 2: return "str " + reg() + ", [" + reg() + ", #" + std::to_string(8 * pick(8)) + "]";
            case 3: return "cmp " + reg() + ", " + reg();
            default: return "nop";
        }
    };
    auto random_instr = [&]() -> std::string {
        switch (pick(4)) {
            case 0: return "ldr " + reg() + ", [" + reg() + ", " + reg() + "]";
            case 1: return "ldr " + reg() + ", [" + reg() + ", #" + std::to_string(8 * pick(8)) + "]";
            default: return filler();
        }
    };
    std::vector<unsigned> order(functions);
    for (unsigned i = 0; i < functions; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::set<unsigned> planted(order.begin(), order.begin() + std::min(plants, functions));

    SyntheticCorpus c;
    uint64_t addr = 0x1000;
    for (unsigned f = 0; f < functions; ++f) {
        const std::string name = "fn_" + std::to_string(f);
        c.text += "SECTION " + name + "\n";
        std::vector<std::string> body;
        const unsigned len = 10 + static_cast<unsigned>(pick(31));
        for (unsigned i = 0; i < len; ++i) body.push_back(random_instr());
        if (planted.count(f)) {
            const std::string base = reg();
            std::vector<std::string> seq;
            PlantedInstance p{name, {}};
            const size_t at = pick(body.size() + 1);
            for (int k = 0; k < 3; ++k) {
                if (k) {
                    const unsigned gap = static_cast<unsigned>(pick(6));
                    for (unsigned i = 0; i < gap; ++i) seq.push_back(filler());
                }
                p.offsets.push_back(at + seq.size());
                const std::string tail = pick(2) ? "]" : ", lsl#3]";
                seq.push_back("ldr " + reg() + ", [" + base + ", " + reg() + tail);
            }
            body.insert(body.begin() + static_cast<std::ptrdiff_t>(at), seq.begin(), seq.end());
            c.plants.push_back(p);
        }
        for (const auto& ins : body) {
            std::ostringstream o;
            o << std::hex << addr << ": " << ins << "\n";
            c.text += o.str();
            addr += 4;
        }
        addr += 0x40;
    }
    return c;
}

}  // namespace plumber
