#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace plumber {

struct AttrExpr {
    int sym = -1;  // index into GtsAst::symbols
    int64_t delta = 0;
    bool operator==(const AttrExpr&) const = default;
};

enum class DirKind { Mem, Arith, Nop, SetBranch, Branch };

struct Directive {
    DirKind kind = DirKind::Nop;
    std::optional<AttrExpr> tag, set;
    std::optional<unsigned> word;
    int var = -1;  // index into GtsAst::vars
    bool value = false;
    unsigned steps = 0;
    bool operator==(const Directive&) const = default;
};

struct Item {
    enum Kind { Dir, Power, Wildcard } kind = Dir;
    Directive dir;
    std::vector<Item> body;  // Power only
    unsigned n = 0;
    char attr = 0;  // 't', 's' or 0 when the power has no increment
    int64_t inc = 0;
    bool operator==(const Item&) const = default;
};

enum class OpKind { Seq, Shuffle, Subset, Slide, Merge, OffMut, LineMut, Rep };

struct OpNode {
    OpKind kind = OpKind::Seq;
    std::vector<Item> seq;      // Seq only
    std::vector<OpNode> kids;   // one child, two for Merge
    unsigned n = 0;             // Slide and Rep
    bool operator==(const OpNode&) const = default;
};

struct GtsAst {
    std::vector<std::string> symbols;  // interned attribute symbols
    std::vector<std::string> vars;     // branch variable names
    std::optional<std::vector<Item>> pre;
    OpNode body;
    bool operator==(const GtsAst&) const = default;
};

namespace detail {

struct Token {
    enum Kind { Ident, Int, Punct, End } kind = End;
    std::string text;
    int64_t ival = 0;
    int line = 1, col = 1;
};

class GtsLexer {
public:
    explicit GtsLexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_ws();
            Token t;
            t.line = line_;
            t.col = col_;
            if (pos_ >= src_.size()) {
                t.kind = Token::End;
                out.push_back(t);
                return out;
            }
            char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = Token::Ident;
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    t.text += advance();
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                t.kind = Token::Int;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    t.text += advance();
                if (t.text.size() > 18) throw SyntaxError(t.line, t.col, "integer of at most 18 digits");
                t.ival = std::stoll(t.text);
            } else if (std::string_view("[](){},;|=+-^").find(c) != std::string_view::npos) {
                t.kind = Token::Punct;
                t.text = std::string(1, advance());
            } else {
                throw SyntaxError(t.line, t.col, "a directive, operator or punctuation");
            }
            out.push_back(t);
        }
    }

private:
    char advance() {
        char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }
    void skip_ws() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {  // comment to end of line
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

inline bool is_op_keyword(const std::string& s) {
    return s == "shuffle" || s == "subset" || s == "slide" || s == "merge" || s == "offmut" ||
           s == "linemut" || s == "rep";
}

class GtsParser {
public:
    explicit GtsParser(std::string_view text) : toks_(GtsLexer(text).run()) {}

    GtsAst parse() {
        if (peek().kind == Token::End) return ast_;
        if (is_ident("pre") && peek(1).text == "{") {
            next();
            next();
            auto s = parse_seq(true);
            expect("}");
            ast_.pre = std::move(s);
        }
        ast_.body = parse_opexpr();
        if (peek().kind != Token::End) fail("end of input");
        check_mutations(ast_.body, false);
        return std::move(ast_);
    }

private:
    const Token& peek(size_t k = 0) const {
        size_t i = std::min(pos_ + k, toks_.size() - 1);
        return toks_[i];
    }
    const Token& next() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) ++pos_;
        return t;
    }
    bool is_ident(std::string_view s) const { return peek().kind == Token::Ident && peek().text == s; }
    bool is_punct(std::string_view s) const { return peek().kind == Token::Punct && peek().text == s; }
    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(peek().line, peek().col, expected);
    }
    void expect(std::string_view p) {
        if (!is_punct(p)) fail("'" + std::string(p) + "'");
        next();
    }
    int64_t expect_int(bool allow_sign = false) {
        int64_t sign = 1;
        if (allow_sign && (is_punct("-") || is_punct("+"))) sign = next().text == "-" ? -1 : 1;
        if (peek().kind != Token::Int) fail("integer");
        return sign * next().ival;
    }
    unsigned expect_count(const char* what) {
        if (peek().kind != Token::Int) fail("integer");
        auto line = peek().line, col = peek().col;
        int64_t v = next().ival;
        if (v < 1) throw SyntaxError(line, col, std::string(what) + " >= 1");
        return static_cast<unsigned>(v);
    }

    int intern(std::vector<std::string>& table, const std::string& name) {
        for (size_t i = 0; i < table.size(); ++i)
            if (table[i] == name) return static_cast<int>(i);
        table.push_back(name);
        return static_cast<int>(table.size() - 1);
    }

    OpNode parse_opexpr() {
        if (peek().kind == Token::Ident && is_op_keyword(peek().text) && peek(1).text == "{") {
            std::string kw = next().text;
            next();
            OpNode node;
            node.kids.push_back(parse_opexpr());
            if (kw == "shuffle") node.kind = OpKind::Shuffle;
            else if (kw == "subset") node.kind = OpKind::Subset;
            else if (kw == "offmut") node.kind = OpKind::OffMut;
            else if (kw == "linemut") node.kind = OpKind::LineMut;
            else if (kw == "merge") {
                node.kind = OpKind::Merge;
                expect("|");
                node.kids.push_back(parse_opexpr());
            } else {
                node.kind = kw == "slide" ? OpKind::Slide : OpKind::Rep;
                expect(";");
                node.n = expect_count(kw == "slide" ? "slide count" : "repetition count");
            }
            expect("}");
            return node;
        }
        OpNode node;
        node.kind = OpKind::Seq;
        node.seq = parse_seq(false);
        return node;
    }

    bool at_seq_end() const {
        return peek().kind == Token::End || is_punct("}") || is_punct("|") || is_punct(";") ||
               is_punct(")");
    }

    std::vector<Item> parse_seq(bool mem_only) {
        std::vector<Item> items;
        while (!at_seq_end()) items.push_back(parse_item(mem_only));
        if (items.empty()) fail("a directive");
        return items;
    }

    Item parse_item(bool mem_only) {
        Item it;
        if (is_punct("(")) {
            next();
            it.kind = Item::Power;
            it.body = parse_seq(mem_only);
            expect(")");
            expect("^");
            expect("{");
            it.n = expect_count("power count");
            if (is_punct(",")) {
                next();
                if (!(is_ident("t") || is_ident("s"))) fail("'t' or 's'");
                it.attr = next().text[0];
                expect("+");
                expect("=");
                it.inc = expect_int(true);
            }
            expect("}");
            return it;
        }
        if (peek().kind != Token::Ident) fail("a directive");
        const Token& t = peek();
        if (is_op_keyword(t.text) && peek(1).text == "{") fail("a directive (operators cannot follow directives)");
        if (t.text == "W") {
            if (mem_only) fail("a memory directive");
            next();
            expect("(");
            it.kind = Item::Wildcard;
            it.n = expect_count("wildcard count");
            expect(")");
            return it;
        }
        it.kind = Item::Dir;
        it.dir = parse_directive(mem_only);
        return it;
    }

    Directive parse_directive(bool mem_only) {
        const Token t = peek();
        Directive d;
        if (t.text == "M") {
            next();
            d.kind = DirKind::Mem;
            if (is_punct("[")) {
                next();
                for (;;) {
                    parse_attr(d);
                    if (is_punct(",")) {
                        next();
                        continue;
                    }
                    expect("]");
                    break;
                }
            }
            return d;
        }
        if (t.text == "A" || t.text == "NOP" || t.text == "SB" || t.text == "B") {
            if (mem_only) fail("a memory directive");
        } else {
            throw UnknownDirective("unknown directive '" + t.text + "' at " + std::to_string(t.line) +
                                   ":" + std::to_string(t.col));
        }
        next();
        if (t.text == "A") {
            d.kind = DirKind::Arith;
        } else if (t.text == "NOP") {
            d.kind = DirKind::Nop;
        } else {
            d.kind = t.text == "SB" ? DirKind::SetBranch : DirKind::Branch;
            expect("(");
            if (peek().kind != Token::Ident) fail("variable identifier");
            d.var = intern(ast_.vars, next().text);
            expect(",");
            d.value = parse_bool();
            if (d.kind == DirKind::Branch) {
                expect(",");
                d.steps = expect_count("branch step count");
            }
            expect(")");
        }
        return d;
    }

    bool parse_bool() {
        if (peek().kind == Token::Ident) {
            const std::string& s = peek().text;
            if (s == "T" || s == "true") { next(); return true; }
            if (s == "F" || s == "false") { next(); return false; }
        }
        if (peek().kind == Token::Int && (peek().ival == 0 || peek().ival == 1)) return next().ival == 1;
        fail("boolean (T or F)");
    }

    [[noreturn]] void malformed(const Token& at, const std::string& why) const {
        throw MalformedAttribute(why + " at " + std::to_string(at.line) + ":" + std::to_string(at.col));
    }

    void parse_attr(Directive& d) {
        if (peek().kind == Token::End) fail("attribute");
        const Token key = next();
        if (key.kind != Token::Ident || (key.text != "t" && key.text != "s" && key.text != "w"))
            malformed(key, "unknown attribute '" + key.text + "'");
        if (peek().kind == Token::End) fail("'='");
        if (!is_punct("=")) malformed(peek(), "expected '=' after attribute key");
        next();
        if (peek().kind == Token::End) fail("attribute value");
        if (key.text == "w") {
            if (peek().kind != Token::Int) malformed(peek(), "word offset must be an integer");
            if (d.word) malformed(key, "duplicate word attribute");
            d.word = static_cast<unsigned>(next().ival);
            return;
        }
        if (peek().kind != Token::Ident) malformed(peek(), "attribute value must be a symbol");
        AttrExpr e;
        e.sym = intern(ast_.symbols, next().text);
        if (is_punct("+") || is_punct("-")) {
            bool neg = next().text == "-";
            if (peek().kind == Token::End) fail("integer");
            if (peek().kind != Token::Int) malformed(peek(), "attribute offset must be an integer");
            e.delta = neg ? -next().ival : next().ival;
        }
        auto& slot = key.text == "t" ? d.tag : d.set;
        if (slot) malformed(key, "duplicate attribute '" + key.text + "'");
        slot = e;
    }

    // Nested mutation operators, or two different modes in one tree, would
    // leave a variant with more than one mutation mode.
    void check_mutations(const OpNode& n, bool inside) {
        if (n.kind == OpKind::OffMut || n.kind == OpKind::LineMut) {
            if (inside) throw SyntaxError(0, 0, "no nested offmut/linemut");
            if (mode_ && *mode_ != n.kind) throw SyntaxError(0, 0, "a single mutation mode per GTS");
            mode_ = n.kind;
            inside = true;
        }
        for (const auto& k : n.kids) check_mutations(k, inside);
    }

    std::vector<Token> toks_;
    size_t pos_ = 0;
    GtsAst ast_;
    std::optional<OpKind> mode_;
};

}  // namespace detail

inline GtsAst parse_gts(std::string_view text) { return detail::GtsParser(text).parse(); }

namespace detail {

inline std::string render_attr(const GtsAst& ast, char key, const AttrExpr& e) {
    std::string s(1, key);
    s += "=" + ast.symbols.at(static_cast<size_t>(e.sym));
    if (e.delta > 0) s += "+" + std::to_string(e.delta);
    if (e.delta < 0) s += "-" + std::to_string(-e.delta);
    return s;
}

inline std::string render_directive(const GtsAst& ast, const Directive& d) {
    switch (d.kind) {
        case DirKind::Mem: {
            std::vector<std::string> attrs;
            if (d.tag) attrs.push_back(render_attr(ast, 't', *d.tag));
            if (d.set) attrs.push_back(render_attr(ast, 's', *d.set));
            if (d.word) attrs.push_back("w=" + std::to_string(*d.word));
            std::string s = "M";
            if (!attrs.empty()) {
                s += "[";
                for (size_t i = 0; i < attrs.size(); ++i) s += (i ? "," : "") + attrs[i];
                s += "]";
            }
            return s;
        }
        case DirKind::Arith: return "A";
        case DirKind::Nop: return "NOP";
        case DirKind::SetBranch:
            return "SB(" + ast.vars.at(static_cast<size_t>(d.var)) + "," + (d.value ? "T" : "F") + ")";
        case DirKind::Branch:
            return "B(" + ast.vars.at(static_cast<size_t>(d.var)) + "," + (d.value ? "T" : "F") + "," +
                   std::to_string(d.steps) + ")";
    }
    return "";
}

inline std::string render_seq(const GtsAst& ast, const std::vector<Item>& items) {
    std::string out;
    for (const Item& it : items) {
        if (!out.empty()) out += " ";
        if (it.kind == Item::Dir) {
            out += render_directive(ast, it.dir);
        } else if (it.kind == Item::Wildcard) {
            out += "W(" + std::to_string(it.n) + ")";
        } else {
            out += "(" + render_seq(ast, it.body) + ")^{" + std::to_string(it.n);
            if (it.attr) out += std::string(",") + it.attr + "+=" + std::to_string(it.inc);
            out += "}";
        }
    }
    return out;
}

inline std::string render_op(const GtsAst& ast, const OpNode& n) {
    switch (n.kind) {
        case OpKind::Seq: return render_seq(ast, n.seq);
        case OpKind::Shuffle: return "shuffle{" + render_op(ast, n.kids[0]) + "}";
        case OpKind::Subset: return "subset{" + render_op(ast, n.kids[0]) + "}";
        case OpKind::OffMut: return "offmut{" + render_op(ast, n.kids[0]) + "}";
        case OpKind::LineMut: return "linemut{" + render_op(ast, n.kids[0]) + "}";
        case OpKind::Slide: return "slide{" + render_op(ast, n.kids[0]) + ";" + std::to_string(n.n) + "}";
        case OpKind::Rep: return "rep{" + render_op(ast, n.kids[0]) + ";" + std::to_string(n.n) + "}";
        case OpKind::Merge:
            return "merge{" + render_op(ast, n.kids[0]) + "|" + render_op(ast, n.kids[1]) + "}";
    }
    return "";
}

}  // namespace detail

inline std::string render_gts(const GtsAst& ast) {
    std::string body = detail::render_op(ast, ast.body);
    if (!ast.pre) return body;
    return "pre{" + detail::render_seq(ast, *ast.pre) + "} " + body;
}

}  // namespace plumber
