#include "twinsem/path_parser.hpp"

#include "twinsem/error.hpp"
#include "twinsem/exchange.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace twinsem {

namespace {

enum class Tok { ident, string, number, punct, arrow };

struct Token {
    Tok kind;
    std::string text;
    double number = 0.0;
    std::size_t line = 0;
};

struct Comment {
    std::string text;
    std::size_t line;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

/// Tokenizes R-like source. Comments are collected separately.
std::vector<Token> lex(std::string_view text, std::size_t first_line, std::vector<Comment>* comments) {
    std::vector<Token> out;
    std::size_t line = first_line;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '#') {
            const std::size_t end = std::min(text.find('\n', i), text.size());
            if (comments) comments->push_back({std::string(text.substr(i + 1, end - i - 1)), line});
            i = end;
        } else if (c == '"' || c == '\'') {
            std::string s;
            std::size_t j = i + 1;
            while (j < text.size() && text[j] != c) {
                if (text[j] == '\\' && j + 1 < text.size()) ++j;
                if (text[j] == '\n') ++line;
                s.push_back(text[j++]);
            }
            if (j >= text.size()) throw ParseError(line, "unterminated string literal");
            out.push_back({Tok::string, std::move(s), 0.0, line});
            i = j + 1;
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
            std::size_t j = i;
            while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.' ||
                                       text[j] == 'e' || text[j] == 'E' ||
                                       ((text[j] == '-' || text[j] == '+') && (text[j - 1] == 'e' || text[j - 1] == 'E'))))
                ++j;
            const std::string literal(text.substr(i, j - i));
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(literal.data(), literal.data() + literal.size(), v);
            if (ec != std::errc() || ptr != literal.data() + literal.size())
                throw ParseError(line, "malformed number '" + literal + "'");
            if (j < text.size() && text[j] == 'L') ++j;
            out.push_back({Tok::number, literal, v, line});
            i = j;
        } else if (ident_start(c)) {
            std::size_t j = i;
            while (j < text.size() && ident_char(text[j])) ++j;
            out.push_back({Tok::ident, std::string(text.substr(i, j - i)), 0.0, line});
            i = j;
        } else if (c == '<' && i + 1 < text.size() && text[i + 1] == '-') {
            out.push_back({Tok::arrow, "<-", 0.0, line});
            i += 2;
        } else {
            out.push_back({Tok::punct, std::string(1, c), 0.0, line});
            ++i;
        }
    }
    return out;
}

enum class Lit { string, number, boolean, na };

struct Scalar {
    Lit kind;
    std::string text;
    double number = 0.0;
    bool flag = false;
};

using Vector = std::vector<Scalar>;

class Parser {
public:
    Parser(std::vector<Token> tokens, ParsedPathSet& out) : toks_(std::move(tokens)), out_(out) {}

    void run() {
        std::vector<std::size_t> open;
        while (pos_ < toks_.size()) {
            const Token& t = toks_[pos_];
            if (t.kind == Tok::ident && peek_punct(1, "(")) {
                if (t.text == "mxPath") {
                    parse_path_call();
                } else if (t.text == "c" || t.text == "list") {
                    open.push_back(t.line);
                    pos_ += 2;
                } else {
                    out_.diagnostics.push_back({t.line, "ignored statement '" + t.text + "(...)'"});
                    skip_call();
                }
            } else if (t.kind == Tok::ident && (t.text == "manifests" || t.text == "latents") &&
                       (peek_kind(1, Tok::arrow) || peek_punct(1, "="))) {
                const bool manifests = t.text == "manifests";
                pos_ += 2;
                Vector v = parse_expr();
                auto& target = manifests ? out_.declared_manifests : out_.declared_latents;
                for (const auto& s : v) {
                    if (s.kind != Lit::string) throw ParseError(t.line, "variable declarations must be strings");
                    target.push_back(s.text);
                }
            } else if (t.kind == Tok::punct && t.text == "(") {
                open.push_back(t.line);
                ++pos_;
            } else if (t.kind == Tok::punct && t.text == ")") {
                if (open.empty()) throw ParseError(t.line, "unbalanced ')'");
                open.pop_back();
                ++pos_;
            } else {
                ++pos_;
            }
        }
        if (!open.empty()) throw ParseError(open.back(), "unbalanced '(' is never closed");
    }

private:
    bool peek_punct(std::size_t ahead, std::string_view p) const {
        return pos_ + ahead < toks_.size() && toks_[pos_ + ahead].kind == Tok::punct && toks_[pos_ + ahead].text == p;
    }
    bool peek_kind(std::size_t ahead, Tok kind) const {
        return pos_ + ahead < toks_.size() && toks_[pos_ + ahead].kind == kind;
    }
    std::size_t line() const { return pos_ < toks_.size() ? toks_[pos_].line : (toks_.empty() ? 1 : toks_.back().line); }

    void expect(std::string_view p) {
        if (!peek_punct(0, p)) throw ParseError(line(), "expected '" + std::string(p) + "'");
        ++pos_;
    }

    void skip_call() {
        const std::size_t start = toks_[pos_].line;
        pos_ += 2;
        int depth = 1;
        while (pos_ < toks_.size() && depth > 0) {
            if (toks_[pos_].kind == Tok::punct) {
                if (toks_[pos_].text == "(") ++depth;
                if (toks_[pos_].text == ")") --depth;
            }
            ++pos_;
        }
        if (depth > 0) throw ParseError(start, "unbalanced parentheses in call");
    }

    Vector parse_expr() {
        if (pos_ >= toks_.size()) throw ParseError(line(), "unexpected end of input");
        const Token& t = toks_[pos_];
        if (t.kind == Tok::ident && t.text == "c" && peek_punct(1, "(")) {
            pos_ += 2;
            Vector out;
            if (peek_punct(0, ")")) {
                ++pos_;
                return out;
            }
            while (true) {
                Vector item = parse_expr();
                out.insert(out.end(), item.begin(), item.end());
                if (peek_punct(0, ",")) {
                    ++pos_;
                    continue;
                }
                expect(")");
                return out;
            }
        }
        if (t.kind == Tok::string) {
            ++pos_;
            return {Scalar{Lit::string, t.text}};
        }
        if (t.kind == Tok::number) {
            ++pos_;
            return {Scalar{Lit::number, t.text, t.number}};
        }
        if (t.kind == Tok::punct && (t.text == "-" || t.text == "+") && peek_kind(1, Tok::number)) {
            const double sign = t.text == "-" ? -1.0 : 1.0;
            pos_ += 2;
            return {Scalar{Lit::number, toks_[pos_ - 1].text, sign * toks_[pos_ - 1].number}};
        }
        if (t.kind == Tok::ident) {
            if (t.text == "TRUE" || t.text == "T") {
                ++pos_;
                return {Scalar{Lit::boolean, t.text, 0.0, true}};
            }
            if (t.text == "FALSE" || t.text == "F") {
                ++pos_;
                return {Scalar{Lit::boolean, t.text, 0.0, false}};
            }
            if (t.text == "NA" || t.text == "NA_character_" || t.text == "NA_real_") {
                ++pos_;
                return {Scalar{Lit::na, t.text}};
            }
        }
        throw ParseError(t.line, "unsupported expression starting at '" + t.text + "'");
    }

    void parse_path_call() {
        const std::size_t call_line = toks_[pos_].line;
        pos_ += 2;
        std::map<std::string, Vector> args;
        std::size_t positional = 0;
        static const std::set<std::string> known{"from", "to", "arrows", "free", "value", "values", "label", "labels",
                                                 "connect"};
        if (peek_punct(0, ")")) throw ParseError(call_line, "mxPath() without arguments");
        while (true) {
            std::string key;
            if (peek_kind(0, Tok::ident) && peek_punct(1, "=")) {
                key = toks_[pos_].text;
                if (!known.count(key)) throw ParseError(toks_[pos_].line, "unknown mxPath argument '" + key + "'");
                if (key == "values") key = "value";
                if (key == "labels") key = "label";
                pos_ += 2;
            } else {
                if (positional > 1) throw ParseError(line(), "too many positional mxPath arguments");
                key = positional++ == 0 ? "from" : "to";
            }
            if (args.count(key)) throw ParseError(line(), "mxPath argument '" + key + "' given twice");
            if (pos_ >= toks_.size()) throw ParseError(call_line, "unbalanced parentheses in mxPath call");
            args[key] = parse_expr();
            if (peek_punct(0, ",")) {
                ++pos_;
                continue;
            }
            if (pos_ >= toks_.size()) throw ParseError(call_line, "unbalanced parentheses in mxPath call");
            expect(")");
            break;
        }
        expand(args, call_line);
    }

    static std::vector<std::string> names(const Vector& v, const char* what, std::size_t line) {
        std::vector<std::string> out;
        for (const auto& s : v) {
            if (s.kind != Lit::string) throw ParseError(line, std::string("'") + what + "' must be strings");
            out.push_back(s.text);
        }
        return out;
    }

    static const Scalar* pick(const Vector* v, std::size_t i, std::size_t n, const char* what, std::size_t line) {
        if (!v) return nullptr;
        if (v->size() == 1) return &(*v)[0];
        if (v->size() != n)
            throw ParseError(line, std::string("'") + what + "' has " + std::to_string(v->size()) +
                                       " elements for " + std::to_string(n) + " paths");
        return &(*v)[i];
    }

    void expand(const std::map<std::string, Vector>& args, std::size_t line) {
        auto find = [&](const char* key) -> const Vector* {
            auto it = args.find(key);
            return it == args.end() ? nullptr : &it->second;
        };
        if (const Vector* connect = find("connect")) {
            if (connect->size() != 1 || (*connect)[0].kind != Lit::string || (*connect)[0].text != "single")
                throw ParseError(line, "only connect=\"single\" is supported");
        }
        if (!find("from")) throw ParseError(line, "mxPath without 'from'");
        const std::vector<std::string> from = names(*find("from"), "from", line);
        const Vector* arrows_v = find("arrows");
        std::vector<std::string> to;
        if (const Vector* t = find("to")) {
            to = names(*t, "to", line);
        } else {
            to = from;
        }
        if (from.empty() || to.empty()) throw ParseError(line, "mxPath with an empty endpoint vector");
        const std::size_t n = std::max(from.size(), to.size());
        if ((from.size() != 1 && from.size() != n) || (to.size() != 1 && to.size() != n))
            throw ParseError(line, "'from' and 'to' lengths cannot be broadcast together");
        for (std::size_t i = 0; i < n; ++i) {
            PathSpec spec;
            spec.from = from.size() == 1 ? from[0] : from[i];
            spec.to = to.size() == 1 ? to[0] : to[i];
            if (const Scalar* a = pick(arrows_v, i, n, "arrows", line)) {
                if (a->kind != Lit::number || (a->number != 1.0 && a->number != 2.0))
                    throw ParseError(line, "'arrows' must be 1 or 2");
                spec.arrows = static_cast<int>(a->number);
            } else if (!find("to")) {
                spec.arrows = 2;
            }
            if (const Scalar* f = pick(find("free"), i, n, "free", line)) {
                if (f->kind != Lit::boolean) throw ParseError(line, "'free' must be TRUE/FALSE");
                spec.free = f->flag;
            }
            if (const Scalar* v = pick(find("value"), i, n, "value", line)) {
                if (v->kind == Lit::number) spec.value = v->number;
                else if (v->kind != Lit::na) throw ParseError(line, "'value' must be numeric");
            }
            if (const Scalar* l = pick(find("label"), i, n, "label", line)) {
                if (l->kind == Lit::string) spec.label = l->text;
                else if (l->kind != Lit::na) throw ParseError(line, "'label' must be strings");
            }
            out_.paths.push_back(std::move(spec));
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    ParsedPathSet& out_;
};

bool mentions_call(const std::string& text, std::string_view call) {
    const auto at = text.find(call);
    if (at == std::string::npos) return false;
    if (at > 0 && ident_char(text[at - 1])) return false;
    std::size_t j = at + call.size();
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    return j < text.size() && text[j] == '(';
}

}  // namespace

ParsedPathSet parse_onyx_export(std::string_view text) {
    ParsedPathSet out;
    std::vector<Comment> comments;
    std::vector<Token> tokens = lex(text, 1, &comments);

    for (const auto& comment : comments) {
        if (mentions_call(comment.text, "mxData"))
            out.diagnostics.push_back({comment.line, "commented-out mxData ignored; data are bound separately"});
        else if (mentions_call(comment.text, "mxModel"))
            out.diagnostics.push_back({comment.line, "commented-out mxModel ignored"});
        std::vector<Token> inner;
        try {
            inner = lex(comment.text, comment.line, nullptr);
        } catch (const ParseError&) {
            continue;
        }
        if (inner.size() < 3 || inner[0].kind != Tok::ident ||
            (inner[0].text != "manifests" && inner[0].text != "latents") ||
            !(inner[1].kind == Tok::arrow || (inner[1].kind == Tok::punct && inner[1].text == "=")))
            continue;
        ParsedPathSet decl;
        try {
            Parser(std::move(inner), decl).run();
        } catch (const ParseError&) {
            continue;
        }
        out.declared_manifests.insert(out.declared_manifests.end(), decl.declared_manifests.begin(),
                                      decl.declared_manifests.end());
        out.declared_latents.insert(out.declared_latents.end(), decl.declared_latents.begin(),
                                    decl.declared_latents.end());
    }

    Parser(std::move(tokens), out).run();
    std::stable_sort(out.diagnostics.begin(), out.diagnostics.end(),
                     [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
    return out;
}

ParsedPathSet read_path_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open path file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    if (path.extension() == ".json") {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(buffer.str());
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(0, std::string("invalid JSON in '") + path.string() + "': " + e.what());
        }
        return parse_exchange(doc);
    }
    return parse_onyx_export(buffer.str());
}

std::vector<std::string> path_variables(const std::vector<PathSpec>& paths) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto note = [&](const std::string& name) {
        if (name.empty() || name == kConstant || is_def_label(name)) return;
        if (seen.insert(name).second) out.push_back(name);
    };
    for (const auto& p : paths) {
        if (p.defn) continue;
        note(p.from);
        note(p.to);
    }
    return out;
}

RamModel build_ram(const std::string& name, const std::vector<PathSpec>& paths,
                   const std::vector<std::string>& manifests) {
    std::vector<std::string> latents;
    for (const auto& v : path_variables(paths))
        if (std::find(manifests.begin(), manifests.end(), v) == manifests.end()) latents.push_back(v);
    RamModel model(name, manifests, latents);
    for (const auto& p : paths)
        if (p.defn) model.add_path(p);
    for (const auto& p : paths)
        if (!p.defn) model.add_path(p);
    return model;
}

}  // namespace twinsem
