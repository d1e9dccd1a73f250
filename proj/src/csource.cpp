#include "ctxvul/csource.hpp"

#include <algorithm>

namespace ctxvul::csource {

namespace {

constexpr std::size_t npos = std::string_view::npos;

bool ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool ident_char(char c) {
    return ident_start(c) || (c >= '0' && c <= '9');
}

bool space_char(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::size_t next_nonspace(std::string_view s, std::size_t i) {
    while (i < s.size() && space_char(s[i])) ++i;
    return i;
}

// Returns npos when only whitespace precedes `i` (inclusive scan backwards).
std::size_t prev_nonspace(std::string_view s, std::size_t i) {
    if (i == npos) return npos;
    while (true) {
        if (!space_char(s[i])) return i;
        if (i == 0) return npos;
        --i;
    }
}

// Identifier ending exactly at `end` (exclusive); empty when the preceding
// token is not an identifier.
std::string_view ident_ending_at(std::string_view s, std::size_t end) {
    std::size_t b = end;
    while (b > 0 && ident_char(s[b - 1])) --b;
    if (b == end || !ident_start(s[b])) return {};
    return s.substr(b, end - b);
}

// Matching '(' for the ')' at `close`, scanning backwards. npos on imbalance.
std::size_t match_paren_back(std::string_view s, std::size_t close) {
    int depth = 0;
    for (std::size_t i = close;; --i) {
        if (s[i] == ')') ++depth;
        else if (s[i] == '(') {
            if (--depth == 0) return i;
        }
        if (i == 0) break;
    }
    return npos;
}

std::size_t match_forward(std::string_view s, std::size_t open, char oc, char cc) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == oc) ++depth;
        else if (s[i] == cc) {
            if (--depth == 0) return i;
        }
    }
    return npos;
}

const std::set<std::string_view>& keyword_set() {
    static const std::set<std::string_view> kw = {
        "if", "else", "for", "while", "do", "switch", "case", "default", "return",
        "break", "continue", "goto", "sizeof", "typedef", "extern", "static",
        "struct", "union", "enum", "const", "volatile", "register", "inline",
        "restrict", "void", "char", "short", "int", "long", "float", "double",
        "signed", "unsigned", "auto", "_Bool", "_Complex", "_Alignas", "_Alignof",
        "_Atomic", "_Static_assert", "_Noreturn", "_Thread_local", "defined",
        "asm", "__asm__", "__volatile__", "__inline__", "__restrict__",
        "__extension__", "__typeof__", "namespace", "class", "template",
        "typename", "using", "new", "delete", "this", "operator", "public",
        "private", "protected", "virtual", "constexpr", "noexcept", "nullptr",
        "true", "false", "bool", "catch", "try", "throw", "static_assert",
        "decltype", "alignof", "alignas", "friend", "explicit", "mutable",
    };
    return kw;
}

const std::set<std::string_view>& type_head_set() {
    // Tokens that can open a local variable declaration. Common fixed-width
    // and libc typedef names are included so shadow detection works without
    // type resolution; project-specific typedefs are not recognized.
    static const std::set<std::string_view> heads = {
        "void", "char", "short", "int", "long", "float", "double", "signed",
        "unsigned", "const", "volatile", "register", "static", "struct",
        "union", "enum", "_Bool", "bool", "size_t", "ssize_t", "ptrdiff_t",
        "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t",
        "uint32_t", "uint64_t", "intptr_t", "uintptr_t", "FILE", "auto",
    };
    return heads;
}

struct Token {
    std::string_view text;
    std::size_t offset;
};

// Identifier tokens only; punctuation is consulted directly on the shadow.
std::vector<Token> ident_tokens(std::string_view s, std::size_t begin, std::size_t end) {
    std::vector<Token> out;
    std::size_t i = begin;
    std::size_t limit = std::min(end, s.size());
    while (i < limit) {
        if (ident_start(s[i])) {
            std::size_t b = i;
            while (i < limit && ident_char(s[i])) ++i;
            out.push_back({s.substr(b, i - b), b});
        } else {
            ++i;
        }
    }
    return out;
}

// Splits [begin, end) on commas at zero paren/bracket/brace depth.
std::vector<std::pair<std::size_t, std::size_t>>
split_top_commas(std::string_view s, std::size_t begin, std::size_t end) {
    std::vector<std::pair<std::size_t, std::size_t>> parts;
    int depth = 0;
    std::size_t start = begin;
    for (std::size_t i = begin; i < end; ++i) {
        char c = s[i];
        if (c == '(' || c == '[' || c == '{') ++depth;
        else if (c == ')' || c == ']' || c == '}') --depth;
        else if (c == ',' && depth == 0) {
            parts.emplace_back(start, i);
            start = i + 1;
        }
    }
    parts.emplace_back(start, end);
    return parts;
}

// First occurrence of `c` at zero depth in [begin, end), or npos. For '=',
// comparison and compound-assignment operators do not count.
std::size_t find_top(std::string_view s, std::size_t begin, std::size_t end, char c) {
    int depth = 0;
    std::size_t limit = std::min(end, s.size());
    for (std::size_t i = begin; i < limit; ++i) {
        char k = s[i];
        if (k == c && depth == 0) {
            if (c == '=') {
                if (i + 1 < limit && s[i + 1] == '=') { ++i; continue; }
                if (i > begin) {
                    char p = s[i - 1];
                    if (p == '=' || p == '!' || p == '<' || p == '>' || p == '+' ||
                        p == '-' || p == '*' || p == '/' || p == '%' || p == '&' ||
                        p == '|' || p == '^')
                        continue;
                }
            }
            return i;
        }
        if (k == '(' || k == '[' || k == '{') ++depth;
        else if (k == ')' || k == ']' || k == '}') --depth;
    }
    return npos;
}

// Name introduced by one declarator chunk (shadow offsets). Handles plain
// declarators, arrays, and function pointers. `func_decl_is_name` controls
// whether `int g(void)` yields "g" (true for parameters) or nothing (false
// for file scope, where that shape is a prototype).
std::optional<std::string> declarator_name(std::string_view s, std::size_t begin,
                                           std::size_t end, bool func_decl_is_name) {
    std::size_t eq = find_top(s, begin, end, '=');
    if (eq != npos) end = eq;
    std::size_t paren = find_top(s, begin, end, '(');
    if (paren != npos) {
        std::size_t before = paren == 0 ? npos : prev_nonspace(s, paren - 1);
        std::string_view prev_ident =
            before == npos ? std::string_view{} : ident_ending_at(s, before + 1);
        if (!prev_ident.empty() && !is_keyword(prev_ident)) {
            // `type name(args)` shape.
            if (func_decl_is_name) return std::string(prev_ident);
            return std::nullopt;  // file-scope prototype
        }
        // `type (*name)(args)` shape: first identifier inside the group.
        std::size_t close = match_forward(s, paren, '(', ')');
        if (close == npos || close > end) return std::nullopt;
        for (const auto& t : ident_tokens(s, paren + 1, close)) {
            if (!is_keyword(t.text)) return std::string(t.text);
        }
        return std::nullopt;
    }
    std::size_t bracket = find_top(s, begin, end, '[');
    if (bracket != npos) end = bracket;
    auto toks = ident_tokens(s, begin, end);
    for (auto it = toks.rbegin(); it != toks.rend(); ++it) {
        if (!is_keyword(it->text)) return std::string(it->text);
    }
    return std::nullopt;
}

bool has_ident_token(std::string_view s, std::size_t begin, std::size_t end,
                     std::string_view word) {
    for (const auto& t : ident_tokens(s, begin, end)) {
        if (t.text == word) return true;
    }
    return false;
}

// Analyzes one file-scope statement [begin, end) (end is the offset of ';')
// and appends any variable declarations found.
void analyze_global_stmt(std::string_view shadow, std::string_view original,
                         std::size_t begin, std::size_t end,
                         std::vector<ScannedGlobal>* out) {
    if (next_nonspace(shadow, begin) >= end) return;
    auto head_toks = ident_tokens(shadow, begin, end);
    if (head_toks.empty()) return;
    if (head_toks.front().text == "typedef" || head_toks.front().text == "using")
        return;

    bool is_static = false;
    bool is_extern = false;
    // A top-level '=' before any '{' marks that brace as an initializer, not
    // a struct/union/enum body.
    std::size_t assign = find_top(shadow, begin, end, '=');
    std::size_t body_brace = find_top(shadow, begin, end, '{');
    if (assign != npos && (body_brace == npos || assign < body_brace)) body_brace = npos;
    std::size_t qualifier_end = std::min(body_brace == npos ? end : body_brace,
                                         assign == npos ? end : assign);
    for (const auto& t : ident_tokens(shadow, begin, qualifier_end)) {
        if (t.text == "static") is_static = true;
        if (t.text == "extern") is_extern = true;
    }

    std::string decl_text(original.substr(begin, end - begin + 1));
    int line = line_of(original, begin);

    if (body_brace != npos) {
        // `struct tag { ... } name;` — declarators follow the closing brace.
        std::size_t close = match_forward(shadow, body_brace, '{', '}');
        if (close == npos || close >= end) return;
        if (next_nonspace(shadow, close + 1) >= end) return;  // pure type definition
        for (auto [b, e] : split_top_commas(shadow, close + 1, end)) {
            auto name = declarator_name(shadow, b, e, false);
            if (!name) continue;
            out->push_back({*name, decl_text, line, is_static, is_extern});
        }
        return;
    }

    // Bare `struct tag;` forward declarations introduce no variable.
    {
        std::vector<std::string_view> nonq;
        for (const auto& t : head_toks) {
            if (t.text == "const" || t.text == "volatile" || t.text == "static" ||
                t.text == "extern")
                continue;
            nonq.push_back(t.text);
        }
        if (nonq.size() == 2 &&
            (nonq[0] == "struct" || nonq[0] == "union" || nonq[0] == "enum"))
            return;
    }

    auto chunks = split_top_commas(shadow, begin, end);
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
        auto [b, e] = chunks[ci];
        auto name = declarator_name(shadow, b, e, false);
        if (!name) {
            // A prototype first chunk poisons the whole statement:
            // `int f(void), g(int);` declares no variables.
            if (ci == 0 && find_top(shadow, b, e, '(') != npos) return;
            continue;
        }
        out->push_back({*name, decl_text, line, is_static, is_extern});
    }
}

}  // namespace

bool is_keyword(std::string_view ident) {
    return keyword_set().count(ident) != 0;
}

bool is_type_head_keyword(std::string_view ident) {
    return type_head_set().count(ident) != 0;
}

int line_of(std::string_view text, std::size_t offset) {
    int line = 1;
    std::size_t limit = std::min(offset, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

std::string shadow_text(std::string_view src) {
    std::string out(src.size(), ' ');
    enum class St { Normal, LineComment, BlockComment, Str, Chr, Directive };
    St st = St::Normal;
    bool line_blank = true;       // only whitespace so far on this line
    bool escape = false;          // previous literal char was a backslash
    std::size_t block_open = 0;   // offset of the current block comment's '/'
    for (std::size_t i = 0; i < src.size(); ++i) {
        char c = src[i];
        char n = i + 1 < src.size() ? src[i + 1] : '\0';
        switch (st) {
            case St::Normal:
                if (c == '/' && n == '/') {
                    st = St::LineComment;
                } else if (c == '/' && n == '*') {
                    st = St::BlockComment;
                    block_open = i;
                } else if (c == '"') {
                    out[i] = '"';
                    st = St::Str;
                    escape = false;
                } else if (c == '\'') {
                    out[i] = '\'';
                    st = St::Chr;
                    escape = false;
                } else if (c == '#' && line_blank) {
                    st = St::Directive;
                } else {
                    out[i] = c;
                }
                break;
            case St::LineComment:
                if (c == '\n' && src[i - 1] != '\\') st = St::Normal;
                break;
            case St::BlockComment:
                // `/*/` must not close the comment it opened.
                if (c == '/' && i >= block_open + 3 && src[i - 1] == '*')
                    st = St::Normal;
                break;
            case St::Str:
                if (escape) {
                    escape = false;
                } else if (c == '\\') {
                    escape = true;
                } else if (c == '"') {
                    out[i] = '"';
                    st = St::Normal;
                } else if (c == '\n') {
                    st = St::Normal;  // unterminated literal: recover at line end
                }
                break;
            case St::Chr:
                if (escape) {
                    escape = false;
                } else if (c == '\\') {
                    escape = true;
                } else if (c == '\'') {
                    out[i] = '\'';
                    st = St::Normal;
                } else if (c == '\n') {
                    st = St::Normal;
                }
                break;
            case St::Directive:
                if (c == '\n' && src[i - 1] != '\\') st = St::Normal;
                break;
        }
        if (c == '\n') {
            out[i] = '\n';
            line_blank = true;
        } else if (!space_char(c)) {
            line_blank = false;
        }
    }
    return out;
}

ScanResult scan_file(std::string_view original) {
    ScanResult result;
    std::string shadow_s = shadow_text(original);
    std::string_view shadow = shadow_s;
    const std::size_t n = shadow.size();

    struct BlockFrame {
        std::size_t saved_stmt_start;
        bool saved_has_assign;
    };
    std::vector<BlockFrame> stack;  // entered non-function blocks
    std::size_t stmt_start = npos;
    bool stmt_has_assign = false;
    int paren_depth = 0;

    std::size_t i = 0;
    while (i < n) {
        char c = shadow[i];
        if (space_char(c)) {
            ++i;
            continue;
        }
        if (stmt_start == npos) {
            stmt_start = i;
            stmt_has_assign = false;
            paren_depth = 0;
        }
        if (c == '(') {
            ++paren_depth;
            ++i;
            continue;
        }
        if (c == ')') {
            --paren_depth;
            ++i;
            continue;
        }
        if (c == '=' && paren_depth == 0) {
            bool compound = false;
            if (i > 0) {
                char p = shadow[i - 1];
                if (p == '=' || p == '!' || p == '<' || p == '>' || p == '+' ||
                    p == '-' || p == '*' || p == '/' || p == '%' || p == '&' ||
                    p == '|' || p == '^')
                    compound = true;
            }
            if (i + 1 < n && shadow[i + 1] == '=') compound = true;
            if (!compound) stmt_has_assign = true;
            ++i;
            continue;
        }
        if (c == ';' && paren_depth == 0) {
            if (stack.empty()) {
                analyze_global_stmt(shadow, original, stmt_start, i, &result.globals);
            }
            stmt_start = npos;
            ++i;
            continue;
        }
        if (c == '{') {
            if (stmt_has_assign) {
                // Aggregate initializer: part of the statement, not a scope.
                std::size_t close = match_forward(shadow, i, '{', '}');
                if (close == npos) {
                    result.ok = false;
                    result.error = "unbalanced braces in initializer near line " +
                                   std::to_string(line_of(original, i));
                    return result;
                }
                i = close + 1;
                continue;
            }
            std::size_t before = i == 0 ? npos : prev_nonspace(shadow, i - 1);
            bool is_function = false;
            std::size_t sig_end = 0;
            std::string fn_name;
            if (before != npos && shadow[before] == ')') {
                // Possible definition. Walk back over attribute groups until
                // the parameter list's preceding identifier is found.
                std::size_t close = before;
                for (int hop = 0; hop < 3 && !is_function; ++hop) {
                    std::size_t open = match_paren_back(shadow, close);
                    if (open == npos || open < stmt_start || open == 0) break;
                    std::size_t nb = prev_nonspace(shadow, open - 1);
                    if (nb == npos || nb < stmt_start) break;
                    std::string_view ident = ident_ending_at(shadow, nb + 1);
                    if (ident.empty()) break;
                    if (ident == "__attribute__" || ident == "__declspec") {
                        std::size_t ident_begin = nb + 1 - ident.size();
                        if (ident_begin <= stmt_start || ident_begin == 0) break;
                        std::size_t prev = prev_nonspace(shadow, ident_begin - 1);
                        if (prev == npos || shadow[prev] != ')') break;
                        close = prev;
                        continue;
                    }
                    if (is_keyword(ident)) break;  // if/while/switch guard
                    is_function = true;
                    fn_name.assign(ident);
                    sig_end = close;
                }
            }
            if (is_function) {
                std::size_t body_close = match_forward(shadow, i, '{', '}');
                if (body_close == npos) {
                    result.ok = false;
                    result.error = "unbalanced braces in function '" + fn_name +
                                   "' near line " + std::to_string(line_of(original, i));
                    return result;
                }
                ScannedFunction fn;
                fn.name = fn_name;
                fn.signature =
                    std::string(original.substr(stmt_start, sig_end + 1 - stmt_start));
                fn.begin = stmt_start;
                fn.end = body_close + 1;
                fn.body_begin = i;
                fn.body_end = body_close + 1;
                fn.start_line = line_of(original, stmt_start);
                fn.end_line = line_of(original, body_close);
                fn.is_static = has_ident_token(shadow, stmt_start, i, "static");
                result.functions.push_back(std::move(fn));
                i = body_close + 1;
                stmt_start = npos;
                continue;
            }
            // struct/union/enum body, namespace, or extern "C" block. Enter
            // it; nested function definitions (C++ methods) are still
            // indexed, but member declarations are not globals because the
            // stack is non-empty.
            stack.push_back({stmt_start, stmt_has_assign});
            stmt_start = npos;
            ++i;
            continue;
        }
        if (c == '}') {
            if (stack.empty()) {
                result.ok = false;
                result.error =
                    "unmatched '}' at line " + std::to_string(line_of(original, i));
                return result;
            }
            stmt_start = stack.back().saved_stmt_start;
            stmt_has_assign = stack.back().saved_has_assign;
            stack.pop_back();
            ++i;
            continue;
        }
        ++i;
    }
    if (!stack.empty()) {
        result.ok = false;
        result.error = "unbalanced braces at end of file";
    }
    return result;
}

CallScan find_calls(std::string_view shadow, std::size_t begin, std::size_t end) {
    CallScan out;
    std::size_t limit = std::min(end, shadow.size());
    std::size_t i = begin;
    while (i < limit) {
        if (!ident_start(shadow[i])) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < limit && ident_char(shadow[i])) ++i;
        std::string_view name = shadow.substr(b, i - b);
        if (is_keyword(name)) continue;
        std::size_t j = next_nonspace(shadow, i);
        if (j >= limit || shadow[j] != '(') continue;
        std::size_t p = b == 0 ? npos : prev_nonspace(shadow, b - 1);
        if (p != npos) {
            char pc = shadow[p];
            if (pc == '.' || (pc == '>' && p > 0 && shadow[p - 1] == '-')) {
                out.skipped.push_back(
                    {std::string(name), line_of(shadow, b), "member-access call"});
                continue;
            }
            if (pc == ':') {
                out.skipped.push_back(
                    {std::string(name), line_of(shadow, b), "scoped call"});
                continue;
            }
        }
        std::size_t close = match_forward(shadow, j, '(', ')');
        if (close == npos) continue;
        out.calls.push_back({std::string(name), line_of(shadow, b), b, close + 1});
    }
    return out;
}

std::vector<IdentUse> find_ident_uses(std::string_view shadow, std::size_t begin,
                                      std::size_t end) {
    std::vector<IdentUse> out;
    std::size_t limit = std::min(end, shadow.size());
    std::size_t i = begin;
    while (i < limit) {
        if (!ident_start(shadow[i])) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < limit && ident_char(shadow[i])) ++i;
        std::string_view name = shadow.substr(b, i - b);
        if (is_keyword(name)) continue;
        std::size_t j = next_nonspace(shadow, i);
        if (j < limit && shadow[j] == '(') continue;  // call, handled separately
        std::size_t p = b == 0 ? npos : prev_nonspace(shadow, b - 1);
        if (p != npos) {
            char pc = shadow[p];
            if (pc == '.' || (pc == '>' && p > 0 && shadow[p - 1] == '-')) continue;
        }
        // Statement label `name:` (but not C++ `name::`).
        if (j < limit && shadow[j] == ':' && (j + 1 >= limit || shadow[j + 1] != ':'))
            continue;

        UseMode mode = UseMode::Read;
        char c0 = j < limit ? shadow[j] : '\0';
        char c1 = j + 1 < limit ? shadow[j + 1] : '\0';
        char c2 = j + 2 < limit ? shadow[j + 2] : '\0';
        if (c0 == '=' && c1 != '=') {
            mode = UseMode::Write;
        } else if ((c0 == '+' && c1 == '+') || (c0 == '-' && c1 == '-')) {
            mode = UseMode::ReadWrite;
        } else if ((c0 == '+' || c0 == '-' || c0 == '*' || c0 == '/' || c0 == '%' ||
                    c0 == '&' || c0 == '|' || c0 == '^') &&
                   c1 == '=' && c2 != '=') {
            mode = UseMode::ReadWrite;
        } else if ((c0 == '<' && c1 == '<' && c2 == '=') ||
                   (c0 == '>' && c1 == '>' && c2 == '=')) {
            mode = UseMode::ReadWrite;
        }
        if (mode == UseMode::Read && p != npos && p > 0) {
            char pc = shadow[p];
            char pp = shadow[p - 1];
            if ((pc == '+' && pp == '+') || (pc == '-' && pp == '-'))
                mode = UseMode::ReadWrite;
        }
        out.push_back({std::string(name), line_of(shadow, b), mode});
    }
    return out;
}

std::set<std::string> local_names(const ScannedFunction& fn, std::string_view shadow) {
    std::set<std::string> names;

    // Parameters: the last paren group of the signature span.
    std::size_t sig_end = fn.begin + fn.signature.size();
    std::size_t close = sig_end > 0 ? sig_end - 1 : 0;
    if (close < shadow.size() && shadow[close] == ')') {
        std::size_t open = match_paren_back(shadow, close);
        if (open != npos && open > fn.begin) {
            for (auto [b, e] : split_top_commas(shadow, open + 1, close)) {
                if (next_nonspace(shadow, b) >= e) continue;
                auto toks = ident_tokens(shadow, b, e);
                if (toks.size() == 1 && toks[0].text == "void") continue;
                auto name = declarator_name(shadow, b, e, true);
                if (name) names.insert(*name);
            }
        }
    }

    // Local declarations: a type-head token followed by declarators, anywhere
    // in the body. The whole-body scan deliberately ignores inner scoping; a
    // name declared in any block shadows the global for the entire function.
    std::size_t i = fn.body_begin + 1;
    std::size_t limit = std::min(fn.body_end, shadow.size());
    while (i < limit) {
        if (!ident_start(shadow[i])) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < limit && ident_char(shadow[i])) ++i;
        std::string_view tok = shadow.substr(b, i - b);
        if (!is_type_head_keyword(tok)) continue;

        // Consume the rest of the type head: more head keywords, or one tag
        // identifier after struct/union/enum.
        std::size_t j = i;
        bool tag_pending = (tok == "struct" || tok == "union" || tok == "enum");
        while (true) {
            std::size_t k = next_nonspace(shadow, j);
            if (k >= limit || !ident_start(shadow[k])) break;
            std::size_t kb = k;
            while (k < limit && ident_char(shadow[k])) ++k;
            std::string_view t2 = shadow.substr(kb, k - kb);
            if (is_type_head_keyword(t2)) {
                tag_pending = (t2 == "struct" || t2 == "union" || t2 == "enum");
                j = k;
            } else if (tag_pending) {
                tag_pending = false;
                j = k;
            } else {
                break;
            }
        }

        // Declarators: `* name`, `name`, `(*name)`. A different next char
        // (e.g. ')' closing a cast) means this was not a declaration.
        std::size_t k = next_nonspace(shadow, j);
        while (k < limit) {
            while (k < limit && (shadow[k] == '*' || space_char(shadow[k]))) ++k;
            if (k < limit && shadow[k] == '(') {
                std::size_t pc = match_forward(shadow, k, '(', ')');
                if (pc == npos || pc >= limit) break;
                bool found = false;
                for (const auto& t : ident_tokens(shadow, k + 1, pc)) {
                    if (!is_keyword(t.text)) {
                        names.insert(std::string(t.text));
                        found = true;
                        break;
                    }
                }
                if (!found) break;
                k = pc + 1;
            } else if (k < limit && ident_start(shadow[k])) {
                std::size_t nb = k;
                while (k < limit && ident_char(shadow[k])) ++k;
                std::string_view nm = shadow.substr(nb, k - nb);
                if (is_keyword(nm)) break;
                names.insert(std::string(nm));
            } else {
                break;
            }
            // Advance to the next ',' at zero depth; stop at ';' or a closer.
            int depth = 0;
            bool more = false;
            while (k < limit) {
                char c = shadow[k];
                if (c == '(' || c == '[' || c == '{') {
                    ++depth;
                } else if (c == ')' || c == ']' || c == '}') {
                    if (depth == 0) break;
                    --depth;
                } else if (c == ',' && depth == 0) {
                    ++k;
                    more = true;
                    break;
                } else if (c == ';' && depth == 0) {
                    break;
                }
                ++k;
            }
            if (!more) break;
            k = next_nonspace(shadow, k);
        }
        i = k > i ? k : i;
    }
    return names;
}

}  // namespace ctxvul::csource
