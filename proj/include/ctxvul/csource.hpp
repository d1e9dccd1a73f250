#pragma once

// Lightweight scanner for C/C++ sources. Parses files as written (no macro
// expansion, no type resolution): enough structure to index function
// definitions, file-scope variable declarations, call expressions, and
// identifier uses, while preserving byte offsets into the original text.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ctxvul::csource {

struct ScannedFunction {
    std::string name;
    std::string signature;       // declaration start through the parameter ')'
    int start_line = 0;          // 1-based, inclusive
    int end_line = 0;
    std::size_t begin = 0;       // byte span [begin, end) of the full definition
    std::size_t end = 0;
    std::size_t body_begin = 0;  // offset of '{'
    std::size_t body_end = 0;    // offset one past the closing '}'
    bool is_static = false;
};

struct ScannedGlobal {
    std::string name;
    std::string declaration;  // full statement text including initializer and ';'
    int line = 0;
    bool is_static = false;
    bool is_extern = false;
};

struct ScanResult {
    std::vector<ScannedFunction> functions;
    std::vector<ScannedGlobal> globals;
    bool ok = true;
    std::string error;  // set when !ok (file skipped by callers)
};

struct CallSite {
    std::string name;
    int line = 0;
    std::size_t name_begin = 0;
    std::size_t args_end = 0;  // offset one past the closing ')' of the argument list
};

struct SkippedCall {
    std::string name;
    int line = 0;
    std::string reason;  // e.g. "member-access call"
};

struct CallScan {
    std::vector<CallSite> calls;
    std::vector<SkippedCall> skipped;
};

enum class UseMode { Read, Write, ReadWrite };

struct IdentUse {
    std::string name;
    int line = 0;
    UseMode mode = UseMode::Read;
};

/// Copy of the source where comments, string/char literal contents, and
/// preprocessor directives are replaced with spaces. Newlines and byte
/// offsets are preserved, so structural scans over the shadow can slice the
/// original text.
std::string shadow_text(std::string_view src);

ScanResult scan_file(std::string_view original);

/// Call expressions in shadow[begin, end). `original` is used to slice the
/// textual call form (name through closing paren).
CallScan find_calls(std::string_view shadow, std::size_t begin, std::size_t end);

/// Identifier uses (not calls, not member accesses, not keywords) with a
/// read/write classification based on the adjacent operator.
std::vector<IdentUse> find_ident_uses(std::string_view shadow, std::size_t begin, std::size_t end);

/// Parameter names plus names declared by local declarations anywhere in the
/// body. Used for shadowing: a name declared locally excludes all uses of
/// that name in the function (function-wide approximation).
std::set<std::string> local_names(const ScannedFunction& fn, std::string_view shadow);

bool is_keyword(std::string_view ident);
bool is_type_head_keyword(std::string_view ident);

/// 1-based line of a byte offset.
int line_of(std::string_view text, std::size_t offset);

}  // namespace ctxvul::csource
