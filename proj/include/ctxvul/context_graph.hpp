#pragma once

/** @file
 * Function-level code property graph over an acquired snapshot: function
 * definitions, name-resolved call edges, and file-scope variable accesses.
 * Everything is derived from the files as written (no preprocessing, no type
 * resolution), so queries are approximate but cheap and deterministic.
 */

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxvul/repo_store.hpp"

namespace ctxvul::context_graph {

enum class ElementKind { Caller, Callee, GlobalVariable };

const char* element_kind_name(ElementKind kind);
ElementKind element_kind_from(const std::string& name);

enum class AccessMode { Read, Write, ReadWrite };

const char* access_mode_name(AccessMode mode);
AccessMode access_mode_from(const std::string& name);

/// One unit of inter-procedural context around a target function.
struct ContextElement {
    ElementKind kind = ElementKind::Callee;
    std::string name;
    std::string source;     // definition text; declaration for globals; the
                            // textual call form for extern callees
    std::string file_path;  // empty for extern callees
    std::vector<int> call_sites;  // 1-based lines; empty for globals
    std::optional<AccessMode> access_mode;  // present only for globals
    bool is_extern = false;

    bool operator==(const ContextElement&) const = default;
};

/// Identity of an element inside one target's context list.
struct ElementKey {
    ElementKind kind = ElementKind::Callee;
    std::string name;
    std::string file_path;

    auto operator<=>(const ElementKey&) const = default;
};

ElementKey key_of(const ContextElement& element);

nlohmann::json element_to_json(const ContextElement& element);
ContextElement element_from_json(const nlohmann::json& j);

struct FunctionInfo {
    std::string name;
    std::string file_path;
    std::string signature;
    std::string source;
    int start_line = 0;
    int end_line = 0;
    bool is_static = false;
};

struct GlobalInfo {
    std::string name;
    std::string declaration;
    std::string file_path;
    int line = 0;
    bool is_static = false;
    bool is_extern = false;
};

struct CallEdge {
    int caller = 0;         // index into functions()
    std::string callee;     // textual callee name
    int line = 0;           // call-site line
    std::string call_text;  // e.g. "memcpy(dst, src, n)"
};

struct AccessEdge {
    int function = 0;  // index into functions()
    std::string global;
    AccessMode mode = AccessMode::Read;
    std::vector<int> lines;
};

struct Diagnostic {
    std::string file_path;
    int line = 0;
    std::string message;
};

struct BuildOptions {
    std::vector<std::string> include_globs = {"*.c", "*.h", "*.cc", "*.cpp",
                                              "*.cxx", "*.hpp", "*.hh"};
};

class CodeGraph {
public:
    /// Callers of `target`, each with the lines where it makes the call.
    /// Self-recursion appears as the target listing itself. Static callees
    /// in other translation units never produce a caller edge.
    std::vector<ContextElement> callers_of(const repo_store::FunctionRef& target) const;

    /// Callees of `target`. A name with no definition in the snapshot is an
    /// extern element whose source is the textual call form. Calls through
    /// local or global function pointers, and through names only defined as
    /// macros, resolve to nothing and are recorded in diagnostics.
    std::vector<ContextElement> callees_of(const repo_store::FunctionRef& target) const;

    /// File-scope variables read or written by `target`. A local declaration
    /// of the same name anywhere in the body shadows the global for the
    /// whole function.
    std::vector<ContextElement> globals_of(const repo_store::FunctionRef& target) const;

    /// Callers, then callees, then globals.
    std::vector<ContextElement> context_of(const repo_store::FunctionRef& target) const;

    const std::vector<FunctionInfo>& functions() const { return functions_; }
    const std::vector<GlobalInfo>& globals() const { return globals_; }
    const std::vector<CallEdge>& call_edges() const { return call_edges_; }
    const std::vector<AccessEdge>& access_edges() const { return access_edges_; }
    const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }
    int file_count() const { return file_count_; }
    const std::string& repo_url() const { return repo_url_; }
    const std::string& repo_revision() const { return repo_revision_; }

    void save(const std::filesystem::path& path) const;
    static CodeGraph load(const std::filesystem::path& path);

    friend CodeGraph build_graph(const repo_store::RepoHandle&, const BuildOptions&);

private:
    void finalize();
    /// Graph row for a FunctionRef: exact (file, name, line) match first,
    /// then narrowing by file and source similarity. -1 when absent.
    int find_entry(const repo_store::FunctionRef& target) const;
    std::vector<int> resolve_callee(int caller, const std::string& name) const;

    std::vector<FunctionInfo> functions_;
    std::vector<GlobalInfo> globals_;
    std::vector<CallEdge> call_edges_;
    std::vector<AccessEdge> access_edges_;
    std::vector<Diagnostic> diagnostics_;
    int file_count_ = 0;
    std::string repo_url_;
    std::string repo_revision_;

    // Derived indices (rebuilt by finalize()).
    std::map<std::string, std::vector<int>> fn_by_name_;
    std::map<std::string, std::vector<int>> global_by_name_;
    std::map<int, std::vector<int>> edges_by_caller_;
    std::map<std::string, std::vector<int>> edges_by_callee_;
    std::map<int, std::vector<int>> accesses_by_function_;
};

/// Indexes every file matching the include globs. Unparseable files are
/// skipped with a diagnostic; zero parseable files raises ErrorCode::EmptyGraph.
CodeGraph build_graph(const repo_store::RepoHandle& repo,
                      const BuildOptions& options = {});

}  // namespace ctxvul::context_graph
