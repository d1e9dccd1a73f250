#include "ctxvul/context_graph.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "ctxvul/csource.hpp"
#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ctxvul::context_graph {

const char* element_kind_name(ElementKind kind) {
    switch (kind) {
        case ElementKind::Caller: return "caller";
        case ElementKind::Callee: return "callee";
        case ElementKind::GlobalVariable: return "global_variable";
    }
    return "callee";
}

ElementKind element_kind_from(const std::string& name) {
    if (name == "caller") return ElementKind::Caller;
    if (name == "callee") return ElementKind::Callee;
    if (name == "global_variable") return ElementKind::GlobalVariable;
    throw Error(ErrorCode::Parse, "unknown element kind '" + name + "'");
}

const char* access_mode_name(AccessMode mode) {
    switch (mode) {
        case AccessMode::Read: return "read";
        case AccessMode::Write: return "write";
        case AccessMode::ReadWrite: return "read_write";
    }
    return "read";
}

AccessMode access_mode_from(const std::string& name) {
    if (name == "read") return AccessMode::Read;
    if (name == "write") return AccessMode::Write;
    if (name == "read_write") return AccessMode::ReadWrite;
    throw Error(ErrorCode::Parse, "unknown access mode '" + name + "'");
}

ElementKey key_of(const ContextElement& element) {
    return {element.kind, element.name, element.file_path};
}

json element_to_json(const ContextElement& element) {
    json j = {
        {"kind", element_kind_name(element.kind)}, {"name", element.name},
        {"source", element.source},               {"file_path", element.file_path},
        {"call_sites", element.call_sites},       {"is_extern", element.is_extern},
    };
    if (element.access_mode) j["access_mode"] = access_mode_name(*element.access_mode);
    return j;
}

ContextElement element_from_json(const json& j) {
    ContextElement e;
    e.kind = element_kind_from(j.at("kind").get<std::string>());
    e.name = j.at("name").get<std::string>();
    e.source = j.at("source").get<std::string>();
    e.file_path = j.at("file_path").get<std::string>();
    e.call_sites = j.at("call_sites").get<std::vector<int>>();
    e.is_extern = j.at("is_extern").get<bool>();
    if (j.contains("access_mode"))
        e.access_mode = access_mode_from(j["access_mode"].get<std::string>());
    return e;
}

namespace {

bool matches_globs(const std::vector<std::string>& globs, const std::string& rel,
                   const std::string& filename) {
    for (const auto& g : globs) {
        if (glob_match(g, rel) || glob_match(g, filename)) return true;
    }
    return false;
}

// #define names, scanned from the original text (directives are blanked in
// the shadow). Calls to these names are macro expansions, not call edges.
void collect_macro_names(std::string_view text, std::set<std::string>* out) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        std::size_t i = 0;
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i < line.size() && line[i] == '#') {
            ++i;
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            if (line.compare(i, 6, "define") == 0) {
                i += 6;
                while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
                std::size_t b = i;
                while (i < line.size() &&
                       (std::isalnum(static_cast<unsigned char>(line[i])) ||
                        line[i] == '_'))
                    ++i;
                if (i > b) out->insert(std::string(line.substr(b, i - b)));
            }
        }
        pos = eol + 1;
    }
}

struct PendingCall {
    int fn = 0;
    std::string name;
    int line = 0;
    std::string call_text;
};

struct PendingUse {
    int fn = 0;
    std::string name;
    csource::UseMode mode = csource::UseMode::Read;
    int line = 0;
};

}  // namespace

void CodeGraph::finalize() {
    fn_by_name_.clear();
    global_by_name_.clear();
    edges_by_caller_.clear();
    edges_by_callee_.clear();
    accesses_by_function_.clear();
    for (int i = 0; i < static_cast<int>(functions_.size()); ++i)
        fn_by_name_[functions_[i].name].push_back(i);
    for (int i = 0; i < static_cast<int>(globals_.size()); ++i)
        global_by_name_[globals_[i].name].push_back(i);
    for (int i = 0; i < static_cast<int>(call_edges_.size()); ++i) {
        edges_by_caller_[call_edges_[i].caller].push_back(i);
        edges_by_callee_[call_edges_[i].callee].push_back(i);
    }
    for (int i = 0; i < static_cast<int>(access_edges_.size()); ++i)
        accesses_by_function_[access_edges_[i].function].push_back(i);
}

std::vector<int> CodeGraph::resolve_callee(int caller, const std::string& name) const {
    auto it = fn_by_name_.find(name);
    if (it == fn_by_name_.end()) return {};
    const std::string& caller_file = functions_[caller].file_path;
    std::vector<int> same_file_static, same_file, elsewhere;
    for (int idx : it->second) {
        const auto& fn = functions_[idx];
        if (fn.file_path == caller_file) {
            (fn.is_static ? same_file_static : same_file).push_back(idx);
        } else if (!fn.is_static) {
            elsewhere.push_back(idx);
        }
    }
    if (!same_file_static.empty()) return same_file_static;
    if (!same_file.empty()) return same_file;
    return elsewhere;
}

int CodeGraph::find_entry(const repo_store::FunctionRef& target) const {
    auto it = fn_by_name_.find(target.name);
    if (it == fn_by_name_.end()) return -1;
    const auto& candidates = it->second;

    for (int idx : candidates) {
        if (functions_[idx].file_path == target.file_path &&
            functions_[idx].start_line == target.start_line)
            return idx;
    }
    std::vector<int> same_file;
    for (int idx : candidates) {
        if (functions_[idx].file_path == target.file_path) same_file.push_back(idx);
    }
    const std::vector<int>& pool = same_file.empty() ? candidates : same_file;
    if (pool.size() == 1) return pool[0];
    int best = pool[0];
    double best_sim = -1.0;
    for (int idx : pool) {
        double sim = text_similarity(functions_[idx].source, target.source);
        if (sim > best_sim) {
            best_sim = sim;
            best = idx;
        }
    }
    return best;
}

std::vector<ContextElement> CodeGraph::callers_of(
    const repo_store::FunctionRef& target) const {
    int t = find_entry(target);
    if (t < 0) return {};
    const std::string& name = functions_[t].name;

    std::map<int, std::set<int>> lines_by_caller;
    auto it = edges_by_callee_.find(name);
    if (it != edges_by_callee_.end()) {
        for (int ei : it->second) {
            const CallEdge& e = call_edges_[ei];
            auto resolved = resolve_callee(e.caller, name);
            if (std::find(resolved.begin(), resolved.end(), t) != resolved.end())
                lines_by_caller[e.caller].insert(e.line);
        }
    }

    // Duplicate definitions (conditional compilation) merge into one element
    // per (name, file); the earliest definition supplies the source.
    std::map<ElementKey, ContextElement> out;
    std::map<ElementKey, int> chosen_line;
    for (const auto& [caller, lines] : lines_by_caller) {
        const FunctionInfo& fn = functions_[caller];
        ElementKey key{ElementKind::Caller, fn.name, fn.file_path};
        auto found = out.find(key);
        if (found == out.end()) {
            ContextElement el;
            el.kind = ElementKind::Caller;
            el.name = fn.name;
            el.source = fn.source;
            el.file_path = fn.file_path;
            el.call_sites.assign(lines.begin(), lines.end());
            out.emplace(key, std::move(el));
            chosen_line[key] = fn.start_line;
        } else {
            auto& el = found->second;
            std::set<int> merged(el.call_sites.begin(), el.call_sites.end());
            merged.insert(lines.begin(), lines.end());
            el.call_sites.assign(merged.begin(), merged.end());
            if (fn.start_line < chosen_line[key]) {
                el.source = fn.source;
                chosen_line[key] = fn.start_line;
            }
        }
    }

    std::vector<ContextElement> result;
    result.reserve(out.size());
    for (auto& [key, el] : out) result.push_back(std::move(el));
    return result;
}

std::vector<ContextElement> CodeGraph::callees_of(
    const repo_store::FunctionRef& target) const {
    int t = find_entry(target);
    if (t < 0) return {};

    std::map<std::string, std::vector<int>> edges_by_name;
    auto it = edges_by_caller_.find(t);
    if (it != edges_by_caller_.end()) {
        for (int ei : it->second) edges_by_name[call_edges_[ei].callee].push_back(ei);
    }

    std::map<ElementKey, ContextElement> out;
    for (const auto& [name, edge_ids] : edges_by_name) {
        std::set<int> lines;
        int earliest_edge = edge_ids[0];
        for (int ei : edge_ids) {
            lines.insert(call_edges_[ei].line);
            if (call_edges_[ei].line < call_edges_[earliest_edge].line)
                earliest_edge = ei;
        }
        auto resolved = resolve_callee(t, name);
        if (resolved.empty()) {
            ContextElement el;
            el.kind = ElementKind::Callee;
            el.name = name;
            el.source = call_edges_[earliest_edge].call_text;
            el.file_path = "";
            el.call_sites.assign(lines.begin(), lines.end());
            el.is_extern = true;
            out.emplace(key_of(el), std::move(el));
            continue;
        }
        // One element per defining file; earliest definition wins the source.
        std::map<std::string, int> def_by_file;
        for (int idx : resolved) {
            const auto& fn = functions_[idx];
            auto found = def_by_file.find(fn.file_path);
            if (found == def_by_file.end() ||
                fn.start_line < functions_[found->second].start_line)
                def_by_file[fn.file_path] = idx;
        }
        for (const auto& [file, idx] : def_by_file) {
            const auto& fn = functions_[idx];
            ContextElement el;
            el.kind = ElementKind::Callee;
            el.name = fn.name;
            el.source = fn.source;
            el.file_path = fn.file_path;
            el.call_sites.assign(lines.begin(), lines.end());
            out.emplace(key_of(el), std::move(el));
        }
    }

    std::vector<ContextElement> result;
    result.reserve(out.size());
    for (auto& [key, el] : out) result.push_back(std::move(el));
    return result;
}

std::vector<ContextElement> CodeGraph::globals_of(
    const repo_store::FunctionRef& target) const {
    int t = find_entry(target);
    if (t < 0) return {};
    const std::string& fn_file = functions_[t].file_path;

    std::map<ElementKey, ContextElement> out;
    auto it = accesses_by_function_.find(t);
    if (it != accesses_by_function_.end()) {
        for (int ai : it->second) {
            const AccessEdge& edge = access_edges_[ai];
            auto git = global_by_name_.find(edge.global);
            if (git == global_by_name_.end()) continue;

            // Same-file declaration first; otherwise the defining (non-extern)
            // declaration from another file, falling back to an extern one.
            const GlobalInfo* decl = nullptr;
            for (int gi : git->second) {
                const GlobalInfo& g = globals_[gi];
                if (g.file_path != fn_file) continue;
                if (!decl || g.line < decl->line) decl = &g;
            }
            if (!decl) {
                for (int pass = 0; pass < 2 && !decl; ++pass) {
                    for (int gi : git->second) {
                        const GlobalInfo& g = globals_[gi];
                        if (g.is_static) continue;  // invisible outside its file
                        if (pass == 0 && g.is_extern) continue;
                        if (!decl || std::tie(g.file_path, g.line) <
                                         std::tie(decl->file_path, decl->line))
                            decl = &g;
                    }
                }
            }
            if (!decl) continue;

            ContextElement el;
            el.kind = ElementKind::GlobalVariable;
            el.name = edge.global;
            el.source = decl->declaration;
            el.file_path = decl->file_path;
            el.access_mode = edge.mode;
            out.emplace(key_of(el), std::move(el));
        }
    }

    std::vector<ContextElement> result;
    result.reserve(out.size());
    for (auto& [key, el] : out) result.push_back(std::move(el));
    return result;
}

std::vector<ContextElement> CodeGraph::context_of(
    const repo_store::FunctionRef& target) const {
    std::vector<ContextElement> all = callers_of(target);
    for (auto& el : callees_of(target)) all.push_back(std::move(el));
    for (auto& el : globals_of(target)) all.push_back(std::move(el));
    return all;
}

void CodeGraph::save(const fs::path& path) const {
    std::vector<json> lines;
    lines.push_back(json{{"type", "meta"},
                         {"schema_version", 1},
                         {"url", repo_url_},
                         {"revision", repo_revision_},
                         {"files", file_count_}});
    for (const auto& fn : functions_) {
        lines.push_back(json{{"type", "function"},
                             {"name", fn.name},
                             {"file_path", fn.file_path},
                             {"signature", fn.signature},
                             {"source", fn.source},
                             {"start_line", fn.start_line},
                             {"end_line", fn.end_line},
                             {"is_static", fn.is_static}});
    }
    for (const auto& g : globals_) {
        lines.push_back(json{{"type", "global"},
                             {"name", g.name},
                             {"declaration", g.declaration},
                             {"file_path", g.file_path},
                             {"line", g.line},
                             {"is_static", g.is_static},
                             {"is_extern", g.is_extern}});
    }
    for (const auto& e : call_edges_) {
        lines.push_back(json{{"type", "call_edge"},
                             {"caller", e.caller},
                             {"callee", e.callee},
                             {"line", e.line},
                             {"call_text", e.call_text}});
    }
    for (const auto& a : access_edges_) {
        lines.push_back(json{{"type", "access_edge"},
                             {"function", a.function},
                             {"global", a.global},
                             {"mode", access_mode_name(a.mode)},
                             {"lines", a.lines}});
    }
    for (const auto& d : diagnostics_) {
        lines.push_back(json{{"type", "diagnostic"},
                             {"file_path", d.file_path},
                             {"line", d.line},
                             {"message", d.message}});
    }
    write_jsonl(path, lines);
}

CodeGraph CodeGraph::load(const fs::path& path) {
    CodeGraph g;
    for (const auto& j : read_jsonl(path)) {
        const std::string type = j.at("type").get<std::string>();
        if (type == "meta") {
            g.repo_url_ = j.value("url", "");
            g.repo_revision_ = j.value("revision", "");
            g.file_count_ = j.value("files", 0);
        } else if (type == "function") {
            FunctionInfo fn;
            fn.name = j.at("name").get<std::string>();
            fn.file_path = j.at("file_path").get<std::string>();
            fn.signature = j.at("signature").get<std::string>();
            fn.source = j.at("source").get<std::string>();
            fn.start_line = j.at("start_line").get<int>();
            fn.end_line = j.at("end_line").get<int>();
            fn.is_static = j.at("is_static").get<bool>();
            g.functions_.push_back(std::move(fn));
        } else if (type == "global") {
            GlobalInfo gi;
            gi.name = j.at("name").get<std::string>();
            gi.declaration = j.at("declaration").get<std::string>();
            gi.file_path = j.at("file_path").get<std::string>();
            gi.line = j.at("line").get<int>();
            gi.is_static = j.at("is_static").get<bool>();
            gi.is_extern = j.at("is_extern").get<bool>();
            g.globals_.push_back(std::move(gi));
        } else if (type == "call_edge") {
            CallEdge e;
            e.caller = j.at("caller").get<int>();
            e.callee = j.at("callee").get<std::string>();
            e.line = j.at("line").get<int>();
            e.call_text = j.at("call_text").get<std::string>();
            g.call_edges_.push_back(std::move(e));
        } else if (type == "access_edge") {
            AccessEdge a;
            a.function = j.at("function").get<int>();
            a.global = j.at("global").get<std::string>();
            a.mode = access_mode_from(j.at("mode").get<std::string>());
            a.lines = j.at("lines").get<std::vector<int>>();
            g.access_edges_.push_back(std::move(a));
        } else if (type == "diagnostic") {
            g.diagnostics_.push_back({j.at("file_path").get<std::string>(),
                                      j.at("line").get<int>(),
                                      j.at("message").get<std::string>()});
        } else {
            throw Error(ErrorCode::Parse, "unknown graph record type '" + type + "'");
        }
    }
    g.finalize();
    return g;
}

CodeGraph build_graph(const repo_store::RepoHandle& repo, const BuildOptions& options) {
    CodeGraph g;
    g.repo_url_ = repo.spec().url;
    g.repo_revision_ = repo.spec().revision;

    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(repo.root())) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), repo.root()).generic_string();
        std::string filename = entry.path().filename().string();
        if (!filename.empty() && filename[0] == '.') continue;
        if (matches_globs(options.include_globs, rel, filename)) files.push_back(rel);
    }
    std::sort(files.begin(), files.end());

    std::vector<PendingCall> pending_calls;
    std::vector<PendingUse> pending_uses;
    std::set<std::string> macro_names;

    int parsed = 0;
    for (const auto& rel : files) {
        std::string text;
        try {
            text = repo.read(rel);
        } catch (const Error& e) {
            g.diagnostics_.push_back({rel, 0, e.what()});
            continue;
        }
        auto scan = csource::scan_file(text);
        if (!scan.ok) {
            g.diagnostics_.push_back({rel, 0, "skipped: " + scan.error});
            continue;
        }
        ++parsed;
        collect_macro_names(text, &macro_names);

        std::string shadow = csource::shadow_text(text);
        for (const auto& sg : scan.globals) {
            g.globals_.push_back(
                {sg.name, sg.declaration, rel, sg.line, sg.is_static, sg.is_extern});
        }
        for (const auto& fn : scan.functions) {
            int fn_idx = static_cast<int>(g.functions_.size());
            g.functions_.push_back({fn.name, rel, fn.signature,
                                    text.substr(fn.begin, fn.end - fn.begin),
                                    fn.start_line, fn.end_line, fn.is_static});

            auto locals = csource::local_names(fn, shadow);
            auto calls = csource::find_calls(shadow, fn.body_begin, fn.body_end);
            for (const auto& sk : calls.skipped) {
                g.diagnostics_.push_back(
                    {rel, sk.line, sk.reason + " '" + sk.name + "' not resolved"});
            }
            std::set<std::tuple<std::string, int>> seen;
            for (const auto& c : calls.calls) {
                if (locals.count(c.name)) {
                    g.diagnostics_.push_back(
                        {rel, c.line,
                         "call through local function pointer '" + c.name + "'"});
                    continue;
                }
                if (!seen.insert({c.name, c.line}).second) continue;
                pending_calls.push_back(
                    {fn_idx, c.name, c.line,
                     std::string(text.substr(c.name_begin, c.args_end - c.name_begin))});
            }
            for (const auto& use : csource::find_ident_uses(shadow, fn.body_begin,
                                                            fn.body_end)) {
                if (locals.count(use.name)) continue;
                pending_uses.push_back({fn_idx, use.name, use.mode, use.line});
            }
        }
    }

    if (parsed == 0) {
        throw Error(ErrorCode::EmptyGraph,
                    "no parseable files under " + repo.root().string() +
                        " matched globs [" + join(options.include_globs, ", ") + "]");
    }
    g.file_count_ = parsed;
    g.finalize();  // name indices needed for edge resolution below

    for (auto& pc : pending_calls) {
        bool has_def = g.fn_by_name_.count(pc.name) != 0;
        if (!has_def && macro_names.count(pc.name)) {
            g.diagnostics_.push_back(
                {g.functions_[pc.fn].file_path, pc.line,
                 "call of macro '" + pc.name + "' not resolved"});
            continue;
        }
        if (!has_def && g.global_by_name_.count(pc.name)) {
            g.diagnostics_.push_back(
                {g.functions_[pc.fn].file_path, pc.line,
                 "call through global function pointer '" + pc.name + "'"});
            continue;
        }
        g.call_edges_.push_back(
            {pc.fn, std::move(pc.name), pc.line, std::move(pc.call_text)});
    }

    // Aggregate variable uses per (function, name); a read and a write both
    // present make the access read-write.
    std::map<std::pair<int, std::string>, std::tuple<bool, bool, std::set<int>>> agg;
    for (const auto& pu : pending_uses) {
        if (!g.global_by_name_.count(pu.name)) continue;
        // Visibility: a declaration in the same file, or a non-static one
        // elsewhere.
        const std::string& fn_file = g.functions_[pu.fn].file_path;
        bool visible = false;
        for (int gi : g.global_by_name_[pu.name]) {
            const GlobalInfo& info = g.globals_[gi];
            if (info.file_path == fn_file || !info.is_static) {
                visible = true;
                break;
            }
        }
        if (!visible) continue;
        auto& [r, w, lines] = agg[{pu.fn, pu.name}];
        if (pu.mode == csource::UseMode::Read) r = true;
        if (pu.mode == csource::UseMode::Write) w = true;
        if (pu.mode == csource::UseMode::ReadWrite) r = w = true;
        lines.insert(pu.line);
    }
    for (const auto& [key, val] : agg) {
        const auto& [r, w, lines] = val;
        AccessMode mode = r && w ? AccessMode::ReadWrite
                                 : (w ? AccessMode::Write : AccessMode::Read);
        g.access_edges_.push_back(
            {key.first, key.second, mode, {lines.begin(), lines.end()}});
    }

    g.finalize();
    return g;
}

}  // namespace ctxvul::context_graph
