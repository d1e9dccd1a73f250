#include "ctxvul/repo_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "ctxvul/csource.hpp"
#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace fs = std::filesystem;

namespace ctxvul::repo_store {

namespace {

// Mutable refs that would silently move the snapshot. Rejected by name; the
// store cannot probe the remote to tell a tag from a branch.
const char* kMutableRefs[] = {"HEAD", "main", "master", "develop", "dev", "trunk"};

std::string shell_quote(const std::string& arg) {
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += "'";
    return out;
}

struct CommandResult {
    int status = -1;
    std::string output;
};

CommandResult run_command(const std::vector<std::string>& args) {
    std::string cmd;
    for (const auto& a : args) {
        if (!cmd.empty()) cmd += ' ';
        cmd += shell_quote(a);
    }
    cmd += " 2>&1";
    CommandResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw Error(ErrorCode::Io, "failed to spawn: " + args.front());
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) res.output.append(buf, got);
    int rc = pclose(pipe);
    res.status = rc;
    return res;
}

bool looks_like_tarball(const fs::path& p) {
    std::string name = p.filename().string();
    auto ends_with = [&](std::string_view suf) {
        return name.size() >= suf.size() &&
               name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
    };
    return ends_with(".tar") || ends_with(".tar.gz") || ends_with(".tgz") ||
           ends_with(".tar.bz2") || ends_with(".tar.xz");
}

void move_children_up(const fs::path& from, const fs::path& to) {
    for (const auto& entry : fs::directory_iterator(from)) {
        fs::rename(entry.path(), to / entry.path().filename());
    }
}

void materialize_git(const std::string& url, const std::string& revision,
                     const fs::path& dir, bool remote) {
    auto clone = run_command({"git", "clone", "--quiet", url, dir.string()});
    if (clone.status != 0) {
        std::string msg = "git clone of " + url + " failed: " + trim(clone.output);
        if (remote) throw Error(ErrorCode::Network, msg);
        throw Error(ErrorCode::Io, msg);
    }
    auto checkout = run_command(
        {"git", "-C", dir.string(), "checkout", "--quiet", "--detach", revision});
    if (checkout.status != 0) {
        throw Error(ErrorCode::UnknownRevision,
                    "revision '" + revision + "' not found in " + url + ": " +
                        trim(checkout.output));
    }
    // The snapshot is a plain tree; history is not needed once pinned.
    fs::remove_all(dir / ".git");
}

void materialize_tarball(const fs::path& tarball, const fs::path& dir) {
    fs::path unpack = dir / ".unpack";
    fs::create_directories(unpack);
    auto res = run_command({"tar", "-xf", tarball.string(), "-C", unpack.string()});
    if (res.status != 0) {
        throw Error(ErrorCode::Io,
                    "failed to extract " + tarball.string() + ": " + trim(res.output));
    }
    // Archives usually wrap everything in one top-level directory; flatten it
    // so file paths in dataset records resolve against the snapshot root.
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(unpack)) entries.push_back(e.path());
    if (entries.size() == 1 && fs::is_directory(entries[0])) {
        move_children_up(entries[0], dir);
    } else {
        move_children_up(unpack, dir);
    }
    fs::remove_all(unpack);
}

void materialize_directory(const fs::path& src, const fs::path& dir) {
    fs::copy(src, dir,
             fs::copy_options::recursive | fs::copy_options::copy_symlinks);
    fs::remove_all(dir / ".git");
}

class ScopedFileLock {
public:
    explicit ScopedFileLock(const fs::path& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw Error(ErrorCode::Io, "cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error(ErrorCode::Io, "cannot lock " + path.string());
        }
    }
    ~ScopedFileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    ScopedFileLock(const ScopedFileLock&) = delete;
    ScopedFileLock& operator=(const ScopedFileLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace

void validate(const RepoSpec& spec) {
    if (spec.url.empty()) throw Error(ErrorCode::Config, "repo url is empty");
    if (spec.revision.empty())
        throw Error(ErrorCode::Config, "repo revision is empty (pin a commit or tag)");
    for (char c : spec.revision) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
            throw Error(ErrorCode::Config, "repo revision contains whitespace");
    }
    if (spec.revision.find("..") != std::string::npos || spec.revision[0] == '/')
        throw Error(ErrorCode::Config,
                    "repo revision '" + spec.revision + "' is not a valid cache key");
    for (const char* ref : kMutableRefs) {
        if (spec.revision == ref)
            throw Error(ErrorCode::Config, "revision '" + spec.revision +
                                               "' is a mutable ref; pin a commit hash "
                                               "or tag");
    }
}

nlohmann::json function_ref_to_json(const FunctionRef& ref) {
    return {
        {"repo_url", ref.repo.url},       {"repo_revision", ref.repo.revision},
        {"file_path", ref.file_path},     {"name", ref.name},
        {"start_line", ref.start_line},   {"end_line", ref.end_line},
        {"source", ref.source},           {"signature", ref.signature},
    };
}

FunctionRef function_ref_from_json(const nlohmann::json& j) {
    FunctionRef ref;
    ref.repo.url = j.at("repo_url").get<std::string>();
    ref.repo.revision = j.at("repo_revision").get<std::string>();
    ref.file_path = j.at("file_path").get<std::string>();
    ref.name = j.at("name").get<std::string>();
    ref.start_line = j.at("start_line").get<int>();
    ref.end_line = j.at("end_line").get<int>();
    ref.source = j.at("source").get<std::string>();
    ref.signature = j.at("signature").get<std::string>();
    return ref;
}

std::filesystem::path resolve_cache_root(const std::filesystem::path& configured) {
    if (const char* env = std::getenv("CTXVUL_CACHE"); env && *env) return env;
    if (!configured.empty()) return configured;
    if (const char* home = std::getenv("HOME"); home && *home)
        return fs::path(home) / ".cache" / "ctxvul";
    return fs::temp_directory_path() / "ctxvul-cache";
}

std::string RepoHandle::read(const std::string& rel_path) const {
    return read_file(root_ / rel_path);
}

RepoStore::RepoStore(StoreOptions options)
    : cache_root_(resolve_cache_root(options.cache_root)), offline_(options.offline) {}

fs::path RepoStore::snapshot_dir(const RepoSpec& spec) const {
    return cache_root_ / sha256_hex(spec.url) / spec.revision;
}

RepoHandle RepoStore::acquire(const RepoSpec& spec) {
    validate(spec);
    fs::path dir = snapshot_dir(spec);
    fs::path marker = dir / ".ctxvul-complete";
    if (fs::exists(marker)) return RepoHandle(spec, dir);

    fs::create_directories(cache_root_);
    ScopedFileLock lock(cache_root_ / (sha256_hex(spec.url) + ".lock"));
    if (fs::exists(marker)) return RepoHandle(spec, dir);

    // A directory without the marker is a dead partial fetch; redo it.
    if (fs::exists(dir)) fs::remove_all(dir);

    fs::path src(spec.url);
    bool local = fs::exists(src);
    if (!local && offline_) {
        throw Error(ErrorCode::Network,
                    "offline mode: " + spec.url + " is not in the cache");
    }

    fs::create_directories(dir);
    try {
        if (local && fs::is_directory(src)) {
            if (fs::exists(src / ".git")) {
                materialize_git(spec.url, spec.revision, dir, false);
            } else {
                // A plain directory has no history; the revision is recorded
                // as a label for the copied state.
                materialize_directory(src, dir);
            }
        } else if (local && looks_like_tarball(src)) {
            materialize_tarball(src, dir);
        } else if (local) {
            throw Error(ErrorCode::Config,
                        spec.url + " is neither a directory nor a tarball");
        } else {
            materialize_git(spec.url, spec.revision, dir, true);
        }
    } catch (...) {
        std::error_code ec;
        fs::remove_all(dir, ec);
        throw;
    }

    write_file_atomic(marker, spec.url + "\n" + spec.revision + "\n");
    return RepoHandle(spec, dir);
}

FunctionRef resolve_function(const RepoHandle& handle, const std::string& rel_path,
                             const std::string& name,
                             const std::optional<std::string>& hint_source) {
    fs::path full = handle.root() / rel_path;
    if (!fs::exists(full)) {
        throw Error(ErrorCode::NotFound,
                    "file '" + rel_path + "' not present in snapshot of " +
                        handle.spec().url);
    }
    std::string text = read_file(full);
    auto scan = csource::scan_file(text);
    if (!scan.ok) {
        throw Error(ErrorCode::Parse, rel_path + ": " + scan.error);
    }

    std::vector<const csource::ScannedFunction*> candidates;
    for (const auto& fn : scan.functions) {
        if (fn.name == name) candidates.push_back(&fn);
    }

    if (candidates.empty()) {
        std::string nearest;
        std::size_t best = std::string::npos;
        for (const auto& fn : scan.functions) {
            std::size_t d = levenshtein(fn.name, name);
            if (d < best || (d == best && fn.name < nearest)) {
                best = d;
                nearest = fn.name;
            }
        }
        std::string msg = "function '" + name + "' not found in " + rel_path;
        if (!nearest.empty()) msg += "; nearest is '" + nearest + "'";
        throw Error(ErrorCode::NotFound, msg);
    }

    const csource::ScannedFunction* chosen = nullptr;
    if (candidates.size() == 1) {
        chosen = candidates[0];
    } else if (hint_source) {
        double best = -1.0;
        for (const auto* fn : candidates) {
            std::string body = text.substr(fn->begin, fn->end - fn->begin);
            double sim = text_similarity(body, *hint_source);
            // Strictly-better keeps the earliest span on ties.
            if (sim > best) {
                best = sim;
                chosen = fn;
            }
        }
    } else {
        std::string spans;
        for (const auto* fn : candidates) {
            if (!spans.empty()) spans += ", ";
            spans += "lines " + std::to_string(fn->start_line) + "-" +
                     std::to_string(fn->end_line);
        }
        throw Error(ErrorCode::Ambiguous, "function '" + name + "' has " +
                                              std::to_string(candidates.size()) +
                                              " definitions in " + rel_path + " (" +
                                              spans + "); pass a source hint");
    }

    FunctionRef ref;
    ref.repo = handle.spec();
    ref.file_path = rel_path;
    ref.name = name;
    ref.start_line = chosen->start_line;
    ref.end_line = chosen->end_line;
    ref.source = text.substr(chosen->begin, chosen->end - chosen->begin);
    ref.signature = chosen->signature;
    return ref;
}

}  // namespace ctxvul::repo_store
