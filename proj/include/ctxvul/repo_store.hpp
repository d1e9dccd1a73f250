#pragma once

/** @file
 * Acquires project sources at a pinned revision and hands out read-only
 * snapshot directories. Snapshots are content-addressed under
 * `<cache_root>/<sha256(url)>/<revision>/` so repeated acquisitions are
 * no-ops and concurrent processes can share one cache.
 */

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctxvul::repo_store {

struct RepoSpec {
    // Git URL, local directory, or local tarball (.tar, .tar.gz, .tgz).
    std::string url;
    // Full 40-hex commit hash, a git revision expression anchored on one
    // (e.g. "<hash>^1" for the parent of a fix commit), or an explicit tag.
    // Branch names are rejected by validate().
    std::string revision;

    bool operator==(const RepoSpec&) const = default;
};

/// Throws ErrorCode::Config when the spec cannot pin a reproducible snapshot.
void validate(const RepoSpec& spec);

/// Identity of one function definition inside an acquired snapshot.
struct FunctionRef {
    RepoSpec repo;
    std::string file_path;  // relative to the snapshot root
    std::string name;
    int start_line = 0;  // 1-based, inclusive
    int end_line = 0;
    std::string source;     // exact text slice of the definition
    std::string signature;  // declaration through the parameter ')'

    bool operator==(const FunctionRef&) const = default;
};

nlohmann::json function_ref_to_json(const FunctionRef& ref);
FunctionRef function_ref_from_json(const nlohmann::json& j);

class RepoHandle {
public:
    RepoHandle() = default;
    RepoHandle(RepoSpec spec, std::filesystem::path root)
        : spec_(std::move(spec)), root_(std::move(root)) {}

    const RepoSpec& spec() const { return spec_; }
    const std::filesystem::path& root() const { return root_; }

    /// Reads a file relative to the snapshot root. Throws ErrorCode::Io.
    std::string read(const std::string& rel_path) const;

private:
    RepoSpec spec_;
    std::filesystem::path root_;
};

struct StoreOptions {
    std::filesystem::path cache_root;  // empty: resolve from env / default
    bool offline = false;              // never touch the network
};

/// Cache root precedence: CTXVUL_CACHE env var, then the configured path,
/// then `~/.cache/ctxvul`.
std::filesystem::path resolve_cache_root(const std::filesystem::path& configured);

class RepoStore {
public:
    explicit RepoStore(StoreOptions options = {});

    const std::filesystem::path& cache_root() const { return cache_root_; }
    bool offline() const { return offline_; }

    /// Materializes the snapshot for `spec`, fetching or copying on first
    /// use. Idempotent; a completed snapshot is returned without touching
    /// the source. Concurrent acquisitions of the same snapshot are
    /// serialized through a lock file.
    ///
    /// Throws ErrorCode::Network when offline and not cached (remote URLs),
    /// ErrorCode::UnknownRevision when the revision does not exist, and
    /// ErrorCode::Io for filesystem trouble.
    RepoHandle acquire(const RepoSpec& spec);

    /// Cache directory a spec maps to (whether or not it exists yet).
    std::filesystem::path snapshot_dir(const RepoSpec& spec) const;

private:
    std::filesystem::path cache_root_;
    bool offline_ = false;
};

/// Locates a function definition in an acquired snapshot.
///
/// `hint_source` disambiguates when a file contains several definitions of
/// `name` (conditional compilation produces real duplicates): the candidate
/// most similar to the hint wins, earliest span breaking ties. Without a
/// hint, multiple candidates raise ErrorCode::Ambiguous listing all spans;
/// no candidate raises ErrorCode::NotFound naming the nearest identifier.
FunctionRef resolve_function(const RepoHandle& handle, const std::string& rel_path,
                             const std::string& name,
                             const std::optional<std::string>& hint_source = std::nullopt);

}  // namespace ctxvul::repo_store
