#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ctxvul/errors.hpp"
#include "ctxvul/repo_store.hpp"
#include "ctxvul/util.hpp"
#include "support/fixture_repo.hpp"

using namespace ctxvul;
using namespace ctxvul::repo_store;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& prefix) : path(testsupport::make_temp_dir(prefix)) {}
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected an Error");
}

}  // namespace

TEST_CASE("validate rejects mutable refs and junk") {
    CHECK_NOTHROW(validate({"https://example.com/x.git",
                            "0123456789abcdef0123456789abcdef01234567"}));
    CHECK_NOTHROW(validate({"/some/dir",
                            "0123456789abcdef0123456789abcdef01234567^1"}));
    CHECK_NOTHROW(validate({"/some/dir", "v1.2.3"}));

    auto bad = [](const std::string& url, const std::string& rev) {
        CHECK(code_of([&] { validate({url, rev}); }) == ErrorCode::Config);
    };
    bad("https://example.com/x.git", "HEAD");
    bad("https://example.com/x.git", "main");
    bad("https://example.com/x.git", "master");
    bad("https://example.com/x.git", "");
    bad("", "0123456789abcdef0123456789abcdef01234567");
    bad("/some/dir", "rev with space");
    bad("/some/dir", "../escape");
    bad("/some/dir", "/abs");
}

TEST_CASE("cache root precedence") {
    const char* saved = std::getenv("CTXVUL_CACHE");
    std::string saved_val = saved ? saved : "";

    setenv("CTXVUL_CACHE", "/tmp/ctxvul-env-cache", 1);
    CHECK(resolve_cache_root("/tmp/configured") == fs::path("/tmp/ctxvul-env-cache"));

    unsetenv("CTXVUL_CACHE");
    CHECK(resolve_cache_root("/tmp/configured") == fs::path("/tmp/configured"));
    CHECK_FALSE(resolve_cache_root("").empty());

    if (saved) setenv("CTXVUL_CACHE", saved_val.c_str(), 1);
}

TEST_CASE("acquire from a plain directory copies a snapshot") {
    TempDir tmp("ctxvul-rs-dir");
    fs::path src = tmp.path / "src";
    fs::create_directories(src / "sub");
    write_file_atomic(src / "a.c", "int a;\n");
    write_file_atomic(src / "sub" / "b.c", "int b;\n");

    RepoStore store({tmp.path / "cache", false});
    RepoSpec spec{src.string(), "v1"};
    RepoHandle h = store.acquire(spec);
    CHECK(h.read("a.c") == "int a;\n");
    CHECK(h.read("sub/b.c") == "int b;\n");
    CHECK(h.root() == store.snapshot_dir(spec));

    // Mutating the origin must not affect the snapshot.
    write_file_atomic(src / "a.c", "int changed;\n");
    RepoHandle h2 = store.acquire(spec);
    CHECK(h2.read("a.c") == "int a;\n");
}

TEST_CASE("acquire from a tarball") {
    TempDir tmp("ctxvul-rs-tar");
    fs::path src = tmp.path / "pkg-1.0";
    fs::create_directories(src);
    write_file_atomic(src / "main.c", "int main(void) { return 0; }\n");
    std::string cmd = "tar -czf " + (tmp.path / "pkg.tar.gz").string() + " -C " +
                      tmp.path.string() + " pkg-1.0";
    REQUIRE(std::system(cmd.c_str()) == 0);

    RepoStore store({tmp.path / "cache", false});
    RepoHandle h = store.acquire({(tmp.path / "pkg.tar.gz").string(), "1.0"});
    // The single top-level directory is flattened away.
    CHECK(h.read("main.c") == "int main(void) { return 0; }\n");
}

TEST_CASE("acquire git revisions, cache hits, unknown revision") {
    testsupport::FixtureRepo fx = testsupport::make_fixture_repo();
    RepoStore store({fx.cache_dir, false});

    RepoHandle vuln = store.acquire({fx.repo_dir.string(), fx.vuln_rev});
    RepoHandle fixed = store.acquire({fx.repo_dir.string(), fx.fix_rev});
    std::string before = vuln.read("src/buffer.c");
    std::string after = fixed.read("src/buffer.c");
    CHECK(before != after);
    CHECK(after.find("buf_reserve(b, len)") != std::string::npos);

    // Snapshots are plain trees, not repositories.
    CHECK_FALSE(fs::exists(vuln.root() / ".git"));

    // The parent expression resolves to the vulnerable commit's tree.
    RepoHandle parent = store.acquire({fx.repo_dir.string(), fx.fix_rev + "^1"});
    CHECK(parent.read("src/buffer.c") == before);

    // Second acquisition is served from cache even in offline mode.
    RepoStore offline({fx.cache_dir, true});
    RepoHandle again = offline.acquire({fx.repo_dir.string(), fx.vuln_rev});
    CHECK(again.read("src/buffer.c") == before);

    CHECK(code_of([&] {
              store.acquire({fx.repo_dir.string(),
                             "ffffffffffffffffffffffffffffffffffffffff"});
          }) == ErrorCode::UnknownRevision);

    fs::remove_all(fx.work_dir);
}

TEST_CASE("offline acquire of an uncached remote fails with Network") {
    TempDir tmp("ctxvul-rs-offline");
    RepoStore store({tmp.path / "cache", true});
    CHECK(code_of([&] {
              store.acquire({"https://invalid.example/repo.git",
                             "0123456789abcdef0123456789abcdef01234567"});
          }) == ErrorCode::Network);
}

TEST_CASE("snapshot_dir is stable and content-addressed") {
    TempDir tmp("ctxvul-rs-addr");
    RepoStore store({tmp.path / "cache", false});
    RepoSpec a{"https://example.com/a.git", "0123456789abcdef0123456789abcdef01234567"};
    RepoSpec b{"https://example.com/b.git", "0123456789abcdef0123456789abcdef01234567"};
    CHECK(store.snapshot_dir(a) == store.snapshot_dir(a));
    CHECK(store.snapshot_dir(a) != store.snapshot_dir(b));
    CHECK(store.snapshot_dir(a).parent_path().filename().string() ==
          sha256_hex(a.url));
}

TEST_CASE("resolve_function finds a unique definition") {
    TempDir tmp("ctxvul-rs-resolve");
    fs::path src = tmp.path / "src";
    fs::create_directories(src);
    testsupport::copy_corpus_to(src);

    RepoStore store({tmp.path / "cache", false});
    RepoHandle h = store.acquire({src.string(), "fixture"});

    FunctionRef ref = resolve_function(h, "src/buffer.c", "buf_append");
    CHECK(ref.name == "buf_append");
    CHECK(ref.file_path == "src/buffer.c");
    CHECK(ref.start_line > 1);
    CHECK(ref.end_line > ref.start_line);
    CHECK(ref.source.find("memcpy") != std::string::npos);
    CHECK(ref.signature.find("buf_append") != std::string::npos);
}

TEST_CASE("resolve_function misses report the nearest name") {
    TempDir tmp("ctxvul-rs-miss");
    fs::path src = tmp.path / "src";
    fs::create_directories(src);
    testsupport::copy_corpus_to(src);

    RepoStore store({tmp.path / "cache", false});
    RepoHandle h = store.acquire({src.string(), "fixture"});

    try {
        resolve_function(h, "src/buffer.c", "buf_apend");
        FAIL("expected NotFound");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFound);
        CHECK(std::string(e.what()).find("buf_append") != std::string::npos);
    }

    CHECK(code_of([&] { resolve_function(h, "src/missing.c", "x"); }) ==
          ErrorCode::NotFound);
}

TEST_CASE("resolve_function duplicate handling") {
    TempDir tmp("ctxvul-rs-dup");
    fs::path src = tmp.path / "src";
    fs::create_directories(src);
    testsupport::copy_corpus_to(src);

    RepoStore store({tmp.path / "cache", false});
    RepoHandle h = store.acquire({src.string(), "fixture"});

    // util.c defines util_byteswap twice under conditional compilation.
    CHECK(code_of([&] { resolve_function(h, "src/util.c", "util_byteswap"); }) ==
          ErrorCode::Ambiguous);

    std::string text = h.read("src/util.c");
    // The second definition shifts by one byte per value; pick it via hint.
    std::size_t second = text.rfind("uint16_t util_byteswap");
    REQUIRE(second != std::string::npos);
    std::string hint = text.substr(second, 120);
    FunctionRef ref = resolve_function(h, "src/util.c", "util_byteswap", hint);
    CHECK(ref.source.find(hint.substr(0, 40)) != std::string::npos);
}
