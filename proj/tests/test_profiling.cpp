#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "ctxvul/errors.hpp"
#include "ctxvul/profiling.hpp"
#include "ctxvul/util.hpp"
#include "support/fixture_repo.hpp"

using namespace ctxvul;
using namespace ctxvul::profiling;
using context_graph::AccessMode;
using llm::Client;
using llm::MockProvider;

namespace {

std::filesystem::path prompts_dir() {
    return testsupport::test_data_dir().parent_path() / "prompts";
}

ContextElement make_element(ElementKind kind, std::string name, std::string file,
                            std::string source, std::vector<int> sites = {5}) {
    ContextElement e;
    e.kind = kind;
    e.name = std::move(name);
    e.file_path = std::move(file);
    e.source = std::move(source);
    if (kind == ElementKind::GlobalVariable) {
        e.access_mode = AccessMode::Read;
    } else {
        e.call_sites = std::move(sites);
    }
    return e;
}

FunctionRef make_target() {
    FunctionRef f;
    f.file_path = "src/buffer.c";
    f.name = "buf_append";
    f.start_line = 10;
    f.end_line = 14;
    f.source = "int buf_append(buf_t* b, const char* data, size_t len)\n"
               "{\n"
               "    memcpy(b->data + b->len, data, len);\n"
               "    b->len += len;\n"
               "    return 0;\n"
               "}\n";
    f.signature = "int buf_append(buf_t* b, const char* data, size_t len)";
    return f;
}

struct Harness {
    std::shared_ptr<MockProvider> mock = std::make_shared<MockProvider>();
    Client client{mock};
    TemplateSet templates = load_templates(prompts_dir());
    FunctionRef target = make_target();
};

}  // namespace

TEST_CASE("templates load from the prompts directory") {
    TemplateSet t = load_templates(prompts_dir());
    for (const std::string* s :
         {&t.profile_caller, &t.profile_callee, &t.profile_global, &t.rank,
          &t.reasoning_vulnerable, &t.reasoning_benign, &t.detect, &t.detect_binary})
        CHECK_FALSE(s->empty());
    CHECK(t.profile_caller.find("{{target_source}}") != std::string::npos);
    CHECK(t.rank.find("{{profiles_json}}") != std::string::npos);
    CHECK(t.reasoning_vulnerable.find("{{") == std::string::npos);
    CHECK(t.reasoning_benign.find("{{") == std::string::npos);
    CHECK_THROWS_AS(load_templates(prompts_dir() / "missing"), Error);
}

TEST_CASE("reasoning templates byte-match their golden transcriptions") {
    auto goldens = testsupport::test_data_dir() / "goldens";
    TemplateSet t = load_templates(prompts_dir());
    CHECK(t.reasoning_vulnerable == read_file(goldens / "reasoning_vulnerable.golden"));
    CHECK(t.reasoning_benign == read_file(goldens / "reasoning_benign.golden"));
    CHECK(t.reasoning_vulnerable.find("Respond with only the JSON below.") != std::string::npos);
    CHECK(t.reasoning_vulnerable.find("\"confidence_score\": 0-10") != std::string::npos);
    CHECK(t.reasoning_benign.find("counter-factual analysis") != std::string::npos);
}

TEST_CASE("template rendering is strict about placeholders") {
    CHECK(render_template("a {{x}} b", {{"x", "1"}}) == "a 1 b");
    CHECK(render_template("{{x}}{{x}}", {{"x", "ab"}}) == "abab");
    CHECK(render_template("no vars", {}) == "no vars");
    CHECK(render_template("json { } braces", {}) == "json { } braces");
    CHECK_THROWS_AS(render_template("{{missing}}", {}), Error);
    CHECK_THROWS_AS(render_template("{{unterminated", {}), Error);
}

TEST_CASE("profile_element fills the variant that matches the element kind") {
    Harness h;

    ContextElement callee = make_element(
        ElementKind::Callee, "raw_copy", "src/util.c",
        "void raw_copy(char* d, const char* s, size_t n)\n{\n    memcpy(d, s, n);\n}\n");
    ProfileOutcome out = profile_element(callee, h.target, h.client, h.templates);
    CHECK_FALSE(out.unprofiled);
    REQUIRE(out.profile.callee_fields.has_value());
    CHECK(out.profile.callee_fields->risk_level == RiskLevel::High);
    CHECK(out.profile.callee_fields->justification ==
          "Performs memory copy without bounds checking.");
    CHECK_NOTHROW(out.profile.validate());

    ContextElement caller = make_element(
        ElementKind::Caller, "net_recv_loop", "src/net.c",
        "void net_recv_loop(int fd)\n{\n    n = recv(fd, tmp, sizeof(tmp), 0);\n"
        "    buf_append(&g_buf, tmp, n);\n}\n");
    out = profile_element(caller, h.target, h.client, h.templates);
    REQUIRE(out.profile.caller_fields.has_value());
    CHECK(out.profile.caller_fields->data_origin == DataOrigin::Network);
    CHECK_FALSE(out.profile.caller_fields->return_value_usage.empty());

    ContextElement global = make_element(ElementKind::GlobalVariable, "g_strict_mode",
                                         "src/config.c", "static int g_strict_mode = 0;");
    out = profile_element(global, h.target, h.client, h.templates);
    REQUIRE(out.profile.global_fields.has_value());
    CHECK_FALSE(out.profile.global_fields->role.empty());
    CHECK_FALSE(out.profile.global_fields->security_implications.empty());

    ContextElement empty = callee;
    empty.source.clear();
    CHECK_THROWS_AS(profile_element(empty, h.target, h.client, h.templates), Error);
}

TEST_CASE("profile_element retries once after a malformed response") {
    Harness h;
    h.mock->push_response("I think this function is risky, but here is no JSON.");
    h.mock->push_response("{\"risk_level\": \"Medium\", \"justification\": \"Manages memory.\"}");

    ContextElement callee =
        make_element(ElementKind::Callee, "helper", "src/a.c", "void helper(void) {}\n");
    ProfileOutcome out = profile_element(callee, h.target, h.client, h.templates);
    CHECK_FALSE(out.unprofiled);
    REQUIRE(out.profile.callee_fields.has_value());
    CHECK(out.profile.callee_fields->risk_level == RiskLevel::Medium);
    CHECK(out.diagnostics.size() == 1);
    CHECK(h.mock->calls() == 2);
}

TEST_CASE("profile_element recovers when the schema mismatches the kind") {
    Harness h;
    // A caller element answered with callee fields lacks data_origin.
    h.mock->push_response("{\"risk_level\": \"High\", \"justification\": \"wrong family\"}");
    h.mock->push_response(
        "{\"data_origin\": \"Internal\", \"data_transformations\": \"Validated\", "
        "\"return_value_usage\": \"Checked against -1.\"}");

    ContextElement caller =
        make_element(ElementKind::Caller, "dispatch", "src/b.c", "void dispatch(void) {}\n");
    ProfileOutcome out = profile_element(caller, h.target, h.client, h.templates);
    REQUIRE(out.profile.caller_fields.has_value());
    CHECK(out.profile.caller_fields->data_origin == DataOrigin::Internal);
    CHECK(out.diagnostics.size() == 1);
}

TEST_CASE("two malformed responses leave the element unprofiled") {
    Harness h;
    h.mock->push_response("garbage one");
    h.mock->push_response("garbage two");

    ContextElement global = make_element(ElementKind::GlobalVariable, "g_count", "src/c.c",
                                         "int g_count;");
    ProfileOutcome out = profile_element(global, h.target, h.client, h.templates);
    CHECK(out.unprofiled);
    REQUIRE(out.profile.global_fields.has_value());
    CHECK(out.profile.global_fields->role == "(unprofiled)");
    CHECK_NOTHROW(out.profile.validate());
    CHECK(out.diagnostics.size() == 3);
    CHECK(h.mock->calls() == 2);
}

TEST_CASE("oversized profile texts are clipped with a diagnostic") {
    Harness h;
    std::string padding(500, 'x');
    h.mock->push_response("{\"risk_level\": \"Low\", \"justification\": \"" + padding + "\"}");
    ContextElement callee =
        make_element(ElementKind::Callee, "pad", "src/d.c", "void pad(void) {}\n");
    ProfileOutcome out = profile_element(callee, h.target, h.client, h.templates);
    CHECK(out.profile.callee_fields->justification.size() == kMaxProfileText);
    CHECK(out.diagnostics.size() == 1);
    CHECK_NOTHROW(out.profile.validate());
}

TEST_CASE("profile variants always match element kind across fuzzed runs") {
    Harness h;
    std::mt19937 rng(7);
    const char* sources[] = {
        "memcpy(d, s, n);",  "recv(fd, b, n, 0);", "return x + y;",
        "free(p);",          "fgets(b, n, f);",    "g_total += 1;",
    };
    int runs = 0;
    for (int i = 0; i < 1000; ++i) {
        ElementKind kind = static_cast<ElementKind>(i % 3);
        std::string name = "elem_" + std::to_string(rng() % 97);
        std::string body = "void " + name + "(void)\n{\n    ";
        body += sources[rng() % 6];
        body += "\n}\n";
        ContextElement e = make_element(kind, name, "src/fuzz.c",
                                        kind == ElementKind::GlobalVariable
                                            ? "static int " + name + ";"
                                            : body);
        ProfileOutcome out = profile_element(e, h.target, h.client, h.templates);
        CHECK_NOTHROW(out.profile.validate());
        CHECK(out.profile.element_key.kind == kind);
        bool variant_matches =
            (kind == ElementKind::Caller && out.profile.caller_fields.has_value()) ||
            (kind == ElementKind::Callee && out.profile.callee_fields.has_value()) ||
            (kind == ElementKind::GlobalVariable && out.profile.global_fields.has_value());
        CHECK(variant_matches);
        ++runs;
    }
    CHECK(runs == 1000);
}

TEST_CASE("security profile json round-trips and validates") {
    SecurityProfile p;
    p.element_key = {ElementKind::Caller, "reader", "src/a.c"};
    p.caller_fields = CallerProfile{DataOrigin::File, DataTransformations::RawUnvalidated,
                                    "Feeds the result into a length field."};
    CHECK_NOTHROW(p.validate());
    SecurityProfile back = SecurityProfile::from_json(p.to_json());
    CHECK(back == p);
    CHECK(p.to_json()["caller"]["data_transformations"] == "Raw/Unvalidated");

    SecurityProfile two = p;
    two.global_fields = GlobalProfile{"x", "y"};
    CHECK_THROWS_AS(two.validate(), Error);

    SecurityProfile mismatched = p;
    mismatched.element_key.kind = ElementKind::Callee;
    CHECK_THROWS_AS(mismatched.validate(), Error);

    SecurityProfile longtext = p;
    longtext.caller_fields->return_value_usage.assign(401, 'a');
    CHECK_THROWS_AS(longtext.validate(), Error);

    CHECK_THROWS_AS(data_origin_from("Keyboard"), Error);
    CHECK_THROWS_AS(risk_level_from("Severe"), Error);
    CHECK(std::string(data_origin_name(DataOrigin::UserInput)) == "User Input");
}

namespace {

std::vector<std::pair<ContextElement, SecurityProfile>> profile_all(
    Harness& h, const std::vector<ContextElement>& elements) {
    std::vector<std::pair<ContextElement, SecurityProfile>> out;
    for (const auto& e : elements)
        out.emplace_back(e, profile_element(e, h.target, h.client, h.templates).profile);
    return out;
}

}  // namespace

TEST_CASE("rank_elements scores, sorts, and preserves the element multiset") {
    Harness h;
    std::vector<ContextElement> elements = {
        make_element(ElementKind::Callee, "raw_copy", "src/u.c",
                     "void raw_copy(char* d, const char* s, size_t n)\n{\n"
                     "    memcpy(d, s, n);\n}\n"),
        make_element(ElementKind::Callee, "min_int", "src/u.c",
                     "int min_int(int a, int b)\n{\n    return a < b ? a : b;\n}\n"),
    };
    auto profiles = profile_all(h, elements);
    RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
    REQUIRE(out.scored.size() == 2);
    CHECK(out.scored[0].element.name == "raw_copy");
    CHECK(out.scored[0].relevance >= 7.0);
    CHECK(out.scored[1].element.name == "min_int");
    CHECK(out.scored[1].relevance <= 4.2);
    for (const auto& sc : out.scored) {
        CHECK(sc.relevance >= 0.0);
        CHECK(sc.relevance <= 10.0);
    }

    auto single = profile_all(h, {elements[0]});
    RankOutcome one = rank_elements(h.target, single, h.client, h.templates);
    CHECK(one.scored.size() == 1);

    CHECK_THROWS_AS(rank_elements(h.target, {}, h.client, h.templates), Error);
}

TEST_CASE("equal scores fall back to kind, name, then file order") {
    Harness h;
    std::vector<ContextElement> elements = {
        make_element(ElementKind::Callee, "zeta", "src/u.c", "void zeta(void) {}\n"),
        make_element(ElementKind::Caller, "alpha", "src/u.c", "void alpha(void) {}\n"),
        make_element(ElementKind::Caller, "alpha", "src/a.c", "void alpha(void) {}\n"),
        make_element(ElementKind::Caller, "beta", "src/u.c", "void beta(void) {}\n"),
    };
    auto profiles = profile_all(h, elements);
    h.mock->push_response(
        "{\"scores\": [{\"id\": 0, \"score\": 7}, {\"id\": 1, \"score\": 7}, "
        "{\"id\": 2, \"score\": 7}, {\"id\": 3, \"score\": 7}]}");
    RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
    REQUIRE(out.scored.size() == 4);
    CHECK(out.scored[0].element.kind == ElementKind::Caller);
    CHECK(out.scored[0].element.name == "alpha");
    CHECK(out.scored[0].element.file_path == "src/a.c");
    CHECK(out.scored[1].element.file_path == "src/u.c");
    CHECK(out.scored[2].element.name == "beta");
    CHECK(out.scored[3].element.kind == ElementKind::Callee);
}

TEST_CASE("rank recovers from malformed and incomplete score responses") {
    Harness h;
    std::vector<ContextElement> elements = {
        make_element(ElementKind::Callee, "a", "src/u.c", "void a(void) {}\n"),
        make_element(ElementKind::Callee, "b", "src/u.c", "void b(void) {}\n"),
    };
    auto profiles = profile_all(h, elements);

    SUBCASE("malformed then valid uses the retry") {
        h.mock->push_response("no json here");
        h.mock->push_response("{\"scores\": [{\"id\": 0, \"score\": 9}, {\"id\": 1, \"score\": 2}]}");
        RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
        CHECK(out.scored[0].relevance == doctest::Approx(9.0));
        CHECK(out.diagnostics.size() == 1);
    }

    SUBCASE("two malformed responses default every score") {
        h.mock->push_response("still not json");
        h.mock->push_response("also not json");
        RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
        for (const auto& sc : out.scored) CHECK(sc.relevance == doctest::Approx(5.0));
        CHECK(out.diagnostics.size() >= 3);
    }

    SUBCASE("a gap in the ids triggers one follow-up") {
        h.mock->push_response("{\"scores\": [{\"id\": 0, \"score\": 8}]}");
        h.mock->push_response("{\"scores\": [{\"id\": 1, \"score\": 3}]}");
        RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
        CHECK(out.scored[0].relevance == doctest::Approx(8.0));
        CHECK(out.scored[1].relevance == doctest::Approx(3.0));
        CHECK(h.mock->calls() == 2 + 2);  // two profiles + rank + gap retry
    }

    SUBCASE("a gap that persists falls back to the default score") {
        h.mock->push_response("{\"scores\": [{\"id\": 0, \"score\": 8}]}");
        h.mock->push_response("{\"scores\": [{\"id\": 0, \"score\": 8}]}");
        RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
        CHECK(out.scored[1].element.name == "b");
        CHECK(out.scored[1].relevance == doctest::Approx(5.0));
        CHECK_FALSE(out.diagnostics.empty());
    }

    SUBCASE("out-of-range scores are clamped with a diagnostic") {
        h.mock->push_response("{\"scores\": [{\"id\": 0, \"score\": 15}, {\"id\": 1, \"score\": -2}]}");
        RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
        CHECK(out.scored[0].relevance == doctest::Approx(10.0));
        CHECK(out.scored[1].relevance == doctest::Approx(0.0));
        CHECK(out.diagnostics.size() == 2);
    }
}

TEST_CASE("ranking splits batches that would blow the window") {
    Harness h;
    std::vector<ContextElement> elements;
    for (int i = 0; i < 6; ++i) {
        elements.push_back(make_element(ElementKind::Callee, "fn_" + std::to_string(i),
                                        "src/u.c",
                                        "void fn_" + std::to_string(i) + "(void) {}\n"));
    }
    auto profiles = profile_all(h, elements);
    long long before = h.mock->calls();

    ProfilingOptions tight;
    tight.ranking_window_tokens = 400;  // roughly the template alone
    RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates, tight);
    CHECK(out.scored.size() == 6);
    long long batch_calls = h.mock->calls() - before;
    CHECK(batch_calls > 1);

    std::multiset<std::string> in_names, out_names;
    for (const auto& p : profiles) in_names.insert(p.first.name);
    for (const auto& sc : out.scored) out_names.insert(sc.element.name);
    CHECK(in_names == out_names);
}

TEST_CASE("ranking output is a sorted permutation across fuzzed inputs") {
    Harness h;
    std::mt19937 rng(20260817);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 1 + rng() % 8;
        std::vector<ContextElement> elements;
        for (std::size_t i = 0; i < n; ++i) {
            ElementKind kind = static_cast<ElementKind>(rng() % 3);
            std::string name = "e" + std::to_string(rng() % 19);
            elements.push_back(make_element(
                kind, name, "src/f" + std::to_string(rng() % 3) + ".c",
                kind == ElementKind::GlobalVariable ? "int " + name + ";"
                                                    : "void " + name + "(void) { memcpy(a, b, 1); }\n"));
        }
        auto profiles = profile_all(h, elements);
        RankOutcome out = rank_elements(h.target, profiles, h.client, h.templates);
        REQUIRE(out.scored.size() == n);
        std::multiset<std::tuple<int, std::string, std::string>> in_keys, out_keys;
        for (const auto& p : profiles)
            in_keys.insert({static_cast<int>(p.first.kind), p.first.name, p.first.file_path});
        for (const auto& sc : out.scored) {
            out_keys.insert({static_cast<int>(sc.element.kind), sc.element.name,
                             sc.element.file_path});
            CHECK(sc.relevance >= 0.0);
            CHECK(sc.relevance <= 10.0);
        }
        CHECK(in_keys == out_keys);
        for (std::size_t i = 1; i < out.scored.size(); ++i)
            CHECK_FALSE(scored_order(out.scored[i], out.scored[i - 1]));
    }
}
