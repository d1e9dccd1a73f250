#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#ifdef CTXVUL_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "ctxvul/errors.hpp"
#include "ctxvul/llm_client.hpp"
#include "ctxvul/util.hpp"
#include "support/fixture_repo.hpp"

using namespace ctxvul;
using namespace ctxvul::llm;
using nlohmann::json;

namespace {

ChatRequest req(std::string user, std::string system = "", double temp = 0.0) {
    ChatRequest r;
    r.model = "test-model";
    r.system = std::move(system);
    r.user = std::move(user);
    r.temperature = temp;
    return r;
}

json parse(const std::string& text) {
    CAPTURE(text);
    return json::parse(text);
}

}  // namespace

TEST_CASE("mock responses are deterministic and carry usage") {
    MockProvider mock;
    ChatRequest r = req("\"risk_level\"\nvoid f(void) { memcpy(a, b, n); }");
    ChatResponse a = mock.send(r);
    ChatResponse b = mock.send(r);
    CHECK(a.text == b.text);
    CHECK_FALSE(a.cached);
    CHECK(a.usage.prompt_tokens > 0);
    CHECK(a.usage.completion_tokens > 0);
    CHECK(mock.calls() == 2);
}

TEST_CASE("mock reasoning families produce matching verdicts") {
    MockProvider mock;
    json vul = parse(mock.send(req("You need to identify this code as vulnerable.\n"
                                   "memcpy(dst, src, len);"))
                         .text);
    CHECK(vul["is_vulnerable"] == true);
    CHECK(vul["confidence_score"].get<int>() >= 0);
    CHECK(vul["confidence_score"].get<int>() <= 10);
    for (const char* field :
         {"observation", "security_reasoning", "impact", "is_vulnerable", "confidence_score"})
        CHECK(vul.contains(field));

    json ben = parse(mock.send(req("Your goal is to recognize safe and secure code patterns.\n"
                                   "if (len > sizeof(buf)) return -1;"))
                         .text);
    CHECK(ben["is_vulnerable"] == false);
    CHECK(ben.contains("security_reasoning"));
}

TEST_CASE("mock caller profile keys off visible io APIs") {
    MockProvider mock;
    json net = parse(mock.send(req("Schema: {\"data_origin\": \"...\"}\n"
                                   "n = recv(fd, buf, sizeof(buf), 0);"))
                         .text);
    CHECK(net["data_origin"] == "Network");

    json file = parse(mock.send(req("Schema: {\"data_origin\": \"...\"}\n"
                                    "FILE* f = fopen(path, \"r\"); sanitize(buf);"))
                          .text);
    CHECK(file["data_origin"] == "File");
    CHECK(file["data_transformations"] == "Sanitized");

    json user_in = parse(mock.send(req("Schema: {\"data_origin\": \"...\"}\n"
                                       "int main(int argc, char** argv) { check(argv[1]); }"))
                             .text);
    CHECK(user_in["data_origin"] == "User Input");
    CHECK(user_in["data_transformations"] == "Validated");
    CHECK(user_in.contains("return_value_usage"));
}

TEST_CASE("mock callee profile grades risk from API surface") {
    MockProvider mock;
    json high = parse(mock.send(req("Schema: {\"risk_level\": \"...\"}\n"
                                    "memcpy(b->data + b->len, data, len);"))
                          .text);
    CHECK(high["risk_level"] == "High");
    CHECK(high["justification"] == "Performs memory copy without bounds checking.");

    json med = parse(mock.send(req("Schema: {\"risk_level\": \"...\"}\n"
                                   "void* p = malloc(n); free(p);"))
                         .text);
    CHECK(med["risk_level"] == "Medium");

    json low = parse(mock.send(req("Schema: {\"risk_level\": \"...\"}\n"
                                   "return (a < b) ? a : b;"))
                         .text);
    CHECK(low["risk_level"] == "Low");
}

TEST_CASE("mock global profile emits role and implications") {
    MockProvider mock;
    json g = parse(mock.send(req("Schema: {\"security_implications\": \"...\"}\n"
                                 "static int g_strict_mode;"))
                       .text);
    CHECK(g.contains("role"));
    CHECK(g.contains("security_implications"));
    CHECK(g["role"].get<std::string>().find("Translation-unit") == 0);
}

TEST_CASE("mock ranking echoes ids and scores by profile strength") {
    MockProvider mock;
    json entries = json::array();
    entries.push_back({{"id", 0},
                       {"kind", "callee"},
                       {"name", "raw_copy"},
                       {"profile", {{"risk_level", "High"}, {"justification", "x"}}}});
    entries.push_back({{"id", 1},
                       {"kind", "caller"},
                       {"name", "reader"},
                       {"profile", {{"data_origin", "Network"}}}});
    entries.push_back({{"id", 2},
                       {"kind", "global"},
                       {"name", "g_mode"},
                       {"profile", {{"role", "flag"}}}});
    std::string prompt = "Score relevance. Respond as {\"scores\": [...]}.\n"
                         "Profiled context components:\n" +
                         entries.dump(2) + "\n";
    json out = parse(mock.send(req(prompt)).text);
    REQUIRE(out.contains("scores"));
    REQUIRE(out["scores"].size() == 3);
    double high_callee = -1, net_caller = -1, global_score = -1;
    for (const auto& row : out["scores"]) {
        double s = row["score"].get<double>();
        CHECK(s >= 0.0);
        CHECK(s <= 10.1);
        if (row["id"] == 0) high_callee = s;
        if (row["id"] == 1) net_caller = s;
        if (row["id"] == 2) global_score = s;
    }
    CHECK(high_callee >= 7.0);
    CHECK(net_caller >= 6.0);
    CHECK(global_score >= 3.0);

    json empty = parse(mock.send(req("Respond as {\"scores\": []}. No components here.")).text);
    CHECK(empty["scores"].empty());
}

TEST_CASE("mock detection verdicts prefer guards over raw copies") {
    MockProvider mock;
    std::string schema = "Respond with {\"observation\": \"\", \"security_reasoning\": \"\", "
                         "\"impact\": \"\", \"is_vulnerable\": true, \"confidence_score\": 0}\n";
    json guarded = parse(mock.send(req(schema + "buf_reserve(b, len);\nmemcpy(b->data, d, len);"))
                             .text);
    CHECK(guarded["is_vulnerable"] == false);
    CHECK(guarded.contains("observation"));

    json raw = parse(mock.send(req(schema + "memcpy(b->data, d, len);")).text);
    CHECK(raw["is_vulnerable"] == true);

    std::string binary_schema = "Respond with {\"is_vulnerable\": true, \"confidence_score\": 0}\n";
    json binary = parse(mock.send(req(binary_schema + "strcpy(dst, src);")).text);
    CHECK(binary["is_vulnerable"] == true);
    CHECK_FALSE(binary.contains("observation"));
    CHECK(binary.size() == 2);
}

TEST_CASE("mock outputs stay schema-valid across fuzzed prompts") {
    MockProvider mock;
    std::mt19937 rng(20260817);
    const char* snippets[] = {
        "memcpy(dst, src, n);",    "snprintf(buf, sizeof(buf), \"%d\", v);",
        "free(p); p = NULL;",      "return a + b;",
        "recv(fd, buf, cap, 0);",  "fgets(line, sizeof(line), f);",
        "if (n > sizeof(t)) {};",  "getenv(\"HOME\");",
        "validate(input);",        "x = y;",
    };
    struct Family {
        const char* sentinel;
        std::vector<const char*> required;
    };
    const Family families[] = {
        {"You need to identify this code as vulnerable.",
         {"observation", "security_reasoning", "impact", "is_vulnerable", "confidence_score"}},
        {"recognize safe and secure code patterns",
         {"observation", "security_reasoning", "impact", "is_vulnerable", "confidence_score"}},
        {"{\"data_origin\": \"\"}", {"data_origin", "data_transformations", "return_value_usage"}},
        {"{\"risk_level\": \"\"}", {"risk_level", "justification"}},
        {"{\"security_implications\": \"\"}", {"role", "security_implications"}},
        {"{\"observation\": \"\", \"is_vulnerable\": false}",
         {"observation", "security_reasoning", "impact", "is_vulnerable", "confidence_score"}},
        {"{\"is_vulnerable\": false}", {"is_vulnerable", "confidence_score"}},
    };
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const Family& fam = families[i % (sizeof(families) / sizeof(families[0]))];
        std::string user = std::string(fam.sentinel) + "\n";
        int lines = 1 + static_cast<int>(rng() % 6);
        for (int l = 0; l < lines; ++l) {
            user += snippets[rng() % 10];
            user += "\n";
        }
        json out = parse(mock.send(req(user)).text);
        for (const char* field : fam.required) {
            CAPTURE(field);
            CHECK(out.contains(field));
        }
        if (out.contains("confidence_score")) {
            double c = out["confidence_score"].get<double>();
            CHECK(c >= 0.0);
            CHECK(c <= 10.0);
        }
        if (out.contains("risk_level")) {
            std::string rl = out["risk_level"];
            CHECK((rl == "High" || rl == "Medium" || rl == "Low"));
        }
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("mock scripted responses and failures take precedence") {
    MockProvider mock;
    mock.push_response("first");
    mock.push_response("second");
    CHECK(mock.send(req("\"risk_level\" anything")).text == "first");
    CHECK(mock.send(req("\"risk_level\" anything")).text == "second");
    CHECK(parse(mock.send(req("\"risk_level\" anything")).text).contains("risk_level"));

    mock.fail_next(2);
    for (int i = 0; i < 2; ++i) {
        try {
            mock.send(req("x"));
            FAIL("expected a transport error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Transport);
            CHECK(e.retriable());
        }
    }
    CHECK_FALSE(mock.send(req("x")).text.empty());
    CHECK(mock.calls() == 6);
}

TEST_CASE("client caches responses by request identity") {
    auto dir = testsupport::make_temp_dir("llmcache");
    auto mock = std::make_shared<MockProvider>();
    Client client(mock, {.cache_dir = dir, .requests_per_minute = 0});

    ChatRequest r = req("\"risk_level\"\nmemcpy(a, b, n);", "profile the callee");
    ChatResponse first = client.complete(r);
    CHECK_FALSE(first.cached);
    ChatResponse second = client.complete(r);
    CHECK(second.cached);
    CHECK(second.text == first.text);
    CHECK(second.usage.prompt_tokens == first.usage.prompt_tokens);
    CHECK(mock->calls() == 1);
    CHECK(client.cache_hits() == 1);
    CHECK(client.cache_misses() == 1);

    // Any identity field change misses the cache.
    ChatRequest warm = r;
    warm.temperature = 0.7;
    CHECK_FALSE(client.complete(warm).cached);
    ChatRequest other = r;
    other.user += " extra";
    CHECK_FALSE(client.complete(other).cached);
    CHECK(mock->calls() == 3);

    std::filesystem::remove_all(dir);
}

TEST_CASE("client recovers from corrupt cache entries") {
    auto dir = testsupport::make_temp_dir("llmcache");
    auto mock = std::make_shared<MockProvider>();
    Client client(mock, {.cache_dir = dir, .requests_per_minute = 0});

    ChatRequest r = req("\"risk_level\"\nreturn 0;");
    client.complete(r);
    auto entry = dir / (Client::cache_key(r) + ".json");
    REQUIRE(std::filesystem::exists(entry));
    {
        std::ofstream out(entry, std::ios::trunc);
        out << "{not json";
    }
    ChatResponse again = client.complete(r);
    CHECK_FALSE(again.cached);
    CHECK(client.complete(r).cached);
    CHECK(mock->calls() == 2);

    std::filesystem::remove_all(dir);
}

TEST_CASE("client without cache dir always consults the provider") {
    auto mock = std::make_shared<MockProvider>();
    Client client(mock);
    ChatRequest r = req("\"risk_level\" x");
    CHECK_FALSE(client.complete(r).cached);
    CHECK_FALSE(client.complete(r).cached);
    CHECK(mock->calls() == 2);
    CHECK(client.cache_hits() == 0);
}

TEST_CASE("client validates requests") {
    auto mock = std::make_shared<MockProvider>();
    Client client(mock);
    CHECK_THROWS_AS(client.complete(req("")), Error);
    ChatRequest hot = req("x");
    hot.temperature = 3.0;
    try {
        client.complete(hot);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Config);
    }
}

TEST_CASE("cache keys separate every identity field") {
    ChatRequest base = req("user", "system");
    base.model = "m1";
    std::string k = Client::cache_key(base);
    CHECK(k == Client::cache_key(base));
    CHECK(k.size() == 64);

    ChatRequest m = base;
    m.model = "m2";
    ChatRequest s = base;
    s.system = "other";
    ChatRequest u = base;
    u.user = "user2";
    ChatRequest t = base;
    t.temperature = 0.5;
    CHECK(Client::cache_key(m) != k);
    CHECK(Client::cache_key(s) != k);
    CHECK(Client::cache_key(u) != k);
    CHECK(Client::cache_key(t) != k);

    // Field boundaries matter: moving a suffix between fields changes the key.
    ChatRequest ab = req("bc", "a");
    ChatRequest ab2 = req("c", "ab");
    ab.model = ab2.model = "m";
    CHECK(Client::cache_key(ab) != Client::cache_key(ab2));
}

TEST_CASE("rate limiter reservations are deterministic in virtual time") {
    RateLimiter unlimited(0);
    CHECK(unlimited.reserve(0.0) == doctest::Approx(0.0));
    CHECK(unlimited.reserve(0.0) == doctest::Approx(0.0));

    // 60 rpm: one token per second, burst of one.
    RateLimiter one_per_second(60);
    CHECK(one_per_second.reserve(0.0) == doctest::Approx(0.0));
    CHECK(one_per_second.reserve(0.0) == doctest::Approx(1.0));
    CHECK(one_per_second.reserve(0.0) == doctest::Approx(2.0));
    // At t=2.5 the two reserved slots have drained; half a token is banked.
    CHECK(one_per_second.reserve(2.5) == doctest::Approx(0.5));
    CHECK(one_per_second.reserve(10.0) == doctest::Approx(0.0));

    // 600 rpm: ten tokens of burst, then 0.1s spacing.
    RateLimiter ten_per_second(600);
    for (int i = 0; i < 10; ++i) CHECK(ten_per_second.reserve(0.0) == doctest::Approx(0.0));
    CHECK(ten_per_second.reserve(0.0) == doctest::Approx(0.1));

    CHECK_THROWS_AS(RateLimiter(-1), Error);
}

TEST_CASE("http provider speaks the chat wire format") {
    httplib::Server server;
    std::atomic<int> hits{0};
    json seen_body;
    std::string seen_auth;

    server.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
        ++hits;
        seen_body = json::parse(rq.body);
        seen_auth = rq.get_header_value("Authorization");
        json reply = {
            {"choices", {{{"message", {{"content", "pong"}}}}}},
            {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}},
        };
        rs.set_content(reply.dump(), "application/json");
    });
    std::atomic<int> fail_hits{0};
    server.Post("/fail", [&](const httplib::Request&, httplib::Response& rs) {
        ++fail_hits;
        rs.status = 500;
        rs.set_content("upstream unavailable", "text/plain");
    });
    server.Post("/weird", [&](const httplib::Request&, httplib::Response& rs) {
        rs.set_content("plain text, not json", "text/plain");
    });
    server.Post("/hollow", [&](const httplib::Request&, httplib::Response& rs) {
        rs.set_content("{\"choices\": []}", "application/json");
    });

    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread runner([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    std::string base = "http://127.0.0.1:" + std::to_string(port);

    SUBCASE("success round-trip") {
        HttpProvider provider({.endpoint = base + "/v1/chat/completions", .api_key = "sk-test"});
        ChatRequest r = req("hello", "be terse", 0.25);
        ChatResponse resp = provider.send(r);
        CHECK(resp.text == "pong");
        CHECK(resp.usage.prompt_tokens == 12);
        CHECK(resp.usage.completion_tokens == 3);
        CHECK(provider.name() == "api");
        CHECK(seen_auth == "Bearer sk-test");
        CHECK(seen_body["model"] == "test-model");
        CHECK(seen_body["temperature"] == doctest::Approx(0.25));
        REQUIRE(seen_body["messages"].size() == 2);
        CHECK(seen_body["messages"][0]["role"] == "system");
        CHECK(seen_body["messages"][0]["content"] == "be terse");
        CHECK(seen_body["messages"][1]["role"] == "user");
        CHECK(hits == 1);
    }

    SUBCASE("system message omitted when empty") {
        HttpProvider provider({.endpoint = base + "/v1/chat/completions"});
        provider.send(req("solo"));
        REQUIRE(seen_body["messages"].size() == 1);
        CHECK(seen_body["messages"][0]["role"] == "user");
        CHECK(seen_auth.empty());
    }

    SUBCASE("http errors surface status without retries") {
        HttpProvider provider({.endpoint = base + "/fail", .max_retries = 3,
                               .backoff_initial_ms = 1});
        try {
            provider.send(req("x"));
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Provider);
            CHECK(std::string(e.what()).find("500") != std::string::npos);
        }
        CHECK(fail_hits == 1);
        CHECK(hits == 0);
    }

    SUBCASE("malformed bodies are provider errors") {
        HttpProvider weird({.endpoint = base + "/weird"});
        CHECK_THROWS_AS(weird.send(req("x")), Error);
        HttpProvider hollow({.endpoint = base + "/hollow"});
        try {
            hollow.send(req("x"));
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Provider);
        }
    }

    server.stop();
    runner.join();
}

TEST_CASE("http provider retries connection failures then gives up") {
    // Nothing listens on this port; every attempt is a connect failure.
    HttpProvider provider({.endpoint = "http://127.0.0.1:9/v1",
                           .max_retries = 2,
                           .backoff_initial_ms = 1,
                           .timeout_seconds = 1});
    try {
        provider.send(req("x"));
        FAIL("expected a transport error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Transport);
        CHECK(e.retriable());
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }

    CHECK_THROWS_AS(HttpProvider({.endpoint = ""}), Error);
    CHECK_THROWS_AS(HttpProvider({.endpoint = "not-a-url"}).send(req("x")), Error);
}

TEST_CASE("http options read the environment") {
    setenv("CTXVUL_LLM_ENDPOINT", "http://example.invalid/v1", 1);
    setenv("CTXVUL_LLM_KEY", "sk-abc", 1);
    HttpOptions opts = http_options_from_env();
    CHECK(opts.endpoint == "http://example.invalid/v1");
    CHECK(opts.api_key == "sk-abc");
    unsetenv("CTXVUL_LLM_ENDPOINT");
    unsetenv("CTXVUL_LLM_KEY");
    HttpOptions cleared = http_options_from_env();
    CHECK(cleared.endpoint.empty());
    CHECK(cleared.api_key.empty());
}
