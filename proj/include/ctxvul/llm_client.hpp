#pragma once

/** @file
 * Pluggable chat-completion client. A deterministic mock provider serves
 * tests and offline runs; the HTTP provider speaks the common JSON
 * chat-completion wire format. Responses are cached on disk keyed by the
 * request hash, and a shared token-bucket limiter throttles request rate.
 */

#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

namespace ctxvul::llm {

struct ChatRequest {
    std::string model;
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_output_tokens = 4096;
};

struct Usage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    Usage usage;
    bool cached = false;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual ChatResponse send(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic provider: the response is a pure function of the request
/// text. It recognizes the pipeline's prompt families (profiling, ranking,
/// reasoning-trace generation, detection) and emits schema-valid JSON for
/// each. Scripted responses and forced failures can be queued for tests.
class MockProvider : public Provider {
public:
    ChatResponse send(const ChatRequest& request) override;
    std::string name() const override { return "mock"; }

    /// Next responses returned verbatim (FIFO), bypassing generation.
    void push_response(std::string text);
    /// The next `times` sends throw Transport errors.
    void fail_next(int times);

    long long calls() const;

private:
    mutable std::mutex mu_;
    std::deque<std::string> scripted_;
    int fail_times_ = 0;
    long long calls_ = 0;
};

struct HttpOptions {
    std::string endpoint;  // full URL of the chat-completion route
    std::string api_key;   // sent as a bearer token when non-empty
    int max_retries = 3;         // connection-level failures only
    int backoff_initial_ms = 250;
    double backoff_factor = 2.0;
    int timeout_seconds = 120;
};

/// Reads CTXVUL_LLM_ENDPOINT and CTXVUL_LLM_KEY. Endpoint empty when unset.
HttpOptions http_options_from_env();

class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpOptions options);
    ChatResponse send(const ChatRequest& request) override;
    std::string name() const override { return "api"; }

private:
    HttpOptions options_;
};

/// Token bucket over requests per minute. 0 disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(int requests_per_minute);

    /// Blocks until a request slot is available.
    void acquire();

    /// Deterministic core used by acquire and by tests: consumes a slot and
    /// returns how many seconds the caller must wait before proceeding.
    double reserve(double now_seconds);

private:
    double rate_per_second_ = 0.0;
    double capacity_ = 0.0;
    double tokens_ = 0.0;
    double last_seconds_ = -1.0;
    std::mutex mu_;
};

struct ClientOptions {
    std::filesystem::path cache_dir;  // empty disables the response cache
    int requests_per_minute = 0;      // 0 = unlimited
};

/// Thread-safe front end combining a provider, the on-disk response cache,
/// and the rate limiter. Cache writes are atomic per key, so concurrent
/// completions of the same request at worst duplicate one provider call.
class Client {
public:
    explicit Client(std::shared_ptr<Provider> provider, ClientOptions options = {});

    ChatResponse complete(const ChatRequest& request);

    /// sha256 over (model, temperature, system, user).
    static std::string cache_key(const ChatRequest& request);

    Provider& provider() { return *provider_; }
    const std::filesystem::path& cache_dir() const { return options_.cache_dir; }
    long long cache_hits() const;
    long long cache_misses() const;

private:
    std::shared_ptr<Provider> provider_;
    ClientOptions options_;
    RateLimiter limiter_;
    mutable std::mutex mu_;
    long long hits_ = 0;
    long long misses_ = 0;
};

}  // namespace ctxvul::llm
