#include "ctxvul/llm_client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul::llm {

namespace {

using ordered_json = nlohmann::ordered_json;

bool contains(const std::string& haystack, std::string_view needle) {
    return haystack.find(needle) != std::string::npos;
}

std::string format_temperature(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    return buf;
}

// --- mock generation -------------------------------------------------------
//
// Responses are derived from the request hash and from surface signals in the
// prompt text, so fixtures get plausible content while staying byte-stable.

std::uint64_t pick(std::uint64_t h, int shift, int mod) {
    return (h >> shift) % static_cast<std::uint64_t>(mod);
}

struct CodeSignals {
    bool unchecked_copy = false;   // raw copy/format APIs in view
    bool guarded = false;          // bounds or size checks in view
    bool resource_mgmt = false;    // allocation / handle lifecycle
};

CodeSignals scan_signals(const std::string& text) {
    CodeSignals s;
    for (const char* api : {"memcpy(", "strcpy(", "strcat(", "sprintf(", "gets(", "alloca("})
        if (contains(text, api)) s.unchecked_copy = true;
    for (const char* guard : {"snprintf(", " > sizeof(", ">= sizeof(", "buf_reserve("})
        if (contains(text, guard)) s.guarded = true;
    for (const char* api : {"malloc(", "calloc(", "realloc(", "free(", "fopen(", "fclose("})
        if (contains(text, api)) s.resource_mgmt = true;
    return s;
}

std::string mock_reasoning(const std::string& user, bool vulnerable, std::uint64_t h) {
    CodeSignals sig = scan_signals(user);
    ordered_json j;
    int confidence = static_cast<int>(7 + pick(h, 3, 4));
    if (vulnerable) {
        if (sig.unchecked_copy) {
            j["observation"] =
                "The function copies externally influenced data into a fixed "
                "buffer without first validating the length against the "
                "destination capacity.";
            j["security_reasoning"] =
                "Because the copy size is taken from the input, a crafted "
                "length larger than the destination overruns adjacent memory; "
                "no bounds check interposes between the size computation and "
                "the copy.";
            j["impact"] =
                "An attacker can corrupt adjacent heap or stack memory, "
                "leading to crashes or potential code execution.";
        } else {
            j["observation"] =
                "The function consumes input values in arithmetic and state "
                "updates without validating their range.";
            j["security_reasoning"] =
                "Unvalidated values reach security-sensitive operations, so "
                "out-of-range input shifts the computation outside its "
                "intended domain.";
            j["impact"] =
                "An attacker can force inconsistent internal state and "
                "degrade or redirect subsequent processing.";
        }
        j["is_vulnerable"] = true;
    } else {
        j["observation"] =
            "The function validates sizes and error codes before acting on "
            "input, and all copies are bounded by the destination capacity.";
        j["security_reasoning"] =
            "Each write is guarded by an explicit capacity check. Without "
            "that check, the same copy would overrun the destination exactly "
            "as in the vulnerable pattern shown in the diff; the guard "
            "removes that path.";
        j["impact"] =
            "The bounds checks stop oversized input at the boundary, so "
            "overflow-based corruption attempts fail cleanly.";
        j["is_vulnerable"] = false;
    }
    j["confidence_score"] = confidence;
    return j.dump(2);
}

std::string mock_detection(const std::string& user, bool binary, std::uint64_t h) {
    CodeSignals sig = scan_signals(user);
    bool vulnerable = sig.guarded ? false : (sig.unchecked_copy ? true : (h & 1) != 0);
    int confidence = static_cast<int>(6 + pick(h, 5, 5));
    ordered_json j;
    if (!binary) {
        if (vulnerable) {
            j["observation"] = "Unbounded data movement into a fixed-size destination.";
            j["security_reasoning"] =
                "The copy length is attacker-influenced and no capacity check "
                "precedes the write.";
            j["impact"] = "Memory corruption beyond the destination buffer.";
        } else {
            j["observation"] = "Writes are guarded by explicit capacity checks.";
            j["security_reasoning"] =
                "Input sizes are validated before any buffer write, closing "
                "the overflow path.";
            j["impact"] = "Oversized input is rejected before any write occurs.";
        }
    }
    j["is_vulnerable"] = vulnerable;
    j["confidence_score"] = confidence;
    return j.dump(2);
}

// Profile prompts embed the target function above the element under
// question; signals must come from the element section only. Falls back to
// the whole text when no element header is present.
std::string element_section(const std::string& user) {
    for (const char* marker : {"\nCaller \"", "\nCallee \"", "\nGlobal variable \""}) {
        std::size_t at = user.find(marker);
        if (at != std::string::npos) return user.substr(at);
    }
    return user;
}

std::string mock_caller_profile(const std::string& full_text, std::uint64_t h) {
    const std::string user = element_section(full_text);
    ordered_json j;
    if (contains(user, "recv(") || contains(user, "socket") || contains(user, "connect("))
        j["data_origin"] = "Network";
    else if (contains(user, "argv") || contains(user, "stdin") || contains(user, "scanf(") ||
             contains(user, "getchar("))
        j["data_origin"] = "User Input";
    else if (contains(user, "fopen(") || contains(user, "fread(") || contains(user, "fgets("))
        j["data_origin"] = "File";
    else if (contains(user, "getenv("))
        j["data_origin"] = "Environment";
    else
        j["data_origin"] = pick(h, 1, 2) ? "Internal" : "Unknown";

    if (contains(user, "sanitiz"))
        j["data_transformations"] = "Sanitized";
    else if (contains(user, "valid") || contains(user, "check") || contains(user, "clamp") ||
             contains(user, "strict"))
        j["data_transformations"] = "Validated";
    else
        j["data_transformations"] = pick(h, 2, 2) ? "Raw/Unvalidated" : "Unknown";

    switch (pick(h, 4, 3)) {
        case 0:
            j["return_value_usage"] =
                "Return value is compared against an error code before the "
                "result is used.";
            break;
        case 1:
            j["return_value_usage"] =
                "Return value feeds directly into subsequent size arithmetic.";
            break;
        default:
            j["return_value_usage"] = "Return value is ignored by this caller.";
            break;
    }
    return j.dump(2);
}

std::string mock_callee_profile(const std::string& full_text, std::uint64_t h) {
    const std::string user = element_section(full_text);
    CodeSignals sig = scan_signals(user);
    ordered_json j;
    if (sig.unchecked_copy && !sig.guarded) {
        j["risk_level"] = "High";
        j["justification"] = contains(user, "sprintf(")
                                 ? "Formats into a fixed-size buffer without a length limit."
                                 : "Performs memory copy without bounds checking.";
    } else if (sig.resource_mgmt || (sig.unchecked_copy && sig.guarded)) {
        j["risk_level"] = "Medium";
        j["justification"] =
            "Manages buffers or resources whose misuse corrupts state, but "
            "guards are present on the observed paths.";
    } else {
        j["risk_level"] = "Low";
        j["justification"] = pick(h, 1, 2)
                                 ? "Performs bookkeeping with no externally influenced writes."
                                 : "Pure computation over its arguments with no side effects.";
    }
    return j.dump(2);
}

std::string mock_global_profile(const std::string& full_text, std::uint64_t h) {
    const std::string user = element_section(full_text);
    ordered_json j;
    if (contains(user, "static "))
        j["role"] = "Translation-unit state shared by the functions of one module.";
    else
        j["role"] = "Process-wide flag or counter consulted across modules.";
    switch (pick(h, 2, 3)) {
        case 0:
            j["security_implications"] =
                "Writes are unsynchronized, so concurrent use can publish "
                "torn or stale values to security checks.";
            break;
        case 1:
            j["security_implications"] =
                "Controls a validation mode; flipping it at the wrong time "
                "relaxes checks for in-flight requests.";
            break;
        default:
            j["security_implications"] =
                "Accumulates counts used in limits; overflow or reset skews "
                "enforcement decisions.";
            break;
    }
    return j.dump(2);
}

std::string mock_rank(const std::string& user) {
    ordered_json out;
    out["scores"] = ordered_json::array();
    std::size_t anchor = user.find("Profiled context components:");
    std::size_t open = anchor == std::string::npos ? std::string::npos
                                                   : user.find('[', anchor);
    if (open != std::string::npos) {
        int depth = 0;
        std::size_t close = std::string::npos;
        bool in_str = false;
        bool esc = false;
        for (std::size_t i = open; i < user.size(); ++i) {
            char c = user[i];
            if (in_str) {
                if (esc) esc = false;
                else if (c == '\\') esc = true;
                else if (c == '"') in_str = false;
                continue;
            }
            if (c == '"') in_str = true;
            else if (c == '[') ++depth;
            else if (c == ']' && --depth == 0) {
                close = i;
                break;
            }
        }
        if (close != std::string::npos) {
            nlohmann::json entries;
            try {
                entries = nlohmann::json::parse(user.substr(open, close - open + 1));
            } catch (const nlohmann::json::exception&) {
                entries = nlohmann::json::array();
            }
            for (const auto& entry : entries) {
                if (!entry.is_object() || !entry.contains("id")) continue;
                std::uint64_t eh = fnv1a64(entry.dump());
                std::string kind = entry.value("kind", "");
                nlohmann::json profile = entry.value("profile", nlohmann::json::object());
                double score;
                if (kind == "callee") {
                    std::string risk = profile.value("risk_level", "");
                    if (risk == "High") score = 7.0 + (eh % 31) / 10.0;
                    else if (risk == "Medium") score = 4.0 + (eh % 31) / 10.0;
                    else score = 1.0 + (eh % 31) / 10.0;
                } else if (kind == "caller") {
                    std::string origin = profile.value("data_origin", "");
                    if (origin == "User Input" || origin == "Network")
                        score = 6.0 + (eh % 41) / 10.0;
                    else if (origin == "File" || origin == "Environment")
                        score = 4.0 + (eh % 41) / 10.0;
                    else
                        score = (eh % 51) / 10.0;
                } else {
                    score = 3.0 + (eh % 41) / 10.0;
                }
                ordered_json row;
                row["id"] = entry["id"];
                row["score"] = std::round(score * 10.0) / 10.0;
                out["scores"].push_back(row);
            }
        }
    }
    return out.dump(2);
}

std::string mock_text(const ChatRequest& request) {
    const std::string& user = request.user;
    std::uint64_t h = fnv1a64(user);

    // Family sentinels come from the prompt templates. Reasoning families
    // first (their prompts embed the verdict schema too), then ranking (its
    // payload embeds profile schemas), then the profile families.
    if (contains(user, "identify this code as vulnerable"))
        return mock_reasoning(user, true, h);
    if (contains(user, "recognize safe and secure code patterns"))
        return mock_reasoning(user, false, h);
    if (contains(user, "\"scores\""))
        return mock_rank(user);
    if (contains(user, "\"data_origin\""))
        return mock_caller_profile(user, h);
    if (contains(user, "\"risk_level\""))
        return mock_callee_profile(user, h);
    if (contains(user, "\"security_implications\""))
        return mock_global_profile(user, h);
    if (contains(user, "\"observation\""))
        return mock_detection(user, false, h);
    if (contains(user, "\"is_vulnerable\""))
        return mock_detection(user, true, h);

    ordered_json j;
    j["note"] = "unrecognized prompt family";
    j["request_hash"] = h;
    return j.dump(2);
}

long long approx_tokens(std::size_t bytes) {
    return static_cast<long long>((bytes + 3) / 4);
}

}  // namespace

// --- MockProvider ----------------------------------------------------------

ChatResponse MockProvider::send(const ChatRequest& request) {
    if (request.user.empty()) throw Error(ErrorCode::Config, "empty user prompt");
    std::string text;
    {
        std::lock_guard<std::mutex> lock(mu_);
        ++calls_;
        if (fail_times_ > 0) {
            --fail_times_;
            throw Error(ErrorCode::Transport, "mock transport failure (scripted)");
        }
        if (!scripted_.empty()) {
            text = std::move(scripted_.front());
            scripted_.pop_front();
        }
    }
    if (text.empty()) text = mock_text(request);
    ChatResponse resp;
    resp.text = std::move(text);
    resp.usage.prompt_tokens = approx_tokens(request.system.size() + request.user.size());
    resp.usage.completion_tokens = approx_tokens(resp.text.size());
    return resp;
}

void MockProvider::push_response(std::string text) {
    std::lock_guard<std::mutex> lock(mu_);
    scripted_.push_back(std::move(text));
}

void MockProvider::fail_next(int times) {
    std::lock_guard<std::mutex> lock(mu_);
    fail_times_ = times;
}

long long MockProvider::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

// --- HttpProvider ----------------------------------------------------------

HttpOptions http_options_from_env() {
    HttpOptions opts;
    if (const char* e = std::getenv("CTXVUL_LLM_ENDPOINT")) opts.endpoint = e;
    if (const char* k = std::getenv("CTXVUL_LLM_KEY")) opts.api_key = k;
    return opts;
}

HttpProvider::HttpProvider(HttpOptions options) : options_(std::move(options)) {
    if (options_.endpoint.empty())
        throw Error(ErrorCode::Config, "http provider requires an endpoint URL");
}

namespace {

// Splits "scheme://host:port/some/path" into base and path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos)
        throw Error(ErrorCode::Config, "endpoint is not a URL: " + endpoint);
    std::size_t slash = endpoint.find('/', scheme + 3);
    if (slash == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

}  // namespace

ChatResponse HttpProvider::send(const ChatRequest& request) {
    // The HTTP machinery lives in http_transport.cpp to isolate the header
    // and its OpenSSL configuration.
    extern std::pair<int, std::string> post_json(const std::string& base,
                                                 const std::string& path,
                                                 const std::string& api_key,
                                                 const std::string& body,
                                                 int timeout_seconds,
                                                 std::string* transport_error);

    auto [base, path] = split_endpoint(options_.endpoint);

    nlohmann::json body;
    body["model"] = request.model;
    body["messages"] = nlohmann::json::array();
    if (!request.system.empty())
        body["messages"].push_back({{"role", "system"}, {"content", request.system}});
    body["messages"].push_back({{"role", "user"}, {"content", request.user}});
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    std::string payload = body.dump();

    int backoff_ms = options_.backoff_initial_ms;
    std::string transport_error;
    for (int attempt = 0;; ++attempt) {
        transport_error.clear();
        auto [status, text] = post_json(base, path, options_.api_key, payload,
                                        options_.timeout_seconds, &transport_error);
        if (status < 0) {
            if (attempt < options_.max_retries) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms = static_cast<int>(backoff_ms * options_.backoff_factor);
                continue;
            }
            throw Error(ErrorCode::Transport,
                        "request to " + options_.endpoint + " failed after " +
                            std::to_string(options_.max_retries + 1) +
                            " attempts: " + transport_error);
        }
        if (status / 100 != 2) {
            throw Error(ErrorCode::Provider,
                        "provider returned HTTP " + std::to_string(status) + ": " +
                            text.substr(0, 512));
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Provider,
                        std::string("provider response is not JSON: ") + e.what());
        }
        ChatResponse resp;
        try {
            resp.text = parsed.at("choices").at(0).at("message").at("content")
                            .get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::Provider,
                        "provider response lacks choices[0].message.content");
        }
        if (resp.text.empty())
            throw Error(ErrorCode::Provider, "provider returned an empty completion");
        if (parsed.contains("usage")) {
            resp.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0LL);
            resp.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0LL);
        }
        return resp;
    }
}

// --- RateLimiter -----------------------------------------------------------

RateLimiter::RateLimiter(int requests_per_minute) {
    if (requests_per_minute < 0)
        throw Error(ErrorCode::Config, "requests_per_minute must be >= 0");
    if (requests_per_minute > 0) {
        rate_per_second_ = requests_per_minute / 60.0;
        // One second of burst, at least one request.
        capacity_ = std::max(1.0, rate_per_second_);
    }
}

double RateLimiter::reserve(double now_seconds) {
    std::lock_guard<std::mutex> lock(mu_);
    if (rate_per_second_ <= 0.0) return 0.0;
    if (last_seconds_ < 0.0) {
        tokens_ = capacity_;
        last_seconds_ = now_seconds;
    } else if (now_seconds > last_seconds_) {
        tokens_ = std::min(capacity_, tokens_ + (now_seconds - last_seconds_) * rate_per_second_);
        last_seconds_ = now_seconds;
    }
    tokens_ -= 1.0;
    if (tokens_ >= 0.0) return 0.0;
    return -tokens_ / rate_per_second_;
}

void RateLimiter::acquire() {
    if (rate_per_second_ <= 0.0) return;
    auto now = std::chrono::steady_clock::now().time_since_epoch();
    double seconds = std::chrono::duration<double>(now).count();
    double wait = reserve(seconds);
    if (wait > 0.0)
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
}

// --- Client ----------------------------------------------------------------

Client::Client(std::shared_ptr<Provider> provider, ClientOptions options)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      limiter_(options_.requests_per_minute) {
    if (!provider_) throw Error(ErrorCode::Config, "client requires a provider");
    if (!options_.cache_dir.empty())
        std::filesystem::create_directories(options_.cache_dir);
}

std::string Client::cache_key(const ChatRequest& request) {
    std::string material = request.model;
    material += '\x1f';
    material += format_temperature(request.temperature);
    material += '\x1f';
    material += request.system;
    material += '\x1f';
    material += request.user;
    return sha256_hex(material);
}

ChatResponse Client::complete(const ChatRequest& request) {
    if (request.user.empty())
        throw Error(ErrorCode::Config, "chat request requires a user message");
    if (request.temperature < 0.0 || request.temperature > 2.0)
        throw Error(ErrorCode::Config, "temperature out of range [0, 2]");

    std::filesystem::path entry;
    if (!options_.cache_dir.empty()) {
        entry = options_.cache_dir / (cache_key(request) + ".json");
        if (std::filesystem::exists(entry)) {
            try {
                nlohmann::json j = nlohmann::json::parse(read_file(entry));
                ChatResponse resp;
                resp.text = j.at("text").get<std::string>();
                resp.usage.prompt_tokens = j.value("prompt_tokens", 0LL);
                resp.usage.completion_tokens = j.value("completion_tokens", 0LL);
                resp.cached = true;
                std::lock_guard<std::mutex> lock(mu_);
                ++hits_;
                return resp;
            } catch (const std::exception&) {
                // Unreadable entry: fall through and recompute it.
            }
        }
    }

    limiter_.acquire();
    ChatResponse resp = provider_->send(request);
    if (resp.text.empty())
        throw Error(ErrorCode::Provider, "provider returned an empty completion");

    if (!entry.empty()) {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["model"] = request.model;
        j["temperature"] = request.temperature;
        j["text"] = resp.text;
        j["prompt_tokens"] = resp.usage.prompt_tokens;
        j["completion_tokens"] = resp.usage.completion_tokens;
        write_file_atomic(entry, j.dump(2) + "\n");
    }
    std::lock_guard<std::mutex> lock(mu_);
    ++misses_;
    return resp;
}

long long Client::cache_hits() const {
    std::lock_guard<std::mutex> lock(mu_);
    return hits_;
}

long long Client::cache_misses() const {
    std::lock_guard<std::mutex> lock(mu_);
    return misses_;
}

}  // namespace ctxvul::llm
