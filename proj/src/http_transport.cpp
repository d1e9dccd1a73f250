// Wraps the single-header HTTP client so only this translation unit pays
// for the header and its TLS configuration.

#ifdef CTXVUL_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <string>
#include <utility>

namespace ctxvul::llm {

// Returns {status, body}; status -1 means a connection-level failure with the
// reason written to *transport_error.
std::pair<int, std::string> post_json(const std::string& base,
                                      const std::string& path,
                                      const std::string& api_key,
                                      const std::string& body,
                                      int timeout_seconds,
                                      std::string* transport_error) {
    httplib::Client client(base);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);

    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
        if (transport_error) *transport_error = httplib::to_string(res.error());
        return {-1, ""};
    }
    return {res->status, res->body};
}

}  // namespace ctxvul::llm
