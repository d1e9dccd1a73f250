#include "ctxvul/selection.hpp"

#include <cctype>
#include <map>
#include <mutex>
#include <set>

#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul::selection {

using context_graph::element_kind_name;
using context_graph::key_of;
using nlohmann::json;
using profiling::SecurityProfile;

// --- token counting ----------------------------------------------------------

namespace {

int approx_count(const std::string& text) {
    long long tokens = (static_cast<long long>(text.size()) + 3) / 4;
    bool in_word = false;
    for (unsigned char c : text) {
        bool word = std::isalnum(c) != 0 || c == '_';
        if (word && !in_word) ++tokens;
        in_word = word;
    }
    return static_cast<int>(tokens);
}

struct Vocab {
    std::set<std::string, std::less<>> tokens;
    std::size_t max_len = 0;
};

const Vocab& load_vocab(const std::filesystem::path& path) {
    static std::mutex mu;
    static std::map<std::string, Vocab> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(path.string());
    if (it != cache.end()) return it->second;

    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, "vocabulary " + path.string() + ": " + e.what());
    }
    const json& arr = j.is_array() ? j : j.at("tokens");
    if (!arr.is_array())
        throw Error(ErrorCode::Config, "vocabulary " + path.string() + " has no token array");

    Vocab v;
    for (const auto& entry : arr) {
        if (!entry.is_string() || entry.get<std::string>().empty())
            throw Error(ErrorCode::Config,
                        "vocabulary " + path.string() + " holds a non-string or empty token");
        std::string tok = entry.get<std::string>();
        v.max_len = std::max(v.max_len, tok.size());
        v.tokens.insert(std::move(tok));
    }
    // Prefix closure makes greedy counts grow monotonically when text is
    // appended; reject vocabularies that silently lose that guarantee.
    for (const auto& tok : v.tokens) {
        for (std::size_t len = 1; len < tok.size(); ++len) {
            if (!v.tokens.count(std::string_view(tok).substr(0, len)))
                throw Error(ErrorCode::Config,
                            "vocabulary is not prefix-closed: '" + tok + "' lacks prefix '" +
                                tok.substr(0, len) + "'");
        }
    }
    return cache.emplace(path.string(), std::move(v)).first->second;
}

int vocab_count(const std::string& text, const Vocab& vocab) {
    int count = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t advance = 1;  // unmatched bytes cost one token each
        std::size_t limit = std::min(vocab.max_len, text.size() - i);
        for (std::size_t len = limit; len >= 1; --len) {
            if (vocab.tokens.count(std::string_view(text).substr(i, len))) {
                advance = len;
                break;
            }
        }
        i += advance;
        ++count;
    }
    return count;
}

}  // namespace

TokenizerConfig tokenizer_from_name(const std::string& name,
                                    const std::filesystem::path& vocab_path) {
    TokenizerConfig config;
    config.name = name;
    if (name == "approx") {
        config.backend = TokenizerConfig::Backend::Approx;
    } else if (name == "vocab") {
        if (vocab_path.empty())
            throw Error(ErrorCode::Config, "tokenizer 'vocab' requires a vocabulary file");
        config.backend = TokenizerConfig::Backend::Vocab;
        config.vocab_path = vocab_path;
    } else {
        throw Error(ErrorCode::Config, "unknown tokenizer '" + name + "'");
    }
    return config;
}

int count_tokens(const std::string& text, const TokenizerConfig& config) {
    switch (config.backend) {
        case TokenizerConfig::Backend::Approx:
            return approx_count(text);
        case TokenizerConfig::Backend::Vocab:
            return vocab_count(text, load_vocab(config.vocab_path));
    }
    throw Error(ErrorCode::Config, "unknown tokenizer backend");
}

// --- budgeting ---------------------------------------------------------------

TokenBudget TokenBudget::make(int window_total, int reserved_for_function,
                              int reserved_for_instructions, int reserved_for_output) {
    TokenBudget b;
    b.window_total = window_total;
    b.reserved_for_function = reserved_for_function;
    b.reserved_for_instructions = reserved_for_instructions;
    b.reserved_for_output = reserved_for_output;
    b.context_budget =
        window_total - reserved_for_function - reserved_for_instructions - reserved_for_output;
    b.validate();
    return b;
}

void TokenBudget::validate() const {
    if (window_total <= 0)
        throw Error(ErrorCode::Config, "token window must be positive");
    if (reserved_for_function < 0 || reserved_for_instructions < 0 || reserved_for_output < 0)
        throw Error(ErrorCode::Config, "token reservations must be non-negative");
    if (context_budget < 0)
        throw Error(ErrorCode::Config,
                    "reservations exceed the window; context budget is negative");
    if (context_budget !=
        window_total - reserved_for_function - reserved_for_instructions - reserved_for_output)
        throw Error(ErrorCode::Config, "context budget does not match the reservations");
}

// --- rendering ---------------------------------------------------------------

namespace {

// Keeps model-authored text from terminating the surrounding comment block.
std::string comment_safe(std::string text) {
    for (std::size_t at = text.find("*/"); at != std::string::npos; at = text.find("*/", at))
        text.replace(at, 2, "* /");
    for (auto& c : text)
        if (c == '\n') c = ' ';
    return text;
}

std::string profile_line(const SecurityProfile& profile) {
    using namespace profiling;
    if (profile.caller_fields) {
        const auto& c = *profile.caller_fields;
        return std::string("data_origin=") + data_origin_name(c.data_origin) +
               "; data_transformations=" + data_transformations_name(c.data_transformations) +
               "; return_value_usage=" + comment_safe(c.return_value_usage);
    }
    if (profile.callee_fields) {
        const auto& c = *profile.callee_fields;
        return std::string("risk_level=") + risk_level_name(c.risk_level) +
               "; justification=" + comment_safe(c.justification);
    }
    const auto& g = *profile.global_fields;
    return "role=" + comment_safe(g.role) +
           "; security_implications=" + comment_safe(g.security_implications);
}

std::string element_heading(const ContextElement& element) {
    std::string head = std::string(element_kind_name(element.kind)) + " " + element.name;
    if (!element.file_path.empty()) head += " (" + element.file_path + ")";
    else if (element.is_extern) head += " (external)";
    return head;
}

std::string with_trailing_newline(std::string text) {
    if (text.empty() || text.back() != '\n') text += '\n';
    return text;
}

}  // namespace

std::string render_element(const ScoredContext& sc) {
    sc.profile.validate();
    std::string out = "/* " + element_heading(sc.element) + "\n";
    out += " * profile: " + profile_line(sc.profile) + "\n";
    out += " */\n";
    out += with_trailing_newline(sc.element.source);
    return out;
}

std::string render_raw_element(const ContextElement& element) {
    return "/* " + element_heading(element) + " */\n" + with_trailing_newline(element.source);
}

// --- bundles -------------------------------------------------------------------

json ContextBundle::to_json() const {
    json j;
    j["target"] = repo_store::function_ref_to_json(target);
    j["selected"] = json::array();
    for (const auto& sc : selected) {
        j["selected"].push_back({
            {"element", context_graph::element_to_json(sc.element)},
            {"profile", sc.profile.to_json()},
            {"relevance", sc.relevance},
        });
    }
    j["rendered"] = rendered;
    j["total_context_tokens"] = total_context_tokens;
    j["dropped"] = json::array();
    for (const auto& d : dropped) {
        j["dropped"].push_back({
            {"kind", element_kind_name(d.key.kind)},
            {"name", d.key.name},
            {"file_path", d.key.file_path},
            {"relevance", d.relevance},
            {"reason", d.reason},
        });
    }
    return j;
}

ContextBundle ContextBundle::from_json(const json& j) {
    ContextBundle b;
    b.target = repo_store::function_ref_from_json(j.at("target"));
    for (const auto& item : j.at("selected")) {
        ScoredContext sc;
        sc.element = context_graph::element_from_json(item.at("element"));
        sc.profile = SecurityProfile::from_json(item.at("profile"));
        sc.relevance = item.at("relevance").get<double>();
        b.selected.push_back(std::move(sc));
    }
    b.rendered = j.at("rendered").get<std::vector<std::string>>();
    if (b.rendered.size() != b.selected.size())
        throw Error(ErrorCode::Schema, "bundle rendered/selected lists differ in length");
    b.total_context_tokens = j.at("total_context_tokens").get<long long>();
    for (const auto& item : j.at("dropped")) {
        DroppedElement d;
        d.key.kind = context_graph::element_kind_from(item.at("kind").get<std::string>());
        d.key.name = item.at("name").get<std::string>();
        d.key.file_path = item.at("file_path").get<std::string>();
        d.relevance = item.at("relevance").get<double>();
        d.reason = item.at("reason").get<std::string>();
        b.dropped.push_back(std::move(d));
    }
    return b;
}

// --- selection -----------------------------------------------------------------

ContextBundle select_context(const FunctionRef& target,
                             const std::vector<ScoredContext>& ranked,
                             const TokenBudget& budget, const TokenizerConfig& tokenizer,
                             const SelectionOptions& options) {
    budget.validate();
    for (std::size_t i = 1; i < ranked.size(); ++i) {
        if (profiling::scored_order(ranked[i], ranked[i - 1]))
            throw Error(ErrorCode::Config, "ranked context is not sorted by relevance");
    }

    ContextBundle bundle;
    bundle.target = target;
    for (const auto& sc : ranked) {
        if (sc.relevance < options.relevance_floor) {
            bundle.dropped.push_back({key_of(sc.element), sc.relevance, "low_relevance"});
            continue;
        }
        std::string text = render_element(sc);
        long long cost = count_tokens(text, tokenizer);
        if (bundle.total_context_tokens + cost <= budget.context_budget) {
            bundle.selected.push_back(sc);
            bundle.rendered.push_back(std::move(text));
            bundle.total_context_tokens += cost;
        } else {
            bundle.dropped.push_back({key_of(sc.element), sc.relevance, "budget"});
        }
    }
    return bundle;
}

ContextBundle pack_raw(const FunctionRef& target, const std::vector<ContextElement>& elements,
                       const TokenBudget& budget, const TokenizerConfig& tokenizer) {
    budget.validate();
    ContextBundle bundle;
    bundle.target = target;
    for (const auto& element : elements) {
        std::string text = render_raw_element(element);
        long long cost = count_tokens(text, tokenizer);
        if (bundle.total_context_tokens + cost <= budget.context_budget) {
            ScoredContext sc;
            sc.element = element;
            sc.profile = profiling::placeholder_profile(element);
            sc.relevance = 0.0;
            bundle.selected.push_back(std::move(sc));
            bundle.rendered.push_back(std::move(text));
            bundle.total_context_tokens += cost;
        } else {
            bundle.dropped.push_back({key_of(element), 0.0, "budget"});
        }
    }
    return bundle;
}

}  // namespace ctxvul::selection
