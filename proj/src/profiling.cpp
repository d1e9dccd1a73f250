#include "ctxvul/profiling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul::profiling {

using context_graph::AccessMode;
using context_graph::element_kind_name;
using nlohmann::json;

// --- enum names --------------------------------------------------------------

const char* data_origin_name(DataOrigin v) {
    switch (v) {
        case DataOrigin::UserInput: return "User Input";
        case DataOrigin::Network: return "Network";
        case DataOrigin::File: return "File";
        case DataOrigin::Environment: return "Environment";
        case DataOrigin::Internal: return "Internal";
        case DataOrigin::Unknown: return "Unknown";
    }
    return "Unknown";
}

const char* data_transformations_name(DataTransformations v) {
    switch (v) {
        case DataTransformations::Sanitized: return "Sanitized";
        case DataTransformations::Validated: return "Validated";
        case DataTransformations::RawUnvalidated: return "Raw/Unvalidated";
        case DataTransformations::Unknown: return "Unknown";
    }
    return "Unknown";
}

const char* risk_level_name(RiskLevel v) {
    switch (v) {
        case RiskLevel::High: return "High";
        case RiskLevel::Medium: return "Medium";
        case RiskLevel::Low: return "Low";
    }
    return "Low";
}

DataOrigin data_origin_from(std::string_view name) {
    if (name == "User Input") return DataOrigin::UserInput;
    if (name == "Network") return DataOrigin::Network;
    if (name == "File") return DataOrigin::File;
    if (name == "Environment") return DataOrigin::Environment;
    if (name == "Internal") return DataOrigin::Internal;
    if (name == "Unknown") return DataOrigin::Unknown;
    throw Error(ErrorCode::Schema, "unknown data_origin value '" + std::string(name) + "'");
}

DataTransformations data_transformations_from(std::string_view name) {
    if (name == "Sanitized") return DataTransformations::Sanitized;
    if (name == "Validated") return DataTransformations::Validated;
    if (name == "Raw/Unvalidated") return DataTransformations::RawUnvalidated;
    if (name == "Unknown") return DataTransformations::Unknown;
    throw Error(ErrorCode::Schema,
                "unknown data_transformations value '" + std::string(name) + "'");
}

RiskLevel risk_level_from(std::string_view name) {
    if (name == "High") return RiskLevel::High;
    if (name == "Medium") return RiskLevel::Medium;
    if (name == "Low") return RiskLevel::Low;
    throw Error(ErrorCode::Schema, "unknown risk_level value '" + std::string(name) + "'");
}

// --- SecurityProfile ---------------------------------------------------------

void SecurityProfile::validate() const {
    int present = (caller_fields ? 1 : 0) + (callee_fields ? 1 : 0) + (global_fields ? 1 : 0);
    if (present != 1)
        throw Error(ErrorCode::Schema, "profile for '" + element_key.name +
                                           "' must carry exactly one variant, has " +
                                           std::to_string(present));
    bool matches = (element_key.kind == ElementKind::Caller && caller_fields) ||
                   (element_key.kind == ElementKind::Callee && callee_fields) ||
                   (element_key.kind == ElementKind::GlobalVariable && global_fields);
    if (!matches)
        throw Error(ErrorCode::Schema, "profile variant does not match element kind for '" +
                                           element_key.name + "'");
    auto check_len = [&](const std::string& text, const char* field) {
        if (text.size() > kMaxProfileText)
            throw Error(ErrorCode::Schema, std::string(field) + " exceeds " +
                                               std::to_string(kMaxProfileText) + " characters");
    };
    if (caller_fields) check_len(caller_fields->return_value_usage, "return_value_usage");
    if (callee_fields) check_len(callee_fields->justification, "justification");
    if (global_fields) {
        check_len(global_fields->role, "role");
        check_len(global_fields->security_implications, "security_implications");
    }
}

json SecurityProfile::to_json() const {
    json j;
    j["kind"] = element_kind_name(element_key.kind);
    j["name"] = element_key.name;
    j["file_path"] = element_key.file_path;
    if (caller_fields) {
        j["caller"] = {
            {"data_origin", data_origin_name(caller_fields->data_origin)},
            {"data_transformations",
             data_transformations_name(caller_fields->data_transformations)},
            {"return_value_usage", caller_fields->return_value_usage},
        };
    }
    if (callee_fields) {
        j["callee"] = {
            {"risk_level", risk_level_name(callee_fields->risk_level)},
            {"justification", callee_fields->justification},
        };
    }
    if (global_fields) {
        j["global"] = {
            {"role", global_fields->role},
            {"security_implications", global_fields->security_implications},
        };
    }
    return j;
}

SecurityProfile SecurityProfile::from_json(const json& j) {
    SecurityProfile p;
    p.element_key.kind = context_graph::element_kind_from(j.at("kind").get<std::string>());
    p.element_key.name = j.at("name").get<std::string>();
    p.element_key.file_path = j.at("file_path").get<std::string>();
    if (j.contains("caller")) {
        CallerProfile c;
        c.data_origin = data_origin_from(j["caller"].at("data_origin").get<std::string>());
        c.data_transformations = data_transformations_from(
            j["caller"].at("data_transformations").get<std::string>());
        c.return_value_usage = j["caller"].at("return_value_usage").get<std::string>();
        p.caller_fields = std::move(c);
    }
    if (j.contains("callee")) {
        CalleeProfile c;
        c.risk_level = risk_level_from(j["callee"].at("risk_level").get<std::string>());
        c.justification = j["callee"].at("justification").get<std::string>();
        p.callee_fields = std::move(c);
    }
    if (j.contains("global")) {
        GlobalProfile g;
        g.role = j["global"].at("role").get<std::string>();
        g.security_implications = j["global"].at("security_implications").get<std::string>();
        p.global_fields = std::move(g);
    }
    p.validate();
    return p;
}

// --- profile_element ---------------------------------------------------------

namespace {

std::string join_lines(const std::vector<int>& lines) {
    std::string out;
    for (int l : lines) {
        if (!out.empty()) out += ", ";
        out += std::to_string(l);
    }
    return out.empty() ? std::string("unknown") : out;
}

std::string access_phrase(const ContextElement& element) {
    if (!element.access_mode) return "used";
    switch (*element.access_mode) {
        case AccessMode::Read: return "read";
        case AccessMode::Write: return "written";
        case AccessMode::ReadWrite: return "read and written";
    }
    return "used";
}

std::string clip_text(std::string text, const ContextElement& element,
                      std::vector<Diagnostic>& diagnostics) {
    if (text.size() <= kMaxProfileText) return text;
    diagnostics.push_back({element.file_path, 0,
                           "profile text for '" + element.name + "' clipped to " +
                               std::to_string(kMaxProfileText) + " characters"});
    text.resize(kMaxProfileText);
    return text;
}

std::string require_string(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_string())
        throw Error(ErrorCode::Schema, std::string("response is missing field ") + field);
    return j[field].get<std::string>();
}

SecurityProfile parse_profile(const std::string& text, const ContextElement& element,
                              std::vector<Diagnostic>& diagnostics) {
    json j = extract_first_json_object(text);
    SecurityProfile p;
    p.element_key = context_graph::key_of(element);
    switch (element.kind) {
        case ElementKind::Caller: {
            CallerProfile c;
            c.data_origin = data_origin_from(require_string(j, "data_origin"));
            c.data_transformations =
                data_transformations_from(require_string(j, "data_transformations"));
            c.return_value_usage =
                clip_text(require_string(j, "return_value_usage"), element, diagnostics);
            p.caller_fields = std::move(c);
            break;
        }
        case ElementKind::Callee: {
            CalleeProfile c;
            c.risk_level = risk_level_from(require_string(j, "risk_level"));
            c.justification = clip_text(require_string(j, "justification"), element, diagnostics);
            p.callee_fields = std::move(c);
            break;
        }
        case ElementKind::GlobalVariable: {
            GlobalProfile g;
            g.role = clip_text(require_string(j, "role"), element, diagnostics);
            g.security_implications =
                clip_text(require_string(j, "security_implications"), element, diagnostics);
            p.global_fields = std::move(g);
            break;
        }
    }
    p.validate();
    return p;
}

constexpr const char* kCorrectiveSuffix =
    "\nRespond with only the JSON requested above.";

}  // namespace

SecurityProfile placeholder_profile(const ContextElement& element) {
    SecurityProfile p;
    p.element_key = context_graph::key_of(element);
    switch (element.kind) {
        case ElementKind::Caller:
            p.caller_fields = CallerProfile{DataOrigin::Unknown, DataTransformations::Unknown,
                                            "(unprofiled)"};
            break;
        case ElementKind::Callee:
            p.callee_fields = CalleeProfile{RiskLevel::Low, "(unprofiled)"};
            break;
        case ElementKind::GlobalVariable:
            p.global_fields = GlobalProfile{"(unprofiled)", "(unprofiled)"};
            break;
    }
    return p;
}

ProfileOutcome profile_element(const ContextElement& element, const FunctionRef& target,
                               llm::Client& client, const TemplateSet& templates,
                               const ProfilingOptions& options) {
    if (element.source.empty())
        throw Error(ErrorCode::Config, "cannot profile element '" + element.name +
                                           "' with empty source");

    std::map<std::string, std::string> vars = {
        {"target_source", target.source},
        {"element_name", element.name},
        {"element_file", element.file_path.empty() ? "an external library" : element.file_path},
        {"element_source", element.source},
        {"call_sites", join_lines(element.call_sites)},
        {"access_mode", access_phrase(element)},
    };
    const std::string* tmpl = nullptr;
    switch (element.kind) {
        case ElementKind::Caller: tmpl = &templates.profile_caller; break;
        case ElementKind::Callee: tmpl = &templates.profile_callee; break;
        case ElementKind::GlobalVariable: tmpl = &templates.profile_global; break;
    }

    llm::ChatRequest request;
    request.model = options.model;
    request.temperature = options.temperature;
    request.user = render_template(*tmpl, vars);

    ProfileOutcome outcome;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string text;
        try {
            text = client.complete(request).text;
            outcome.profile = parse_profile(text, element, outcome.diagnostics);
            outcome.unprofiled = false;
            return outcome;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Parse && e.code() != ErrorCode::Schema) throw;
            outcome.diagnostics.push_back(
                {element.file_path, 0,
                 "profile attempt " + std::to_string(attempt + 1) + " for '" + element.name +
                     "' failed: " + e.what()});
            request.user += "\n\nYour previous response was invalid: ";
            request.user += e.what();
            request.user += kCorrectiveSuffix;
        }
    }
    outcome.profile = placeholder_profile(element);
    outcome.unprofiled = true;
    outcome.diagnostics.push_back({element.file_path, 0,
                                   "element '" + element.name +
                                       "' proceeds unprofiled; relevance forced to 0"});
    return outcome;
}

// --- rank_elements -----------------------------------------------------------

namespace {

long long approx_tokens(std::size_t bytes) {
    return static_cast<long long>((bytes + 3) / 4);
}

json profile_payload(const SecurityProfile& profile) {
    json j = profile.to_json();
    json entry;
    if (j.contains("caller")) entry = j["caller"];
    else if (j.contains("callee")) entry = j["callee"];
    else entry = j["global"];
    return entry;
}

// Returns id -> score for one response text; throws on malformed output.
std::map<int, double> parse_scores(const std::string& text) {
    json j = extract_first_json_object(text);
    if (!j.contains("scores") || !j["scores"].is_array())
        throw Error(ErrorCode::Schema, "response is missing field scores");
    std::map<int, double> out;
    for (const auto& row : j["scores"]) {
        if (!row.is_object() || !row.contains("id") || !row.contains("score") ||
            !row["id"].is_number_integer() || !row["score"].is_number())
            throw Error(ErrorCode::Schema, "scores entries must be {id, score} objects");
        out[row["id"].get<int>()] = row["score"].get<double>();
    }
    return out;
}

}  // namespace

bool scored_order(const ScoredContext& a, const ScoredContext& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    if (a.element.kind != b.element.kind)
        return static_cast<int>(a.element.kind) < static_cast<int>(b.element.kind);
    if (a.element.name != b.element.name) return a.element.name < b.element.name;
    return a.element.file_path < b.element.file_path;
}

RankOutcome rank_elements(const FunctionRef& target,
                          const std::vector<std::pair<ContextElement, SecurityProfile>>& profiles,
                          llm::Client& client, const TemplateSet& templates,
                          const ProfilingOptions& options) {
    if (profiles.empty())
        throw Error(ErrorCode::Config, "rank_elements requires at least one profile");

    std::vector<json> entries(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& [element, profile] = profiles[i];
        json e;
        e["id"] = static_cast<int>(i);
        e["kind"] = element_kind_name(element.kind);
        e["name"] = element.name;
        e["file"] = element.file_path;
        e["profile"] = profile_payload(profile);
        if (options.rank_sees_element_source) e["source"] = element.source;
        entries[i] = std::move(e);
    }

    // Pack ids into batches that keep the rendered prompt under the window.
    long long base_cost =
        approx_tokens(templates.rank.size()) + approx_tokens(target.source.size());
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> current;
    long long current_cost = base_cost;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        long long cost = approx_tokens(entries[i].dump(2).size());
        if (!current.empty() && current_cost + cost > options.ranking_window_tokens) {
            batches.push_back(std::move(current));
            current.clear();
            current_cost = base_cost;
        }
        current.push_back(i);
        current_cost += cost;
    }
    if (!current.empty()) batches.push_back(std::move(current));

    RankOutcome outcome;
    std::map<int, double> scores;
    for (const auto& batch : batches) {
        json payload = json::array();
        for (std::size_t idx : batch) payload.push_back(entries[idx]);

        llm::ChatRequest request;
        request.model = options.model;
        request.temperature = options.temperature;
        request.user = render_template(templates.rank,
                                       {{"target_source", target.source},
                                        {"profiles_json", payload.dump(2)}});

        std::map<int, double> got;
        bool parsed = false;
        for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
            try {
                got = parse_scores(client.complete(request).text);
                parsed = true;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Parse && e.code() != ErrorCode::Schema) throw;
                outcome.diagnostics.push_back(
                    {target.file_path, 0,
                     "ranking attempt " + std::to_string(attempt + 1) +
                         " failed: " + e.what()});
                request.user += "\n\nYour previous response was invalid: ";
                request.user += e.what();
                request.user += kCorrectiveSuffix;
            }
        }
        std::vector<std::size_t> missing;
        for (std::size_t idx : batch) {
            auto it = got.find(static_cast<int>(idx));
            if (it != got.end()) scores[static_cast<int>(idx)] = it->second;
            else missing.push_back(idx);
        }
        if (!missing.empty() && parsed) {
            // The response parsed but skipped ids; ask once for the gaps.
            std::string ids;
            for (std::size_t idx : missing) {
                if (!ids.empty()) ids += ", ";
                ids += std::to_string(idx);
            }
            llm::ChatRequest retry = request;
            retry.user += "\n\nYour previous response had no entry for id(s): " + ids +
                          ". Return one entry per component id." + kCorrectiveSuffix;
            try {
                auto more = parse_scores(client.complete(retry).text);
                for (auto it = missing.begin(); it != missing.end();) {
                    auto found = more.find(static_cast<int>(*it));
                    if (found != more.end()) {
                        scores[static_cast<int>(*it)] = found->second;
                        it = missing.erase(it);
                    } else {
                        ++it;
                    }
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Parse && e.code() != ErrorCode::Schema) throw;
                outcome.diagnostics.push_back(
                    {target.file_path, 0,
                     std::string("ranking gap retry failed: ") + e.what()});
            }
        }
        for (std::size_t idx : missing) {
            scores[static_cast<int>(idx)] = options.default_score;
            outcome.diagnostics.push_back(
                {target.file_path, 0,
                 "no score returned for '" + profiles[idx].first.name + "'; defaulted to " +
                     format_fixed(options.default_score, 1)});
        }
    }

    outcome.scored.reserve(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        ScoredContext sc;
        sc.element = profiles[i].first;
        sc.profile = profiles[i].second;
        double raw = scores.at(static_cast<int>(i));
        double clamped = std::clamp(raw, options.score_floor, 10.0);
        if (!std::isfinite(raw)) clamped = options.default_score;
        if (clamped != raw) {
            outcome.diagnostics.push_back(
                {target.file_path, 0,
                 "score " + std::to_string(raw) + " for '" + sc.element.name +
                     "' clamped to [0, 10]"});
        }
        sc.relevance = clamped;
        outcome.scored.push_back(std::move(sc));
    }
    std::sort(outcome.scored.begin(), outcome.scored.end(), scored_order);
    return outcome;
}

}  // namespace ctxvul::profiling
