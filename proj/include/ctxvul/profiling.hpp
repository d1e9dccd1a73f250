#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxvul/context_graph.hpp"
#include "ctxvul/llm_client.hpp"
#include "ctxvul/repo_store.hpp"
#include "ctxvul/templates.hpp"

namespace ctxvul::profiling {

using context_graph::ContextElement;
using context_graph::Diagnostic;
using context_graph::ElementKey;
using context_graph::ElementKind;
using repo_store::FunctionRef;

// --- profile schema --------------------------------------------------------

enum class DataOrigin { UserInput, Network, File, Environment, Internal, Unknown };
enum class DataTransformations { Sanitized, Validated, RawUnvalidated, Unknown };
enum class RiskLevel { High, Medium, Low };

const char* data_origin_name(DataOrigin v);
const char* data_transformations_name(DataTransformations v);
const char* risk_level_name(RiskLevel v);
DataOrigin data_origin_from(std::string_view name);
DataTransformations data_transformations_from(std::string_view name);
RiskLevel risk_level_from(std::string_view name);

/// Free-text profile fields are clipped to this length.
inline constexpr std::size_t kMaxProfileText = 400;

struct CallerProfile {
    DataOrigin data_origin = DataOrigin::Unknown;
    DataTransformations data_transformations = DataTransformations::Unknown;
    std::string return_value_usage;

    bool operator==(const CallerProfile&) const = default;
};

struct CalleeProfile {
    RiskLevel risk_level = RiskLevel::Low;
    std::string justification;

    bool operator==(const CalleeProfile&) const = default;
};

struct GlobalProfile {
    std::string role;
    std::string security_implications;

    bool operator==(const GlobalProfile&) const = default;
};

/// Security-focused summary of one context element. Exactly one variant is
/// present and it matches element_key.kind.
struct SecurityProfile {
    ElementKey element_key;
    std::optional<CallerProfile> caller_fields;
    std::optional<CalleeProfile> callee_fields;
    std::optional<GlobalProfile> global_fields;

    void validate() const;
    nlohmann::json to_json() const;
    static SecurityProfile from_json(const nlohmann::json& j);

    bool operator==(const SecurityProfile&) const = default;
};

struct ScoredContext {
    ContextElement element;
    SecurityProfile profile;
    double relevance = 0.0;  // in [0, 10]

    bool operator==(const ScoredContext&) const = default;
};

// --- operations --------------------------------------------------------------

struct ProfilingOptions {
    std::string model = "profile-model";
    double temperature = 0.0;
    int ranking_window_tokens = 8000;  // splits ranking batches
    bool rank_sees_element_source = false;
    double default_score = 5.0;  // after a failed corrective re-prompt
    double score_floor = 0.0;    // clamp lower bound
};

struct ProfileOutcome {
    SecurityProfile profile;
    bool unprofiled = false;  // placeholder profile; force relevance to 0
    std::vector<Diagnostic> diagnostics;
};

/// Kind-matching profile with Unknown/Low enums and "(unprofiled)" texts.
/// Stands in when profiling failed or was disabled.
SecurityProfile placeholder_profile(const ContextElement& element);

/// Asks the model for a structured profile of one element. A malformed
/// response gets one corrective re-prompt; a second failure yields a
/// placeholder profile flagged unprofiled.
ProfileOutcome profile_element(const ContextElement& element, const FunctionRef& target,
                               llm::Client& client, const TemplateSet& templates,
                               const ProfilingOptions& options = {});

struct RankOutcome {
    std::vector<ScoredContext> scored;  // permutation of the input, sorted
    std::vector<Diagnostic> diagnostics;
};

/// Scores every profiled element's relevance to the target in [0, 10] and
/// sorts by (relevance desc, kind Caller<Callee<GlobalVariable, name, file).
/// Batches split when the rendered prompt would exceed the ranking window.
RankOutcome rank_elements(const FunctionRef& target,
                          const std::vector<std::pair<ContextElement, SecurityProfile>>& profiles,
                          llm::Client& client, const TemplateSet& templates,
                          const ProfilingOptions& options = {});

/// The ordering rank_elements emits; exposed so callers can merge lists.
bool scored_order(const ScoredContext& a, const ScoredContext& b);

}  // namespace ctxvul::profiling
