#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxvul/profiling.hpp"

namespace ctxvul::selection {

using context_graph::ContextElement;
using context_graph::ElementKey;
using profiling::ScoredContext;
using repo_store::FunctionRef;

// --- token counting ----------------------------------------------------------

/// Token counting backends:
///  - Approx: ceil(bytes / 4) plus one per maximal [A-Za-z0-9_] run. Counts
///    never shrink under concatenation on either side.
///  - Vocab: greedy longest-match against a vocabulary file with a one-token
///    byte fallback. The vocabulary must be prefix-closed (every leading
///    substring of a token is itself a token), which guarantees
///    count(a+b) >= count(a); the count(b) direction does not hold for any
///    compressive tokenizer.
struct TokenizerConfig {
    enum class Backend { Approx, Vocab };
    Backend backend = Backend::Approx;
    std::string name = "approx";
    std::filesystem::path vocab_path;  // Vocab backend only
};

/// Accepts "approx" or "vocab" (the latter requires vocab_path).
TokenizerConfig tokenizer_from_name(const std::string& name,
                                    const std::filesystem::path& vocab_path = {});

int count_tokens(const std::string& text, const TokenizerConfig& config);

// --- budgeting ---------------------------------------------------------------

/// How one model window is split. context_budget is what remains for
/// inter-procedural context once the function, instructions, and output
/// reservations are carved out.
struct TokenBudget {
    int window_total = 0;
    int reserved_for_function = 0;
    int reserved_for_instructions = 0;
    int reserved_for_output = 0;
    int context_budget = 0;

    static TokenBudget make(int window_total, int reserved_for_function,
                            int reserved_for_instructions, int reserved_for_output);
    void validate() const;
};

// --- bundles -----------------------------------------------------------------

struct DroppedElement {
    ElementKey key;
    double relevance = 0.0;
    std::string reason;  // "budget" or "low_relevance"

    bool operator==(const DroppedElement&) const = default;
};

/// The context that will actually enter a prompt for one target function.
/// rendered[i] is the exact text block for selected[i]; token accounting and
/// prompt assembly both use it, so what is counted is what is sent.
struct ContextBundle {
    FunctionRef target;
    std::vector<ScoredContext> selected;
    std::vector<std::string> rendered;
    long long total_context_tokens = 0;
    std::vector<DroppedElement> dropped;

    nlohmann::json to_json() const;
    static ContextBundle from_json(const nlohmann::json& j);

    bool operator==(const ContextBundle&) const = default;
};

struct SelectionOptions {
    double relevance_floor = 2.0;  // below: dropped before budgeting
};

/// Profile header comment plus full source (declaration for globals).
std::string render_element(const ScoredContext& sc);

/// Header comment plus source, no profile. Used when profiling is disabled.
std::string render_raw_element(const ContextElement& element);

/// Greedy descending-relevance selection under the context budget. ranked
/// must already be sorted in the profiling module's order.
ContextBundle select_context(const FunctionRef& target,
                             const std::vector<ScoredContext>& ranked,
                             const TokenBudget& budget, const TokenizerConfig& tokenizer,
                             const SelectionOptions& options = {});

/// Budget-only packing in the given (extraction) order, for runs that skip
/// profiling and ranking. Elements carry placeholder profiles, relevance 0.
ContextBundle pack_raw(const FunctionRef& target, const std::vector<ContextElement>& elements,
                       const TokenBudget& budget, const TokenizerConfig& tokenizer);

}  // namespace ctxvul::selection
