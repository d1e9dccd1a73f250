#pragma once

/** @file
 * Prompt assembly and model-output parsing for the training and inference
 * sides: reasoning-trace prompts carry record metadata, detection prompts
 * carry only the target function and its selected context.
 */

#include <optional>
#include <string>
#include <vector>

#include "ctxvul/llm_client.hpp"
#include "ctxvul/record.hpp"
#include "ctxvul/selection.hpp"
#include "ctxvul/templates.hpp"

namespace ctxvul::prompting {

using context_graph::Diagnostic;
using repo_store::FunctionRef;
using selection::ContextBundle;

// --- integration strategies --------------------------------------------------

/// Where the context block lands relative to the target function.
///  - InsertBefore: one contiguous context block, then the function.
///  - InsertAfter: the function, then the same context block.
///  - AsComments: each element becomes a comment block inside the function,
///    anchored directly above its first call-site line; elements without an
///    in-range call site (callers, globals) lead the function.
enum class IntegrationStrategy { InsertBefore, InsertAfter, AsComments };

const char* strategy_name(IntegrationStrategy v);
IntegrationStrategy strategy_from_name(const std::string& name);

// --- structured outputs --------------------------------------------------

struct ReasoningTrace {
    std::string observation;
    std::string security_reasoning;
    std::string impact;
    bool is_vulnerable = false;
    double confidence_score = 0.0;

    /// Texts non-empty, confidence within [0, 10]. Schema errors name the field.
    void validate() const;

    bool operator==(const ReasoningTrace&) const = default;
};

/// Canonical JSON text with a fixed field order. parse_trace inverts it.
std::string render_trace(const ReasoningTrace& trace);

/// Extracts the first balanced JSON object from model output and validates
/// every field. When expected_label is given, a disagreeing is_vulnerable
/// raises LabelMismatch; malformed JSON raises Parse with an offset.
ReasoningTrace parse_trace(const std::string& text, std::optional<bool> expected_label = {});

struct Verdict {
    bool is_vulnerable = false;
    double confidence_score = 0.0;
    std::optional<ReasoningTrace> raw_trace;
};

/// The two-field JSON used for label-only training outputs.
std::string render_verdict(const Verdict& verdict);

/// Lenient counterpart of parse_trace: requires only is_vulnerable and
/// confidence_score, attaching the full trace when the response carries one.
Verdict parse_verdict(const std::string& text);

// --- prompt assembly -------------------------------------------------------

struct PromptOptions {
    std::string model = "trace-model";
    double temperature = 0.0;
    int max_output_tokens = 2048;
    /// Detection only: ask for the two-field verdict instead of the full
    /// reasoning schema. Used by runs that skip reasoning supervision.
    bool binary_verdict = false;
};

/// Training-time prompt. The family template selected by `label` gains the
/// record's code diff, CVE description, CWE list, commit message, and the
/// rendered context bundle, inserted in that order ahead of the JSON
/// instruction. Sections with nothing to show read "(none)".
llm::ChatRequest build_reasoning_prompt(const dataset::DatasetRecord& record,
                                        const ContextBundle& bundle, bool label,
                                        const TemplateSet& templates,
                                        const PromptOptions& options = {});

/// Inference-time prompt under one integration strategy. Contains only the
/// target source and the bundle's rendered blocks; record metadata (diff,
/// CVE, CWE, commit message) never enters. An empty bundle degenerates to
/// the function-only baseline prompt for every strategy.
llm::ChatRequest build_detection_prompt(const FunctionRef& target, const ContextBundle& bundle,
                                        IntegrationStrategy strategy,
                                        const TemplateSet& templates,
                                        const PromptOptions& options = {});

// --- detection ---------------------------------------------------------------

struct DetectOptions {
    std::string model = "detect-model";
    double temperature = 0.0;
    int max_output_tokens = 1024;
    bool binary_verdict = false;
};

struct DetectOutcome {
    Verdict verdict;
    std::vector<Diagnostic> diagnostics;
};

/// Builds the detection prompt, completes it, and parses the verdict. A
/// parse failure triggers one corrective re-prompt; a second failure yields
/// the conservative default Verdict{is_vulnerable=true, confidence=0} with a
/// diagnostic. Client errors propagate.
DetectOutcome detect(const FunctionRef& target, const ContextBundle& bundle,
                     IntegrationStrategy strategy, llm::Client& client,
                     const TemplateSet& templates, const DetectOptions& options = {});

}  // namespace ctxvul::prompting
