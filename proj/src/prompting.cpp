#include "ctxvul/prompting.hpp"

#include <cmath>

#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul::prompting {

namespace {

constexpr const char* kJsonInstruction = "Respond with only the JSON below.";

std::string trim_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

std::string or_none(std::string s) { return s.empty() ? std::string("(none)") : s; }

/// Rendered bundle blocks joined by one blank line.
std::string context_block(const ContextBundle& bundle) {
    std::vector<std::string> blocks;
    blocks.reserve(bundle.rendered.size());
    for (const auto& text : bundle.rendered) blocks.push_back(trim_trailing_newlines(text));
    return join(blocks, "\n\n");
}

std::string neutralize_comment_close(std::string s) {
    std::size_t at = 0;
    while ((at = s.find("*/", at)) != std::string::npos) {
        s.replace(at, 2, "* /");
        at += 3;
    }
    return s;
}

/// Wraps one rendered element block into a single block comment that cannot
/// close early, for insertion inside the target function's body.
std::string as_comment_block(const std::string& rendered) {
    std::string out = "/*\n";
    for (const auto& line : split(trim_trailing_newlines(rendered), '\n')) {
        out += " * ";
        out += neutralize_comment_close(line);
        out += '\n';
    }
    out += " */";
    return out;
}

/// The function body with each element's comment block directly above its
/// first call-site line. Elements without a call site inside the target
/// (callers, globals) lead the function.
std::string comments_content(const FunctionRef& target, const ContextBundle& bundle) {
    std::vector<std::string> lines = split(trim_trailing_newlines(target.source), '\n');
    std::vector<std::string> leading;
    std::vector<std::vector<std::string>> before(lines.size());
    for (std::size_t i = 0; i < bundle.selected.size(); ++i) {
        const auto& element = bundle.selected[i].element;
        int anchor = -1;
        for (int site : element.call_sites) {
            if (site < target.start_line || site > target.end_line) continue;
            int idx = site - target.start_line;
            if (idx >= static_cast<int>(lines.size())) idx = static_cast<int>(lines.size()) - 1;
            if (anchor < 0 || idx < anchor) anchor = idx;
        }
        std::string block = as_comment_block(bundle.rendered[i]);
        if (anchor < 0) leading.push_back(std::move(block));
        else before[static_cast<std::size_t>(anchor)].push_back(std::move(block));
    }
    std::string out;
    for (const auto& block : leading) {
        out += block;
        out += '\n';
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        for (const auto& block : before[i]) {
            out += block;
            out += '\n';
        }
        out += lines[i];
        if (i + 1 < lines.size()) out += '\n';
    }
    return out;
}

std::string detection_content(const FunctionRef& target, const ContextBundle& bundle,
                              IntegrationStrategy strategy) {
    std::string function_text = trim_trailing_newlines(target.source);
    if (bundle.rendered.empty()) return function_text;  // function-only baseline
    switch (strategy) {
        case IntegrationStrategy::InsertBefore:
            return context_block(bundle) + "\n\n" + function_text;
        case IntegrationStrategy::InsertAfter:
            return function_text + "\n\n" + context_block(bundle);
        case IntegrationStrategy::AsComments:
            return comments_content(target, bundle);
    }
    throw Error(ErrorCode::Config, "unhandled integration strategy");
}

const nlohmann::json& require_field(const nlohmann::json& j, const char* name) {
    if (!j.contains(name))
        throw Error(ErrorCode::Schema, std::string("missing field '") + name + "'");
    return j.at(name);
}

std::string require_text(const nlohmann::json& j, const char* name) {
    const auto& v = require_field(j, name);
    if (!v.is_string())
        throw Error(ErrorCode::Schema, std::string("field '") + name + "' must be a string");
    std::string s = v.get<std::string>();
    if (s.empty())
        throw Error(ErrorCode::Schema, std::string("field '") + name + "' is empty");
    return s;
}

bool require_bool(const nlohmann::json& j, const char* name) {
    const auto& v = require_field(j, name);
    if (!v.is_boolean())
        throw Error(ErrorCode::Schema, std::string("field '") + name + "' must be a boolean");
    return v.get<bool>();
}

double require_confidence(const nlohmann::json& j) {
    const auto& v = require_field(j, "confidence_score");
    if (!v.is_number())
        throw Error(ErrorCode::Schema, "field 'confidence_score' must be a number");
    double score = v.get<double>();
    if (!std::isfinite(score) || score < 0.0 || score > 10.0)
        throw Error(ErrorCode::Schema,
                    "field 'confidence_score' out of range [0, 10]: " + v.dump());
    return score;
}

}  // namespace

const char* strategy_name(IntegrationStrategy v) {
    switch (v) {
        case IntegrationStrategy::InsertBefore: return "insert_before";
        case IntegrationStrategy::InsertAfter: return "insert_after";
        case IntegrationStrategy::AsComments: return "as_comments";
    }
    return "insert_before";
}

IntegrationStrategy strategy_from_name(const std::string& name) {
    if (name == "insert_before") return IntegrationStrategy::InsertBefore;
    if (name == "insert_after") return IntegrationStrategy::InsertAfter;
    if (name == "as_comments") return IntegrationStrategy::AsComments;
    throw Error(ErrorCode::Config, "unknown integration strategy '" + name + "'");
}

void ReasoningTrace::validate() const {
    auto need = [](const std::string& value, const char* name) {
        if (value.empty())
            throw Error(ErrorCode::Schema, std::string("field '") + name + "' is empty");
    };
    need(observation, "observation");
    need(security_reasoning, "security_reasoning");
    need(impact, "impact");
    if (!std::isfinite(confidence_score) || confidence_score < 0.0 || confidence_score > 10.0)
        throw Error(ErrorCode::Schema, "field 'confidence_score' out of range [0, 10]");
}

std::string render_trace(const ReasoningTrace& trace) {
    trace.validate();
    nlohmann::ordered_json j;
    j["observation"] = trace.observation;
    j["security_reasoning"] = trace.security_reasoning;
    j["impact"] = trace.impact;
    j["is_vulnerable"] = trace.is_vulnerable;
    j["confidence_score"] = trace.confidence_score;
    return j.dump(2);
}

ReasoningTrace parse_trace(const std::string& text, std::optional<bool> expected_label) {
    nlohmann::json j = extract_first_json_object(text);
    ReasoningTrace trace;
    trace.observation = require_text(j, "observation");
    trace.security_reasoning = require_text(j, "security_reasoning");
    trace.impact = require_text(j, "impact");
    trace.is_vulnerable = require_bool(j, "is_vulnerable");
    trace.confidence_score = require_confidence(j);
    if (expected_label && trace.is_vulnerable != *expected_label)
        throw Error(ErrorCode::LabelMismatch,
                    std::string("trace says is_vulnerable=") +
                        (trace.is_vulnerable ? "true" : "false") + " but the record label is " +
                        (*expected_label ? "true" : "false"));
    return trace;
}

std::string render_verdict(const Verdict& verdict) {
    nlohmann::ordered_json j;
    j["is_vulnerable"] = verdict.is_vulnerable;
    j["confidence_score"] = verdict.confidence_score;
    return j.dump(2);
}

Verdict parse_verdict(const std::string& text) {
    nlohmann::json j = extract_first_json_object(text);
    Verdict v;
    v.is_vulnerable = require_bool(j, "is_vulnerable");
    v.confidence_score = require_confidence(j);
    if (j.contains("observation") && j.contains("security_reasoning") && j.contains("impact")) {
        try {
            v.raw_trace = parse_trace(text);
        } catch (const Error&) {
            // verdict fields were valid; a broken trace is not fatal here
        }
    }
    return v;
}

llm::ChatRequest build_reasoning_prompt(const dataset::DatasetRecord& record,
                                        const ContextBundle& bundle, bool label,
                                        const TemplateSet& templates,
                                        const PromptOptions& options) {
    const std::string& tpl = label ? templates.reasoning_vulnerable : templates.reasoning_benign;
    std::size_t at = tpl.find(kJsonInstruction);
    if (at == std::string::npos)
        throw Error(ErrorCode::Config,
                    std::string("reasoning template lacks the line \"") + kJsonInstruction + "\"");

    std::string cve_text;
    if (record.cve_id) cve_text = *record.cve_id;
    if (record.cve_description && !record.cve_description->empty()) {
        if (!cve_text.empty()) cve_text += ": ";
        cve_text += *record.cve_description;
    }

    std::string sections;
    sections += "Code Diff:\n" + or_none(trim_trailing_newlines(record.diff)) + "\n\n";
    sections += "CVE Description:\n" + or_none(trim_trailing_newlines(cve_text)) + "\n\n";
    sections += "CWE Information:\n" + or_none(join(record.cwe_ids, ", ")) + "\n\n";
    sections +=
        "Commit Message:\n" + or_none(trim_trailing_newlines(record.commit_message)) + "\n\n";
    sections += "Additional Context:\n" + or_none(context_block(bundle)) + "\n\n";

    llm::ChatRequest request;
    request.model = options.model;
    request.temperature = options.temperature;
    request.max_output_tokens = options.max_output_tokens;
    request.user = tpl.substr(0, at) + sections + tpl.substr(at);
    return request;
}

llm::ChatRequest build_detection_prompt(const FunctionRef& target, const ContextBundle& bundle,
                                        IntegrationStrategy strategy,
                                        const TemplateSet& templates,
                                        const PromptOptions& options) {
    const std::string& tpl = options.binary_verdict ? templates.detect_binary : templates.detect;
    llm::ChatRequest request;
    request.model = options.model;
    request.temperature = options.temperature;
    request.max_output_tokens = options.max_output_tokens;
    request.user =
        render_template(tpl, {{"content", detection_content(target, bundle, strategy)}});
    return request;
}

DetectOutcome detect(const FunctionRef& target, const ContextBundle& bundle,
                     IntegrationStrategy strategy, llm::Client& client,
                     const TemplateSet& templates, const DetectOptions& options) {
    PromptOptions prompt_options;
    prompt_options.model = options.model;
    prompt_options.temperature = options.temperature;
    prompt_options.max_output_tokens = options.max_output_tokens;
    prompt_options.binary_verdict = options.binary_verdict;

    llm::ChatRequest request =
        build_detection_prompt(target, bundle, strategy, templates, prompt_options);

    DetectOutcome outcome;
    std::string parse_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        llm::ChatRequest current = request;
        if (attempt == 1) {
            current.user += "\n\nYour previous response was invalid: " + parse_error +
                            "\nRespond with only the JSON requested above.";
        }
        llm::ChatResponse response = client.complete(current);
        try {
            outcome.verdict = parse_verdict(response.text);
            return outcome;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Parse && e.code() != ErrorCode::Schema) throw;
            parse_error = e.what();
        }
    }
    outcome.verdict = Verdict{true, 0.0, std::nullopt};
    outcome.diagnostics.push_back(
        {target.file_path, target.start_line,
         "unparseable detection response for " + target.name + " (" + parse_error +
             "); recording the conservative default verdict"});
    return outcome;
}

}  // namespace ctxvul::prompting
