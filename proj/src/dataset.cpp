#include "ctxvul/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <tuple>

#include "ctxvul/csource.hpp"
#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul::dataset {

using nlohmann::json;

namespace {

// --- adapter field helpers -----------------------------------------------

std::string get_string(const json& row, const char* key) {
    if (!row.contains(key) || row[key].is_null()) return "";
    if (!row[key].is_string())
        throw Error(ErrorCode::Schema, std::string("field '") + key + "' must be a string");
    return row[key].get<std::string>();
}

std::string require_string(const json& row, const char* key) {
    std::string value = get_string(row, key);
    if (value.empty())
        throw Error(ErrorCode::Schema, std::string("missing field '") + key + "'");
    return value;
}

/// Upstream ids appear both as numbers and as strings.
std::string get_id(const json& row, const char* key) {
    if (!row.contains(key) || row[key].is_null())
        throw Error(ErrorCode::Schema, std::string("missing field '") + key + "'");
    const json& v = row[key];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw Error(ErrorCode::Schema, std::string("field '") + key + "' must be a string or integer");
}

/// Labels appear as booleans and as 0/1 integers.
bool get_flag(const json& row, const char* key) {
    if (!row.contains(key) || row[key].is_null())
        throw Error(ErrorCode::Schema, std::string("missing field '") + key + "'");
    const json& v = row[key];
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number_integer()) return v.get<long long>() != 0;
    throw Error(ErrorCode::Schema, std::string("field '") + key + "' must be a boolean or 0/1");
}

std::vector<std::string> get_string_list(const json& row, const char* key) {
    std::vector<std::string> out;
    if (!row.contains(key) || row[key].is_null()) return out;
    const json& v = row[key];
    if (v.is_string()) {
        if (!v.get<std::string>().empty()) out.push_back(v.get<std::string>());
        return out;
    }
    if (!v.is_array())
        throw Error(ErrorCode::Schema, std::string("field '") + key + "' must be a list");
    for (const auto& item : v) {
        if (!item.is_string())
            throw Error(ErrorCode::Schema,
                        std::string("field '") + key + "' must contain only strings");
        if (!item.get<std::string>().empty()) out.push_back(item.get<std::string>());
    }
    return out;
}

std::string function_name_from_source(const std::string& source) {
    csource::ScanResult scan = csource::scan_file(source);
    if (!scan.ok || scan.functions.empty())
        throw Error(ErrorCode::Schema, "cannot determine function name from source");
    return scan.functions[0].name;
}

// --- adapters -------------------------------------------------------------

DatasetRecord adapt_custom(const json& row) { return DatasetRecord::from_json(row); }

DatasetRecord adapt_primevul(const json& row) {
    DatasetRecord r;
    r.dataset = SourceDataset::PrimeVul;
    r.record_id = "primevul-" + get_id(row, "idx");
    r.project_url = get_string(row, "project_url");
    if (r.project_url.empty()) r.project_url = get_string(row, "project");
    r.fix_revision = require_string(row, "commit_id");
    r.vulnerable_revision = r.fix_revision + "^1";
    r.file_path = require_string(row, "file_name");
    r.label = get_flag(row, "target");
    std::string func = require_string(row, "func");
    (r.label ? r.code_before : r.code_after) = func;
    r.function_name = get_string(row, "func_name");
    if (r.function_name.empty()) r.function_name = function_name_from_source(func);
    r.commit_message = get_string(row, "commit_message");
    r.cwe_ids = get_string_list(row, "cwe");
    std::string cve = get_string(row, "cve");
    if (!cve.empty() && cve != "None") r.cve_id = cve;
    std::string desc = get_string(row, "cve_desc");
    if (!desc.empty()) r.cve_description = desc;
    return r;
}

DatasetRecord adapt_titanvul(const json& row) {
    DatasetRecord r;
    r.dataset = SourceDataset::TitanVul;
    r.record_id = "titanvul-" + get_id(row, "id");
    r.project_url = get_string(row, "project_url");
    if (r.project_url.empty()) r.project_url = get_string(row, "project");
    r.fix_revision = require_string(row, "commit_id");
    r.vulnerable_revision = get_string(row, "parent_commit_id");
    if (r.vulnerable_revision.empty()) r.vulnerable_revision = r.fix_revision + "^1";
    r.file_path = require_string(row, "file_path");
    r.code_before = get_string(row, "func_before");
    r.code_after = get_string(row, "func_after");
    r.label = get_flag(row, "vul");
    r.function_name = get_string(row, "function_name");
    if (r.function_name.empty()) {
        if (r.sample_code().empty())
            throw Error(ErrorCode::Schema,
                        r.label ? "missing field 'func_before'" : "missing field 'func_after'");
        r.function_name = function_name_from_source(r.sample_code());
    }
    r.commit_message = get_string(row, "commit_message");
    r.cwe_ids = get_string_list(row, "cwe_list");
    std::string cve = get_string(row, "cve_id");
    if (!cve.empty()) r.cve_id = cve;
    std::string desc = get_string(row, "cve_description");
    if (!desc.empty()) r.cve_description = desc;
    return r;
}

DatasetRecord adapt_cleanvul(const json& row) {
    DatasetRecord r;
    r.dataset = SourceDataset::CleanVul;
    r.record_id = "cleanvul-" + get_id(row, "id");
    r.project_url = get_string(row, "repo_url");
    if (r.project_url.empty()) r.project_url = get_string(row, "project_url");
    r.fix_revision = get_string(row, "commit_sha");
    if (r.fix_revision.empty()) r.fix_revision = require_string(row, "commit_id");
    r.vulnerable_revision = r.fix_revision + "^1";
    r.file_path = require_string(row, "file_path");
    r.code_before = get_string(row, "func_before");
    r.code_after = get_string(row, "func_after");
    r.label = get_flag(row, "label");
    r.function_name = get_string(row, "function_name");
    if (r.function_name.empty()) {
        if (r.sample_code().empty())
            throw Error(ErrorCode::Schema,
                        r.label ? "missing field 'func_before'" : "missing field 'func_after'");
        r.function_name = function_name_from_source(r.sample_code());
    }
    r.commit_message = get_string(row, "commit_message");
    // upstream rows carry no CWE annotations
    return r;
}

using Adapter = DatasetRecord (*)(const json&);

Adapter adapter_for(const std::string& format) {
    switch (source_dataset_from_name(format)) {
        case SourceDataset::PrimeVul: return adapt_primevul;
        case SourceDataset::TitanVul: return adapt_titanvul;
        case SourceDataset::CleanVul: return adapt_cleanvul;
        case SourceDataset::Custom: return adapt_custom;
    }
    throw Error(ErrorCode::Config, "unknown dataset adapter '" + format + "'");
}

// --- trace embedding -------------------------------------------------------

json trace_to_json(const ReasoningTrace& t) {
    return json::parse(prompting::render_trace(t));
}

ReasoningTrace trace_from_json(const json& j) { return prompting::parse_trace(j.dump()); }

const char* group_key(context_graph::ElementKind kind) {
    switch (kind) {
        case context_graph::ElementKind::Caller: return "callers";
        case context_graph::ElementKind::Callee: return "callees";
        case context_graph::ElementKind::GlobalVariable: return "globals";
    }
    return "callees";
}

}  // namespace

// --- loading -----------------------------------------------------------------

LoadOutcome load_source(const std::filesystem::path& path, const std::string& format) {
    Adapter adapter = adapter_for(format);
    std::string text = read_file(path);

    std::vector<std::pair<std::size_t, json>> rows;
    LoadOutcome out;

    std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        json arr;
        try {
            arr = json::parse(text);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse,
                        "invalid JSON array in " + path.string() + ": " + e.what());
        }
        for (std::size_t i = 0; i < arr.size(); ++i) rows.emplace_back(i + 1, arr[i]);
    } else {
        std::vector<std::string> lines = split(text, '\n');
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            try {
                rows.emplace_back(i + 1, json::parse(lines[i]));
            } catch (const json::exception& e) {
                out.rejected.push_back({i + 1, std::string("invalid JSON: ") + e.what()});
            }
        }
    }

    for (const auto& [row_no, row] : rows) {
        try {
            DatasetRecord r = adapter(row);
            r.validate();
            out.records.push_back(std::move(r));
        } catch (const Error& e) {
            out.rejected.push_back({row_no, e.what()});
        }
    }
    return out;
}

// --- filtering -----------------------------------------------------------

FilterResult filter_by_length(const std::vector<DatasetRecord>& records, int max_tokens,
                              const TokenizerConfig& tokenizer) {
    if (max_tokens <= 0)
        throw Error(ErrorCode::Config,
                    "max_tokens must be positive, got " + std::to_string(max_tokens));
    FilterResult result;
    for (const auto& r : records) {
        if (selection::count_tokens(r.sample_code(), tokenizer) <= max_tokens)
            result.kept.push_back(r);
        else
            result.removed.push_back(r);
    }
    return result;
}

// --- enrichment ----------------------------------------------------------

EnrichedRecord enrich(const DatasetRecord& record, ContextBundle bundle,
                      std::optional<ReasoningTrace> trace) {
    record.validate();
    if (bundle.target.name.empty()) {
        // No extracted target (for instance, a record whose repository was
        // never indexed): synthesize one from the record itself so the
        // bundle stays self-contained for prompt assembly.
        bundle.target.repo = {record.project_url, record.sample_revision()};
        bundle.target.file_path = record.file_path;
        bundle.target.name = record.function_name;
        bundle.target.source = record.sample_code();
        bundle.target.signature = record.function_name;
    } else {
        if (bundle.target.name != record.function_name)
            throw Error(ErrorCode::Consistency,
                        "bundle target '" + bundle.target.name + "' does not match record '" +
                            record.function_name + "' (" + record.record_id + ")");
        if (!bundle.target.repo.revision.empty() &&
            bundle.target.repo.revision != record.sample_revision())
            throw Error(ErrorCode::Consistency,
                        "bundle built at revision '" + bundle.target.repo.revision +
                            "' but record " + record.record_id + " labels revision '" +
                            record.sample_revision() + "'");
    }
    EnrichedRecord enriched{record, std::move(bundle), std::nullopt};
    if (trace) attach_trace(enriched, std::move(*trace));
    return enriched;
}

void attach_trace(EnrichedRecord& enriched, ReasoningTrace trace) {
    trace.validate();
    if (trace.is_vulnerable != enriched.base.label)
        throw Error(ErrorCode::LabelMismatch,
                    "trace label " + std::string(trace.is_vulnerable ? "true" : "false") +
                        " disagrees with record " + enriched.base.record_id + " label " +
                        (enriched.base.label ? "true" : "false"));
    enriched.trace = std::move(trace);
}

json EnrichedRecord::to_json() const {
    json context;
    context["target"] = repo_store::function_ref_to_json(bundle.target);
    context["callers"] = json::array();
    context["callees"] = json::array();
    context["globals"] = json::array();
    for (std::size_t i = 0; i < bundle.selected.size(); ++i) {
        const auto& sc = bundle.selected[i];
        context[group_key(sc.element.kind)].push_back({
            {"index", i},
            {"element", context_graph::element_to_json(sc.element)},
            {"profile", sc.profile.to_json()},
            {"relevance", sc.relevance},
            {"rendered", bundle.rendered[i]},
        });
    }
    context["dropped"] = json::array();
    for (const auto& d : bundle.dropped) {
        context["dropped"].push_back({
            {"kind", context_graph::element_kind_name(d.key.kind)},
            {"name", d.key.name},
            {"file_path", d.key.file_path},
            {"relevance", d.relevance},
            {"reason", d.reason},
        });
    }
    context["total_context_tokens"] = bundle.total_context_tokens;

    json j;
    j["schema_version"] = 1;
    j["record"] = base.to_json();
    j["context"] = std::move(context);
    j["trace"] = trace ? trace_to_json(*trace) : json(nullptr);
    return j;
}

EnrichedRecord EnrichedRecord::from_json(const json& j) {
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != 1)
        throw Error(ErrorCode::Schema, "unsupported or missing schema_version");

    EnrichedRecord out;
    try {
        out.base = DatasetRecord::from_json(j.at("record"));
        const json& context = j.at("context");
        out.bundle.target = repo_store::function_ref_from_json(context.at("target"));

        std::vector<std::tuple<std::size_t, profiling::ScoredContext, std::string>> entries;
        for (const char* key : {"callers", "callees", "globals"}) {
            for (const auto& e : context.at(key)) {
                profiling::ScoredContext sc;
                sc.element = context_graph::element_from_json(e.at("element"));
                sc.profile = profiling::SecurityProfile::from_json(e.at("profile"));
                sc.relevance = e.at("relevance").get<double>();
                entries.emplace_back(e.at("index").get<std::size_t>(), std::move(sc),
                                     e.at("rendered").get<std::string>());
            }
        }
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (std::get<0>(entries[i]) != i)
                throw Error(ErrorCode::Schema, "context entries have duplicate or missing indices");
            out.bundle.selected.push_back(std::move(std::get<1>(entries[i])));
            out.bundle.rendered.push_back(std::move(std::get<2>(entries[i])));
        }

        for (const auto& d : context.at("dropped")) {
            selection::DroppedElement dropped;
            dropped.key.kind =
                context_graph::element_kind_from(d.at("kind").get<std::string>());
            dropped.key.name = d.at("name").get<std::string>();
            dropped.key.file_path = d.at("file_path").get<std::string>();
            dropped.relevance = d.at("relevance").get<double>();
            dropped.reason = d.at("reason").get<std::string>();
            out.bundle.dropped.push_back(std::move(dropped));
        }
        out.bundle.total_context_tokens = context.at("total_context_tokens").get<long long>();

        if (j.contains("trace") && !j["trace"].is_null()) out.trace = trace_from_json(j["trace"]);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("bad enriched record json: ") + e.what());
    }
    return out;
}

void write_enriched(const std::filesystem::path& path,
                    const std::vector<EnrichedRecord>& records) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(r.to_json());
    write_jsonl(path, lines);
}

std::vector<EnrichedRecord> load_enriched(const std::filesystem::path& path) {
    std::vector<json> lines = read_jsonl(path);
    std::vector<EnrichedRecord> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(EnrichedRecord::from_json(lines[i]));
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + " line " + std::to_string(i + 1) + ": " +
                                      e.what());
        }
    }
    return out;
}

// --- SFT export ----------------------------------------------------------

json SummaryStats::to_json() const {
    json histogram = json::object();
    for (const auto& [bucket, count] : input_token_histogram)
        histogram[std::to_string(bucket)] = count;
    return {
        {"total", total},
        {"vulnerable", vulnerable},
        {"benign", benign},
        {"input_token_histogram", std::move(histogram)},
    };
}

SummaryStats export_sft(const std::vector<EnrichedRecord>& enriched, const SftOptions& options,
                        const TemplateSet& templates, const std::filesystem::path& out) {
    if (!options.binary_labels) {
        std::vector<std::string> missing;
        for (const auto& e : enriched)
            if (!e.trace) missing.push_back(e.base.record_id);
        if (!missing.empty())
            throw Error(ErrorCode::MissingTrace,
                        "records without reasoning traces: " + join(missing, ", "));
    }

    prompting::PromptOptions prompt_options;
    prompt_options.binary_verdict = options.binary_labels;

    std::vector<json> lines;
    SummaryStats stats;
    for (const auto& e : enriched) {
        llm::ChatRequest request = prompting::build_detection_prompt(
            e.bundle.target, e.bundle, options.strategy, templates, prompt_options);
        // Label-only outputs carry full confidence: the label is ground truth.
        std::string output = options.binary_labels
                                 ? prompting::render_verdict({e.base.label, 10.0, std::nullopt})
                                 : prompting::render_trace(*e.trace);
        lines.push_back({{"input", request.user}, {"output", std::move(output)}});
        ++stats.total;
        ++(e.base.label ? stats.vulnerable : stats.benign);
        long long tokens = selection::count_tokens(request.user, options.tokenizer);
        ++stats.input_token_histogram[(tokens / 256) * 256];
    }
    write_jsonl(out, lines);
    return stats;
}

// --- splits ------------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pair_indices(
    const std::vector<DatasetRecord>& records, double test_fraction, unsigned seed) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
        throw Error(ErrorCode::Config, "test_fraction must lie in [0, 1]");

    std::map<std::string, std::vector<std::size_t>> by_pair;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::string key = r.project_url + '\x1f' + r.fix_revision + '\x1f' + r.file_path +
                          '\x1f' + r.function_name;
        by_pair[key].push_back(i);
    }
    std::vector<std::vector<std::size_t>> groups;
    groups.reserve(by_pair.size());
    for (auto& [key, members] : by_pair) groups.push_back(std::move(members));

    std::mt19937 rng(seed);
    std::shuffle(groups.begin(), groups.end(), rng);

    auto want_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(records.size())));
    std::vector<std::size_t> train, test;
    for (const auto& group : groups) {
        if (test.size() < want_test)
            test.insert(test.end(), group.begin(), group.end());
        else
            train.insert(train.end(), group.begin(), group.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

SplitResult split_pairs(const std::vector<DatasetRecord>& records, double test_fraction,
                        unsigned seed) {
    auto [train_idx, test_idx] = split_pair_indices(records, test_fraction, seed);
    SplitResult result;
    result.train.reserve(train_idx.size());
    result.test.reserve(test_idx.size());
    for (std::size_t i : train_idx) result.train.push_back(records[i]);
    for (std::size_t i : test_idx) result.test.push_back(records[i]);
    return result;
}

}  // namespace ctxvul::dataset
