#include "ctxvul/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <utility>

#include "ctxvul/context_graph.hpp"
#include "ctxvul/errors.hpp"
#include "ctxvul/evaluation.hpp"
#include "ctxvul/profiling.hpp"
#include "ctxvul/repo_store.hpp"
#include "ctxvul/templates.hpp"
#include "ctxvul/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace ctxvul::pipeline {

using context_graph::ContextElement;
using dataset::DatasetRecord;
using profiling::ScoredContext;
using profiling::SecurityProfile;
using repo_store::RepoSpec;
using selection::ContextBundle;

namespace {

constexpr char kSep = '\x1f';

std::string templates_hash(const TemplateSet& t) {
    return sha256_hex(join({t.profile_caller, t.profile_callee, t.profile_global, t.rank,
                            t.reasoning_vulnerable, t.reasoning_benign, t.detect,
                            t.detect_binary},
                           std::string(1, kSep)));
}

std::string chain_key(const std::string& name, const ordered_json& projection,
                      const std::string& upstream) {
    return sha256_hex(name + kSep + projection.dump() + kSep + upstream);
}

ordered_json metrics_to_json(const MetricsReport& m) {
    return ordered_json{{"accuracy", m.accuracy},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"f1", m.f1},
                        {"support", m.support},
                        {"precision_defined", m.precision_defined},
                        {"recall_defined", m.recall_defined},
                        {"f1_defined", m.f1_defined}};
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport m;
    m.accuracy = j.at("accuracy").get<double>();
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f1 = j.at("f1").get<double>();
    m.support = j.at("support").get<long long>();
    m.precision_defined = j.at("precision_defined").get<bool>();
    m.recall_defined = j.at("recall_defined").get<bool>();
    m.f1_defined = j.at("f1_defined").get<bool>();
    return m;
}

/// Runs stages against the content-addressed store under <cache_root>/stages.
/// A stage whose key is present is materialized from the store without
/// recomputation; fresh results are published for the next run.
class StageRunner {
public:
    StageRunner(fs::path run_dir, fs::path store_dir, RunManifest& manifest)
        : run_dir_(std::move(run_dir)), store_dir_(std::move(store_dir)), manifest_(manifest) {}

    void run(const std::string& name, const std::string& key,
             const std::function<ordered_json(const fs::path&)>& compute) {
        StageResult result;
        result.name = name;
        fs::path out_dir = run_dir_ / name;
        fs::remove_all(out_dir);
        fs::create_directories(out_dir);

        fs::path slot = store_dir_ / key;
        fs::path meta_path = slot / "meta.json";
        if (fs::exists(meta_path)) {
            ordered_json meta = ordered_json::parse(read_file(meta_path));
            for (const auto& f : meta.at("files")) {
                auto fname = f.get<std::string>();
                fs::copy_file(slot / fname, out_dir / fname,
                              fs::copy_options::overwrite_existing);
                result.artifacts.push_back(name + "/" + fname);
            }
            result.counts = meta.at("counts");
            result.cache = "hit";
        } else {
            result.counts = compute(out_dir);
            std::vector<std::string> files;
            for (const auto& entry : fs::directory_iterator(out_dir))
                files.push_back(entry.path().filename().string());
            std::sort(files.begin(), files.end());
            publish(slot, out_dir, files, result.counts);
            for (const auto& f : files) result.artifacts.push_back(name + "/" + f);
            result.cache = "miss";
        }
        result.status = "completed";
        manifest_.stages.push_back(std::move(result));
    }

    void skip(const std::string& name) {
        fs::remove_all(run_dir_ / name);
        StageResult result;
        result.name = name;
        result.status = "skipped";
        manifest_.stages.push_back(std::move(result));
    }

private:
    void publish(const fs::path& slot, const fs::path& out_dir,
                 const std::vector<std::string>& files, const ordered_json& counts) {
        fs::create_directories(store_dir_);
        fs::path tmp =
            store_dir_ / (".publish-" + slot.filename().string() + "-" + std::to_string(getpid()));
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        for (const auto& f : files) fs::copy_file(out_dir / f, tmp / f);
        // meta.json is the completeness marker, so it is written last.
        write_file_atomic(tmp / "meta.json",
                          ordered_json{{"files", files}, {"counts", counts}}.dump(2) + "\n");
        std::error_code ec;
        fs::remove_all(slot, ec);  // a slot without meta.json is a dead partial
        fs::rename(tmp, slot, ec);
        if (ec) fs::remove_all(tmp);  // a concurrent publisher won the slot
    }

    fs::path run_dir_;
    fs::path store_dir_;
    RunManifest& manifest_;
};

std::map<std::string, DatasetRecord> records_by_id(const fs::path& filtered_path) {
    std::map<std::string, DatasetRecord> records;
    for (const auto& row : read_jsonl(filtered_path)) {
        DatasetRecord r = DatasetRecord::from_json(row);
        records.emplace(r.record_id, std::move(r));
    }
    return records;
}

ordered_json compute_load(const PipelineConfig& config,
                          const selection::TokenizerConfig& tokenizer, const fs::path& out) {
    std::vector<DatasetRecord> records;
    std::vector<json> rejected_lines;
    std::set<std::string> seen;
    for (const auto& input : config.inputs) {
        dataset::LoadOutcome outcome = dataset::load_source(input.path, input.adapter);
        for (const auto& rej : outcome.rejected)
            rejected_lines.push_back({{"path", input.path.string()},
                                      {"adapter", input.adapter},
                                      {"row", rej.row},
                                      {"reason", rej.reason}});
        for (auto& record : outcome.records) {
            if (!seen.insert(record.record_id).second) {
                rejected_lines.push_back(
                    {{"path", input.path.string()},
                     {"adapter", input.adapter},
                     {"row", 0},
                     {"reason", "duplicate record id '" + record.record_id + "'"}});
                continue;
            }
            records.push_back(std::move(record));
        }
    }

    std::vector<json> record_lines;
    for (const auto& r : records) record_lines.push_back(r.to_json());
    write_jsonl(out / "records.jsonl", record_lines);
    write_jsonl(out / "rejected.jsonl", rejected_lines);

    std::vector<DatasetRecord> kept = records;
    std::vector<json> removed_lines;
    if (config.max_function_tokens > 0) {
        dataset::FilterResult filtered =
            dataset::filter_by_length(records, config.max_function_tokens, tokenizer);
        kept = std::move(filtered.kept);
        for (const auto& r : filtered.removed)
            removed_lines.push_back({{"record_id", r.record_id}, {"reason", "over_length"}});
    }
    write_jsonl(out / "removed.jsonl", removed_lines);
    std::vector<json> kept_lines;
    for (const auto& r : kept) kept_lines.push_back(r.to_json());
    write_jsonl(out / "filtered.jsonl", kept_lines);

    return ordered_json{{"records", records.size()},
                        {"rejected", rejected_lines.size()},
                        {"kept", kept.size()},
                        {"removed", removed_lines.size()}};
}

ordered_json compute_extract(const fs::path& run_dir, const fs::path& cache_root,
                             const fs::path& out) {
    repo_store::RepoStore store({cache_root});
    std::map<std::string, context_graph::CodeGraph> graphs;
    std::map<std::string, repo_store::RepoHandle> handles;
    std::vector<json> extracted, failures, diagnostics;
    long long callers = 0, callees = 0, globals = 0, functions = 0;

    for (const auto& row : read_jsonl(run_dir / "load" / "filtered.jsonl")) {
        DatasetRecord record = DatasetRecord::from_json(row);
        try {
            RepoSpec spec{record.project_url, record.sample_revision()};
            std::string graph_key = spec.url + kSep + spec.revision;
            if (!graphs.count(graph_key)) {
                repo_store::RepoHandle handle = store.acquire(spec);
                fs::path graph_path =
                    cache_root / "graphs" / (sha256_hex(graph_key) + ".json");
                context_graph::CodeGraph graph;
                if (fs::exists(graph_path)) {
                    graph = context_graph::CodeGraph::load(graph_path);
                } else {
                    graph = context_graph::build_graph(handle);
                    fs::create_directories(graph_path.parent_path());
                    graph.save(graph_path);
                }
                for (const auto& d : graph.diagnostics())
                    diagnostics.push_back({{"repo", spec.url},
                                           {"revision", spec.revision},
                                           {"file_path", d.file_path},
                                           {"line", d.line},
                                           {"message", d.message}});
                functions += static_cast<long long>(graph.functions().size());
                graphs.emplace(graph_key, std::move(graph));
                handles.emplace(graph_key, std::move(handle));
            }
            repo_store::FunctionRef target = repo_store::resolve_function(
                handles.at(graph_key), record.file_path, record.function_name,
                record.sample_code());
            std::vector<ContextElement> elements = graphs.at(graph_key).context_of(target);
            json element_array = json::array();
            for (const auto& element : elements) {
                switch (element.kind) {
                    case context_graph::ElementKind::Caller: ++callers; break;
                    case context_graph::ElementKind::Callee: ++callees; break;
                    case context_graph::ElementKind::GlobalVariable: ++globals; break;
                }
                element_array.push_back(context_graph::element_to_json(element));
            }
            extracted.push_back({{"record_id", record.record_id},
                                 {"target", repo_store::function_ref_to_json(target)},
                                 {"elements", element_array}});
        } catch (const Error& e) {
            // Data problems skip the record; infrastructure problems abort.
            switch (e.code()) {
                case ErrorCode::NotFound:
                case ErrorCode::Ambiguous:
                case ErrorCode::EmptyGraph:
                case ErrorCode::UnknownRevision:
                case ErrorCode::Config:
                    failures.push_back(
                        {{"record_id", record.record_id}, {"reason", e.what()}});
                    break;
                default:
                    throw;
            }
        }
    }

    write_jsonl(out / "extracted.jsonl", extracted);
    write_jsonl(out / "extract_failures.jsonl", failures);
    write_jsonl(out / "extract_diagnostics.jsonl", diagnostics);
    return ordered_json{{"targets", extracted.size()},
                        {"failures", failures.size()},
                        {"graphs", graphs.size()},
                        {"functions", functions},
                        {"callers", callers},
                        {"callees", callees},
                        {"globals", globals},
                        {"elements", callers + callees + globals}};
}

ordered_json compute_profile(const PipelineConfig& config, llm::Client& client,
                             const TemplateSet& templates, const fs::path& run_dir,
                             const fs::path& out) {
    profiling::ProfilingOptions options;
    options.model = config.provider.profile_model;
    options.temperature = config.provider.temperature;

    std::vector<json> profiled, diagnostics;
    long long elements = 0, unprofiled_total = 0, records = 0;
    for (const auto& row : read_jsonl(run_dir / "extract" / "extracted.jsonl")) {
        ++records;
        auto target = repo_store::function_ref_from_json(row.at("target"));
        std::vector<std::pair<ContextElement, SecurityProfile>> pairs;
        std::set<context_graph::ElementKey> unprofiled;
        for (const auto& element_json : row.at("elements")) {
            ContextElement element = context_graph::element_from_json(element_json);
            profiling::ProfileOutcome outcome =
                profiling::profile_element(element, target, client, templates, options);
            for (const auto& d : outcome.diagnostics)
                diagnostics.push_back({{"record_id", row.at("record_id")},
                                       {"file_path", d.file_path},
                                       {"line", d.line},
                                       {"message", d.message}});
            if (outcome.unprofiled) {
                unprofiled.insert(context_graph::key_of(element));
                ++unprofiled_total;
            }
            pairs.emplace_back(std::move(element), std::move(outcome.profile));
            ++elements;
        }
        profiling::RankOutcome ranked =
            profiling::rank_elements(target, pairs, client, templates, options);
        for (const auto& d : ranked.diagnostics)
            diagnostics.push_back({{"record_id", row.at("record_id")},
                                   {"file_path", d.file_path},
                                   {"line", d.line},
                                   {"message", d.message}});
        bool rescored = false;
        for (auto& sc : ranked.scored) {
            if (unprofiled.count(context_graph::key_of(sc.element))) {
                sc.relevance = 0.0;
                rescored = true;
            }
        }
        if (rescored)
            std::sort(ranked.scored.begin(), ranked.scored.end(), profiling::scored_order);

        json scored = json::array();
        for (const auto& sc : ranked.scored)
            scored.push_back({{"element", context_graph::element_to_json(sc.element)},
                              {"profile", sc.profile.to_json()},
                              {"relevance", sc.relevance}});
        profiled.push_back({{"record_id", row.at("record_id")},
                            {"target", row.at("target")},
                            {"scored", scored}});
    }

    write_jsonl(out / "profiled.jsonl", profiled);
    write_jsonl(out / "profile_diagnostics.jsonl", diagnostics);
    return ordered_json{{"records", records},
                        {"elements", elements},
                        {"unprofiled", unprofiled_total},
                        {"diagnostics", diagnostics.size()}};
}

ordered_json compute_select(const PipelineConfig& config,
                            const selection::TokenizerConfig& tokenizer,
                            const fs::path& run_dir, const fs::path& out) {
    std::vector<json> bundles;
    long long selected = 0, dropped = 0, context_tokens = 0;

    if (config.ablation == AblationMode::NoPhase1) {
        for (const auto& row : read_jsonl(run_dir / "extract" / "extracted.jsonl")) {
            auto target = repo_store::function_ref_from_json(row.at("target"));
            std::vector<ContextElement> elements;
            for (const auto& element_json : row.at("elements"))
                elements.push_back(context_graph::element_from_json(element_json));
            ContextBundle bundle =
                selection::pack_raw(target, elements, config.budget, tokenizer);
            selected += static_cast<long long>(bundle.selected.size());
            dropped += static_cast<long long>(bundle.dropped.size());
            context_tokens += bundle.total_context_tokens;
            bundles.push_back({{"record_id", row.at("record_id")}, {"bundle", bundle.to_json()}});
        }
    } else {
        selection::SelectionOptions options;
        options.relevance_floor = config.relevance_floor;
        for (const auto& row : read_jsonl(run_dir / "profile" / "profiled.jsonl")) {
            auto target = repo_store::function_ref_from_json(row.at("target"));
            std::vector<ScoredContext> ranked;
            for (const auto& sc_json : row.at("scored")) {
                ScoredContext sc;
                sc.element = context_graph::element_from_json(sc_json.at("element"));
                sc.profile = SecurityProfile::from_json(sc_json.at("profile"));
                sc.relevance = sc_json.at("relevance").get<double>();
                ranked.push_back(std::move(sc));
            }
            ContextBundle bundle =
                selection::select_context(target, ranked, config.budget, tokenizer, options);
            selected += static_cast<long long>(bundle.selected.size());
            dropped += static_cast<long long>(bundle.dropped.size());
            context_tokens += bundle.total_context_tokens;
            bundles.push_back({{"record_id", row.at("record_id")}, {"bundle", bundle.to_json()}});
        }
    }

    write_jsonl(out / "bundles.jsonl", bundles);
    return ordered_json{{"bundles", bundles.size()},
                        {"selected", selected},
                        {"dropped", dropped},
                        {"context_tokens", context_tokens}};
}

ordered_json compute_trace(const PipelineConfig& config, llm::Client& client,
                           const TemplateSet& templates, const fs::path& run_dir,
                           const fs::path& out) {
    auto records = records_by_id(run_dir / "load" / "filtered.jsonl");
    prompting::PromptOptions options;
    options.model = config.provider.trace_model;
    options.temperature = config.provider.temperature;

    std::vector<dataset::EnrichedRecord> enriched;
    std::vector<json> failures;
    for (const auto& row : read_jsonl(run_dir / "select" / "bundles.jsonl")) {
        auto id = row.at("record_id").get<std::string>();
        ContextBundle bundle = ContextBundle::from_json(row.at("bundle"));
        const DatasetRecord& record = records.at(id);

        llm::ChatRequest base =
            prompting::build_reasoning_prompt(record, bundle, record.label, templates, options);
        std::optional<prompting::ReasoningTrace> trace;
        std::string error;
        for (int attempt = 0; attempt < 2 && !trace; ++attempt) {
            llm::ChatRequest request = base;
            if (attempt == 1)
                request.user += "\n\nYour previous response was invalid: " + error +
                                "\nRespond with only the JSON requested above.";
            std::string text = client.complete(request).text;
            try {
                trace = prompting::parse_trace(text, record.label);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Parse && e.code() != ErrorCode::Schema &&
                    e.code() != ErrorCode::LabelMismatch)
                    throw;
                error = e.what();
            }
        }
        if (!trace) {
            failures.push_back({{"record_id", id}, {"reason", error}});
            continue;
        }
        enriched.push_back(dataset::enrich(record, bundle, trace));
    }

    dataset::write_enriched(out / "enriched.jsonl", enriched);
    write_jsonl(out / "trace_failures.jsonl", failures);
    return ordered_json{{"traced", enriched.size()}, {"failed", failures.size()}};
}

ordered_json compute_detect(const PipelineConfig& config, IntegrationStrategy strategy,
                            llm::Client& client, const TemplateSet& templates,
                            const fs::path& run_dir, const fs::path& out) {
    prompting::DetectOptions options;
    options.model = config.provider.detect_model;
    options.temperature = config.provider.temperature;
    options.binary_verdict = config.ablation == AblationMode::NoPhase2;

    std::vector<json> verdicts, diagnostics;
    long long vulnerable = 0;
    for (const auto& row : read_jsonl(run_dir / "select" / "bundles.jsonl")) {
        auto id = row.at("record_id").get<std::string>();
        ContextBundle bundle = ContextBundle::from_json(row.at("bundle"));
        prompting::DetectOutcome outcome =
            prompting::detect(bundle.target, bundle, strategy, client, templates, options);
        if (outcome.verdict.is_vulnerable) ++vulnerable;
        verdicts.push_back({{"record_id", id},
                            {"strategy", prompting::strategy_name(strategy)},
                            {"is_vulnerable", outcome.verdict.is_vulnerable},
                            {"confidence_score", outcome.verdict.confidence_score}});
        for (const auto& d : outcome.diagnostics)
            diagnostics.push_back({{"record_id", id},
                                   {"file_path", d.file_path},
                                   {"line", d.line},
                                   {"message", d.message}});
    }

    write_jsonl(out / "verdicts.jsonl", verdicts);
    write_jsonl(out / "detect_diagnostics.jsonl", diagnostics);
    return ordered_json{
        {"records", verdicts.size()},
        {"vulnerable", vulnerable},
        {"benign", static_cast<long long>(verdicts.size()) - vulnerable},
        {"diagnostics", diagnostics.size()}};
}

ordered_json compute_report(const PipelineConfig& config, IntegrationStrategy strategy,
                            const TemplateSet& templates,
                            const selection::TokenizerConfig& tokenizer,
                            const fs::path& run_dir, const fs::path& out) {
    auto records = records_by_id(run_dir / "load" / "filtered.jsonl");
    bool binary = config.ablation == AblationMode::NoPhase2;

    std::vector<dataset::EnrichedRecord> enriched;
    if (binary) {
        for (const auto& row : read_jsonl(run_dir / "select" / "bundles.jsonl")) {
            auto id = row.at("record_id").get<std::string>();
            enriched.push_back(
                dataset::enrich(records.at(id), ContextBundle::from_json(row.at("bundle"))));
        }
    } else {
        enriched = dataset::load_enriched(run_dir / "trace" / "enriched.jsonl");
    }

    dataset::SftOptions sft_options;
    sft_options.strategy = strategy;
    sft_options.binary_labels = binary;
    sft_options.tokenizer = tokenizer;
    dataset::SummaryStats stats =
        dataset::export_sft(enriched, sft_options, templates, out / "sft.jsonl");

    std::vector<Prediction> predictions, labels;
    std::map<std::string, std::vector<std::string>> cwe_map;
    for (const auto& row : read_jsonl(run_dir / "detect" / "verdicts.jsonl")) {
        auto id = row.at("record_id").get<std::string>();
        predictions.emplace_back(id, row.at("is_vulnerable").get<bool>());
        const DatasetRecord& record = records.at(id);
        labels.emplace_back(id, record.label);
        if (!record.cwe_ids.empty()) cwe_map[id] = record.cwe_ids;
    }

    Confusion c = confusion(predictions, labels);
    MetricsReport overall = metrics(c);
    std::vector<std::string> uncovered;
    std::vector<CweMetrics> by_cwe = per_cwe(predictions, labels, cwe_map, 15, &uncovered);

    json per_cwe_json = json::array();
    for (const auto& entry : by_cwe)
        per_cwe_json.push_back({{"cwe_id", entry.cwe_id},
                                {"count", entry.count},
                                {"metrics", json(metrics_to_json(entry.report))}});
    ordered_json metrics_json{
        {"overall", metrics_to_json(overall)},
        {"confusion",
         ordered_json{{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}}},
        {"per_cwe", per_cwe_json},
        {"uncovered", uncovered}};
    write_file_atomic(out / "metrics.json", metrics_json.dump(2) + "\n");

    std::string label = std::string(ablation_mode_name(config.ablation)) + "-" +
                        prompting::strategy_name(strategy);
    std::vector<std::pair<std::string, MetricsReport>> entries{{label, overall}};
    for (const auto& entry : by_cwe)
        entries.emplace_back(entry.cwe_id + " (n=" + std::to_string(entry.count) + ")",
                             entry.report);
    ReportTable table = metrics_table(entries);
    table.title = "Detection metrics (" + label + ")";
    write_file_atomic(out / "report.md", render_report(table, ReportFormat::Markdown));

    ordered_json summary{{"records", labels.size()},
                         {"with_context", enriched.size()},
                         {"sft", stats.to_json()}};
    write_file_atomic(out / "summary.json", summary.dump(2) + "\n");

    return ordered_json{{"sft_records", stats.total},
                        {"predictions", predictions.size()},
                        {"accuracy", overall.accuracy},
                        {"f1", overall.f1}};
}

}  // namespace

const char* ablation_mode_name(AblationMode mode) {
    switch (mode) {
        case AblationMode::Full: return "full";
        case AblationMode::NoPhase1: return "no_phase1";
        case AblationMode::NoPhase2: return "no_phase2";
    }
    return "full";
}

AblationMode ablation_mode_from(const std::string& name) {
    if (name == "full") return AblationMode::Full;
    if (name == "no_phase1") return AblationMode::NoPhase1;
    if (name == "no_phase2") return AblationMode::NoPhase2;
    throw Error(ErrorCode::Config, "unknown ablation mode '" + name +
                                       "' (expected full, no_phase1, or no_phase2)");
}

void PipelineConfig::validate() const {
    if (inputs.empty()) throw Error(ErrorCode::Config, "config lists no dataset inputs");
    for (const auto& input : inputs) {
        if (input.path.empty())
            throw Error(ErrorCode::Config, "dataset input has an empty path");
        dataset::source_dataset_from_name(input.adapter);
    }
    if (provider.name != "mock" && provider.name != "api")
        throw Error(ErrorCode::Config,
                    "unknown provider '" + provider.name + "' (expected mock or api)");
    if (!(provider.temperature >= 0.0 && provider.temperature <= 2.0))
        throw Error(ErrorCode::Config, "provider temperature must be within [0, 2]");
    if (provider.requests_per_minute < 0)
        throw Error(ErrorCode::Config, "requests_per_minute must be >= 0");
    budget.validate();
    if (!(relevance_floor >= 0.0 && relevance_floor <= 10.0))
        throw Error(ErrorCode::Config, "relevance_floor must be within [0, 10]");
    if (max_function_tokens < 0)
        throw Error(ErrorCode::Config, "max_function_tokens must be >= 0");
    if (strategies.empty())
        throw Error(ErrorCode::Config, "strategy sweep list is empty");
    selection::tokenizer_from_name(tokenizer, vocab_path);
    if (templates_dir.empty())
        throw Error(ErrorCode::Config, "templates_dir is required");
    if (output_dir.empty()) throw Error(ErrorCode::Config, "output_dir is required");
}

nlohmann::ordered_json PipelineConfig::to_json() const {
    ordered_json inputs_json = ordered_json::array();
    for (const auto& input : inputs)
        inputs_json.push_back(
            ordered_json{{"path", input.path.string()}, {"adapter", input.adapter}});
    ordered_json strategies_json = ordered_json::array();
    for (auto s : strategies) strategies_json.push_back(prompting::strategy_name(s));
    return ordered_json{
        {"inputs", inputs_json},
        {"cache_root", cache_root.string()},
        {"provider",
         ordered_json{{"name", provider.name},
                      {"endpoint", provider.endpoint},
                      {"api_key_env", provider.api_key_env},
                      {"profile_model", provider.profile_model},
                      {"trace_model", provider.trace_model},
                      {"detect_model", provider.detect_model},
                      {"temperature", provider.temperature},
                      {"requests_per_minute", provider.requests_per_minute}}},
        {"tokenizer", ordered_json{{"name", tokenizer}, {"vocab_path", vocab_path.string()}}},
        {"budget",
         ordered_json{{"window_total", budget.window_total},
                      {"reserved_for_function", budget.reserved_for_function},
                      {"reserved_for_instructions", budget.reserved_for_instructions},
                      {"reserved_for_output", budget.reserved_for_output}}},
        {"relevance_floor", relevance_floor},
        {"max_function_tokens", max_function_tokens},
        {"strategies", strategies_json},
        {"ablation", ablation_mode_name(ablation)},
        {"templates_dir", templates_dir.string()},
        {"output_dir", output_dir.string()},
        {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir) {
    if (!j.is_object())
        throw Error(ErrorCode::Config, "pipeline config must be a JSON object");
    static const std::set<std::string> known = {
        "inputs",        "cache_root", "provider",   "tokenizer",
        "budget",        "relevance_floor", "max_function_tokens", "strategy",
        "strategies",    "ablation",   "templates_dir", "output_dir", "seed"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key))
            throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    }

    auto resolve = [&](fs::path p) -> fs::path {
        if (!p.empty() && p.is_relative() && !base_dir.empty()) p = base_dir / p;
        return p.lexically_normal();
    };

    PipelineConfig config;
    try {
        for (const auto& input : j.at("inputs")) {
            DatasetInput in;
            in.path = resolve(input.at("path").get<std::string>());
            in.adapter = input.at("adapter").get<std::string>();
            config.inputs.push_back(std::move(in));
        }
        if (j.contains("cache_root"))
            config.cache_root = resolve(j.at("cache_root").get<std::string>());
        if (j.contains("provider")) {
            const auto& p = j.at("provider");
            static const std::set<std::string> provider_keys = {
                "name",        "endpoint",     "api_key_env",         "profile_model",
                "trace_model", "detect_model", "temperature", "requests_per_minute"};
            for (const auto& [key, value] : p.items()) {
                (void)value;
                if (!provider_keys.count(key))
                    throw Error(ErrorCode::Config, "unknown provider key '" + key + "'");
            }
            if (p.contains("name")) config.provider.name = p.at("name").get<std::string>();
            if (p.contains("endpoint"))
                config.provider.endpoint = p.at("endpoint").get<std::string>();
            if (p.contains("api_key_env"))
                config.provider.api_key_env = p.at("api_key_env").get<std::string>();
            if (p.contains("profile_model"))
                config.provider.profile_model = p.at("profile_model").get<std::string>();
            if (p.contains("trace_model"))
                config.provider.trace_model = p.at("trace_model").get<std::string>();
            if (p.contains("detect_model"))
                config.provider.detect_model = p.at("detect_model").get<std::string>();
            if (p.contains("temperature"))
                config.provider.temperature = p.at("temperature").get<double>();
            if (p.contains("requests_per_minute"))
                config.provider.requests_per_minute =
                    p.at("requests_per_minute").get<int>();
        }
        if (j.contains("tokenizer")) {
            if (j.at("tokenizer").is_string()) {
                config.tokenizer = j.at("tokenizer").get<std::string>();
            } else {
                config.tokenizer = j.at("tokenizer").at("name").get<std::string>();
                if (j.at("tokenizer").contains("vocab_path"))
                    config.vocab_path =
                        resolve(j.at("tokenizer").at("vocab_path").get<std::string>());
            }
        }
        const auto& b = j.at("budget");
        config.budget = selection::TokenBudget::make(
            b.at("window_total").get<int>(), b.at("reserved_for_function").get<int>(),
            b.at("reserved_for_instructions").get<int>(),
            b.at("reserved_for_output").get<int>());
        if (j.contains("relevance_floor"))
            config.relevance_floor = j.at("relevance_floor").get<double>();
        if (j.contains("max_function_tokens"))
            config.max_function_tokens = j.at("max_function_tokens").get<long long>();
        if (j.contains("strategy") && j.contains("strategies"))
            throw Error(ErrorCode::Config,
                        "config names both 'strategy' and 'strategies'; pick one");
        if (j.contains("strategy")) {
            config.strategies = {
                prompting::strategy_from_name(j.at("strategy").get<std::string>())};
        } else if (j.contains("strategies")) {
            config.strategies.clear();
            for (const auto& s : j.at("strategies"))
                config.strategies.push_back(
                    prompting::strategy_from_name(s.get<std::string>()));
            if (config.strategies.empty())
                throw Error(ErrorCode::Config, "strategy sweep list is empty");
        }
        if (j.contains("ablation")) {
            if (!j.at("ablation").is_string())
                throw Error(ErrorCode::Config,
                            "'ablation' must name exactly one mode as a string");
            config.ablation = ablation_mode_from(j.at("ablation").get<std::string>());
        }
        if (j.contains("templates_dir"))
            config.templates_dir = resolve(j.at("templates_dir").get<std::string>());
        else
            config.templates_dir = resolve(config.templates_dir);
        if (j.contains("output_dir"))
            config.output_dir = resolve(j.at("output_dir").get<std::string>());
        if (j.contains("seed")) config.seed = j.at("seed").get<unsigned>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("bad pipeline config: ") + e.what());
    }
    return config;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& file) {
    std::string text = read_file(file);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config,
                    "config file " + file.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, file.parent_path());
}

std::string PipelineConfig::config_hash() const {
    ordered_json inputs_json = ordered_json::array();
    for (const auto& input : inputs)
        inputs_json.push_back(ordered_json{{"adapter", input.adapter},
                                           {"content", sha256_hex(read_file(input.path))}});
    ordered_json strategies_json = ordered_json::array();
    for (auto s : strategies) strategies_json.push_back(prompting::strategy_name(s));
    ordered_json h{
        {"inputs", inputs_json},
        {"provider",
         ordered_json{{"name", provider.name},
                      {"endpoint", provider.endpoint},
                      {"profile_model", provider.profile_model},
                      {"trace_model", provider.trace_model},
                      {"detect_model", provider.detect_model},
                      {"temperature", provider.temperature},
                      {"requests_per_minute", provider.requests_per_minute}}},
        {"tokenizer", tokenizer},
        {"vocab", vocab_path.empty() ? "" : sha256_hex(read_file(vocab_path))},
        {"budget",
         {budget.window_total, budget.reserved_for_function,
          budget.reserved_for_instructions, budget.reserved_for_output}},
        {"relevance_floor", relevance_floor},
        {"max_function_tokens", max_function_tokens},
        {"strategies", strategies_json},
        {"ablation", ablation_mode_name(ablation)},
        {"templates", templates_hash(load_templates(templates_dir))},
        {"seed", seed}};
    return sha256_hex(h.dump());
}

bool RunManifest::ok() const {
    if (stages.empty()) return false;
    for (const auto& stage : stages)
        if (stage.status != "completed" && stage.status != "skipped") return false;
    return true;
}

nlohmann::ordered_json RunManifest::to_json() const {
    ordered_json stages_json = ordered_json::array();
    for (const auto& stage : stages) {
        ordered_json s{{"name", stage.name},
                       {"status", stage.status},
                       {"cache", stage.cache},
                       {"artifacts", stage.artifacts},
                       {"counts", stage.counts}};
        if (!stage.error.empty()) s["error"] = stage.error;
        stages_json.push_back(std::move(s));
    }
    return ordered_json{{"schema_version", 1},
                        {"config_hash", config_hash},
                        {"ablation", ablation_mode_name(ablation)},
                        {"strategy", prompting::strategy_name(strategy)},
                        {"seed", seed},
                        {"stages", stages_json},
                        {"llm", ordered_json{{"cache_hits", llm_cache_hits},
                                             {"cache_misses", llm_cache_misses}}}};
}

std::shared_ptr<llm::Provider> make_provider(const ProviderConfig& config) {
    if (config.name == "mock") return std::make_shared<llm::MockProvider>();
    if (config.name == "api") {
        llm::HttpOptions options = llm::http_options_from_env();
        if (!config.endpoint.empty()) options.endpoint = config.endpoint;
        if (!config.api_key_env.empty()) {
            if (const char* key = std::getenv(config.api_key_env.c_str()))
                options.api_key = key;
        }
        if (options.endpoint.empty())
            throw Error(ErrorCode::Config,
                        "api provider needs an endpoint (config or CTXVUL_LLM_ENDPOINT)");
        return std::make_shared<llm::HttpProvider>(options);
    }
    throw Error(ErrorCode::Config, "unknown provider '" + config.name + "'");
}

RunManifest run_with_client(const PipelineConfig& config, IntegrationStrategy strategy,
                            llm::Client& client) {
    config.validate();
    fs::path cache_root = repo_store::resolve_cache_root(config.cache_root);
    TemplateSet templates = load_templates(config.templates_dir);
    selection::TokenizerConfig tokenizer =
        selection::tokenizer_from_name(config.tokenizer, config.vocab_path);
    std::string tpl_hash = templates_hash(templates);
    std::string vocab_hash =
        config.vocab_path.empty() ? "" : sha256_hex(read_file(config.vocab_path));
    std::string provider_sig = config.provider.name + kSep + config.provider.endpoint;
    bool no_phase1 = config.ablation == AblationMode::NoPhase1;
    bool no_phase2 = config.ablation == AblationMode::NoPhase2;

    RunManifest manifest;
    manifest.config_hash = config.config_hash();
    manifest.ablation = config.ablation;
    manifest.strategy = strategy;
    manifest.seed = config.seed;
    manifest.run_dir = config.output_dir / (std::string(ablation_mode_name(config.ablation)) +
                                            "-" + prompting::strategy_name(strategy));
    fs::create_directories(manifest.run_dir);
    write_file_atomic(manifest.run_dir / "config.json", config.to_json().dump(2) + "\n");

    long long hits_before = client.cache_hits();
    long long misses_before = client.cache_misses();

    ordered_json inputs_json = ordered_json::array();
    for (const auto& input : config.inputs)
        inputs_json.push_back(ordered_json{{"adapter", input.adapter},
                                           {"content", sha256_hex(read_file(input.path))}});
    ordered_json budget_json = {config.budget.window_total, config.budget.reserved_for_function,
                                config.budget.reserved_for_instructions,
                                config.budget.reserved_for_output};

    std::string load_key =
        chain_key("load",
                  ordered_json{{"inputs", inputs_json},
                               {"tokenizer", config.tokenizer},
                               {"vocab", vocab_hash},
                               {"max_function_tokens", config.max_function_tokens}},
                  "");
    std::string extract_key = chain_key("extract", ordered_json::object(), load_key);
    std::string profile_key =
        chain_key("profile",
                  ordered_json{{"provider", provider_sig},
                               {"model", config.provider.profile_model},
                               {"temperature", config.provider.temperature},
                               {"templates", tpl_hash}},
                  extract_key);
    ordered_json select_proj{{"budget", budget_json},
                             {"tokenizer", config.tokenizer},
                             {"vocab", vocab_hash}};
    select_proj["mode"] = no_phase1 ? "raw" : "ranked";
    if (!no_phase1) select_proj["floor"] = config.relevance_floor;
    std::string select_key =
        chain_key("select", select_proj, no_phase1 ? extract_key : profile_key);
    std::string trace_key =
        chain_key("trace",
                  ordered_json{{"provider", provider_sig},
                               {"model", config.provider.trace_model},
                               {"temperature", config.provider.temperature},
                               {"templates", tpl_hash}},
                  select_key);
    std::string detect_key =
        chain_key("detect",
                  ordered_json{{"provider", provider_sig},
                               {"model", config.provider.detect_model},
                               {"temperature", config.provider.temperature},
                               {"templates", tpl_hash},
                               {"strategy", prompting::strategy_name(strategy)},
                               {"binary", no_phase2}},
                  select_key);
    std::string report_key =
        chain_key("report",
                  ordered_json{{"strategy", prompting::strategy_name(strategy)},
                               {"binary", no_phase2},
                               {"tokenizer", config.tokenizer},
                               {"vocab", vocab_hash},
                               {"templates", tpl_hash}},
                  select_key + kSep + (no_phase2 ? "-" : trace_key) + kSep + detect_key);

    const std::vector<std::string> order = {"load",  "extract", "profile", "select",
                                            "trace", "detect",  "report"};
    StageRunner runner(manifest.run_dir, cache_root / "stages", manifest);
    const fs::path& run_dir = manifest.run_dir;
    try {
        runner.run("load", load_key,
                   [&](const fs::path& out) { return compute_load(config, tokenizer, out); });
        runner.run("extract", extract_key, [&](const fs::path& out) {
            return compute_extract(run_dir, cache_root, out);
        });
        if (no_phase1)
            runner.skip("profile");
        else
            runner.run("profile", profile_key, [&](const fs::path& out) {
                return compute_profile(config, client, templates, run_dir, out);
            });
        runner.run("select", select_key, [&](const fs::path& out) {
            return compute_select(config, tokenizer, run_dir, out);
        });
        if (no_phase2)
            runner.skip("trace");
        else
            runner.run("trace", trace_key, [&](const fs::path& out) {
                return compute_trace(config, client, templates, run_dir, out);
            });
        runner.run("detect", detect_key, [&](const fs::path& out) {
            return compute_detect(config, strategy, client, templates, run_dir, out);
        });
        runner.run("report", report_key, [&](const fs::path& out) {
            return compute_report(config, strategy, templates, tokenizer, run_dir, out);
        });
    } catch (const std::exception& e) {
        std::size_t at = manifest.stages.size();
        StageResult failed;
        failed.name = at < order.size() ? order[at] : "unknown";
        failed.status = "failed";
        failed.error = e.what();
        manifest.stages.push_back(std::move(failed));
        for (std::size_t i = at + 1; i < order.size(); ++i) {
            StageResult pending;
            pending.name = order[i];
            pending.status = "pending";
            if ((order[i] == "profile" && no_phase1) || (order[i] == "trace" && no_phase2))
                pending.status = "skipped";
            manifest.stages.push_back(std::move(pending));
        }
    }

    manifest.llm_cache_hits = client.cache_hits() - hits_before;
    manifest.llm_cache_misses = client.cache_misses() - misses_before;
    write_file_atomic(manifest.run_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
    return manifest;
}

RunManifest run(const PipelineConfig& config) {
    config.validate();
    if (config.strategies.size() != 1)
        throw Error(ErrorCode::Config,
                    "config lists " + std::to_string(config.strategies.size()) +
                        " strategies; use sweep for multi-strategy runs");
    fs::path cache_root = repo_store::resolve_cache_root(config.cache_root);
    llm::ClientOptions options;
    options.cache_dir = cache_root / "llm";
    options.requests_per_minute = config.provider.requests_per_minute;
    llm::Client client(make_provider(config.provider), options);
    return run_with_client(config, config.strategies[0], client);
}

std::vector<RunManifest> sweep_with_client(const PipelineConfig& config,
                                           const std::vector<IntegrationStrategy>& strategies,
                                           llm::Client& client) {
    config.validate();
    if (strategies.empty())
        throw Error(ErrorCode::Config, "strategy sweep list is empty");

    std::vector<RunManifest> manifests;
    for (IntegrationStrategy strategy : strategies) {
        try {
            manifests.push_back(run_with_client(config, strategy, client));
        } catch (const Error& e) {
            RunManifest broken;
            broken.ablation = config.ablation;
            broken.strategy = strategy;
            broken.seed = config.seed;
            StageResult setup;
            setup.name = "setup";
            setup.status = "failed";
            setup.error = e.what();
            broken.stages.push_back(std::move(setup));
            manifests.push_back(std::move(broken));
        }
    }

    std::vector<std::pair<std::string, MetricsReport>> entries;
    for (const auto& manifest : manifests) {
        if (!manifest.ok()) continue;
        json metrics_json =
            json::parse(read_file(manifest.run_dir / "report" / "metrics.json"));
        entries.emplace_back(prompting::strategy_name(manifest.strategy),
                             metrics_from_json(metrics_json.at("overall")));
    }
    if (!entries.empty()) {
        ReportTable table = metrics_table(entries);
        table.title = "Integration strategy comparison";
        fs::create_directories(config.output_dir);
        write_file_atomic(config.output_dir / "strategy_comparison.md",
                          render_report(table, ReportFormat::Markdown));
        write_file_atomic(config.output_dir / "strategy_comparison.json",
                          render_report(table, ReportFormat::Json));
    }
    return manifests;
}

std::vector<RunManifest> sweep(const PipelineConfig& config) {
    config.validate();
    fs::path cache_root = repo_store::resolve_cache_root(config.cache_root);
    llm::ClientOptions options;
    options.cache_dir = cache_root / "llm";
    options.requests_per_minute = config.provider.requests_per_minute;
    llm::Client client(make_provider(config.provider), options);
    return sweep_with_client(config, config.strategies, client);
}

}  // namespace ctxvul::pipeline
