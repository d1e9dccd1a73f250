// Command-line front end. Mid-pipeline subcommands read and write the same
// line-delimited artifacts the `run` stages produce, so any stage can be
// replayed or inspected by hand; `run` and `sweep` drive whole pipelines
// from a declarative config file (see docs/config.md).
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime or
// partial failure (a run whose manifest records a failed stage).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxvul/context_graph.hpp"
#include "ctxvul/dataset.hpp"
#include "ctxvul/errors.hpp"
#include "ctxvul/evaluation.hpp"
#include "ctxvul/llm_client.hpp"
#include "ctxvul/pipeline.hpp"
#include "ctxvul/profiling.hpp"
#include "ctxvul/prompting.hpp"
#include "ctxvul/repo_store.hpp"
#include "ctxvul/selection.hpp"
#include "ctxvul/templates.hpp"
#include "ctxvul/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctxvul;

namespace {

// --- shared option groups ----------------------------------------------------

struct ProviderFlags {
    std::string provider = "mock";
    std::string endpoint;
    std::string model;
    double temperature = 0.0;
    int rpm = 0;
    std::string llm_cache;
};

void add_provider_flags(CLI::App* sub, ProviderFlags& flags) {
    sub->add_option("--provider", flags.provider, "LLM provider")
        ->check(CLI::IsMember({"mock", "api"}))
        ->capture_default_str();
    sub->add_option("--endpoint", flags.endpoint,
                    "Chat-completions URL (api provider; defaults to CTXVUL_LLM_ENDPOINT)");
    sub->add_option("--model", flags.model, "Model name sent with each request")
        ->capture_default_str();
    sub->add_option("--temperature", flags.temperature, "Sampling temperature")
        ->capture_default_str();
    sub->add_option("--rpm", flags.rpm, "Request rate limit per minute (0 = unlimited)");
    sub->add_option("--llm-cache", flags.llm_cache,
                    "Response cache directory (default: <cache root>/llm)");
}

std::unique_ptr<llm::Client> make_client(const ProviderFlags& flags) {
    pipeline::ProviderConfig provider;
    provider.name = flags.provider;
    provider.endpoint = flags.endpoint;
    llm::ClientOptions options;
    options.cache_dir = flags.llm_cache.empty()
                            ? repo_store::resolve_cache_root({}) / "llm"
                            : fs::path(flags.llm_cache);
    options.requests_per_minute = flags.rpm;
    return std::make_unique<llm::Client>(pipeline::make_provider(provider), options);
}

struct TokenizerFlags {
    std::string name = "approx";
    std::string vocab;
};

void add_tokenizer_flags(CLI::App* sub, TokenizerFlags& flags) {
    sub->add_option("--tokenizer", flags.name, "Token counter: approx or vocab")
        ->capture_default_str();
    sub->add_option("--vocab", flags.vocab, "Vocabulary file for the vocab tokenizer");
}

selection::TokenizerConfig resolve_tokenizer(const TokenizerFlags& flags) {
    return selection::tokenizer_from_name(flags.name,
                                          flags.vocab.empty() ? fs::path{} : fs::path(flags.vocab));
}

// --- artifact row helpers ------------------------------------------------------

struct ExtractedRow {
    std::string record_id;
    repo_store::FunctionRef target;
    std::vector<context_graph::ContextElement> elements;
};

ExtractedRow parse_extracted(const json& row) {
    ExtractedRow out;
    out.record_id = row.at("record_id").get<std::string>();
    out.target = repo_store::function_ref_from_json(row.at("target"));
    for (const auto& element_json : row.at("elements"))
        out.elements.push_back(context_graph::element_from_json(element_json));
    return out;
}

struct ProfiledRow {
    std::string record_id;
    repo_store::FunctionRef target;
    std::vector<profiling::ScoredContext> scored;
};

ProfiledRow parse_profiled(const json& row) {
    ProfiledRow out;
    out.record_id = row.at("record_id").get<std::string>();
    out.target = repo_store::function_ref_from_json(row.at("target"));
    for (const auto& sc_json : row.at("scored")) {
        profiling::ScoredContext sc;
        sc.element = context_graph::element_from_json(sc_json.at("element"));
        sc.profile = profiling::SecurityProfile::from_json(sc_json.at("profile"));
        sc.relevance = sc_json.at("relevance").get<double>();
        out.scored.push_back(std::move(sc));
    }
    return out;
}

std::map<std::string, dataset::DatasetRecord> records_by_id(const fs::path& path,
                                                            const std::string& adapter) {
    dataset::LoadOutcome loaded = dataset::load_source(path, adapter);
    if (!loaded.rejected.empty())
        throw Error(ErrorCode::Schema, path.string() + " row " +
                                           std::to_string(loaded.rejected.front().row) + ": " +
                                           loaded.rejected.front().reason);
    std::map<std::string, dataset::DatasetRecord> records;
    for (auto& record : loaded.records) records.emplace(record.record_id, std::move(record));
    return records;
}

json diagnostic_row(const std::string& record_id, const context_graph::Diagnostic& d) {
    return {{"record_id", record_id},
            {"file_path", d.file_path},
            {"line", d.line},
            {"message", d.message}};
}

// --- subcommand bodies ---------------------------------------------------------

struct GraphBuildCmd {
    std::string repo;
    std::string rev;
    std::string out;
    std::string cache_dir;
    bool offline = false;

    void run() const {
        repo_store::StoreOptions options;
        if (!cache_dir.empty()) options.cache_root = cache_dir;
        options.offline = offline;
        repo_store::RepoStore store(options);
        repo_store::RepoHandle handle = store.acquire({repo, rev});
        context_graph::CodeGraph graph = context_graph::build_graph(handle);
        graph.save(out);
        std::printf("graph: %zu functions, %zu call edges, %zu globals, %zu access edges (%lld files)\n",
                    graph.functions().size(), graph.call_edges().size(),
                    graph.globals().size(), graph.access_edges().size(),
                    static_cast<long long>(graph.file_count()));
        std::printf("wrote %s\n", out.c_str());
    }
};

struct ProfileCmd {
    std::string in;
    std::string out;
    std::string templates_dir = "prompts";
    std::string diagnostics_out;
    ProviderFlags provider;

    void run() const {
        TemplateSet templates = load_templates(templates_dir);
        auto client = make_client(provider);
        profiling::ProfilingOptions options;
        if (!provider.model.empty()) options.model = provider.model;
        options.temperature = provider.temperature;

        std::vector<json> profiled, diagnostics;
        long long elements = 0, unprofiled_total = 0;
        for (const auto& row : read_jsonl(in)) {
            ExtractedRow extracted = parse_extracted(row);
            std::vector<std::pair<context_graph::ContextElement, profiling::SecurityProfile>>
                pairs;
            std::set<context_graph::ElementKey> unprofiled;
            for (auto& element : extracted.elements) {
                profiling::ProfileOutcome outcome = profiling::profile_element(
                    element, extracted.target, *client, templates, options);
                for (const auto& d : outcome.diagnostics)
                    diagnostics.push_back(diagnostic_row(extracted.record_id, d));
                if (outcome.unprofiled) {
                    unprofiled.insert(context_graph::key_of(element));
                    ++unprofiled_total;
                }
                pairs.emplace_back(std::move(element), std::move(outcome.profile));
                ++elements;
            }
            profiling::RankOutcome ranked = profiling::rank_elements(
                extracted.target, pairs, *client, templates, options);
            for (const auto& d : ranked.diagnostics)
                diagnostics.push_back(diagnostic_row(extracted.record_id, d));
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
            profiled.push_back({{"record_id", extracted.record_id},
                                {"target", row.at("target")},
                                {"scored", scored}});
        }
        write_jsonl(out, profiled);
        if (!diagnostics_out.empty()) write_jsonl(diagnostics_out, diagnostics);
        std::printf("profiled %lld elements across %zu records (%lld unprofiled, %zu diagnostics)\n",
                    elements, profiled.size(), unprofiled_total, diagnostics.size());
        std::printf("llm cache: %lld hits, %lld misses\n", client->cache_hits(),
                    client->cache_misses());
    }
};

struct SelectCmd {
    std::string in;
    std::string out;
    bool raw = false;
    int window = 8192;
    int function_reserve = 1024;
    int instructions_reserve = 1024;
    int output_reserve = 1024;
    double floor = 2.0;
    TokenizerFlags tokenizer;

    void run() const {
        selection::TokenBudget budget = selection::TokenBudget::make(
            window, function_reserve, instructions_reserve, output_reserve);
        selection::TokenizerConfig tok = resolve_tokenizer(tokenizer);

        std::vector<json> bundles;
        long long selected = 0, dropped = 0;
        for (const auto& row : read_jsonl(in)) {
            selection::ContextBundle bundle;
            std::string record_id;
            if (raw) {
                ExtractedRow extracted = parse_extracted(row);
                record_id = extracted.record_id;
                bundle = selection::pack_raw(extracted.target, extracted.elements, budget, tok);
            } else {
                ProfiledRow profiled = parse_profiled(row);
                record_id = profiled.record_id;
                selection::SelectionOptions options;
                options.relevance_floor = floor;
                bundle = selection::select_context(profiled.target, profiled.scored, budget, tok,
                                                   options);
            }
            selected += static_cast<long long>(bundle.selected.size());
            dropped += static_cast<long long>(bundle.dropped.size());
            bundles.push_back({{"record_id", record_id}, {"bundle", bundle.to_json()}});
        }
        write_jsonl(out, bundles);
        std::printf("selected %lld elements across %zu bundles (%lld dropped)\n", selected,
                    bundles.size(), dropped);
    }
};

struct PromptCmd {
    std::string bundles;
    std::string strategy = "insert_before";
    std::string templates_dir = "prompts";
    std::string record_id;
    std::string out;
    bool binary = false;

    void run() const {
        TemplateSet templates = load_templates(templates_dir);
        prompting::IntegrationStrategy strat = prompting::strategy_from_name(strategy);
        prompting::PromptOptions options;
        options.binary_verdict = binary;

        std::string rendered;
        bool found = false;
        for (const auto& row : read_jsonl(bundles)) {
            auto id = row.at("record_id").get<std::string>();
            if (!record_id.empty() && id != record_id) continue;
            found = true;
            auto bundle = selection::ContextBundle::from_json(row.at("bundle"));
            llm::ChatRequest request =
                prompting::build_detection_prompt(bundle.target, bundle, strat, templates,
                                                  options);
            rendered += "### record " + id + "\n";
            if (!request.system.empty()) rendered += "[system]\n" + request.system + "\n";
            rendered += request.user;
            if (rendered.back() != '\n') rendered += '\n';
            rendered += '\n';
        }
        if (!record_id.empty() && !found)
            throw Error(ErrorCode::NotFound, "record '" + record_id + "' not in " + bundles);
        if (out.empty())
            std::fputs(rendered.c_str(), stdout);
        else
            write_file_atomic(out, rendered);
    }
};

struct TraceCmd {
    std::string bundles;
    std::string records;
    std::string adapter = "custom";
    std::string out;
    std::string failures_out;
    std::string templates_dir = "prompts";
    ProviderFlags provider;

    TraceCmd() { provider.model = "trace-model"; }

    void run() const {
        TemplateSet templates = load_templates(templates_dir);
        auto by_id = records_by_id(records, adapter);
        auto client = make_client(provider);
        prompting::PromptOptions options;
        options.model = provider.model;
        options.temperature = provider.temperature;

        std::vector<dataset::EnrichedRecord> enriched;
        std::vector<json> failures;
        for (const auto& row : read_jsonl(bundles)) {
            auto id = row.at("record_id").get<std::string>();
            auto bundle = selection::ContextBundle::from_json(row.at("bundle"));
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw Error(ErrorCode::NotFound, "record '" + id + "' not in " + records);
            const dataset::DatasetRecord& record = it->second;

            llm::ChatRequest base = prompting::build_reasoning_prompt(record, bundle,
                                                                      record.label, templates,
                                                                      options);
            std::optional<prompting::ReasoningTrace> trace;
            std::string error;
            for (int attempt = 0; attempt < 2 && !trace; ++attempt) {
                llm::ChatRequest request = base;
                if (attempt == 1)
                    request.user += "\n\nYour previous response was invalid: " + error +
                                    "\nRespond with only the JSON requested above.";
                std::string text = client->complete(request).text;
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
        dataset::write_enriched(out, enriched);
        if (!failures_out.empty()) write_jsonl(failures_out, failures);
        std::printf("traced %zu records (%zu failed)\n", enriched.size(), failures.size());
        std::printf("llm cache: %lld hits, %lld misses\n", client->cache_hits(),
                    client->cache_misses());
    }
};

struct DetectCmd {
    std::string bundles;
    std::string strategy = "insert_before";
    std::string templates_dir = "prompts";
    std::string out;
    std::string diagnostics_out;
    bool binary = false;
    ProviderFlags provider;

    DetectCmd() { provider.model = "detect-model"; }

    void run() const {
        TemplateSet templates = load_templates(templates_dir);
        prompting::IntegrationStrategy strat = prompting::strategy_from_name(strategy);
        auto client = make_client(provider);
        prompting::DetectOptions options;
        options.model = provider.model;
        options.temperature = provider.temperature;
        options.binary_verdict = binary;

        std::vector<json> verdicts, diagnostics;
        long long vulnerable = 0;
        for (const auto& row : read_jsonl(bundles)) {
            auto id = row.at("record_id").get<std::string>();
            auto bundle = selection::ContextBundle::from_json(row.at("bundle"));
            prompting::DetectOutcome outcome =
                prompting::detect(bundle.target, bundle, strat, *client, templates, options);
            if (outcome.verdict.is_vulnerable) ++vulnerable;
            verdicts.push_back({{"record_id", id},
                                {"strategy", prompting::strategy_name(strat)},
                                {"is_vulnerable", outcome.verdict.is_vulnerable},
                                {"confidence_score", outcome.verdict.confidence_score}});
            for (const auto& d : outcome.diagnostics)
                diagnostics.push_back(diagnostic_row(id, d));
        }
        write_jsonl(out, verdicts);
        if (!diagnostics_out.empty()) write_jsonl(diagnostics_out, diagnostics);
        std::printf("detected %zu records: %lld vulnerable, %lld benign (%zu diagnostics)\n",
                    verdicts.size(), vulnerable,
                    static_cast<long long>(verdicts.size()) - vulnerable, diagnostics.size());
        std::printf("llm cache: %lld hits, %lld misses\n", client->cache_hits(),
                    client->cache_misses());
    }
};

struct DatasetFilterCmd {
    std::string in;
    std::string adapter;
    std::string out;
    std::string rejected_out;
    std::string removed_out;
    int max_tokens = 0;
    TokenizerFlags tokenizer;

    void run() const {
        dataset::LoadOutcome loaded = dataset::load_source(in, adapter);
        std::vector<json> rejected;
        for (const auto& r : loaded.rejected)
            rejected.push_back({{"row", r.row}, {"reason", r.reason}});

        std::vector<dataset::DatasetRecord> kept = std::move(loaded.records);
        std::vector<json> removed;
        if (max_tokens > 0) {
            dataset::FilterResult filtered =
                dataset::filter_by_length(kept, max_tokens, resolve_tokenizer(tokenizer));
            for (const auto& r : filtered.removed)
                removed.push_back({{"record_id", r.record_id}, {"reason", "over_length"}});
            kept = std::move(filtered.kept);
        }

        std::vector<json> rows;
        for (const auto& record : kept) rows.push_back(record.to_json());
        write_jsonl(out, rows);
        if (!rejected_out.empty()) write_jsonl(rejected_out, rejected);
        if (!removed_out.empty()) write_jsonl(removed_out, removed);
        std::printf("kept %zu records (%zu rejected, %zu over length)\n", kept.size(),
                    rejected.size(), removed.size());
    }
};

struct DatasetEnrichCmd {
    std::string records;
    std::string adapter = "custom";
    std::string bundles;
    std::string out;

    void run() const {
        auto by_id = records_by_id(records, adapter);
        std::vector<dataset::EnrichedRecord> enriched;
        for (const auto& row : read_jsonl(bundles)) {
            auto id = row.at("record_id").get<std::string>();
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw Error(ErrorCode::NotFound, "record '" + id + "' not in " + records);
            enriched.push_back(
                dataset::enrich(it->second, selection::ContextBundle::from_json(row.at("bundle"))));
        }
        dataset::write_enriched(out, enriched);
        std::printf("enriched %zu records\n", enriched.size());
    }
};

struct DatasetExportSftCmd {
    std::string in;
    std::string out;
    std::string strategy = "insert_before";
    std::string templates_dir = "prompts";
    std::string stats_out;
    bool binary = false;
    TokenizerFlags tokenizer;

    void run() const {
        TemplateSet templates = load_templates(templates_dir);
        std::vector<dataset::EnrichedRecord> enriched = dataset::load_enriched(in);
        dataset::SftOptions options;
        options.strategy = prompting::strategy_from_name(strategy);
        options.binary_labels = binary;
        options.tokenizer = resolve_tokenizer(tokenizer);
        dataset::SummaryStats stats = dataset::export_sft(enriched, options, templates, out);
        if (!stats_out.empty())
            write_file_atomic(stats_out, stats.to_json().dump(2) + "\n");
        std::printf("exported %lld records (%lld vulnerable, %lld benign)\n", stats.total,
                    stats.vulnerable, stats.benign);
    }
};

struct DatasetSplitCmd {
    std::string in;
    std::string adapter = "custom";
    std::string train_out;
    std::string test_out;
    double fraction = 0.1;
    unsigned seed = 1;

    void run() const {
        dataset::LoadOutcome loaded = dataset::load_source(in, adapter);
        if (!loaded.rejected.empty())
            throw Error(ErrorCode::Schema,
                        in + " row " + std::to_string(loaded.rejected.front().row) + ": " +
                            loaded.rejected.front().reason);
        dataset::SplitResult split = dataset::split_pairs(loaded.records, fraction, seed);
        std::vector<json> train_rows, test_rows;
        for (const auto& r : split.train) train_rows.push_back(r.to_json());
        for (const auto& r : split.test) test_rows.push_back(r.to_json());
        write_jsonl(train_out, train_rows);
        write_jsonl(test_out, test_rows);
        std::printf("split %zu records into %zu train, %zu test (fraction %.3f, seed %u)\n",
                    loaded.records.size(), split.train.size(), split.test.size(), fraction,
                    seed);
    }
};

struct EvalCmd {
    std::string preds;
    std::string labels;
    std::string cwe_map_path;
    std::string format = "md";
    std::string out;
    std::string title = "detection";
    int top_k = 15;

    void run() const {
        std::map<std::string, bool> label_by_id;
        for (const auto& row : read_jsonl(labels)) {
            auto id = row.at("record_id").get<std::string>();
            if (row.contains("label"))
                label_by_id[id] = row.at("label").get<bool>();
            else if (row.contains("is_vulnerable"))
                label_by_id[id] = row.at("is_vulnerable").get<bool>();
            else
                throw Error(ErrorCode::Schema,
                            labels + ": row for '" + id + "' has neither label nor is_vulnerable");
        }

        std::vector<Prediction> predictions, truth;
        for (const auto& row : read_jsonl(preds)) {
            auto id = row.at("record_id").get<std::string>();
            auto it = label_by_id.find(id);
            if (it == label_by_id.end())
                throw Error(ErrorCode::MissingLabel, "prediction '" + id + "' has no label");
            predictions.emplace_back(id, row.at("is_vulnerable").get<bool>());
            truth.emplace_back(id, it->second);
        }

        Confusion c = confusion(predictions, truth);
        MetricsReport overall = metrics(c);
        std::vector<std::pair<std::string, MetricsReport>> entries{{title, overall}};

        if (!cwe_map_path.empty()) {
            std::map<std::string, std::vector<std::string>> cwe_map;
            for (const auto& row : read_jsonl(cwe_map_path)) {
                auto id = row.at("record_id").get<std::string>();
                auto ids = row.value("cwe_ids", std::vector<std::string>{});
                if (!ids.empty()) cwe_map[id] = std::move(ids);
            }
            std::vector<std::string> uncovered;
            for (const auto& entry : per_cwe(predictions, truth, cwe_map, top_k, &uncovered))
                entries.emplace_back(
                    entry.cwe_id + " (n=" + std::to_string(entry.count) + ")", entry.report);
            if (!uncovered.empty())
                std::fprintf(stderr, "%zu labeled records carry no CWE mapping\n",
                             uncovered.size());
        }

        ReportTable table = metrics_table(entries);
        table.title = "Detection metrics (" + title + ")";
        ReportFormat report_format = format == "csv"    ? ReportFormat::Csv
                                     : format == "json" ? ReportFormat::Json
                                                        : ReportFormat::Markdown;
        std::string rendered = render_report(table, report_format);
        if (out.empty())
            std::fputs(rendered.c_str(), stdout);
        else
            write_file_atomic(out, rendered);
    }
};

struct RunCmd {
    std::string config_path;

    // Returns the process exit code: 3 when the manifest records a failure.
    int run() const {
        pipeline::PipelineConfig config = pipeline::PipelineConfig::load(config_path);
        pipeline::RunManifest manifest = pipeline::run(config);
        print_manifest(manifest);
        return manifest.ok() ? 0 : 3;
    }

    static void print_manifest(const pipeline::RunManifest& manifest) {
        std::printf("run %s (config %s)\n", manifest.run_dir.filename().string().c_str(),
                    manifest.config_hash.substr(0, 12).c_str());
        for (const auto& stage : manifest.stages) {
            std::printf("  %-8s %-10s %s\n", stage.name.c_str(), stage.status.c_str(),
                        stage.cache.c_str());
            if (!stage.error.empty()) std::printf("    error: %s\n", stage.error.c_str());
        }
        std::printf("  llm cache: %lld hits, %lld misses\n", manifest.llm_cache_hits,
                    manifest.llm_cache_misses);
        std::printf("  manifest: %s\n", (manifest.run_dir / "manifest.json").string().c_str());
    }
};

struct SweepCmd {
    std::string config_path;

    int run() const {
        pipeline::PipelineConfig config = pipeline::PipelineConfig::load(config_path);
        std::vector<pipeline::RunManifest> manifests = pipeline::sweep(config);
        bool all_ok = true;
        for (const auto& manifest : manifests) {
            RunCmd::print_manifest(manifest);
            all_ok = all_ok && manifest.ok();
        }
        fs::path comparison = config.output_dir / "strategy_comparison.md";
        if (fs::exists(comparison))
            std::printf("comparison: %s\n", comparison.string().c_str());
        return all_ok ? 0 : 3;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ctxvul: context-enriched vulnerability dataset pipeline"};
    app.require_subcommand(1);
    int exit_code = 0;

    // graph build
    GraphBuildCmd graph_build;
    auto* graph = app.add_subcommand("graph", "Code-property-graph operations");
    graph->require_subcommand(1);
    auto* build = graph->add_subcommand("build", "Acquire a repository and build its graph");
    build->add_option("--repo", graph_build.repo, "Repository URL or local path")->required();
    build->add_option("--rev", graph_build.rev, "Commit hash or immutable tag")->required();
    build->add_option("--out", graph_build.out, "Output graph file (line-delimited JSON)")
        ->required();
    build->add_option("--cache-dir", graph_build.cache_dir,
                      "Snapshot cache root (default: CTXVUL_CACHE or ~/.cache/ctxvul)");
    build->add_flag("--offline", graph_build.offline, "Fail instead of fetching");
    build->callback([&] { graph_build.run(); });

    // profile
    ProfileCmd profile_cmd;
    profile_cmd.provider.model = "profile-model";
    auto* profile = app.add_subcommand("profile", "Profile and rank extracted context");
    profile->add_option("--in", profile_cmd.in, "extracted.jsonl from a pipeline run")
        ->required();
    profile->add_option("--out", profile_cmd.out, "Output profiled.jsonl")->required();
    profile->add_option("--templates", profile_cmd.templates_dir, "Prompt template directory")
        ->capture_default_str();
    profile->add_option("--diagnostics", profile_cmd.diagnostics_out,
                        "Optional diagnostics output file");
    add_provider_flags(profile, profile_cmd.provider);
    profile->callback([&] { profile_cmd.run(); });

    // select
    SelectCmd select_cmd;
    auto* select = app.add_subcommand("select", "Pack ranked context into token budgets");
    select->add_option("--in", select_cmd.in,
                       "profiled.jsonl (or extracted.jsonl with --raw)")
        ->required();
    select->add_option("--out", select_cmd.out, "Output bundles.jsonl")->required();
    select->add_flag("--raw", select_cmd.raw,
                     "Pack unranked elements in extraction order");
    select->add_option("--window", select_cmd.window, "Model context window in tokens")
        ->capture_default_str();
    select->add_option("--function-reserve", select_cmd.function_reserve,
                       "Tokens reserved for the target function")
        ->capture_default_str();
    select->add_option("--instructions-reserve", select_cmd.instructions_reserve,
                       "Tokens reserved for prompt instructions")
        ->capture_default_str();
    select->add_option("--output-reserve", select_cmd.output_reserve,
                       "Tokens reserved for the model response")
        ->capture_default_str();
    select->add_option("--floor", select_cmd.floor, "Minimum relevance score to keep")
        ->capture_default_str();
    add_tokenizer_flags(select, select_cmd.tokenizer);
    select->callback([&] { select_cmd.run(); });

    // prompt
    PromptCmd prompt_cmd;
    auto* prompt = app.add_subcommand("prompt", "Render detection prompts without calling a model");
    prompt->add_option("--bundles", prompt_cmd.bundles, "bundles.jsonl")->required();
    prompt->add_option("--strategy", prompt_cmd.strategy,
                       "insert_before, insert_after, or as_comments")
        ->capture_default_str();
    prompt->add_option("--templates", prompt_cmd.templates_dir, "Prompt template directory")
        ->capture_default_str();
    prompt->add_option("--record", prompt_cmd.record_id, "Render only this record id");
    prompt->add_option("--out", prompt_cmd.out, "Output file (default: stdout)");
    prompt->add_flag("--binary", prompt_cmd.binary,
                     "Ask for the two-field verdict instead of the reasoning schema");
    prompt->callback([&] { prompt_cmd.run(); });

    // trace
    TraceCmd trace_cmd;
    auto* trace = app.add_subcommand("trace", "Generate reasoning traces and enrich records");
    trace->add_option("--bundles", trace_cmd.bundles, "bundles.jsonl")->required();
    trace->add_option("--records", trace_cmd.records, "Source records for the bundles")
        ->required();
    trace->add_option("--adapter", trace_cmd.adapter, "Record adapter name")
        ->capture_default_str();
    trace->add_option("--out", trace_cmd.out, "Output enriched.jsonl")->required();
    trace->add_option("--failures", trace_cmd.failures_out, "Optional failures output file");
    trace->add_option("--templates", trace_cmd.templates_dir, "Prompt template directory")
        ->capture_default_str();
    add_provider_flags(trace, trace_cmd.provider);
    trace->callback([&] { trace_cmd.run(); });

    // detect
    DetectCmd detect_cmd;
    auto* detect = app.add_subcommand("detect", "Run detection over context bundles");
    detect->add_option("--bundles", detect_cmd.bundles, "bundles.jsonl")->required();
    detect->add_option("--strategy", detect_cmd.strategy,
                       "insert_before, insert_after, or as_comments")
        ->capture_default_str();
    detect->add_option("--templates", detect_cmd.templates_dir, "Prompt template directory")
        ->capture_default_str();
    detect->add_option("--out", detect_cmd.out, "Output verdicts.jsonl")->required();
    detect->add_option("--diagnostics", detect_cmd.diagnostics_out,
                       "Optional diagnostics output file");
    detect->add_flag("--binary", detect_cmd.binary, "Two-field verdict prompts");
    add_provider_flags(detect, detect_cmd.provider);
    detect->callback([&] { detect_cmd.run(); });

    // dataset filter | enrich | export-sft | split
    auto* dataset_sub = app.add_subcommand("dataset", "Record loading, enrichment, and export");
    dataset_sub->require_subcommand(1);

    DatasetFilterCmd filter_cmd;
    auto* filter = dataset_sub->add_subcommand("filter",
                                               "Load source rows and drop over-length records");
    filter->add_option("--in", filter_cmd.in, "Source dataset file")->required();
    filter->add_option("--adapter", filter_cmd.adapter,
                       "custom, primevul, titanvul, or cleanvul")
        ->required();
    filter->add_option("--out", filter_cmd.out, "Output records.jsonl")->required();
    filter->add_option("--max-tokens", filter_cmd.max_tokens,
                       "Drop records whose sampled function exceeds this (0 = keep all)")
        ->capture_default_str();
    filter->add_option("--rejected", filter_cmd.rejected_out, "Optional rejected-rows file");
    filter->add_option("--removed", filter_cmd.removed_out, "Optional over-length report file");
    add_tokenizer_flags(filter, filter_cmd.tokenizer);
    filter->callback([&] { filter_cmd.run(); });

    DatasetEnrichCmd enrich_cmd;
    auto* enrich = dataset_sub->add_subcommand("enrich",
                                               "Join records with bundles (no traces)");
    enrich->add_option("--records", enrich_cmd.records, "Records file")->required();
    enrich->add_option("--adapter", enrich_cmd.adapter, "Record adapter name")
        ->capture_default_str();
    enrich->add_option("--bundles", enrich_cmd.bundles, "bundles.jsonl")->required();
    enrich->add_option("--out", enrich_cmd.out, "Output enriched.jsonl")->required();
    enrich->callback([&] { enrich_cmd.run(); });

    DatasetExportSftCmd sft_cmd;
    auto* export_sft = dataset_sub->add_subcommand("export-sft",
                                                   "Write instruction-tuning pairs");
    export_sft->add_option("--in", sft_cmd.in, "enriched.jsonl")->required();
    export_sft->add_option("--out", sft_cmd.out, "Output sft.jsonl")->required();
    export_sft->add_option("--strategy", sft_cmd.strategy,
                           "insert_before, insert_after, or as_comments")
        ->capture_default_str();
    export_sft->add_option("--templates", sft_cmd.templates_dir, "Prompt template directory")
        ->capture_default_str();
    export_sft->add_option("--stats", sft_cmd.stats_out, "Optional summary stats file");
    export_sft->add_flag("--binary", sft_cmd.binary, "Label-only outputs without traces");
    add_tokenizer_flags(export_sft, sft_cmd.tokenizer);
    export_sft->callback([&] { sft_cmd.run(); });

    DatasetSplitCmd split_cmd;
    auto* split = dataset_sub->add_subcommand("split", "Pair-atomic train/test split");
    split->add_option("--in", split_cmd.in, "Records file")->required();
    split->add_option("--adapter", split_cmd.adapter, "Record adapter name")
        ->capture_default_str();
    split->add_option("--train", split_cmd.train_out, "Output train file")->required();
    split->add_option("--test", split_cmd.test_out, "Output test file")->required();
    split->add_option("--fraction", split_cmd.fraction, "Test fraction in [0, 1]")
        ->capture_default_str();
    split->add_option("--seed", split_cmd.seed, "Split seed")->capture_default_str();
    split->callback([&] { split_cmd.run(); });

    // eval
    EvalCmd eval_cmd;
    auto* eval = app.add_subcommand("eval", "Score predictions against labels");
    eval->add_option("--preds", eval_cmd.preds,
                     "Predictions: line-delimited {record_id, is_vulnerable, confidence_score}")
        ->required();
    eval->add_option("--labels", eval_cmd.labels,
                     "Labels: line-delimited rows with record_id and label (records files work)")
        ->required();
    eval->add_option("--cwe-map", eval_cmd.cwe_map_path,
                     "Optional line-delimited {record_id, cwe_ids} for per-CWE rows");
    eval->add_option("--format", eval_cmd.format, "Report format")
        ->check(CLI::IsMember({"md", "csv", "json"}))
        ->capture_default_str();
    eval->add_option("--out", eval_cmd.out, "Output file (default: stdout)");
    eval->add_option("--title", eval_cmd.title, "Row label for the overall metrics")
        ->capture_default_str();
    eval->add_option("--top-k", eval_cmd.top_k, "Most frequent CWEs to report")
        ->capture_default_str();
    eval->callback([&] { eval_cmd.run(); });

    // run / sweep
    RunCmd run_cmd;
    auto* run_sub = app.add_subcommand("run", "Execute a pipeline from a config file");
    run_sub->add_option("--config", run_cmd.config_path, "Pipeline config (see docs/config.md)")
        ->required();
    run_sub->callback([&] { exit_code = run_cmd.run(); });

    SweepCmd sweep_cmd;
    auto* sweep_sub = app.add_subcommand("sweep",
                                         "Run every configured strategy and compare them");
    sweep_sub->add_option("--config", sweep_cmd.config_path,
                          "Pipeline config (see docs/config.md)")
        ->required();
    sweep_sub->callback([&] { exit_code = sweep_cmd.run(); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "ctxvul: " << e.what() << "\n";
        return e.code() == ErrorCode::Config ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "ctxvul: " << e.what() << "\n";
        return 3;
    }
    return exit_code;
}
