#pragma once

/** @file
 * End-to-end orchestration: one declarative config drives dataset loading,
 * context extraction, profiling, selection, trace generation, detection,
 * and export/evaluation. Every stage output is content-addressed under the
 * cache root, so reruns, restarts after a failure, and strategy sweeps
 * recompute only the stages whose inputs actually changed.
 */

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxvul/dataset.hpp"
#include "ctxvul/llm_client.hpp"
#include "ctxvul/prompting.hpp"
#include "ctxvul/selection.hpp"

namespace ctxvul::pipeline {

using prompting::IntegrationStrategy;

/// Full runs both phases. NoPhase1 skips profiling and ranking and packs
/// raw context in extraction order under the same budget. NoPhase2 skips
/// reasoning traces and uses label-only prompts and exports.
enum class AblationMode { Full, NoPhase1, NoPhase2 };

const char* ablation_mode_name(AblationMode mode);
AblationMode ablation_mode_from(const std::string& name);

struct DatasetInput {
    std::filesystem::path path;
    std::string adapter;  // "custom", "primevul", "titanvul", "cleanvul"
};

struct ProviderConfig {
    std::string name = "mock";  // "mock" or "api"
    std::string endpoint;       // api only; empty falls back to the environment
    std::string api_key_env = "CTXVUL_LLM_KEY";
    std::string profile_model = "profile-model";
    std::string trace_model = "trace-model";
    std::string detect_model = "detect-model";
    double temperature = 0.0;
    int requests_per_minute = 0;  // 0 = unlimited
};

struct PipelineConfig {
    std::vector<DatasetInput> inputs;
    std::filesystem::path cache_root;
    ProviderConfig provider;
    std::string tokenizer = "approx";
    std::filesystem::path vocab_path;  // vocab tokenizer only
    selection::TokenBudget budget;
    double relevance_floor = 2.0;
    long long max_function_tokens = 0;  // 0 keeps every record
    std::vector<IntegrationStrategy> strategies = {IntegrationStrategy::InsertBefore};
    AblationMode ablation = AblationMode::Full;
    std::filesystem::path templates_dir = "prompts";
    std::filesystem::path output_dir;
    unsigned seed = 1;

    /// Throws ErrorCode::Config; called by run()/sweep() before any work.
    void validate() const;

    /// Canonical form used for hashing and for the run-dir config copy.
    nlohmann::ordered_json to_json() const;

    /// Relative paths in the file resolve against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& file);

    /// Hash of everything that determines outputs: inputs by content,
    /// provider, tokenizer, budget, floor, filter, strategies, ablation,
    /// templates by content, seed. Cache and output locations excluded.
    std::string config_hash() const;
};

struct StageResult {
    std::string name;
    std::string status;  // "completed", "skipped", "failed", "pending"
    std::string cache;   // "hit" or "miss" when completed, "" otherwise
    std::vector<std::string> artifacts;  // run-dir-relative paths
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    std::string error;  // failed stages only
};

struct RunManifest {
    std::string config_hash;
    AblationMode ablation = AblationMode::Full;
    IntegrationStrategy strategy = IntegrationStrategy::InsertBefore;
    unsigned seed = 1;
    std::vector<StageResult> stages;
    long long llm_cache_hits = 0;
    long long llm_cache_misses = 0;
    std::filesystem::path run_dir;  // absolute; not serialized

    /// Every stage completed or was deliberately skipped.
    bool ok() const;

    nlohmann::ordered_json to_json() const;
};

/// Instantiates the configured provider. Unknown names throw ErrorCode::Config.
std::shared_ptr<llm::Provider> make_provider(const ProviderConfig& config);

/// One run with the config's single strategy (multi-strategy configs must go
/// through sweep). The manifest lands in <output_dir>/<ablation>-<strategy>/
/// manifest.json even when a stage fails; failed runs leave later stages
/// pending, and a rerun against the same cache resumes after the last
/// completed stage.
RunManifest run(const PipelineConfig& config);

/// Same, with an injected client (the CLI builds one from the config; tests
/// substitute scripted providers).
RunManifest run_with_client(const PipelineConfig& config, IntegrationStrategy strategy,
                            llm::Client& client);

/// One run per strategy. Strategy-independent stages are shared through the
/// cache, so only detection and reporting repeat. A failing run is recorded
/// in its manifest and the sweep continues; when at least one run completes,
/// a strategy comparison table is written to <output_dir>/strategy_comparison.md
/// and .json.
std::vector<RunManifest> sweep(const PipelineConfig& config);
std::vector<RunManifest> sweep_with_client(const PipelineConfig& config,
                                           const std::vector<IntegrationStrategy>& strategies,
                                           llm::Client& client);

}  // namespace ctxvul::pipeline
