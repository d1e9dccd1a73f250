#pragma once

/** @file
 * Dataset plumbing: adapters that normalize upstream vulnerability datasets
 * into records, the token-length filter, context/trace attachment, the
 * enriched line-delimited format, SFT export, and pair-atomic splits.
 */

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctxvul/prompting.hpp"
#include "ctxvul/record.hpp"
#include "ctxvul/selection.hpp"
#include "ctxvul/templates.hpp"

namespace ctxvul::dataset {

using prompting::IntegrationStrategy;
using prompting::ReasoningTrace;
using selection::ContextBundle;
using selection::TokenizerConfig;

// --- loading -----------------------------------------------------------------

struct RejectedRow {
    std::size_t row = 0;  // 1-based line number (or array position) in the file
    std::string reason;
};

struct LoadOutcome {
    std::vector<DatasetRecord> records;
    std::vector<RejectedRow> rejected;
};

/// Reads a dataset file (a JSON array or one JSON object per line) through
/// the adapter named by `format` ("custom", "primevul", "titanvul",
/// "cleanvul"). Rows the adapter cannot map are returned in `rejected` with
/// reasons, never silently dropped.
LoadOutcome load_source(const std::filesystem::path& path, const std::string& format);

// --- filtering -----------------------------------------------------------

struct FilterResult {
    std::vector<DatasetRecord> kept;
    std::vector<DatasetRecord> removed;
};

/// Partitions on the sample-side code length: kept iff its token count is at
/// most max_tokens.
FilterResult filter_by_length(const std::vector<DatasetRecord>& records, int max_tokens,
                              const TokenizerConfig& tokenizer);

// --- enrichment ----------------------------------------------------------

/// A record bound to the context that was selected for it and, once
/// generated, the reasoning trace used for training.
struct EnrichedRecord {
    DatasetRecord base;
    ContextBundle bundle;
    std::optional<ReasoningTrace> trace;

    nlohmann::json to_json() const;
    static EnrichedRecord from_json(const nlohmann::json& j);

    bool operator==(const EnrichedRecord&) const = default;
};

/// Binds a bundle (and optionally a trace) to its record. The bundle's
/// target must carry the record's function name at the revision matching
/// the record's label; a trace must agree with the label.
EnrichedRecord enrich(const DatasetRecord& record, ContextBundle bundle,
                      std::optional<ReasoningTrace> trace = {});

/// Label hygiene for traces generated after enrichment.
void attach_trace(EnrichedRecord& enriched, ReasoningTrace trace);

/// Line-delimited JSON with a schema_version field per line.
void write_enriched(const std::filesystem::path& path,
                    const std::vector<EnrichedRecord>& records);
std::vector<EnrichedRecord> load_enriched(const std::filesystem::path& path);

// --- SFT export ----------------------------------------------------------

struct SummaryStats {
    long long total = 0;
    long long vulnerable = 0;
    long long benign = 0;
    /// Input prompt lengths, bucketed to 256-token bins (bucket floor -> count).
    std::map<long long, long long> input_token_histogram;

    nlohmann::json to_json() const;
};

struct SftOptions {
    IntegrationStrategy strategy = IntegrationStrategy::InsertBefore;
    /// Emit {input, output} with label-only outputs instead of reasoning
    /// traces (runs that skip reasoning supervision).
    bool binary_labels = false;
    TokenizerConfig tokenizer;
};

/// Writes one {"input", "output"} JSON object per record. Unless
/// binary_labels is set, every record must carry a trace; missing traces
/// abort with the offending record ids.
SummaryStats export_sft(const std::vector<EnrichedRecord>& enriched, const SftOptions& options,
                        const TemplateSet& templates, const std::filesystem::path& out);

// --- splits ------------------------------------------------------------------

/// Indices partitioned so records sharing (project_url, fix_revision,
/// file_path, function_name) always land on the same side. Deterministic in
/// the seed.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_pair_indices(
    const std::vector<DatasetRecord>& records, double test_fraction, unsigned seed);

struct SplitResult {
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> test;
};

SplitResult split_pairs(const std::vector<DatasetRecord>& records, double test_fraction,
                        unsigned seed);

}  // namespace ctxvul::dataset
