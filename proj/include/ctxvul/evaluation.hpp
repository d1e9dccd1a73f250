#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctxvul {

struct Confusion {
    long long tp = 0;
    long long tn = 0;
    long long fp = 0;
    long long fn = 0;

    long long total() const { return tp + tn + fp + fn; }
};

/// Confusion-matrix metrics in [0,1]. Zero-denominator precision/recall/f1 are
/// reported as 0 with the corresponding *_defined flag cleared instead of NaN.
struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long long support = 0;
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
};

struct CweMetrics {
    std::string cwe_id;
    long long count = 0;
    MetricsReport report;
};

/// One row of a per-CWE comparison table (Table-5 shape).
struct CweRow {
    std::string cwe_id;
    long long count = 0;
    MetricsReport baseline;
    MetricsReport treatment;
    double delta_acc = 0.0;  // percentage points, unrounded
    double delta_f1 = 0.0;
};

using Prediction = std::pair<std::string, bool>;  // (record_id, is_vulnerable)

Confusion confusion(const std::vector<Prediction>& predictions,
                    const std::vector<Prediction>& labels);

MetricsReport metrics(const Confusion& c);

/// Harmonic mean of precision and recall; 0 when p + r == 0.
double f1_score(double precision, double recall);

/// Metrics restricted to the top_k most frequent CWEs. Records with several
/// CWEs count toward each; labeled records absent from cwe_map are excluded
/// and reported through `uncovered`.
std::vector<CweMetrics> per_cwe(const std::vector<Prediction>& predictions,
                                const std::vector<Prediction>& labels,
                                const std::map<std::string, std::vector<std::string>>& cwe_map,
                                int top_k = 15,
                                std::vector<std::string>* uncovered = nullptr);

/// Differences in percentage points (treatment - baseline), unrounded.
std::pair<double, double> compare(const MetricsReport& baseline, const MetricsReport& treatment);

/// Join two per-CWE runs over their common CWE ids into comparison rows.
std::vector<CweRow> join_cwe(const std::vector<CweMetrics>& baseline,
                             const std::vector<CweMetrics>& treatment);

enum class ReportFormat { Markdown, Csv, Json };

/// A rendered-table abstraction: named columns plus string cells.
struct ReportTable {
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

ReportTable metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& entries);
ReportTable cwe_table(const std::vector<CweRow>& rows);

std::string render_report(const ReportTable& table, ReportFormat format);
ReportTable load_report_json(const nlohmann::json& j);

/// "61.42" style percentage cell (2 decimals, half away from zero).
std::string format_pct(double fraction);
/// "+16.94" / "-2.36" style signed point-delta cell.
std::string format_delta(double points);

}  // namespace ctxvul
