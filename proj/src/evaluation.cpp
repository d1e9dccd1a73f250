#include "ctxvul/evaluation.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ctxvul/errors.hpp"
#include "ctxvul/util.hpp"

namespace ctxvul {

Confusion confusion(const std::vector<Prediction>& predictions,
                    const std::vector<Prediction>& labels) {
    std::unordered_map<std::string, bool> truth;
    truth.reserve(labels.size());
    for (const auto& [id, label] : labels) {
        if (!truth.emplace(id, label).second)
            throw Error(ErrorCode::Duplicate, "duplicate label for record " + id);
    }
    std::unordered_set<std::string> seen;
    seen.reserve(predictions.size());
    Confusion c;
    for (const auto& [id, pred] : predictions) {
        if (!seen.insert(id).second)
            throw Error(ErrorCode::Duplicate, "duplicate prediction for record " + id);
        auto it = truth.find(id);
        if (it == truth.end())
            throw Error(ErrorCode::MissingLabel, "no label for record " + id);
        bool label = it->second;
        if (pred && label) ++c.tp;
        else if (pred && !label) ++c.fp;
        else if (!pred && label) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1_score(double precision, double recall) {
    double denom = precision + recall;
    if (denom == 0.0) return 0.0;
    return 2.0 * precision * recall / denom;
}

MetricsReport metrics(const Confusion& c) {
    if (c.total() == 0)
        throw Error(ErrorCode::EmptyEvaluation, "confusion matrix is empty");
    MetricsReport r;
    r.support = c.total();
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) {
        r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    } else {
        r.precision = 0.0;
        r.precision_defined = false;
    }
    if (c.tp + c.fn > 0) {
        r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    } else {
        r.recall = 0.0;
        r.recall_defined = false;
    }
    if (r.precision_defined && r.recall_defined && r.precision + r.recall > 0.0) {
        r.f1 = f1_score(r.precision, r.recall);
    } else {
        r.f1 = 0.0;
        r.f1_defined = false;
    }
    return r;
}

std::vector<CweMetrics> per_cwe(const std::vector<Prediction>& predictions,
                                const std::vector<Prediction>& labels,
                                const std::map<std::string, std::vector<std::string>>& cwe_map,
                                int top_k,
                                std::vector<std::string>* uncovered) {
    // Count CWE frequency over labeled records (one count per record per CWE).
    std::map<std::string, long long> freq;
    for (const auto& [id, label] : labels) {
        (void)label;
        auto it = cwe_map.find(id);
        if (it == cwe_map.end() || it->second.empty()) {
            if (uncovered) uncovered->push_back(id);
            continue;
        }
        std::set<std::string> distinct(it->second.begin(), it->second.end());
        for (const auto& cwe : distinct) ++freq[cwe];
    }

    std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (top_k >= 0 && ranked.size() > static_cast<std::size_t>(top_k))
        ranked.resize(static_cast<std::size_t>(top_k));

    std::unordered_map<std::string, bool> pred_by_id;
    for (const auto& [id, p] : predictions) pred_by_id[id] = p;

    std::vector<CweMetrics> out;
    for (const auto& [cwe, count] : ranked) {
        std::vector<Prediction> sub_preds, sub_labels;
        for (const auto& [id, label] : labels) {
            auto it = cwe_map.find(id);
            if (it == cwe_map.end()) continue;
            if (std::find(it->second.begin(), it->second.end(), cwe) == it->second.end()) continue;
            sub_labels.emplace_back(id, label);
            auto pit = pred_by_id.find(id);
            if (pit != pred_by_id.end()) sub_preds.emplace_back(id, pit->second);
        }
        CweMetrics m;
        m.cwe_id = cwe;
        m.count = count;
        m.report = metrics(confusion(sub_preds, sub_labels));
        out.push_back(std::move(m));
    }
    return out;
}

std::pair<double, double> compare(const MetricsReport& baseline, const MetricsReport& treatment) {
    return {(treatment.accuracy - baseline.accuracy) * 100.0,
            (treatment.f1 - baseline.f1) * 100.0};
}

std::vector<CweRow> join_cwe(const std::vector<CweMetrics>& baseline,
                             const std::vector<CweMetrics>& treatment) {
    std::unordered_map<std::string, const CweMetrics*> by_id;
    for (const auto& t : treatment) by_id[t.cwe_id] = &t;
    std::vector<CweRow> rows;
    for (const auto& b : baseline) {
        auto it = by_id.find(b.cwe_id);
        if (it == by_id.end()) continue;
        CweRow row;
        row.cwe_id = b.cwe_id;
        row.count = b.count;
        row.baseline = b.report;
        row.treatment = it->second->report;
        auto [da, df] = compare(b.report, it->second->report);
        row.delta_acc = da;
        row.delta_f1 = df;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_pct(double fraction) {
    return format_fixed(fraction * 100.0, 2);
}

std::string format_delta(double points) {
    std::string s = format_fixed(points, 2);
    if (!s.empty() && s[0] != '-') s.insert(s.begin(), '+');
    return s;
}

ReportTable metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& entries) {
    ReportTable t;
    t.columns = {"Approach", "Acc %", "P %", "R %", "F1 %"};
    for (const auto& [name, m] : entries) {
        t.rows.push_back({name, format_pct(m.accuracy), format_pct(m.precision),
                          format_pct(m.recall), format_pct(m.f1)});
    }
    return t;
}

ReportTable cwe_table(const std::vector<CweRow>& rows) {
    ReportTable t;
    t.columns = {"CWE", "Count", "Base Acc %", "Base F1 %", "Treat Acc %", "Treat F1 %",
                 "dAcc", "dF1"};
    for (const auto& r : rows) {
        t.rows.push_back({r.cwe_id, std::to_string(r.count), format_pct(r.baseline.accuracy),
                          format_pct(r.baseline.f1), format_pct(r.treatment.accuracy),
                          format_pct(r.treatment.f1), format_delta(r.delta_acc),
                          format_delta(r.delta_f1)});
    }
    return t;
}

namespace {

std::string md_escape(const std::string& cell) {
    std::string out;
    for (char c : cell) {
        if (c == '|') out += "\\|";
        else out += c;
    }
    return out;
}

std::string render_markdown(const ReportTable& t) {
    std::string out;
    if (!t.title.empty()) out += "## " + t.title + "\n\n";
    out += "|";
    for (const auto& c : t.columns) out += " " + md_escape(c) + " |";
    out += "\n|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += " --- |";
    out += "\n";
    for (const auto& row : t.rows) {
        out += "|";
        for (const auto& cell : row) out += " " + md_escape(cell) + " |";
        out += "\n";
    }
    return out;
}

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

std::string render_csv(const ReportTable& t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ",";
        out += csv_escape(t.columns[i]);
    }
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += csv_escape(row[i]);
        }
        out += "\n";
    }
    return out;
}

std::string render_json(const ReportTable& t) {
    nlohmann::json j;
    j["title"] = t.title;
    j["columns"] = t.columns;
    j["rows"] = t.rows;
    return j.dump(2) + "\n";
}

}  // namespace

std::string render_report(const ReportTable& table, ReportFormat format) {
    switch (format) {
        case ReportFormat::Markdown: return render_markdown(table);
        case ReportFormat::Csv: return render_csv(table);
        case ReportFormat::Json: return render_json(table);
    }
    throw Error(ErrorCode::Config, "unknown report format");
}

ReportTable load_report_json(const nlohmann::json& j) {
    ReportTable t;
    t.title = j.value("title", "");
    t.columns = j.at("columns").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    return t;
}

}  // namespace ctxvul
