#pragma once

/** @file
 * The normalized labeled sample every adapter produces. Split out from the
 * rest of the dataset module so prompt assembly can depend on records
 * without pulling in loading and export.
 */

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctxvul::dataset {

enum class SourceDataset { PrimeVul, TitanVul, CleanVul, Custom };

const char* source_dataset_name(SourceDataset v);
SourceDataset source_dataset_from_name(const std::string& name);

/// One labeled function sample. A vulnerable record's code is code_before
/// (the state at vulnerable_revision); a benign record's is code_after.
/// Paired records share (project_url, fix_revision, file_path,
/// function_name) and differ only in label and sample side.
struct DatasetRecord {
    std::string record_id;
    SourceDataset dataset = SourceDataset::Custom;
    std::string project_url;
    std::string fix_revision;
    std::string vulnerable_revision;
    std::string file_path;
    std::string function_name;
    std::string code_before;
    std::string code_after;
    std::string diff;
    bool label = false;  // true = vulnerable sample
    std::optional<std::string> cve_id;
    std::vector<std::string> cwe_ids;
    std::string commit_message;
    std::optional<std::string> cve_description;

    const std::string& sample_code() const { return label ? code_before : code_after; }
    const std::string& sample_revision() const {
        return label ? vulnerable_revision : fix_revision;
    }

    /// Structural checks; violations raise Schema errors naming the field.
    void validate() const;

    nlohmann::json to_json() const;
    static DatasetRecord from_json(const nlohmann::json& j);

    bool operator==(const DatasetRecord&) const = default;
};

}  // namespace ctxvul::dataset
