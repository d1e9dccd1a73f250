#include "ctxvul/record.hpp"

#include "ctxvul/errors.hpp"

namespace ctxvul::dataset {

const char* source_dataset_name(SourceDataset v) {
    switch (v) {
        case SourceDataset::PrimeVul: return "primevul";
        case SourceDataset::TitanVul: return "titanvul";
        case SourceDataset::CleanVul: return "cleanvul";
        case SourceDataset::Custom: return "custom";
    }
    return "custom";
}

SourceDataset source_dataset_from_name(const std::string& name) {
    if (name == "primevul") return SourceDataset::PrimeVul;
    if (name == "titanvul") return SourceDataset::TitanVul;
    if (name == "cleanvul") return SourceDataset::CleanVul;
    if (name == "custom") return SourceDataset::Custom;
    throw Error(ErrorCode::Config, "unknown dataset adapter '" + name + "'");
}

void DatasetRecord::validate() const {
    auto fail = [this](const std::string& what) {
        std::string id = record_id.empty() ? "<no id>" : record_id;
        throw Error(ErrorCode::Schema, "record " + id + ": " + what);
    };
    if (record_id.empty()) fail("record_id is empty");
    if (function_name.empty()) fail("function_name is empty");
    if (file_path.empty()) fail("file_path is empty");
    if (sample_code().empty())
        fail(label ? std::string("code_before is empty for a vulnerable record")
                   : std::string("code_after is empty for a benign record"));
    if (sample_revision().empty())
        fail(label ? std::string("vulnerable_revision is empty for a vulnerable record")
                   : std::string("fix_revision is empty for a benign record"));
}

nlohmann::json DatasetRecord::to_json() const {
    nlohmann::json j{
        {"record_id", record_id},
        {"dataset", source_dataset_name(dataset)},
        {"project_url", project_url},
        {"fix_revision", fix_revision},
        {"vulnerable_revision", vulnerable_revision},
        {"file_path", file_path},
        {"function_name", function_name},
        {"code_before", code_before},
        {"code_after", code_after},
        {"diff", diff},
        {"label", label},
        {"cwe_ids", cwe_ids},
        {"commit_message", commit_message},
    };
    if (cve_id) j["cve_id"] = *cve_id;
    if (cve_description) j["cve_description"] = *cve_description;
    return j;
}

DatasetRecord DatasetRecord::from_json(const nlohmann::json& j) {
    DatasetRecord r;
    try {
        r.record_id = j.at("record_id").get<std::string>();
        r.dataset = source_dataset_from_name(j.at("dataset").get<std::string>());
        r.project_url = j.at("project_url").get<std::string>();
        r.fix_revision = j.at("fix_revision").get<std::string>();
        r.vulnerable_revision = j.at("vulnerable_revision").get<std::string>();
        r.file_path = j.at("file_path").get<std::string>();
        r.function_name = j.at("function_name").get<std::string>();
        r.code_before = j.at("code_before").get<std::string>();
        r.code_after = j.at("code_after").get<std::string>();
        r.diff = j.at("diff").get<std::string>();
        r.label = j.at("label").get<bool>();
        r.cwe_ids = j.at("cwe_ids").get<std::vector<std::string>>();
        r.commit_message = j.at("commit_message").get<std::string>();
        if (j.contains("cve_id") && !j["cve_id"].is_null())
            r.cve_id = j["cve_id"].get<std::string>();
        if (j.contains("cve_description") && !j["cve_description"].is_null())
            r.cve_description = j["cve_description"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("bad record json: ") + e.what());
    }
    return r;
}

}  // namespace ctxvul::dataset
