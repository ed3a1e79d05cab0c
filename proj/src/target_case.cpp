#include "vulnharness/target_case.hpp"

#include "vulnharness/io.hpp"

namespace vulnharness {

void TargetCase::validate() const {
    if (id.empty()) throw HarnessError(ErrorKind::validation, "case id is empty");
    if (code.empty()) throw HarnessError(ErrorKind::validation, "case " + id + ": code is empty");
    if (ground_truth_vulnerable != ground_truth_type.has_value()) {
        throw HarnessError(ErrorKind::validation,
                           "case " + id +
                               ": ground_truth_type must be present iff the case is vulnerable");
    }
}

nlohmann::json to_json(const TargetCase& c) {
    nlohmann::json j = {
        {"id", c.id},
        {"language", to_string(c.language)},
        {"code", c.code},
        {"ground_truth_vulnerable", c.ground_truth_vulnerable},
        {"report_functions", c.report_functions},
        {"project", c.project},
        {"period", c.period},
    };
    auto opt = [](const std::optional<std::string>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    j["ground_truth_type"] = opt(c.ground_truth_type);
    j["functionality_summary"] = opt(c.functionality_summary);
    j["function_name"] = opt(c.function_name);
    return j;
}

namespace {
std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}
}  // namespace

TargetCase target_case_from_json(const nlohmann::json& j) {
    TargetCase c;
    try {
        c.id = j.at("id").get<std::string>();
        c.language = parse_language(j.at("language").get<std::string>());
        c.code = j.at("code").get<std::string>();
        c.ground_truth_vulnerable = j.at("ground_truth_vulnerable").get<bool>();
        c.ground_truth_type = opt_string(j, "ground_truth_type");
        c.report_functions = j.value("report_functions", std::vector<std::string>{});
        c.functionality_summary = opt_string(j, "functionality_summary");
        c.project = j.value("project", "");
        c.period = j.value("period", "");
        c.function_name = opt_string(j, "function_name");
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::validation, std::string("bad case record: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<TargetCase> load_cases(const std::filesystem::path& path) {
    std::vector<TargetCase> cases;
    for (const auto& row : read_jsonl(path)) cases.push_back(target_case_from_json(row));
    return cases;
}

void save_cases(const std::filesystem::path& path, const std::vector<TargetCase>& cases) {
    std::vector<nlohmann::json> rows;
    rows.reserve(cases.size());
    for (const auto& c : cases) rows.push_back(to_json(c));
    write_jsonl(path, rows);
}

}  // namespace vulnharness
