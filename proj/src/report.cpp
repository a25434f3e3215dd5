#include "taskgrad/report.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "taskgrad/errors.hpp"
#include "taskgrad/ioutil.hpp"

namespace taskgrad {

Json report_to_json(const ExperimentReport& report) {
    Json doc;
    doc["name"] = report.name;
    doc["config_echo"] = report.config_echo;
    doc["seeds"] = report.seeds;
    doc["rows"] = report.rows;
    doc["derived"] = report.derived;
    return doc;
}

std::string report_json_string(const ExperimentReport& report) {
    return report_to_json(report).dump(2) + "\n";
}

std::string report_csv_string(const ExperimentReport& report) {
    std::string out;
    if (report.rows.empty()) return out;

    std::vector<std::string> columns;
    for (const auto& [key, value] : report.rows.front().items()) columns.push_back(key);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (c) out += ',';
        out += columns[c];
    }
    out += '\n';

    for (const auto& row : report.rows) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c) out += ',';
            if (!row.contains(columns[c])) continue;
            const auto& v = row.at(columns[c]);
            if (v.is_null()) continue;
            if (v.is_string()) out += v.get<std::string>();
            else if (v.is_boolean()) out += v.get<bool>() ? "true" : "false";
            else if (v.is_number_integer()) out += std::to_string(v.get<long long>());
            else if (v.is_number_unsigned()) out += std::to_string(v.get<unsigned long long>());
            else out += fmt_double(v.get<double>());
        }
        out += '\n';
    }
    return out;
}

std::string config_hash(const Json& config_echo) {
    const std::string dumped = config_echo.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : dumped) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 12);
}

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    return buf;
}

}  // namespace

ReportPaths write_report_files(const ExperimentReport& report, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw data_error("cannot create output directory " + out_dir + ": " + ec.message());

    const std::string stem =
        report.name + "_" + utc_timestamp() + "_" + config_hash(report.config_echo);
    ReportPaths paths;
    paths.json_path = (std::filesystem::path(out_dir) / (stem + ".json")).string();
    paths.csv_path = (std::filesystem::path(out_dir) / (stem + ".csv")).string();

    std::ofstream jf(paths.json_path, std::ios::binary);
    if (!jf) throw data_error("cannot write " + paths.json_path);
    jf << report_json_string(report);

    std::ofstream cf(paths.csv_path, std::ios::binary);
    if (!cf) throw data_error("cannot write " + paths.csv_path);
    cf << report_csv_string(report);
    return paths;
}

}  // namespace taskgrad
