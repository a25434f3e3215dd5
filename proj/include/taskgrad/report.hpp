#pragma once

#include <string>

#include "taskgrad/experiments.hpp"

namespace taskgrad {

/// Full report as one JSON document (deterministic byte-for-byte given the
/// same config; no timestamps inside).
Json report_to_json(const ExperimentReport& report);
std::string report_json_string(const ExperimentReport& report);

/// Row table as CSV; columns follow the first row's key order, missing or
/// null values serialize as empty cells.
std::string report_csv_string(const ExperimentReport& report);

/// FNV-1a over the canonical config echo, used in report filenames.
std::string config_hash(const Json& config_echo);

struct ReportPaths {
    std::string json_path;
    std::string csv_path;
};

/// Writes `<out_dir>/<name>_<timestamp>_<hash>.{json,csv}`. The timestamp
/// appears only in the filename.
ReportPaths write_report_files(const ExperimentReport& report, const std::string& out_dir);

}  // namespace taskgrad
