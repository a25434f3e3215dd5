#pragma once

#include <optional>
#include <string>

#include "taskgrad/experiments.hpp"

namespace taskgrad {

inline const std::vector<std::string> kExperimentNames = {
    "validate", "phase", "prop1", "vardecomp", "crossdomain",
    "dynamics", "benefit", "group", "audit"};

struct ConfigOverrides {
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed_override;  // rebases the seed list
    std::optional<int> parallel;
};

/// Builds the fully defaulted config for one experiment.
ExperimentConfig default_config(const std::string& experiment);

/// Strict parse: unknown keys anywhere are config errors, as are type
/// mismatches. Absent keys take experiment-specific defaults.
ExperimentConfig config_from_json(const std::string& experiment, const Json& doc,
                                  const ConfigOverrides& overrides = {});

ExperimentConfig load_config_file(const std::string& experiment, const std::string& path,
                                  const ConfigOverrides& overrides = {});

/// Canonical echo with every default materialized; feeding it back through
/// config_from_json reproduces the identical config.
Json config_echo(const ExperimentConfig& cfg);

}  // namespace taskgrad
