#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskgrad/nnet.hpp"
#include "taskgrad/panel.hpp"

namespace taskgrad {

using Json = nlohmann::ordered_json;

/// Architecture plus optimizer knobs shared by every model an experiment
/// trains; per-cell seeds are derived, not configured.
struct TrainingSpec {
    std::vector<int> hidden_dims = {32, 16};
    Activation activation = Activation::tanh;
    double learning_rate = 0.001;
    int epochs = 100;
    int batch_size = 32;
    int log_interval_steps = 10;
    double window_fraction = 0.20;

    TrainConfig train_config(std::uint64_t seed) const;
    ArchSpec arch(int input_dim, int n_tasks) const;
};

struct ExperimentConfig {
    std::string name;
    PanelSpec panel;
    std::string panel_csv;  // audit: load this file instead of generating
    TrainingSpec training;

    std::vector<std::uint64_t> seeds;
    std::vector<double> overlap_grid;    // phase, vardecomp
    int n_permutations = 10000;
    int min_shared = 20;
    double prop1_alpha = 0.0;            // prop1
    std::vector<int> checkpoint_epochs;  // dynamics
    double split_fraction = 0.8;         // benefit, group
    std::vector<int> n_groups_list;      // group
    int n_random_trials = 10;            // group
    double unreliable_below_pct = 30.0;  // audit regime thresholds
    double reliable_from_pct = 40.0;
    int n_workers = 1;
    std::string output_dir = "out";
};

struct ExperimentReport {
    std::string name;
    Json config_echo;
    std::vector<Json> rows;
    Json derived;
    std::vector<std::uint64_t> seeds;
};

ExperimentReport run_synthetic_validation(const ExperimentConfig& cfg);
ExperimentReport run_phase_transition(const ExperimentConfig& cfg);
ExperimentReport run_prop1_null(const ExperimentConfig& cfg);
ExperimentReport run_variance_decomposition(const ExperimentConfig& cfg);
ExperimentReport run_cross_domain(const ExperimentConfig& cfg);
ExperimentReport run_dynamics(const ExperimentConfig& cfg);
ExperimentReport run_benefit(const ExperimentConfig& cfg);
ExperimentReport run_grouping(const ExperimentConfig& cfg);
ExperimentReport run_audit(const ExperimentConfig& cfg);

/// Dispatch on cfg.name ("validate", "phase", "prop1", "vardecomp",
/// "crossdomain", "dynamics", "benefit", "group", "audit").
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Deterministic seed stream: one base seed, different salts for the panel,
/// training, overlap draw, split, and so on.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

/// Held-out R^2 of task `task` under `net`, over the given sample rows.
double r_squared(const Network& net, const TaskPanel& panel, int task,
                 const std::vector<int>& rows);

}  // namespace taskgrad
