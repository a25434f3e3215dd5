#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taskgrad/pairwise.hpp"

namespace taskgrad {

/// Feature matrix, per-task label vectors, and a validity mask saying which
/// samples are measured for which tasks. labels[i][t] is only meaningful
/// where mask[i][t] is true.
struct TaskPanel {
    int n = 0;     // samples
    int d_in = 0;  // feature columns
    int k = 0;     // tasks
    std::vector<double> features;  // n x d_in, row-major
    std::vector<double> labels;    // n x k, row-major
    std::vector<std::uint8_t> mask;
    std::vector<std::string> task_names;
    std::vector<std::string> sample_ids;

    double feature(int i, int j) const { return features[static_cast<std::size_t>(i) * d_in + j]; }
    double label(int i, int t) const { return labels[static_cast<std::size_t>(i) * k + t]; }
    bool measured(int i, int t) const { return mask[static_cast<std::size_t>(i) * k + t] != 0; }

    /// Indices of samples measured for task t (the paper-style valid set).
    std::vector<int> measured_samples(int task) const;

    /// Panel restricted to a subset of label columns; features are shared.
    TaskPanel select_tasks(const std::vector<int>& tasks) const;
    /// Panel restricted to a subset of rows.
    TaskPanel select_samples(const std::vector<int>& rows) const;

    void validate() const;  // throws data_error on broken invariants
};

/// Designed task weight matrix plus its derived cosine-similarity matrix.
struct GroundTruth {
    int k = 0;
    int l = 0;                    // latent features
    std::vector<double> weights;  // k x l, row-major
    double noise_sd = 0.0;
    PairwiseMatrix similarity;    // kind ground_truth, cos of weight rows

    double weight(int task, int latent) const { return weights[static_cast<std::size_t>(task) * l + latent]; }
};

enum class WeightScheme { random, two_block, custom };

struct PanelSpec {
    int n_samples = 2000;
    int n_latent = 10;
    int n_tasks = 8;
    WeightScheme scheme = WeightScheme::random;
    std::vector<double> custom_weights;  // n_tasks x n_latent when scheme == custom
    double noise_sd = 0.3;
    std::uint64_t seed = 1;
};

/// Draws standard-normal latent features and builds task labels as linear
/// combinations of them plus Gaussian noise. The returned panel is fully
/// measured (100% overlap).
std::pair<TaskPanel, GroundTruth> generate_panel(const PanelSpec& spec);

/// Re-masks a fully measured panel so that every task pair's Jaccard overlap
/// equals target_alpha within +/-0.02: all tasks share a common core of
/// samples and get equally sized disjoint remainders on top of it.
TaskPanel apply_overlap(const TaskPanel& panel, double target_alpha, std::uint64_t seed);

/// Jaccard index |C_i n C_j| / |C_i u C_j| for every task pair.
PairwiseMatrix pairwise_overlap(const TaskPanel& panel);

/// CSV schema: header `id,f0,...,f{d-1},task:<name>,...`; empty task cells
/// mean the sample is not measured for that task.
TaskPanel load_csv_panel(const std::string& path);
void save_csv_panel(const TaskPanel& panel, const std::string& path);

}  // namespace taskgrad
