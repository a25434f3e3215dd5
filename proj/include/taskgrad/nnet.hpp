#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taskgrad/panel.hpp"

namespace taskgrad {

struct ConflictAccumulator;  // conflict.hpp

enum class Activation { tanh, identity };

struct ArchSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims = {32, 16};  // encoder layer widths
    int n_tasks = 0;
    Activation activation = Activation::tanh;
};

/// Per-task gradient restricted to the shared encoder parameters, flattened
/// layer by layer as row-major weights followed by the bias.
struct GradientVector {
    std::vector<double> values;
    int task_id = -1;
    int n_samples = 0;  // samples that contributed
};

struct TrainConfig {
    double learning_rate = 0.001;
    int epochs = 100;
    int batch_size = 32;
    int log_interval_steps = 10;
    double averaging_window_fraction = 0.20;
    std::uint64_t seed = 0;

    void validate() const;  // throws config_error
};

/// Shared-encoder feedforward net with one scalar linear head per task.
/// The activation is applied after every encoder layer.
class Network {
  public:
    struct Layer {
        int in = 0, out = 0;
        std::vector<double> w;  // out x in, row-major
        std::vector<double> b;  // out
    };
    struct Head {
        std::vector<double> w;  // d_repr
        double b = 0.0;
    };

    Network() = default;

    int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
    int repr_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
    int n_tasks() const { return static_cast<int>(heads_.size()); }
    int encoder_param_count() const;
    Activation activation() const { return activation_; }
    std::uint64_t rng_seed() const { return seed_; }

    const std::vector<Layer>& layers() const { return layers_; }
    const std::vector<Head>& heads() const { return heads_; }

    /// Flattened encoder parameters in the fixed gradient order.
    std::vector<double> encoder_params() const;
    void set_encoder_params(const std::vector<double>& flat);

    /// Representation and per-task predictions for one sample.
    std::vector<double> representation(const double* x) const;
    double predict(const double* x, int task) const;

    friend Network init_network(const ArchSpec& spec, std::uint64_t seed);
    friend Network train(const Network& net, const TaskPanel& panel, const TrainConfig& cfg,
                         ConflictAccumulator* sink);

  private:
    std::vector<Layer> layers_;
    std::vector<Head> heads_;
    Activation activation_ = Activation::tanh;
    std::uint64_t seed_ = 0;
};

/// Deterministic construction: the same (spec, seed) gives bit-identical
/// parameters.
Network init_network(const ArchSpec& spec, std::uint64_t seed);

/// Mean squared error of task `task` over the samples in `sample_ids` that
/// carry a valid label for it. Throws data_error when none do.
double masked_task_loss(const Network& net, const TaskPanel& panel, int task,
                        const std::vector<int>& sample_ids);

/// d(masked_task_loss)/d(encoder params). Head parameters are excluded.
GradientVector task_gradient(const Network& net, const TaskPanel& panel, int task,
                             const std::vector<int>& sample_ids);

/// Mini-batch SGD on the sum of masked per-task losses. Every
/// log_interval_steps the per-task encoder gradients on the current batch are
/// turned into a conflict matrix and recorded into `sink` (pass nullptr to
/// skip logging). Fully deterministic given cfg.seed.
Network train(const Network& net, const TaskPanel& panel, const TrainConfig& cfg,
              ConflictAccumulator* sink);

struct GradientCheckReport {
    double max_rel_error = 0.0;
    int worst_coordinate = -1;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares the analytic encoder gradient against central finite differences
/// (h = 1e-5) coordinate by coordinate. Errors are measured relative to the
/// largest gradient magnitude so that near-zero coordinates do not blow up
/// the ratio.
GradientCheckReport gradient_check(const Network& net, const TaskPanel& panel, int task,
                                   const std::vector<int>& sample_ids, double tolerance);

}  // namespace taskgrad
