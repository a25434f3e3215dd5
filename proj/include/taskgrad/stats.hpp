#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "taskgrad/pairwise.hpp"
#include "taskgrad/panel.hpp"

namespace taskgrad {

struct CorrelationResult {
    double pearson_r = 0.0;
    double spearman_rho = 0.0;
    double p_value = 1.0;
    int n_pairs = 0;
};

struct SigmoidFit {
    double L = 0.0;
    double k = 0.0;
    double x0 = 0.0;  // percent units
    double b = 0.0;
    double r_squared = 0.0;
    int n_points = 0;

    double eval(double x) const;
};

/// Product-moment correlation. Requires n >= 3 and nonzero variance on both
/// sides.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson of average-ranked data; ties get average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of task labels over co-measured samples. Entries with
/// fewer than min_shared shared samples, or with degenerate variance, are
/// flagged invalid rather than raising.
PairwiseMatrix empirical_matrix(const TaskPanel& panel, int min_shared = 20);

/// Pearson/Spearman over the jointly valid strict upper triangles of two
/// matrices, with a permutation p-value from shuffling one side's pair
/// vector. Requires >= 3 jointly valid pairs.
CorrelationResult matrix_correlation(const PairwiseMatrix& a, const PairwiseMatrix& b,
                                     int n_permutations, std::uint64_t seed);

/// Same test on plain paired vectors (used where pairs are pooled across
/// seeds before correlating).
CorrelationResult vector_correlation(std::span<const double> x, std::span<const double> y,
                                     int n_permutations, std::uint64_t seed);

/// Jointly valid strict-upper-triangle entries of two matrices, vectorized in
/// a fixed (i,j) order.
std::pair<std::vector<double>, std::vector<double>> joint_upper_triangle(
    const PairwiseMatrix& a, const PairwiseMatrix& b);

/// Least-squares fit of r(x) = L / (1 + exp(-k (x - x0))) + b by multi-start
/// damped Gauss-Newton. Throws numeric_error when the data is degenerate or
/// no start converges.
SigmoidFit fit_sigmoid(std::span<const double> x_percent, std::span<const double> r);

/// Signal-to-noise curve alpha*s2 / (alpha*s2 + (1-alpha)*n2) * rho_max.
double snr_model(double alpha, double sigma_signal_sq, double sigma_noise_sq, double rho_max);

}  // namespace taskgrad
