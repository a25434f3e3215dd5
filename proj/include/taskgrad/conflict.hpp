#pragma once

#include <vector>

#include "taskgrad/nnet.hpp"
#include "taskgrad/pairwise.hpp"

namespace taskgrad {

/// Cosine similarity of two equal-length gradient vectors. Returns 0 when
/// either norm is below 1e-12; the caller marks such entries invalid.
double cosine_similarity(const GradientVector& a, const GradientVector& b);

/// All pairwise cosines among the gradients present in a batch. `n_tasks` is
/// the full task count; tasks without a gradient in `grads` get invalid rows
/// and columns, as do near-zero gradients.
PairwiseMatrix conflict_matrix(const std::vector<GradientVector>& grads, int n_tasks);

/// Ordered per-step conflict matrices plus the averaging schedule. The
/// averaging window covers the final window_fraction of total_steps_hint.
struct ConflictAccumulator {
    struct Record {
        long step = 0;
        PairwiseMatrix matrix;
    };

    std::vector<Record> records;
    long total_steps_hint = 0;
    double window_fraction = 0.20;

    void record(long step, PairwiseMatrix matrix);
};

/// Per-entry mean over the records inside the averaging window, counting only
/// the steps where the entry was valid. Throws when no record falls in the
/// window.
PairwiseMatrix finalize(const ConflictAccumulator& acc);

/// Running average of all records up to each checkpoint step.
std::vector<PairwiseMatrix> matrix_at_checkpoints(const ConflictAccumulator& acc,
                                                  const std::vector<long>& checkpoint_steps);

}  // namespace taskgrad
