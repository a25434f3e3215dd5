#include "taskgrad/conflict.hpp"

#include <cmath>

#include "taskgrad/errors.hpp"

namespace taskgrad {

namespace {
constexpr double kNormFloor = 1e-12;
}

double cosine_similarity(const GradientVector& a, const GradientVector& b) {
    if (a.values.size() != b.values.size())
        throw config_error("cosine_similarity: gradient lengths differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    const double norm_a = std::sqrt(na), norm_b = std::sqrt(nb);
    if (norm_a < kNormFloor || norm_b < kNormFloor) return 0.0;
    return dot / (norm_a * norm_b);
}

PairwiseMatrix conflict_matrix(const std::vector<GradientVector>& grads, int n_tasks) {
    if (grads.size() < 2) throw data_error("conflict_matrix needs at least two gradients");

    std::vector<const GradientVector*> by_task(n_tasks, nullptr);
    std::vector<double> norms(n_tasks, 0.0);
    for (const auto& g : grads) {
        if (g.task_id < 0 || g.task_id >= n_tasks)
            throw config_error("conflict_matrix: gradient task_id out of range");
        by_task[g.task_id] = &g;
        double nn = 0.0;
        for (double v : g.values) nn += v * v;
        norms[g.task_id] = std::sqrt(nn);
    }

    PairwiseMatrix m(PairwiseMatrix::Kind::gradient, n_tasks);
    for (int i = 0; i < n_tasks; ++i) {
        const bool ok_i = by_task[i] && norms[i] >= kNormFloor;
        m.set_sym(i, i, ok_i ? 1.0 : 0.0, ok_i);
        for (int j = i + 1; j < n_tasks; ++j) {
            const bool ok = ok_i && by_task[j] && norms[j] >= kNormFloor;
            m.set_sym(i, j, ok ? cosine_similarity(*by_task[i], *by_task[j]) : 0.0, ok);
        }
    }
    return m;
}

void ConflictAccumulator::record(long step, PairwiseMatrix matrix) {
    if (!records.empty() && step <= records.back().step)
        throw config_error("conflict records must have strictly increasing steps");
    records.push_back({step, std::move(matrix)});
}

namespace {

PairwiseMatrix mean_of_records(const std::vector<const PairwiseMatrix*>& mats) {
    const int k = mats.front()->k;
    PairwiseMatrix out(PairwiseMatrix::Kind::gradient, k);
    for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j) {
            double sum = 0.0;
            long cnt = 0;
            for (const auto* m : mats) {
                if (!m->is_valid(i, j)) continue;
                sum += m->at(i, j);
                ++cnt;
            }
            // Valid-only mean; entries never valid in the window stay invalid.
            if (cnt > 0)
                out.set_sym(i, j, sum / cnt, true);
        }
    }
    return out;
}

}  // namespace

PairwiseMatrix finalize(const ConflictAccumulator& acc) {
    if (acc.records.empty()) throw data_error("no conflict records");
    const long last = acc.total_steps_hint > 0 ? acc.total_steps_hint : acc.records.back().step;
    const long cutoff = static_cast<long>(std::ceil((1.0 - acc.window_fraction) * last));

    std::vector<const PairwiseMatrix*> windowed;
    for (const auto& rec : acc.records)
        if (rec.step >= cutoff && rec.step <= last) windowed.push_back(&rec.matrix);
    if (windowed.empty())
        throw data_error("no records in averaging window [" + std::to_string(cutoff) + ", " +
                         std::to_string(last) + "]");
    return mean_of_records(windowed);
}

std::vector<PairwiseMatrix> matrix_at_checkpoints(const ConflictAccumulator& acc,
                                                  const std::vector<long>& checkpoint_steps) {
    if (acc.records.empty()) throw data_error("no conflict records");
    std::vector<PairwiseMatrix> out;
    for (long cp : checkpoint_steps) {
        std::vector<const PairwiseMatrix*> upto;
        for (const auto& rec : acc.records)
            if (rec.step <= cp) upto.push_back(&rec.matrix);
        if (upto.empty())
            throw data_error("checkpoint step " + std::to_string(cp) +
                             " precedes the first recorded matrix");
        out.push_back(mean_of_records(upto));
    }
    return out;
}

}  // namespace taskgrad
