#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace taskgrad {

/// Symmetric K x K matrix over task pairs with per-entry validity flags.
/// Invalid entries hold 0 and are skipped by every consumer.
struct PairwiseMatrix {
    enum class Kind { gradient, empirical, overlap, ground_truth };

    Kind kind = Kind::gradient;
    int k = 0;
    std::vector<double> values;   // k*k, row-major
    std::vector<std::uint8_t> valid;

    PairwiseMatrix() = default;
    PairwiseMatrix(Kind kind_, int k_)
        : kind(kind_), k(k_), values(static_cast<std::size_t>(k_) * k_, 0.0),
          valid(static_cast<std::size_t>(k_) * k_, 0) {}

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * k + j]; }
    bool is_valid(int i, int j) const { return valid[static_cast<std::size_t>(i) * k + j] != 0; }

    /// Sets (i,j) and (j,i) together; the matrix is symmetric by contract.
    void set_sym(int i, int j, double v, bool ok) {
        values[static_cast<std::size_t>(i) * k + j] = v;
        values[static_cast<std::size_t>(j) * k + i] = v;
        valid[static_cast<std::size_t>(i) * k + j] = ok ? 1 : 0;
        valid[static_cast<std::size_t>(j) * k + i] = ok ? 1 : 0;
    }

    bool all_valid() const {
        for (auto f : valid)
            if (!f) return false;
        return true;
    }
};

const char* kind_name(PairwiseMatrix::Kind kind);

/// Square CSV with a header row/column of task names; invalid entries are
/// written as empty cells.
void write_matrix_csv(std::ostream& out, const PairwiseMatrix& m,
                      const std::vector<std::string>& task_names);
void write_matrix_csv(const std::string& path, const PairwiseMatrix& m,
                      const std::vector<std::string>& task_names);

/// Inverse of write_matrix_csv. Returns the matrix and the task names.
PairwiseMatrix read_matrix_csv(std::istream& in, PairwiseMatrix::Kind kind,
                               std::vector<std::string>* task_names = nullptr);
PairwiseMatrix read_matrix_csv(const std::string& path, PairwiseMatrix::Kind kind,
                               std::vector<std::string>* task_names = nullptr);

}  // namespace taskgrad
