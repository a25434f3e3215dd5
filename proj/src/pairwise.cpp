#include "taskgrad/pairwise.hpp"

#include <fstream>
#include <sstream>

#include "taskgrad/errors.hpp"
#include "taskgrad/ioutil.hpp"

namespace taskgrad {

const char* kind_name(PairwiseMatrix::Kind kind) {
    switch (kind) {
        case PairwiseMatrix::Kind::gradient: return "gradient";
        case PairwiseMatrix::Kind::empirical: return "empirical";
        case PairwiseMatrix::Kind::overlap: return "overlap";
        case PairwiseMatrix::Kind::ground_truth: return "ground_truth";
    }
    return "?";
}

void write_matrix_csv(std::ostream& out, const PairwiseMatrix& m,
                      const std::vector<std::string>& task_names) {
    if (static_cast<int>(task_names.size()) != m.k)
        throw data_error("matrix csv: task name count does not match matrix size");
    for (const auto& name : task_names) out << ',' << name;
    out << '\n';
    for (int i = 0; i < m.k; ++i) {
        out << task_names[i];
        for (int j = 0; j < m.k; ++j) {
            out << ',';
            if (m.is_valid(i, j)) out << fmt_double(m.at(i, j));
        }
        out << '\n';
    }
}

void write_matrix_csv(const std::string& path, const PairwiseMatrix& m,
                      const std::vector<std::string>& task_names) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for writing: " + path);
    write_matrix_csv(f, m, task_names);
}

PairwiseMatrix read_matrix_csv(std::istream& in, PairwiseMatrix::Kind kind,
                               std::vector<std::string>* task_names) {
    std::string line;
    if (!std::getline(in, line)) throw data_error("matrix csv: empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || !header[0].empty())
        throw data_error("matrix csv: malformed header");
    const int k = static_cast<int>(header.size()) - 1;
    std::vector<std::string> names(header.begin() + 1, header.end());

    PairwiseMatrix m(kind, k);
    for (int i = 0; i < k; ++i) {
        if (!std::getline(in, line)) throw data_error("matrix csv: truncated body");
        auto cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != k + 1)
            throw data_error("matrix csv: row " + std::to_string(i) + " has wrong width");
        if (cells[0] != names[i])
            throw data_error("matrix csv: row label mismatch at row " + std::to_string(i));
        for (int j = 0; j < k; ++j) {
            const auto& cell = cells[j + 1];
            if (cell.empty()) continue;
            double v = 0.0;
            if (!parse_double(cell, &v))
                throw data_error("matrix csv: bad number at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
            m.values[static_cast<std::size_t>(i) * k + j] = v;
            m.valid[static_cast<std::size_t>(i) * k + j] = 1;
        }
    }
    if (task_names) *task_names = std::move(names);
    return m;
}

PairwiseMatrix read_matrix_csv(const std::string& path, PairwiseMatrix::Kind kind,
                               std::vector<std::string>* task_names) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open: " + path);
    return read_matrix_csv(f, kind, task_names);
}

}  // namespace taskgrad
