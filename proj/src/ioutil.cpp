#include "taskgrad/ioutil.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace taskgrad {

std::string fmt_double(double v) {
    char buf[40];
    // Shortest representation that parses back to the same bits.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

bool parse_double(const std::string& cell, double* out) {
    if (cell.empty()) return false;
    char* end = nullptr;
    double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size()) return false;
    if (!std::isfinite(v)) return false;
    *out = v;
    return true;
}

}  // namespace taskgrad
