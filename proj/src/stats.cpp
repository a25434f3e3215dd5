#include "taskgrad/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "taskgrad/errors.hpp"
#include "taskgrad/ioutil.hpp"

namespace taskgrad {

namespace {

struct Moments {
    double mean_x = 0.0, mean_y = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
    Moments m;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        m.mean_x += x[i];
        m.mean_y += y[i];
    }
    m.mean_x /= n;
    m.mean_y /= n;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - m.mean_x, dy = y[i] - m.mean_y;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw config_error("pearson: length mismatch");
    if (x.size() < 3) throw data_error("pearson needs at least 3 points");
    const Moments m = moments(x, y);
    if (m.sxx <= 0.0 || m.syy <= 0.0)
        throw data_error("pearson undefined: zero variance input");
    return m.sxy / std::sqrt(m.sxx * m.syy);
}

std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw config_error("spearman: length mismatch");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

PairwiseMatrix empirical_matrix(const TaskPanel& panel, int min_shared) {
    const int k = panel.k;
    PairwiseMatrix e(PairwiseMatrix::Kind::empirical, k);
    for (int i = 0; i < k; ++i) e.set_sym(i, i, 1.0, true);

    std::vector<double> xi, xj;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            xi.clear();
            xj.clear();
            for (int s = 0; s < panel.n; ++s) {
                if (panel.measured(s, i) && panel.measured(s, j)) {
                    xi.push_back(panel.label(s, i));
                    xj.push_back(panel.label(s, j));
                }
            }
            if (static_cast<int>(xi.size()) < std::max(min_shared, 3)) continue;
            const Moments m = moments(xi, xj);
            if (m.sxx <= 0.0 || m.syy <= 0.0) continue;  // degenerate variance
            e.set_sym(i, j, m.sxy / std::sqrt(m.sxx * m.syy), true);
        }
    }
    return e;
}

std::pair<std::vector<double>, std::vector<double>> joint_upper_triangle(
    const PairwiseMatrix& a, const PairwiseMatrix& b) {
    if (a.k != b.k) throw config_error("matrix_correlation: matrices differ in size");
    std::vector<double> va, vb;
    for (int i = 0; i < a.k; ++i) {
        for (int j = i + 1; j < a.k; ++j) {
            if (!a.is_valid(i, j) || !b.is_valid(i, j)) continue;
            va.push_back(a.at(i, j));
            vb.push_back(b.at(i, j));
        }
    }
    return {std::move(va), std::move(vb)};
}

CorrelationResult vector_correlation(std::span<const double> x, std::span<const double> y,
                                     int n_permutations, std::uint64_t seed) {
    if (x.size() != y.size()) throw config_error("vector_correlation: length mismatch");
    if (x.size() < 3)
        throw data_error("insufficient data: need at least 3 jointly valid pairs, have " +
                         std::to_string(x.size()));

    CorrelationResult res;
    res.n_pairs = static_cast<int>(x.size());
    res.pearson_r = pearson(x, y);
    res.spearman_rho = spearman(x, y);

    if (n_permutations <= 0) {
        res.p_value = 1.0;
        return res;
    }

    // Two-sided permutation test: shuffle one side's pair vector.
    std::mt19937_64 rng(seed);
    std::vector<double> perm(y.begin(), y.end());
    const double threshold = std::abs(res.pearson_r) - 1e-12;
    long hits = 0;
    for (int it = 0; it < n_permutations; ++it) {
        std::shuffle(perm.begin(), perm.end(), rng);
        if (std::abs(pearson(x, perm)) >= threshold) ++hits;
    }
    res.p_value = static_cast<double>(hits + 1) / static_cast<double>(n_permutations + 1);
    return res;
}

CorrelationResult matrix_correlation(const PairwiseMatrix& a, const PairwiseMatrix& b,
                                     int n_permutations, std::uint64_t seed) {
    const auto [va, vb] = joint_upper_triangle(a, b);
    return vector_correlation(va, vb, n_permutations, seed);
}

double SigmoidFit::eval(double x) const {
    return L / (1.0 + std::exp(-k * (x - x0))) + b;
}

namespace {

struct GaussNewtonResult {
    double params[4] = {0, 0, 0, 0};  // L, k, x0, b
    double ssr = std::numeric_limits<double>::infinity();
    bool converged = false;
};

double sigmoid_ssr(std::span<const double> x, std::span<const double> y, const double* p) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-p[1] * (x[i] - p[2])));
        const double r = y[i] - (p[0] * s + p[3]);
        ssr += r * r;
    }
    return ssr;
}

// Solves the 4x4 normal equations by Gaussian elimination with partial
// pivoting. Returns false on a (near-)singular system.
bool solve4(double a[4][4], double rhs[4], double out[4]) {
    int piv[4] = {0, 1, 2, 3};
    for (int col = 0; col < 4; ++col) {
        int best = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(a[piv[r]][col]) > std::abs(a[piv[best]][col])) best = r;
        std::swap(piv[col], piv[best]);
        const double d = a[piv[col]][col];
        if (std::abs(d) < 1e-300) return false;
        for (int r = col + 1; r < 4; ++r) {
            const double f = a[piv[r]][col] / d;
            for (int c = col; c < 4; ++c) a[piv[r]][c] -= f * a[piv[col]][c];
            rhs[piv[r]] -= f * rhs[piv[col]];
        }
    }
    for (int col = 3; col >= 0; --col) {
        double v = rhs[piv[col]];
        for (int c = col + 1; c < 4; ++c) v -= a[piv[col]][c] * out[c];
        out[col] = v / a[piv[col]][col];
    }
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(out[i])) return false;
    return true;
}

GaussNewtonResult gauss_newton(std::span<const double> x, std::span<const double> y,
                               const double start[4]) {
    GaussNewtonResult res;
    double p[4] = {start[0], start[1], start[2], start[3]};
    double ssr = sigmoid_ssr(x, y, p);

    for (int iter = 0; iter < 200; ++iter) {
        // Jacobian of the model wrt (L, k, x0, b), normal equations JtJ d = Jtr.
        double jtj[4][4] = {};
        double jtr[4] = {};
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-p[1] * (x[i] - p[2])));
            const double ds = s * (1.0 - s);
            const double jac[4] = {s, p[0] * ds * (x[i] - p[2]), -p[0] * p[1] * ds, 1.0};
            const double resid = y[i] - (p[0] * s + p[3]);
            for (int a = 0; a < 4; ++a) {
                jtr[a] += jac[a] * resid;
                for (int b = a; b < 4; ++b) jtj[a][b] += jac[a] * jac[b];
            }
        }
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];

        double step[4];
        if (!solve4(jtj, jtr, step)) break;

        // Halve the step until the residual improves.
        double scale = 1.0;
        double next_ssr = ssr;
        double cand[4];
        bool improved = false;
        for (int half = 0; half < 40; ++half, scale *= 0.5) {
            for (int a = 0; a < 4; ++a) cand[a] = p[a] + scale * step[a];
            next_ssr = sigmoid_ssr(x, y, cand);
            if (std::isfinite(next_ssr) && next_ssr <= ssr) {
                improved = true;
                break;
            }
        }
        if (!improved) {
            res.converged = true;  // stuck at a stationary point
            break;
        }
        std::copy(cand, cand + 4, p);
        const double change = (ssr - next_ssr) / std::max(ssr, 1e-30);
        ssr = next_ssr;
        if (change < 1e-10 || ssr < 1e-28) {
            res.converged = true;
            break;
        }
    }
    std::copy(p, p + 4, res.params);
    res.ssr = ssr;
    return res;
}

}  // namespace

SigmoidFit fit_sigmoid(std::span<const double> x_percent, std::span<const double> r) {
    if (x_percent.size() != r.size()) throw config_error("fit_sigmoid: length mismatch");
    if (x_percent.size() < 5) throw data_error("fit_sigmoid needs at least 5 points");
    {
        std::vector<double> distinct(x_percent.begin(), x_percent.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < 3)
            throw data_error("fit_sigmoid needs at least 3 distinct overlap values");
    }

    const double y_min = *std::min_element(r.begin(), r.end());
    const double y_max = *std::max_element(r.begin(), r.end());
    double ss_tot = 0.0;
    {
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
        for (double v : r) ss_tot += (v - mean) * (v - mean);
    }
    if (ss_tot <= 0.0)
        throw numeric_error("fit_sigmoid: constant response, slope unidentifiable");

    const double starts_x0[] = {20.0, 30.0, 40.0, 50.0};
    const double starts_k[] = {0.05, 0.15, 0.5};
    GaussNewtonResult best;
    for (double x0 : starts_x0) {
        for (double k : starts_k) {
            const double start[4] = {y_max - y_min, k, x0, y_min};
            const auto res = gauss_newton(x_percent, r, start);
            if (res.converged && res.ssr < best.ssr) best = res;
        }
    }
    if (!best.converged || !std::isfinite(best.ssr))
        throw numeric_error("fit_sigmoid: no start converged (best residual " +
                            fmt_double(best.ssr) + ")");

    SigmoidFit fit;
    fit.L = best.params[0];
    fit.k = best.params[1];
    fit.x0 = best.params[2];
    fit.b = best.params[3];
    fit.r_squared = std::max(0.0, 1.0 - best.ssr / ss_tot);
    fit.n_points = static_cast<int>(x_percent.size());
    return fit;
}

double snr_model(double alpha, double sigma_signal_sq, double sigma_noise_sq, double rho_max) {
    if (!(sigma_signal_sq > 0.0) || !(sigma_noise_sq > 0.0))
        throw config_error("snr_model: variances must be positive");
    const double signal = alpha * sigma_signal_sq;
    const double denom = signal + (1.0 - alpha) * sigma_noise_sq;
    if (denom == 0.0) return 0.0;
    return signal / denom * rho_max;
}

}  // namespace taskgrad
