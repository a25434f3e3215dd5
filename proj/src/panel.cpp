#include "taskgrad/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "taskgrad/errors.hpp"
#include "taskgrad/ioutil.hpp"

namespace taskgrad {

std::vector<int> TaskPanel::measured_samples(int task) const {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (measured(i, task)) out.push_back(i);
    return out;
}

TaskPanel TaskPanel::select_tasks(const std::vector<int>& tasks) const {
    TaskPanel sub;
    sub.n = n;
    sub.d_in = d_in;
    sub.k = static_cast<int>(tasks.size());
    sub.features = features;
    sub.sample_ids = sample_ids;
    sub.labels.resize(static_cast<std::size_t>(n) * sub.k);
    sub.mask.resize(static_cast<std::size_t>(n) * sub.k);
    for (int t = 0; t < sub.k; ++t) sub.task_names.push_back(task_names[tasks[t]]);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < sub.k; ++t) {
            sub.labels[static_cast<std::size_t>(i) * sub.k + t] = label(i, tasks[t]);
            sub.mask[static_cast<std::size_t>(i) * sub.k + t] = mask[static_cast<std::size_t>(i) * k + tasks[t]];
        }
    }
    return sub;
}

TaskPanel TaskPanel::select_samples(const std::vector<int>& rows) const {
    TaskPanel sub;
    sub.n = static_cast<int>(rows.size());
    sub.d_in = d_in;
    sub.k = k;
    sub.task_names = task_names;
    sub.features.resize(static_cast<std::size_t>(sub.n) * d_in);
    sub.labels.resize(static_cast<std::size_t>(sub.n) * k);
    sub.mask.resize(static_cast<std::size_t>(sub.n) * k);
    for (int r = 0; r < sub.n; ++r) {
        const int i = rows[r];
        sub.sample_ids.push_back(sample_ids[i]);
        std::copy_n(features.begin() + static_cast<std::size_t>(i) * d_in, d_in,
                    sub.features.begin() + static_cast<std::size_t>(r) * d_in);
        std::copy_n(labels.begin() + static_cast<std::size_t>(i) * k, k,
                    sub.labels.begin() + static_cast<std::size_t>(r) * k);
        std::copy_n(mask.begin() + static_cast<std::size_t>(i) * k, k,
                    sub.mask.begin() + static_cast<std::size_t>(r) * k);
    }
    return sub;
}

void TaskPanel::validate() const {
    for (int t = 0; t < k; ++t) {
        bool any = false;
        for (int i = 0; i < n; ++i) {
            if (!measured(i, t)) continue;
            any = true;
            if (!std::isfinite(label(i, t)))
                throw data_error("panel: non-finite label for measured entry (sample " +
                                 std::to_string(i) + ", task " + std::to_string(t) + ")");
        }
        if (!any)
            throw data_error("panel: task " + task_names[t] + " has no measured samples");
    }
}

namespace {

std::vector<double> make_weights(const PanelSpec& spec, std::mt19937_64& rng) {
    const int k = spec.n_tasks, l = spec.n_latent;
    std::vector<double> w(static_cast<std::size_t>(k) * l, 0.0);
    // Weight entries are Normal(1, 1): task families in real panels share a
    // dominant direction, so most pairwise relationships are positive. A
    // zero-mean prior makes half the pairs antagonistic and the gradient
    // structure washes out.
    std::normal_distribution<double> normal(1.0, 1.0);

    switch (spec.scheme) {
        case WeightScheme::random:
            for (auto& v : w) v = normal(rng);
            break;
        case WeightScheme::two_block: {
            // First ceil(K/2) tasks live on latents [0, ceil(L/2)), the rest
            // on the remainder, so cross-block cosines are exactly zero.
            const int k_a = (k + 1) / 2;
            const int l_a = (l + 1) / 2;
            for (int t = 0; t < k; ++t) {
                const int lo = t < k_a ? 0 : l_a;
                const int hi = t < k_a ? l_a : l;
                for (int j = lo; j < hi; ++j) w[static_cast<std::size_t>(t) * l + j] = normal(rng);
            }
            break;
        }
        case WeightScheme::custom:
            if (static_cast<int>(spec.custom_weights.size()) != k * l)
                throw config_error("custom weight matrix must be n_tasks x n_latent");
            w = spec.custom_weights;
            break;
    }

    for (int t = 0; t < k; ++t) {
        double norm_sq = 0.0;
        for (int j = 0; j < l; ++j) norm_sq += w[static_cast<std::size_t>(t) * l + j] * w[static_cast<std::size_t>(t) * l + j];
        if (norm_sq == 0.0)
            throw config_error("weight row " + std::to_string(t) +
                               " is zero; its cosine similarity is undefined");
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (int j = 0; j < l; ++j) w[static_cast<std::size_t>(t) * l + j] *= inv;
    }
    return w;
}

PairwiseMatrix cosine_of_rows(const std::vector<double>& w, int k, int l) {
    PairwiseMatrix sim(PairwiseMatrix::Kind::ground_truth, k);
    for (int i = 0; i < k; ++i) sim.set_sym(i, i, 1.0, true);
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (int c = 0; c < l; ++c) {
                const double a = w[static_cast<std::size_t>(i) * l + c];
                const double b = w[static_cast<std::size_t>(j) * l + c];
                dot += a * b;
                ni += a * a;
                nj += b * b;
            }
            sim.set_sym(i, j, dot / std::sqrt(ni * nj), true);
        }
    }
    return sim;
}

}  // namespace

std::pair<TaskPanel, GroundTruth> generate_panel(const PanelSpec& spec) {
    if (spec.n_latent < 1) throw config_error("n_latent must be >= 1");
    if (spec.n_tasks < 2) throw config_error("n_tasks must be >= 2");
    if (spec.n_samples < 10) throw config_error("n_samples must be >= 10");
    if (spec.noise_sd < 0.0) throw config_error("noise_sd must be >= 0");

    std::mt19937_64 rng(spec.seed);
    const int n = spec.n_samples, l = spec.n_latent, k = spec.n_tasks;

    GroundTruth gt;
    gt.k = k;
    gt.l = l;
    gt.noise_sd = spec.noise_sd;
    gt.weights = make_weights(spec, rng);
    gt.similarity = cosine_of_rows(gt.weights, k, l);

    TaskPanel panel;
    panel.n = n;
    panel.d_in = l;
    panel.k = k;
    panel.features.resize(static_cast<std::size_t>(n) * l);
    panel.labels.resize(static_cast<std::size_t>(n) * k);
    panel.mask.assign(static_cast<std::size_t>(n) * k, 1);

    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& z : panel.features) z = normal(rng);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < k; ++t) {
            double y = 0.0;
            for (int j = 0; j < l; ++j) y += gt.weight(t, j) * panel.feature(i, j);
            if (spec.noise_sd > 0.0) y += spec.noise_sd * normal(rng);
            panel.labels[static_cast<std::size_t>(i) * k + t] = y;
        }
    }

    for (int i = 0; i < n; ++i) panel.sample_ids.push_back(std::to_string(i));
    for (int t = 0; t < k; ++t) panel.task_names.push_back("y" + std::to_string(t));
    return {std::move(panel), std::move(gt)};
}

TaskPanel apply_overlap(const TaskPanel& panel, double target_alpha, std::uint64_t seed) {
    if (target_alpha < 0.0 || target_alpha > 1.0)
        throw config_error("target overlap must lie in [0, 1]");
    for (auto f : panel.mask)
        if (!f) throw data_error("apply_overlap expects a fully measured panel");

    const int n = panel.n, k = panel.k;
    // Equal per-task counts m with a core of size s shared by all tasks and
    // disjoint remainders: every pair then has Jaccard s / (2m - s). Take the
    // largest m whose rounded core still fits in n samples.
    const long m_upper = static_cast<long>(std::floor(
        n * (1.0 + target_alpha) / (k - (k - 2) * target_alpha)));
    long m = -1, s = 0;
    for (long cand = m_upper; cand >= 1; --cand) {
        long core = std::lround(2.0 * static_cast<double>(cand) * target_alpha /
                                (1.0 + target_alpha));
        core = std::clamp(core, 0L, cand);
        if (k * cand - (k - 1) * core > n) continue;
        m = cand;
        s = core;
        break;
    }
    if (m < 20)
        throw data_error("insufficient samples: per-task count would be " + std::to_string(m) +
                         " (< 20) at overlap " + fmt_double(target_alpha));
    const double achieved = (2 * m - s) > 0 ? static_cast<double>(s) / static_cast<double>(2 * m - s) : 1.0;
    if (std::abs(achieved - target_alpha) > 0.02)
        throw numeric_error("overlap construction missed target: achieved " + fmt_double(achieved));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    TaskPanel out = panel;
    out.mask.assign(static_cast<std::size_t>(n) * k, 0);
    long pos = 0;
    for (; pos < s; ++pos)  // shared core, measured for every task
        for (int t = 0; t < k; ++t) out.mask[static_cast<std::size_t>(order[pos]) * k + t] = 1;
    for (int t = 0; t < k; ++t)
        for (long r = 0; r < m - s; ++r, ++pos)
            out.mask[static_cast<std::size_t>(order[pos]) * k + t] = 1;
    return out;
}

PairwiseMatrix pairwise_overlap(const TaskPanel& panel) {
    const int k = panel.k;
    std::vector<std::vector<std::uint8_t>> measured(k);
    std::vector<long> counts(k, 0);
    for (int t = 0; t < k; ++t) {
        measured[t].resize(panel.n);
        for (int i = 0; i < panel.n; ++i) {
            measured[t][i] = panel.measured(i, t);
            counts[t] += measured[t][i];
        }
        if (counts[t] == 0)
            throw data_error("pairwise_overlap: task " + panel.task_names[t] +
                             " has no measured samples");
    }

    PairwiseMatrix m(PairwiseMatrix::Kind::overlap, k);
    for (int i = 0; i < k; ++i) m.set_sym(i, i, 1.0, true);
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            long inter = 0;
            for (int s = 0; s < panel.n; ++s) inter += measured[i][s] & measured[j][s];
            const long uni = counts[i] + counts[j] - inter;
            m.set_sym(i, j, static_cast<double>(inter) / static_cast<double>(uni), true);
        }
    }
    return m;
}

TaskPanel load_csv_panel(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open: " + path);

    std::string line;
    if (!std::getline(f, line)) throw data_error(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "id")
        throw data_error(path + ": header must start with an 'id' column");

    TaskPanel panel;
    std::vector<int> feature_cols, task_cols;
    for (int c = 1; c < static_cast<int>(header.size()); ++c) {
        if (header[c].rfind("task:", 0) == 0) {
            panel.task_names.push_back(header[c].substr(5));
            task_cols.push_back(c);
        } else {
            if (!task_cols.empty())
                throw data_error(path + ": feature column '" + header[c] +
                                 "' appears after task columns");
            feature_cols.push_back(c);
        }
    }
    panel.d_in = static_cast<int>(feature_cols.size());
    panel.k = static_cast<int>(task_cols.size());
    if (panel.d_in == 0) throw data_error(path + ": no feature columns");
    if (panel.k == 0) throw data_error(path + ": no task columns (prefix 'task:')");

    int row = 1;
    while (std::getline(f, line)) {
        ++row;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw data_error(path + ": row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        panel.sample_ids.push_back(cells[0]);
        for (int c : feature_cols) {
            double v = 0.0;
            if (!parse_double(cells[c], &v))
                throw data_error(path + ": row " + std::to_string(row) + ", column '" +
                                 header[c] + "': cannot parse feature value '" + cells[c] + "'");
            panel.features.push_back(v);
        }
        for (int c : task_cols) {
            if (cells[c].empty()) {
                panel.labels.push_back(0.0);
                panel.mask.push_back(0);
            } else {
                double v = 0.0;
                if (!parse_double(cells[c], &v))
                    throw data_error(path + ": row " + std::to_string(row) + ", column '" +
                                     header[c] + "': cannot parse label '" + cells[c] + "'");
                panel.labels.push_back(v);
                panel.mask.push_back(1);
            }
        }
    }
    panel.n = static_cast<int>(panel.sample_ids.size());
    if (panel.n == 0) throw data_error(path + ": no data rows");

    for (int t = 0; t < panel.k; ++t) {
        bool any = false;
        for (int i = 0; i < panel.n && !any; ++i) any = panel.measured(i, t);
        if (!any)
            throw data_error(path + ": task '" + panel.task_names[t] + "' has zero measured rows");
    }
    return panel;
}

void save_csv_panel(const TaskPanel& panel, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << "id";
    for (int j = 0; j < panel.d_in; ++j) f << ",f" << j;
    for (const auto& name : panel.task_names) f << ",task:" << name;
    f << '\n';
    for (int i = 0; i < panel.n; ++i) {
        f << panel.sample_ids[i];
        for (int j = 0; j < panel.d_in; ++j) f << ',' << fmt_double(panel.feature(i, j));
        for (int t = 0; t < panel.k; ++t) {
            f << ',';
            if (panel.measured(i, t)) f << fmt_double(panel.label(i, t));
        }
        f << '\n';
    }
}

}  // namespace taskgrad
