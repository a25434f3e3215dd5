#include "taskgrad/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "taskgrad/errors.hpp"

namespace taskgrad {

Dendrogram linkage_average(const PairwiseMatrix& distances) {
    const int k = distances.k;
    if (k < 2) throw data_error("linkage needs at least two items");
    if (!distances.all_valid())
        throw data_error("distance matrix has invalid entries; impute before clustering");
    for (int i = 0; i < k; ++i) {
        if (distances.at(i, i) != 0.0) throw data_error("distance matrix diagonal must be zero");
        for (int j = i + 1; j < k; ++j) {
            if (distances.at(i, j) < 0.0) throw data_error("distances must be nonnegative");
            if (distances.at(i, j) != distances.at(j, i))
                throw data_error("distance matrix must be symmetric");
        }
    }

    // Active clusters keyed by node id (leaves 0..K-1, merges K..2K-2), with
    // Lance-Williams updates for the average-linkage distance.
    struct Cluster {
        int node;
        int size;
    };
    std::vector<Cluster> active;
    for (int i = 0; i < k; ++i) active.push_back({i, 1});

    std::vector<std::vector<double>> d(k, std::vector<double>(k));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) d[i][j] = distances.at(i, j);

    Dendrogram den;
    den.n_leaves = k;
    int next_node = k;

    while (active.size() > 1) {
        // Minimum inter-cluster distance; ties break on the smallest
        // (node_i, node_j) pair.
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                const double dist = d[i][j];
                if (dist < best) {
                    best = dist;
                    bi = i;
                    bj = j;
                }
            }
        }
        den.merges.push_back({active[bi].node, active[bj].node, best});

        const int ni = active[bi].size, nj = active[bj].size;
        // New cluster replaces slot bi; slot bj is removed.
        for (std::size_t t = 0; t < active.size(); ++t) {
            if (t == bi || t == bj) continue;
            const double merged = (ni * d[bi][t] + nj * d[bj][t]) / (ni + nj);
            d[bi][t] = d[t][bi] = merged;
        }
        active[bi] = {next_node++, ni + nj};
        active.erase(active.begin() + bj);
        for (auto& row : d) row.erase(row.begin() + bj);
        d.erase(d.begin() + bj);
    }
    return den;
}

Partition cut_k(const Dendrogram& den, int k) {
    const int n = den.n_leaves;
    if (k < 1 || k > n) throw config_error("cut_k: k out of range [1, " + std::to_string(n) + "]");

    // Apply the first n-k merges with union-find over dendrogram node ids.
    std::vector<int> parent(2 * n - 1);
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (int m = 0; m < n - k; ++m) {
        const auto& merge = den.merges[m];
        const int node = n + m;
        parent[find(merge.left)] = node;
        parent[find(merge.right)] = node;
    }

    Partition part;
    part.labels.assign(n, -1);
    std::map<int, int> label_of_root;
    for (int leaf = 0; leaf < n; ++leaf) {
        const int root = find(leaf);
        auto it = label_of_root.find(root);
        if (it == label_of_root.end())
            it = label_of_root.emplace(root, static_cast<int>(label_of_root.size())).first;
        part.labels[leaf] = it->second;
    }
    part.n_groups = static_cast<int>(label_of_root.size());
    return part;
}

namespace {

long choose2(long n) { return n * (n - 1) / 2; }

// Contingency table between two label vectors.
std::vector<std::vector<long>> contingency(const Partition& a, const Partition& b) {
    std::vector<std::vector<long>> c(a.n_groups, std::vector<long>(b.n_groups, 0));
    for (std::size_t i = 0; i < a.labels.size(); ++i) ++c[a.labels[i]][b.labels[i]];
    return c;
}

}  // namespace

double ari(const Partition& a, const Partition& b) {
    if (a.labels.size() != b.labels.size()) throw config_error("ari: partition sizes differ");
    const long n = static_cast<long>(a.labels.size());
    const auto c = contingency(a, b);

    long sum_ij = 0, sum_a = 0, sum_b = 0;
    std::vector<long> rows(a.n_groups, 0), cols(b.n_groups, 0);
    for (int i = 0; i < a.n_groups; ++i) {
        for (int j = 0; j < b.n_groups; ++j) {
            sum_ij += choose2(c[i][j]);
            rows[i] += c[i][j];
            cols[j] += c[i][j];
        }
    }
    for (long r : rows) sum_a += choose2(r);
    for (long cc : cols) sum_b += choose2(cc);

    const double expected = static_cast<double>(sum_a) * sum_b / choose2(n);
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum == expected) return 1.0;  // both partitions trivial
    return (sum_ij - expected) / (maximum - expected);
}

double nmi(const Partition& a, const Partition& b) {
    if (a.labels.size() != b.labels.size()) throw config_error("nmi: partition sizes differ");
    const double n = static_cast<double>(a.labels.size());
    const auto c = contingency(a, b);

    std::vector<long> rows(a.n_groups, 0), cols(b.n_groups, 0);
    for (int i = 0; i < a.n_groups; ++i)
        for (int j = 0; j < b.n_groups; ++j) {
            rows[i] += c[i][j];
            cols[j] += c[i][j];
        }

    double h_a = 0.0, h_b = 0.0, mi = 0.0;
    for (long r : rows)
        if (r > 0) h_a -= r / n * std::log(r / n);
    for (long cc : cols)
        if (cc > 0) h_b -= cc / n * std::log(cc / n);
    for (int i = 0; i < a.n_groups; ++i) {
        for (int j = 0; j < b.n_groups; ++j) {
            if (c[i][j] == 0) continue;
            const double p = c[i][j] / n;
            mi += p * std::log(p / (rows[i] / n * (cols[j] / n)));
        }
    }

    const double mean_h = 0.5 * (h_a + h_b);
    if (mean_h == 0.0) return 1.0;  // both single-group: perfect agreement
    return mi / mean_h;
}

Partition group_tasks(const PairwiseMatrix& g, int n_groups, int* n_imputed) {
    const int k = g.k;
    PairwiseMatrix dist(PairwiseMatrix::Kind::gradient, k);

    // Column means of the valid off-diagonal similarities, for imputation.
    std::vector<double> col_sum(k, 0.0);
    std::vector<int> col_cnt(k, 0);
    double all_sum = 0.0;
    int all_cnt = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            if (i == j || !g.is_valid(i, j)) continue;
            col_sum[j] += g.at(i, j);
            ++col_cnt[j];
            all_sum += g.at(i, j);
            ++all_cnt;
        }
    }
    if (all_cnt == 0 && k > 1)
        throw data_error("group_tasks: no valid off-diagonal similarities to cluster");

    int imputed = 0;
    for (int i = 0; i < k; ++i) {
        dist.set_sym(i, i, 0.0, true);
        for (int j = i + 1; j < k; ++j) {
            double sim;
            if (g.is_valid(i, j)) {
                sim = g.at(i, j);
            } else {
                const double mi = col_cnt[i] > 0 ? col_sum[i] / col_cnt[i] : all_sum / all_cnt;
                const double mj = col_cnt[j] > 0 ? col_sum[j] / col_cnt[j] : all_sum / all_cnt;
                sim = 0.5 * (mi + mj);
                ++imputed;
            }
            dist.set_sym(i, j, std::max(0.0, 1.0 - sim), true);
        }
    }
    if (n_imputed) *n_imputed = imputed;
    return cut_k(linkage_average(dist), n_groups);
}

Partition random_partition(int k, int n_groups, std::uint64_t seed) {
    if (n_groups < 1 || n_groups > k)
        throw config_error("random_partition: n_groups must lie in [1, K]");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n_groups - 1);
    std::vector<int> labels(k);
    while (true) {
        std::vector<int> count(n_groups, 0);
        for (int i = 0; i < k; ++i) {
            labels[i] = pick(rng);
            ++count[labels[i]];
        }
        if (std::all_of(count.begin(), count.end(), [](int c) { return c > 0; })) break;
    }

    // Canonical labels by first occurrence.
    Partition part;
    part.n_groups = n_groups;
    part.labels.assign(k, -1);
    std::map<int, int> relabel;
    for (int i = 0; i < k; ++i) {
        auto it = relabel.find(labels[i]);
        if (it == relabel.end()) it = relabel.emplace(labels[i], static_cast<int>(relabel.size())).first;
        part.labels[i] = it->second;
    }
    return part;
}

}  // namespace taskgrad
