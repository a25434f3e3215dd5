#pragma once

#include <cstdint>
#include <vector>

#include "taskgrad/pairwise.hpp"

namespace taskgrad {

/// UPGMA merge list. Leaves are 0..K-1; the i-th merge creates node K+i.
struct Dendrogram {
    struct Merge {
        int left = 0;
        int right = 0;
        double height = 0.0;
    };
    std::vector<Merge> merges;  // K-1 entries
    int n_leaves = 0;
};

struct Partition {
    std::vector<int> labels;  // values in [0, n_groups)
    int n_groups = 0;
};

/// Average-linkage agglomeration over a symmetric distance matrix with zero
/// diagonal. Ties in the minimum inter-cluster distance break on the smallest
/// (i, j) cluster-index pair. All entries must be valid.
Dendrogram linkage_average(const PairwiseMatrix& distances);

/// Partition obtained by undoing the last k-1 merges; group labels follow the
/// leaf order of first occurrence.
Partition cut_k(const Dendrogram& dendrogram, int k);

/// Hubert-Arabie adjusted Rand index.
double ari(const Partition& a, const Partition& b);

/// Mutual information normalized by the arithmetic mean of the entropies;
/// defined as 1 when both partitions have zero entropy.
double nmi(const Partition& a, const Partition& b);

/// cut_k(linkage_average(1 - G), n_groups). Invalid entries are imputed with
/// column means first; n_imputed (if given) reports how many.
Partition group_tasks(const PairwiseMatrix& g, int n_groups, int* n_imputed = nullptr);

/// Uniformly random assignment of K items to n_groups conditioned on every
/// group being nonempty; labels are canonicalized by first occurrence.
Partition random_partition(int k, int n_groups, std::uint64_t seed);

}  // namespace taskgrad
