#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "taskgrad/cluster.hpp"
#include "taskgrad/errors.hpp"

using namespace taskgrad;

namespace {

PairwiseMatrix dist(int k, const std::vector<double>& upper) {
    PairwiseMatrix m(PairwiseMatrix::Kind::gradient, k);
    std::size_t idx = 0;
    for (int i = 0; i < k; ++i) {
        m.set_sym(i, i, 0.0, true);
        for (int j = i + 1; j < k; ++j) m.set_sym(i, j, upper[idx++], true);
    }
    return m;
}

Partition part(std::vector<int> labels) {
    Partition p;
    p.n_groups = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    p.labels = std::move(labels);
    return p;
}

// Reference UPGMA that recomputes every cluster-pair average from the
// original matrix at each step instead of using running updates.
Dendrogram brute_force_upgma(const PairwiseMatrix& d) {
    const int k = d.k;
    struct Cluster {
        int node;
        std::vector<int> leaves;
    };
    std::vector<Cluster> clusters;
    for (int i = 0; i < k; ++i) clusters.push_back({i, {i}});

    Dendrogram den;
    den.n_leaves = k;
    int next = k;
    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                double sum = 0.0;
                for (int a : clusters[i].leaves)
                    for (int b : clusters[j].leaves) sum += d.at(a, b);
                const double avg =
                    sum / (clusters[i].leaves.size() * clusters[j].leaves.size());
                if (avg < best) {
                    best = avg;
                    bi = i;
                    bj = j;
                }
            }
        }
        den.merges.push_back({clusters[bi].node, clusters[bj].node, best});
        Cluster merged{next++, clusters[bi].leaves};
        merged.leaves.insert(merged.leaves.end(), clusters[bj].leaves.begin(),
                             clusters[bj].leaves.end());
        clusters.erase(clusters.begin() + bj);
        clusters[bi] = std::move(merged);
    }
    return den;
}

}  // namespace

TEST_CASE("two items merge at their distance") {
    const auto den = linkage_average(dist(2, {0.37}));
    REQUIRE(den.merges.size() == 1);
    CHECK(den.merges[0].left == 0);
    CHECK(den.merges[0].right == 1);
    CHECK(den.merges[0].height == 0.37);
}

TEST_CASE("two tight pairs merge internally before joining") {
    // {a,b} at 0.1, {c,d} at 0.1, all cross distances 1.0
    const auto d = dist(4, {0.1, 1.0, 1.0, 1.0, 1.0, 0.1});
    const auto den = linkage_average(d);
    REQUIRE(den.merges.size() == 3);
    CHECK(den.merges[0].left == 0);
    CHECK(den.merges[0].right == 1);
    CHECK(den.merges[0].height == doctest::Approx(0.1));
    CHECK(den.merges[1].left == 2);
    CHECK(den.merges[1].right == 3);
    CHECK(den.merges[2].height == doctest::Approx(1.0));

    const auto two = cut_k(den, 2);
    CHECK(two.labels == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("linkage matches the brute-force reference on random matrices") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> uni(0.05, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
        const int k = 3 + static_cast<int>(rng() % 6);  // up to 8 leaves
        std::vector<double> upper(static_cast<std::size_t>(k) * (k - 1) / 2);
        for (auto& v : upper) v = uni(rng);
        const auto d = dist(k, upper);

        const auto fast = linkage_average(d);
        const auto slow = brute_force_upgma(d);
        REQUIRE(fast.merges.size() == slow.merges.size());
        for (std::size_t i = 0; i < fast.merges.size(); ++i) {
            CHECK(fast.merges[i].left == slow.merges[i].left);
            CHECK(fast.merges[i].right == slow.merges[i].right);
            CHECK(fast.merges[i].height == doctest::Approx(slow.merges[i].height).epsilon(1e-12));
        }
        // average linkage never produces height inversions
        for (std::size_t i = 1; i < fast.merges.size(); ++i)
            CHECK(fast.merges[i].height >= fast.merges[i - 1].height - 1e-12);
    }
}

TEST_CASE("invalid entries must be imputed before clustering") {
    auto d = dist(3, {0.5, 0.5, 0.5});
    d.set_sym(0, 2, 0.0, false);
    CHECK_THROWS_WITH_AS(linkage_average(d), doctest::Contains("impute"), data_error);
}

TEST_CASE("cutting the dendrogram") {
    const auto d = dist(4, {0.1, 1.0, 1.0, 1.0, 1.0, 0.1});
    const auto den = linkage_average(d);
    CHECK(cut_k(den, 4).labels == std::vector<int>{0, 1, 2, 3});
    CHECK(cut_k(den, 1).labels == std::vector<int>{0, 0, 0, 0});
    CHECK(cut_k(den, 2).n_groups == 2);
    CHECK_THROWS_AS(cut_k(den, 0), config_error);
    CHECK_THROWS_AS(cut_k(den, 5), config_error);
}

TEST_CASE("adjusted Rand index") {
    SUBCASE("relabeling does not matter") {
        CHECK(ari(part({0, 0, 1, 1, 2}), part({2, 2, 0, 0, 1})) == doctest::Approx(1.0));
    }
    SUBCASE("hand-evaluated crossing partitions") {
        CHECK(ari(part({0, 0, 1, 1}), part({0, 1, 0, 1})) == doctest::Approx(-0.5));
    }
    SUBCASE("chance-level pairs average to zero") {
        std::mt19937_64 rng(5);
        double total = 0.0;
        const int trials = 1000;
        for (int t = 0; t < trials; ++t) {
            const auto a = random_partition(50, 5, rng());
            const auto b = random_partition(50, 5, rng());
            total += ari(a, b);
        }
        CHECK(std::abs(total / trials) <= 0.02);
    }
    SUBCASE("argument order does not matter") {
        const auto a = part({0, 1, 1, 2, 0});
        const auto b = part({1, 1, 0, 2, 2});
        CHECK(ari(a, b) == doctest::Approx(ari(b, a)));
    }
    CHECK_THROWS_AS(ari(part({0, 1}), part({0, 1, 2})), config_error);
}

TEST_CASE("normalized mutual information") {
    CHECK(nmi(part({0, 0, 1, 1}), part({1, 1, 0, 0})) == doctest::Approx(1.0));
    CHECK(nmi(part({0, 0, 1, 1}), part({0, 0, 1, 1})) == doctest::Approx(1.0));
    CHECK(nmi(part({0, 0, 0}), part({0, 0, 0})) == 1.0);  // both zero entropy

    // independent partitions on many items drift to zero
    std::mt19937_64 rng(9);
    double total = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t)
        total += nmi(random_partition(400, 4, rng()), random_partition(400, 4, rng()));
    CHECK(total / trials < 0.05);

    // symmetric in its arguments
    const auto a = part({0, 1, 2, 1, 0, 2});
    const auto b = part({1, 1, 0, 0, 2, 2});
    CHECK(nmi(a, b) == doctest::Approx(nmi(b, a)));
}

TEST_CASE("task grouping from a similarity matrix") {
    SUBCASE("block-diagonal similarity recovers its blocks") {
        PairwiseMatrix g(PairwiseMatrix::Kind::gradient, 6);
        for (int i = 0; i < 6; ++i) {
            g.set_sym(i, i, 1.0, true);
            for (int j = i + 1; j < 6; ++j) {
                const bool same = (i < 3) == (j < 3);
                g.set_sym(i, j, same ? 0.9 : 0.0, true);
            }
        }
        const auto p = group_tasks(g, 2);
        CHECK(p.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
        CHECK(group_tasks(g, 6).labels == std::vector<int>{0, 1, 2, 3, 4, 5});
    }

    SUBCASE("tie-broken grouping is deterministic") {
        PairwiseMatrix g(PairwiseMatrix::Kind::gradient, 5);
        for (int i = 0; i < 5; ++i) {
            g.set_sym(i, i, 1.0, true);
            for (int j = i + 1; j < 5; ++j) g.set_sym(i, j, 0.4, true);
        }
        const auto a = group_tasks(g, 2);
        const auto b = group_tasks(g, 2);
        CHECK(a.labels == b.labels);
        CHECK(a.n_groups == 2);
    }

    SUBCASE("invalid entries are imputed and counted") {
        PairwiseMatrix g(PairwiseMatrix::Kind::gradient, 4);
        for (int i = 0; i < 4; ++i) {
            g.set_sym(i, i, 1.0, true);
            for (int j = i + 1; j < 4; ++j) {
                const bool same = (i < 2) == (j < 2);
                g.set_sym(i, j, same ? 0.8 : 0.1, true);
            }
        }
        g.set_sym(0, 3, 0.0, false);
        int n_imputed = 0;
        const auto p = group_tasks(g, 2, &n_imputed);
        CHECK(n_imputed == 1);
        CHECK(p.labels == std::vector<int>{0, 0, 1, 1});
    }
}

TEST_CASE("uniform distance shifts do not change the merge order") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> uni(0.1, 1.0);
    std::vector<double> upper(15);
    for (auto& v : upper) v = uni(rng);
    const auto base = linkage_average(dist(6, upper));

    std::vector<double> shifted = upper;
    for (auto& v : shifted) v += 0.75;
    const auto moved = linkage_average(dist(6, shifted));
    for (std::size_t i = 0; i < base.merges.size(); ++i) {
        CHECK(base.merges[i].left == moved.merges[i].left);
        CHECK(base.merges[i].right == moved.merges[i].right);
    }
}

TEST_CASE("random partitions are uniform over surjective assignments") {
    SUBCASE("n_groups = K forces singletons") {
        const auto p = random_partition(4, 4, 77);
        CHECK(p.labels == std::vector<int>{0, 1, 2, 3});
    }

    SUBCASE("same seed, same labels") {
        CHECK(random_partition(10, 3, 5).labels == random_partition(10, 3, 5).labels);
        CHECK_THROWS_AS(random_partition(3, 4, 1), config_error);
    }

    SUBCASE("size of item 0's group follows the conditioned-uniform law") {
        const int k = 12, g = 3, trials = 10000;
        // surj(n, m) by inclusion-exclusion
        auto surj = [](int n, int m) {
            double total = 0.0;
            double sign = 1.0;
            for (int i = 0; i <= m; ++i) {
                double comb = 1.0;
                for (int c = 0; c < i; ++c) comb = comb * (m - c) / (c + 1);
                total += sign * comb * std::pow(static_cast<double>(m - i), n);
                sign = -sign;
            }
            return total;
        };
        std::map<int, double> expected;
        for (int size = 1; size <= k - g + 1; ++size) {
            double comb = 1.0;
            for (int c = 0; c < size - 1; ++c) comb = comb * (k - 1 - c) / (c + 1);
            expected[size] = comb * surj(k - size, g - 1) / surj(k, g) * g;
        }
        // expected[] sums to g because item 0's group label is one of g;
        // normalize to a probability distribution.
        double norm = 0.0;
        for (auto& [size, p] : expected) norm += p;
        for (auto& [size, p] : expected) p /= norm;

        std::map<int, int> observed;
        std::mt19937_64 rng(31);
        for (int t = 0; t < trials; ++t) {
            const auto p = random_partition(k, g, rng());
            const int group0 = p.labels[0];
            observed[static_cast<int>(std::count(p.labels.begin(), p.labels.end(), group0))]++;
        }
        for (const auto& [size, prob] : expected) {
            const double freq = static_cast<double>(observed[size]) / trials;
            CHECK(std::abs(freq - prob) < 0.02);
        }
    }
}
