#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "taskgrad/conflict.hpp"
#include "taskgrad/errors.hpp"

using namespace taskgrad;

namespace {

GradientVector gv(int task, std::vector<double> values) {
    GradientVector g;
    g.task_id = task;
    g.n_samples = 1;
    g.values = std::move(values);
    return g;
}

}  // namespace

TEST_CASE("cosine similarity on hand-checked vectors") {
    CHECK(cosine_similarity(gv(0, {1, 2, 3}), gv(1, {1, 2, 3})) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(gv(0, {1, 0}), gv(1, {0, 1})) == 0.0);
    CHECK(cosine_similarity(gv(0, {1, 1}), gv(1, {1, -1})) == 0.0);
    CHECK(cosine_similarity(gv(0, {2, 0}), gv(1, {-3, 0})) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(gv(0, {0, 0}), gv(1, {1, 1})) == 0.0);  // norm floor
    CHECK_THROWS_AS(cosine_similarity(gv(0, {1}), gv(1, {1, 2})), config_error);
}

TEST_CASE("conflict matrix layouts") {
    SUBCASE("identical gradients give an all-ones matrix") {
        const auto m = conflict_matrix({gv(0, {1, 2}), gv(1, {1, 2}), gv(2, {1, 2})}, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                CHECK(m.is_valid(i, j));
                CHECK(m.at(i, j) == doctest::Approx(1.0).epsilon(1e-12));
            }
    }

    SUBCASE("orthogonal gradients give the identity pattern") {
        const auto m = conflict_matrix({gv(0, {1, 0, 0}), gv(1, {0, 1, 0}), gv(2, {0, 0, 1})}, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(m.at(i, j) == (i == j ? 1.0 : 0.0));
    }

    SUBCASE("matches an elementwise brute-force recomputation") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> normal;
        std::vector<GradientVector> grads;
        for (int t = 0; t < 3; ++t) {
            std::vector<double> v(6);
            for (auto& x : v) x = normal(rng);
            grads.push_back(gv(t, v));
        }
        const auto m = conflict_matrix(grads, 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double dot = 0, ni = 0, nj = 0;
                for (int c = 0; c < 6; ++c) {
                    dot += grads[i].values[c] * grads[j].values[c];
                    ni += grads[i].values[c] * grads[i].values[c];
                    nj += grads[j].values[c] * grads[j].values[c];
                }
                CHECK(m.at(i, j) ==
                      doctest::Approx(dot / std::sqrt(ni * nj)).epsilon(1e-12));
            }
        }
    }

    SUBCASE("absent and zero-norm tasks are invalid") {
        const auto m = conflict_matrix({gv(0, {1, 1}), gv(2, {0, 0})}, 3);
        CHECK(m.is_valid(0, 0));
        CHECK_FALSE(m.is_valid(0, 1));  // task 1 absent from the batch
        CHECK_FALSE(m.is_valid(1, 1));
        CHECK_FALSE(m.is_valid(0, 2));  // task 2 has a near-zero gradient
        CHECK_FALSE(m.is_valid(2, 2));
        CHECK(m.at(0, 2) == 0.0);
    }
}

TEST_CASE("positive rescaling leaves cosines unchanged, negative flips the sign") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal;
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = normal(rng);
    for (auto& x : b) x = normal(rng);

    const double base = cosine_similarity(gv(0, a), gv(1, b));
    for (double c : {0.25, 3.0, 1e6}) {
        auto scaled = a;
        for (auto& x : scaled) x *= c;
        CHECK(cosine_similarity(gv(0, scaled), gv(1, b)) == doctest::Approx(base).epsilon(1e-12));
        for (auto& x : scaled) x *= -1.0;
        CHECK(cosine_similarity(gv(0, scaled), gv(1, b)) == doctest::Approx(-base).epsilon(1e-12));
    }
}

namespace {

PairwiseMatrix constant_matrix(int k, double value) {
    PairwiseMatrix m(PairwiseMatrix::Kind::gradient, k);
    for (int i = 0; i < k; ++i) {
        m.set_sym(i, i, 1.0, true);
        for (int j = i + 1; j < k; ++j) m.set_sym(i, j, value, true);
    }
    return m;
}

}  // namespace

TEST_CASE("window averaging of recorded matrices") {
    SUBCASE("a single record comes back unchanged") {
        ConflictAccumulator acc;
        acc.total_steps_hint = 100;
        acc.window_fraction = 0.2;
        acc.record(100, constant_matrix(3, 0.7));
        const auto avg = finalize(acc);
        CHECK(avg.at(0, 1) == 0.7);
        CHECK(avg.at(1, 2) == 0.7);
    }

    SUBCASE("two windowed records average per entry") {
        ConflictAccumulator acc;
        acc.total_steps_hint = 100;
        acc.window_fraction = 0.2;
        acc.record(90, constant_matrix(3, 0.2));
        acc.record(100, constant_matrix(3, 0.4));
        CHECK(finalize(acc).at(0, 1) == doctest::Approx(0.3).epsilon(1e-15));
    }

    SUBCASE("records before the window are ignored") {
        ConflictAccumulator acc;
        acc.total_steps_hint = 100;
        acc.window_fraction = 0.2;
        acc.record(10, constant_matrix(3, -0.9));
        acc.record(95, constant_matrix(3, 0.5));
        CHECK(finalize(acc).at(0, 1) == 0.5);
    }

    SUBCASE("records only in the first half leave the window empty") {
        ConflictAccumulator acc;
        acc.total_steps_hint = 100;
        acc.window_fraction = 0.2;
        acc.record(10, constant_matrix(3, 0.1));
        acc.record(50, constant_matrix(3, 0.2));
        CHECK_THROWS_WITH_AS(finalize(acc), doctest::Contains("window"), data_error);
    }

    SUBCASE("entries invalid at some steps average over the valid ones only") {
        ConflictAccumulator acc;
        acc.total_steps_hint = 10;
        acc.window_fraction = 1.0;
        auto a = constant_matrix(3, 0.6);
        a.set_sym(0, 2, 0.0, false);
        acc.record(5, a);
        acc.record(10, constant_matrix(3, 0.2));
        const auto avg = finalize(acc);
        CHECK(avg.at(0, 1) == doctest::Approx(0.4));
        CHECK(avg.at(0, 2) == 0.2);  // valid at one step only
        CHECK(avg.is_valid(0, 2));
    }

    SUBCASE("steps must strictly increase") {
        ConflictAccumulator acc;
        acc.record(5, constant_matrix(2, 0.0));
        CHECK_THROWS_AS(acc.record(5, constant_matrix(2, 0.1)), config_error);
    }
}

TEST_CASE("running averages at checkpoints") {
    ConflictAccumulator acc;
    acc.total_steps_hint = 40;
    acc.record(10, constant_matrix(2, 0.0));
    acc.record(20, constant_matrix(2, 0.4));

    SUBCASE("checkpoint after both records averages them") {
        const auto mats = matrix_at_checkpoints(acc, {40});
        CHECK(mats[0].at(0, 1) == doctest::Approx(0.2));
    }

    SUBCASE("checkpoint between records sees only the first") {
        const auto mats = matrix_at_checkpoints(acc, {10, 15});
        CHECK(mats[0].at(0, 1) == 0.0);
        CHECK(mats[1].at(0, 1) == 0.0);
    }

    SUBCASE("checkpoint before the first record raises") {
        CHECK_THROWS_AS(matrix_at_checkpoints(acc, {5}), data_error);
    }
}

TEST_CASE("finalize commutes with task reordering") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal;
    const int k = 5;

    auto random_matrix = [&]() {
        PairwiseMatrix m(PairwiseMatrix::Kind::gradient, k);
        for (int i = 0; i < k; ++i) {
            m.set_sym(i, i, 1.0, true);
            for (int j = i + 1; j < k; ++j) m.set_sym(i, j, std::tanh(normal(rng)), true);
        }
        return m;
    };
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    auto permute = [&](const PairwiseMatrix& m) {
        PairwiseMatrix out(m.kind, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                out.set_sym(i, j, m.at(perm[i], perm[j]), m.is_valid(perm[i], perm[j]));
        return out;
    };

    ConflictAccumulator plain, permuted;
    plain.total_steps_hint = permuted.total_steps_hint = 30;
    plain.window_fraction = permuted.window_fraction = 0.5;
    for (long step : {20, 25, 30}) {
        const auto m = random_matrix();
        plain.record(step, m);
        permuted.record(step, permute(m));
    }

    const auto a = permute(finalize(plain));
    const auto b = finalize(permuted);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) CHECK(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-15));
}

TEST_CASE("finalized matrices stay symmetric with entries in [-1, 1]") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal;
    ConflictAccumulator acc;
    acc.total_steps_hint = 50;
    acc.window_fraction = 0.4;
    for (long step = 10; step <= 50; step += 10) {
        std::vector<GradientVector> grads;
        for (int t = 0; t < 4; ++t) {
            std::vector<double> v(12);
            for (auto& x : v) x = normal(rng);
            grads.push_back(gv(t, v));
        }
        acc.record(step, conflict_matrix(grads, 4));
    }
    const auto avg = finalize(acc);
    for (int i = 0; i < 4; ++i) {
        CHECK(avg.at(i, i) == 1.0);
        for (int j = 0; j < 4; ++j) {
            CHECK(avg.at(i, j) == avg.at(j, i));
            if (avg.is_valid(i, j)) {
                CHECK(avg.at(i, j) >= -1.0 - 1e-12);
                CHECK(avg.at(i, j) <= 1.0 + 1e-12);
            }
        }
    }
}
