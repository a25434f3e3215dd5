#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "taskgrad/conflict.hpp"
#include "taskgrad/errors.hpp"
#include "taskgrad/nnet.hpp"
#include "taskgrad/panel.hpp"

using namespace taskgrad;

namespace {

TaskPanel small_panel(int n, int d, int k, double noise, std::uint64_t seed) {
    PanelSpec spec;
    spec.n_samples = n;
    spec.n_latent = d;
    spec.n_tasks = k;
    spec.noise_sd = noise;
    spec.seed = seed;
    return generate_panel(spec).first;
}

std::vector<int> all_rows(const TaskPanel& panel) {
    std::vector<int> ids(panel.n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

ArchSpec arch(int d_in, std::vector<int> hidden, int k, Activation act = Activation::tanh) {
    ArchSpec spec;
    spec.input_dim = d_in;
    spec.hidden_dims = std::move(hidden);
    spec.n_tasks = k;
    spec.activation = act;
    return spec;
}

// Independent finite-difference oracle: central differences of the masked
// loss over every encoder coordinate.
std::vector<double> fd_gradient(const Network& net, const TaskPanel& panel, int task,
                                const std::vector<int>& ids, double h) {
    Network probe = net;
    auto params = net.encoder_params();
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        probe.set_encoder_params(params);
        const double up = masked_task_loss(probe, panel, task, ids);
        params[i] = saved - h;
        probe.set_encoder_params(params);
        const double down = masked_task_loss(probe, panel, task, ids);
        params[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_scaled_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double scale = 1e-12, worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    return worst;
}

}  // namespace

TEST_CASE("network construction is deterministic in the seed") {
    const auto spec = arch(8, {16, 8}, 4);
    const Network a = init_network(spec, 7);
    const Network b = init_network(spec, 7);
    CHECK(a.encoder_params() == b.encoder_params());
    for (int t = 0; t < 4; ++t) {
        CHECK(a.heads()[t].w == b.heads()[t].w);
        CHECK(a.heads()[t].b == b.heads()[t].b);
    }

    const Network c = init_network(spec, 8);
    CHECK(a.encoder_params() != c.encoder_params());
    CHECK(a.encoder_param_count() == c.encoder_param_count());
}

TEST_CASE("zero-width layers are rejected") {
    CHECK_THROWS_AS(init_network(arch(8, {0, 8}, 4), 1), config_error);
    CHECK_THROWS_AS(init_network(arch(0, {4}, 2), 1), config_error);
}

TEST_CASE("masked loss over the valid subset only") {
    TaskPanel panel = small_panel(12, 5, 3, 0.5, 21);
    const Network net = init_network(arch(5, {6, 4}, 3), 3);
    const auto ids = all_rows(panel);

    SUBCASE("exact fit gives zero loss") {
        for (int i = 0; i < panel.n; ++i)
            panel.labels[i * panel.k + 1] =
                net.predict(panel.features.data() + i * panel.d_in, 1);
        CHECK(masked_task_loss(net, panel, 1, ids) == 0.0);
    }

    SUBCASE("fully masked-out task raises") {
        for (int i = 0; i < panel.n; ++i) panel.mask[i * panel.k + 2] = 0;
        CHECK_THROWS_WITH_AS(masked_task_loss(net, panel, 2, ids),
                             doctest::Contains("no valid samples"), data_error);
    }

    SUBCASE("residuals (1, -1) average to 1.0") {
        // Two valid samples whose predictions are off by exactly +1 and -1.
        for (int i = 0; i < panel.n; ++i) panel.mask[i * panel.k] = i < 2;
        panel.labels[0 * panel.k] = net.predict(panel.features.data(), 0) - 1.0;
        panel.labels[1 * panel.k] = net.predict(panel.features.data() + panel.d_in, 0) + 1.0;
        CHECK(masked_task_loss(net, panel, 0, ids) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("labels outside the valid set never matter") {
        const double before = masked_task_loss(net, panel, 0, {0, 1, 2, 3});
        const auto grad_before = task_gradient(net, panel, 0, {0, 1, 2, 3}).values;
        panel.labels[7 * panel.k] = 1e9;  // sample 7 is not in the subset
        panel.mask[5 * panel.k] = 0;
        panel.labels[5 * panel.k] = -4e8;
        CHECK(masked_task_loss(net, panel, 0, {0, 1, 2, 3}) == before);
        CHECK(task_gradient(net, panel, 0, {0, 1, 2, 3}).values == grad_before);
    }
}

TEST_CASE("gradient of a dead input column is exactly zero") {
    TaskPanel panel = small_panel(10, 4, 2, 0.0, 5);
    for (int i = 0; i < panel.n; ++i) panel.features[i * panel.d_in + 2] = 0.0;
    const Network net = init_network(arch(4, {5, 3}, 2), 9);
    const auto g = task_gradient(net, panel, 0, all_rows(panel));

    // First-layer weights touching input column 2 sit at flat offsets r*4+2.
    for (int r = 0; r < 5; ++r) CHECK(g.values[r * 4 + 2] == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        const int d = 3 + static_cast<int>(rng() % 4);
        const int k = 2 + static_cast<int>(rng() % 3);
        TaskPanel panel = small_panel(16, d, k, 0.4, rng());
        const Network net = init_network(arch(d, {7, 5}, k), rng());
        const int task = static_cast<int>(rng() % k);
        const auto analytic = task_gradient(net, panel, task, all_rows(panel)).values;
        const auto numeric = fd_gradient(net, panel, task, all_rows(panel), 1e-5);
        CHECK(max_scaled_diff(analytic, numeric) <= 1e-4);
    }
}

TEST_CASE("duplicating every valid sample leaves the gradient unchanged") {
    TaskPanel panel = small_panel(14, 4, 2, 0.3, 11);
    const Network net = init_network(arch(4, {6, 4}, 2), 2);
    auto ids = all_rows(panel);
    const auto once = task_gradient(net, panel, 1, ids);

    std::vector<int> doubled;
    for (int i : ids) {
        doubled.push_back(i);
        doubled.push_back(i);
    }
    const auto twice = task_gradient(net, panel, 1, doubled);
    CHECK(twice.n_samples == 2 * once.n_samples);
    for (std::size_t i = 0; i < once.values.size(); ++i)
        CHECK(twice.values[i] == doctest::Approx(once.values[i]).epsilon(1e-12));
}

TEST_CASE("scaling the residuals scales the gradient exactly") {
    TaskPanel panel = small_panel(10, 4, 2, 0.3, 13);
    const Network net = init_network(arch(4, {5, 4}, 2), 4);
    const auto ids = all_rows(panel);
    const auto base = task_gradient(net, panel, 0, ids).values;

    // labels' = 2y - p turns each residual r into 2r, so the loss scales by 4
    // and the gradient by 2; the label reconstruction costs at most an ulp.
    TaskPanel scaled = panel;
    for (int i = 0; i < panel.n; ++i) {
        const double pred = net.predict(panel.features.data() + i * panel.d_in, 0);
        scaled.labels[i * panel.k] = 2.0 * panel.label(i, 0) - pred;
    }
    const auto doubled = task_gradient(net, scaled, 0, ids).values;
    REQUIRE(doubled.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(doubled[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-13));
}

TEST_CASE("gradient_check harness") {
    TaskPanel panel = small_panel(12, 4, 2, 0.3, 17);
    const auto ids = all_rows(panel);

    SUBCASE("tanh toy net passes at 1e-4") {
        const Network net = init_network(arch(4, {6, 4}, 2), 8);
        const auto report = gradient_check(net, panel, 0, ids, 1e-4);
        CHECK(report.pass);
        CHECK(report.max_rel_error <= 1e-4);
    }

    SUBCASE("zero tolerance always fails") {
        const Network net = init_network(arch(4, {6, 4}, 2), 8);
        const auto report = gradient_check(net, panel, 0, ids, 0.0);
        CHECK_FALSE(report.pass);
        CHECK(report.max_rel_error > 0.0);
    }

    SUBCASE("identity activation makes the loss quadratic: near-exact match") {
        const Network net = init_network(arch(4, {6, 4}, 2, Activation::identity), 8);
        const auto report = gradient_check(net, panel, 0, ids, 1e-8);
        CHECK(report.pass);
        CHECK(report.max_rel_error <= 1e-8);
    }
}

TEST_CASE("training reduces loss on a realizable problem") {
    const TaskPanel panel = small_panel(400, 6, 4, 0.0, 31);
    const Network net0 = init_network(arch(6, {32, 16}, 4), 1);
    TrainConfig cfg;
    cfg.seed = 5;

    const auto ids = all_rows(panel);
    double initial = 0.0, final_loss = 0.0;
    for (int t = 0; t < panel.k; ++t) initial += masked_task_loss(net0, panel, t, ids);
    const Network trained = train(net0, panel, cfg, nullptr);
    for (int t = 0; t < panel.k; ++t) final_loss += masked_task_loss(trained, panel, t, ids);

    CHECK(final_loss < 0.25 * initial);
}

TEST_CASE("absurd learning rate raises a step-stamped divergence error") {
    const TaskPanel panel = small_panel(200, 6, 4, 0.3, 37);
    const Network net0 = init_network(arch(6, {32, 16}, 4), 1);
    TrainConfig cfg;
    cfg.learning_rate = 1e6;
    cfg.epochs = 5;
    CHECK_THROWS_WITH_AS(train(net0, panel, cfg, nullptr), doctest::Contains("step"),
                         numeric_error);
}

TEST_CASE("training is deterministic given the seed") {
    const TaskPanel panel = small_panel(150, 5, 3, 0.3, 41);
    const Network net0 = init_network(arch(5, {8, 6}, 3), 2);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 9;

    ConflictAccumulator acc_a, acc_b;
    const Network a = train(net0, panel, cfg, &acc_a);
    const Network b = train(net0, panel, cfg, &acc_b);

    CHECK(a.encoder_params() == b.encoder_params());
    REQUIRE(acc_a.records.size() == acc_b.records.size());
    CHECK(acc_a.records.size() > 0);
    for (std::size_t i = 0; i < acc_a.records.size(); ++i) {
        CHECK(acc_a.records[i].step == acc_b.records[i].step);
        CHECK(acc_a.records[i].matrix.values == acc_b.records[i].matrix.values);
        CHECK(acc_a.records[i].matrix.valid == acc_b.records[i].matrix.valid);
    }
}

TEST_CASE("invalid training configs are rejected") {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = TrainConfig{};
    cfg.averaging_window_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), config_error);
}
