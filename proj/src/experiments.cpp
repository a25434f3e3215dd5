#include "taskgrad/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include "taskgrad/cluster.hpp"
#include "taskgrad/config.hpp"
#include "taskgrad/conflict.hpp"
#include "taskgrad/errors.hpp"
#include "taskgrad/stats.hpp"

namespace taskgrad {

TrainConfig TrainingSpec::train_config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.learning_rate = learning_rate;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.log_interval_steps = log_interval_steps;
    cfg.averaging_window_fraction = window_fraction;
    cfg.seed = seed;
    return cfg;
}

ArchSpec TrainingSpec::arch(int input_dim, int n_tasks) const {
    ArchSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_dims = hidden_dims;
    spec.n_tasks = n_tasks;
    spec.activation = activation;
    return spec;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    // splitmix64 over base advanced by the salt
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double r_squared(const Network& net, const TaskPanel& panel, int task,
                 const std::vector<int>& rows) {
    if (rows.size() < 2) throw data_error("r_squared needs at least 2 evaluation rows");
    double mean = 0.0;
    for (int i : rows) mean += panel.label(i, task);
    mean /= rows.size();
    double ss_res = 0.0, ss_tot = 0.0;
    for (int i : rows) {
        const double y = panel.label(i, task);
        const double pred = net.predict(panel.features.data() + static_cast<std::size_t>(i) * panel.d_in, task);
        ss_res += (pred - y) * (pred - y);
        ss_tot += (y - mean) * (y - mean);
    }
    if (ss_tot <= 0.0) throw data_error("r_squared undefined: constant labels on evaluation rows");
    return 1.0 - ss_res / ss_tot;
}

namespace {

// Seed salts; the values are arbitrary but frozen for reproducibility.
enum : std::uint64_t {
    kSaltTrain = 1,
    kSaltOverlap = 2,
    kSaltSplit = 3,
    kSaltPermutation = 4,
    kSaltRandomGroup = 5,
};

void parallel_for(int n, int n_workers, const std::function<void(int)>& body) {
    n_workers = std::max(1, std::min(n_workers, n));
    if (n_workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct TrainedRun {
    Network net;
    ConflictAccumulator acc;
    PairwiseMatrix g;  // finalized window average
};

TrainedRun train_and_finalize(const TaskPanel& panel, const TrainingSpec& training,
                              std::uint64_t base_seed) {
    TrainedRun run;
    const Network net0 = init_network(training.arch(panel.d_in, panel.k), mix_seed(base_seed, 0));
    run.net = train(net0, panel, training.train_config(mix_seed(base_seed, kSaltTrain)), &run.acc);
    run.g = finalize(run.acc);
    return run;
}

Network train_plain(const TaskPanel& panel, const TrainingSpec& training, std::uint64_t base_seed) {
    const Network net0 = init_network(training.arch(panel.d_in, panel.k), mix_seed(base_seed, 0));
    return train(net0, panel, training.train_config(mix_seed(base_seed, kSaltTrain)), nullptr);
}

std::pair<std::vector<int>, std::vector<int>> split_rows(int n, double train_fraction,
                                                         std::uint64_t seed) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const int n_train = static_cast<int>(std::lround(train_fraction * n));
    std::vector<int> train_ids(order.begin(), order.begin() + n_train);
    std::vector<int> test_ids(order.begin() + n_train, order.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(test_ids.begin(), test_ids.end());
    return {std::move(train_ids), std::move(test_ids)};
}

PanelSpec panel_spec_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    PanelSpec spec = cfg.panel;
    spec.seed = seed;
    return spec;
}

Json correlation_json(const CorrelationResult& res) {
    return Json{{"r", res.pearson_r},
                {"rho", res.spearman_rho},
                {"p", res.p_value},
                {"n_pairs", res.n_pairs}};
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (static_cast<double>(v.size()) - 1.0));
}

void require_seeds(const ExperimentConfig& cfg, std::size_t minimum) {
    if (cfg.seeds.size() < minimum)
        throw config_error(cfg.name + " requires at least " + std::to_string(minimum) +
                           " seeds, got " + std::to_string(cfg.seeds.size()));
}

ExperimentReport make_report(const ExperimentConfig& cfg) {
    ExperimentReport report;
    report.name = cfg.name;
    report.config_echo = config_echo(cfg);
    report.seeds = cfg.seeds;
    return report;
}

}  // namespace

ExperimentReport run_synthetic_validation(const ExperimentConfig& cfg) {
    require_seeds(cfg, 3);
    ExperimentReport report = make_report(cfg);

    struct Cell {
        Json row;
        std::vector<double> g_vec_s, s_vec, g_vec_e, e_vec;
    };
    std::vector<Cell> cells(cfg.seeds.size());

    parallel_for(static_cast<int>(cfg.seeds.size()), cfg.n_workers, [&](int idx) {
        const std::uint64_t seed = cfg.seeds[idx];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        TrainedRun run;
        try {
            run = train_and_finalize(panel, cfg.training, seed);
        } catch (const numeric_error& e) {
            throw numeric_error(std::string(e.what()) + " (seed " + std::to_string(seed) + ")");
        }
        const PairwiseMatrix e = empirical_matrix(panel, cfg.min_shared);

        const auto r_gs = matrix_correlation(run.g, truth.similarity, cfg.n_permutations,
                                             mix_seed(seed, kSaltPermutation));
        const auto r_ge = matrix_correlation(run.g, e, cfg.n_permutations,
                                             mix_seed(seed, kSaltPermutation + 1));

        Cell& cell = cells[idx];
        cell.row = Json{{"seed", seed},
                        {"r_gs", r_gs.pearson_r},
                        {"rho_gs", r_gs.spearman_rho},
                        {"p_gs", r_gs.p_value},
                        {"r_ge", r_ge.pearson_r},
                        {"rho_ge", r_ge.spearman_rho},
                        {"p_ge", r_ge.p_value},
                        {"n_pairs", r_gs.n_pairs}};
        std::tie(cell.g_vec_s, cell.s_vec) = joint_upper_triangle(run.g, truth.similarity);
        std::tie(cell.g_vec_e, cell.e_vec) = joint_upper_triangle(run.g, e);
    });

    std::vector<double> pooled_g_s, pooled_s, pooled_g_e, pooled_e, per_seed_r;
    for (auto& cell : cells) {
        report.rows.push_back(cell.row);
        per_seed_r.push_back(cell.row["r_gs"].get<double>());
        pooled_g_s.insert(pooled_g_s.end(), cell.g_vec_s.begin(), cell.g_vec_s.end());
        pooled_s.insert(pooled_s.end(), cell.s_vec.begin(), cell.s_vec.end());
        pooled_g_e.insert(pooled_g_e.end(), cell.g_vec_e.begin(), cell.g_vec_e.end());
        pooled_e.insert(pooled_e.end(), cell.e_vec.begin(), cell.e_vec.end());
    }
    const auto pooled_gs = vector_correlation(pooled_g_s, pooled_s, cfg.n_permutations,
                                              mix_seed(cfg.seeds.front(), kSaltPermutation + 2));
    const auto pooled_ge = vector_correlation(pooled_g_e, pooled_e, cfg.n_permutations,
                                              mix_seed(cfg.seeds.front(), kSaltPermutation + 3));
    report.derived = Json{{"pooled_gs", correlation_json(pooled_gs)},
                          {"pooled_ge", correlation_json(pooled_ge)},
                          {"mean_r_gs", mean_of(per_seed_r)}};
    return report;
}

namespace {

struct PhaseCell {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::optional<CorrelationResult> corr;  // absent when too few valid pairs
};

Json phase_cell_row(const PhaseCell& cell) {
    Json row{{"alpha", cell.alpha}, {"seed", cell.seed}};
    if (cell.corr) {
        row["r"] = cell.corr->pearson_r;
        row["rho"] = cell.corr->spearman_rho;
        row["p"] = cell.corr->p_value;
        row["n_pairs"] = cell.corr->n_pairs;
    } else {
        row["r"] = nullptr;
        row["rho"] = nullptr;
        row["p"] = nullptr;
        row["n_pairs"] = 0;
    }
    return row;
}

void validate_overlap_grid(const ExperimentConfig& cfg, std::size_t min_levels) {
    if (cfg.overlap_grid.size() < min_levels)
        throw config_error(cfg.name + ": overlap grid needs at least " +
                           std::to_string(min_levels) + " levels");
    for (double a : cfg.overlap_grid)
        if (a < 0.0 || a > 1.0) throw config_error("overlap grid values must lie in [0, 1]");
}

}  // namespace

ExperimentReport run_phase_transition(const ExperimentConfig& cfg) {
    validate_overlap_grid(cfg, 1);
    if (cfg.overlap_grid.size() > 1 && cfg.overlap_grid.size() < 5)
        throw config_error("phase: overlap grid needs at least 5 levels");
    if (cfg.overlap_grid.size() > 1) require_seeds(cfg, 3);
    else require_seeds(cfg, 1);

    ExperimentReport report = make_report(cfg);
    const int n_levels = static_cast<int>(cfg.overlap_grid.size());
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    std::vector<PhaseCell> cells(static_cast<std::size_t>(n_levels) * n_seeds);

    parallel_for(n_levels * n_seeds, cfg.n_workers, [&](int idx) {
        const int level = idx / n_seeds;
        const int si = idx % n_seeds;
        const double alpha = cfg.overlap_grid[level];
        const std::uint64_t seed = cfg.seeds[si];

        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        const TaskPanel degraded =
            apply_overlap(panel, alpha, mix_seed(seed, kSaltOverlap + level));
        const TrainedRun run = train_and_finalize(degraded, cfg.training, seed);
        const PairwiseMatrix e = empirical_matrix(degraded, cfg.min_shared);

        PhaseCell& cell = cells[idx];
        cell.alpha = alpha;
        cell.seed = seed;
        try {
            cell.corr = matrix_correlation(run.g, e, cfg.n_permutations,
                                           mix_seed(seed, kSaltPermutation));
        } catch (const data_error&) {
            cell.corr.reset();  // level reported with n_pairs = 0
        }
    });

    for (const auto& cell : cells) report.rows.push_back(phase_cell_row(cell));

    Json levels = Json::array();
    std::vector<double> level_alpha, level_mean_r;
    for (int level = 0; level < n_levels; ++level) {
        std::vector<double> rs;
        double pair_sum = 0.0;
        for (int si = 0; si < n_seeds; ++si) {
            const auto& cell = cells[static_cast<std::size_t>(level) * n_seeds + si];
            if (cell.corr) {
                rs.push_back(cell.corr->pearson_r);
                pair_sum += cell.corr->n_pairs;
            }
        }
        Json entry{{"alpha", cfg.overlap_grid[level]}, {"n_seeds_valid", rs.size()}};
        if (!rs.empty()) {
            entry["mean_r"] = mean_of(rs);
            entry["mean_n_pairs"] = pair_sum / rs.size();
            level_alpha.push_back(cfg.overlap_grid[level]);
            level_mean_r.push_back(mean_of(rs));
        } else {
            entry["mean_r"] = nullptr;
            entry["mean_n_pairs"] = 0;
        }
        levels.push_back(entry);
    }
    report.derived["levels"] = levels;

    if (level_alpha.size() >= 5) {
        std::vector<double> pct(level_alpha.size());
        std::transform(level_alpha.begin(), level_alpha.end(), pct.begin(),
                       [](double a) { return 100.0 * a; });
        try {
            const SigmoidFit fit = fit_sigmoid(pct, level_mean_r);
            report.derived["sigmoid_fit"] = Json{{"L", fit.L},       {"k", fit.k},
                                                 {"x0", fit.x0},     {"b", fit.b},
                                                 {"r_squared", fit.r_squared},
                                                 {"n_points", fit.n_points}};
        } catch (const std::runtime_error& e) {
            report.derived["sigmoid_fit"] = nullptr;
            report.derived["sigmoid_fit_error"] = e.what();
        }
        report.derived["spearman_alpha_mean_r"] = spearman(level_alpha, level_mean_r);

        std::vector<double> high, low;
        for (std::size_t i = 0; i < level_alpha.size(); ++i) {
            if (level_alpha[i] >= 0.6) high.push_back(level_mean_r[i]);
            if (level_alpha[i] <= 0.1) low.push_back(level_mean_r[i]);
        }
        if (!high.empty() && !low.empty())
            report.derived["gap_high_low"] = mean_of(high) - mean_of(low);
    }
    return report;
}

ExperimentReport run_prop1_null(const ExperimentConfig& cfg) {
    require_seeds(cfg, 50);
    ExperimentReport report = make_report(cfg);
    const int n = static_cast<int>(cfg.seeds.size());
    std::vector<Json> rows(n);
    std::vector<double> rs(n), ps(n);

    parallel_for(n, cfg.n_workers, [&](int idx) {
        const std::uint64_t seed = cfg.seeds[idx];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        const TaskPanel masked =
            cfg.prop1_alpha >= 1.0
                ? panel
                : apply_overlap(panel, cfg.prop1_alpha, mix_seed(seed, kSaltOverlap));
        const TrainedRun run = train_and_finalize(masked, cfg.training, seed);
        const auto corr = matrix_correlation(run.g, truth.similarity, cfg.n_permutations,
                                             mix_seed(seed, kSaltPermutation));
        rs[idx] = corr.pearson_r;
        ps[idx] = corr.p_value;
        rows[idx] = Json{{"seed", seed},
                         {"alpha", cfg.prop1_alpha},
                         {"r", corr.pearson_r},
                         {"rho", corr.spearman_rho},
                         {"p", corr.p_value},
                         {"n_pairs", corr.n_pairs}};
    });

    report.rows = std::move(rows);
    const double mean_r = mean_of(rs);
    const double se_r = sd_of(rs) / std::sqrt(static_cast<double>(n));
    int significant = 0;
    for (double p : ps)
        if (p < 0.05) ++significant;
    report.derived = Json{{"alpha", cfg.prop1_alpha},
                          {"mean_r", mean_r},
                          {"se_r", se_r},
                          {"fraction_p_lt_05", static_cast<double>(significant) / n},
                          {"n_seeds", n}};
    return report;
}

ExperimentReport run_variance_decomposition(const ExperimentConfig& cfg) {
    validate_overlap_grid(cfg, 1);
    require_seeds(cfg, 1);
    ExperimentReport report = make_report(cfg);

    const int n_levels = static_cast<int>(cfg.overlap_grid.size());
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    struct Cell {
        std::optional<double> r_ee;
        int n_pairs_ee = 0;
        std::optional<double> r_gg;
        int n_pairs_gg = 0;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(n_levels) * n_seeds);

    parallel_for(n_seeds, cfg.n_workers, [&](int si) {
        const std::uint64_t seed = cfg.seeds[si];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        const TrainedRun full = train_and_finalize(panel, cfg.training, seed);
        const PairwiseMatrix e_full = empirical_matrix(panel, cfg.min_shared);

        for (int level = 0; level < n_levels; ++level) {
            const double alpha = cfg.overlap_grid[level];
            const TaskPanel degraded =
                apply_overlap(panel, alpha, mix_seed(seed, kSaltOverlap + level));
            const TrainedRun deg = train_and_finalize(degraded, cfg.training, seed);
            const PairwiseMatrix e_deg = empirical_matrix(degraded, cfg.min_shared);

            Cell& cell = cells[static_cast<std::size_t>(level) * n_seeds + si];
            try {
                const auto ee = matrix_correlation(e_deg, e_full, 0, 0);
                cell.r_ee = ee.pearson_r;
                cell.n_pairs_ee = ee.n_pairs;
            } catch (const data_error&) {
            }
            try {
                const auto gg = matrix_correlation(deg.g, full.g, 0, 0);
                cell.r_gg = gg.pearson_r;
                cell.n_pairs_gg = gg.n_pairs;
            } catch (const data_error&) {
            }
        }
    });

    for (int level = 0; level < n_levels; ++level) {
        for (int si = 0; si < n_seeds; ++si) {
            const Cell& cell = cells[static_cast<std::size_t>(level) * n_seeds + si];
            Json row{{"alpha", cfg.overlap_grid[level]}, {"seed", cfg.seeds[si]}};
            row["r_ee"] = cell.r_ee ? Json(*cell.r_ee) : Json(nullptr);
            row["n_pairs_ee"] = cell.n_pairs_ee;
            row["r_gg"] = cell.r_gg ? Json(*cell.r_gg) : Json(nullptr);
            row["n_pairs_gg"] = cell.n_pairs_gg;
            report.rows.push_back(row);
        }
    }

    Json levels = Json::array();
    std::vector<double> la, lee, lgg;  // levels with data on both curves
    for (int level = 0; level < n_levels; ++level) {
        std::vector<double> ee, gg;
        for (int si = 0; si < n_seeds; ++si) {
            const Cell& cell = cells[static_cast<std::size_t>(level) * n_seeds + si];
            if (cell.r_ee) ee.push_back(*cell.r_ee);
            if (cell.r_gg) gg.push_back(*cell.r_gg);
        }
        Json entry{{"alpha", cfg.overlap_grid[level]},
                   {"mean_r_ee", ee.empty() ? Json(nullptr) : Json(mean_of(ee))},
                   {"n_valid_ee", ee.size()},
                   {"mean_r_gg", gg.empty() ? Json(nullptr) : Json(mean_of(gg))},
                   {"n_valid_gg", gg.size()}};
        levels.push_back(entry);
        if (!ee.empty() && !gg.empty()) {
            la.push_back(cfg.overlap_grid[level]);
            lee.push_back(mean_of(ee));
            lgg.push_back(mean_of(gg));
        }
    }
    report.derived["levels"] = levels;
    if (la.size() >= 3) {
        // Degradation level is 1 - alpha; both curves should not increase
        // with degradation.
        std::vector<double> degradation(la.size());
        std::transform(la.begin(), la.end(), degradation.begin(), [](double a) { return 1.0 - a; });
        report.derived["spearman_degradation_ee"] = spearman(degradation, lee);
        report.derived["spearman_degradation_gg"] = spearman(degradation, lgg);
    }
    return report;
}

ExperimentReport run_cross_domain(const ExperimentConfig& cfg) {
    if (cfg.panel.scheme != WeightScheme::two_block)
        throw config_error("crossdomain requires the two_block weight scheme");
    require_seeds(cfg, 1);
    ExperimentReport report = make_report(cfg);

    const int k = cfg.panel.n_tasks;
    const int k_a = (k + 1) / 2;
    auto category_of = [&](int i, int j, const std::vector<int>& block) {
        if (block[i] == block[j]) return block[i] == 0 ? 0 : 1;  // within_a / within_b
        return 2;                                                // cross
    };
    std::vector<int> true_block(k);
    for (int t = 0; t < k; ++t) true_block[t] = t < k_a ? 0 : 1;
    Partition block_partition{true_block, 2};

    const int n_seeds = static_cast<int>(cfg.seeds.size());
    struct Cell {
        PairwiseMatrix g, e;
        double ari_k2 = 0.0;
    };
    std::vector<Cell> cells(n_seeds);

    parallel_for(n_seeds, cfg.n_workers, [&](int si) {
        const std::uint64_t seed = cfg.seeds[si];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        const TrainedRun run = train_and_finalize(panel, cfg.training, seed);
        cells[si].g = run.g;
        cells[si].e = empirical_matrix(panel, cfg.min_shared);
        const Partition found = group_tasks(run.g, 2);
        cells[si].ari_k2 = ari(found, block_partition);
    });

    static const char* kCategoryNames[3] = {"within_a", "within_b", "cross"};
    auto category_stats = [&](const PairwiseMatrix& g, const PairwiseMatrix& e,
                              const std::vector<int>& block, int cat) {
        std::vector<double> gs, es;
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                if (category_of(i, j, block) == cat) {
                    if (g.is_valid(i, j)) gs.push_back(g.at(i, j));
                    if (e.is_valid(i, j)) es.push_back(e.at(i, j));
                }
        return std::make_pair(gs, es);
    };

    std::vector<double> ari_values;
    for (int si = 0; si < n_seeds; ++si) {
        const Cell& cell = cells[si];
        ari_values.push_back(cell.ari_k2);
        for (int cat = 0; cat < 3; ++cat) {
            auto [gs, es] = category_stats(cell.g, cell.e, true_block, cat);
            Json row{{"seed", cfg.seeds[si]},
                     {"category", kCategoryNames[cat]},
                     {"mean_g", gs.empty() ? Json(nullptr) : Json(mean_of(gs))},
                     {"mean_e", es.empty() ? Json(nullptr) : Json(mean_of(es))},
                     {"n_pairs", gs.size()}};
            if (gs.size() >= 3 && es.size() == gs.size()) {
                try {
                    row["r_ge"] = pearson(gs, es);
                } catch (const data_error&) {
                    row["r_ge"] = nullptr;
                }
            } else {
                row["r_ge"] = nullptr;
            }
            report.rows.push_back(row);
        }
    }

    // Within-vs-cross gap on mean gradient similarity, pooled across seeds;
    // the null permutes the task-to-block assignment per seed.
    auto gap_statistic = [&](const std::vector<int>& block) {
        double total = 0.0;
        for (const auto& cell : cells) {
            std::vector<double> within, cross;
            for (int i = 0; i < k; ++i)
                for (int j = i + 1; j < k; ++j) {
                    if (!cell.g.is_valid(i, j)) continue;
                    if (block[i] == block[j]) within.push_back(cell.g.at(i, j));
                    else cross.push_back(cell.g.at(i, j));
                }
            total += mean_of(within) - mean_of(cross);
        }
        return total / n_seeds;
    };

    const double observed_gap = gap_statistic(true_block);
    std::mt19937_64 rng(mix_seed(cfg.seeds.front(), kSaltPermutation));
    int hits = 0;
    std::vector<int> perm_block = true_block;
    for (int it = 0; it < cfg.n_permutations; ++it) {
        std::shuffle(perm_block.begin(), perm_block.end(), rng);
        if (gap_statistic(perm_block) >= observed_gap - 1e-12) ++hits;
    }
    const double p_gap = static_cast<double>(hits + 1) / (cfg.n_permutations + 1);

    int ari_perfect = 0;
    for (double a : ari_values)
        if (a >= 1.0 - 1e-12) ++ari_perfect;

    report.derived = Json{{"within_minus_cross_mean_g", observed_gap},
                          {"p_within_gt_cross", p_gap},
                          {"ari_per_seed", ari_values},
                          {"n_seeds_ari_1", ari_perfect},
                          {"n_seeds", n_seeds}};
    return report;
}

ExperimentReport run_dynamics(const ExperimentConfig& cfg) {
    require_seeds(cfg, 1);
    if (cfg.checkpoint_epochs.empty()) throw config_error("dynamics: checkpoint_epochs is empty");
    for (int e : cfg.checkpoint_epochs)
        if (e < 1 || e > cfg.training.epochs)
            throw config_error("dynamics: checkpoint epoch " + std::to_string(e) +
                               " outside [1, epochs]");

    ExperimentReport report = make_report(cfg);
    const int n_cp = static_cast<int>(cfg.checkpoint_epochs.size());
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    std::vector<std::vector<PairwiseMatrix>> snaps(n_seeds);

    parallel_for(n_seeds, cfg.n_workers, [&](int si) {
        const std::uint64_t seed = cfg.seeds[si];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        TrainedRun run = train_and_finalize(panel, cfg.training, seed);
        const long steps_per_epoch = (panel.n + cfg.training.batch_size - 1) / cfg.training.batch_size;
        std::vector<long> cp_steps;
        for (int e : cfg.checkpoint_epochs) cp_steps.push_back(steps_per_epoch * e);
        snaps[si] = matrix_at_checkpoints(run.acc, cp_steps);
    });

    std::vector<double> first_final, secondlast_final;
    for (int si = 0; si < n_seeds; ++si) {
        for (int a = 0; a < n_cp; ++a) {
            for (int b = a; b < n_cp; ++b) {
                const auto corr = matrix_correlation(snaps[si][a], snaps[si][b], 0, 0);
                report.rows.push_back(Json{{"seed", cfg.seeds[si]},
                                           {"epoch_a", cfg.checkpoint_epochs[a]},
                                           {"epoch_b", cfg.checkpoint_epochs[b]},
                                           {"r", corr.pearson_r},
                                           {"n_pairs", corr.n_pairs}});
                if (b == n_cp - 1 && a == 0) first_final.push_back(corr.pearson_r);
                if (b == n_cp - 1 && a == n_cp - 2) secondlast_final.push_back(corr.pearson_r);
            }
        }
    }
    report.derived = Json{{"mean_corr_first_final", mean_of(first_final)}};
    if (!secondlast_final.empty())
        report.derived["mean_corr_secondlast_final"] = mean_of(secondlast_final);
    return report;
}

ExperimentReport run_benefit(const ExperimentConfig& cfg) {
    require_seeds(cfg, 3);
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
        throw config_error("benefit: split_fraction must lie in (0, 1)");
    ExperimentReport report = make_report(cfg);

    const int n_seeds = static_cast<int>(cfg.seeds.size());
    struct SeedResult {
        std::vector<Json> rows;
        std::vector<double> g_values, benefits;
    };
    std::vector<SeedResult> results(n_seeds);

    parallel_for(n_seeds, cfg.n_workers, [&](int si) {
        const std::uint64_t seed = cfg.seeds[si];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        const auto [train_ids, test_ids] =
            split_rows(panel.n, cfg.split_fraction, mix_seed(seed, kSaltSplit));
        const TaskPanel train_panel = panel.select_samples(train_ids);
        const TaskPanel test_panel = panel.select_samples(test_ids);
        std::vector<int> test_rows(test_panel.n);
        std::iota(test_rows.begin(), test_rows.end(), 0);

        const TrainedRun full = train_and_finalize(train_panel, cfg.training, seed);

        const int k = panel.k;
        std::vector<double> r2_single(k);
        for (int t = 0; t < k; ++t) {
            const TaskPanel sub = train_panel.select_tasks({t});
            const Network model = train_plain(sub, cfg.training, mix_seed(seed, 1000 + t));
            r2_single[t] = r_squared(model, test_panel.select_tasks({t}), 0, test_rows);
        }

        SeedResult& out = results[si];
        for (int i = 0; i < k; ++i) {
            for (int j = i + 1; j < k; ++j) {
                const TaskPanel sub = train_panel.select_tasks({i, j});
                const Network model =
                    train_plain(sub, cfg.training, mix_seed(seed, 2000 + i * k + j));
                const TaskPanel test_sub = test_panel.select_tasks({i, j});
                const double r2_i = r_squared(model, test_sub, 0, test_rows);
                const double r2_j = r_squared(model, test_sub, 1, test_rows);
                const double benefit =
                    0.5 * (r2_i + r2_j) - 0.5 * (r2_single[i] + r2_single[j]);
                const double g_ij = full.g.is_valid(i, j) ? full.g.at(i, j) : 0.0;
                out.rows.push_back(Json{{"seed", seed},
                                        {"task_i", i},
                                        {"task_j", j},
                                        {"g_ij", g_ij},
                                        {"r2_single_i", r2_single[i]},
                                        {"r2_single_j", r2_single[j]},
                                        {"r2_pair_i", r2_i},
                                        {"r2_pair_j", r2_j},
                                        {"benefit", benefit}});
                out.g_values.push_back(g_ij);
                out.benefits.push_back(benefit);
            }
        }
    });

    std::vector<double> g_all, b_all;
    for (auto& res : results) {
        for (auto& row : res.rows) report.rows.push_back(std::move(row));
        g_all.insert(g_all.end(), res.g_values.begin(), res.g_values.end());
        b_all.insert(b_all.end(), res.benefits.begin(), res.benefits.end());
    }
    const auto corr = vector_correlation(g_all, b_all, cfg.n_permutations,
                                         mix_seed(cfg.seeds.front(), kSaltPermutation));
    report.derived["g_vs_benefit"] = correlation_json(corr);

    // Threshold sweep over seed-averaged pair values.
    const int k = cfg.panel.n_tasks;
    std::vector<double> g_pair, b_pair;
    {
        const int n_pairs = k * (k - 1) / 2;
        g_pair.assign(n_pairs, 0.0);
        b_pair.assign(n_pairs, 0.0);
        int idx = 0;
        for (int i = 0; i < k; ++i) {
            for (int j = i + 1; j < k; ++j, ++idx) {
                for (int si = 0; si < n_seeds; ++si) {
                    g_pair[idx] += results[si].g_values[idx];
                    b_pair[idx] += results[si].benefits[idx];
                }
                g_pair[idx] /= n_seeds;
                b_pair[idx] /= n_seeds;
            }
        }
    }
    std::vector<double> thresholds = g_pair;
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    Json sweep = Json::array();
    for (double thr : thresholds) {
        int tp = 0, fp = 0, fn = 0, neg_total = 0, neg_avoided = 0, pos_total = 0, pos_kept = 0,
            selected = 0;
        for (std::size_t p = 0; p < g_pair.size(); ++p) {
            const bool pick = g_pair[p] >= thr;
            const bool good = b_pair[p] > 0.0;
            selected += pick;
            if (good) {
                ++pos_total;
                if (pick) {
                    ++pos_kept;
                    ++tp;
                } else {
                    ++fn;
                }
            } else {
                ++neg_total;
                if (!pick) ++neg_avoided;
                else ++fp;
            }
        }
        Json entry{{"threshold", thr},
                   {"avoided_negative_fraction",
                    neg_total == 0 ? Json(1.0) : Json(static_cast<double>(neg_avoided) / neg_total)},
                   {"retained_benefit_fraction",
                    pos_total == 0 ? Json(1.0) : Json(static_cast<double>(pos_kept) / pos_total)},
                   {"n_selected", selected}};
        entry["f1"] = (2 * tp + fp + fn) == 0 ? Json(nullptr)
                                              : Json(2.0 * tp / (2.0 * tp + fp + fn));
        sweep.push_back(entry);
    }
    report.derived["threshold_sweep"] = sweep;
    return report;
}

ExperimentReport run_grouping(const ExperimentConfig& cfg) {
    require_seeds(cfg, 1);
    if (cfg.n_groups_list.empty()) throw config_error("group: n_groups_list is empty");
    if (cfg.n_random_trials < 1) throw config_error("group: n_random_trials must be >= 1");
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
        throw config_error("group: split_fraction must lie in (0, 1)");

    ExperimentReport report = make_report(cfg);
    const int k = cfg.panel.n_tasks;
    for (int g : cfg.n_groups_list)
        if (g < 1 || g > k) throw config_error("group: n_groups out of range [1, K]");

    struct Cell {  // one (seed, n_groups)
        std::vector<Json> rows;
        double improvement = 0.0;
        int n_beaten = 0;
    };
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    const int n_sizes = static_cast<int>(cfg.n_groups_list.size());
    std::vector<Cell> cells(static_cast<std::size_t>(n_seeds) * n_sizes);

    parallel_for(n_seeds, cfg.n_workers, [&](int si) {
        const std::uint64_t seed = cfg.seeds[si];
        auto [panel, truth] = generate_panel(panel_spec_for_seed(cfg, seed));
        const auto [train_ids, test_ids] =
            split_rows(panel.n, cfg.split_fraction, mix_seed(seed, kSaltSplit));
        const TaskPanel train_panel = panel.select_samples(train_ids);
        const TaskPanel test_panel = panel.select_samples(test_ids);
        std::vector<int> test_rows(test_panel.n);
        std::iota(test_rows.begin(), test_rows.end(), 0);

        const TrainedRun full = train_and_finalize(train_panel, cfg.training, seed);

        // Trains one model per group and averages per-task held-out R^2.
        auto score_partition = [&](const Partition& part) {
            std::vector<double> task_r2(k, 0.0);
            for (int group = 0; group < part.n_groups; ++group) {
                std::vector<int> members;
                for (int t = 0; t < k; ++t)
                    if (part.labels[t] == group) members.push_back(t);
                // Seed depends only on the member set, so identical groups
                // train identically in both arms.
                std::uint64_t group_salt = 0x9e3779b97f4a7c15ULL;
                for (int t : members) group_salt = mix_seed(group_salt, static_cast<std::uint64_t>(t));
                const TaskPanel sub = train_panel.select_tasks(members);
                const Network model = train_plain(sub, cfg.training, mix_seed(seed, group_salt));
                const TaskPanel test_sub = test_panel.select_tasks(members);
                for (std::size_t m = 0; m < members.size(); ++m)
                    task_r2[members[m]] =
                        r_squared(model, test_sub, static_cast<int>(m), test_rows);
            }
            return mean_of(task_r2);
        };

        auto partition_string = [&](const Partition& part) {
            std::string s;
            for (int t = 0; t < k; ++t) {
                if (t) s += '|';
                s += std::to_string(part.labels[t]);
            }
            return s;
        };

        for (int gi = 0; gi < n_sizes; ++gi) {
            const int n_groups = cfg.n_groups_list[gi];
            Cell& cell = cells[static_cast<std::size_t>(si) * n_sizes + gi];

            const Partition grad_part = group_tasks(full.g, n_groups);
            const double grad_score = score_partition(grad_part);
            cell.rows.push_back(Json{{"seed", seed},
                                     {"n_groups", n_groups},
                                     {"arm", "gradient"},
                                     {"trial", 0},
                                     {"partition", partition_string(grad_part)},
                                     {"score", grad_score}});

            std::vector<double> random_scores;
            for (int trial = 0; trial < cfg.n_random_trials; ++trial) {
                const Partition rnd = random_partition(
                    k, n_groups, mix_seed(seed, kSaltRandomGroup + 31ULL * trial + n_groups));
                const double score = score_partition(rnd);
                random_scores.push_back(score);
                cell.rows.push_back(Json{{"seed", seed},
                                         {"n_groups", n_groups},
                                         {"arm", "random"},
                                         {"trial", trial + 1},
                                         {"partition", partition_string(rnd)},
                                         {"score", score}});
            }
            cell.improvement = grad_score - mean_of(random_scores);
            cell.n_beaten = static_cast<int>(
                std::count_if(random_scores.begin(), random_scores.end(),
                              [&](double s) { return grad_score >= s; }));
        }
    });

    Json summary = Json::array();
    for (int si = 0; si < n_seeds; ++si) {
        for (int gi = 0; gi < n_sizes; ++gi) {
            Cell& cell = cells[static_cast<std::size_t>(si) * n_sizes + gi];
            for (auto& row : cell.rows) report.rows.push_back(std::move(row));
            summary.push_back(Json{{"seed", cfg.seeds[si]},
                                   {"n_groups", cfg.n_groups_list[gi]},
                                   {"improvement", cell.improvement},
                                   {"n_beaten", cell.n_beaten},
                                   {"n_trials", cfg.n_random_trials}});
        }
    }
    report.derived["cells"] = summary;
    return report;
}

ExperimentReport run_audit(const ExperimentConfig& cfg) {
    TaskPanel panel;
    if (!cfg.panel_csv.empty()) {
        panel = load_csv_panel(cfg.panel_csv);
    } else {
        panel = generate_panel(cfg.panel).first;
    }
    panel.validate();

    ExperimentReport report = make_report(cfg);
    const PairwiseMatrix overlap = pairwise_overlap(panel);
    const int k = panel.k;

    std::vector<double> pair_pct;
    int n_reliable = 0, n_transitional = 0, n_unreliable = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double pct = 100.0 * overlap.at(i, j);
            pair_pct.push_back(pct);
            const char* regime = pct >= cfg.reliable_from_pct          ? "reliable"
                                 : pct >= cfg.unreliable_below_pct     ? "transitional"
                                                                       : "unreliable";
            if (pct >= cfg.reliable_from_pct) ++n_reliable;
            else if (pct >= cfg.unreliable_below_pct) ++n_transitional;
            else ++n_unreliable;
            report.rows.push_back(Json{{"task_i", panel.task_names[i]},
                                       {"task_j", panel.task_names[j]},
                                       {"overlap_pct", pct},
                                       {"regime", regime}});
        }
    }

    std::vector<double> sorted = pair_pct;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    int ge_thresh = 0;
    for (double p : pair_pct)
        if (p >= cfg.unreliable_below_pct) ++ge_thresh;

    Json matrix = Json::array();
    for (int i = 0; i < k; ++i) {
        Json row = Json::array();
        for (int j = 0; j < k; ++j) row.push_back(overlap.at(i, j));
        matrix.push_back(row);
    }

    report.derived = Json{{"n_tasks", k},
                          {"n_samples", panel.n},
                          {"median_overlap_pct", median},
                          {"fraction_pairs_ge_threshold",
                           static_cast<double>(ge_thresh) / static_cast<double>(n)},
                          {"n_reliable", n_reliable},
                          {"n_transitional", n_transitional},
                          {"n_unreliable", n_unreliable},
                          {"task_names", panel.task_names},
                          {"overlap_matrix", matrix}};
    return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.name == "validate") return run_synthetic_validation(cfg);
    if (cfg.name == "phase") return run_phase_transition(cfg);
    if (cfg.name == "prop1") return run_prop1_null(cfg);
    if (cfg.name == "vardecomp") return run_variance_decomposition(cfg);
    if (cfg.name == "crossdomain") return run_cross_domain(cfg);
    if (cfg.name == "dynamics") return run_dynamics(cfg);
    if (cfg.name == "benefit") return run_benefit(cfg);
    if (cfg.name == "group") return run_grouping(cfg);
    if (cfg.name == "audit") return run_audit(cfg);
    throw config_error("unknown experiment: " + cfg.name);
}

}  // namespace taskgrad
