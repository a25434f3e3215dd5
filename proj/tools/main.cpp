#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "taskgrad/config.hpp"
#include "taskgrad/errors.hpp"
#include "taskgrad/experiments.hpp"
#include "taskgrad/pairwise.hpp"
#include "taskgrad/panel.hpp"
#include "taskgrad/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed_override = -1;
    int parallel = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--out", flags.out_dir, "Output directory (overrides config)");
    cmd->add_option("--seed-override", flags.seed_override,
                    "Rebase the seed list / panel seed to this value");
    cmd->add_option("--parallel", flags.parallel, "Worker threads for experiment cells");
}

taskgrad::ConfigOverrides to_overrides(const CommonFlags& flags) {
    taskgrad::ConfigOverrides ov;
    if (!flags.out_dir.empty()) ov.output_dir = flags.out_dir;
    if (flags.seed_override >= 0) ov.seed_override = static_cast<std::uint64_t>(flags.seed_override);
    if (flags.parallel > 0) ov.parallel = flags.parallel;
    return ov;
}

taskgrad::ExperimentConfig load(const std::string& experiment, const CommonFlags& flags) {
    const auto overrides = to_overrides(flags);
    if (flags.config_path.empty())
        return taskgrad::config_from_json(experiment, taskgrad::Json::object(), overrides);
    return taskgrad::load_config_file(experiment, flags.config_path, overrides);
}

int cmd_generate(const CommonFlags& flags) {
    auto cfg = load("audit", flags);  // panel + output sections only
    const auto [panel, truth] = taskgrad::generate_panel(cfg.panel);

    std::filesystem::create_directories(cfg.output_dir);
    const auto panel_path = std::filesystem::path(cfg.output_dir) / "panel.csv";
    const auto truth_path = std::filesystem::path(cfg.output_dir) / "ground_truth.csv";
    taskgrad::save_csv_panel(panel, panel_path.string());
    taskgrad::write_matrix_csv(truth_path.string(), truth.similarity, panel.task_names);
    std::cout << "wrote " << panel_path.string() << " (" << panel.n << " samples, " << panel.k
              << " tasks)\n";
    std::cout << "wrote " << truth_path.string() << "\n";
    return kExitOk;
}

int cmd_run(const std::string& experiment, const CommonFlags& flags) {
    auto cfg = load(experiment, flags);
    const auto report = taskgrad::run_experiment(cfg);
    const auto paths = taskgrad::write_report_files(report, cfg.output_dir);
    std::cout << "wrote " << paths.json_path << "\n";
    std::cout << "wrote " << paths.csv_path << "\n";
    return kExitOk;
}

int cmd_audit(const std::string& csv_path, const CommonFlags& flags) {
    auto cfg = load("audit", flags);
    if (!csv_path.empty()) cfg.panel_csv = csv_path;
    if (cfg.panel_csv.empty())
        throw taskgrad::config_error("audit needs a panel CSV (argument or panel.csv_path)");

    const auto report = taskgrad::run_audit(cfg);
    const auto paths = taskgrad::write_report_files(report, cfg.output_dir);

    const auto& d = report.derived;
    std::printf("tasks: %d, samples: %d\n", d["n_tasks"].get<int>(), d["n_samples"].get<int>());
    std::printf("median pairwise overlap: %.1f%%\n", d["median_overlap_pct"].get<double>());
    std::printf("pairs at/above %.0f%% overlap: %.1f%%\n", cfg.unreliable_below_pct,
                100.0 * d["fraction_pairs_ge_threshold"].get<double>());
    std::printf("regimes: %d reliable, %d transitional, %d unreliable\n",
                d["n_reliable"].get<int>(), d["n_transitional"].get<int>(),
                d["n_unreliable"].get<int>());
    std::cout << "wrote " << paths.json_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-based task relationship analysis for multi-task panels"};
    app.require_subcommand(1);

    CommonFlags gen_flags, run_flags, audit_flags;
    std::string experiment, audit_csv;

    auto* generate = app.add_subcommand("generate", "Write a synthetic panel and its ground truth");
    add_common(generate, gen_flags);

    auto* run = app.add_subcommand("run", "Run an experiment and write JSON+CSV reports");
    run->add_option("experiment", experiment, "One of: validate phase prop1 vardecomp crossdomain dynamics benefit group audit")
        ->required();
    add_common(run, run_flags);

    auto* audit = app.add_subcommand("audit", "Report pairwise sample overlap of a panel CSV");
    audit->add_option("panel_csv", audit_csv, "Panel CSV path");
    add_common(audit, audit_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen_flags);
        if (run->parsed()) return cmd_run(experiment, run_flags);
        if (audit->parsed()) return cmd_audit(audit_csv, audit_flags);
    } catch (const taskgrad::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const taskgrad::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const taskgrad::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
