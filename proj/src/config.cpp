#include "taskgrad/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "taskgrad/errors.hpp"

namespace taskgrad {

namespace {

bool known_experiment(const std::string& name) {
    return std::find(kExperimentNames.begin(), kExperimentNames.end(), name) !=
           kExperimentNames.end();
}

// Keys of the "run" section each experiment accepts (besides the common ones).
const std::map<std::string, std::set<std::string>>& run_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"validate", {"seeds", "n_permutations", "min_shared", "n_workers"}},
        {"phase", {"seeds", "n_permutations", "min_shared", "overlap_grid", "n_workers"}},
        {"prop1", {"seeds", "n_permutations", "alpha", "n_workers"}},
        {"vardecomp", {"seeds", "min_shared", "overlap_grid", "n_workers"}},
        {"crossdomain", {"seeds", "n_permutations", "min_shared", "n_workers"}},
        {"dynamics", {"seeds", "checkpoint_epochs", "n_workers"}},
        {"benefit", {"seeds", "n_permutations", "split_fraction", "n_workers"}},
        {"group",
         {"seeds", "split_fraction", "n_groups_list", "n_random_trials", "n_workers"}},
        {"audit", {"unreliable_below_pct", "reliable_from_pct"}},
    };
    return keys;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = first + i;
    return seeds;
}

void reject_unknown(const Json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!obj.is_object()) throw config_error(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw config_error("unknown config key '" + where + "." + key + "'");
}

template <typename T>
T get_number(const Json& obj, const std::string& key, const std::string& where, T fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw config_error("config key '" + where + "." + key + "' must be an integer");
    } else {
        if (!v.is_number())
            throw config_error("config key '" + where + "." + key + "' must be a number");
    }
    return v.get<T>();
}

std::string get_string(const Json& obj, const std::string& key, const std::string& where,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_string())
        throw config_error("config key '" + where + "." + key + "' must be a string");
    return v.get<std::string>();
}

template <typename T>
std::vector<T> get_array(const Json& obj, const std::string& key, const std::string& where,
                         const std::vector<T>& fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_array())
        throw config_error("config key '" + where + "." + key + "' must be an array");
    std::vector<T> out;
    for (const auto& item : v) {
        if constexpr (std::is_integral_v<T>) {
            if (!item.is_number_integer() && !item.is_number_unsigned())
                throw config_error("config key '" + where + "." + key +
                                   "' must contain integers");
        } else {
            if (!item.is_number())
                throw config_error("config key '" + where + "." + key + "' must contain numbers");
        }
        out.push_back(item.get<T>());
    }
    return out;
}

WeightScheme scheme_from_string(const std::string& s) {
    if (s == "random") return WeightScheme::random;
    if (s == "two_block") return WeightScheme::two_block;
    if (s == "custom") return WeightScheme::custom;
    throw config_error("config key 'panel.weight_scheme' must be one of random|two_block|custom");
}

const char* scheme_to_string(WeightScheme s) {
    switch (s) {
        case WeightScheme::random: return "random";
        case WeightScheme::two_block: return "two_block";
        case WeightScheme::custom: return "custom";
    }
    return "?";
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
    if (!known_experiment(experiment))
        throw config_error("unknown experiment '" + experiment + "'");

    ExperimentConfig cfg;
    cfg.name = experiment;

    if (experiment == "validate") cfg.seeds = seed_range(1, 5);
    else if (experiment == "phase") cfg.seeds = seed_range(1, 5);
    else if (experiment == "prop1") cfg.seeds = seed_range(1, 50);
    else if (experiment == "vardecomp") cfg.seeds = seed_range(1, 5);
    else if (experiment == "crossdomain") cfg.seeds = seed_range(1, 10);
    else if (experiment == "dynamics") cfg.seeds = seed_range(1, 5);
    else if (experiment == "benefit") cfg.seeds = seed_range(1, 3);
    else if (experiment == "group") cfg.seeds = seed_range(1, 1);

    if (experiment == "phase" || experiment == "vardecomp")
        cfg.overlap_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    if (experiment == "dynamics") cfg.checkpoint_epochs = {1, 5, 10, 20, 50, 100};
    if (experiment == "crossdomain" || experiment == "group")
        cfg.panel.scheme = WeightScheme::two_block;
    if (experiment == "benefit" || experiment == "group")
        cfg.training.epochs = 30;  // pairwise/grouped models use a short identical budget
    if (experiment == "group") cfg.n_groups_list = {2};
    return cfg;
}

ExperimentConfig config_from_json(const std::string& experiment, const Json& doc,
                                  const ConfigOverrides& overrides) {
    ExperimentConfig cfg = default_config(experiment);

    reject_unknown(doc, {"experiment", "output_dir", "panel", "training", "run"}, "$");
    const std::string named = get_string(doc, "experiment", "$", experiment);
    if (named != experiment)
        throw config_error("config names experiment '" + named + "' but '" + experiment +
                           "' was requested");
    cfg.output_dir = get_string(doc, "output_dir", "$", cfg.output_dir);

    if (doc.contains("panel")) {
        const Json& p = doc.at("panel");
        reject_unknown(p,
                       {"n_samples", "n_latent", "n_tasks", "weight_scheme", "custom_weights",
                        "noise_sd", "seed", "csv_path"},
                       "panel");
        cfg.panel.n_samples = get_number<int>(p, "n_samples", "panel", cfg.panel.n_samples);
        cfg.panel.n_latent = get_number<int>(p, "n_latent", "panel", cfg.panel.n_latent);
        cfg.panel.n_tasks = get_number<int>(p, "n_tasks", "panel", cfg.panel.n_tasks);
        cfg.panel.scheme = scheme_from_string(
            get_string(p, "weight_scheme", "panel", scheme_to_string(cfg.panel.scheme)));
        cfg.panel.noise_sd = get_number<double>(p, "noise_sd", "panel", cfg.panel.noise_sd);
        cfg.panel.seed = get_number<std::uint64_t>(p, "seed", "panel", cfg.panel.seed);
        cfg.panel_csv = get_string(p, "csv_path", "panel", cfg.panel_csv);
        if (p.contains("custom_weights")) {
            const auto& w = p.at("custom_weights");
            if (!w.is_array())
                throw config_error("config key 'panel.custom_weights' must be an array of rows");
            cfg.panel.custom_weights.clear();
            for (const auto& row : w) {
                if (!row.is_array() || static_cast<int>(row.size()) != cfg.panel.n_latent)
                    throw config_error("panel.custom_weights rows must have n_latent entries");
                for (const auto& v : row) {
                    if (!v.is_number())
                        throw config_error("panel.custom_weights must contain numbers");
                    cfg.panel.custom_weights.push_back(v.get<double>());
                }
            }
            if (static_cast<int>(cfg.panel.custom_weights.size()) !=
                cfg.panel.n_tasks * cfg.panel.n_latent)
                throw config_error("panel.custom_weights must be n_tasks x n_latent");
        }
        if (cfg.panel.scheme == WeightScheme::custom && cfg.panel.custom_weights.empty())
            throw config_error("panel.weight_scheme=custom requires panel.custom_weights");
        if (!cfg.panel_csv.empty() && experiment != "audit")
            throw config_error("panel.csv_path is only supported by the audit experiment");
    }

    if (doc.contains("training")) {
        const Json& t = doc.at("training");
        reject_unknown(t,
                       {"learning_rate", "epochs", "batch_size", "log_interval_steps",
                        "averaging_window_fraction", "hidden_dims", "activation"},
                       "training");
        cfg.training.learning_rate =
            get_number<double>(t, "learning_rate", "training", cfg.training.learning_rate);
        cfg.training.epochs = get_number<int>(t, "epochs", "training", cfg.training.epochs);
        cfg.training.batch_size =
            get_number<int>(t, "batch_size", "training", cfg.training.batch_size);
        cfg.training.log_interval_steps = get_number<int>(t, "log_interval_steps", "training",
                                                          cfg.training.log_interval_steps);
        cfg.training.window_fraction = get_number<double>(t, "averaging_window_fraction",
                                                          "training", cfg.training.window_fraction);
        cfg.training.hidden_dims =
            get_array<int>(t, "hidden_dims", "training", cfg.training.hidden_dims);
        const std::string act = get_string(
            t, "activation", "training",
            cfg.training.activation == Activation::tanh ? "tanh" : "identity");
        if (act == "tanh") cfg.training.activation = Activation::tanh;
        else if (act == "identity") cfg.training.activation = Activation::identity;
        else throw config_error("training.activation must be 'tanh' or 'identity'");
    }

    if (doc.contains("run")) {
        const Json& r = doc.at("run");
        reject_unknown(r, run_keys().at(experiment), "run");
        cfg.seeds = get_array<std::uint64_t>(r, "seeds", "run", cfg.seeds);
        cfg.n_permutations = get_number<int>(r, "n_permutations", "run", cfg.n_permutations);
        cfg.min_shared = get_number<int>(r, "min_shared", "run", cfg.min_shared);
        cfg.overlap_grid = get_array<double>(r, "overlap_grid", "run", cfg.overlap_grid);
        cfg.prop1_alpha = get_number<double>(r, "alpha", "run", cfg.prop1_alpha);
        cfg.checkpoint_epochs =
            get_array<int>(r, "checkpoint_epochs", "run", cfg.checkpoint_epochs);
        cfg.split_fraction = get_number<double>(r, "split_fraction", "run", cfg.split_fraction);
        cfg.n_groups_list = get_array<int>(r, "n_groups_list", "run", cfg.n_groups_list);
        cfg.n_random_trials = get_number<int>(r, "n_random_trials", "run", cfg.n_random_trials);
        cfg.unreliable_below_pct =
            get_number<double>(r, "unreliable_below_pct", "run", cfg.unreliable_below_pct);
        cfg.reliable_from_pct =
            get_number<double>(r, "reliable_from_pct", "run", cfg.reliable_from_pct);
        cfg.n_workers = get_number<int>(r, "n_workers", "run", cfg.n_workers);
    }

    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    if (overrides.parallel) cfg.n_workers = std::max(1, *overrides.parallel);
    if (overrides.seed_override) {
        cfg.seeds = seed_range(*overrides.seed_override, std::max<std::size_t>(cfg.seeds.size(), 1));
        cfg.panel.seed = *overrides.seed_override;
    }

    if (cfg.n_permutations < 0) throw config_error("run.n_permutations must be >= 0");
    if (cfg.min_shared < 3) throw config_error("run.min_shared must be >= 3");
    if (cfg.n_workers < 1) throw config_error("run.n_workers must be >= 1");
    return cfg;
}

ExperimentConfig load_config_file(const std::string& experiment, const std::string& path,
                                  const ConfigOverrides& overrides) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    Json doc;
    try {
        doc = Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(experiment, doc, overrides);
}

Json config_echo(const ExperimentConfig& cfg) {
    Json panel{{"n_samples", cfg.panel.n_samples},
               {"n_latent", cfg.panel.n_latent},
               {"n_tasks", cfg.panel.n_tasks},
               {"weight_scheme", scheme_to_string(cfg.panel.scheme)},
               {"noise_sd", cfg.panel.noise_sd},
               {"seed", cfg.panel.seed}};
    if (cfg.panel.scheme == WeightScheme::custom) {
        Json rows = Json::array();
        for (int t = 0; t < cfg.panel.n_tasks; ++t) {
            Json row = Json::array();
            for (int j = 0; j < cfg.panel.n_latent; ++j)
                row.push_back(cfg.panel.custom_weights[static_cast<std::size_t>(t) * cfg.panel.n_latent + j]);
            rows.push_back(row);
        }
        panel["custom_weights"] = rows;
    }
    if (!cfg.panel_csv.empty()) panel["csv_path"] = cfg.panel_csv;

    Json training{{"learning_rate", cfg.training.learning_rate},
                  {"epochs", cfg.training.epochs},
                  {"batch_size", cfg.training.batch_size},
                  {"log_interval_steps", cfg.training.log_interval_steps},
                  {"averaging_window_fraction", cfg.training.window_fraction},
                  {"hidden_dims", cfg.training.hidden_dims},
                  {"activation", cfg.training.activation == Activation::tanh ? "tanh" : "identity"}};

    Json run;
    const auto& allowed = run_keys().at(cfg.name);
    if (allowed.count("seeds")) run["seeds"] = cfg.seeds;
    if (allowed.count("n_permutations")) run["n_permutations"] = cfg.n_permutations;
    if (allowed.count("min_shared")) run["min_shared"] = cfg.min_shared;
    if (allowed.count("overlap_grid")) run["overlap_grid"] = cfg.overlap_grid;
    if (allowed.count("alpha")) run["alpha"] = cfg.prop1_alpha;
    if (allowed.count("checkpoint_epochs")) run["checkpoint_epochs"] = cfg.checkpoint_epochs;
    if (allowed.count("split_fraction")) run["split_fraction"] = cfg.split_fraction;
    if (allowed.count("n_groups_list")) run["n_groups_list"] = cfg.n_groups_list;
    if (allowed.count("n_random_trials")) run["n_random_trials"] = cfg.n_random_trials;
    if (allowed.count("unreliable_below_pct")) run["unreliable_below_pct"] = cfg.unreliable_below_pct;
    if (allowed.count("reliable_from_pct")) run["reliable_from_pct"] = cfg.reliable_from_pct;
    if (allowed.count("n_workers")) run["n_workers"] = cfg.n_workers;

    return Json{{"experiment", cfg.name},
                {"output_dir", cfg.output_dir},
                {"panel", panel},
                {"training", training},
                {"run", run}};
}

}  // namespace taskgrad
