#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "taskgrad/cluster.hpp"
#include "taskgrad/config.hpp"
#include "taskgrad/conflict.hpp"
#include "taskgrad/errors.hpp"
#include "taskgrad/experiments.hpp"
#include "taskgrad/nnet.hpp"
#include "taskgrad/panel.hpp"
#include "taskgrad/report.hpp"
#include "taskgrad/stats.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace taskgrad;

namespace {

py::array_t<double> to_array(const std::vector<double>& data, int rows, int cols) {
    py::array_t<double> arr({rows, cols});
    std::copy(data.begin(), data.end(), arr.mutable_data());
    return arr;
}

py::array_t<bool> to_bool_array(const std::vector<std::uint8_t>& data, int rows, int cols) {
    py::array_t<bool> arr({rows, cols});
    auto* out = arr.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = data[i] != 0;
    return arr;
}

py::tuple matrix_pair(const PairwiseMatrix& m) {
    return py::make_tuple(to_array(m.values, m.k, m.k), to_bool_array(m.valid, m.k, m.k));
}

PairwiseMatrix matrix_from_arrays(py::array_t<double, py::array::c_style | py::array::forcecast> values,
                                  py::array_t<bool, py::array::c_style | py::array::forcecast> valid,
                                  PairwiseMatrix::Kind kind) {
    if (values.ndim() != 2 || values.shape(0) != values.shape(1))
        throw config_error("matrix must be square");
    const int k = static_cast<int>(values.shape(0));
    PairwiseMatrix m(kind, k);
    std::copy_n(values.data(), static_cast<std::size_t>(k) * k, m.values.begin());
    if (valid.ndim() == 2 && valid.shape(0) == k && valid.shape(1) == k) {
        for (std::size_t i = 0; i < m.valid.size(); ++i) m.valid[i] = valid.data()[i] ? 1 : 0;
    } else {
        throw config_error("valid mask must match the matrix shape");
    }
    return m;
}

std::vector<double> to_vector(py::array_t<double, py::array::c_style | py::array::forcecast> x) {
    return std::vector<double>(x.data(), x.data() + x.size());
}

TrainingSpec training_spec(double learning_rate, int epochs, int batch_size,
                           int log_interval_steps, double window_fraction,
                           const std::vector<int>& hidden_dims, const std::string& activation) {
    TrainingSpec spec;
    spec.learning_rate = learning_rate;
    spec.epochs = epochs;
    spec.batch_size = batch_size;
    spec.log_interval_steps = log_interval_steps;
    spec.window_fraction = window_fraction;
    spec.hidden_dims = hidden_dims;
    if (activation == "tanh") spec.activation = Activation::tanh;
    else if (activation == "identity") spec.activation = Activation::identity;
    else throw config_error("activation must be 'tanh' or 'identity'");
    return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gradient-based task relationship analysis for multi-task panels";

    py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<data_error>(m, "DataError", PyExc_ValueError);
    py::register_exception<numeric_error>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<TaskPanel>(m, "Panel")
        .def_property_readonly("n_samples", [](const TaskPanel& p) { return p.n; })
        .def_property_readonly("n_features", [](const TaskPanel& p) { return p.d_in; })
        .def_property_readonly("n_tasks", [](const TaskPanel& p) { return p.k; })
        .def_property_readonly("task_names", [](const TaskPanel& p) { return p.task_names; })
        .def_property_readonly("sample_ids", [](const TaskPanel& p) { return p.sample_ids; })
        .def_property_readonly("features",
                               [](const TaskPanel& p) { return to_array(p.features, p.n, p.d_in); })
        .def_property_readonly("labels",
                               [](const TaskPanel& p) { return to_array(p.labels, p.n, p.k); })
        .def_property_readonly("mask",
                               [](const TaskPanel& p) { return to_bool_array(p.mask, p.n, p.k); })
        .def("__repr__", [](const TaskPanel& p) {
            return "<Panel " + std::to_string(p.n) + " samples x " + std::to_string(p.k) +
                   " tasks>";
        });

    m.def(
        "generate_panel",
        [](int n_samples, int n_latent, int n_tasks, const std::string& weight_scheme,
           double noise_sd, std::uint64_t seed) {
            PanelSpec spec;
            spec.n_samples = n_samples;
            spec.n_latent = n_latent;
            spec.n_tasks = n_tasks;
            spec.noise_sd = noise_sd;
            spec.seed = seed;
            if (weight_scheme == "random") spec.scheme = WeightScheme::random;
            else if (weight_scheme == "two_block") spec.scheme = WeightScheme::two_block;
            else throw config_error("weight_scheme must be 'random' or 'two_block'");
            auto [panel, truth] = generate_panel(spec);
            return py::make_tuple(panel, to_array(truth.weights, truth.k, truth.l),
                                  matrix_pair(truth.similarity));
        },
        py::arg("n_samples") = 2000, py::arg("n_latent") = 10, py::arg("n_tasks") = 8,
        py::arg("weight_scheme") = "random", py::arg("noise_sd") = 0.3, py::arg("seed") = 1,
        "Returns (panel, weights, (similarity, valid)).");

    m.def("apply_overlap", &apply_overlap, py::arg("panel"), py::arg("target_alpha"),
          py::arg("seed"));
    m.def("pairwise_overlap",
          [](const TaskPanel& panel) { return matrix_pair(pairwise_overlap(panel)); });
    m.def("load_csv_panel", &load_csv_panel, py::arg("path"));
    m.def("save_csv_panel", &save_csv_panel, py::arg("panel"), py::arg("path"));

    m.def(
        "empirical_matrix",
        [](const TaskPanel& panel, int min_shared) {
            return matrix_pair(empirical_matrix(panel, min_shared));
        },
        py::arg("panel"), py::arg("min_shared") = 20);

    m.def(
        "train_gradient_matrix",
        [](const TaskPanel& panel, double learning_rate, int epochs, int batch_size,
           int log_interval_steps, double window_fraction, std::vector<int> hidden_dims,
           const std::string& activation, std::uint64_t seed) {
            const TrainingSpec spec =
                training_spec(learning_rate, epochs, batch_size, log_interval_steps,
                              window_fraction, hidden_dims, activation);
            const Network net0 = init_network(spec.arch(panel.d_in, panel.k), mix_seed(seed, 0));
            ConflictAccumulator acc;
            train(net0, panel, spec.train_config(mix_seed(seed, 1)), &acc);
            return matrix_pair(finalize(acc));
        },
        py::arg("panel"), py::arg("learning_rate") = 0.001, py::arg("epochs") = 100,
        py::arg("batch_size") = 32, py::arg("log_interval_steps") = 10,
        py::arg("window_fraction") = 0.2, py::arg("hidden_dims") = std::vector<int>{32, 16},
        py::arg("activation") = "tanh", py::arg("seed") = 0,
        "Trains the shared-encoder model and returns the window-averaged "
        "gradient similarity matrix as (values, valid).");

    m.def(
        "gradient_check",
        [](const TaskPanel& panel, int task, std::vector<int> sample_ids, double tolerance,
           std::vector<int> hidden_dims, const std::string& activation, std::uint64_t seed) {
            const TrainingSpec spec =
                training_spec(0.01, 1, 32, 10, 0.2, hidden_dims, activation);
            const Network net = init_network(spec.arch(panel.d_in, panel.k), seed);
            const auto report = gradient_check(net, panel, task, sample_ids, tolerance);
            return py::dict("max_rel_error"_a = report.max_rel_error, "pass"_a = report.pass,
                            "worst_coordinate"_a = report.worst_coordinate);
        },
        py::arg("panel"), py::arg("task"), py::arg("sample_ids"), py::arg("tolerance") = 1e-4,
        py::arg("hidden_dims") = std::vector<int>{8, 6}, py::arg("activation") = "tanh",
        py::arg("seed") = 0);

    m.def(
        "pearson",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           py::array_t<double, py::array::c_style | py::array::forcecast> y) {
            return pearson(to_vector(x), to_vector(y));
        },
        py::arg("x"), py::arg("y"));
    m.def(
        "spearman",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           py::array_t<double, py::array::c_style | py::array::forcecast> y) {
            return spearman(to_vector(x), to_vector(y));
        },
        py::arg("x"), py::arg("y"));

    m.def(
        "matrix_correlation",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> a_values,
           py::array_t<bool, py::array::c_style | py::array::forcecast> a_valid,
           py::array_t<double, py::array::c_style | py::array::forcecast> b_values,
           py::array_t<bool, py::array::c_style | py::array::forcecast> b_valid,
           int n_permutations, std::uint64_t seed) {
            const auto a = matrix_from_arrays(a_values, a_valid, PairwiseMatrix::Kind::gradient);
            const auto b = matrix_from_arrays(b_values, b_valid, PairwiseMatrix::Kind::empirical);
            const auto res = matrix_correlation(a, b, n_permutations, seed);
            return py::dict("r"_a = res.pearson_r, "rho"_a = res.spearman_rho,
                            "p"_a = res.p_value, "n_pairs"_a = res.n_pairs);
        },
        py::arg("a_values"), py::arg("a_valid"), py::arg("b_values"), py::arg("b_valid"),
        py::arg("n_permutations") = 10000, py::arg("seed") = 0);

    m.def(
        "fit_sigmoid",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           py::array_t<double, py::array::c_style | py::array::forcecast> y) {
            const auto fit = fit_sigmoid(to_vector(x), to_vector(y));
            return py::dict("L"_a = fit.L, "k"_a = fit.k, "x0"_a = fit.x0, "b"_a = fit.b,
                            "r_squared"_a = fit.r_squared, "n_points"_a = fit.n_points);
        },
        py::arg("x_percent"), py::arg("r"));
    m.def("snr_model", &snr_model, py::arg("alpha"), py::arg("sigma_signal_sq"),
          py::arg("sigma_noise_sq"), py::arg("rho_max"));

    m.def(
        "linkage_average",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> d) {
            py::array_t<bool> all(std::vector<py::ssize_t>{d.shape(0), d.shape(0)});
            std::fill(all.mutable_data(), all.mutable_data() + all.size(), true);
            const auto dist = matrix_from_arrays(d, all, PairwiseMatrix::Kind::gradient);
            const auto den = linkage_average(dist);
            py::list merges;
            for (const auto& merge : den.merges)
                merges.append(py::make_tuple(merge.left, merge.right, merge.height));
            return merges;
        },
        py::arg("distances"));

    m.def(
        "group_tasks",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> values,
           py::array_t<bool, py::array::c_style | py::array::forcecast> valid, int n_groups) {
            const auto g = matrix_from_arrays(values, valid, PairwiseMatrix::Kind::gradient);
            int n_imputed = 0;
            const auto part = group_tasks(g, n_groups, &n_imputed);
            return py::make_tuple(part.labels, n_imputed);
        },
        py::arg("values"), py::arg("valid"), py::arg("n_groups"));

    m.def(
        "ari",
        [](std::vector<int> a, std::vector<int> b) {
            auto mk = [](std::vector<int>& labels) {
                Partition p;
                p.labels = labels;
                p.n_groups = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
                return p;
            };
            return ari(mk(a), mk(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "nmi",
        [](std::vector<int> a, std::vector<int> b) {
            auto mk = [](std::vector<int>& labels) {
                Partition p;
                p.labels = labels;
                p.n_groups = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
                return p;
            };
            return nmi(mk(a), mk(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "random_partition",
        [](int k, int n_groups, std::uint64_t seed) {
            return random_partition(k, n_groups, seed).labels;
        },
        py::arg("k"), py::arg("n_groups"), py::arg("seed"));

    m.def(
        "run_experiment",
        [](const std::string& name, const std::string& config_json) {
            const Json doc = config_json.empty() ? Json::object() : Json::parse(config_json);
            const auto cfg = config_from_json(name, doc);
            const auto report = run_experiment(cfg);
            return report_json_string(report);
        },
        py::arg("name"), py::arg("config_json") = std::string(),
        "Runs one experiment and returns the report as a JSON string.");
}
