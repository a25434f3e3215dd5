#include "taskgrad/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "taskgrad/conflict.hpp"
#include "taskgrad/errors.hpp"

namespace taskgrad {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (log_interval_steps < 1) throw config_error("log_interval_steps must be >= 1");
    if (!(averaging_window_fraction > 0.0) || averaging_window_fraction > 1.0)
        throw config_error("averaging_window_fraction must lie in (0, 1]");
}

int Network::encoder_param_count() const {
    int p = 0;
    for (const auto& layer : layers_) p += layer.out * layer.in + layer.out;
    return p;
}

std::vector<double> Network::encoder_params() const {
    std::vector<double> flat;
    flat.reserve(encoder_param_count());
    for (const auto& layer : layers_) {
        flat.insert(flat.end(), layer.w.begin(), layer.w.end());
        flat.insert(flat.end(), layer.b.begin(), layer.b.end());
    }
    return flat;
}

void Network::set_encoder_params(const std::vector<double>& flat) {
    if (static_cast<int>(flat.size()) != encoder_param_count())
        throw config_error("encoder parameter vector has wrong length");
    std::size_t pos = 0;
    for (auto& layer : layers_) {
        std::copy_n(flat.begin() + pos, layer.w.size(), layer.w.begin());
        pos += layer.w.size();
        std::copy_n(flat.begin() + pos, layer.b.size(), layer.b.begin());
        pos += layer.b.size();
    }
}

namespace {

inline double activate(double z, Activation act) {
    return act == Activation::tanh ? std::tanh(z) : z;
}

// Derivative expressed through the activation value.
inline double activate_grad(double a, Activation act) {
    return act == Activation::tanh ? 1.0 - a * a : 1.0;
}

}  // namespace

std::vector<double> Network::representation(const double* x) const {
    std::vector<double> cur(x, x + input_dim());
    std::vector<double> next;
    for (const auto& layer : layers_) {
        next.assign(layer.out, 0.0);
        for (int r = 0; r < layer.out; ++r) {
            double z = layer.b[r];
            const double* wr = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
            for (int c = 0; c < layer.in; ++c) z += wr[c] * cur[c];
            next[r] = activate(z, activation_);
        }
        cur.swap(next);
    }
    return cur;
}

double Network::predict(const double* x, int task) const {
    const auto repr = representation(x);
    const auto& head = heads_[task];
    double p = head.b;
    for (int c = 0; c < repr_dim(); ++c) p += head.w[c] * repr[c];
    return p;
}

Network init_network(const ArchSpec& spec, std::uint64_t seed) {
    if (spec.input_dim < 1) throw config_error("input dimension must be positive");
    if (spec.n_tasks < 1) throw config_error("need at least one task head");
    for (int h : spec.hidden_dims)
        if (h < 1) throw config_error("encoder layer width must be positive");
    if (spec.hidden_dims.empty()) throw config_error("encoder needs at least one layer");

    Network net;
    net.activation_ = spec.activation;
    net.seed_ = seed;
    std::mt19937_64 rng(seed);

    int in = spec.input_dim;
    for (int out : spec.hidden_dims) {
        Network::Layer layer;
        layer.in = in;
        layer.out = out;
        const double limit = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> uni(-limit, limit);
        layer.w.resize(static_cast<std::size_t>(out) * in);
        for (auto& v : layer.w) v = uni(rng);
        layer.b.assign(out, 0.0);
        net.layers_.push_back(std::move(layer));
        in = out;
    }
    const int d_repr = in;
    const double limit = std::sqrt(6.0 / (d_repr + 1));
    std::uniform_real_distribution<double> uni(-limit, limit);
    for (int t = 0; t < spec.n_tasks; ++t) {
        Network::Head head;
        head.w.resize(d_repr);
        for (auto& v : head.w) v = uni(rng);
        head.b = 0.0;
        net.heads_.push_back(std::move(head));
    }
    return net;
}

namespace {

// Activations for a batch, layer by layer (index 0 is the input).
struct ForwardCache {
    std::vector<std::vector<double>> acts;
    int n = 0;
};

void forward_batch(const Network& net, const TaskPanel& panel, const std::vector<int>& batch,
                   ForwardCache& fc) {
    const auto& layers = net.layers();
    fc.n = static_cast<int>(batch.size());
    fc.acts.resize(layers.size() + 1);

    auto& a0 = fc.acts[0];
    a0.resize(static_cast<std::size_t>(fc.n) * panel.d_in);
    for (int s = 0; s < fc.n; ++s)
        std::copy_n(panel.features.begin() + static_cast<std::size_t>(batch[s]) * panel.d_in,
                    panel.d_in, a0.begin() + static_cast<std::size_t>(s) * panel.d_in);

    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const auto& prev = fc.acts[l];
        auto& cur = fc.acts[l + 1];
        cur.assign(static_cast<std::size_t>(fc.n) * layer.out, 0.0);
        for (int s = 0; s < fc.n; ++s) {
            const double* in = prev.data() + static_cast<std::size_t>(s) * layer.in;
            double* out = cur.data() + static_cast<std::size_t>(s) * layer.out;
            for (int r = 0; r < layer.out; ++r) {
                double z = layer.b[r];
                const double* wr = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
                for (int c = 0; c < layer.in; ++c) z += wr[c] * in[c];
                out[r] = activate(z, net.activation());
            }
        }
    }
}

struct HeadGrad {
    std::vector<double> w;
    double b = 0.0;
};

// MSE loss for one task over the rows of the cache listed in `rows`
// (positions within the batch), plus optional gradients. The encoder gradient
// lands in `enc_grad` using the flat layer-major layout.
double task_loss_and_grad(const Network& net, const TaskPanel& panel,
                          const std::vector<int>& batch, const ForwardCache& fc, int task,
                          const std::vector<int>& rows, std::vector<double>* enc_grad,
                          HeadGrad* head_grad) {
    const auto& layers = net.layers();
    const auto& head = net.heads()[task];
    const int d_repr = net.repr_dim();
    const int n = static_cast<int>(rows.size());
    const auto& repr = fc.acts.back();

    double loss = 0.0;
    std::vector<double> dldp(n);
    for (int v = 0; v < n; ++v) {
        const int s = rows[v];
        const double* r = repr.data() + static_cast<std::size_t>(s) * d_repr;
        double p = head.b;
        for (int c = 0; c < d_repr; ++c) p += head.w[c] * r[c];
        const double resid = p - panel.label(batch[s], task);
        loss += resid * resid;
        dldp[v] = 2.0 * resid / n;
    }
    loss /= n;
    if (!enc_grad) return loss;

    enc_grad->assign(net.encoder_param_count(), 0.0);
    if (head_grad) {
        head_grad->w.assign(d_repr, 0.0);
        head_grad->b = 0.0;
    }

    // Flat offsets of each layer's weights/biases in the gradient vector.
    std::vector<std::size_t> w_off(layers.size()), b_off(layers.size());
    std::size_t pos = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        w_off[l] = pos;
        pos += layers[l].w.size();
        b_off[l] = pos;
        pos += layers[l].b.size();
    }

    std::vector<double> delta, delta_prev;
    for (int v = 0; v < n; ++v) {
        const int s = rows[v];
        const double* r = repr.data() + static_cast<std::size_t>(s) * d_repr;
        if (head_grad) {
            for (int c = 0; c < d_repr; ++c) head_grad->w[c] += dldp[v] * r[c];
            head_grad->b += dldp[v];
        }
        // d(loss)/d(activation) at the representation layer.
        delta.assign(head.w.begin(), head.w.end());
        for (int c = 0; c < d_repr; ++c) delta[c] *= dldp[v];

        for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
            const auto& layer = layers[l];
            const double* a_out = fc.acts[l + 1].data() + static_cast<std::size_t>(s) * layer.out;
            const double* a_in = fc.acts[l].data() + static_cast<std::size_t>(s) * layer.in;
            double* gw = enc_grad->data() + w_off[l];
            double* gb = enc_grad->data() + b_off[l];
            if (l > 0) delta_prev.assign(layer.in, 0.0);
            for (int rr = 0; rr < layer.out; ++rr) {
                const double dz = delta[rr] * activate_grad(a_out[rr], net.activation());
                gb[rr] += dz;
                double* gwr = gw + static_cast<std::size_t>(rr) * layer.in;
                const double* wr = layer.w.data() + static_cast<std::size_t>(rr) * layer.in;
                for (int c = 0; c < layer.in; ++c) {
                    gwr[c] += dz * a_in[c];
                    if (l > 0) delta_prev[c] += dz * wr[c];
                }
            }
            if (l > 0) delta.swap(delta_prev);
        }
    }
    return loss;
}

std::vector<int> valid_rows(const TaskPanel& panel, const std::vector<int>& batch, int task) {
    std::vector<int> rows;
    for (int s = 0; s < static_cast<int>(batch.size()); ++s)
        if (panel.measured(batch[s], task)) rows.push_back(s);
    return rows;
}

}  // namespace

double masked_task_loss(const Network& net, const TaskPanel& panel, int task,
                        const std::vector<int>& sample_ids) {
    const auto rows = valid_rows(panel, sample_ids, task);
    if (rows.empty())
        throw data_error("no valid samples for task " + std::to_string(task) + " in this subset");
    ForwardCache fc;
    forward_batch(net, panel, sample_ids, fc);
    return task_loss_and_grad(net, panel, sample_ids, fc, task, rows, nullptr, nullptr);
}

GradientVector task_gradient(const Network& net, const TaskPanel& panel, int task,
                             const std::vector<int>& sample_ids) {
    const auto rows = valid_rows(panel, sample_ids, task);
    if (rows.empty())
        throw data_error("no valid samples for task " + std::to_string(task) + " in this subset");
    ForwardCache fc;
    forward_batch(net, panel, sample_ids, fc);
    GradientVector g;
    g.task_id = task;
    g.n_samples = static_cast<int>(rows.size());
    task_loss_and_grad(net, panel, sample_ids, fc, task, rows, &g.values, nullptr);
    return g;
}

Network train(const Network& net, const TaskPanel& panel, const TrainConfig& cfg,
              ConflictAccumulator* sink) {
    cfg.validate();
    panel.validate();
    if (panel.n < 1) throw data_error("empty panel");
    if (net.input_dim() != panel.d_in) throw config_error("network/panel feature dimension mismatch");
    if (net.n_tasks() != panel.k) throw config_error("network/panel task count mismatch");

    Network cur = net;
    const int n = panel.n, k = panel.k;
    const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = steps_per_epoch * cfg.epochs;
    if (sink) {
        sink->total_steps_hint = total_steps;
        sink->window_fraction = cfg.averaging_window_fraction;
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    ForwardCache fc;
    std::vector<std::vector<double>> enc_grads(k);
    std::vector<HeadGrad> head_grads(k);
    std::vector<int> present;
    std::vector<int> batch;
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (long b = 0; b < steps_per_epoch; ++b) {
            ++step;
            const int lo = static_cast<int>(b) * cfg.batch_size;
            const int hi = std::min(n, lo + cfg.batch_size);
            batch.assign(order.begin() + lo, order.begin() + hi);

            forward_batch(cur, panel, batch, fc);
            present.clear();
            double total_loss = 0.0;
            std::vector<int> n_valid(k, 0);
            for (int t = 0; t < k; ++t) {
                const auto rows = valid_rows(panel, batch, t);
                if (rows.empty()) continue;
                n_valid[t] = static_cast<int>(rows.size());
                total_loss += task_loss_and_grad(cur, panel, batch, fc, t, rows, &enc_grads[t],
                                                 &head_grads[t]);
                present.push_back(t);
            }
            if (present.empty()) continue;
            if (!std::isfinite(total_loss))
                throw numeric_error("training diverged: non-finite loss at step " +
                                    std::to_string(step) + " (epoch " + std::to_string(epoch + 1) +
                                    ")");

            if (sink && step % cfg.log_interval_steps == 0) {
                std::vector<GradientVector> grads;
                grads.reserve(present.size());
                for (int t : present) {
                    GradientVector g;
                    g.task_id = t;
                    g.n_samples = n_valid[t];
                    g.values = enc_grads[t];
                    grads.push_back(std::move(g));
                }
                sink->record(step, conflict_matrix(grads, k));
            }

            // SGD step on the summed masked losses.
            const double lr = cfg.learning_rate;
            std::size_t pos = 0;
            for (auto& layer : cur.layers_) {
                for (auto& w : layer.w) {
                    double g = 0.0;
                    for (int t : present) g += enc_grads[t][pos];
                    w -= lr * g;
                    ++pos;
                }
                for (auto& bias : layer.b) {
                    double g = 0.0;
                    for (int t : present) g += enc_grads[t][pos];
                    bias -= lr * g;
                    ++pos;
                }
            }
            for (int t : present) {
                auto& head = cur.heads_[t];
                for (int c = 0; c < cur.repr_dim(); ++c) head.w[c] -= lr * head_grads[t].w[c];
                head.b -= lr * head_grads[t].b;
            }
        }
    }
    return cur;
}

GradientCheckReport gradient_check(const Network& net, const TaskPanel& panel, int task,
                                   const std::vector<int>& sample_ids, double tolerance) {
    const GradientVector analytic = task_gradient(net, panel, task, sample_ids);
    const int p = static_cast<int>(analytic.values.size());
    const double h = 1e-5;

    Network probe = net;
    std::vector<double> params = net.encoder_params();
    std::vector<double> numeric(p);
    for (int i = 0; i < p; ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        probe.set_encoder_params(params);
        const double up = masked_task_loss(probe, panel, task, sample_ids);
        params[i] = saved - h;
        probe.set_encoder_params(params);
        const double down = masked_task_loss(probe, panel, task, sample_ids);
        params[i] = saved;
        numeric[i] = (up - down) / (2.0 * h);
    }
    probe.set_encoder_params(params);

    double scale = 1e-12;
    for (int i = 0; i < p; ++i)
        scale = std::max({scale, std::abs(analytic.values[i]), std::abs(numeric[i])});

    GradientCheckReport report;
    report.tolerance = tolerance;
    for (int i = 0; i < p; ++i) {
        const double rel = std::abs(analytic.values[i] - numeric[i]) / scale;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_coordinate = i;
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace taskgrad
