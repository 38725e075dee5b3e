#pragma once

// Losses, error metrics, backpropagation through time, AdamW, and the
// train / validate / select loop.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikereg/dataset.hpp"
#include "spikereg/network.hpp"

namespace spikereg {

// ---------------------------------------------------------------- losses

enum class LossKind { Mse, Mae };

inline std::string_view to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "mae"; }

inline LossKind parse_loss(std::string_view s)
{
    if (s == "mse")
        return LossKind::Mse;
    if (s == "mae")
        return LossKind::Mae;
    throw ConfigError("unknown loss '" + std::string(s) + "' (mse|mae)");
}

namespace detail {
inline void check_same(const StateSequence& a, const StateSequence& b, const char* what)
{
    if (a.steps() != b.steps() || a.batch() != b.batch() || a.units() != b.units())
        throw ShapeError(std::string(what) + ": prediction and target shapes differ");
}
} // namespace detail

inline double mse_loss(const StateSequence& pred, const StateSequence& target)
{
    detail::check_same(pred, target, "mse_loss");
    const auto p = pred.values();
    const auto y = target.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        sum += (p[i] - y[i]) * (p[i] - y[i]);
    return p.empty() ? 0.0 : sum / static_cast<double>(p.size());
}

inline double mae_loss(const StateSequence& pred, const StateSequence& target)
{
    detail::check_same(pred, target, "mae_loss");
    const auto p = pred.values();
    const auto y = target.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        sum += std::abs(p[i] - y[i]);
    return p.empty() ? 0.0 : sum / static_cast<double>(p.size());
}

inline double loss_value(LossKind kind, const StateSequence& pred, const StateSequence& target)
{
    return kind == LossKind::Mse ? mse_loss(pred, target) : mae_loss(pred, target);
}

inline StateSequence loss_gradient(LossKind kind, const StateSequence& pred, const StateSequence& target)
{
    detail::check_same(pred, target, "loss_gradient");
    StateSequence g(pred.steps(), pred.batch(), pred.units());
    const auto p = pred.values();
    const auto y = target.values();
    auto d = g.values();
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(p.size(), 1));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - y[i];
        d[i] = kind == LossKind::Mse ? 2.0 * r * inv : (r > 0 ? inv : (r < 0 ? -inv : 0.0));
    }
    return g;
}

enum class ErrorMode { AllSteps, LastStep };

// (1/n_s) sum_i ||ref_i - pred_i|| / ||ref_i||. Rows are samples; in
// last-step mode only the trailing `features` columns are compared.
inline double mean_relative_error(const Matrix& pred, const Matrix& ref, ErrorMode mode,
                                  std::size_t features = 1)
{
    if (!same_shape(pred, ref))
        throw ShapeError("mean_relative_error: prediction and reference shapes differ");
    if (ref.rows() == 0)
        throw DataError("mean_relative_error: no samples");
    if (features == 0 || features > ref.cols())
        throw ShapeError("mean_relative_error: bad feature count");
    const std::size_t c0 = mode == ErrorMode::AllSteps ? 0 : ref.cols() - features;
    double total = 0.0;
    for (std::size_t i = 0; i < ref.rows(); ++i) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t c = c0; c < ref.cols(); ++c) {
            const double d = ref(i, c) - pred(i, c);
            num += d * d;
            den += ref(i, c) * ref(i, c);
        }
        if (!(den > 0.0))
            throw DataError("mean_relative_error: sample " + std::to_string(i) + " has a zero-norm reference");
        total += std::sqrt(num) / std::sqrt(den);
    }
    return total / static_cast<double>(ref.rows());
}

// ---------------------------------------------------------------- BPTT

// Detached: no gradient flows through the spike inside the reset term
// -s_{t-1} * U_thr (the threshold itself still receives one).
// Full: the reset term is differentiated like everything else.
enum class ResetGradient { Detached, Full };

inline std::string_view to_string(ResetGradient r) { return r == ResetGradient::Detached ? "detached" : "full"; }

inline ResetGradient parse_reset_gradient(std::string_view s)
{
    if (s == "detached")
        return ResetGradient::Detached;
    if (s == "full")
        return ResetGradient::Full;
    throw ConfigError("unknown reset gradient '" + std::string(s) + "' (detached|full)");
}

inline std::string_view to_string(GradientMode m) { return m == GradientMode::Surrogate ? "surrogate" : "smooth"; }

inline GradientMode parse_gradient_mode(std::string_view s)
{
    if (s == "surrogate")
        return GradientMode::Surrogate;
    if (s == "smooth")
        return GradientMode::Smooth;
    throw ConfigError("unknown gradient mode '" + std::string(s) + "' (surrogate|smooth)");
}

struct BackwardOptions {
    ResetGradient reset = ResetGradient::Detached;
};

namespace detail {

// Gradients of W, V and the layer input given dL/dZ for every step.
inline void projection_backward(const Matrix& dz, const StateSequence& in, const StateSequence* self_src,
                                const LayerParams& p, LayerParams& g, StateSequence* d_in, bool preceding_recurrence)
{
    const std::size_t steps = in.steps();
    const std::size_t batch = in.batch();
    const std::size_t m = in.units();
    const std::size_t rows = dz.cols();
    const std::size_t head = (steps - 1) * batch;

    gemm(Transpose::Yes, view(dz), view(in.matrix()), MutableView{g.weights.data(), rows, m, m + 1}, false);
    for (std::size_t j = 0; j < rows; ++j)
        g.weights(j, m) = 0.0;
    for (std::size_t r = 0; r < dz.rows(); ++r) {
        const auto dr = dz.row(r);
        for (std::size_t j = 0; j < rows; ++j)
            g.weights(j, m) += dr[j];
    }

    if (!p.recurrent.empty()) {
        g.recurrent.fill(0.0);
        const StateSequence& src = preceding_recurrence ? in : *self_src;
        if (steps > 1)
            gemm(Transpose::Yes, row_block(view(dz), batch, head), row_block(view(src.matrix()), 0, head),
                 view(g.recurrent), false);
    }

    if (d_in) {
        *d_in = StateSequence(steps, batch, m);
        gemm(Transpose::No, view(dz), ConstView{p.weights.data(), rows, m, m + 1}, view(d_in->matrix()), false);
        if (preceding_recurrence && !p.recurrent.empty() && steps > 1)
            gemm(Transpose::No, row_block(view(dz), batch, head), view(p.recurrent),
                 row_block(view(d_in->matrix()), 0, head), true);
    }
}

} // namespace detail

// dL/dtheta for every parameter tensor, given dL/d(output) at every step.
inline Parameters bptt_backward(const NetworkSpec& spec, const Parameters& params, const ForwardRecord& rec,
                                const StateSequence& grad_output, const BackwardOptions& options = {})
{
    if (!rec.recorded || rec.layers.size() != spec.layers.size())
        throw UsageError("bptt_backward needs a forward record produced with record = true");
    detail::check_same(rec.output, grad_output, "bptt_backward");
    check_parameters(spec, params);

    const std::size_t steps = rec.steps();
    const std::size_t batch = rec.batch();
    const bool self_rec = spec.recurrence == Recurrence::Self;
    const bool full_reset = options.reset == ResetGradient::Full;
    Parameters grads = zero_parameters(spec);

    StateSequence g_out = grad_output;
    for (std::size_t l = spec.layers.size() - 1; l >= 1; --l) {
        const auto& ls = spec.layers[l];
        const auto& p = params[l];
        auto& gp = grads[l];
        const auto& r = rec.layers[l];
        const std::size_t n = spec.units(l);
        Matrix dz(steps * batch, spec.projection_rows(l));
        std::vector<double> rec_in(batch * n);

        // dZ_{t+1} V, the gradient reaching the layer output at t through
        // self recurrence.
        auto self_feedback = [&](std::size_t t) -> const double* {
            if (!self_rec || p.recurrent.empty() || t + 1 >= steps)
                return nullptr;
            gemm(Transpose::No, row_block(view(dz), (t + 1) * batch, batch), view(p.recurrent),
                 MutableView{rec_in.data(), batch, n, n}, false);
            return rec_in.data();
        };

        switch (ls.kind) {
        case LayerKind::Lif:
        case LayerKind::Rlif: {
            const auto beta = p.decay.values();
            const auto thr = p.threshold.values();
            auto dbeta = gp.decay.values();
            auto dthr = gp.threshold.values();
            for (std::size_t t = steps; t-- > 0;) {
                const double* fb = self_feedback(t);
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto u = r.membrane.at(t, b);
                    const auto go = g_out.at(t, b);
                    auto dzr = dz.row(t * batch + b);
                    const double* dnext = t + 1 < steps ? dz.row((t + 1) * batch + b).data() : nullptr;
                    for (std::size_t j = 0; j < n; ++j) {
                        double gs = go[j];
                        if (fb)
                            gs += fb[b * n + j];
                        if (full_reset && dnext)
                            gs += -thr[j] * dnext[j];
                        const double q = gs * surrogate_grad(u[j] - thr[j]);
                        const double du = q + (dnext ? beta[j] * dnext[j] : 0.0);
                        dzr[j] = du;
                        dthr[j] += -q;
                        if (t > 0) {
                            dthr[j] -= du * r.output.at(t - 1, b)[j];
                            dbeta[j] += du * r.membrane.at(t - 1, b)[j];
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::Slstm:
        case LayerKind::Lstm: {
            const bool spiking = ls.kind == LayerKind::Slstm;
            const auto thr = p.threshold.values();
            auto dthr = gp.threshold.values();
            std::vector<double> dc_next(batch * n, 0.0);
            std::vector<double> du_next(batch * n, 0.0);
            for (std::size_t t = steps; t-- > 0;) {
                const double* fb = self_feedback(t);
                const bool last = t + 1 >= steps;
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto gv = r.gates.at(t, b);
                    const auto go = g_out.at(t, b);
                    auto dzr = dz.row(t * batch + b);
                    for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t k = b * n + j;
                        const double f = gv[j], i = gv[n + j], o = gv[2 * n + j];
                        const double cand = gv[3 * n + j], a = gv[4 * n + j];
                        double dh = go[j];
                        if (fb)
                            dh += fb[k];
                        double du = dh;
                        if (spiking) {
                            if (full_reset && !last)
                                dh += -thr[j] * du_next[k];
                            const double q = dh * surrogate_grad(r.membrane.at(t, b)[j] - thr[j]);
                            du = q;
                            dthr[j] += -q;
                            if (t > 0)
                                dthr[j] -= du * r.output.at(t - 1, b)[j];
                            du_next[k] = du;
                        }
                        const double d_o = du * a;
                        const double da = du * o;
                        double dc = da * (1.0 - a * a);
                        if (!last)
                            dc += dc_next[k] * r.gates.at(t + 1, b)[j];
                        const double c_prev = t ? r.cell.at(t - 1, b)[j] : 0.0;
                        dzr[j] = dc * c_prev * f * (1.0 - f);
                        dzr[n + j] = dc * cand * i * (1.0 - i);
                        dzr[2 * n + j] = d_o * o * (1.0 - o);
                        dzr[3 * n + j] = dc * i * (1.0 - cand * cand);
                        dc_next[k] = dc;
                    }
                }
            }
            break;
        }
        case LayerKind::Dense: {
            const auto y = r.output.values();
            const auto go = g_out.values();
            auto d = dz.values();
            for (std::size_t i = 0; i < d.size(); ++i)
                d[i] = go[i] * activation_grad_from_output(ls.activation, y[i]);
            break;
        }
        case LayerKind::Decoder:
        case LayerKind::Population: {
            StateSequence g_mem;
            if (ls.kind == LayerKind::Population) {
                const std::size_t per = ls.width;
                g_mem = StateSequence(steps, batch, n);
                for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t k = 0; k < spec.outputs; ++k)
                            for (std::size_t j = 0; j < per; ++j)
                                g_mem.at(t, b)[k * per + j] = g_out.at(t, b)[k] / static_cast<double>(per);
            }
            const StateSequence& gm = ls.kind == LayerKind::Population ? g_mem : g_out;
            const auto beta = p.decay.values();
            auto dbeta = gp.decay.values();
            for (std::size_t t = steps; t-- > 0;)
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto go = gm.at(t, b);
                    auto dzr = dz.row(t * batch + b);
                    const double* dnext = t + 1 < steps ? dz.row((t + 1) * batch + b).data() : nullptr;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double du = go[j] + (dnext ? beta[j] * dnext[j] : 0.0);
                        dzr[j] = du;
                        if (t > 0)
                            dbeta[j] += du * r.membrane.at(t - 1, b)[j];
                    }
                }
            break;
        }
        case LayerKind::Input:
            throw ConfigError("input layer in hidden position");
        }

        StateSequence d_in;
        detail::projection_backward(dz, rec.layers[l - 1].output, &r.output, p, gp, l > 1 ? &d_in : nullptr,
                                    !self_rec);
        if (l == 1)
            break;
        g_out = std::move(d_in);
    }
    for (std::size_t l = 1; l < grads.size(); ++l)
        grads[l].for_each_tensor([&](const char* name, const Matrix& m) {
            if (!m.all_finite())
                throw DivergenceError("non-finite gradient in layer " + std::to_string(l) + " " + name);
        });
    return grads;
}

// ---------------------------------------------------------------- AdamW

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double epsilon = 1e-8;
};

struct AdamWState {
    Parameters first;
    Parameters second;
    std::size_t step = 0;

    static AdamWState zeros_like(const Parameters& params)
    {
        AdamWState s;
        s.first = params;
        for (auto& p : s.first)
            p.for_each_tensor([](const char*, Matrix& m) { m.fill(0.0); });
        s.second = s.first;
        return s;
    }
};

// m <- b1 m + (1 - b1) g; v <- b2 v + (1 - b2) g^2;
// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
inline void adamw_step(Parameters& params, const Parameters& grads, AdamWState& state, const AdamWConfig& cfg)
{
    if (grads.size() != params.size() || state.first.size() != params.size())
        throw ShapeError("adamw_step: parameter, gradient and state layer counts differ");
    for (std::size_t l = 0; l < params.size(); ++l)
        grads[l].for_each_tensor([&](const char* name, const Matrix& g) {
            if (!g.all_finite())
                throw DivergenceError("adamw_step: non-finite gradient in layer " + std::to_string(l) + " " + name);
        });
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.size(); ++l) {
        std::vector<Matrix*> theta, m, v;
        std::vector<const Matrix*> g;
        params[l].for_each_tensor([&](const char*, Matrix& x) { theta.push_back(&x); });
        grads[l].for_each_tensor([&](const char*, const Matrix& x) { g.push_back(&x); });
        state.first[l].for_each_tensor([&](const char*, Matrix& x) { m.push_back(&x); });
        state.second[l].for_each_tensor([&](const char*, Matrix& x) { v.push_back(&x); });
        for (std::size_t k = 0; k < theta.size(); ++k) {
            if (!same_shape(*theta[k], *g[k]) || !same_shape(*theta[k], *m[k]) || !same_shape(*theta[k], *v[k]))
                throw ShapeError("adamw_step: shape mismatch in layer " + std::to_string(l));
            auto th = theta[k]->values();
            const auto gg = g[k]->values();
            auto mm = m[k]->values();
            auto vv = v[k]->values();
            for (std::size_t i = 0; i < th.size(); ++i) {
                mm[i] = cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * gg[i];
                vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gg[i] * gg[i];
                const double m_hat = bc1 > 0.0 ? mm[i] / bc1 : mm[i];
                const double v_hat = bc2 > 0.0 ? vv[i] / bc2 : vv[i];
                th[i] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * th[i]);
            }
        }
    }
}

// Keeps beta in [0, 1] and thresholds above a small positive floor.
inline void project_constraints(Parameters& params, double min_threshold = 1e-3)
{
    for (auto& p : params) {
        for (auto& b : p.decay.values())
            b = std::clamp(b, 0.0, 1.0);
        for (auto& t : p.threshold.values())
            t = std::max(t, min_threshold);
    }
}

inline double global_norm(const Parameters& grads)
{
    double sq = 0.0;
    for (const auto& g : grads)
        g.for_each_tensor([&](const char*, const Matrix& m) {
            for (double v : m.values())
                sq += v * v;
        });
    return std::sqrt(sq);
}

// Rescales so the global norm is at most max_norm; returns the norm before.
inline double clip_global_norm(Parameters& grads, double max_norm)
{
    const double norm = global_norm(grads);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& g : grads)
            g.for_each_tensor([&](const char*, Matrix& m) {
                for (auto& v : m.values())
                    v *= s;
            });
    }
    return norm;
}

// ---------------------------------------------------------------- training

// Stream ids reserved for training; dataset samples use ids from 0 upward.
inline constexpr std::uint64_t kInitStream = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kShuffleStream = kInitStream + 1;

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 1024;
    std::size_t eval_batch = 1024;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::string preset = "elastic-lif";
    LossKind loss = LossKind::Mse;
    GradientMode mode = GradientMode::Surrogate;
    ResetGradient reset = ResetGradient::Detached;
    double clip_norm = 1.0; // 0 disables clipping

    void validate() const
    {
        if (batch_size == 0 || eval_batch == 0)
            throw ConfigError("batch sizes must be positive");
        if (!(learning_rate > 0.0))
            throw ConfigError("learning rate must be positive");
        if (weight_decay < 0.0 || clip_norm < 0.0)
            throw ConfigError("weight decay and clip norm must be non-negative");
    }
};

struct ErrorMetrics {
    double loss = 0.0;
    double all_steps = 0.0;
    double last_step = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainReport {
    std::vector<EpochLog> epochs; // entry 0 is the untrained network
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    ErrorMetrics train; // metrics of the selected parameters
    ErrorMetrics val;
    ErrorMetrics test;
    std::size_t parameter_count = 0;
};

inline nlohmann::json to_json(const ErrorMetrics& m)
{
    return {{"loss", m.loss}, {"mre_all_steps", m.all_steps}, {"mre_last_step", m.last_step}};
}

inline nlohmann::json to_json(const TrainReport& r)
{
    nlohmann::json ep = nlohmann::json::array();
    for (const auto& e : r.epochs)
        ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    return {{"epochs", ep},
            {"best_epoch", r.best_epoch},
            {"best_val_loss", r.best_val_loss},
            {"train", to_json(r.train)},
            {"val", to_json(r.val)},
            {"test", to_json(r.test)},
            {"parameter_count", r.parameter_count}};
}

struct TrainResult {
    TrainReport report;
    Parameters best;
};

// Raised when a loss or gradient turns non-finite; carries the best
// parameters seen so far and the epochs completed.
class TrainingDiverged : public DivergenceError {
public:
    TrainingDiverged(const std::string& what, TrainResult partial)
        : DivergenceError(what), partial_(std::move(partial)) {}
    const TrainResult& partial() const noexcept { return partial_; }

private:
    TrainResult partial_;
};

// Standardized network output for every sample, one forward per chunk.
inline StateSequence predict_standardized(const NetworkSpec& spec, const Parameters& params, const Dataset& data,
                                          std::size_t chunk = 1024, GradientMode mode = GradientMode::Surrogate)
{
    StateSequence out(spec.steps, data.size(), spec.outputs);
    const auto idx = all_indices(data.size());
    for (std::size_t s0 = 0; s0 < data.size(); s0 += chunk) {
        const std::size_t bs = std::min(chunk, data.size() - s0);
        const auto x = data.input_sequence(std::span(idx).subspan(s0, bs));
        const auto rec = forward(spec, params, x, {mode, false});
        for (std::size_t t = 0; t < spec.steps; ++t)
            for (std::size_t b = 0; b < bs; ++b) {
                const auto v = rec.output.at(t, b);
                std::copy(v.begin(), v.end(), out.at(t, s0 + b).begin());
            }
    }
    return out;
}

// Predictions in physical units, one row per sample.
inline Matrix predict(const NetworkSpec& spec, const Parameters& params, const Dataset& data,
                      std::size_t chunk = 1024)
{
    return sequence_to_samples(predict_standardized(spec, params, data, chunk), data.norm.target);
}

inline ErrorMetrics evaluate(const NetworkSpec& spec, const Parameters& params, const Dataset& data,
                             LossKind loss = LossKind::Mse, std::size_t chunk = 1024)
{
    const auto pred = predict_standardized(spec, params, data, chunk);
    const auto target = data.target_sequence(all_indices(data.size()));
    ErrorMetrics m;
    m.loss = loss_value(loss, pred, target);
    const Matrix phys = sequence_to_samples(pred, data.norm.target);
    m.all_steps = mean_relative_error(phys, data.targets, ErrorMode::AllSteps, data.output_features);
    m.last_step = mean_relative_error(phys, data.targets, ErrorMode::LastStep, data.output_features);
    return m;
}

inline double evaluate_loss(const NetworkSpec& spec, const Parameters& params, const Dataset& data,
                            LossKind loss, std::size_t chunk)
{
    const auto pred = predict_standardized(spec, params, data, chunk);
    return loss_value(loss, pred, data.target_sequence(all_indices(data.size())));
}

inline void check_dataset_for(const NetworkSpec& spec, const Dataset& d, const char* which)
{
    d.validate();
    if (d.steps != spec.steps || d.input_features != spec.inputs || d.output_features != spec.outputs)
        throw DataError(std::string(which) + " dataset (" + std::to_string(d.steps) + " steps, " +
                        std::to_string(d.input_features) + " -> " + std::to_string(d.output_features) +
                        ") does not match the network");
    if (d.size() == 0)
        throw DataError(std::string(which) + " dataset is empty");
}

// Mini-batch AdamW over shuffled batches (reshuffled every epoch from the
// seed). The parameters with the lowest validation loss, including the
// untrained ones, are kept and evaluated on the test set.
inline TrainResult train(const NetworkSpec& spec, Parameters params, const Dataset& train_set,
                         const Dataset& val_set, const Dataset& test_set, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {})
{
    cfg.validate();
    check_parameters(spec, params);
    check_dataset_for(spec, train_set, "training");
    check_dataset_for(spec, val_set, "validation");
    check_dataset_for(spec, test_set, "test");

    const AdamWConfig opt{cfg.learning_rate, 0.9, 0.999, cfg.weight_decay, 1e-8};
    AdamWState state = AdamWState::zeros_like(params);
    SeededRng shuffle_rng = SeededRng::stream(cfg.seed, kShuffleStream);

    TrainResult result;
    result.report.parameter_count = parameter_count(params);
    result.best = params;

    auto diverged = [&](const std::string& why) {
        return TrainingDiverged(why, result);
    };

    try {
        EpochLog e0{0, evaluate_loss(spec, params, train_set, cfg.loss, cfg.eval_batch),
                    evaluate_loss(spec, params, val_set, cfg.loss, cfg.eval_batch)};
        if (!std::isfinite(e0.train_loss) || !std::isfinite(e0.val_loss))
            throw DivergenceError("non-finite loss before training");
        result.report.epochs.push_back(e0);
        result.report.best_val_loss = e0.val_loss;
        if (on_epoch)
            on_epoch(e0);
    } catch (const DivergenceError& e) {
        throw diverged(e.what());
    }

    const std::size_t n = train_set.size();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(n, shuffle_rng);
        double loss_sum = 0.0;
        try {
            for (std::size_t s0 = 0; s0 < n; s0 += cfg.batch_size) {
                const std::size_t bs = std::min(cfg.batch_size, n - s0);
                const std::span<const std::size_t> idx(order.data() + s0, bs);
                const auto x = train_set.input_sequence(idx);
                const auto y = train_set.target_sequence(idx);
                const auto rec = forward(spec, params, x, {cfg.mode, true});
                const double loss = loss_value(cfg.loss, rec.output, y);
                if (!std::isfinite(loss))
                    throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
                loss_sum += loss * static_cast<double>(bs);
                auto grads = bptt_backward(spec, params, rec, loss_gradient(cfg.loss, rec.output, y),
                                           {cfg.reset});
                clip_global_norm(grads, cfg.clip_norm);
                adamw_step(params, grads, state, opt);
                project_constraints(params);
            }
            EpochLog log{epoch, loss_sum / static_cast<double>(n),
                         evaluate_loss(spec, params, val_set, cfg.loss, cfg.eval_batch)};
            if (!std::isfinite(log.val_loss))
                throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
            result.report.epochs.push_back(log);
            if (log.val_loss < result.report.best_val_loss) {
                result.report.best_val_loss = log.val_loss;
                result.report.best_epoch = epoch;
                result.best = params;
            }
            if (on_epoch)
                on_epoch(log);
        } catch (const TrainingDiverged&) {
            throw;
        } catch (const DivergenceError& e) {
            throw diverged(e.what());
        }
    }
    result.report.train = evaluate(spec, result.best, train_set, cfg.loss, cfg.eval_batch);
    result.report.val = evaluate(spec, result.best, val_set, cfg.loss, cfg.eval_batch);
    result.report.test = evaluate(spec, result.best, test_set, cfg.loss, cfg.eval_batch);
    return result;
}

// ---------------------------------------------------------------- gradient check

struct GradCheckOptions {
    std::size_t coordinates = 20; // per tensor (all of them if fewer)
    double step = 1e-5;
    double floor = 1e-4; // denominator guard for near-zero gradients
    GradientMode mode = GradientMode::Smooth;
    ResetGradient reset = ResetGradient::Full;
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::size_t layer = 0;
    std::string tensor;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
};

struct GradCheckResult {
    std::vector<GradCheckEntry> entries;
    double max_rel_error() const
    {
        double m = 0.0;
        for (const auto& e : entries)
            m = std::max(m, e.max_rel_error);
        return m;
    }
};

inline double relative_difference(double a, double b, double floor)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// BPTT gradients of the MSE loss against central differences at random
// coordinates of every tensor.
inline GradCheckResult gradient_check(const NetworkSpec& spec, const Parameters& params, const StateSequence& input,
                                      const StateSequence& target, const GradCheckOptions& opt = {})
{
    auto loss_at = [&](const Parameters& p) {
        return mse_loss(forward(spec, p, input, {opt.mode, false}).output, target);
    };
    const auto rec = forward(spec, params, input, {opt.mode, true});
    const auto grads =
        bptt_backward(spec, params, rec, loss_gradient(LossKind::Mse, rec.output, target), {opt.reset});

    SeededRng rng(opt.seed);
    GradCheckResult res;
    Parameters probe = params;
    for (std::size_t l = 1; l < params.size(); ++l) {
        std::vector<std::pair<std::string, Matrix*>> tensors;
        probe[l].for_each_tensor([&](const char* name, Matrix& m) {
            if (!m.empty())
                tensors.emplace_back(name, &m);
        });
        std::vector<const Matrix*> analytic;
        grads[l].for_each_tensor([&](const char*, const Matrix& m) {
            if (!m.empty())
                analytic.push_back(&m);
        });
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            auto& [name, m] = tensors[k];
            GradCheckEntry entry{l, name, 0, 0.0};
            std::vector<std::size_t> coords;
            if (m->size() <= opt.coordinates)
                coords = all_indices(m->size());
            else
                for (std::size_t c = 0; c < opt.coordinates; ++c)
                    coords.push_back(rng.below(m->size()));
            for (std::size_t c : coords) {
                double& x = m->values()[c];
                const double saved = x;
                x = saved + opt.step;
                const double up = loss_at(probe);
                x = saved - opt.step;
                const double down = loss_at(probe);
                x = saved;
                const double numeric = (up - down) / (2.0 * opt.step);
                entry.max_rel_error = std::max(
                    entry.max_rel_error, relative_difference(analytic[k]->values()[c], numeric, opt.floor));
                ++entry.checked;
            }
            res.entries.push_back(entry);
        }
    }
    return res;
}

} // namespace spikereg
