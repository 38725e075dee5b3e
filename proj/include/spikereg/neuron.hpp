#pragma once

// Single-step updates for LIF, RLIF, SLSTM (and the non-spiking LSTM used by
// the baseline). These are the per-sample reference equations; the batched
// network forward in network.hpp evaluates the same arithmetic in the same
// order, layer by layer.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spikereg/linalg.hpp"

namespace spikereg {

// Surrogate: hard Heaviside forward, arctan surrogate backward.
// Smooth: forward uses 0.5 + surrogate(x), whose derivative is exactly the
// surrogate gradient; only meant for finite-difference verification.
enum class GradientMode { Surrogate, Smooth };

inline double surrogate(double x)
{
    return std::atan(std::numbers::pi * x) / std::numbers::pi;
}

inline double surrogate_grad(double x)
{
    const double px = std::numbers::pi * x;
    return 1.0 / (1.0 + px * px);
}

inline double spike_function(double membrane, double threshold, GradientMode mode)
{
    if (mode == GradientMode::Smooth)
        return 0.5 + surrogate(membrane - threshold);
    return membrane >= threshold ? 1.0 : 0.0;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> spike_activation(std::span<const double> membrane,
                                            std::span<const double> threshold)
{
    if (membrane.size() != threshold.size())
        throw ShapeError("spike_activation: membrane and threshold sizes differ");
    std::vector<double> out(membrane.size());
    for (std::size_t i = 0; i < membrane.size(); ++i)
        out[i] = membrane[i] >= threshold[i] ? 1.0 : 0.0;
    return out;
}

// Trainable tensors of one layer. Unused tensors stay empty.
//   weights    units x inputs (+1): feed-forward W, optional last column is
//              the bias. Gated layers stack the f, i, o, c blocks row-wise
//              (4 * units rows).
//   recurrent  V, same row layout as weights, no bias column.
//   decay      1 x units, membrane decay beta.
//   threshold  1 x units, firing threshold.
struct LayerParams {
    Matrix weights;
    Matrix recurrent;
    Matrix decay;
    Matrix threshold;

    template <class F>
    void for_each_tensor(F&& f)
    {
        f("weights", weights);
        f("recurrent", recurrent);
        f("decay", decay);
        f("threshold", threshold);
    }
    template <class F>
    void for_each_tensor(F&& f) const
    {
        f("weights", weights);
        f("recurrent", recurrent);
        f("decay", decay);
        f("threshold", threshold);
    }

    bool operator==(const LayerParams&) const = default;
};

// z = b + sum_k W(j, k) x_k [+ sum_k V(j, k) r_k], accumulated in that order.
inline std::vector<double> project(const Matrix& weights, std::span<const double> input,
                                   const Matrix& recurrent = {},
                                   std::span<const double> recurrent_input = {})
{
    const std::size_t m = input.size();
    const bool bias = weights.cols() == m + 1;
    if (!bias && weights.cols() != m)
        throw ShapeError("project: weights have " + std::to_string(weights.cols()) +
                         " columns for input of " + std::to_string(m));
    if (!recurrent.empty() && recurrent.cols() != recurrent_input.size())
        throw ShapeError("project: recurrent weights have " + std::to_string(recurrent.cols()) +
                         " columns for recurrent input of " + std::to_string(recurrent_input.size()));
    if (!recurrent.empty() && recurrent.rows() != weights.rows())
        throw ShapeError("project: recurrent and feed-forward row counts differ");
    std::vector<double> z(weights.rows());
    for (std::size_t j = 0; j < weights.rows(); ++j) {
        double acc = bias ? weights(j, m) : 0.0;
        for (std::size_t k = 0; k < m; ++k)
            acc += input[k] * weights(j, k);
        if (!recurrent.empty())
            for (std::size_t k = 0; k < recurrent_input.size(); ++k)
                acc += recurrent_input[k] * recurrent(j, k);
        z[j] = acc;
    }
    return z;
}

struct LifState {
    std::vector<double> membrane;
    std::vector<double> last_spike;

    static LifState zeros(std::size_t units) { return {std::vector<double>(units), std::vector<double>(units)}; }
};

// U_t = beta * U_{t-1} + W h_t [+ V r] - s_{t-1} * U_thr, s_t = [U_t >= U_thr].
// `recurrent_input` is h^{(l-1)}_{t-1} (preceding RLIF) or the layer's own
// previous spikes, depending on how the caller wired the recurrence.
inline LifState lif_step(const LifState& state, std::span<const double> input, const LayerParams& params,
                         std::span<const double> recurrent_input = {},
                         GradientMode mode = GradientMode::Surrogate)
{
    const std::size_t n = params.weights.rows();
    if (state.membrane.size() != n || state.last_spike.size() != n || params.decay.size() != n ||
        params.threshold.size() != n)
        throw ShapeError("lif_step: state/parameter sizes do not match " + std::to_string(n) + " units");
    const auto z = project(params.weights, input, params.recurrent, recurrent_input);
    const auto beta = params.decay.values();
    const auto thr = params.threshold.values();
    LifState next{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        next.membrane[j] = beta[j] * state.membrane[j] + z[j] - state.last_spike[j] * thr[j];
        next.last_spike[j] = spike_function(next.membrane[j], thr[j], mode);
    }
    return next;
}

struct GateValues {
    std::vector<double> forget, input, output, candidate;
};

inline GateValues lstm_gates(std::span<const double> input, const LayerParams& params,
                             std::span<const double> recurrent_input)
{
    const std::size_t n = params.weights.rows() / 4;
    if (params.weights.rows() != 4 * n)
        throw ShapeError("gated layer weights must have 4 * units rows");
    const auto z = project(params.weights, input, params.recurrent, recurrent_input);
    GateValues g{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                 std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        g.forget[j] = sigmoid(z[j]);
        g.input[j] = sigmoid(z[n + j]);
        g.output[j] = sigmoid(z[2 * n + j]);
        g.candidate[j] = std::tanh(z[3 * n + j]);
    }
    return g;
}

struct SlstmState {
    std::vector<double> cell;
    std::vector<double> hidden; // the membrane potential U
    std::vector<double> last_spike;

    static SlstmState zeros(std::size_t units)
    {
        return {std::vector<double>(units), std::vector<double>(units), std::vector<double>(units)};
    }
};

// c_t = f c_{t-1} + i c~, U_t = o tanh(c_t) - s_{t-1} U_thr, s_t = [U_t >= U_thr].
// No decay parameter; forgetting is left to the gates.
inline SlstmState slstm_step(const SlstmState& state, std::span<const double> input,
                             const LayerParams& params, std::span<const double> recurrent_input = {},
                             GradientMode mode = GradientMode::Surrogate)
{
    const std::size_t n = params.weights.rows() / 4;
    if (state.cell.size() != n || state.last_spike.size() != n || params.threshold.size() != n)
        throw ShapeError("slstm_step: state/parameter sizes do not match " + std::to_string(n) + " units");
    const auto g = lstm_gates(input, params, recurrent_input);
    const auto thr = params.threshold.values();
    SlstmState next = SlstmState::zeros(n);
    for (std::size_t j = 0; j < n; ++j) {
        next.cell[j] = g.forget[j] * state.cell[j] + g.input[j] * g.candidate[j];
        next.hidden[j] = g.output[j] * std::tanh(next.cell[j]) - state.last_spike[j] * thr[j];
        next.last_spike[j] = spike_function(next.hidden[j], thr[j], mode);
    }
    return next;
}

struct LstmState {
    std::vector<double> cell;
    std::vector<double> hidden;

    static LstmState zeros(std::size_t units) { return {std::vector<double>(units), std::vector<double>(units)}; }
};

// Conventional LSTM: the SLSTM equations without spike, reset, or threshold.
inline LstmState lstm_step(const LstmState& state, std::span<const double> input, const LayerParams& params,
                           std::span<const double> recurrent_input = {})
{
    const std::size_t n = params.weights.rows() / 4;
    if (state.cell.size() != n)
        throw ShapeError("lstm_step: state has " + std::to_string(state.cell.size()) + " units, expected " +
                         std::to_string(n));
    const auto g = lstm_gates(input, params, recurrent_input);
    LstmState next = LstmState::zeros(n);
    for (std::size_t j = 0; j < n; ++j) {
        next.cell[j] = g.forget[j] * state.cell[j] + g.input[j] * g.candidate[j];
        next.hidden[j] = g.output[j] * std::tanh(next.cell[j]);
    }
    return next;
}

} // namespace spikereg
