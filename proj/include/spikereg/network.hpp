#pragma once

// Regression topology: constant-current input, spiking (or LSTM) layers,
// membrane decoder and population vote. Forward evaluation runs one layer
// at a time over the whole sequence: the input projections of all steps are
// a single GEMM, and only the per-neuron state recursion walks the time axis.
// The arithmetic per element matches the step functions in neuron.hpp and
// codec.hpp exactly.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spikereg/codec.hpp"
#include "spikereg/linalg.hpp"
#include "spikereg/neuron.hpp"

namespace spikereg {

enum class LayerKind { Input, Lif, Rlif, Slstm, Lstm, Dense, Decoder, Population };
enum class Activation { Identity, Tanh, Sigmoid };

// Preceding: V multiplies the previous layer's output at t-1.
// Self: V multiplies the layer's own output at t-1.
enum class Recurrence { Preceding, Self };

inline std::string_view to_string(LayerKind k)
{
    switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Lif: return "lif";
    case LayerKind::Rlif: return "rlif";
    case LayerKind::Slstm: return "slstm";
    case LayerKind::Lstm: return "lstm";
    case LayerKind::Dense: return "dense";
    case LayerKind::Decoder: return "decoder";
    case LayerKind::Population: return "population";
    }
    return "?";
}

inline std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline std::string_view to_string(Recurrence r)
{
    return r == Recurrence::Preceding ? "preceding" : "self";
}

inline LayerKind parse_layer_kind(std::string_view s)
{
    for (auto k : {LayerKind::Input, LayerKind::Lif, LayerKind::Rlif, LayerKind::Slstm, LayerKind::Lstm,
                   LayerKind::Dense, LayerKind::Decoder, LayerKind::Population})
        if (to_string(k) == s)
            return k;
    throw ConfigError("unknown layer kind '" + std::string(s) + "'");
}

inline Activation parse_activation(std::string_view s)
{
    for (auto a : {Activation::Identity, Activation::Tanh, Activation::Sigmoid})
        if (to_string(a) == s)
            return a;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline Recurrence parse_recurrence(std::string_view s)
{
    if (s == "preceding")
        return Recurrence::Preceding;
    if (s == "self")
        return Recurrence::Self;
    throw ConfigError("unknown recurrence '" + std::string(s) + "' (preceding|self)");
}

inline bool is_spiking(LayerKind k) { return k == LayerKind::Lif || k == LayerKind::Rlif || k == LayerKind::Slstm; }
inline bool is_gated(LayerKind k) { return k == LayerKind::Slstm || k == LayerKind::Lstm; }
inline bool has_recurrent(LayerKind k) { return k == LayerKind::Rlif || is_gated(k); }
inline bool has_decay(LayerKind k)
{
    return k == LayerKind::Lif || k == LayerKind::Rlif || k == LayerKind::Decoder || k == LayerKind::Population;
}
inline bool has_threshold(LayerKind k) { return is_spiking(k); }

struct LayerSpec {
    LayerKind kind = LayerKind::Lif;
    // Neuron count; for Population the size of each per-feature population.
    std::size_t width = 0;
    Activation activation = Activation::Identity; // Dense only

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::size_t steps = 1;
    std::size_t inputs = 1;
    std::size_t outputs = 1;
    Recurrence recurrence = Recurrence::Preceding;
    std::vector<LayerSpec> layers;

    // Neurons in layer l (a Population layer holds `outputs` populations).
    std::size_t units(std::size_t l) const
    {
        const auto& s = layers.at(l);
        return s.kind == LayerKind::Population ? s.width * outputs : s.width;
    }

    // Rows of the weight matrices (4 * units for gated layers).
    std::size_t projection_rows(std::size_t l) const
    {
        return is_gated(layers.at(l).kind) ? 4 * units(l) : units(l);
    }

    std::size_t recurrent_width(std::size_t l) const
    {
        return recurrence == Recurrence::Preceding ? units(l - 1) : units(l);
    }

    void validate() const
    {
        if (steps == 0 || inputs == 0 || outputs == 0)
            throw ConfigError("network spec: steps, inputs and outputs must be positive");
        if (layers.size() < 3)
            throw ConfigError("network spec needs an input layer, at least one hidden layer and a head");
        if (layers.front().kind != LayerKind::Input || layers.front().width != inputs)
            throw ConfigError("network spec: first layer must be the constant-current input of width " +
                              std::to_string(inputs));
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].width == 0)
                throw ConfigError("network spec: layer " + std::to_string(l) + " has zero width");
            if (l > 0 && layers[l].kind == LayerKind::Input)
                throw ConfigError("network spec: input layer only allowed first");
        }
        const auto& last = layers.back();
        const auto& before = layers[layers.size() - 2];
        if (last.kind == LayerKind::Population) {
            if (before.kind != LayerKind::Decoder)
                throw ConfigError("network spec: population layer must follow a decoder layer");
        } else if (last.kind == LayerKind::Dense) {
            if (last.width != outputs)
                throw ConfigError("network spec: final dense layer width must equal outputs");
        } else {
            throw ConfigError("network spec: last layers must be decoder + population (or a dense head)");
        }
        for (std::size_t l = 1; l + 1 < layers.size(); ++l)
            if (layers[l].kind == LayerKind::Population)
                throw ConfigError("network spec: population layer must be last");
    }

    bool operator==(const NetworkSpec&) const = default;
};

struct PresetOptions {
    std::size_t steps = 5;
    std::size_t width = 128;     // n_u
    std::size_t population = 32; // n_o
    std::size_t hidden_layers = 3;
    std::size_t inputs = 1;
    std::size_t outputs = 1;
    Recurrence recurrence = Recurrence::Preceding;
};

inline const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names{"elastic-lif", "ro-rlif", "plastic-slstm", "plastic-lstm"};
    return names;
}

// elastic-lif: LIF x3, ro-rlif: RLIF x3, plastic-slstm: SLSTM x3, each with
// decoder + population head; plastic-lstm: LSTM x3 + dense(tanh) + dense.
inline NetworkSpec make_preset(std::string_view name, const PresetOptions& o)
{
    NetworkSpec s;
    s.steps = o.steps;
    s.inputs = o.inputs;
    s.outputs = o.outputs;
    s.recurrence = o.recurrence;
    s.layers.push_back({LayerKind::Input, o.inputs});
    LayerKind hidden;
    if (name == "elastic-lif")
        hidden = LayerKind::Lif;
    else if (name == "ro-rlif")
        hidden = LayerKind::Rlif;
    else if (name == "plastic-slstm")
        hidden = LayerKind::Slstm;
    else if (name == "plastic-lstm")
        hidden = LayerKind::Lstm;
    else
        throw ConfigError("unknown preset '" + std::string(name) + "'");
    for (std::size_t i = 0; i < o.hidden_layers; ++i)
        s.layers.push_back({hidden, o.width});
    if (hidden == LayerKind::Lstm) {
        s.layers.push_back({LayerKind::Dense, o.population, Activation::Tanh});
        s.layers.push_back({LayerKind::Dense, o.outputs, Activation::Identity});
    } else {
        s.layers.push_back({LayerKind::Decoder, o.population});
        s.layers.push_back({LayerKind::Population, o.population});
    }
    s.validate();
    return s;
}

inline nlohmann::json to_json(const NetworkSpec& s)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.layers) {
        nlohmann::json j{{"kind", to_string(l.kind)}, {"width", l.width}};
        if (l.kind == LayerKind::Dense)
            j["activation"] = to_string(l.activation);
        layers.push_back(j);
    }
    return {{"steps", s.steps},
            {"inputs", s.inputs},
            {"outputs", s.outputs},
            {"recurrence", to_string(s.recurrence)},
            {"layers", layers}};
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j)
{
    try {
        NetworkSpec s;
        s.steps = j.at("steps").get<std::size_t>();
        s.inputs = j.at("inputs").get<std::size_t>();
        s.outputs = j.at("outputs").get<std::size_t>();
        s.recurrence = parse_recurrence(j.value("recurrence", std::string("preceding")));
        for (const auto& l : j.at("layers")) {
            LayerSpec ls;
            ls.kind = parse_layer_kind(l.at("kind").get<std::string>());
            ls.width = l.at("width").get<std::size_t>();
            if (l.contains("activation"))
                ls.activation = parse_activation(l.at("activation").get<std::string>());
            s.layers.push_back(ls);
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("network spec JSON: ") + e.what());
    }
}

// Index-aligned with NetworkSpec::layers; entry 0 (input) is empty.
using Parameters = std::vector<LayerParams>;

inline std::size_t parameter_count(const Parameters& params)
{
    std::size_t n = 0;
    for (const auto& p : params)
        p.for_each_tensor([&](const char*, const Matrix& m) { n += m.size(); });
    return n;
}

// Parameters with the shapes implied by the spec, all zero.
inline Parameters zero_parameters(const NetworkSpec& spec)
{
    spec.validate();
    Parameters params(spec.layers.size());
    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        const auto kind = spec.layers[l].kind;
        const std::size_t rows = spec.projection_rows(l);
        const std::size_t n = spec.units(l);
        auto& p = params[l];
        p.weights = Matrix(rows, spec.units(l - 1) + 1);
        if (has_recurrent(kind))
            p.recurrent = Matrix(rows, spec.recurrent_width(l));
        if (has_decay(kind))
            p.decay = Matrix(1, n);
        if (has_threshold(kind))
            p.threshold = Matrix(1, n);
    }
    return params;
}

// W, V ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], beta ~ U[0.4, 0.9], U_thr = 1.
// Draw order: layer by layer, W then V then beta.
inline Parameters init_parameters(const NetworkSpec& spec, SeededRng& rng)
{
    Parameters params = zero_parameters(spec);
    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        auto& p = params[l];
        const double fan_in = static_cast<double>(spec.units(l - 1));
        p.weights = uniform_init(p.weights.rows(), p.weights.cols(), 1.0 / std::sqrt(fan_in), rng);
        if (!p.recurrent.empty())
            p.recurrent = uniform_init(p.recurrent.rows(), p.recurrent.cols(),
                                       1.0 / std::sqrt(static_cast<double>(p.recurrent.cols())), rng);
        for (auto& b : p.decay.values())
            b = rng.uniform(0.4, 0.9);
        p.threshold.fill(1.0);
    }
    return params;
}

inline void check_parameters(const NetworkSpec& spec, const Parameters& params)
{
    const Parameters ref = zero_parameters(spec);
    if (params.size() != ref.size())
        throw ShapeError("parameters have " + std::to_string(params.size()) + " layers, spec has " +
                         std::to_string(ref.size()));
    for (std::size_t l = 0; l < ref.size(); ++l) {
        const auto& a = params[l];
        const auto& b = ref[l];
        if (!same_shape(a.weights, b.weights) || !same_shape(a.recurrent, b.recurrent) ||
            !same_shape(a.decay, b.decay) || !same_shape(a.threshold, b.threshold))
            throw ShapeError("parameters of layer " + std::to_string(l) + " do not match the spec");
    }
}

inline double activate(Activation a, double z)
{
    switch (a) {
    case Activation::Identity: return z;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return sigmoid(z);
    }
    return z;
}

// Derivative expressed through the activation's output.
inline double activation_grad_from_output(Activation a, double y)
{
    switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

inline std::vector<double> dense_step(std::span<const double> input, const Matrix& weights, Activation activation)
{
    auto z = project(weights, input);
    for (auto& v : z)
        v = activate(activation, v);
    return z;
}

struct LayerRecord {
    StateSequence output;   // what the next layer receives
    StateSequence membrane; // LIF/SLSTM membrane, decoder/population integrator state
    StateSequence cell;     // gated layers
    StateSequence gates;    // gated layers: f, i, o, c~, tanh(c) blocks of `units` each
};

struct ForwardRecord {
    GradientMode mode = GradientMode::Surrogate;
    bool recorded = false;
    std::vector<LayerRecord> layers; // layers[0].output is the encoded input
    StateSequence output;            // [steps x batch x outputs]

    std::size_t steps() const { return output.steps(); }
    std::size_t batch() const { return output.batch(); }
};

struct ForwardOptions {
    GradientMode mode = GradientMode::Surrogate;
    bool record = true;
};

namespace detail {

// Z = b + X W^T [+ X_{t-1} V^T] for every step at once.
inline Matrix layer_preactivation(const LayerParams& p, const StateSequence& in, bool preceding_recurrence)
{
    const std::size_t m = in.units();
    const std::size_t rows = p.weights.rows();
    const std::size_t steps = in.steps();
    const std::size_t batch = in.batch();
    Matrix z(steps * batch, rows);
    for (std::size_t r = 0; r < z.rows(); ++r)
        for (std::size_t j = 0; j < rows; ++j)
            z(r, j) = p.weights(j, m);
    Matrix wt(m, rows);
    for (std::size_t j = 0; j < rows; ++j)
        for (std::size_t k = 0; k < m; ++k)
            wt(k, j) = p.weights(j, k);
    gemm(Transpose::No, view(in.matrix()), view(wt), view(z), true);
    if (preceding_recurrence && !p.recurrent.empty() && steps > 1) {
        const Matrix vt = transpose(p.recurrent);
        gemm(Transpose::No, row_block(view(in.matrix()), 0, (steps - 1) * batch), view(vt),
             row_block(view(z), batch, (steps - 1) * batch), true);
    }
    return z;
}

inline void check_finite(const StateSequence& s, std::size_t layer)
{
    if (!s.matrix().all_finite())
        throw DivergenceError("non-finite values in the output of layer " + std::to_string(layer));
}

} // namespace detail

inline ForwardRecord forward(const NetworkSpec& spec, const Parameters& params, const StateSequence& input,
                             const ForwardOptions& options = {})
{
    spec.validate();
    check_parameters(spec, params);
    if (input.steps() != spec.steps || input.units() != spec.inputs)
        throw ShapeError("forward: input is " + std::to_string(input.steps()) + " steps x " +
                         std::to_string(input.units()) + " features, spec expects " +
                         std::to_string(spec.steps) + " x " + std::to_string(spec.inputs));
    const std::size_t steps = input.steps();
    const std::size_t batch = input.batch();
    const bool self_rec = spec.recurrence == Recurrence::Self;

    ForwardRecord rec;
    rec.mode = options.mode;
    rec.recorded = options.record;
    rec.layers.resize(spec.layers.size());
    rec.layers[0].output = input;

    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        const auto& p = params[l];
        const StateSequence& in = rec.layers[l - 1].output;
        auto& out = rec.layers[l];
        const std::size_t n = spec.units(l);
        Matrix z = detail::layer_preactivation(p, in, !self_rec);
        const std::size_t zc = z.cols();
        const Matrix vt = (self_rec && !p.recurrent.empty()) ? transpose(p.recurrent) : Matrix{};

        // Self recurrence adds V s_{t-1} to step t once s_{t-1} is known.
        auto add_self_recurrence = [&](std::size_t t, const StateSequence& own) {
            if (vt.empty() || t == 0)
                return;
            const ConstView prev{own.step(t - 1).data(), batch, own.units(), own.units()};
            gemm(Transpose::No, prev, view(vt), row_block(view(z), t * batch, batch), true);
        };

        switch (ls.kind) {
        case LayerKind::Lif:
        case LayerKind::Rlif: {
            out.membrane = StateSequence(steps, batch, n);
            out.output = StateSequence(steps, batch, n);
            const auto beta = p.decay.values();
            const auto thr = p.threshold.values();
            for (std::size_t t = 0; t < steps; ++t) {
                add_self_recurrence(t, out.output);
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto zr = z.row(t * batch + b);
                    auto u = out.membrane.at(t, b);
                    auto s = out.output.at(t, b);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double u_prev = t ? out.membrane.at(t - 1, b)[j] : 0.0;
                        const double s_prev = t ? out.output.at(t - 1, b)[j] : 0.0;
                        u[j] = beta[j] * u_prev + zr[j] - s_prev * thr[j];
                        s[j] = spike_function(u[j], thr[j], options.mode);
                    }
                }
            }
            break;
        }
        case LayerKind::Slstm:
        case LayerKind::Lstm: {
            const bool spiking = ls.kind == LayerKind::Slstm;
            out.cell = StateSequence(steps, batch, n);
            out.gates = StateSequence(steps, batch, 5 * n);
            out.output = StateSequence(steps, batch, n);
            if (spiking)
                out.membrane = StateSequence(steps, batch, n);
            const auto thr = p.threshold.values();
            for (std::size_t t = 0; t < steps; ++t) {
                add_self_recurrence(t, out.output);
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto zr = z.row(t * batch + b);
                    auto c = out.cell.at(t, b);
                    auto g = out.gates.at(t, b);
                    auto h = out.output.at(t, b);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double f = sigmoid(zr[j]);
                        const double i = sigmoid(zr[n + j]);
                        const double o = sigmoid(zr[2 * n + j]);
                        const double cand = std::tanh(zr[3 * n + j]);
                        const double c_prev = t ? out.cell.at(t - 1, b)[j] : 0.0;
                        c[j] = f * c_prev + i * cand;
                        const double a = std::tanh(c[j]);
                        g[j] = f;
                        g[n + j] = i;
                        g[2 * n + j] = o;
                        g[3 * n + j] = cand;
                        g[4 * n + j] = a;
                        if (spiking) {
                            const double s_prev = t ? out.output.at(t - 1, b)[j] : 0.0;
                            const double u = o * a - s_prev * thr[j];
                            out.membrane.at(t, b)[j] = u;
                            h[j] = spike_function(u, thr[j], options.mode);
                        } else {
                            h[j] = o * a;
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::Dense: {
            out.output = StateSequence(steps, batch, n);
            auto dst = out.output.values();
            const auto src = z.values();
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = activate(ls.activation, src[i]);
            break;
        }
        case LayerKind::Decoder:
        case LayerKind::Population: {
            out.membrane = StateSequence(steps, batch, n);
            const auto beta = p.decay.values();
            for (std::size_t t = 0; t < steps; ++t)
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto zr = z.row(t * batch + b);
                    auto u = out.membrane.at(t, b);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double u_prev = t ? out.membrane.at(t - 1, b)[j] : 0.0;
                        u[j] = beta[j] * u_prev + zr[j];
                    }
                }
            if (ls.kind == LayerKind::Decoder) {
                out.output = out.membrane;
            } else {
                out.output = StateSequence(steps, batch, spec.outputs);
                for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t b = 0; b < batch; ++b) {
                        const auto v = population_vote(out.membrane.at(t, b), spec.outputs);
                        std::copy(v.begin(), v.end(), out.output.at(t, b).begin());
                    }
            }
            break;
        }
        case LayerKind::Input:
            throw ConfigError("input layer in hidden position");
        }
        detail::check_finite(out.output, l);
        if (!out.membrane.empty())
            detail::check_finite(out.membrane, l);
        if (!options.record && l >= 2) {
            rec.layers[l - 1] = LayerRecord{};
            out.membrane = StateSequence{};
            out.cell = StateSequence{};
            out.gates = StateSequence{};
        }
    }
    rec.output = rec.layers.back().output;
    return rec;
}

} // namespace spikereg
