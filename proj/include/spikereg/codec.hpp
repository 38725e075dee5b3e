#pragma once

// Encoding real inputs into the spiking stack and decoding membrane
// potentials back into real outputs.
//
// The decoder and the population layer are both leaky integrators without
// spikes or reset (U_t = beta U_{t-1} + W h_t). Each carries its own W and
// beta; the population output is the mean of its integrators, one group of
// n_o neurons per output feature.

#include <span>
#include <string>
#include <vector>

#include "spikereg/linalg.hpp"
#include "spikereg/neuron.hpp"

namespace spikereg {

// Constant current injection: the real input is fed unchanged at every step.
// x is [steps x features].
inline Matrix constant_current_encode(const Matrix& x)
{
    if (x.rows() == 0)
        throw ShapeError("constant_current_encode: sequence has no steps");
    return x;
}

// Scalar-per-sample inputs are broadcast over all steps.
inline Matrix constant_current_encode(std::span<const double> features, std::size_t steps)
{
    if (steps == 0)
        throw ShapeError("constant_current_encode: sequence has no steps");
    Matrix out(steps, features.size());
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t f = 0; f < features.size(); ++f)
            out(t, f) = features[f];
    return out;
}

struct DecoderState {
    std::vector<double> membrane;
};

inline DecoderState decode_step(const DecoderState& state, std::span<const double> input,
                                const Matrix& weights, std::span<const double> decay)
{
    const std::size_t n = weights.rows();
    if (state.membrane.size() != n || decay.size() != n)
        throw ShapeError("decode_step: state/decay sizes do not match " + std::to_string(n) + " units");
    const auto z = project(weights, input);
    DecoderState next{std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j)
        next.membrane[j] = decay[j] * state.membrane[j] + z[j];
    return next;
}

inline double population_vote(std::span<const double> membrane)
{
    if (membrane.empty())
        throw ShapeError("population_vote: empty population");
    double sum = 0.0;
    for (double v : membrane)
        sum += v;
    return sum / static_cast<double>(membrane.size());
}

// One mean per output feature; `membrane` holds `groups` consecutive
// populations of equal size.
inline std::vector<double> population_vote(std::span<const double> membrane, std::size_t groups)
{
    if (groups == 0 || membrane.size() % groups != 0)
        throw ShapeError("population_vote: " + std::to_string(membrane.size()) +
                         " neurons cannot form " + std::to_string(groups) + " populations");
    const std::size_t n = membrane.size() / groups;
    std::vector<double> out(groups);
    for (std::size_t g = 0; g < groups; ++g)
        out[g] = population_vote(membrane.subspan(g * n, n));
    return out;
}

} // namespace spikereg
