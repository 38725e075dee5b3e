#pragma once

// Sequence regression data kept in physical units, together with the
// training-set statistics used to standardize it on the way into a network.

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spikereg/linalg.hpp"

namespace spikereg {

struct Normalization {
    Moments input;
    Moments target;

    bool operator==(const Normalization& o) const
    {
        return input.mean == o.input.mean && input.std == o.input.std && target.mean == o.target.mean &&
               target.std == o.target.std;
    }
};

// One row per sample. Column t * features + f holds feature f at step t.
struct Dataset {
    std::size_t steps = 0;
    std::size_t input_features = 1;
    std::size_t output_features = 1;
    Matrix inputs;
    Matrix targets;
    Normalization norm;

    std::size_t size() const noexcept { return inputs.rows(); }

    void validate() const
    {
        if (steps == 0 || input_features == 0 || output_features == 0)
            throw DataError("dataset: steps and feature counts must be positive");
        if (inputs.cols() != steps * input_features || targets.cols() != steps * output_features)
            throw DataError("dataset: column counts do not match " + std::to_string(steps) + " steps");
        if (inputs.rows() != targets.rows())
            throw DataError("dataset: " + std::to_string(inputs.rows()) + " input rows but " +
                            std::to_string(targets.rows()) + " target rows");
        if (!inputs.all_finite() || !targets.all_finite())
            throw DataError("dataset: non-finite values");
    }

    StateSequence input_sequence(std::span<const std::size_t> samples) const
    {
        return gather(inputs, input_features, norm.input, samples);
    }
    StateSequence target_sequence(std::span<const std::size_t> samples) const
    {
        return gather(targets, output_features, norm.target, samples);
    }

private:
    StateSequence gather(const Matrix& src, std::size_t features, const Moments& m,
                         std::span<const std::size_t> samples) const
    {
        check_scale(m.std);
        StateSequence out(steps, samples.size(), features);
        for (std::size_t b = 0; b < samples.size(); ++b) {
            if (samples[b] >= src.rows())
                throw DataError("dataset: sample index " + std::to_string(samples[b]) + " out of range");
            const auto row = src.row(samples[b]);
            for (std::size_t t = 0; t < steps; ++t)
                for (std::size_t f = 0; f < features; ++f)
                    out.at(t, b)[f] = (row[t * features + f] - m.mean) / m.std;
        }
        return out;
    }
};

// Scalar mean and population std over every value of every sample.
inline Normalization compute_normalization(const Dataset& train)
{
    Normalization n{moments(train.inputs.values()), moments(train.targets.values())};
    check_scale(n.input.std);
    check_scale(n.target.std);
    return n;
}

inline std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

// Standardized sequence back to one physical-unit row per sample.
inline Matrix sequence_to_samples(const StateSequence& seq, const Moments& m)
{
    Matrix out(seq.batch(), seq.steps() * seq.units());
    for (std::size_t b = 0; b < seq.batch(); ++b)
        for (std::size_t t = 0; t < seq.steps(); ++t) {
            const auto v = seq.at(t, b);
            for (std::size_t f = 0; f < v.size(); ++f)
                out(b, t * v.size() + f) = v[f] * m.std + m.mean;
        }
    return out;
}

} // namespace spikereg
