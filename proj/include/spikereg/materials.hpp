#pragma once

// One-dimensional material models used as ground truth: linear elasticity,
// the Ramberg-Osgood power law, and rate-independent plasticity with linear
// isotropic hardening. Also the load-path sampler and dataset assembly.
// Stresses are in MPa.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "spikereg/dataset.hpp"
#include "spikereg/linalg.hpp"

namespace spikereg {

struct ElasticParams {
    double youngs_modulus = 2.1e5;
};

inline double elastic_stress(double strain, const ElasticParams& p = {}) { return p.youngs_modulus * strain; }

// eps = sigma / E + offset * (sigma / sigma_Y)^n
struct RambergOsgoodParams {
    double youngs_modulus = 2.1e5;
    double yield_strength = 300.0;
    double exponent = 10.0;
    double offset = 0.002;

    void validate() const
    {
        if (!(youngs_modulus > 0.0) || !(yield_strength > 0.0) || !(exponent >= 1.0) || !(offset >= 0.0))
            throw ConfigError("Ramberg-Osgood parameters need E, sigma_Y > 0 and n >= 1");
    }
};

namespace detail {
inline double ro_residual(double sigma, double strain, const RambergOsgoodParams& p)
{
    return sigma / p.youngs_modulus + p.offset * std::pow(sigma / p.yield_strength, p.exponent) - strain;
}
inline double ro_slope(double sigma, const RambergOsgoodParams& p)
{
    return 1.0 / p.youngs_modulus +
           p.offset * p.exponent * std::pow(sigma, p.exponent - 1.0) / std::pow(p.yield_strength, p.exponent);
}
} // namespace detail

struct SolveInfo {
    std::size_t iterations = 0;
    bool newton_converged = false;
};

// Stress for a given strain. Newton from min(E eps, sigma_Y), stopping at
// |g| < 1e-12 max(eps, 1e-6); bisection on [0, E eps + sigma_Y] if Newton has
// not converged after 100 iterations. Negative strains use the odd extension.
inline double ramberg_osgood_stress(double strain, const RambergOsgoodParams& p = {}, SolveInfo* info = nullptr)
{
    p.validate();
    if (!std::isfinite(strain))
        throw SolverError("ramberg_osgood_stress: non-finite strain");
    if (strain < 0.0)
        return -ramberg_osgood_stress(-strain, p, info);
    if (strain == 0.0) {
        if (info)
            *info = {0, true};
        return 0.0;
    }
    const double tol = 1e-12 * std::max(strain, 1e-6);
    double sigma = std::min(p.youngs_modulus * strain, p.yield_strength);
    for (std::size_t it = 1; it <= 100; ++it) {
        const double g = detail::ro_residual(sigma, strain, p);
        if (std::abs(g) < tol) {
            if (info)
                *info = {it - 1, true};
            return sigma;
        }
        sigma -= g / detail::ro_slope(sigma, p);
        if (!(sigma > 0.0))
            sigma = 0.0;
    }
    if (std::abs(detail::ro_residual(sigma, strain, p)) < tol) {
        if (info)
            *info = {100, true};
        return sigma;
    }
    // g is strictly increasing with g(0) < 0 < g(E eps + sigma_Y).
    double lo = 0.0;
    double hi = p.youngs_modulus * strain + p.yield_strength;
    std::size_t it = 0;
    while (hi - lo > 1e-14 * hi && it < 2000) {
        const double mid = 0.5 * (lo + hi);
        (detail::ro_residual(mid, strain, p) < 0.0 ? lo : hi) = mid;
        ++it;
    }
    if (info)
        *info = {100 + it, false};
    return 0.5 * (lo + hi);
}

struct PlasticityParams {
    double youngs_modulus = 2.1e5;
    double yield_strength = 300.0;
    double hardening_modulus = 2.1e4;

    void validate() const
    {
        if (!(youngs_modulus > 0.0) || !(yield_strength > 0.0) || !(hardening_modulus > 0.0))
            throw ConfigError("plasticity parameters need E, sigma_Y, K > 0");
    }
};

struct PlasticState {
    double plastic_strain = 0.0;
    double alpha = 0.0; // accumulated plastic strain (hardening variable)
};

struct ReturnMapResult {
    double stress = 0.0;
    PlasticState state;
    double increment = 0.0;   // delta gamma
    double yield_value = 0.0; // f(sigma, alpha) after the update
};

// Elastic predictor, plastic corrector for a prescribed total strain.
inline ReturnMapResult return_map_step(const PlasticState& state, double strain, const PlasticityParams& p = {})
{
    const double e = p.youngs_modulus;
    const double k = p.hardening_modulus;
    const double trial = e * (strain - state.plastic_strain);
    const double f_trial = std::abs(trial) - (p.yield_strength + k * state.alpha);
    ReturnMapResult r;
    r.state = state;
    if (f_trial <= 0.0) {
        r.stress = trial;
        r.yield_value = f_trial;
        return r;
    }
    const double dgamma = f_trial / (e + k);
    r.increment = dgamma;
    r.state.plastic_strain += dgamma * (trial > 0.0 ? 1.0 : -1.0);
    r.state.alpha += dgamma;
    r.stress = e * (strain - r.state.plastic_strain);
    r.yield_value = std::abs(r.stress) - (p.yield_strength + k * r.state.alpha);
    return r;
}

// Stress after monotonic loading from the virgin state to `strain` >= 0.
inline double monotonic_plastic_stress(double strain, const PlasticityParams& p = {})
{
    const double e = p.youngs_modulus;
    if (e * strain <= p.yield_strength)
        return e * strain;
    return p.yield_strength + p.hardening_modulus * (e * strain - p.yield_strength) / (e + p.hardening_modulus);
}

struct LoadPathOptions {
    double max_strain = 0.01;
    double min_ratio = 0.2; // unloading target as a fraction of the peak stress
    double max_ratio = 0.8;
    double ramp_fraction = 0.6;
};

// Ramp from 0 to eps_max ~ U[0, max_strain] over the first ceil(0.6 d_t)
// steps, then unload linearly until the stress has fallen to r * sigma_peak,
// r ~ U[min_ratio, max_ratio]. The unloading end strain is
// eps_max - (1 - r) sigma_peak / E, i.e. r * eps_max while elastic.
inline std::vector<double> sample_load_path(SeededRng& rng, std::size_t steps, const PlasticityParams& p = {},
                                            const LoadPathOptions& o = {})
{
    if (steps < 2)
        throw ConfigError("sample_load_path: need at least 2 steps");
    const double eps_max = rng.uniform(0.0, o.max_strain);
    const double ratio = rng.uniform(o.min_ratio, o.max_ratio);
    const auto ramp = std::min<std::size_t>(
        steps, static_cast<std::size_t>(std::ceil(o.ramp_fraction * static_cast<double>(steps))));
    const double peak = monotonic_plastic_stress(eps_max, p);
    const double eps_end = eps_max - (1.0 - ratio) * peak / p.youngs_modulus;
    std::vector<double> path(steps);
    for (std::size_t t = 0; t < ramp; ++t)
        path[t] = ramp > 1 ? eps_max * static_cast<double>(t) / static_cast<double>(ramp - 1) : 0.0;
    const std::size_t unload = steps - ramp;
    for (std::size_t t = ramp; t < steps; ++t)
        path[t] = eps_max + (eps_end - eps_max) * static_cast<double>(t - ramp + 1) / static_cast<double>(unload);
    return path;
}

// Stress response of the plasticity model along a strain path, from the
// virgin state.
inline std::vector<double> plastic_response(std::span<const double> path, const PlasticityParams& p = {})
{
    std::vector<double> out(path.size());
    PlasticState s;
    for (std::size_t t = 0; t < path.size(); ++t) {
        const auto r = return_map_step(s, path[t], p);
        out[t] = r.stress;
        s = r.state;
    }
    return out;
}

enum class Experiment { Elastic, RambergOsgood, Plasticity };

inline std::string_view to_string(Experiment e)
{
    switch (e) {
    case Experiment::Elastic: return "elastic";
    case Experiment::RambergOsgood: return "ramberg-osgood";
    case Experiment::Plasticity: return "plasticity";
    }
    return "?";
}

inline Experiment parse_experiment(std::string_view s)
{
    for (auto e : {Experiment::Elastic, Experiment::RambergOsgood, Experiment::Plasticity})
        if (to_string(e) == s)
            return e;
    throw ConfigError("unknown experiment '" + std::string(s) + "' (elastic|ramberg-osgood|plasticity)");
}

// Material constants and sampling ranges for all three experiments.
struct MaterialConfig {
    ElasticParams elastic;
    double elastic_max_strain = 0.001;
    RambergOsgoodParams ramberg_osgood;
    double ro_min_yield = 100.0;
    double ro_max_yield = 500.0;
    double ro_max_strain = 0.01;
    PlasticityParams plasticity;
    LoadPathOptions load_path;
};

inline nlohmann::json to_json(const MaterialConfig& m)
{
    return {{"elastic", {{"E", m.elastic.youngs_modulus}, {"max_strain", m.elastic_max_strain}}},
            {"ramberg_osgood",
             {{"E", m.ramberg_osgood.youngs_modulus},
              {"n", m.ramberg_osgood.exponent},
              {"offset", m.ramberg_osgood.offset},
              {"min_yield", m.ro_min_yield},
              {"max_yield", m.ro_max_yield},
              {"max_strain", m.ro_max_strain}}},
            {"plasticity",
             {{"E", m.plasticity.youngs_modulus},
              {"yield", m.plasticity.yield_strength},
              {"K", m.plasticity.hardening_modulus},
              {"max_strain", m.load_path.max_strain},
              {"min_ratio", m.load_path.min_ratio},
              {"max_ratio", m.load_path.max_ratio},
              {"ramp_fraction", m.load_path.ramp_fraction}}}};
}

// Missing keys keep their defaults.
inline MaterialConfig material_config_from_json(const nlohmann::json& j)
{
    MaterialConfig m;
    try {
        if (j.contains("elastic")) {
            const auto& e = j["elastic"];
            m.elastic.youngs_modulus = e.value("E", m.elastic.youngs_modulus);
            m.elastic_max_strain = e.value("max_strain", m.elastic_max_strain);
        }
        if (j.contains("ramberg_osgood")) {
            const auto& r = j["ramberg_osgood"];
            m.ramberg_osgood.youngs_modulus = r.value("E", m.ramberg_osgood.youngs_modulus);
            m.ramberg_osgood.exponent = r.value("n", m.ramberg_osgood.exponent);
            m.ramberg_osgood.offset = r.value("offset", m.ramberg_osgood.offset);
            m.ro_min_yield = r.value("min_yield", m.ro_min_yield);
            m.ro_max_yield = r.value("max_yield", m.ro_max_yield);
            m.ro_max_strain = r.value("max_strain", m.ro_max_strain);
        }
        if (j.contains("plasticity")) {
            const auto& p = j["plasticity"];
            m.plasticity.youngs_modulus = p.value("E", m.plasticity.youngs_modulus);
            m.plasticity.yield_strength = p.value("yield", m.plasticity.yield_strength);
            m.plasticity.hardening_modulus = p.value("K", m.plasticity.hardening_modulus);
            m.load_path.max_strain = p.value("max_strain", m.load_path.max_strain);
            m.load_path.min_ratio = p.value("min_ratio", m.load_path.min_ratio);
            m.load_path.max_ratio = p.value("max_ratio", m.load_path.max_ratio);
            m.load_path.ramp_fraction = p.value("ramp_fraction", m.load_path.ramp_fraction);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("material config: ") + e.what());
    }
    return m;
}

struct DatasetSizes {
    std::size_t train = 1024;
    std::size_t val = 1024;
    std::size_t test = 1024;
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Input and target sequences of one sample; `rng` is the sample's own stream.
inline void generate_sample(Experiment e, std::size_t steps, const MaterialConfig& m, SeededRng& rng,
                            std::span<double> input, std::span<double> target)
{
    const double last = static_cast<double>(steps - 1);
    switch (e) {
    case Experiment::Elastic: {
        const double eps_max = rng.uniform(0.0, m.elastic_max_strain);
        for (std::size_t t = 0; t < steps; ++t) {
            input[t] = eps_max * static_cast<double>(t) / last;
            target[t] = elastic_stress(input[t], m.elastic);
        }
        break;
    }
    case Experiment::RambergOsgood: {
        RambergOsgoodParams p = m.ramberg_osgood;
        p.yield_strength = rng.uniform(m.ro_min_yield, m.ro_max_yield);
        for (std::size_t t = 0; t < steps; ++t) {
            input[t] = p.yield_strength;
            target[t] = ramberg_osgood_stress(m.ro_max_strain * static_cast<double>(t) / last, p);
        }
        break;
    }
    case Experiment::Plasticity: {
        const auto path = sample_load_path(rng, steps, m.plasticity, m.load_path);
        const auto stress = plastic_response(path, m.plasticity);
        std::copy(path.begin(), path.end(), input.begin());
        std::copy(stress.begin(), stress.end(), target.begin());
        break;
    }
    }
}

// Sample i overall (train first, then val, then test) draws from
// SeededRng::stream(seed, i). All three splits carry the training-set
// normalization.
inline DatasetSplit build_dataset(Experiment e, const DatasetSizes& sizes, std::size_t steps, std::uint64_t seed,
                                  const MaterialConfig& m = {})
{
    if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0)
        throw ConfigError("build_dataset: split sizes must be positive");
    if (steps < 2)
        throw ConfigError("build_dataset: need at least 2 steps");
    m.plasticity.validate();
    std::size_t next = 0;
    auto make = [&](std::size_t n) {
        Dataset d;
        d.steps = steps;
        d.inputs = Matrix(n, steps);
        d.targets = Matrix(n, steps);
        for (std::size_t i = 0; i < n; ++i) {
            SeededRng rng = SeededRng::stream(seed, next++);
            generate_sample(e, steps, m, rng, d.inputs.row(i), d.targets.row(i));
        }
        return d;
    };
    DatasetSplit s{make(sizes.train), make(sizes.val), make(sizes.test)};
    const Normalization norm = compute_normalization(s.train);
    s.train.norm = norm;
    s.val.norm = norm;
    s.test.norm = norm;
    return s;
}

} // namespace spikereg
