#pragma once

// Spike sparsity and forward-pass energy/memory accounting.
//
// A spiking device pays per synaptic event (one presynaptic spike delivered
// to one postsynaptic row) and per neuron update; a dense device pays per
// multiply-accumulate and computes every synapse every step. Real-valued
// presynaptic signals (the injected input current, decoder membranes, dense
// activations) are counted separately as graded events, one per nonzero value
// and postsynaptic row, and priced like synaptic events.
// Energies are reported per sample and forward pass.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikereg/network.hpp"

namespace spikereg {

struct DeviceProfile {
    std::string name;
    double energy_per_synaptic_event = 0.0; // J
    double energy_per_neuron_update = 0.0;  // J
    double energy_per_mac = 0.0;            // J

    void validate() const
    {
        if (energy_per_synaptic_event < 0.0 || energy_per_neuron_update < 0.0 || energy_per_mac < 0.0)
            throw ConfigError("device profile '" + name + "': energies must be non-negative");
    }
};

struct DeviceProfiles {
    DeviceProfile spiking;
    DeviceProfile dense;
};

// Defaults used when no profile file is given.
inline DeviceProfiles default_device_profiles()
{
    return {{"loihi", 23.6e-12, 81e-12, 0.0}, {"gpu", 0.0, 0.0, 0.3e-9}};
}

inline DeviceProfile device_profile_from_json(const nlohmann::json& j)
{
    DeviceProfile d;
    d.name = j.value("name", std::string());
    d.energy_per_synaptic_event = j.value("energy_per_synaptic_event", 0.0);
    d.energy_per_neuron_update = j.value("energy_per_neuron_update", 0.0);
    d.energy_per_mac = j.value("energy_per_mac", 0.0);
    d.validate();
    return d;
}

inline nlohmann::json to_json(const DeviceProfile& d)
{
    return {{"name", d.name},
            {"energy_per_synaptic_event", d.energy_per_synaptic_event},
            {"energy_per_neuron_update", d.energy_per_neuron_update},
            {"energy_per_mac", d.energy_per_mac}};
}

// {"profiles": [...], "spiking": name, "dense": name}
inline DeviceProfiles device_profiles_from_json(const nlohmann::json& j)
{
    try {
        std::vector<DeviceProfile> all;
        for (const auto& p : j.at("profiles"))
            all.push_back(device_profile_from_json(p));
        auto pick = [&](const std::string& key) {
            const auto name = j.at(key).get<std::string>();
            for (const auto& p : all)
                if (p.name == name)
                    return p;
            throw ConfigError("device profiles: no profile named '" + name + "' for " + key);
        };
        return {pick("spiking"), pick("dense")};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("device profiles: ") + e.what());
    }
}

inline DeviceProfiles load_device_profiles(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open device profile file " + path);
    try {
        return device_profiles_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

struct LayerSparsity {
    std::size_t layer = 0;
    std::uint64_t spikes = 0;
    std::uint64_t slots = 0; // steps x batch x units
    double rate = 0.0;
};

namespace detail {
inline std::uint64_t count_nonzero(std::span<const double> v)
{
    std::uint64_t n = 0;
    for (double x : v)
        n += x != 0.0;
    return n;
}
} // namespace detail

// Spike rate of every spiking layer. Outputs are binary in surrogate mode,
// so the nonzero count is the spike count.
inline std::vector<LayerSparsity> sparsity_stats(const NetworkSpec& spec, const ForwardRecord& rec)
{
    if (rec.layers.size() != spec.layers.size())
        throw UsageError("sparsity_stats: record does not belong to this network");
    std::vector<LayerSparsity> out;
    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        if (!is_spiking(spec.layers[l].kind))
            continue;
        const auto& o = rec.layers[l].output;
        if (o.empty())
            throw UsageError("sparsity_stats: layer " + std::to_string(l) + " was not recorded");
        LayerSparsity s;
        s.layer = l;
        s.spikes = detail::count_nonzero(o.values());
        s.slots = o.values().size();
        s.rate = s.slots ? static_cast<double>(s.spikes) / static_cast<double>(s.slots) : 0.0;
        out.push_back(s);
    }
    return out;
}

struct LayerEnergy {
    std::size_t layer = 0;
    std::string kind;
    std::uint64_t spikes = 0;          // nonzero outputs
    std::uint64_t synaptic_events = 0; // spikes x fan-out, whole batch
    std::uint64_t graded_events = 0;   // nonzero real values x fan-out
    std::uint64_t neuron_updates = 0;
    std::uint64_t dense_macs = 0;
    double synaptic_energy = 0.0; // J per sample, spike events only
    double spiking_energy = 0.0;  // J per sample
    double dense_energy = 0.0;    // J per sample
    std::size_t parameters = 0;
};

struct EnergyReport {
    std::string architecture;
    std::string spiking_device;
    std::string dense_device;
    std::size_t steps = 0;
    std::size_t batch = 0;
    std::vector<LayerEnergy> layers;
    double synaptic_total = 0.0;
    double spiking_total = 0.0;
    double dense_total = 0.0;
    double reduction = 0.0;
    std::size_t parameter_count = 0;
    std::size_t memory_bytes = 0;
};

// Per-sample energies, totals, reduction and memory from the event counts.
inline void price_energy(EnergyReport& r, const DeviceProfiles& devices)
{
    const double per_sample = r.batch ? 1.0 / static_cast<double>(r.batch) : 0.0;
    r.synaptic_total = 0.0;
    r.spiking_total = 0.0;
    r.dense_total = 0.0;
    r.parameter_count = 0;
    const double e_syn = devices.spiking.energy_per_synaptic_event;
    for (auto& e : r.layers) {
        e.synaptic_energy = static_cast<double>(e.synaptic_events) * e_syn * per_sample;
        e.spiking_energy = (static_cast<double>(e.synaptic_events + e.graded_events) * e_syn +
                            static_cast<double>(e.neuron_updates) * devices.spiking.energy_per_neuron_update) *
                           per_sample;
        e.dense_energy = static_cast<double>(e.dense_macs) * devices.dense.energy_per_mac * per_sample;
        r.synaptic_total += e.synaptic_energy;
        r.spiking_total += e.spiking_energy;
        r.dense_total += e.dense_energy;
        r.parameter_count += e.parameters;
    }
    r.reduction = r.spiking_total > 0.0 ? r.dense_total / r.spiking_total : 0.0;
    r.memory_bytes = 4 * r.parameter_count;
}

inline EnergyReport estimate_energy(const NetworkSpec& spec, const Parameters& params, const ForwardRecord& rec,
                                    const DeviceProfiles& devices, const std::string& architecture = "network")
{
    devices.spiking.validate();
    devices.dense.validate();
    if (devices.spiking.name.empty() || devices.dense.name.empty())
        throw ConfigError("estimate_energy: both a spiking and a dense device profile are required");
    if (rec.layers.size() != spec.layers.size())
        throw UsageError("estimate_energy: record does not belong to this network");
    check_parameters(spec, params);

    EnergyReport r;
    r.architecture = architecture;
    r.spiking_device = devices.spiking.name;
    r.dense_device = devices.dense.name;
    r.steps = rec.steps();
    r.batch = rec.batch();
    const bool self_rec = spec.recurrence == Recurrence::Self;

    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        const auto& in = rec.layers[l - 1].output;
        const auto& out = rec.layers[l].output;
        if (in.empty() || out.empty())
            throw UsageError("estimate_energy: layer " + std::to_string(l) + " was not recorded");
        const auto& p = params[l];
        const std::uint64_t rows = spec.projection_rows(l);
        const std::uint64_t slots = static_cast<std::uint64_t>(r.steps) * r.batch;
        const std::size_t head = r.steps > 0 ? (r.steps - 1) * r.batch : 0;

        LayerEnergy e;
        e.layer = l;
        e.kind = std::string(to_string(spec.layers[l].kind));
        auto events = [&](bool spiking_source) -> std::uint64_t& {
            return spiking_source ? e.synaptic_events : e.graded_events;
        };
        const bool in_spiking = is_spiking(spec.layers[l - 1].kind);
        e.spikes = is_spiking(spec.layers[l].kind) ? detail::count_nonzero(out.values()) : 0;
        events(in_spiking) += detail::count_nonzero(in.values()) * rows;
        e.neuron_updates = slots * spec.units(l);
        e.dense_macs = slots * rows * p.weights.cols();
        if (!p.recurrent.empty()) {
            const auto& src = self_rec ? out : in;
            const bool src_spiking = self_rec ? is_spiking(spec.layers[l].kind) : in_spiking;
            const auto prev = src.values().first(head * src.units());
            events(src_spiking) += detail::count_nonzero(prev) * rows;
            e.dense_macs += slots * rows * p.recurrent.cols();
        }
        p.for_each_tensor([&](const char*, const Matrix& m) { e.parameters += m.size(); });
        r.layers.push_back(e);
    }
    price_energy(r, devices);
    return r;
}

// Sums the event counts of `part` into `total` (same network, another batch)
// and reprices the merged counts.
inline void accumulate_energy(EnergyReport& total, const EnergyReport& part, const DeviceProfiles& devices)
{
    if (total.layers.empty()) {
        total = part;
        return;
    }
    if (total.layers.size() != part.layers.size() || total.steps != part.steps)
        throw UsageError("accumulate_energy: reports belong to different networks");
    total.batch += part.batch;
    for (std::size_t i = 0; i < total.layers.size(); ++i) {
        auto& a = total.layers[i];
        const auto& b = part.layers[i];
        a.spikes += b.spikes;
        a.synaptic_events += b.synaptic_events;
        a.graded_events += b.graded_events;
        a.neuron_updates += b.neuron_updates;
        a.dense_macs += b.dense_macs;
    }
    price_energy(total, devices);
}

inline nlohmann::json to_json(const EnergyReport& r)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& e : r.layers)
        layers.push_back({{"layer", e.layer},
                          {"kind", e.kind},
                          {"spikes", e.spikes},
                          {"synaptic_events", e.synaptic_events},
                          {"graded_events", e.graded_events},
                          {"neuron_updates", e.neuron_updates},
                          {"dense_macs", e.dense_macs},
                          {"synaptic_energy_j", e.synaptic_energy},
                          {"spiking_energy_j", e.spiking_energy},
                          {"dense_energy_j", e.dense_energy},
                          {"parameters", e.parameters}});
    return {{"architecture", r.architecture},
            {"spiking_device", r.spiking_device},
            {"dense_device", r.dense_device},
            {"steps", r.steps},
            {"batch", r.batch},
            {"layers", layers},
            {"synaptic_total_j", r.synaptic_total},
            {"spiking_total_j", r.spiking_total},
            {"dense_total_j", r.dense_total},
            {"reduction", r.reduction},
            {"parameter_count", r.parameter_count},
            {"memory_bytes", r.memory_bytes}};
}

// Aligned table: Architecture | spiking energy | dense energy | Reduction | Synaptic Memory.
inline std::string energy_table(const EnergyReport& r)
{
    char buf[256];
    std::ostringstream os;
    const std::string spk = r.spiking_device + " (nJ)";
    const std::string dns = r.dense_device + " (nJ)";
    std::snprintf(buf, sizeof buf, "%-20s | %14s | %14s | %10s | %16s\n", "Architecture", spk.c_str(), dns.c_str(),
                  "Reduction", "Synaptic Memory");
    os << buf << std::string(88, '-') << '\n';
    std::snprintf(buf, sizeof buf, "%-20s | %14s | %14s | %10s | %16s\n", r.architecture.c_str(), "", "", "", "");
    os << buf;
    for (const auto& e : r.layers) {
        const std::string name = "  " + std::to_string(e.layer) + " " + e.kind;
        std::snprintf(buf, sizeof buf, "%-20s | %14.4g | %14.4g | %10s | %16s\n", name.c_str(),
                      e.spiking_energy * 1e9, e.dense_energy * 1e9, "", "");
        os << buf;
    }
    os << std::string(88, '-') << '\n';
    char red[32];
    char mem[32];
    std::snprintf(red, sizeof red, "x%.1f", r.reduction);
    std::snprintf(mem, sizeof mem, "%.3f MB", static_cast<double>(r.memory_bytes) / 1e6);
    std::snprintf(buf, sizeof buf, "%-20s | %14.4g | %14.4g | %10s | %16s\n", "Total", r.spiking_total * 1e9,
                  r.dense_total * 1e9, red, mem);
    os << buf;
    return os.str();
}

} // namespace spikereg
