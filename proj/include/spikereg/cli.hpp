#pragma once

// Command-line front end: gen, train, eval, profile.
//
// Effective configuration = built-in defaults < JSON file (--config) <
// command-line flags. It is written as config.json into every output
// directory. Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric
// divergence.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spikereg/io.hpp"
#include "spikereg/materials.hpp"
#include "spikereg/network.hpp"
#include "spikereg/profiling.hpp"
#include "spikereg/training.hpp"

namespace spikereg::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;

struct Flags {
    std::optional<std::string> config, experiment, preset, data, out, snapshot, split, devices;
    std::optional<std::string> loss, gradient_mode, reset_gradient, recurrence;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps, width, population, layers, epochs, batch, eval_batch;
    std::optional<std::size_t> n_train, n_val, n_test, threads, samples, log_every;
    std::optional<double> lr, weight_decay, clip, max_strain;
    bool grad_check = false;
    bool predictions = false;
    bool deterministic = false;
};

inline std::string experiment_for_preset(const std::string& preset)
{
    if (preset == "elastic-lif")
        return "elastic";
    if (preset == "ro-rlif")
        return "ramberg-osgood";
    if (preset == "plastic-slstm" || preset == "plastic-lstm")
        return "plasticity";
    throw ConfigError("unknown preset '" + preset + "'");
}

inline std::string preset_for_experiment(Experiment e)
{
    switch (e) {
    case Experiment::Elastic: return "elastic-lif";
    case Experiment::RambergOsgood: return "ro-rlif";
    case Experiment::Plasticity: return "plastic-slstm";
    }
    return "elastic-lif";
}

// Steps, split sizes and epochs used in the reference experiments.
inline json experiment_defaults(Experiment e)
{
    switch (e) {
    case Experiment::Elastic:
        return {{"steps", 5}, {"epochs", 2000}, {"sizes", {{"train", 1024}, {"val", 1024}, {"test", 1024}}}};
    case Experiment::RambergOsgood:
        return {{"steps", 20}, {"epochs", 5000}, {"sizes", {{"train", 1024}, {"val", 1024}, {"test", 1024}}}};
    case Experiment::Plasticity:
        return {{"steps", 100}, {"epochs", 500}, {"sizes", {{"train", 10240}, {"val", 1024}, {"test", 1024}}}};
    }
    return {};
}

inline std::uint64_t env_seed()
{
    const char* s = std::getenv("SPIKEREG_SEED");
    if (!s || !*s)
        return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0')
        throw ConfigError(std::string("SPIKEREG_SEED is not an unsigned integer: ") + s);
    return v;
}

// Defaults < config file < flags.
inline json effective_config(const std::string& command, const Flags& f, const json& dataset_meta = nullptr)
{
    json j = json::object();
    if (f.config) {
        try {
            j = read_json_file(*f.config);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        if (!j.is_object())
            throw ConfigError(*f.config + ": configuration must be a JSON object");
    }
    auto set = [&](const char* key, const auto& v) {
        if (v)
            j[key] = *v;
    };
    set("experiment", f.experiment);
    set("preset", f.preset);
    set("data", f.data);
    set("out", f.out);
    set("snapshot", f.snapshot);
    set("split", f.split);
    set("devices", f.devices);
    set("loss", f.loss);
    set("gradient_mode", f.gradient_mode);
    set("reset_gradient", f.reset_gradient);
    set("recurrence", f.recurrence);
    set("seed", f.seed);
    set("steps", f.steps);
    set("width", f.width);
    set("population", f.population);
    set("hidden_layers", f.layers);
    set("epochs", f.epochs);
    set("batch_size", f.batch);
    set("eval_batch", f.eval_batch);
    set("threads", f.threads);
    set("samples", f.samples);
    set("log_every", f.log_every);
    set("learning_rate", f.lr);
    set("weight_decay", f.weight_decay);
    set("clip_norm", f.clip);
    if (f.n_train)
        j["sizes"]["train"] = *f.n_train;
    if (f.n_val)
        j["sizes"]["val"] = *f.n_val;
    if (f.n_test)
        j["sizes"]["test"] = *f.n_test;
    if (f.grad_check)
        j["grad_check"] = true;
    if (f.predictions)
        j["predictions"] = true;
    if (f.deterministic)
        j["threads"] = 1;

    try {
        // A dataset on disk fixes the experiment and step count unless given.
        if (dataset_meta.is_object()) {
            if (!j.contains("experiment"))
                j["experiment"] = dataset_meta.at("experiment");
            if (!j.contains("steps"))
                j["steps"] = dataset_meta.at("steps");
        }
        if (!j.contains("experiment"))
            j["experiment"] = j.contains("preset") ? experiment_for_preset(j["preset"].get<std::string>()) : "elastic";
        const Experiment e = parse_experiment(j["experiment"].get<std::string>());
        if (!j.contains("preset"))
            j["preset"] = preset_for_experiment(e);
        const json d = experiment_defaults(e);
        if (!j.contains("steps"))
            j["steps"] = d["steps"];
        if (!j.contains("epochs"))
            j["epochs"] = d["epochs"];
        json sizes = d["sizes"];
        if (j.contains("sizes"))
            sizes.update(j["sizes"]);
        j["sizes"] = sizes;

        MaterialConfig m = material_config_from_json(j.value("material", json::object()));
        if (f.max_strain) {
            if (e == Experiment::Elastic)
                m.elastic_max_strain = *f.max_strain;
            else if (e == Experiment::RambergOsgood)
                m.ro_max_strain = *f.max_strain;
            else
                m.load_path.max_strain = *f.max_strain;
        }
        j["material"] = to_json(m);

        const json defaults{{"width", 128},
                            {"population", 32},
                            {"hidden_layers", 3},
                            {"batch_size", 1024},
                            {"eval_batch", 1024},
                            {"learning_rate", 1e-3},
                            {"weight_decay", 0.01},
                            {"loss", "mse"},
                            {"gradient_mode", "surrogate"},
                            {"reset_gradient", "detached"},
                            {"recurrence", "preceding"},
                            {"clip_norm", 1.0},
                            {"threads", 1},
                            {"split", "test"},
                            {"log_every", 0},
                            {"grad_check", false},
                            {"predictions", false}};
        for (const auto& [k, v] : defaults.items())
            if (!j.contains(k))
                j[k] = v;
        if (!j.contains("seed"))
            j["seed"] = env_seed();
        if (!j.contains("out"))
            j["out"] = command == "gen" ? "data" : command == "train" ? "run" : command;
        j["command"] = command;

        // Type and value checks happen here so bad files fail as config errors.
        parse_loss(j["loss"].get<std::string>());
        parse_gradient_mode(j["gradient_mode"].get<std::string>());
        parse_reset_gradient(j["reset_gradient"].get<std::string>());
        parse_recurrence(j["recurrence"].get<std::string>());
        experiment_for_preset(j["preset"].get<std::string>());
        (void)j["seed"].get<std::uint64_t>();
        if (j["steps"].get<std::size_t>() < 2)
            throw ConfigError("steps must be at least 2");
        if (j["threads"].get<std::size_t>() == 0)
            throw ConfigError("threads must be positive");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("configuration: ") + e.what());
    }
    return j;
}

inline NetworkSpec spec_from_config(const json& j)
{
    PresetOptions o;
    o.steps = j["steps"].get<std::size_t>();
    o.width = j["width"].get<std::size_t>();
    o.population = j["population"].get<std::size_t>();
    o.hidden_layers = j["hidden_layers"].get<std::size_t>();
    o.recurrence = parse_recurrence(j["recurrence"].get<std::string>());
    return make_preset(j["preset"].get<std::string>(), o);
}

inline TrainConfig train_config_from(const json& j)
{
    TrainConfig c;
    c.epochs = j["epochs"].get<std::size_t>();
    c.batch_size = j["batch_size"].get<std::size_t>();
    c.eval_batch = j["eval_batch"].get<std::size_t>();
    c.learning_rate = j["learning_rate"].get<double>();
    c.weight_decay = j["weight_decay"].get<double>();
    c.seed = j["seed"].get<std::uint64_t>();
    c.preset = j["preset"].get<std::string>();
    c.loss = parse_loss(j["loss"].get<std::string>());
    c.mode = parse_gradient_mode(j["gradient_mode"].get<std::string>());
    c.reset = parse_reset_gradient(j["reset_gradient"].get<std::string>());
    c.clip_norm = j["clip_norm"].get<double>();
    c.validate();
    return c;
}

inline DatasetSizes sizes_from(const json& j)
{
    return {j["sizes"]["train"].get<std::size_t>(), j["sizes"]["val"].get<std::size_t>(),
            j["sizes"]["test"].get<std::size_t>()};
}

inline void echo_config(const fs::path& dir, const json& j) { write_text_file(dir / "config.json", j.dump(2) + "\n"); }

inline LoadedDatasets generate(const json& j)
{
    LoadedDatasets d;
    d.meta.experiment = parse_experiment(j["experiment"].get<std::string>());
    d.meta.steps = j["steps"].get<std::size_t>();
    d.meta.seed = j["seed"].get<std::uint64_t>();
    d.meta.sizes = sizes_from(j);
    d.meta.material = material_config_from_json(j["material"]);
    d.split = build_dataset(d.meta.experiment, d.meta.sizes, d.meta.steps, d.meta.seed, d.meta.material);
    d.meta.norm = d.split.train.norm;
    return d;
}

inline int cmd_gen(const json& j, std::ostream& out)
{
    const fs::path dir = j["out"].get<std::string>();
    const auto d = generate(j);
    write_dataset_dir(dir, d.split, d.meta);
    echo_config(dir, j);
    out << "wrote " << d.split.train.size() << "/" << d.split.val.size() << "/" << d.split.test.size() << " "
        << to_string(d.meta.experiment) << " samples (" << d.meta.steps << " steps) to " << dir.string() << "\n";
    return kExitOk;
}

// Finite-difference check of the preset's miniature (2 layers x 4 units x
// 5 steps) in smooth mode.
inline GradCheckResult preset_grad_check(const json& j)
{
    PresetOptions o;
    o.steps = 5;
    o.width = 4;
    o.population = 4;
    o.hidden_layers = 2;
    o.recurrence = parse_recurrence(j["recurrence"].get<std::string>());
    const auto spec = make_preset(j["preset"].get<std::string>(), o);
    const std::uint64_t seed = j["seed"].get<std::uint64_t>();
    SeededRng rng = SeededRng::stream(seed, kInitStream + 2);
    const auto params = init_parameters(spec, rng);
    StateSequence x(spec.steps, 3, spec.inputs), y(spec.steps, 3, spec.outputs);
    for (auto& v : x.values())
        v = rng.uniform(-1.5, 1.5);
    for (auto& v : y.values())
        v = rng.uniform(-1.0, 1.0);
    GradCheckOptions opt;
    opt.seed = seed;
    return gradient_check(spec, params, x, y, opt);
}

inline json to_json(const GradCheckResult& g)
{
    json entries = json::array();
    for (const auto& e : g.entries)
        entries.push_back(
            {{"layer", e.layer}, {"tensor", e.tensor}, {"checked", e.checked}, {"max_rel_error", e.max_rel_error}});
    return {{"entries", entries}, {"max_rel_error", g.max_rel_error()}, {"tolerance", 1e-4}};
}

inline std::string metrics_csv(const TrainReport& r)
{
    std::string s = "epoch,train_loss,val_loss\n";
    for (const auto& e : r.epochs)
        s += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "\n";
    return s;
}

inline int cmd_train(json j, std::ostream& out, std::ostream& err)
{
    const fs::path dir = j["out"].get<std::string>();
    gemm_threads() = j["threads"].get<std::size_t>();

    int status = kExitOk;
    if (j["grad_check"].get<bool>()) {
        const auto g = preset_grad_check(j);
        write_text_file(dir / "gradcheck.json", to_json(g).dump(2) + "\n");
        out << "grad-check: max relative error " << g.max_rel_error() << " (tolerance 1e-4)\n";
        if (!(g.max_rel_error() < 1e-4)) {
            err << "grad-check failed\n";
            status = kExitDivergence;
        }
    }

    LoadedDatasets data;
    if (j.contains("data")) {
        data = read_dataset_dir(j["data"].get<std::string>());
    } else {
        data = generate(j);
        write_dataset_dir(dir / "data", data.split, data.meta);
    }
    const auto spec = spec_from_config(j);
    const auto cfg = train_config_from(j);
    SeededRng init_rng = SeededRng::stream(cfg.seed, kInitStream);
    const auto params = init_parameters(spec, init_rng);
    const std::size_t log_every = j["log_every"].get<std::size_t>();
    auto log = [&](const EpochLog& e) {
        if (log_every && e.epoch % log_every == 0)
            err << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << "\n";
    };
    echo_config(dir, j);

    const json meta{{"preset", cfg.preset},
                    {"experiment", std::string(to_string(data.meta.experiment))},
                    {"seed", cfg.seed}};
    auto save = [&](const TrainResult& r) {
        json report = spikereg::to_json(r.report);
        report["meta"] = meta;
        write_text_file(dir / "report.json", report.dump(2) + "\n");
        write_text_file(dir / "metrics.csv", metrics_csv(r.report));
        Snapshot snap{spec, r.best, data.split.train.norm, meta};
        snap.meta["best_epoch"] = r.report.best_epoch;
        write_snapshot(dir / "snapshot.bin", snap);
    };
    try {
        const auto result = train(spec, params, data.split.train, data.split.val, data.split.test, cfg, log);
        save(result);
        out << "best epoch " << result.report.best_epoch << ", test mean relative error: all steps "
            << result.report.test.all_steps << ", last step " << result.report.test.last_step << "\n";
    } catch (const TrainingDiverged& e) {
        save(e.partial());
        err << "training diverged: " << e.what() << " (last good snapshot written)\n";
        return kExitDivergence;
    }
    return status;
}

struct Evaluation {
    Matrix predictions; // physical units, one row per sample
    ErrorMetrics metrics;
    std::vector<LayerSparsity> sparsity;
    EnergyReport energy;
};

// Recorded forward passes over `count` samples in chunks; accumulates
// predictions, spike counts and energy event counts.
inline Evaluation run_recorded(const Snapshot& snap, const Dataset& data, std::size_t count, std::size_t chunk,
                               const DeviceProfiles* devices, const std::string& architecture)
{
    const auto idx = all_indices(count);
    StateSequence pred(snap.spec.steps, count, snap.spec.outputs);
    Evaluation ev;
    for (std::size_t s0 = 0; s0 < count; s0 += chunk) {
        const std::size_t bs = std::min(chunk, count - s0);
        const auto rec = forward(snap.spec, snap.params, data.input_sequence(std::span(idx).subspan(s0, bs)));
        for (std::size_t t = 0; t < snap.spec.steps; ++t)
            for (std::size_t b = 0; b < bs; ++b) {
                const auto v = rec.output.at(t, b);
                std::copy(v.begin(), v.end(), pred.at(t, s0 + b).begin());
            }
        const auto sp = sparsity_stats(snap.spec, rec);
        if (ev.sparsity.empty())
            ev.sparsity = sp;
        else
            for (std::size_t i = 0; i < sp.size(); ++i) {
                ev.sparsity[i].spikes += sp[i].spikes;
                ev.sparsity[i].slots += sp[i].slots;
            }
        if (devices)
            accumulate_energy(ev.energy, estimate_energy(snap.spec, snap.params, rec, *devices, architecture),
                              *devices);
    }
    for (auto& s : ev.sparsity)
        s.rate = s.slots ? static_cast<double>(s.spikes) / static_cast<double>(s.slots) : 0.0;
    std::vector<std::size_t> sub = all_indices(count);
    ev.metrics.loss = mse_loss(pred, data.target_sequence(sub));
    ev.predictions = sequence_to_samples(pred, data.norm.target);
    Matrix ref(count, data.targets.cols());
    for (std::size_t i = 0; i < count; ++i)
        std::copy(data.targets.row(i).begin(), data.targets.row(i).end(), ref.row(i).begin());
    ev.metrics.all_steps = mean_relative_error(ev.predictions, ref, ErrorMode::AllSteps, data.output_features);
    ev.metrics.last_step = mean_relative_error(ev.predictions, ref, ErrorMode::LastStep, data.output_features);
    return ev;
}

inline json to_json(const std::vector<LayerSparsity>& s)
{
    json a = json::array();
    for (const auto& l : s)
        a.push_back({{"layer", l.layer}, {"spikes", l.spikes}, {"slots", l.slots}, {"rate", l.rate}});
    return a;
}

struct EvalInputs {
    Snapshot snap;
    LoadedDatasets data;
    Dataset* split = nullptr;
};

inline EvalInputs load_eval_inputs(const json& j)
{
    if (!j.contains("snapshot") || !j.contains("data"))
        throw UsageError("--snapshot and --data are required");
    EvalInputs in;
    in.snap = read_snapshot(j["snapshot"].get<std::string>());
    in.data = read_dataset_dir(j["data"].get<std::string>());
    const auto split = j["split"].get<std::string>();
    in.split = split == "train" ? &in.data.split.train
               : split == "val" ? &in.data.split.val
               : split == "test" ? &in.data.split.test
                                 : nullptr;
    if (!in.split)
        throw ConfigError("unknown split '" + split + "' (train|val|test)");
    check_dataset_for(in.snap.spec, *in.split, split.c_str());
    in.split->norm = in.snap.norm; // the network was trained against these statistics
    return in;
}

inline std::size_t recorded_chunk(const json& j) { return std::min<std::size_t>(j["eval_batch"].get<std::size_t>(), 256); }

inline int cmd_eval(const json& j, std::ostream& out)
{
    gemm_threads() = j["threads"].get<std::size_t>();
    auto in = load_eval_inputs(j);
    const Dataset& d = *in.split;
    const auto ev = run_recorded(in.snap, d, d.size(), recorded_chunk(j), nullptr, "");
    const fs::path dir = j["out"].get<std::string>();
    const json metrics{{"split", j["split"]},
                       {"samples", d.size()},
                       {"loss", ev.metrics.loss},
                       {"mre_all_steps", ev.metrics.all_steps},
                       {"mre_last_step", ev.metrics.last_step},
                       {"sparsity", to_json(ev.sparsity)}};
    write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");
    if (j["predictions"].get<bool>()) {
        const bool ro = in.data.meta.experiment == Experiment::RambergOsgood;
        const double ro_max = in.data.meta.material.ro_max_strain;
        std::string csv = "sample,t,strain,stress_ref,stress_pred\n";
        for (std::size_t i = 0; i < d.size(); ++i)
            for (std::size_t t = 0; t < d.steps; ++t) {
                const double strain =
                    ro ? ro_max * static_cast<double>(t) / static_cast<double>(d.steps - 1) : d.inputs(i, t);
                csv += std::to_string(i) + "," + std::to_string(t) + "," + format_double(strain) + "," +
                       format_double(d.targets(i, t)) + "," + format_double(ev.predictions(i, t)) + "\n";
            }
        write_text_file(dir / "predictions.csv", csv);
    }
    echo_config(dir, j);
    out << "mean relative error: all steps " << ev.metrics.all_steps << ", last step " << ev.metrics.last_step
        << "\n";
    return kExitOk;
}

inline DeviceProfiles devices_from(const json& j)
{
    if (j.contains("devices"))
        return load_device_profiles(j["devices"].get<std::string>());
    return default_device_profiles();
}

inline int cmd_profile(const json& j, std::ostream& out)
{
    gemm_threads() = j["threads"].get<std::size_t>();
    const auto devices = devices_from(j);
    auto in = load_eval_inputs(j);
    const Dataset& d = *in.split;
    const std::size_t count = j.contains("samples") ? std::min(j["samples"].get<std::size_t>(), d.size()) : d.size();
    if (count == 0)
        throw ConfigError("--samples must be positive");
    const std::string arch = in.snap.meta.value("preset", std::string("network"));
    const auto ev = run_recorded(in.snap, d, count, recorded_chunk(j), &devices, arch);
    const fs::path dir = j["out"].get<std::string>();
    json report = spikereg::to_json(ev.energy);
    report["sparsity"] = to_json(ev.sparsity);
    report["devices"] = {{"spiking", spikereg::to_json(devices.spiking)}, {"dense", spikereg::to_json(devices.dense)}};
    write_text_file(dir / "energy.json", report.dump(2) + "\n");
    const std::string table = energy_table(ev.energy);
    write_text_file(dir / "energy.txt", table);
    echo_config(dir, j);
    out << table;
    return kExitOk;
}

inline void add_common(CLI::App* c, Flags& f)
{
    c->add_option("--config", f.config, "JSON configuration file");
    c->add_option("--seed", f.seed, "Random seed (falls back to SPIKEREG_SEED, then 0)");
    c->add_option("--threads", f.threads, "Worker threads for matrix products");
    c->add_flag("--deterministic", f.deterministic, "Single-threaded evaluation");
    c->add_option("--out", f.out, "Output directory");
}

inline void add_data_gen(CLI::App* c, Flags& f)
{
    c->add_option("--experiment", f.experiment, "elastic | ramberg-osgood | plasticity");
    c->add_option("--dt,--steps", f.steps, "Time steps per sequence");
    c->add_option("--n-train", f.n_train, "Training samples");
    c->add_option("--n-val", f.n_val, "Validation samples");
    c->add_option("--n-test", f.n_test, "Test samples");
    c->add_option("--max-strain", f.max_strain, "Upper end of the sampled strain range");
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr)
{
    CLI::App app{"spikereg: spiking neural network regression of material models"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("gen", "Generate train/val/test datasets");
    add_common(gen, f);
    add_data_gen(gen, f);

    auto* tr = app.add_subcommand("train", "Train a preset network");
    add_common(tr, f);
    add_data_gen(tr, f);
    tr->add_option("--preset", f.preset, "elastic-lif | ro-rlif | plastic-slstm | plastic-lstm");
    tr->add_option("--data", f.data, "Dataset directory written by gen (generated when absent)");
    tr->add_option("--width", f.width, "Neurons per hidden layer (n_u)");
    tr->add_option("--population", f.population, "Decoder / population neurons (n_o)");
    tr->add_option("--layers", f.layers, "Hidden layers");
    tr->add_option("--epochs", f.epochs, "Training epochs");
    tr->add_option("--batch", f.batch, "Mini-batch size");
    tr->add_option("--eval-batch", f.eval_batch, "Samples per evaluation forward pass");
    tr->add_option("--lr", f.lr, "AdamW learning rate");
    tr->add_option("--weight-decay", f.weight_decay, "AdamW decoupled weight decay");
    tr->add_option("--clip", f.clip, "Global gradient-norm clip (0 disables)");
    tr->add_option("--loss", f.loss, "mse | mae");
    tr->add_option("--gradient-mode", f.gradient_mode, "surrogate | smooth");
    tr->add_option("--reset-gradient", f.reset_gradient, "detached | full");
    tr->add_option("--recurrence", f.recurrence, "preceding | self");
    tr->add_option("--log-every", f.log_every, "Print losses every N epochs");
    tr->add_flag("--grad-check", f.grad_check, "Run the finite-difference gradient check first");

    auto* ev = app.add_subcommand("eval", "Evaluate a snapshot on a dataset split");
    add_common(ev, f);
    ev->add_option("--snapshot", f.snapshot, "snapshot.bin written by train");
    ev->add_option("--data", f.data, "Dataset directory");
    ev->add_option("--split", f.split, "train | val | test");
    ev->add_option("--eval-batch", f.eval_batch, "Samples per forward pass");
    ev->add_flag("--predictions", f.predictions, "Also write predictions.csv");

    auto* pr = app.add_subcommand("profile", "Energy and memory estimate for a snapshot");
    add_common(pr, f);
    pr->add_option("--snapshot", f.snapshot, "snapshot.bin written by train");
    pr->add_option("--data", f.data, "Dataset directory");
    pr->add_option("--split", f.split, "train | val | test");
    pr->add_option("--devices", f.devices, "Device profile JSON");
    pr->add_option("--samples", f.samples, "Profile only the first N samples");
    pr->add_option("--eval-batch", f.eval_batch, "Samples per forward pass");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen(effective_config("gen", f), out);
        if (tr->parsed()) {
            json meta = nullptr;
            if (f.data)
                meta = read_json_file(fs::path(*f.data) / "dataset.json");
            else if (f.config) {
                const json c = read_json_file(*f.config);
                if (c.contains("data"))
                    meta = read_json_file(fs::path(c["data"].get<std::string>()) / "dataset.json");
            }
            return cmd_train(effective_config("train", f, meta), out, err);
        }
        if (ev->parsed())
            return cmd_eval(effective_config("eval", f), out);
        if (pr->parsed())
            return cmd_profile(effective_config("profile", f), out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace spikereg::cli
