#pragma once

// File formats: dataset CSV + JSON sidecar, and the binary parameter
// snapshot.
//
// Snapshot layout (all integers little-endian):
//   8 bytes   "SPIKEREG"
//   u32       format version (1)
//   u32       header length, followed by a UTF-8 JSON header
//             {"network": <spec>, "normalization": {...}, "meta": {...}}
//   u32       tensor count
//   per tensor:
//     u32 name length, name ("layer<l>.<weights|recurrent|decay|threshold>")
//     u32 rows, u32 cols, rows * cols IEEE-754 f64 values, row-major

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikereg/dataset.hpp"
#include "spikereg/materials.hpp"
#include "spikereg/network.hpp"

namespace spikereg {

namespace fs = std::filesystem;

inline std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline nlohmann::json to_json(const Normalization& n)
{
    return {{"input_mean", n.input.mean},
            {"input_std", n.input.std},
            {"target_mean", n.target.mean},
            {"target_std", n.target.std}};
}

inline Normalization normalization_from_json(const nlohmann::json& j)
{
    try {
        return {{j.at("input_mean").get<double>(), j.at("input_std").get<double>()},
                {j.at("target_mean").get<double>(), j.at("target_std").get<double>()}};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("normalization: ") + e.what());
    }
}

inline void write_text_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
    if (!out)
        throw DataError("write failed for " + path.string());
}

inline std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json_file(const fs::path& path)
{
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- datasets

inline std::string column_name(char prefix, std::size_t t, std::size_t f, std::size_t features)
{
    std::string s(1, prefix);
    s += "_t" + std::to_string(t);
    if (features > 1)
        s += "_f" + std::to_string(f);
    return s;
}

// Header x_t0..x_t{T-1},y_t0..y_t{T-1}; one row per sample, physical units.
inline std::string dataset_to_csv(const Dataset& d)
{
    std::string out;
    for (std::size_t t = 0; t < d.steps; ++t)
        for (std::size_t f = 0; f < d.input_features; ++f)
            out += (out.empty() ? "" : ",") + column_name('x', t, f, d.input_features);
    for (std::size_t t = 0; t < d.steps; ++t)
        for (std::size_t f = 0; f < d.output_features; ++f)
            out += "," + column_name('y', t, f, d.output_features);
    out += '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        bool first = true;
        for (double v : d.inputs.row(i)) {
            out += (first ? "" : ",") + format_double(v);
            first = false;
        }
        for (double v : d.targets.row(i))
            out += "," + format_double(v);
        out += '\n';
    }
    return out;
}

inline Dataset dataset_from_csv(const std::string& text, std::size_t steps, std::size_t input_features,
                                std::size_t output_features, const std::string& origin = "csv")
{
    Dataset d;
    d.steps = steps;
    d.input_features = input_features;
    d.output_features = output_features;
    const std::size_t nx = steps * input_features;
    const std::size_t ny = steps * output_features;
    std::vector<double> xs, ys;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line_no == 1 || line.empty())
            continue;
        std::size_t col = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            const auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma)
                throw DataError(origin + ":" + std::to_string(line_no) + ": bad number in column " +
                                std::to_string(col + 1));
            (col < nx ? xs : ys).push_back(v);
            ++col;
            p = comma + 1;
        }
        if (col != nx + ny)
            throw DataError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(nx + ny) +
                            " columns, found " + std::to_string(col));
        ++rows;
    }
    if (line_no == 0)
        throw DataError(origin + ": empty file");
    d.inputs = Matrix(rows, nx, std::move(xs));
    d.targets = Matrix(rows, ny, std::move(ys));
    d.validate();
    return d;
}

struct DatasetMeta {
    Experiment experiment = Experiment::Elastic;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    DatasetSizes sizes;
    MaterialConfig material;
    Normalization norm;
};

inline nlohmann::json to_json(const DatasetMeta& m)
{
    return {{"experiment", to_string(m.experiment)},
            {"steps", m.steps},
            {"seed", m.seed},
            {"input_features", 1},
            {"output_features", 1},
            {"sizes", {{"train", m.sizes.train}, {"val", m.sizes.val}, {"test", m.sizes.test}}},
            {"normalization", to_json(m.norm)},
            {"material", to_json(m.material)}};
}

inline void write_dataset_dir(const fs::path& dir, const DatasetSplit& s, const DatasetMeta& meta)
{
    write_text_file(dir / "train.csv", dataset_to_csv(s.train));
    write_text_file(dir / "val.csv", dataset_to_csv(s.val));
    write_text_file(dir / "test.csv", dataset_to_csv(s.test));
    write_text_file(dir / "dataset.json", to_json(meta).dump(2) + "\n");
}

struct LoadedDatasets {
    DatasetSplit split;
    DatasetMeta meta;
};

inline LoadedDatasets read_dataset_dir(const fs::path& dir)
{
    const auto j = read_json_file(dir / "dataset.json");
    LoadedDatasets out;
    try {
        out.meta.experiment = parse_experiment(j.at("experiment").get<std::string>());
        out.meta.steps = j.at("steps").get<std::size_t>();
        out.meta.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("sizes"))
            out.meta.sizes = {j["sizes"].value("train", std::size_t{0}), j["sizes"].value("val", std::size_t{0}),
                              j["sizes"].value("test", std::size_t{0})};
        out.meta.norm = normalization_from_json(j.at("normalization"));
        out.meta.material = material_config_from_json(j.value("material", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError((dir / "dataset.json").string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw DataError((dir / "dataset.json").string() + ": " + e.what());
    }
    auto load = [&](const char* name) {
        const auto path = dir / name;
        Dataset d = dataset_from_csv(read_text_file(path), out.meta.steps, 1, 1, path.string());
        d.norm = out.meta.norm;
        return d;
    };
    out.split = {load("train.csv"), load("val.csv"), load("test.csv")};
    return out;
}

// ---------------------------------------------------------------- snapshots

struct Snapshot {
    NetworkSpec spec;
    Parameters params;
    Normalization norm;
    nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v)
{
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}

    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64()
    {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }
    std::string bytes(std::size_t n)
    {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const
    {
        if (data_.size() - pos_ < n)
            throw DataError(origin_ + ": truncated snapshot");
    }
    const std::string& data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline constexpr char kSnapshotMagic[] = "SPIKEREG";
inline constexpr std::uint32_t kSnapshotVersion = 1;

inline std::string encode_snapshot(const Snapshot& s)
{
    check_parameters(s.spec, s.params);
    std::string out(kSnapshotMagic, 8);
    detail::put_u32(out, kSnapshotVersion);
    const std::string header =
        nlohmann::json{{"network", to_json(s.spec)}, {"normalization", to_json(s.norm)}, {"meta", s.meta}}.dump();
    detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (std::size_t l = 0; l < s.params.size(); ++l)
        s.params[l].for_each_tensor([&](const char* name, const Matrix& m) {
            if (!m.empty())
                tensors.emplace_back("layer" + std::to_string(l) + "." + name, &m);
        });
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<std::uint32_t>(m->rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(m->cols()));
        for (double v : m->values())
            detail::put_f64(out, v);
    }
    return out;
}

inline Snapshot decode_snapshot(const std::string& data, const std::string& origin = "snapshot")
{
    detail::Reader r(data, origin);
    if (r.bytes(8) != std::string(kSnapshotMagic, 8))
        throw DataError(origin + ": not a snapshot file (bad magic)");
    if (const auto v = r.u32(); v != kSnapshotVersion)
        throw DataError(origin + ": unsupported snapshot version " + std::to_string(v));
    Snapshot s;
    try {
        const auto header = nlohmann::json::parse(r.bytes(r.u32()));
        s.spec = network_spec_from_json(header.at("network"));
        s.norm = normalization_from_json(header.at("normalization"));
        s.meta = header.value("meta", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(origin + ": bad header: " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(origin + ": bad header: " + e.what());
    }
    s.params = zero_parameters(s.spec);
    const std::uint32_t count = r.u32();
    std::size_t filled = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.bytes(r.u32());
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        Matrix* target = nullptr;
        for (std::size_t l = 0; l < s.params.size() && !target; ++l)
            s.params[l].for_each_tensor([&](const char* tn, Matrix& m) {
                if (!m.empty() && name == "layer" + std::to_string(l) + "." + tn)
                    target = &m;
            });
        if (!target)
            throw DataError(origin + ": unexpected tensor '" + name + "'");
        if (target->rows() != rows || target->cols() != cols)
            throw DataError(origin + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", spec expects " + std::to_string(target->rows()) + "x" +
                            std::to_string(target->cols()));
        for (auto& v : target->values())
            v = r.f64();
        ++filled;
    }
    std::size_t expected = 0;
    for (const auto& p : s.params)
        p.for_each_tensor([&](const char*, const Matrix& m) { expected += !m.empty(); });
    if (filled != expected)
        throw DataError(origin + ": snapshot holds " + std::to_string(filled) + " tensors, spec needs " +
                        std::to_string(expected));
    if (!r.done())
        throw DataError(origin + ": trailing bytes after the last tensor");
    return s;
}

inline void write_snapshot(const fs::path& path, const Snapshot& s) { write_text_file(path, encode_snapshot(s)); }

inline Snapshot read_snapshot(const fs::path& path) { return decode_snapshot(read_text_file(path), path.string()); }

} // namespace spikereg
