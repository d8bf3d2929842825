#include "poolforge/io.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "poolforge/error.hpp"

namespace poolforge {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw Error(errc::io_error, "cannot open " + path.string());
    return in;
}

void write_atomic_impl(const std::filesystem::path& path,
                       const void* data, std::size_t size) {
    const auto tmp = path.parent_path() /
                     (path.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(errc::io_error, "cannot open " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw Error(errc::io_error, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

double energy_to_mev(double value, const std::string& unit) {
    if (unit == "meV") return value;
    if (unit == "eV") return value * 1000.0;
    throw Error(errc::format_error, "unknown energy unit: " + unit);
}

Vec3 to_vec3(const json& j) {
    if (!j.is_array() || j.size() != 3)
        throw Error(errc::format_error, "expected 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

std::vector<DatasetEntry> read_dataset_jsonl(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<DatasetEntry> entries;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(errc::format_error, path.string() + ":" + std::to_string(line_no) +
                                                ": " + e.what());
        }
        DatasetEntry entry;
        Structure& s = entry.structure;
        s.id = j.at("id").get<std::string>();
        s.species = j.at("species").get<std::vector<int>>();
        for (const auto& c : j.at("coords")) s.coords.push_back(to_vec3(c));
        if (j.contains("family")) s.family = j["family"].get<std::string>();
        if (j.contains("frame")) s.frame = j["frame"].get<int>();
        validate_structure(s);
        if (!seen_ids.insert(s.id).second)
            throw Error(errc::duplicate_id, path.string() + ":" + std::to_string(line_no) +
                                                ": duplicate id " + s.id);

        const std::string unit = j.value("energy_unit", std::string("meV"));
        if (j.contains("energy") || j.contains("forces")) {
            Labels lab;
            lab.energy = energy_to_mev(j.at("energy").get<double>(), unit);
            if (j.contains("forces")) {
                for (const auto& f : j["forces"]) {
                    Vec3 v = to_vec3(f);
                    for (auto& c : v) c = energy_to_mev(c, unit);
                    lab.forces.push_back(v);
                }
            }
            validate_labels(s, lab);
            entry.labels = lab;
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

void write_dataset_jsonl(const std::filesystem::path& path,
                         const std::vector<DatasetEntry>& entries) {
    std::ostringstream out;
    for (const auto& entry : entries) {
        const Structure& s = entry.structure;
        json j;
        j["id"] = s.id;
        j["species"] = s.species;
        json coords = json::array();
        for (const auto& r : s.coords) coords.push_back({r[0], r[1], r[2]});
        j["coords"] = coords;
        if (s.family) j["family"] = *s.family;
        if (s.frame) j["frame"] = *s.frame;
        if (entry.labels) {
            j["energy"] = entry.labels->energy;
            json forces = json::array();
            for (const auto& f : entry.labels->forces) forces.push_back({f[0], f[1], f[2]});
            j["forces"] = forces;
            j["energy_unit"] = "meV";
        }
        out << j.dump() << '\n';
    }
    atomic_write(path, out.str());
}

namespace {
constexpr char kFeatureMagic[4] = {'P', 'F', 'F', 'M'};
constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
    // Little-endian on all supported targets.
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T take(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error(errc::format_error, "truncated binary file");
    return v;
}
} // namespace

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
        throw Error(errc::format_error, "not a feature file: " + path.string());
    const auto version = take<std::uint32_t>(in);
    if (version != kFeatureVersion)
        throw Error(errc::format_error, "unsupported feature file version");
    const auto n = take<std::uint64_t>(in);
    const auto d = take<std::uint64_t>(in);

    FeatureMatrix out;
    out.ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto len = take<std::uint32_t>(in);
        std::string id(len, '\0');
        in.read(id.data(), len);
        if (!in) throw Error(errc::format_error, "truncated id in feature file");
        out.ids.push_back(std::move(id));
    }
    out.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint64_t k = 0; k < d; ++k)
            out.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = take<double>(in);
    out.validate();
    return out;
}

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features) {
    features.validate();
    std::string buf;
    buf.append(kFeatureMagic, 4);
    put(buf, kFeatureVersion);
    put(buf, static_cast<std::uint64_t>(features.ids.size()));
    put(buf, static_cast<std::uint64_t>(features.data.cols()));
    for (const auto& id : features.ids) {
        put(buf, static_cast<std::uint32_t>(id.size()));
        buf.append(id);
    }
    for (Eigen::Index i = 0; i < features.data.rows(); ++i)
        for (Eigen::Index k = 0; k < features.data.cols(); ++k)
            put(buf, features.data(i, k));
    atomic_write(path, buf);
}

FingerprintSet read_fingerprint_jsonl(const std::filesystem::path& path) {
    auto in = open_in(path);
    FingerprintSet fp;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        fp.ids.push_back(j.at("id").get<std::string>());
        fp.bits.push_back(j.at("bits").get<std::vector<std::uint32_t>>());
        const auto nb = j.at("n_bits").get<std::uint32_t>();
        if (fp.n_bits == 0) fp.n_bits = nb;
        else if (fp.n_bits != nb)
            throw Error(errc::format_error, "inconsistent n_bits in " + path.string());
    }
    fp.validate();
    return fp;
}

void write_fingerprint_jsonl(const std::filesystem::path& path, const FingerprintSet& fp) {
    fp.validate();
    std::ostringstream out;
    for (std::size_t i = 0; i < fp.ids.size(); ++i) {
        json j;
        j["id"] = fp.ids[i];
        j["bits"] = fp.bits[i];
        j["n_bits"] = fp.n_bits;
        out << j.dump() << '\n';
    }
    atomic_write(path, out.str());
}

namespace {
constexpr char kCheckpointMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
} // namespace

SurrogateModel read_checkpoint(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw Error(errc::format_error, "not a checkpoint file: " + path.string());
    if (take<std::uint32_t>(in) != kCheckpointVersion)
        throw Error(errc::format_error, "unsupported checkpoint version");

    SurrogateConfig cfg;
    cfg.z_max = take<std::int32_t>(in);
    cfg.embed_channels = take<std::int32_t>(in);
    cfg.hidden_width = take<std::int32_t>(in);
    cfg.hidden_layers = take<std::int32_t>(in);
    cfg.n_rbf = take<std::int32_t>(in);
    cfg.cutoff = take<double>(in);
    const auto seed = take<std::uint64_t>(in);
    const auto count = take<std::uint64_t>(in);

    SurrogateModel model = SurrogateModel::init(cfg, seed);
    Eigen::VectorXd params(static_cast<Eigen::Index>(count));
    for (std::uint64_t k = 0; k < count; ++k)
        params(static_cast<Eigen::Index>(k)) = take<double>(in);
    model.set_parameters(std::move(params));
    return model;
}

void write_checkpoint(const std::filesystem::path& path, const SurrogateModel& model) {
    std::string buf;
    buf.append(kCheckpointMagic, 4);
    put(buf, kCheckpointVersion);
    const auto& cfg = model.config();
    put(buf, static_cast<std::int32_t>(cfg.z_max));
    put(buf, static_cast<std::int32_t>(cfg.embed_channels));
    put(buf, static_cast<std::int32_t>(cfg.hidden_width));
    put(buf, static_cast<std::int32_t>(cfg.hidden_layers));
    put(buf, static_cast<std::int32_t>(cfg.n_rbf));
    put(buf, cfg.cutoff);
    put(buf, model.rng_seed());
    put(buf, static_cast<std::uint64_t>(model.parameters().size()));
    for (Eigen::Index k = 0; k < model.parameters().size(); ++k)
        put(buf, model.parameters()(k));
    atomic_write(path, buf);
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    write_atomic_impl(path, content.data(), content.size());
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    std::uint64_t h = 1469598103934665603ull; // FNV-1a 64
    char chunk[4096];
    while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(chunk[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    json j;
    j["command"] = manifest.command;
    j["seed"] = manifest.seed;
    j["inputs"] = manifest.inputs;
    j["config"] = manifest.config;
    j["outputs"] = manifest.outputs;
    j["format_version"] = 1;
    atomic_write(path, j.dump(2) + "\n");
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(errc::config_invalid,
                        path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw Error(errc::config_invalid,
                        path.string() + ":" + std::to_string(line_no) + ": empty key");
        out[key] = value;
    }
    return out;
}

} // namespace poolforge
