#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "poolforge/core.hpp"
#include "poolforge/kernels.hpp"
#include "poolforge/surrogate.hpp"

namespace poolforge {

struct DatasetEntry {
    Structure structure;
    std::optional<Labels> labels;
};

// JSON-lines dataset, one structure per line. Energies convert to meV at
// ingestion using the per-line "energy_unit" ("meV" default, "eV" accepted).
std::vector<DatasetEntry> read_dataset_jsonl(const std::filesystem::path& path);
void write_dataset_jsonl(const std::filesystem::path& path,
                         const std::vector<DatasetEntry>& entries);

// Binary feature file: magic "PFFM", u32 version, u64 n, u64 d, n
// length-prefixed UTF-8 ids, then n*d little-endian f64 row-major.
FeatureMatrix read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features);

// JSON-lines fingerprints: {"id", "bits":[int], "n_bits":int}.
FingerprintSet read_fingerprint_jsonl(const std::filesystem::path& path);
void write_fingerprint_jsonl(const std::filesystem::path& path, const FingerprintSet& fp);

// Versioned binary model checkpoint; bit-exact round trip.
SurrogateModel read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const SurrogateModel& model);

// Writes via a temp file in the same directory followed by a rename.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// 17-significant-digit float formatting, '.' decimal, locale independent.
std::string format_double(double v);

std::uint64_t hash_file(const std::filesystem::path& path);

// Manifest JSON accompanying every CLI output: input hashes, seeds, config.
struct Manifest {
    std::map<std::string, std::string> inputs;  // path -> hash (hex)
    std::map<std::string, std::string> config;  // flattened key/value
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    std::string command;
};
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Declarative key=value experiment config file ('#' comments allowed).
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

} // namespace poolforge
