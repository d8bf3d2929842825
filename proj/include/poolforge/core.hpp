#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace poolforge {

using Vec3 = std::array<double, 3>;

// One candidate structure: the unit of acquisition. Ids are opaque strings
// assigned at ingestion; every downstream module keys on ids, never on array
// positions.
struct Structure {
    std::string id;
    std::vector<int> species;  // atomic numbers z_i
    std::vector<Vec3> coords;  // positions r_i
    std::optional<std::string> family; // reaction family tag
    std::optional<int> frame;          // reaction-coordinate index

    int atom_count() const { return static_cast<int>(species.size()); }
};

// Reference labels. Energies are meV internally; ingestion converts from a
// declared unit in the file.
struct Labels {
    double energy = 0.0;            // meV
    std::vector<Vec3> forces;       // meV per length unit, one per atom
};

void validate_structure(const Structure& s);
void validate_labels(const Structure& s, const Labels& l);

struct Pool {
    std::vector<std::string> candidates; // ordered, unique

    bool contains(const std::string& id) const;
    std::size_t size() const { return candidates.size(); }
};

struct LabeledEntry {
    std::string id;
    Labels labels;
    int acquisition_round = 0;
};

struct LabeledSet {
    std::vector<LabeledEntry> entries; // acquisition_round nondecreasing

    bool contains(const std::string& id) const;
    std::size_t size() const { return entries.size(); }
    std::vector<std::string> ids() const;
};

struct RoundRecord {
    int round = 0;
    std::size_t labeled_size = 0;
    double energy_rmse = 0.0;
    double energy_mae = 0.0;
    double force_rmse = 0.0;
    double force_mae = 0.0;
};

// Persistent loop state: labelled set T, pool P, round index and per-round
// metric history. Value semantics throughout; transitions return new states.
struct ALState {
    int round = 0;
    LabeledSet labeled;
    Pool pool;
    int batch_size = 1;
    std::vector<RoundRecord> history;
    std::uint64_t rng_seed = 0;
};

// Moves `batch` from the pool into the labelled set at the current round and
// advances the round counter. Pure: the input state is untouched.
ALState apply_acquisition(const ALState& state,
                          const std::vector<std::string>& batch,
                          const std::map<std::string, Labels>& labels);

struct DatasetSplit {
    std::vector<std::string> pool;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

// Deterministic disjoint partition with |test| = floor(n*test_fraction) and
// |validation| = floor(n*validation_fraction); the remainder is the pool.
DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           double test_fraction,
                           double validation_fraction,
                           std::uint64_t seed);

} // namespace poolforge
