#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "poolforge/core.hpp"

namespace poolforge {

using StructureStore = std::map<std::string, Structure>;

struct SurrogateConfig {
    int z_max = 10;           // supported species 0 <= z < z_max
    int embed_channels = 16;  // c
    int hidden_width = 128;   // h
    int hidden_layers = 2;    // L_h
    int n_rbf = 8;            // radial basis size per atom
    double cutoff = 5.0;      // neighbour cutoff (length units)

    bool operator==(const SurrogateConfig&) const = default;
};

struct TrainConfig {
    double w_energy = 10.0;
    double w_force = 10.0;
    double huber_delta = 10.0; // meV
    bool dynamic_schedule = true;
    // Fixed-schedule defaults used when dynamic_schedule is false.
    int fixed_epochs = 50;
    int fixed_batch = 16;
    double fixed_lr = 0.01;
};

struct Schedule {
    int batch = 1;
    double lr = 1e-3;
    int epochs = 1;
};

// Piecewise (batch, lr) by labelled-set size with thresholds at 20 and 100,
// epochs = max(10, ceil(1000*batch/|T|)).
Schedule dynamic_schedule(std::size_t labeled_size);

enum class CommitteeDiversity { shuffle, bootstrap };

struct CommitteeSpec {
    int size = 3;
    CommitteeDiversity diversity = CommitteeDiversity::shuffle;
    std::vector<std::uint64_t> member_seeds; // one per member, distinct
};

enum class CommitteeTarget { energy, force };

// A small differentiable energy model: per-atom input is the species
// embedding row concatenated with a smooth radial-basis neighbour sum, fed
// through a tanh MLP with a scalar per-atom readout; the structure energy is
// the atom sum. Immutable after construction/training.
class SurrogateModel {
public:
    SurrogateModel() = default;

    static SurrogateModel init(const SurrogateConfig& config, std::uint64_t seed);

    const SurrogateConfig& config() const { return config_; }

    double energy(const Structure& s) const;
    std::vector<Vec3> forces(const Structure& s) const;

    // Flattened (row-major) gradient of energy w.r.t. the species-embedding
    // matrix; dimension z_max * embed_channels for every structure.
    Eigen::VectorXd ntk_features(const Structure& s) const;

    // Per-layer atom-mean hidden activations, concatenated; dimension
    // hidden_layers * hidden_width.
    Eigen::VectorXd activation_features(const Structure& s) const;

    // Whole-parameter view for training, checkpoints, and tests.
    const Eigen::VectorXd& parameters() const { return params_; }
    void set_parameters(Eigen::VectorXd p);
    std::uint64_t rng_seed() const { return rng_seed_; }

private:
    friend struct SurrogatePass;
    SurrogateConfig config_;
    Eigen::VectorXd params_;
    std::uint64_t rng_seed_ = 0;
};

// Fine-tunes a copy of `model` on the labelled set with SGD on the Huber
// energy+force objective. Deterministic given seed.
SurrogateModel train(const SurrogateModel& model,
                     const StructureStore& structures,
                     const LabeledSet& labeled,
                     const TrainConfig& config,
                     std::uint64_t seed);

// Mean per-structure training loss under `config` weights; exposed so tests
// can assert that training reduces it.
double training_loss(const SurrogateModel& model,
                     const StructureStore& structures,
                     const LabeledSet& labeled,
                     const TrainConfig& config);

std::vector<SurrogateModel> spawn_committee(const SurrogateModel& base,
                                            const StructureStore& structures,
                                            const LabeledSet& labeled,
                                            const CommitteeSpec& spec,
                                            const TrainConfig& config);

// Energy target: population std of member energies. Force target: root-mean
// over atom components of the per-component population std.
std::vector<double> committee_scores(const std::vector<SurrogateModel>& members,
                                     const StructureStore& structures,
                                     const std::vector<std::string>& pool_ids,
                                     CommitteeTarget target);

namespace detail {
// The with-replacement resample used by bootstrap committees; exposed so the
// ~63.2%-unique expectation is testable without training.
LabeledSet bootstrap_resample(const LabeledSet& labeled, std::uint64_t seed);
} // namespace detail

} // namespace poolforge
