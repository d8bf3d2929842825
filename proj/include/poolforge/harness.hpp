#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poolforge/core.hpp"
#include "poolforge/kernels.hpp"
#include "poolforge/metrics.hpp"
#include "poolforge/surrogate.hpp"

namespace poolforge {

enum class Method { random, committee_e, committee_f, pv, lcmd, kcenter };
enum class Representation { ntk, activation, file, fingerprint };

Method parse_method(const std::string& name);
Representation parse_representation(const std::string& name);
std::string to_string(Method m);
std::string to_string(Representation r);

struct ExperimentConfig {
    Method method = Method::random;
    Representation representation = Representation::ntk;
    int rounds = 15;
    int batch = 5;
    std::uint64_t seed = 0;
    int initial_seed_size = 50;
    bool stratified_init = false; // default uniform
    bool warm_start = false;      // default: retrain from the base checkpoint
    TrainConfig train;
    double lambda = 1e-6;
    double eps = kDefaultKernelEps;
    CommitteeSpec committee;

    void validate() const;
};

struct ExperimentData {
    StructureStore structures;
    std::map<std::string, Labels> labels; // offline oracle for the whole pool
    std::vector<std::string> pool_ids;
    std::vector<std::string> validation_ids;
    std::vector<std::string> test_ids;
    SurrogateModel base_model;
    std::optional<FeatureMatrix> ingested_features; // representation = file
    std::optional<FingerprintSet> fingerprints;     // representation = fingerprint
};

struct LearningCurve {
    std::vector<RoundRecord> rows; // rounds 0..R inclusive

    std::vector<double> force_rmse() const;
    std::vector<double> energy_rmse() const;
};

struct ExperimentResult {
    LearningCurve curve;
    std::vector<std::vector<std::string>> batches; // chosen ids per round 1..R
    SurrogateModel final_model;
};

// Offline AL loop: per round extract the representation from the current
// model, build the kernel, select B, move the batch into the labelled set,
// retrain from the designated checkpoint, and evaluate on the fixed test set.
ExperimentResult run_active_learning(const ExperimentConfig& config,
                                     const ExperimentData& data);

// Model-derived or ingested features for a given id list.
FeatureMatrix extract_features(const SurrogateModel& model,
                               const StructureStore& structures,
                               const std::vector<std::string>& ids,
                               Representation representation,
                               const std::optional<FeatureMatrix>& ingested);

struct FamilyBlock {
    std::string family;
    std::size_t start = 0;
    std::size_t count = 0;
    double mean_similarity = 0.0;
    double min_similarity = 0.0;
};

struct GeometryReport {
    std::vector<std::string> ordered_ids; // family-then-frame order
    Eigen::MatrixXd gram;
    std::vector<FamilyBlock> blocks;
};

// Reorders the Gram matrix by (family, frame) and reports per-family
// within-block similarity stats.
GeometryReport kernel_geometry_report(const FeatureMatrix& features,
                                      const StructureStore& structures,
                                      double eps = kDefaultKernelEps);

} // namespace poolforge
