#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poolforge/kernels.hpp"

namespace poolforge {

inline constexpr double kDefaultSelectionLambda = 1e-6;

struct SelectionRequest {
    const KernelView* kernel = nullptr;     // over pool plus conditioning ids
    std::vector<std::string> pool_ids;
    std::vector<std::string> conditioning_ids; // the labelled set
    int batch = 1;
    double lambda = kDefaultSelectionLambda;
    std::uint64_t seed = 0;
};

struct SelectionResult {
    std::vector<std::string> chosen;  // selection order
    std::vector<double> scores;       // per-step acquisition value
    bool jitter_applied = false;      // Cholesky retry with inflated lambda
    double lambda_used = 0.0;
};

// Greedy Gaussian posterior variance. Each pick joins the conditioning set
// before the next; implemented by extending the Cholesky factor of
// (K_CC + lambda I) one row per pick. Ties break to the lowest id.
SelectionResult select_pv(const SelectionRequest& req);

// Largest-cluster maximum-distance: assign candidates to the nearest centre
// in chosen-so-far plus conditioning, pick the farthest candidate inside the
// cluster with the largest total squared-distance mass.
SelectionResult select_lcmd(const SelectionRequest& req);

// Greedy farthest-first: maximize the minimum kernel distance to all centres.
SelectionResult select_kcenter(const SelectionRequest& req);

// B highest direct scores, ties to the lowest id.
SelectionResult select_topk_score(const std::vector<std::string>& pool_ids,
                                  const std::vector<double>& scores,
                                  int batch);

// Uniform without replacement, deterministic given seed.
SelectionResult select_random(const std::vector<std::string>& pool_ids,
                              int batch,
                              std::uint64_t seed);

namespace detail {
// Brute-force references: full matrix solve / full reassignment at every
// step. Kept as test oracles for the incremental implementations.
SelectionResult select_pv_reference(const SelectionRequest& req);
SelectionResult select_lcmd_reference(const SelectionRequest& req);
SelectionResult select_kcenter_reference(const SelectionRequest& req);
} // namespace detail

} // namespace poolforge
