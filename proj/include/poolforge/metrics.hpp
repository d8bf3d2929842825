#pragma once

#include <map>
#include <string>
#include <vector>

#include "poolforge/core.hpp"

namespace poolforge {

struct ErrorMetrics {
    double energy_rmse = 0.0;
    double energy_mae = 0.0;
    double force_rmse = 0.0;
    double force_mae = 0.0;
};

// Energy metrics over structures; force metrics over all atom components
// pooled.
ErrorMetrics error_metrics(const std::map<std::string, Labels>& predictions,
                           const std::map<std::string, Labels>& labels,
                           const std::vector<std::string>& ids);

// Discrete sum over acquisition steps.
double auc(const std::vector<double>& curve);

// Percentage gain, relative to random, in rounds needed to reach the lowest
// metric value attained by both curves. Positive means the method is earlier.
double round_gain(const std::vector<double>& method_curve,
                  const std::vector<double>& random_curve);

struct SpearmanResult {
    double rho = 0.0;
    bool degenerate = false; // either input constant; rho reported as 0
};

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);

} // namespace poolforge
