#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "poolforge/kernels.hpp"

namespace poolforge {

inline constexpr double kResidualGPLambda = 1e-3;
inline constexpr double kPredictiveVarianceFloor = 1e-12;

// GP over residuals r(x) = y - b(x) of a frozen base predictor, with a
// training-residual variance scale gamma_hat converting the latent kernel
// variance s^2 into predictive variance.
struct ResidualGPFit {
    std::vector<std::string> conditioning_ids;
    Eigen::MatrixXd chol;       // lower Cholesky factor of K_TT + lambda I
    Eigen::VectorXd alpha;      // (K_TT + lambda I)^{-1} (r - r_bar 1)
    Eigen::VectorXd centered_residuals;
    double r_bar = 0.0;
    double gamma_hat = 0.0;
    double lambda = kResidualGPLambda;
    FeatureMatrix conditioning_features; // rows aligned with conditioning_ids
    double eps = kDefaultKernelEps;
};

ResidualGPFit fit_residual_gp(const FeatureMatrix& features,
                              const std::map<std::string, double>& base_predictions,
                              const std::map<std::string, double>& labels,
                              const std::vector<std::string>& conditioning_ids,
                              double lambda = kResidualGPLambda,
                              double eps = kDefaultKernelEps);

struct GPPrediction {
    double mean = 0.0;      // corrected prediction b(x) + mu
    double variance = 0.0;  // gamma_hat * s^2, floored
    double latent_s2 = 0.0; // raw s^2 before scaling
};

GPPrediction predict(const ResidualGPFit& fit,
                     const FeatureMatrix& features,
                     double base_prediction,
                     const std::string& id);

double gaussian_nll(double y, double mean, double variance);

struct CalibrationPoint {
    double y = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

struct CalibrationReport {
    double nll = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    std::vector<double> nominal_levels;   // 0.05 .. 0.95 step 0.05
    std::vector<double> empirical_coverage;
    double ece = 0.0;
    double ence = 0.0;
    bool ence_valid = false; // false when n < 10 (bins degenerate)
    std::size_t n_test = 0;
};

CalibrationReport calibration_metrics(const std::vector<CalibrationPoint>& points);

// Inverse standard normal CDF, accurate to ~1e-9.
double inverse_normal_cdf(double p);

struct PrefixReplay {
    std::vector<std::vector<std::string>> prefixes; // strictly nested
    std::vector<double> validation_nll;             // one per prefix
    std::size_t best_index = 0;                     // argmin validation NLL
};

// Replays posterior-variance acquisition (B = 1 per step) on the frozen
// kernel from the seed set, fitting a residual GP per prefix and scoring it
// on the validation split by mean Gaussian NLL.
PrefixReplay replay_prefixes(const FeatureMatrix& features,
                             const std::vector<std::string>& pool_ids,
                             const std::vector<std::string>& seed_ids,
                             const std::vector<std::string>& validation_ids,
                             const std::map<std::string, double>& base_predictions,
                             const std::map<std::string, double>& labels,
                             double lambda,
                             std::size_t max_prefix,
                             double eps = kDefaultKernelEps);

namespace detail {
// Explicit-inverse oracle used by tests against the Cholesky path.
struct GPOracle {
    double r_bar, gamma_hat;
    Eigen::MatrixXd inv; // (K + lambda I)^{-1}
    Eigen::VectorXd centered;
};
GPOracle residual_gp_oracle(const Eigen::MatrixXd& k_tt,
                            const Eigen::VectorXd& residuals,
                            double lambda);
} // namespace detail

} // namespace poolforge
