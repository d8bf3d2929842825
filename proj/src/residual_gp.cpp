#include "poolforge/residual_gp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "poolforge/error.hpp"
#include "poolforge/selectors.hpp"

namespace poolforge {

namespace {

FeatureMatrix rows_for(const FeatureMatrix& features, const std::vector<std::string>& ids) {
    FeatureMatrix out;
    out.ids = ids;
    out.normalized = features.normalized;
    out.data.resize(static_cast<Eigen::Index>(ids.size()), features.data.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto r = features.index_of(ids[i]);
        if (r < 0) throw Error(errc::unknown_id, "features do not cover id " + ids[i]);
        out.data.row(static_cast<Eigen::Index>(i)) = features.data.row(r);
    }
    return out;
}

double lookup(const std::map<std::string, double>& m, const std::string& id,
              const char* what) {
    auto it = m.find(id);
    if (it == m.end())
        throw Error(errc::missing_label, std::string(what) + " missing for id " + id);
    return it->second;
}

} // namespace

ResidualGPFit fit_residual_gp(const FeatureMatrix& features,
                              const std::map<std::string, double>& base_predictions,
                              const std::map<std::string, double>& labels,
                              const std::vector<std::string>& conditioning_ids,
                              double lambda,
                              double eps) {
    if (conditioning_ids.empty())
        throw Error(errc::empty_input, "fit_residual_gp: empty conditioning set");
    if (!(lambda > 0))
        throw Error(errc::invalid_spec, "fit_residual_gp: lambda must be > 0");

    ResidualGPFit fit;
    fit.conditioning_ids = conditioning_ids;
    fit.lambda = lambda;
    fit.eps = eps;
    fit.conditioning_features = rows_for(features, conditioning_ids);

    const auto n = static_cast<Eigen::Index>(conditioning_ids.size());
    Eigen::VectorXd residuals(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& id = conditioning_ids[static_cast<std::size_t>(i)];
        residuals(i) = lookup(labels, id, "label") - lookup(base_predictions, id, "base prediction");
    }
    fit.r_bar = residuals.mean();
    fit.centered_residuals = residuals.array() - fit.r_bar;

    const KernelView view = gram_matrix(fit.conditioning_features, eps);
    Eigen::MatrixXd A = view.gram;
    A.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
        throw Error(errc::singular_kernel, "fit_residual_gp: K + lambda I not PD");
    fit.chol = llt.matrixL();
    fit.alpha = llt.solve(fit.centered_residuals);
    fit.gamma_hat = fit.centered_residuals.dot(fit.alpha) / static_cast<double>(n);
    if (fit.gamma_hat < 0) fit.gamma_hat = 0.0; // round-off guard
    return fit;
}

GPPrediction predict(const ResidualGPFit& fit,
                     const FeatureMatrix& features,
                     double base_prediction,
                     const std::string& id) {
    const auto row = features.index_of(id);
    if (row < 0) throw Error(errc::unknown_id, "predict: features do not cover id " + id);

    FeatureMatrix test;
    test.ids = {id};
    test.normalized = features.normalized;
    test.data = features.data.row(row);

    const Eigen::VectorXd k_t =
        cross_kernel(test, fit.conditioning_features, fit.eps).row(0).transpose();
    const double k_xx = cosine_kernel(features.data.row(row), features.data.row(row), fit.eps);

    const Eigen::VectorXd w = fit.chol.triangularView<Eigen::Lower>().solve(k_t);
    GPPrediction out;
    out.mean = base_prediction + fit.r_bar + k_t.dot(fit.alpha);
    out.latent_s2 = std::max(k_xx - w.squaredNorm(), 0.0);
    out.variance = std::max(fit.gamma_hat * out.latent_s2, kPredictiveVarianceFloor);
    return out;
}

double gaussian_nll(double y, double mean, double variance) {
    if (!(variance > 0))
        throw Error(errc::nonpositive_variance, "gaussian_nll: variance must be > 0");
    const double d = y - mean;
    return 0.5 * (std::log(2.0 * M_PI * variance) + d * d / variance);
}

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw Error(errc::invalid_spec, "inverse_normal_cdf: p must be in (0,1)");
    // Acklam's rational approximation with one Halley refinement step.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= phigh) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
    return x - u / (1 + x * u / 2);
}

CalibrationReport calibration_metrics(const std::vector<CalibrationPoint>& points) {
    if (points.size() < 2)
        throw Error(errc::empty_input, "calibration_metrics: need at least 2 points");

    CalibrationReport rep;
    rep.n_test = points.size();
    const double n = static_cast<double>(points.size());

    double se = 0.0, ae = 0.0, nll = 0.0;
    for (const auto& pt : points) {
        const double d = pt.y - pt.mean;
        se += d * d;
        ae += std::abs(d);
        nll += gaussian_nll(pt.y, pt.mean, pt.variance);
    }
    rep.rmse = std::sqrt(se / n);
    rep.mae = ae / n;
    rep.nll = nll / n;

    // Coverage over the 19-level grid; ECE is the mean absolute deviation
    // from nominal.
    double ece = 0.0;
    for (int k = 1; k <= 19; ++k) {
        const double p = 0.05 * k;
        const double z = inverse_normal_cdf(0.5 + p / 2.0);
        std::size_t inside = 0;
        for (const auto& pt : points)
            if (std::abs(pt.y - pt.mean) <= z * std::sqrt(pt.variance)) ++inside;
        const double cov = static_cast<double>(inside) / n;
        rep.nominal_levels.push_back(p);
        rep.empirical_coverage.push_back(cov);
        ece += std::abs(cov - p);
    }
    rep.ece = ece / 19.0;

    // ENCE: 10 equal-count bins sorted by predicted std; mean |RMV-RMSE|/RMV.
    if (points.size() >= 10) {
        std::vector<std::size_t> order(points.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return points[a].variance < points[b].variance;
        });
        const std::size_t bins = 10;
        double ence = 0.0;
        for (std::size_t bin = 0; bin < bins; ++bin) {
            const std::size_t lo = bin * points.size() / bins;
            const std::size_t hi = (bin + 1) * points.size() / bins;
            double mv = 0.0, mse = 0.0;
            for (std::size_t k = lo; k < hi; ++k) {
                const auto& pt = points[order[k]];
                mv += pt.variance;
                const double d = pt.y - pt.mean;
                mse += d * d;
            }
            const double cnt = static_cast<double>(hi - lo);
            const double rmv = std::sqrt(mv / cnt);
            const double rmse = std::sqrt(mse / cnt);
            ence += rmv > 0 ? std::abs(rmv - rmse) / rmv : 0.0;
        }
        rep.ence = ence / static_cast<double>(bins);
        rep.ence_valid = true;
    }
    return rep;
}

PrefixReplay replay_prefixes(const FeatureMatrix& features,
                             const std::vector<std::string>& pool_ids,
                             const std::vector<std::string>& seed_ids,
                             const std::vector<std::string>& validation_ids,
                             const std::map<std::string, double>& base_predictions,
                             const std::map<std::string, double>& labels,
                             double lambda,
                             std::size_t max_prefix,
                             double eps) {
    if (seed_ids.empty())
        throw Error(errc::empty_input, "replay_prefixes: empty seed set");
    if (max_prefix < seed_ids.size())
        throw Error(errc::invalid_spec, "replay_prefixes: max_prefix below seed size");

    // Kernel over seed + pool, computed once and held fixed.
    std::vector<std::string> all_ids = seed_ids;
    for (const auto& id : pool_ids)
        if (std::find(seed_ids.begin(), seed_ids.end(), id) == seed_ids.end())
            all_ids.push_back(id);
    const FeatureMatrix sub = rows_for(features, all_ids);
    const KernelView view = gram_matrix(sub, eps);

    std::vector<std::string> acquirable;
    for (const auto& id : all_ids)
        if (std::find(seed_ids.begin(), seed_ids.end(), id) == seed_ids.end())
            acquirable.push_back(id);

    const std::size_t steps = std::min(max_prefix - seed_ids.size(), acquirable.size());
    SelectionRequest req;
    req.kernel = &view;
    req.pool_ids = acquirable;
    req.conditioning_ids = seed_ids;
    req.batch = static_cast<int>(steps);
    req.lambda = lambda;
    const SelectionResult picks = steps > 0 ? select_pv(req) : SelectionResult{};

    PrefixReplay out;
    std::vector<std::string> prefix = seed_ids;
    out.prefixes.push_back(prefix);
    for (const auto& id : picks.chosen) {
        prefix.push_back(id);
        out.prefixes.push_back(prefix);
    }

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < out.prefixes.size(); ++k) {
        const ResidualGPFit fit =
            fit_residual_gp(features, base_predictions, labels, out.prefixes[k], lambda, eps);
        double nll = 0.0;
        for (const auto& vid : validation_ids) {
            const double b = lookup(base_predictions, vid, "base prediction");
            const GPPrediction pred = predict(fit, features, b, vid);
            nll += gaussian_nll(lookup(labels, vid, "label"), pred.mean, pred.variance);
        }
        nll /= static_cast<double>(validation_ids.size());
        out.validation_nll.push_back(nll);
        if (nll < best) {
            best = nll;
            out.best_index = k;
        }
    }
    return out;
}

namespace detail {
GPOracle residual_gp_oracle(const Eigen::MatrixXd& k_tt,
                            const Eigen::VectorXd& residuals,
                            double lambda) {
    GPOracle o;
    o.r_bar = residuals.mean();
    o.centered = residuals.array() - o.r_bar;
    Eigen::MatrixXd A = k_tt;
    A.diagonal().array() += lambda;
    o.inv = A.inverse();
    o.gamma_hat = o.centered.dot(o.inv * o.centered) / static_cast<double>(residuals.size());
    return o;
}
} // namespace detail

} // namespace poolforge
