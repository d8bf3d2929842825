#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "poolforge/error.hpp"
#include "poolforge/residual_gp.hpp"

using namespace poolforge;

namespace {

struct Problem {
    FeatureMatrix features;
    std::map<std::string, double> base;
    std::map<std::string, double> labels;
    std::vector<std::string> train_ids;
    std::vector<std::string> held_out;
};

// Residuals are a smooth function of the (normalized) features plus noise,
// so a cosine-kernel GP can actually learn them.
Problem make_problem(unsigned seed, int n_train, int n_test, int dim,
                     double noise = 0.01) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal;
    Problem p;
    const int n = n_train + n_test;
    p.features.data.resize(n, dim);
    Eigen::VectorXd w(dim);
    for (int k = 0; k < dim; ++k) w(k) = normal(rng);
    for (int i = 0; i < n; ++i) {
        std::string id = "s" + std::to_string(i);
        p.features.ids.push_back(id);
        Eigen::VectorXd x(dim);
        for (int k = 0; k < dim; ++k) x(k) = normal(rng);
        p.features.data.row(i) = x;
        const double b = normal(rng);
        const double resid = std::sin(w.dot(x.normalized())) + noise * normal(rng);
        p.base[id] = b;
        p.labels[id] = b + resid;
        (i < n_train ? p.train_ids : p.held_out).push_back(id);
    }
    return p;
}

} // namespace

TEST_CASE("fit matches the explicit-inverse oracle") {
    for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto p = make_problem(seed, 12, 6, 4);
        const double lambda = 1e-3;
        const auto fit = fit_residual_gp(p.features, p.base, p.labels,
                                         p.train_ids, lambda);

        // oracle: build K_TT and residual vector by hand
        const int n = static_cast<int>(p.train_ids.size());
        FeatureMatrix train;
        train.ids = p.train_ids;
        train.data.resize(n, p.features.data.cols());
        Eigen::VectorXd r(n);
        for (int i = 0; i < n; ++i) {
            const auto idx = p.features.index_of(p.train_ids[i]);
            train.data.row(i) = p.features.data.row(idx);
            r(i) = p.labels.at(p.train_ids[i]) - p.base.at(p.train_ids[i]);
        }
        const auto k_tt = gram_matrix(train).gram;
        const auto oracle = detail::residual_gp_oracle(k_tt, r, lambda);

        CHECK(fit.r_bar == doctest::Approx(oracle.r_bar).epsilon(1e-12));
        CHECK(fit.gamma_hat == doctest::Approx(oracle.gamma_hat).epsilon(1e-10));

        // predictions on held-out points vs the oracle formulas
        for (const auto& id : p.held_out) {
            const auto idx = p.features.index_of(id);
            Eigen::VectorXd k_star(n);
            for (int i = 0; i < n; ++i)
                k_star(i) = cosine_kernel(p.features.data.row(idx), train.data.row(i));
            const double mu =
                oracle.r_bar + k_star.dot(oracle.inv * oracle.centered);
            const double kxx = cosine_kernel(p.features.data.row(idx),
                                             p.features.data.row(idx));
            const double s2 = kxx - k_star.dot(oracle.inv * k_star);
            const auto pred = predict(fit, p.features, p.base.at(id), id);
            CHECK(pred.mean == doctest::Approx(p.base.at(id) + mu).epsilon(1e-10));
            CHECK(pred.latent_s2 == doctest::Approx(s2).epsilon(1e-8));
            const double want_var =
                std::max(oracle.gamma_hat * s2, kPredictiveVarianceFloor);
            CHECK(pred.variance == doctest::Approx(want_var).epsilon(1e-8));
        }
    }
}

TEST_CASE("latent variance at a training point is near zero and bounded by lambda scale") {
    const auto p = make_problem(9, 15, 0, 3);
    const double lambda = 1e-3;
    const auto fit = fit_residual_gp(p.features, p.base, p.labels, p.train_ids, lambda);
    for (const auto& id : p.train_ids) {
        const auto pred = predict(fit, p.features, p.base.at(id), id);
        CHECK(pred.latent_s2 >= -1e-10);
        CHECK(pred.latent_s2 <= 10.0 * lambda);
        CHECK(pred.variance >= kPredictiveVarianceFloor);
    }
}

TEST_CASE("fit error handling") {
    const auto p = make_problem(2, 6, 2, 3);
    CHECK_THROWS_WITH_AS(fit_residual_gp(p.features, p.base, p.labels, {}),
                         doctest::Contains("EmptyInput"), Error);
    auto bad = p.train_ids;
    bad.push_back("missing");
    CHECK_THROWS_WITH_AS(fit_residual_gp(p.features, p.base, p.labels, bad),
                         doctest::Contains("UnknownId"), Error);
}

TEST_CASE("gaussian_nll hand values") {
    // standard normal at its mean: 0.5 log(2 pi) = 0.91893853320467267
    CHECK(gaussian_nll(0.0, 0.0, 1.0) == doctest::Approx(0.9189385332046727).epsilon(1e-12));
    CHECK(gaussian_nll(1.0, 0.0, 1.0) ==
          doctest::Approx(0.9189385332046727 + 0.5).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(gaussian_nll(0.0, 0.0, 0.0),
                         doctest::Contains("NonpositiveVariance"), Error);
}

TEST_CASE("inverse_normal_cdf against known quantiles") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK(inverse_normal_cdf(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-9));
    CHECK(inverse_normal_cdf(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-9));
    CHECK(inverse_normal_cdf(0.0013498980316300945) == doctest::Approx(-3.0).epsilon(1e-8));
    // round trip against erfc-based CDF
    for (double p : {1e-6, 1e-3, 0.1, 0.3, 0.7, 0.9, 0.999, 1 - 1e-6}) {
        const double z = inverse_normal_cdf(p);
        const double back = 0.5 * std::erfc(-z / std::sqrt(2.0));
        CHECK(back == doctest::Approx(p).epsilon(1e-9));
    }
    CHECK_THROWS_WITH_AS(inverse_normal_cdf(0.0), doctest::Contains("InvalidSpec"), Error);
    CHECK_THROWS_WITH_AS(inverse_normal_cdf(1.0), doctest::Contains("InvalidSpec"), Error);
}

TEST_CASE("calibration metrics on exactly-calibrated synthetic predictions") {
    std::mt19937 rng(77);
    std::normal_distribution<double> normal;
    std::vector<CalibrationPoint> pts;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        CalibrationPoint p;
        p.mean = normal(rng);
        p.variance = 0.5 + 2.0 * std::abs(normal(rng));
        p.y = p.mean + std::sqrt(p.variance) * normal(rng);
        pts.push_back(p);
    }
    const auto rep = calibration_metrics(pts);
    CHECK(rep.n_test == static_cast<std::size_t>(n));
    REQUIRE(rep.nominal_levels.size() == 19);
    CHECK(rep.nominal_levels.front() == doctest::Approx(0.05));
    CHECK(rep.nominal_levels.back() == doctest::Approx(0.95));
    for (std::size_t i = 0; i < 19; ++i)
        CHECK(rep.empirical_coverage[i] ==
              doctest::Approx(rep.nominal_levels[i]).epsilon(0.05));
    CHECK(rep.ece < 0.02);       // Monte Carlo: well calibrated by construction
    CHECK(rep.ence_valid);
    CHECK(rep.ence < 0.1);
}

TEST_CASE("calibration detects overconfidence and flags tiny samples") {
    std::mt19937 rng(78);
    std::normal_distribution<double> normal;
    std::vector<CalibrationPoint> pts;
    for (int i = 0; i < 5000; ++i) {
        CalibrationPoint p;
        p.mean = 0.0;
        p.variance = 1.0;
        p.y = 3.0 * normal(rng); // true spread 3x the claimed one
        pts.push_back(p);
    }
    const auto rep = calibration_metrics(pts);
    CHECK(rep.ece > 0.2);
    // coverage at every level falls short of nominal
    for (std::size_t i = 0; i < rep.nominal_levels.size(); ++i)
        CHECK(rep.empirical_coverage[i] < rep.nominal_levels[i]);

    const std::vector<CalibrationPoint> tiny(pts.begin(), pts.begin() + 5);
    const auto small_rep = calibration_metrics(tiny);
    CHECK_FALSE(small_rep.ence_valid);

    CHECK_THROWS_WITH_AS(calibration_metrics({}), doctest::Contains("EmptyInput"), Error);
}

TEST_CASE("calibration rmse hand value") {
    // errors {1, -2, 3, -4}: rmse = sqrt(30/4), mae = 2.5
    std::vector<CalibrationPoint> pts;
    const double errs[] = {1, -2, 3, -4};
    for (double e : errs) pts.push_back({e, 0.0, 1.0});
    const auto rep = calibration_metrics(pts);
    CHECK(rep.rmse == doctest::Approx(std::sqrt(7.5)).epsilon(1e-12));
    CHECK(rep.mae == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("replay_prefixes is nested and picks the NLL argmin") {
    // 40 pool, 4 seed, 20 validation
    const auto q = make_problem(22, 44, 20, 4);
    std::vector<std::string> seed_ids(q.train_ids.begin(), q.train_ids.begin() + 4);
    std::vector<std::string> pool_ids(q.train_ids.begin() + 4, q.train_ids.end());
    const auto rep = replay_prefixes(q.features, pool_ids, seed_ids, q.held_out,
                                     q.base, q.labels, 1e-3, 16);
    // max_prefix counts the whole conditioning set, seeds included:
    // prefix 0 = the 4 seeds only, then 12 greedy additions
    REQUIRE(rep.prefixes.size() == 13);
    REQUIRE(rep.validation_nll.size() == rep.prefixes.size());
    for (std::size_t i = 0; i + 1 < rep.prefixes.size(); ++i) {
        CHECK(rep.prefixes[i].size() + 1 == rep.prefixes[i + 1].size());
        // strict nesting: every id in prefix i appears in prefix i+1
        for (const auto& id : rep.prefixes[i]) {
            const auto& next = rep.prefixes[i + 1];
            CHECK(std::count(next.begin(), next.end(), id) == 1);
        }
    }
    double best = rep.validation_nll[rep.best_index];
    for (double v : rep.validation_nll) CHECK(best <= v);
    // with informative features, more data should beat the bare seed set
    CHECK(rep.best_index > 0);
}
