#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "poolforge/error.hpp"
#include "poolforge/metrics.hpp"

using namespace poolforge;

namespace {
Labels make_labels(double energy, std::vector<Vec3> forces = {}) {
    Labels l;
    l.energy = energy;
    l.forces = std::move(forces);
    return l;
}
} // namespace

TEST_CASE("error_metrics hand values") {
    std::map<std::string, Labels> pred, truth;
    // energy errors: +1, -2  ->  rmse sqrt(2.5), mae 1.5
    pred["a"] = make_labels(11.0, {{1, 0, 0}});
    truth["a"] = make_labels(10.0, {{0, 0, 0}});
    pred["b"] = make_labels(8.0, {{0, 2, 0}});
    truth["b"] = make_labels(10.0, {{0, 0, 0}});
    const auto m = error_metrics(pred, truth, {"a", "b"});
    CHECK(m.energy_rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK(m.energy_mae == doctest::Approx(1.5).epsilon(1e-12));
    // force components pooled over 6 entries: errors {1,0,0,0,2,0}
    CHECK(m.force_rmse == doctest::Approx(std::sqrt(5.0 / 6.0)).epsilon(1e-12));
    CHECK(m.force_mae == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("error_metrics validation") {
    std::map<std::string, Labels> pred, truth;
    pred["a"] = make_labels(1.0, {{0, 0, 0}});
    truth["a"] = make_labels(1.0, {{0, 0, 0}, {0, 0, 0}});
    CHECK_THROWS_WITH_AS(error_metrics(pred, truth, {"a"}),
                         doctest::Contains("MisalignedIds"), Error);
    CHECK_THROWS_WITH_AS(error_metrics(pred, truth, {"zz"}),
                         doctest::Contains("MisalignedIds"), Error);
    CHECK_THROWS_WITH_AS(error_metrics(pred, truth, {}),
                         doctest::Contains("EmptyInput"), Error);
}

TEST_CASE("auc is the discrete sum") {
    CHECK(auc({2, 2, 2}) == doctest::Approx(6.0));
    CHECK(auc({1.5}) == doctest::Approx(1.5));
    CHECK(auc({3, 1, 0.5, 0.25}) == doctest::Approx(4.75));
    CHECK_THROWS_WITH_AS(auc({}), doctest::Contains("EmptyCurve"), Error);
}

TEST_CASE("round_gain hand values") {
    // method reaches the shared target at round 4, random at round 18:
    // 100 * (18 - 4) / 18 = +77.78%
    std::vector<double> method(20, 10.0), random(20, 10.0);
    for (std::size_t r = 4; r < method.size(); ++r) method[r] = 1.0;
    for (std::size_t r = 18; r < random.size(); ++r) random[r] = 1.0;
    CHECK(round_gain(method, random) == doctest::Approx(100.0 * 14.0 / 18.0).epsilon(1e-12));
    // symmetric case: method slower -> negative
    CHECK(round_gain(random, method) == doctest::Approx(-100.0 * 14.0 / 4.0).epsilon(1e-12));
    // identical curves -> 0
    CHECK(round_gain(method, method) == doctest::Approx(0.0));
}

TEST_CASE("round_gain degenerate cases") {
    // both reach the target immediately at round 0
    CHECK(round_gain({1, 1}, {1, 2}) == doctest::Approx(0.0));
    // random reaches at 0 but method later: fallback denominator 1
    CHECK(round_gain({2, 1}, {1, 1}) == doctest::Approx(-100.0));
    CHECK_THROWS_WITH_AS(round_gain({}, {1.0}), doctest::Contains("NoSharedTarget"), Error);
}

TEST_CASE("round_gain uses the best value reached by both curves") {
    // method bottoms out at 0.5 (random never reaches it); target is
    // max(min(method), min(random)) = 1.0, which method hits at round 1,
    // random at round 3: gain = 100 * 2/3
    const std::vector<double> method{5, 1, 0.5, 0.5};
    const std::vector<double> random{5, 4, 2, 1};
    CHECK(round_gain(method, random) == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("spearman hand values") {
    const auto r = spearman({1, 2, 3}, {3, 1, 2});
    CHECK(r.rho == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK_FALSE(r.degenerate);

    const auto perfect = spearman({1, 2, 3, 4}, {10, 20, 30, 40});
    CHECK(perfect.rho == doctest::Approx(1.0));
    const auto inverse = spearman({1, 2, 3, 4}, {8, 6, 4, 2});
    CHECK(inverse.rho == doctest::Approx(-1.0));

    // monotone-transform invariance
    const auto a = spearman({0.1, 0.7, 0.3, 0.9}, {1, 4, 2, 8});
    const auto b = spearman({1, 3, 2, 4}, {0, 3, 1, 7});
    CHECK(a.rho == doctest::Approx(b.rho).epsilon(1e-12));
}

TEST_CASE("spearman ties use average ranks") {
    // x = (1, 1, 2), average ranks (1.5, 1.5, 3); y = (1, 2, 3) ranks (1,2,3)
    // pearson of ranks = sqrt(3)/2
    const auto r = spearman({1, 1, 2}, {1, 2, 3});
    CHECK(r.rho == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("spearman degenerate inputs") {
    const auto c = spearman({5, 5, 5}, {1, 2, 3});
    CHECK(c.degenerate);
    CHECK(c.rho == 0.0);
    CHECK_THROWS_WITH_AS(spearman({1}, {1, 2}), doctest::Contains("InvalidSpec"), Error);
    CHECK_THROWS_WITH_AS(spearman({}, {}), doctest::Contains("InvalidSpec"), Error);
}
