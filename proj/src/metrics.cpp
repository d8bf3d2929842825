#include "poolforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poolforge/error.hpp"

namespace poolforge {

ErrorMetrics error_metrics(const std::map<std::string, Labels>& predictions,
                           const std::map<std::string, Labels>& labels,
                           const std::vector<std::string>& ids) {
    if (ids.empty()) throw Error(errc::empty_input, "error_metrics: no ids");

    double e_se = 0.0, e_ae = 0.0, f_se = 0.0, f_ae = 0.0;
    std::size_t n_components = 0;
    for (const auto& id : ids) {
        auto pit = predictions.find(id);
        auto lit = labels.find(id);
        if (pit == predictions.end() || lit == labels.end())
            throw Error(errc::misaligned_ids, "error_metrics: id not in both sets: " + id);
        const auto& p = pit->second;
        const auto& l = lit->second;
        if (p.forces.size() != l.forces.size())
            throw Error(errc::misaligned_ids, "error_metrics: force count mismatch for " + id);
        const double de = p.energy - l.energy;
        e_se += de * de;
        e_ae += std::abs(de);
        for (std::size_t i = 0; i < p.forces.size(); ++i)
            for (int a = 0; a < 3; ++a) {
                const double df = p.forces[i][a] - l.forces[i][a];
                f_se += df * df;
                f_ae += std::abs(df);
                ++n_components;
            }
    }
    const double n = static_cast<double>(ids.size());
    ErrorMetrics m;
    m.energy_rmse = std::sqrt(e_se / n);
    m.energy_mae = e_ae / n;
    if (n_components > 0) {
        const double nc = static_cast<double>(n_components);
        m.force_rmse = std::sqrt(f_se / nc);
        m.force_mae = f_ae / nc;
    }
    return m;
}

double auc(const std::vector<double>& curve) {
    if (curve.empty()) throw Error(errc::empty_curve, "auc: empty curve");
    return std::accumulate(curve.begin(), curve.end(), 0.0);
}

double round_gain(const std::vector<double>& method_curve,
                  const std::vector<double>& random_curve) {
    if (method_curve.empty() || random_curve.empty() ||
        method_curve.size() != random_curve.size())
        throw Error(errc::no_shared_target, "round_gain: curves empty or length mismatch");

    const double target = std::max(*std::min_element(method_curve.begin(), method_curve.end()),
                                   *std::min_element(random_curve.begin(), random_curve.end()));
    auto first_at = [&](const std::vector<double>& c) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < c.size(); ++i)
            if (c[i] <= target) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };
    const auto r_m = first_at(method_curve);
    const auto r_r = first_at(random_curve);
    if (r_m < 0 || r_r < 0)
        throw Error(errc::no_shared_target, "round_gain: a curve never reaches the target");
    if (r_r == 0 && r_m == 0) return 0.0;
    // r_r == 0 with a later method round: fall back to a unit denominator so
    // the sign convention is preserved.
    const double denom = r_r > 0 ? static_cast<double>(r_r) : 1.0;
    return 100.0 * static_cast<double>(r_r - r_m) / denom;
}

namespace {
std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0; // 1-based average rank
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}
} // namespace

SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw Error(errc::invalid_spec, "spearman: need equal lengths >= 2");
    const bool const_a = std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; });
    const bool const_b = std::all_of(b.begin(), b.end(), [&](double x) { return x == b[0]; });
    if (const_a || const_b) return {0.0, true};

    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) { ma += ra[i]; mb += rb[i]; }
    ma /= n; mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return {cov / std::sqrt(va * vb), false};
}

} // namespace poolforge
