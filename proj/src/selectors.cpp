#include "poolforge/selectors.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "poolforge/error.hpp"
#include "poolforge/rng.hpp"

namespace poolforge {

namespace {

struct IndexedRequest {
    std::vector<Eigen::Index> pool;        // kernel indices, pool order
    std::vector<Eigen::Index> conditioning;
};

IndexedRequest resolve(const SelectionRequest& req, bool need_kernel) {
    if (req.batch < 0)
        throw Error(errc::invalid_spec, "selection: batch must be >= 0");
    if (req.pool_ids.empty() && req.batch > 0)
        throw Error(errc::empty_pool, "selection: empty pool");
    if (static_cast<std::size_t>(req.batch) > req.pool_ids.size())
        throw Error(errc::batch_too_large, "selection: batch exceeds pool size");

    std::set<std::string> pool_set(req.pool_ids.begin(), req.pool_ids.end());
    if (pool_set.size() != req.pool_ids.size())
        throw Error(errc::duplicate_id, "selection: duplicate pool ids");
    for (const auto& id : req.conditioning_ids)
        if (pool_set.count(id))
            throw Error(errc::invalid_spec, "selection: pool and conditioning overlap at " + id);

    IndexedRequest out;
    if (!need_kernel) return out;
    if (req.kernel == nullptr)
        throw Error(errc::invalid_spec, "selection: kernel required");
    auto find = [&](const std::string& id) {
        auto it = std::find(req.kernel->ids.begin(), req.kernel->ids.end(), id);
        if (it == req.kernel->ids.end())
            throw Error(errc::unknown_id, "selection: id not in kernel: " + id);
        return static_cast<Eigen::Index>(it - req.kernel->ids.begin());
    };
    for (const auto& id : req.pool_ids) out.pool.push_back(find(id));
    for (const auto& id : req.conditioning_ids) out.conditioning.push_back(find(id));
    return out;
}

// Argmax over alive candidates with lowest-id tie break.
template <typename ScoreFn>
std::ptrdiff_t argmax_alive(const std::vector<std::string>& ids,
                            const std::vector<bool>& alive, ScoreFn score) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!alive[i]) continue;
        if (best < 0 || score(i) > score(best) ||
            (score(i) == score(best) && ids[i] < ids[best]))
            best = static_cast<std::ptrdiff_t>(i);
    }
    return best;
}

SelectionResult run_pv(const SelectionRequest& req, const IndexedRequest& idx,
                       double lambda) {
    const auto& K = req.kernel->gram;
    const auto n = static_cast<Eigen::Index>(idx.pool.size());
    const auto m0 = static_cast<Eigen::Index>(idx.conditioning.size());
    const Eigen::Index mcap = m0 + req.batch;

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(mcap, mcap);
    Eigen::MatrixXd V(mcap, n); // column x holds L^{-1} k_C(x), grown per step
    Eigen::VectorXd sigma2(n);
    std::vector<Eigen::Index> cond = idx.conditioning; // grows with picks

    if (m0 > 0) {
        Eigen::MatrixXd Kcc(m0, m0);
        for (Eigen::Index i = 0; i < m0; ++i)
            for (Eigen::Index j = 0; j < m0; ++j)
                Kcc(i, j) = K(idx.conditioning[i], idx.conditioning[j]);
        Kcc.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(Kcc);
        if (llt.info() != Eigen::Success)
            throw Error(errc::singular_kernel, "select_pv: conditioning system not PD");
        L.topLeftCorner(m0, m0) = llt.matrixL();

        Eigen::MatrixXd Kcx(m0, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m0; ++i)
                Kcx(i, j) = K(idx.conditioning[i], idx.pool[j]);
        V.topRows(m0) =
            L.topLeftCorner(m0, m0).triangularView<Eigen::Lower>().solve(Kcx);
        for (Eigen::Index j = 0; j < n; ++j)
            sigma2(j) = K(idx.pool[j], idx.pool[j]) - V.col(j).head(m0).squaredNorm();
    } else {
        for (Eigen::Index j = 0; j < n; ++j)
            sigma2(j) = K(idx.pool[j], idx.pool[j]);
    }

    SelectionResult result;
    result.lambda_used = lambda;
    std::vector<bool> alive(idx.pool.size(), true);
    Eigen::Index m = m0;

    for (int b = 0; b < req.batch; ++b) {
        const auto pick = argmax_alive(req.pool_ids, alive,
                                       [&](std::size_t i) { return std::max(sigma2(static_cast<Eigen::Index>(i)), 0.0); });
        const auto pi = static_cast<Eigen::Index>(pick);
        result.chosen.push_back(req.pool_ids[pick]);
        result.scores.push_back(std::max(sigma2(pi), 0.0));
        alive[pick] = false;

        if (b + 1 == req.batch) break;

        // Extend the Cholesky factor by the picked point. Its partial solve
        // column is exactly the new off-diagonal row, and the new pivot is
        // sigma^2 + lambda.
        const double d2 = sigma2(pi) + lambda;
        if (!(d2 > 0.0) || !std::isfinite(d2))
            throw Error(errc::singular_kernel, "select_pv: singular extension pivot");
        const double d = std::sqrt(d2);
        L.row(m).head(m) = V.col(pi).head(m).transpose();
        L(m, m) = d;

        const Eigen::Index zk = idx.pool[pi];
#pragma omp parallel for schedule(static)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!alive[static_cast<std::size_t>(j)]) continue;
            const double e =
                (K(zk, idx.pool[j]) - V.col(pi).head(m).dot(V.col(j).head(m))) / d;
            V(m, j) = e;
            sigma2(j) -= e * e;
        }
        cond.push_back(zk);
        ++m;
    }
    return result;
}

// Shared LCMD/k-center assignment state.
struct Assignment {
    std::vector<double> d2;       // per candidate, to its centre (LCMD) or min (kc)
    std::vector<int> center;      // per candidate, centre position (LCMD only)
};

SelectionResult run_coverage(const SelectionRequest& req, const IndexedRequest& idx,
                             bool lcmd, bool incremental) {
    const auto& view = *req.kernel;
    const std::size_t n = idx.pool.size();
    SelectionResult result;
    result.lambda_used = req.lambda;

    std::vector<Eigen::Index> centers = idx.conditioning; // positions 0..
    std::vector<bool> alive(n, true);
    Assignment asg;
    asg.d2.assign(n, std::numeric_limits<double>::infinity());
    asg.center.assign(n, -1);

    auto assign_all = [&]() {
        for (std::size_t x = 0; x < n; ++x) {
            if (!alive[x]) continue;
            double best = std::numeric_limits<double>::infinity();
            int bc = -1;
            for (std::size_t c = 0; c < centers.size(); ++c) {
                const double d2 = kernel_distance_sq(view, static_cast<std::size_t>(idx.pool[x]),
                                                     static_cast<std::size_t>(centers[c]));
                if (d2 < best) { best = d2; bc = static_cast<int>(c); }
            }
            asg.d2[x] = best;
            asg.center[x] = bc;
        }
    };
    auto assign_incremental = [&](std::size_t new_center_pos) {
        const Eigen::Index z = centers[new_center_pos];
        for (std::size_t x = 0; x < n; ++x) {
            if (!alive[x]) continue;
            const double d2 = kernel_distance_sq(view, static_cast<std::size_t>(idx.pool[x]),
                                                 static_cast<std::size_t>(z));
            if (d2 < asg.d2[x]) {
                asg.d2[x] = d2;
                asg.center[x] = static_cast<int>(new_center_pos);
            }
        }
    };

    if (!centers.empty()) assign_all();

    for (int b = 0; b < req.batch; ++b) {
        std::ptrdiff_t pick;
        double pick_score;
        if (centers.empty()) {
            // Cold start: variance before conditioning, i.e. self-similarity.
            pick = argmax_alive(req.pool_ids, alive, [&](std::size_t i) {
                return view.diag(idx.pool[i]);
            });
            pick_score = view.diag(idx.pool[pick]);
        } else if (!lcmd) {
            pick = argmax_alive(req.pool_ids, alive, [&](std::size_t i) { return asg.d2[i]; });
            pick_score = asg.d2[pick];
        } else {
            // Cluster masses over centres that actually own candidates.
            std::vector<double> mass(centers.size(), 0.0);
            std::vector<bool> occupied(centers.size(), false);
            for (std::size_t x = 0; x < n; ++x) {
                if (!alive[x]) continue;
                mass[asg.center[x]] += asg.d2[x];
                occupied[asg.center[x]] = true;
            }
            int cstar = -1;
            for (std::size_t c = 0; c < centers.size(); ++c) {
                if (!occupied[c]) continue;
                if (cstar < 0 || mass[c] > mass[cstar]) cstar = static_cast<int>(c);
            }
            pick = argmax_alive(req.pool_ids, alive, [&](std::size_t i) {
                return asg.center[i] == cstar ? asg.d2[i]
                                              : -std::numeric_limits<double>::infinity();
            });
            pick_score = asg.d2[pick];
        }

        result.chosen.push_back(req.pool_ids[pick]);
        result.scores.push_back(pick_score);
        alive[pick] = false;
        centers.push_back(idx.pool[pick]);
        if (incremental) assign_incremental(centers.size() - 1);
        else assign_all();
    }
    return result;
}

} // namespace

SelectionResult select_pv(const SelectionRequest& req) {
    const auto idx = resolve(req, true);
    try {
        return run_pv(req, idx, req.lambda);
    } catch (const Error& e) {
        if (e.code() != std::string(errc::singular_kernel)) throw;
        // Jitter retry once with an inflated ridge, flagged in the result.
        const double jitter = std::max(req.lambda, 1e-8) * 10.0;
        SelectionResult r = run_pv(req, idx, jitter);
        r.jitter_applied = true;
        return r;
    }
}

SelectionResult select_lcmd(const SelectionRequest& req) {
    const auto idx = resolve(req, true);
    return run_coverage(req, idx, true, true);
}

SelectionResult select_kcenter(const SelectionRequest& req) {
    const auto idx = resolve(req, true);
    return run_coverage(req, idx, false, true);
}

SelectionResult select_topk_score(const std::vector<std::string>& pool_ids,
                                  const std::vector<double>& scores,
                                  int batch) {
    if (scores.size() != pool_ids.size())
        throw Error(errc::dimension_mismatch, "select_topk_score: score/id length mismatch");
    if (batch < 0 || static_cast<std::size_t>(batch) > pool_ids.size())
        throw Error(errc::batch_too_large, "select_topk_score: batch exceeds pool size");
    for (double s : scores)
        if (!std::isfinite(s))
            throw Error(errc::invalid_spec, "select_topk_score: non-finite score");

    std::vector<std::size_t> order(pool_ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return pool_ids[a] < pool_ids[b];
    });

    SelectionResult result;
    for (int k = 0; k < batch; ++k) {
        result.chosen.push_back(pool_ids[order[k]]);
        result.scores.push_back(scores[order[k]]);
    }
    return result;
}

SelectionResult select_random(const std::vector<std::string>& pool_ids,
                              int batch,
                              std::uint64_t seed) {
    if (batch < 0 || static_cast<std::size_t>(batch) > pool_ids.size())
        throw Error(errc::batch_too_large, "select_random: batch exceeds pool size");
    std::vector<std::string> pool = pool_ids;
    auto rng = make_rng(seed, "select");
    SelectionResult result;
    for (int k = 0; k < batch; ++k) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t i = pick(rng);
        result.chosen.push_back(pool[i]);
        result.scores.push_back(0.0);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return result;
}

namespace detail {

SelectionResult select_pv_reference(const SelectionRequest& req) {
    const auto idx = resolve(req, true);
    const auto& K = req.kernel->gram;

    std::vector<Eigen::Index> cond = idx.conditioning;
    std::vector<bool> alive(idx.pool.size(), true);
    SelectionResult result;
    result.lambda_used = req.lambda;

    for (int b = 0; b < req.batch; ++b) {
        const auto m = static_cast<Eigen::Index>(cond.size());
        Eigen::VectorXd sigma2(static_cast<Eigen::Index>(idx.pool.size()));
        Eigen::LLT<Eigen::MatrixXd> llt;
        if (m > 0) {
            Eigen::MatrixXd Kcc(m, m);
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < m; ++j) Kcc(i, j) = K(cond[i], cond[j]);
            Kcc.diagonal().array() += req.lambda;
            llt.compute(Kcc);
            if (llt.info() != Eigen::Success)
                throw Error(errc::singular_kernel, "select_pv_reference: not PD");
        }
        for (std::size_t x = 0; x < idx.pool.size(); ++x) {
            const Eigen::Index px = idx.pool[x];
            double s2 = K(px, px);
            if (m > 0) {
                Eigen::VectorXd kx(m);
                for (Eigen::Index i = 0; i < m; ++i) kx(i) = K(cond[i], px);
                s2 -= kx.dot(llt.solve(kx));
            }
            sigma2(static_cast<Eigen::Index>(x)) = s2;
        }
        const auto pick = argmax_alive(req.pool_ids, alive, [&](std::size_t i) {
            return std::max(sigma2(static_cast<Eigen::Index>(i)), 0.0);
        });
        result.chosen.push_back(req.pool_ids[pick]);
        result.scores.push_back(std::max(sigma2(static_cast<Eigen::Index>(pick)), 0.0));
        alive[pick] = false;
        cond.push_back(idx.pool[pick]);
    }
    return result;
}

SelectionResult select_lcmd_reference(const SelectionRequest& req) {
    const auto idx = resolve(req, true);
    return run_coverage(req, idx, true, false);
}

SelectionResult select_kcenter_reference(const SelectionRequest& req) {
    const auto idx = resolve(req, true);
    return run_coverage(req, idx, false, false);
}

} // namespace detail

} // namespace poolforge
