#include "poolforge/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "poolforge/dual.hpp"
#include "poolforge/error.hpp"
#include "poolforge/rng.hpp"

namespace poolforge {

namespace {

// Flat parameter layout: embed (z_max*c row-major), then per hidden layer
// W (h x in, row-major) and b (h), then readout w (h) and bias (1).
struct ParamLayout {
    int z_max, c, n_rbf, h, layers;
    std::vector<int> w_off, b_off, in_dim;
    int out_w_off = 0, out_b_off = 0, total = 0;

    explicit ParamLayout(const SurrogateConfig& cfg)
        : z_max(cfg.z_max), c(cfg.embed_channels), n_rbf(cfg.n_rbf),
          h(cfg.hidden_width), layers(cfg.hidden_layers) {
        int off = z_max * c;
        for (int l = 0; l < layers; ++l) {
            const int in = (l == 0) ? c + n_rbf : h;
            in_dim.push_back(in);
            w_off.push_back(off); off += h * in;
            b_off.push_back(off); off += h;
        }
        out_w_off = off; off += h;
        out_b_off = off; off += 1;
        total = off;
    }
};

double rbf_center(const SurrogateConfig& cfg, int k) {
    return cfg.cutoff * (k + 1.0) / cfg.n_rbf;
}
double rbf_width(const SurrogateConfig& cfg) { return cfg.cutoff / cfg.n_rbf; }

// Everything the different extractors need from one structure evaluation.
template <typename T>
struct PassOut {
    T energy{};
    std::vector<T> param_grad;            // dE/dtheta, full layout
    std::vector<std::array<T, 3>> coord_grad; // dE/dr_i
    std::vector<std::vector<double>> layer_means; // atom-mean activations per layer
};

// Forward + reverse pass, templated on the coordinate scalar so the same code
// yields plain gradients (T = double) and directional second derivatives
// (T = Dual). Parameters stay double; mixing promotes intermediates to T.
template <typename T>
void forward_backward(const SurrogateConfig& cfg, const ParamLayout& lay,
                      const Eigen::VectorXd& params, const Structure& s,
                      const std::vector<std::array<T, 3>>& coords,
                      bool want_param_grad, bool want_coord_grad,
                      bool want_activations, PassOut<T>& out) {
    using std::exp; using std::sqrt; using std::tanh; using std::cos;

    const int n = s.atom_count();
    for (int z : s.species)
        if (z < 0 || z >= cfg.z_max)
            throw Error(errc::unknown_species,
                        "species " + std::to_string(z) + " outside z_max=" +
                            std::to_string(cfg.z_max));

    const int in0 = cfg.embed_channels + cfg.n_rbf;
    const double sigma = rbf_width(cfg);

    // Smooth neighbour featurization: g_i[k] = sum_j rbf_k(d_ij) * env(d_ij).
    std::vector<std::vector<T>> g(n, std::vector<T>(cfg.n_rbf, T(0.0)));
    struct PairGeom { int i, j; T d; std::array<T, 3> diff; };
    std::vector<PairGeom> pairs;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            std::array<T, 3> diff{coords[i][0] - coords[j][0],
                                  coords[i][1] - coords[j][1],
                                  coords[i][2] - coords[j][2]};
            T d2 = diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2];
            T d = sqrt(d2);
            if (value_of(d) >= cfg.cutoff) continue;
            T env = T(0.5) * (cos(T(M_PI / cfg.cutoff) * d) + T(1.0));
            for (int k = 0; k < cfg.n_rbf; ++k) {
                T u = (d - T(rbf_center(cfg, k))) / T(sigma);
                T val = exp(-(u * u)) * env;
                g[i][k] += val;
                g[j][k] += val;
            }
            if (want_coord_grad) pairs.push_back({i, j, d, diff});
        }
    }

    // Per-atom MLP forward, keeping activations for the backward pass.
    std::vector<std::vector<T>> inputs(n);
    std::vector<std::vector<std::vector<T>>> acts(n); // acts[i][l] = h^(l)
    out.energy = T(params(lay.out_b_off) * n);
    for (int i = 0; i < n; ++i) {
        auto& u = inputs[i];
        u.resize(in0);
        const int erow = lay.z_max > 0 ? s.species[i] * lay.c : 0;
        for (int k = 0; k < lay.c; ++k) u[k] = T(params(erow + k));
        for (int k = 0; k < cfg.n_rbf; ++k) u[lay.c + k] = g[i][k];

        acts[i].resize(lay.layers);
        const std::vector<T>* prev = &u;
        for (int l = 0; l < lay.layers; ++l) {
            auto& hv = acts[i][l];
            hv.resize(lay.h);
            const int in = lay.in_dim[l];
            for (int r = 0; r < lay.h; ++r) {
                T a = T(params(lay.b_off[l] + r));
                const int wrow = lay.w_off[l] + r * in;
                for (int k = 0; k < in; ++k) a += T(params(wrow + k)) * (*prev)[k];
                hv[r] = tanh(a);
            }
            prev = &hv;
        }
        T e = T(0.0);
        for (int r = 0; r < lay.h; ++r) e += T(params(lay.out_w_off + r)) * acts[i][lay.layers - 1][r];
        out.energy += e;
    }

    if (want_activations) {
        out.layer_means.assign(lay.layers, std::vector<double>(lay.h, 0.0));
        for (int l = 0; l < lay.layers; ++l)
            for (int r = 0; r < lay.h; ++r) {
                double m = 0.0;
                for (int i = 0; i < n; ++i) m += value_of(acts[i][l][r]);
                out.layer_means[l][r] = m / n;
            }
    }

    if (!want_param_grad && !want_coord_grad) return;

    if (want_param_grad) out.param_grad.assign(lay.total, T(0.0));
    std::vector<std::vector<T>> dE_dg;
    if (want_coord_grad) dE_dg.assign(n, std::vector<T>(cfg.n_rbf, T(0.0)));

    std::vector<T> delta(lay.h), delta_prev;
    for (int i = 0; i < n; ++i) {
        // Readout layer: dE/dh_last = w_out.
        const auto& last = acts[i][lay.layers - 1];
        for (int r = 0; r < lay.h; ++r)
            delta[r] = (T(1.0) - last[r] * last[r]) * T(params(lay.out_w_off + r));
        if (want_param_grad) {
            for (int r = 0; r < lay.h; ++r) out.param_grad[lay.out_w_off + r] += last[r];
            out.param_grad[lay.out_b_off] += T(1.0);
        }
        for (int l = lay.layers - 1; l >= 0; --l) {
            const int in = lay.in_dim[l];
            const std::vector<T>& below = (l == 0) ? inputs[i] : acts[i][l - 1];
            if (want_param_grad) {
                for (int r = 0; r < lay.h; ++r) {
                    const int wrow = lay.w_off[l] + r * in;
                    for (int k = 0; k < in; ++k) out.param_grad[wrow + k] += delta[r] * below[k];
                    out.param_grad[lay.b_off[l] + r] += delta[r];
                }
            }
            // dE/d(below)
            delta_prev.assign(in, T(0.0));
            for (int r = 0; r < lay.h; ++r) {
                const int wrow = lay.w_off[l] + r * in;
                for (int k = 0; k < in; ++k) delta_prev[k] += T(params(wrow + k)) * delta[r];
            }
            if (l == 0) {
                if (want_param_grad) {
                    const int erow = s.species[i] * lay.c;
                    for (int k = 0; k < lay.c; ++k) out.param_grad[erow + k] += delta_prev[k];
                }
                if (want_coord_grad)
                    for (int k = 0; k < cfg.n_rbf; ++k) dE_dg[i][k] = delta_prev[lay.c + k];
            } else {
                delta.resize(lay.h);
                for (int r = 0; r < lay.h; ++r)
                    delta[r] = (T(1.0) - acts[i][l - 1][r] * acts[i][l - 1][r]) * delta_prev[r];
            }
        }
    }

    if (want_coord_grad) {
        using std::sin;
        out.coord_grad.assign(n, {T(0.0), T(0.0), T(0.0)});
        for (const auto& p : pairs) {
            // dE/dd for the shared distance of pair (i, j).
            T env = T(0.5) * (cos(T(M_PI / cfg.cutoff) * p.d) + T(1.0));
            T denv = T(-0.5 * M_PI / cfg.cutoff) * sin(T(M_PI / cfg.cutoff) * p.d);
            T dE_dd = T(0.0);
            for (int k = 0; k < cfg.n_rbf; ++k) {
                T u = (p.d - T(rbf_center(cfg, k))) / T(sigma);
                T e = exp(-(u * u));
                T dphi = e * (T(-2.0 / sigma) * u * env + denv);
                dE_dd += (dE_dg[p.i][k] + dE_dg[p.j][k]) * dphi;
            }
            for (int a = 0; a < 3; ++a) {
                T gcomp = dE_dd * p.diff[a] / p.d;
                out.coord_grad[p.i][a] += gcomp;
                out.coord_grad[p.j][a] -= gcomp;
            }
        }
    }
}

template <typename T>
std::vector<std::array<T, 3>> as_coords(const Structure& s) {
    std::vector<std::array<T, 3>> out(s.coords.size());
    for (std::size_t i = 0; i < s.coords.size(); ++i)
        for (int a = 0; a < 3; ++a) out[i][a] = T(s.coords[i][a]);
    return out;
}

double huber(double x, double delta) {
    const double ax = std::abs(x);
    return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
}
double huber_grad(double x, double delta) {
    if (x > delta) return delta;
    if (x < -delta) return -delta;
    return x;
}

struct TrainExample {
    const Structure* structure;
    const Labels* labels;
};

std::vector<TrainExample> resolve_examples(const StructureStore& structures,
                                           const LabeledSet& labeled) {
    if (labeled.entries.empty())
        throw Error(errc::empty_training_set, "train: labelled set is empty");
    std::vector<TrainExample> out;
    out.reserve(labeled.size());
    for (const auto& e : labeled.entries) {
        auto it = structures.find(e.id);
        if (it == structures.end())
            throw Error(errc::unknown_id, "train: no structure for id " + e.id);
        validate_labels(it->second, e.labels);
        out.push_back({&it->second, &e.labels});
    }
    return out;
}

// Loss value and parameter gradient for one structure. The force term needs
// mixed second derivatives d^2 E / (dtheta dr); a Dual-coordinate pass seeded
// with the per-component Huber gradients delivers them exactly.
double example_loss_grad(const SurrogateConfig& cfg, const ParamLayout& lay,
                         const Eigen::VectorXd& params, const TrainExample& ex,
                         const TrainConfig& tc, Eigen::VectorXd* grad) {
    const Structure& s = *ex.structure;
    const int n = s.atom_count();

    PassOut<double> base;
    forward_backward(cfg, lay, params, s, as_coords<double>(s),
                     grad != nullptr, true, false, base);

    const double e_err = base.energy - ex.labels->energy;
    double loss = tc.w_energy * huber(e_err, tc.huber_delta);

    // Forces F = -dE/dr; force loss averaged over the 3n components.
    // Energy-only examples (no force labels) contribute no force term.
    const bool has_forces = !ex.labels->forces.empty();
    const double fscale = tc.w_force / (3.0 * n);
    std::vector<std::array<double, 3>> v(n, {0.0, 0.0, 0.0});
    if (has_forces)
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) {
                const double f_err = -base.coord_grad[i][a] - ex.labels->forces[i][a];
                loss += fscale * huber(f_err, tc.huber_delta);
                v[i][a] = fscale * huber_grad(f_err, tc.huber_delta);
            }

    if (grad) {
        const double ecoef = tc.w_energy * huber_grad(e_err, tc.huber_delta);
        for (int k = 0; k < lay.total; ++k) (*grad)(k) += ecoef * base.param_grad[k];
        if (!has_forces) return loss;

        std::vector<std::array<Dual, 3>> dual_coords(n);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) dual_coords[i][a] = Dual(s.coords[i][a], v[i][a]);
        PassOut<Dual> mixed;
        forward_backward(cfg, lay, params, s, dual_coords, true, false, false, mixed);
        // dL_F/dtheta = -d/deps grad_theta E(r + eps*v).
        for (int k = 0; k < lay.total; ++k) (*grad)(k) -= mixed.param_grad[k].dot;
    }
    return loss;
}

} // namespace

Schedule dynamic_schedule(std::size_t labeled_size) {
    Schedule sch;
    const auto t = labeled_size;
    if (t <= 20) { sch.batch = 1; sch.lr = 1e-3; }
    else if (t <= 100) { sch.batch = 2; sch.lr = 5e-3; }
    else { sch.batch = 4; sch.lr = 5e-3; }
    sch.epochs = std::max<long long>(
        10, (1000LL * sch.batch + static_cast<long long>(t) - 1) / static_cast<long long>(t));
    return sch;
}

SurrogateModel SurrogateModel::init(const SurrogateConfig& config, std::uint64_t seed) {
    SurrogateModel m;
    m.config_ = config;
    m.rng_seed_ = seed;
    const ParamLayout lay(config);
    m.params_.resize(lay.total);
    auto rng = make_rng(seed, "init");
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < lay.z_max * lay.c; ++k) m.params_(k) = 0.5 * normal(rng);
    for (int l = 0; l < lay.layers; ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(lay.in_dim[l]));
        for (int k = 0; k < lay.h * lay.in_dim[l]; ++k)
            m.params_(lay.w_off[l] + k) = scale * normal(rng);
        for (int k = 0; k < lay.h; ++k) m.params_(lay.b_off[l] + k) = 0.0;
    }
    const double rscale = 1.0 / std::sqrt(static_cast<double>(lay.h));
    for (int k = 0; k < lay.h; ++k) m.params_(lay.out_w_off + k) = rscale * normal(rng);
    m.params_(lay.out_b_off) = 0.0;
    return m;
}

void SurrogateModel::set_parameters(Eigen::VectorXd p) {
    const ParamLayout lay(config_);
    if (p.size() != lay.total)
        throw Error(errc::dimension_mismatch, "set_parameters: wrong parameter count");
    params_ = std::move(p);
}

double SurrogateModel::energy(const Structure& s) const {
    validate_structure(s);
    const ParamLayout lay(config_);
    PassOut<double> out;
    forward_backward(config_, lay, params_, s, as_coords<double>(s), false, false, false, out);
    return out.energy;
}

std::vector<Vec3> SurrogateModel::forces(const Structure& s) const {
    validate_structure(s);
    const ParamLayout lay(config_);
    PassOut<double> out;
    forward_backward(config_, lay, params_, s, as_coords<double>(s), false, true, false, out);
    std::vector<Vec3> f(s.coords.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        for (int a = 0; a < 3; ++a) f[i][a] = -out.coord_grad[i][a];
    return f;
}

Eigen::VectorXd SurrogateModel::ntk_features(const Structure& s) const {
    validate_structure(s);
    const ParamLayout lay(config_);
    PassOut<double> out;
    forward_backward(config_, lay, params_, s, as_coords<double>(s), true, false, false, out);
    Eigen::VectorXd phi(lay.z_max * lay.c);
    for (int k = 0; k < lay.z_max * lay.c; ++k) phi(k) = out.param_grad[k];
    return phi;
}

Eigen::VectorXd SurrogateModel::activation_features(const Structure& s) const {
    validate_structure(s);
    const ParamLayout lay(config_);
    PassOut<double> out;
    forward_backward(config_, lay, params_, s, as_coords<double>(s), false, false, true, out);
    Eigen::VectorXd phi(lay.layers * lay.h);
    for (int l = 0; l < lay.layers; ++l)
        for (int r = 0; r < lay.h; ++r) phi(l * lay.h + r) = out.layer_means[l][r];
    return phi;
}

SurrogateModel train(const SurrogateModel& model,
                     const StructureStore& structures,
                     const LabeledSet& labeled,
                     const TrainConfig& config,
                     std::uint64_t seed) {
    const auto examples = resolve_examples(structures, labeled);
    const Schedule sch = config.dynamic_schedule
                             ? dynamic_schedule(examples.size())
                             : Schedule{config.fixed_batch, config.fixed_lr, config.fixed_epochs};

    SurrogateModel out = model;
    const ParamLayout lay(out.config());
    Eigen::VectorXd params = out.parameters();
    Eigen::VectorXd grad(lay.total);

    auto order_rng = make_rng(seed, "order");
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < sch.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (std::size_t start = 0; start < order.size(); start += sch.batch) {
            const std::size_t stop = std::min(order.size(), start + sch.batch);
            grad.setZero();
            for (std::size_t k = start; k < stop; ++k)
                example_loss_grad(out.config(), lay, params, examples[order[k]], config, &grad);
            params -= (sch.lr / static_cast<double>(stop - start)) * grad;
        }
    }
    out.set_parameters(std::move(params));
    return out;
}

double training_loss(const SurrogateModel& model,
                     const StructureStore& structures,
                     const LabeledSet& labeled,
                     const TrainConfig& config) {
    const auto examples = resolve_examples(structures, labeled);
    const ParamLayout lay(model.config());
    double total = 0.0;
    for (const auto& ex : examples)
        total += example_loss_grad(model.config(), lay, model.parameters(), ex, config, nullptr);
    return total / static_cast<double>(examples.size());
}

namespace detail {
LabeledSet bootstrap_resample(const LabeledSet& labeled, std::uint64_t seed) {
    if (labeled.entries.empty())
        throw Error(errc::empty_training_set, "bootstrap_resample: empty labelled set");
    auto rng = make_rng(seed, "bootstrap");
    std::uniform_int_distribution<std::size_t> pick(0, labeled.size() - 1);
    // |T|-sized resample with replacement; duplicate ids are deliberate, so
    // the id-unique invariant does not apply to the resulting entry list.
    LabeledSet resampled;
    for (std::size_t k = 0; k < labeled.size(); ++k)
        resampled.entries.push_back(labeled.entries[pick(rng)]);
    return resampled;
}
} // namespace detail

std::vector<SurrogateModel> spawn_committee(const SurrogateModel& base,
                                            const StructureStore& structures,
                                            const LabeledSet& labeled,
                                            const CommitteeSpec& spec,
                                            const TrainConfig& config) {
    if (spec.size < 2)
        throw Error(errc::invalid_spec, "committee size must be >= 2");
    if (static_cast<int>(spec.member_seeds.size()) != spec.size)
        throw Error(errc::invalid_spec, "committee needs one seed per member");
    if (std::set<std::uint64_t>(spec.member_seeds.begin(), spec.member_seeds.end()).size() !=
        spec.member_seeds.size())
        throw Error(errc::invalid_spec, "committee member seeds must be distinct");
    if (labeled.entries.empty())
        throw Error(errc::empty_training_set, "spawn_committee: labelled set is empty");

    std::vector<SurrogateModel> members;
    members.reserve(spec.size);
    for (int m = 0; m < spec.size; ++m) {
        const std::uint64_t mseed = spec.member_seeds[m];
        if (spec.diversity == CommitteeDiversity::shuffle) {
            members.push_back(train(base, structures, labeled, config, mseed));
        } else {
            const auto resampled = detail::bootstrap_resample(labeled, mseed);
            members.push_back(train(base, structures, resampled, config, mseed));
        }
    }
    return members;
}

std::vector<double> committee_scores(const std::vector<SurrogateModel>& members,
                                     const StructureStore& structures,
                                     const std::vector<std::string>& pool_ids,
                                     CommitteeTarget target) {
    if (members.size() < 2)
        throw Error(errc::invalid_spec, "committee_scores: need at least 2 members");
    if (pool_ids.empty())
        throw Error(errc::empty_pool, "committee_scores: empty pool");

    const double m = static_cast<double>(members.size());
    std::vector<double> scores(pool_ids.size(), 0.0);
    for (std::size_t p = 0; p < pool_ids.size(); ++p) {
        auto it = structures.find(pool_ids[p]);
        if (it == structures.end())
            throw Error(errc::unknown_id, "committee_scores: no structure for " + pool_ids[p]);
        const Structure& s = it->second;
        if (target == CommitteeTarget::energy) {
            std::vector<double> es;
            es.reserve(members.size());
            double mean = 0.0;
            for (const auto& mod : members) {
                es.push_back(mod.energy(s));
                mean += es.back();
            }
            mean /= m;
            // Two-pass variance: exact zero when all members agree.
            double var = 0.0;
            for (double e : es) var += (e - mean) * (e - mean);
            scores[p] = std::sqrt(var / m);
        } else {
            const int n = s.atom_count();
            std::vector<std::vector<Vec3>> forces;
            forces.reserve(members.size());
            for (const auto& mod : members) forces.push_back(mod.forces(s));
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < 3; ++a) {
                    double mean = 0.0;
                    for (const auto& f : forces) mean += f[i][a];
                    mean /= m;
                    double var = 0.0;
                    for (const auto& f : forces) {
                        const double d = f[i][a] - mean;
                        var += d * d;
                    }
                    acc += var / m;
                }
            scores[p] = std::sqrt(acc / (3.0 * n));
        }
    }
    return scores;
}

} // namespace poolforge
