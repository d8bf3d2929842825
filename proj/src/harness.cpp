#include "poolforge/harness.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "poolforge/error.hpp"
#include "poolforge/rng.hpp"
#include "poolforge/selectors.hpp"

namespace poolforge {

Method parse_method(const std::string& name) {
    if (name == "random") return Method::random;
    if (name == "committee-E" || name == "committee-e" || name == "committee_e")
        return Method::committee_e;
    if (name == "committee-F" || name == "committee-f" || name == "committee_f")
        return Method::committee_f;
    if (name == "pv") return Method::pv;
    if (name == "lcmd") return Method::lcmd;
    if (name == "kcenter") return Method::kcenter;
    throw Error(errc::config_invalid, "unknown method: " + name);
}

Representation parse_representation(const std::string& name) {
    if (name == "ntk") return Representation::ntk;
    if (name == "activation") return Representation::activation;
    if (name == "file" || name == "ingested-features") return Representation::file;
    if (name == "fingerprint") return Representation::fingerprint;
    throw Error(errc::config_invalid, "unknown representation: " + name);
}

std::string to_string(Method m) {
    switch (m) {
        case Method::random: return "random";
        case Method::committee_e: return "committee-E";
        case Method::committee_f: return "committee-F";
        case Method::pv: return "pv";
        case Method::lcmd: return "lcmd";
        case Method::kcenter: return "kcenter";
    }
    return "?";
}

std::string to_string(Representation r) {
    switch (r) {
        case Representation::ntk: return "ntk";
        case Representation::activation: return "activation";
        case Representation::file: return "file";
        case Representation::fingerprint: return "fingerprint";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    if (rounds < 0) throw Error(errc::config_invalid, "rounds must be >= 0");
    if (batch < 1) throw Error(errc::config_invalid, "batch must be >= 1");
    if (initial_seed_size < 1) throw Error(errc::config_invalid, "initial seed size must be >= 1");
    const bool kernel_method =
        method == Method::pv || method == Method::lcmd || method == Method::kcenter;
    if ((method == Method::committee_e || method == Method::committee_f) && committee.size < 2)
        throw Error(errc::config_invalid, "committee methods need a committee of size >= 2");
    if (kernel_method && representation == Representation::fingerprint &&
        !(lambda >= 0))
        throw Error(errc::config_invalid, "lambda must be >= 0");
}

std::vector<double> LearningCurve::force_rmse() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.force_rmse);
    return v;
}

std::vector<double> LearningCurve::energy_rmse() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.energy_rmse);
    return v;
}

FeatureMatrix extract_features(const SurrogateModel& model,
                               const StructureStore& structures,
                               const std::vector<std::string>& ids,
                               Representation representation,
                               const std::optional<FeatureMatrix>& ingested) {
    if (representation == Representation::file) {
        if (!ingested)
            throw Error(errc::config_invalid, "representation 'file' needs ingested features");
        FeatureMatrix out;
        out.ids = ids;
        out.normalized = ingested->normalized;
        out.data.resize(static_cast<Eigen::Index>(ids.size()), ingested->data.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto r = ingested->index_of(ids[i]);
            if (r < 0) throw Error(errc::unknown_id, "ingested features miss id " + ids[i]);
            out.data.row(static_cast<Eigen::Index>(i)) = ingested->data.row(r);
        }
        return out;
    }
    if (representation == Representation::fingerprint)
        throw Error(errc::config_invalid, "fingerprints are not a dense feature matrix");

    FeatureMatrix out;
    out.ids = ids;
    const auto n = static_cast<Eigen::Index>(ids.size());
    // Dimension from the first structure; fixed across structures by design.
    Eigen::Index dim = 0;
    std::vector<const Structure*> ptrs(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = structures.find(ids[i]);
        if (it == structures.end())
            throw Error(errc::unknown_id, "extract_features: no structure for " + ids[i]);
        ptrs[i] = &it->second;
    }
    if (n == 0) throw Error(errc::empty_input, "extract_features: no ids");
    dim = representation == Representation::ntk
              ? model.ntk_features(*ptrs[0]).size()
              : model.activation_features(*ptrs[0]).size();
    out.data.resize(n, dim);
#pragma omp parallel for schedule(dynamic, 4)
    for (Eigen::Index i = 0; i < n; ++i) {
        out.data.row(i) = representation == Representation::ntk
                              ? model.ntk_features(*ptrs[static_cast<std::size_t>(i)]).transpose()
                              : model.activation_features(*ptrs[static_cast<std::size_t>(i)]).transpose();
    }
    return out;
}

namespace {

std::vector<std::string> initial_seed(const ExperimentConfig& config,
                                      const ExperimentData& data) {
    if (static_cast<std::size_t>(config.initial_seed_size) > data.pool_ids.size())
        throw Error(errc::config_invalid, "initial seed larger than pool");
    auto rng = make_rng(config.seed, "init");
    if (!config.stratified_init) {
        std::vector<std::string> shuffled = data.pool_ids;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        shuffled.resize(static_cast<std::size_t>(config.initial_seed_size));
        return shuffled;
    }
    // Stratified: round-robin over families after an in-family shuffle.
    std::map<std::string, std::vector<std::string>> by_family;
    for (const auto& id : data.pool_ids) {
        auto it = data.structures.find(id);
        const std::string fam =
            (it != data.structures.end() && it->second.family) ? *it->second.family : "";
        by_family[fam].push_back(id);
    }
    for (auto& [fam, ids] : by_family) std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::string> out;
    std::size_t layer = 0;
    while (out.size() < static_cast<std::size_t>(config.initial_seed_size)) {
        bool any = false;
        for (auto& [fam, ids] : by_family) {
            if (layer < ids.size() && out.size() < static_cast<std::size_t>(config.initial_seed_size)) {
                out.push_back(ids[layer]);
                any = true;
            }
        }
        if (!any) break;
        ++layer;
    }
    return out;
}

RoundRecord evaluate_round(const SurrogateModel& model, const ExperimentData& data,
                           int round, std::size_t labeled_size) {
    std::map<std::string, Labels> predictions;
    for (const auto& id : data.test_ids) {
        const Structure& s = data.structures.at(id);
        Labels p;
        p.energy = model.energy(s);
        p.forces = model.forces(s);
        predictions[id] = p;
    }
    const ErrorMetrics m = error_metrics(predictions, data.labels, data.test_ids);
    RoundRecord rec;
    rec.round = round;
    rec.labeled_size = labeled_size;
    rec.energy_rmse = m.energy_rmse;
    rec.energy_mae = m.energy_mae;
    rec.force_rmse = m.force_rmse;
    rec.force_mae = m.force_mae;
    return rec;
}

std::vector<std::string> select_batch(const ExperimentConfig& config,
                                      const ExperimentData& data,
                                      const SurrogateModel& model,
                                      const ALState& state,
                                      int round) {
    const std::string tag = "round-" + std::to_string(round);
    if (config.method == Method::random) {
        return select_random(state.pool.candidates, config.batch,
                             substream_seed(config.seed, "select-" + tag))
            .chosen;
    }
    if (config.method == Method::committee_e || config.method == Method::committee_f) {
        CommitteeSpec spec = config.committee;
        if (spec.member_seeds.empty()) {
            for (int m = 0; m < spec.size; ++m)
                spec.member_seeds.push_back(
                    substream_seed(config.seed, "committee-" + tag + "-m" + std::to_string(m)));
        }
        const auto members =
            spawn_committee(data.base_model, data.structures, state.labeled, spec, config.train);
        const auto scores = committee_scores(
            members, data.structures, state.pool.candidates,
            config.method == Method::committee_e ? CommitteeTarget::energy
                                                 : CommitteeTarget::force);
        return select_topk_score(state.pool.candidates, scores, config.batch).chosen;
    }

    // Kernel-based selection over pool + labelled ids.
    std::vector<std::string> all_ids = state.pool.candidates;
    const auto labeled_ids = state.labeled.ids();
    all_ids.insert(all_ids.end(), labeled_ids.begin(), labeled_ids.end());

    KernelView view;
    if (config.representation == Representation::fingerprint) {
        if (!data.fingerprints)
            throw Error(errc::config_invalid, "fingerprint representation needs fingerprints");
        FingerprintSet sub;
        sub.n_bits = data.fingerprints->n_bits;
        for (const auto& id : all_ids) {
            auto it = std::find(data.fingerprints->ids.begin(), data.fingerprints->ids.end(), id);
            if (it == data.fingerprints->ids.end())
                throw Error(errc::unknown_id, "fingerprints miss id " + id);
            sub.ids.push_back(id);
            sub.bits.push_back(
                data.fingerprints->bits[static_cast<std::size_t>(it - data.fingerprints->ids.begin())]);
        }
        view = gram_matrix(sub);
    } else {
        const FeatureMatrix features = extract_features(
            model, data.structures, all_ids, config.representation, data.ingested_features);
        view = gram_matrix(features, config.eps);
    }

    SelectionRequest req;
    req.kernel = &view;
    req.pool_ids = state.pool.candidates;
    req.conditioning_ids = labeled_ids;
    req.batch = config.batch;
    req.lambda = config.lambda;
    req.seed = substream_seed(config.seed, "select-" + tag);
    switch (config.method) {
        case Method::pv: return select_pv(req).chosen;
        case Method::lcmd: return select_lcmd(req).chosen;
        case Method::kcenter: return select_kcenter(req).chosen;
        default: throw Error(errc::config_invalid, "unreachable method");
    }
}

} // namespace

ExperimentResult run_active_learning(const ExperimentConfig& config,
                                     const ExperimentData& data) {
    config.validate();
    if (data.pool_ids.empty()) throw Error(errc::empty_pool, "run: empty pool");

    // Pool/validation/test must be disjoint.
    std::set<std::string> seen;
    for (const auto* ids : {&data.pool_ids, &data.validation_ids, &data.test_ids})
        for (const auto& id : *ids)
            if (!seen.insert(id).second)
                throw Error(errc::config_invalid, "pool/validation/test overlap at " + id);

    const auto seed_ids = initial_seed(config, data);
    std::map<std::string, Labels> label_map;
    for (const auto& id : seed_ids) {
        auto it = data.labels.find(id);
        if (it == data.labels.end())
            throw Error(errc::missing_label, "no oracle labels for " + id);
        label_map[id] = it->second;
    }

    ALState state;
    state.batch_size = config.batch;
    state.rng_seed = config.seed;
    state.pool.candidates = data.pool_ids;
    {
        ALState staged = state;
        staged.round = -1; // seed entries carry acquisition_round -1
        state = apply_acquisition(staged, seed_ids, label_map);
        state.round = 0;
    }

    ExperimentResult result;
    SurrogateModel model =
        train(data.base_model, data.structures, state.labeled, config.train,
              substream_seed(config.seed, "train-round-0"));
    result.curve.rows.push_back(evaluate_round(model, data, 0, state.labeled.size()));

    for (int t = 1; t <= config.rounds; ++t) {
        const auto batch = select_batch(config, data, model, state, t);
        std::map<std::string, Labels> batch_labels;
        for (const auto& id : batch) {
            auto it = data.labels.find(id);
            if (it == data.labels.end())
                throw Error(errc::missing_label, "no oracle labels for " + id);
            batch_labels[id] = it->second;
        }
        state = apply_acquisition(state, batch, batch_labels);
        result.batches.push_back(batch);

        const SurrogateModel& checkpoint = config.warm_start ? model : data.base_model;
        model = train(checkpoint, data.structures, state.labeled, config.train,
                      substream_seed(config.seed, "train-round-" + std::to_string(t)));
        result.curve.rows.push_back(evaluate_round(model, data, t, state.labeled.size()));
    }
    result.final_model = std::move(model);
    return result;
}

GeometryReport kernel_geometry_report(const FeatureMatrix& features,
                                      const StructureStore& structures,
                                      double eps) {
    struct Key {
        std::string family;
        int frame;
        std::string id;
    };
    std::vector<Key> keys;
    for (const auto& id : features.ids) {
        auto it = structures.find(id);
        if (it == structures.end())
            throw Error(errc::unknown_id, "geometry report: no structure for " + id);
        const Structure& s = it->second;
        if (!s.family || !s.frame)
            throw Error(errc::missing_tags, "geometry report: '" + id + "' lacks family/frame");
        keys.push_back({*s.family, *s.frame, id});
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.family != b.family) return a.family < b.family;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.id < b.id;
    });

    FeatureMatrix ordered;
    ordered.normalized = features.normalized;
    ordered.data.resize(features.data.rows(), features.data.cols());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        ordered.ids.push_back(keys[i].id);
        ordered.data.row(static_cast<Eigen::Index>(i)) =
            features.data.row(features.index_of(keys[i].id));
    }

    GeometryReport rep;
    const KernelView view = gram_matrix(ordered, eps);
    rep.ordered_ids = ordered.ids;
    rep.gram = view.gram;

    std::size_t start = 0;
    while (start < keys.size()) {
        std::size_t stop = start;
        while (stop < keys.size() && keys[stop].family == keys[start].family) ++stop;
        FamilyBlock block;
        block.family = keys[start].family;
        block.start = start;
        block.count = stop - start;
        double sum = 0.0, mn = std::numeric_limits<double>::infinity();
        std::size_t cnt = 0;
        for (std::size_t i = start; i < stop; ++i)
            for (std::size_t j = start; j < stop; ++j) {
                const double v = rep.gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                sum += v;
                mn = std::min(mn, v);
                ++cnt;
            }
        block.mean_similarity = sum / static_cast<double>(cnt);
        block.min_similarity = mn;
        rep.blocks.push_back(block);
        start = stop;
    }
    return rep;
}

} // namespace poolforge
