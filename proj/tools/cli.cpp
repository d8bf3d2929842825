#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "poolforge/error.hpp"
#include "poolforge/harness.hpp"
#include "poolforge/io.hpp"
#include "poolforge/residual_gp.hpp"
#include "poolforge/rng.hpp"
#include "poolforge/selectors.hpp"
#include "poolforge/synthetic.hpp"

namespace poolforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void apply_thread_cap() {
    if (const char* env = std::getenv("POOLFORGE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(errc::io_error, "cannot create output directory " + out);
    return dir;
}

// The manifest records input paths as given on the command line and output
// basenames, so reruns into different directories stay byte-identical.
struct ManifestBuilder {
    Manifest m;

    void input(const std::string& path) { m.inputs[path] = hex64(hash_file(path)); }
    void output(const fs::path& path) { m.outputs.push_back(path.filename().string()); }
    void cfg(const std::string& key, const std::string& value) { m.config[key] = value; }
    void write(const fs::path& dir) const { write_manifest(dir / "manifest.json", m); }
};

std::map<std::string, Structure> store_from(const std::vector<DatasetEntry>& entries) {
    std::map<std::string, Structure> store;
    for (const auto& e : entries) store[e.structure.id] = e.structure;
    return store;
}

std::map<std::string, Labels> labels_from(const std::vector<DatasetEntry>& entries,
                                          bool required) {
    std::map<std::string, Labels> labels;
    for (const auto& e : entries) {
        if (e.labels) {
            labels[e.structure.id] = *e.labels;
        } else if (required) {
            throw Error(errc::missing_label, "structure " + e.structure.id +
                                                 " has no labels; offline runs need a "
                                                 "fully labelled pool");
        }
    }
    return labels;
}

std::vector<std::string> read_id_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::io_error, "cannot open " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

std::map<std::string, double> read_score_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::io_error, "cannot open " + path.string());
    std::map<std::string, double> scores;
    std::string id;
    double value;
    while (in >> id >> value) {
        if (!scores.emplace(id, value).second)
            throw Error(errc::duplicate_id, "duplicate score for " + id);
    }
    return scores;
}

std::string curve_csv(const LearningCurve& curve) {
    std::ostringstream out;
    out << "round,labeled_size,energy_rmse,energy_mae,force_rmse,force_mae\n";
    for (const auto& row : curve.rows) {
        out << row.round << ',' << row.labeled_size << ','
            << format_double(row.energy_rmse) << ',' << format_double(row.energy_mae)
            << ',' << format_double(row.force_rmse) << ','
            << format_double(row.force_mae) << '\n';
    }
    return out.str();
}

struct CurveColumns {
    std::vector<double> energy_rmse;
    std::vector<double> force_rmse;
};

CurveColumns read_curve_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::io_error, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw Error(errc::format_error, "empty curve file " + path.string());
    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) header.push_back(col);
    }
    auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        throw Error(errc::format_error, path.string() + ": missing column " + name);
    };
    const auto ie = column("energy_rmse");
    const auto ifr = column("force_rmse");
    CurveColumns cols;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size())
            throw Error(errc::format_error, path.string() + ": ragged row");
        cols.energy_rmse.push_back(std::stod(cells[ie]));
        cols.force_rmse.push_back(std::stod(cells[ifr]));
    }
    return cols;
}

SurrogateModel load_or_init_model(const std::string& checkpoint,
                                  const std::map<std::string, std::string>& cfg,
                                  std::uint64_t seed,
                                  ManifestBuilder& manifest) {
    if (!checkpoint.empty()) {
        manifest.input(checkpoint);
        return read_checkpoint(checkpoint);
    }
    SurrogateConfig mc;
    auto geti = [&](const char* key, int fallback) {
        auto it = cfg.find(key);
        return it == cfg.end() ? fallback : std::stoi(it->second);
    };
    auto getd = [&](const char* key, double fallback) {
        auto it = cfg.find(key);
        return it == cfg.end() ? fallback : std::stod(it->second);
    };
    mc.z_max = geti("model_z_max", mc.z_max);
    mc.embed_channels = geti("model_channels", mc.embed_channels);
    mc.hidden_width = geti("model_width", mc.hidden_width);
    mc.hidden_layers = geti("model_layers", mc.hidden_layers);
    mc.n_rbf = geti("model_rbf", mc.n_rbf);
    mc.cutoff = getd("model_cutoff", mc.cutoff);
    return SurrogateModel::init(mc, substream_seed(seed, "base-model"));
}

// ---------------------------------------------------------------- gen -----

struct GenArgs {
    std::string out;
    std::uint64_t seed = 0;
    int families = 3;
    std::vector<int> frames;
    int atoms = 6;
    double separation = 0.3;
    double perturbation = 0.02;
    double noise = 0.0;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
    SyntheticPoolSpec spec;
    spec.n_families = a.families;
    if (a.frames.empty())
        spec.frames_per_family.assign(a.families, 35);
    else if (a.frames.size() == 1)
        spec.frames_per_family.assign(a.families, a.frames[0]);
    else
        spec.frames_per_family = a.frames;
    spec.atoms = a.atoms;
    spec.family_separation = a.separation;
    spec.perturbation = a.perturbation;
    spec.label_noise = a.noise;
    spec.seed = a.seed;
    spec.validate();

    const auto pool = generate_synthetic_pool(spec);
    const auto dir = prepare_out_dir(a.out);

    std::vector<DatasetEntry> entries;
    for (const auto& s : pool.structures) {
        DatasetEntry e;
        e.structure = s;
        e.labels = pool.labels.at(s.id);
        entries.push_back(std::move(e));
    }
    const auto data_path = dir / "pool.jsonl";
    write_dataset_jsonl(data_path, entries);

    ManifestBuilder manifest;
    manifest.m.command = "gen";
    manifest.m.seed = a.seed;
    manifest.cfg("families", std::to_string(spec.n_families));
    manifest.cfg("atoms", std::to_string(spec.atoms));
    manifest.cfg("separation", format_double(spec.family_separation));
    manifest.cfg("perturbation", format_double(spec.perturbation));
    manifest.cfg("noise", format_double(spec.label_noise));
    manifest.output(data_path);
    manifest.write(dir);

    out << "wrote " << entries.size() << " structures to " << data_path.string() << "\n";
    return 0;
}

// ----------------------------------------------------------- features -----

struct FeaturesArgs {
    std::string out;
    std::string data;
    std::string checkpoint;
    std::string representation = "ntk";
    std::string features_file;
    std::string fingerprints_file;
    std::uint64_t seed = 0;
};

int cmd_features(const FeaturesArgs& a, std::ostream& out) {
    const auto dir = prepare_out_dir(a.out);
    ManifestBuilder manifest;
    manifest.m.command = "features";
    manifest.m.seed = a.seed;
    manifest.cfg("representation", a.representation);

    if (a.representation == "file") {
        // validation mode for ingested feature or fingerprint files
        json record;
        if (!a.features_file.empty()) {
            manifest.input(a.features_file);
            const auto f = read_feature_file(a.features_file);
            f.validate();
            record["kind"] = "features";
            record["count"] = f.size();
            record["dim"] = f.data.cols();
        } else if (!a.fingerprints_file.empty()) {
            manifest.input(a.fingerprints_file);
            const auto fp = read_fingerprint_jsonl(a.fingerprints_file);
            fp.validate();
            record["kind"] = "fingerprints";
            record["count"] = fp.size();
            record["n_bits"] = fp.n_bits;
        } else {
            throw Error(errc::config_invalid,
                        "representation 'file' needs --features or --fingerprints");
        }
        record["valid"] = true;
        const auto path = dir / "validated.json";
        atomic_write(path, record.dump(2) + "\n");
        manifest.output(path);
        manifest.write(dir);
        out << "validated " << record["kind"].get<std::string>() << "\n";
        return 0;
    }

    if (a.data.empty())
        throw Error(errc::config_invalid, "feature extraction needs --data");
    manifest.input(a.data);
    const auto entries = read_dataset_jsonl(a.data);
    const auto store = store_from(entries);
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.structure.id);

    const auto repr = parse_representation(a.representation);
    const auto model = load_or_init_model(a.checkpoint, {}, a.seed, manifest);
    const auto features = extract_features(model, store, ids, repr, std::nullopt);

    const auto path = dir / "features.bin";
    write_feature_file(path, features);
    manifest.output(path);
    manifest.write(dir);
    out << "wrote " << features.size() << " x " << features.data.cols()
        << " features to " << path.string() << "\n";
    return 0;
}

// ------------------------------------------------------------- select -----

struct SelectArgs {
    std::string out;
    std::string features_file;
    std::string fingerprints_file;
    std::string labeled_file;
    std::string scores_file;
    std::string kernel = "cosine";
    std::string rule;
    int batch = 5;
    double lambda = kDefaultSelectionLambda;
    double eps = kDefaultKernelEps;
    std::uint64_t seed = 0;
};

int cmd_select(const SelectArgs& a, std::ostream& out) {
    const auto dir = prepare_out_dir(a.out);
    ManifestBuilder manifest;
    manifest.m.command = "select";
    manifest.m.seed = a.seed;
    manifest.cfg("kernel", a.kernel);
    manifest.cfg("rule", a.rule);
    manifest.cfg("batch", std::to_string(a.batch));
    manifest.cfg("lambda", format_double(a.lambda));
    manifest.cfg("eps", format_double(a.eps));

    KernelView view;
    std::vector<std::string> all_ids;
    if (a.kernel == "cosine") {
        if (a.features_file.empty())
            throw Error(errc::kind_mismatch, "cosine kernel needs --features");
        manifest.input(a.features_file);
        const auto f = read_feature_file(a.features_file);
        view = gram_matrix(f, a.eps);
    } else {
        if (a.fingerprints_file.empty())
            throw Error(errc::kind_mismatch, "tanimoto kernel needs --fingerprints");
        manifest.input(a.fingerprints_file);
        const auto fp = read_fingerprint_jsonl(a.fingerprints_file);
        view = gram_matrix(fp);
    }
    all_ids = view.ids;

    std::vector<std::string> conditioning;
    if (!a.labeled_file.empty()) {
        manifest.input(a.labeled_file);
        conditioning = read_id_lines(a.labeled_file);
    }
    std::set<std::string> labeled_set(conditioning.begin(), conditioning.end());
    std::vector<std::string> pool_ids;
    for (const auto& id : all_ids)
        if (!labeled_set.count(id)) pool_ids.push_back(id);

    SelectionResult result;
    if (a.rule == "random") {
        result = select_random(pool_ids, a.batch, a.seed);
    } else if (a.rule == "topk") {
        if (a.scores_file.empty())
            throw Error(errc::config_invalid, "rule 'topk' needs --scores");
        manifest.input(a.scores_file);
        const auto scores = read_score_lines(a.scores_file);
        std::vector<double> values;
        for (const auto& id : pool_ids) {
            const auto it = scores.find(id);
            if (it == scores.end())
                throw Error(errc::unknown_id, "no score for pool id " + id);
            values.push_back(it->second);
        }
        result = select_topk_score(pool_ids, values, a.batch);
    } else {
        SelectionRequest req;
        req.kernel = &view;
        req.pool_ids = pool_ids;
        req.conditioning_ids = conditioning;
        req.batch = a.batch;
        req.lambda = a.lambda;
        req.seed = a.seed;
        if (a.rule == "pv")
            result = select_pv(req);
        else if (a.rule == "lcmd")
            result = select_lcmd(req);
        else if (a.rule == "kcenter")
            result = select_kcenter(req);
        else
            throw Error(errc::config_invalid, "unknown rule " + a.rule);
    }

    std::string batch_text;
    for (const auto& id : result.chosen) batch_text += id + "\n";
    const auto batch_path = dir / "batch.txt";
    atomic_write(batch_path, batch_text);

    json record;
    record["chosen"] = result.chosen;
    record["scores"] = json::array();
    for (double s : result.scores) record["scores"].push_back(s);
    record["jitter_applied"] = result.jitter_applied;
    record["lambda_used"] = result.lambda_used;
    record["rule"] = a.rule;
    const auto sel_path = dir / "selection.json";
    atomic_write(sel_path, record.dump(2) + "\n");

    manifest.output(batch_path);
    manifest.output(sel_path);
    manifest.write(dir);
    out << "selected " << result.chosen.size() << " candidates\n";
    return 0;
}

// ---------------------------------------------------------------- run -----

struct RunArgs {
    std::string out;
    std::string data;
    std::string config_file;
    std::string checkpoint;
    std::string features_file;
    std::string rule = "random";
    std::string representation = "ntk";
    int batch = 5;
    int rounds = 15;
    double lambda = 1e-6;
    double eps = kDefaultKernelEps;
    std::uint64_t seed = 0;
    // CLI11 fills these so config-file values only apply to unset flags
    bool rule_set = false, repr_set = false, batch_set = false, rounds_set = false;
    bool lambda_set = false, eps_set = false, seed_set = false;
};

int cmd_run(RunArgs a, std::ostream& out) {
    std::map<std::string, std::string> cfg;
    if (!a.config_file.empty()) cfg = read_config_file(a.config_file);
    auto from_cfg = [&](const char* key, bool already_set, auto apply) {
        const auto it = cfg.find(key);
        if (it != cfg.end() && !already_set) apply(it->second);
    };
    from_cfg("rule", a.rule_set, [&](const std::string& v) { a.rule = v; });
    from_cfg("representation", a.repr_set, [&](const std::string& v) { a.representation = v; });
    from_cfg("batch", a.batch_set, [&](const std::string& v) { a.batch = std::stoi(v); });
    from_cfg("rounds", a.rounds_set, [&](const std::string& v) { a.rounds = std::stoi(v); });
    from_cfg("lambda", a.lambda_set, [&](const std::string& v) { a.lambda = std::stod(v); });
    from_cfg("eps", a.eps_set, [&](const std::string& v) { a.eps = std::stod(v); });
    from_cfg("seed", a.seed_set, [&](const std::string& v) { a.seed = std::stoull(v); });
    auto cfg_or = [&](const char* key, double fallback) {
        const auto it = cfg.find(key);
        return it == cfg.end() ? fallback : std::stod(it->second);
    };

    if (a.rule == "topk")
        throw Error(errc::config_invalid,
                    "rule 'topk' needs external scores; use the select command");

    const auto dir = prepare_out_dir(a.out);
    ManifestBuilder manifest;
    manifest.m.command = "run";
    manifest.m.seed = a.seed;
    manifest.input(a.data);
    if (!a.config_file.empty()) manifest.input(a.config_file);

    const auto entries = read_dataset_jsonl(a.data);
    ExperimentData data;
    data.structures = store_from(entries);
    data.labels = labels_from(entries, true);
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.structure.id);
    const double test_fraction = cfg_or("test_fraction", 0.2);
    const double validation_fraction = cfg_or("validation_fraction", 0.1);
    const auto split = split_dataset(ids, test_fraction, validation_fraction, a.seed);
    data.pool_ids = split.pool;
    data.validation_ids = split.validation;
    data.test_ids = split.test;
    data.base_model = load_or_init_model(a.checkpoint, cfg, a.seed, manifest);
    if (!a.features_file.empty()) {
        manifest.input(a.features_file);
        data.ingested_features = read_feature_file(a.features_file);
    }

    ExperimentConfig ec;
    ec.method = parse_method(a.rule);
    ec.representation = parse_representation(a.representation);
    ec.rounds = a.rounds;
    ec.batch = a.batch;
    ec.seed = a.seed;
    ec.lambda = a.lambda;
    ec.eps = a.eps;
    ec.initial_seed_size = static_cast<int>(cfg_or("initial_seed_size", 50));
    ec.stratified_init = cfg_or("stratified_init", 0) != 0;
    ec.warm_start = cfg_or("warm_start", 0) != 0;
    ec.train.dynamic_schedule = cfg_or("dynamic_schedule", 1) != 0;
    ec.train.fixed_epochs = static_cast<int>(cfg_or("fixed_epochs", ec.train.fixed_epochs));
    ec.train.fixed_batch = static_cast<int>(cfg_or("fixed_batch", ec.train.fixed_batch));
    ec.train.fixed_lr = cfg_or("fixed_lr", ec.train.fixed_lr);
    ec.train.w_energy = cfg_or("w_energy", ec.train.w_energy);
    ec.train.w_force = cfg_or("w_force", ec.train.w_force);
    ec.train.huber_delta = cfg_or("huber_delta", ec.train.huber_delta);
    ec.committee.size = static_cast<int>(cfg_or("committee_size", ec.committee.size));
    if (cfg.count("committee_diversity"))
        ec.committee.diversity = cfg.at("committee_diversity") == "bootstrap"
                                     ? CommitteeDiversity::bootstrap
                                     : CommitteeDiversity::shuffle;
    for (int m = 0; m < ec.committee.size; ++m)
        ec.committee.member_seeds.push_back(substream_seed(a.seed, "committee-" + std::to_string(m)));
    ec.validate();

    manifest.cfg("rule", a.rule);
    manifest.cfg("representation", a.representation);
    manifest.cfg("batch", std::to_string(a.batch));
    manifest.cfg("rounds", std::to_string(a.rounds));
    manifest.cfg("lambda", format_double(a.lambda));
    manifest.cfg("eps", format_double(a.eps));
    manifest.cfg("initial_seed_size", std::to_string(ec.initial_seed_size));
    manifest.cfg("test_fraction", format_double(test_fraction));
    manifest.cfg("validation_fraction", format_double(validation_fraction));

    const auto result = run_active_learning(ec, data);

    const auto curve_path = dir / "curve.csv";
    atomic_write(curve_path, curve_csv(result.curve));

    json batches = json::array();
    for (std::size_t r = 0; r < result.batches.size(); ++r) {
        json jr;
        jr["round"] = r + 1;
        jr["ids"] = result.batches[r];
        batches.push_back(jr);
    }
    const auto batches_path = dir / "batches.json";
    atomic_write(batches_path, batches.dump(2) + "\n");

    const auto model_path = dir / "final_model.ckpt";
    write_checkpoint(model_path, result.final_model);

    manifest.output(curve_path);
    manifest.output(batches_path);
    manifest.output(model_path);
    manifest.write(dir);
    out << "completed " << a.rounds << " rounds; final force RMSE "
        << format_double(result.curve.rows.back().force_rmse) << "\n";
    return 0;
}

// ----------------------------------------------------------- calibrate ----

struct CalibrateArgs {
    std::string out;
    std::string data;
    std::string checkpoint;
    std::string representation = "ntk";
    double lambda = kResidualGPLambda;
    double eps = kDefaultKernelEps;
    int seed_size = 5;
    int prefix_steps = 40;
    std::uint64_t seed = 0;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
    const auto dir = prepare_out_dir(a.out);
    ManifestBuilder manifest;
    manifest.m.command = "calibrate";
    manifest.m.seed = a.seed;
    manifest.input(a.data);
    manifest.cfg("lambda", format_double(a.lambda));
    manifest.cfg("eps", format_double(a.eps));
    manifest.cfg("seed_size", std::to_string(a.seed_size));
    manifest.cfg("prefix_steps", std::to_string(a.prefix_steps));
    manifest.cfg("representation", a.representation);

    const auto entries = read_dataset_jsonl(a.data);
    const auto store = store_from(entries);
    const auto labels = labels_from(entries, true);
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.structure.id);
    const auto split = split_dataset(ids, 0.25, 0.25, a.seed);
    if (split.pool.size() < static_cast<std::size_t>(a.seed_size) + 1)
        throw Error(errc::empty_pool, "pool too small for the requested seed set");

    const auto model = load_or_init_model(a.checkpoint, {}, a.seed, manifest);

    // features are extracted once from the frozen base model
    const auto repr = parse_representation(a.representation);
    const auto features = extract_features(model, store, ids, repr, std::nullopt);
    std::map<std::string, double> base_pred, energy_labels;
    for (const auto& id : ids) {
        base_pred[id] = model.energy(store.at(id));
        energy_labels[id] = labels.at(id).energy;
    }

    auto shuffled = split.pool;
    auto rng = make_rng(a.seed, "init");
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::vector<std::string> seed_ids(shuffled.begin(), shuffled.begin() + a.seed_size);
    const std::vector<std::string> pool_ids(shuffled.begin() + a.seed_size, shuffled.end());

    const std::size_t max_prefix =
        seed_ids.size() + std::min<std::size_t>(a.prefix_steps, pool_ids.size());
    const auto replay = replay_prefixes(features, pool_ids, seed_ids,
                                        split.validation, base_pred, energy_labels,
                                        a.lambda, max_prefix, a.eps);

    const auto& best_prefix = replay.prefixes[replay.best_index];
    const auto fit = fit_residual_gp(features, base_pred, energy_labels, best_prefix,
                                     a.lambda, a.eps);

    std::vector<CalibrationPoint> points;
    for (const auto& id : split.test) {
        const auto pred = predict(fit, features, base_pred.at(id), id);
        points.push_back({energy_labels.at(id), pred.mean, pred.variance});
    }
    const auto report = calibration_metrics(points);

    json record;
    record["energy_unit"] = "meV";
    record["nll"] = report.nll;
    record["rmse"] = report.rmse;
    record["mae"] = report.mae;
    record["ece"] = report.ece;
    record["ence"] = report.ence;
    record["ence_valid"] = report.ence_valid;
    record["n_test"] = report.n_test;
    record["gamma_hat"] = fit.gamma_hat;
    record["lambda"] = fit.lambda;
    record["chosen_prefix_size"] = best_prefix.size();
    record["validation_nll_by_prefix"] = replay.validation_nll;
    json coverage = json::array();
    for (std::size_t i = 0; i < report.nominal_levels.size(); ++i)
        coverage.push_back({{"nominal", report.nominal_levels[i]},
                            {"empirical", report.empirical_coverage[i]}});
    record["coverage"] = coverage;
    record["definitions"] = {
        {"ece", "mean absolute gap between nominal and empirical coverage over the "
                "19-level grid 0.05..0.95"},
        {"ence", "mean over 10 equal-count variance bins of |RMV - RMSE| / RMV"}};

    const auto path = dir / "calibration.json";
    atomic_write(path, record.dump(2) + "\n");
    manifest.output(path);
    manifest.write(dir);
    out << "calibration NLL " << format_double(report.nll) << ", ECE "
        << format_double(report.ece) << "\n";
    return 0;
}

// ------------------------------------------------------------- report -----

struct ReportArgs {
    std::string out;
    std::string data;
    std::string features_file;
    std::string method_curve;
    std::string random_curve;
    std::uint64_t seed = 0;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
    const bool geometry_mode = !a.features_file.empty();
    const bool curve_mode = !a.method_curve.empty() || !a.random_curve.empty();
    if (geometry_mode == curve_mode)
        throw Error(errc::config_invalid,
                    "report needs either --features/--data (geometry) or "
                    "--method-curve/--random-curve (summary)");

    const auto dir = prepare_out_dir(a.out);
    ManifestBuilder manifest;
    manifest.m.command = "report";
    manifest.m.seed = a.seed;

    if (geometry_mode) {
        if (a.data.empty())
            throw Error(errc::config_invalid, "geometry report needs --data");
        manifest.input(a.features_file);
        manifest.input(a.data);
        const auto features = read_feature_file(a.features_file);
        const auto store = store_from(read_dataset_jsonl(a.data));
        const auto rep = kernel_geometry_report(features, store);

        json record;
        record["ordered_ids"] = rep.ordered_ids;
        json blocks = json::array();
        for (const auto& b : rep.blocks)
            blocks.push_back({{"family", b.family},
                              {"start", b.start},
                              {"count", b.count},
                              {"mean_similarity", b.mean_similarity},
                              {"min_similarity", b.min_similarity}});
        record["blocks"] = blocks;
        const auto json_path = dir / "geometry.json";
        atomic_write(json_path, record.dump(2) + "\n");

        std::ostringstream gram;
        for (Eigen::Index i = 0; i < rep.gram.rows(); ++i) {
            for (Eigen::Index j = 0; j < rep.gram.cols(); ++j) {
                if (j) gram << ',';
                gram << format_double(rep.gram(i, j));
            }
            gram << '\n';
        }
        const auto gram_path = dir / "geometry_gram.csv";
        atomic_write(gram_path, gram.str());

        manifest.output(json_path);
        manifest.output(gram_path);
        manifest.write(dir);
        out << "geometry report over " << rep.ordered_ids.size() << " structures\n";
        return 0;
    }

    if (a.method_curve.empty() || a.random_curve.empty())
        throw Error(errc::config_invalid,
                    "summary report needs both --method-curve and --random-curve");
    manifest.input(a.method_curve);
    manifest.input(a.random_curve);
    const auto method = read_curve_csv(a.method_curve);
    const auto random = read_curve_csv(a.random_curve);

    json record;
    record["force_auc_method"] = auc(method.force_rmse);
    record["force_auc_random"] = auc(random.force_rmse);
    record["energy_auc_method"] = auc(method.energy_rmse);
    record["energy_auc_random"] = auc(random.energy_rmse);
    record["force_round_gain_pct"] = round_gain(method.force_rmse, random.force_rmse);
    record["energy_round_gain_pct"] = round_gain(method.energy_rmse, random.energy_rmse);
    const auto path = dir / "summary.json";
    atomic_write(path, record.dump(2) + "\n");
    manifest.output(path);
    manifest.write(dir);
    out << "force round gain "
        << format_double(record["force_round_gain_pct"].get<double>()) << "%\n";
    return 0;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    apply_thread_cap();

    CLI::App app{"poolforge: pool-based batch active learning for regression surrogates"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic labelled pool");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "Random seed");
    gen_cmd->add_option("--families", gen.families, "Number of reaction families");
    gen_cmd->add_option("--frames", gen.frames, "Frames per family (one value or one per family)");
    gen_cmd->add_option("--atoms", gen.atoms, "Atoms per structure");
    gen_cmd->add_option("--separation", gen.separation, "Family geometry separation");
    gen_cmd->add_option("--perturbation", gen.perturbation, "Per-frame coordinate jitter");
    gen_cmd->add_option("--noise", gen.noise, "Energy label noise (meV)");

    FeaturesArgs feat;
    auto* feat_cmd =
        app.add_subcommand("features", "Extract or validate structure features");
    feat_cmd->add_option("--out", feat.out, "Output directory")->required();
    feat_cmd->add_option("--data", feat.data, "Dataset JSONL");
    feat_cmd->add_option("--checkpoint", feat.checkpoint, "Model checkpoint");
    feat_cmd->add_option("--representation", feat.representation, "ntk|activation|file")
        ->check(CLI::IsMember({"ntk", "activation", "file"}));
    feat_cmd->add_option("--features", feat.features_file, "Feature file to validate");
    feat_cmd->add_option("--fingerprints", feat.fingerprints_file,
                         "Fingerprint file to validate");
    feat_cmd->add_option("--seed", feat.seed, "Random seed");

    SelectArgs sel;
    auto* sel_cmd = app.add_subcommand("select", "Select one acquisition batch");
    sel_cmd->add_option("--out", sel.out, "Output directory")->required();
    sel_cmd->add_option("--features", sel.features_file, "Feature file");
    sel_cmd->add_option("--fingerprints", sel.fingerprints_file, "Fingerprint file");
    sel_cmd->add_option("--labeled", sel.labeled_file, "Already-labelled ids, one per line");
    sel_cmd->add_option("--scores", sel.scores_file, "Per-id scores for rule topk");
    sel_cmd->add_option("--kernel", sel.kernel, "cosine|tanimoto")
        ->check(CLI::IsMember({"cosine", "tanimoto"}));
    sel_cmd->add_option("--rule", sel.rule, "pv|lcmd|kcenter|topk|random")
        ->required()
        ->check(CLI::IsMember({"pv", "lcmd", "kcenter", "topk", "random"}));
    sel_cmd->add_option("--batch", sel.batch, "Batch size");
    sel_cmd->add_option("--lambda", sel.lambda, "Kernel regularizer");
    sel_cmd->add_option("--eps", sel.eps, "Normalization epsilon");
    sel_cmd->add_option("--seed", sel.seed, "Random seed");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run a full active-learning experiment");
    run_cmd->add_option("--out", run.out, "Output directory")->required();
    run_cmd->add_option("--data", run.data, "Fully labelled dataset JSONL")->required();
    run_cmd->add_option("--config", run.config_file, "key=value experiment config");
    run_cmd->add_option("--checkpoint", run.checkpoint, "Base model checkpoint");
    run_cmd->add_option("--features", run.features_file,
                        "Ingested feature file (representation=file)");
    auto* rule_opt = run_cmd->add_option("--rule", run.rule,
                                         "random|pv|lcmd|kcenter|committee_e|committee_f");
    auto* repr_opt =
        run_cmd->add_option("--representation", run.representation, "ntk|activation|file");
    auto* batch_opt = run_cmd->add_option("--batch", run.batch, "Acquisitions per round");
    auto* rounds_opt = run_cmd->add_option("--rounds", run.rounds, "Acquisition rounds");
    auto* lambda_opt = run_cmd->add_option("--lambda", run.lambda, "Selection regularizer");
    auto* eps_opt = run_cmd->add_option("--eps", run.eps, "Normalization epsilon");
    auto* seed_opt = run_cmd->add_option("--seed", run.seed, "Random seed");

    CalibrateArgs cal;
    auto* cal_cmd = app.add_subcommand("calibrate", "Residual-GP calibration study");
    cal_cmd->add_option("--out", cal.out, "Output directory")->required();
    cal_cmd->add_option("--data", cal.data, "Fully labelled dataset JSONL")->required();
    cal_cmd->add_option("--checkpoint", cal.checkpoint, "Base model checkpoint");
    cal_cmd->add_option("--representation", cal.representation, "ntk|activation")
        ->check(CLI::IsMember({"ntk", "activation"}));
    cal_cmd->add_option("--lambda", cal.lambda, "GP regularizer");
    cal_cmd->add_option("--eps", cal.eps, "Normalization epsilon");
    cal_cmd->add_option("--seed-size", cal.seed_size, "Initial conditioning-set size");
    cal_cmd->add_option("--prefix-steps", cal.prefix_steps, "Acquisition steps to replay");
    cal_cmd->add_option("--seed", cal.seed, "Random seed");

    ReportArgs rep;
    auto* rep_cmd = app.add_subcommand("report", "Kernel-geometry or curve-summary report");
    rep_cmd->add_option("--out", rep.out, "Output directory")->required();
    rep_cmd->add_option("--data", rep.data, "Dataset JSONL (geometry mode)");
    rep_cmd->add_option("--features", rep.features_file, "Feature file (geometry mode)");
    rep_cmd->add_option("--method-curve", rep.method_curve, "Method curve CSV");
    rep_cmd->add_option("--random-curve", rep.random_curve, "Random-baseline curve CSV");
    rep_cmd->add_option("--seed", rep.seed, "Random seed");

    std::vector<const char*> argv;
    argv.push_back("poolforge");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen(gen, out);
        if (feat_cmd->parsed()) return cmd_features(feat, out);
        if (sel_cmd->parsed()) return cmd_select(sel, out);
        if (run_cmd->parsed()) {
            run.rule_set = rule_opt->count() > 0;
            run.repr_set = repr_opt->count() > 0;
            run.batch_set = batch_opt->count() > 0;
            run.rounds_set = rounds_opt->count() > 0;
            run.lambda_set = lambda_opt->count() > 0;
            run.eps_set = eps_opt->count() > 0;
            run.seed_set = seed_opt->count() > 0;
            return cmd_run(run, out);
        }
        if (cal_cmd->parsed()) return cmd_calibrate(cal, out);
        if (rep_cmd->parsed()) return cmd_report(rep, out);
        err << app.help();
        return 2;
    } catch (const Error& e) {
        json record;
        record["error"] = e.code();
        record["message"] = e.what();
        err << record.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json record;
        record["error"] = "InternalError";
        record["message"] = e.what();
        err << record.dump() << "\n";
        return 1;
    }
}

} // namespace poolforge::cli
