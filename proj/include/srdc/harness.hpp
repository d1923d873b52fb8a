#pragma once

// Experiment harness behind the CLI: strict JSON experiment configs
// (unknown keys are errors), dataset loading, multi-seed training runs,
// the ablation table, the 50/50 inductive protocol, and evaluation
// artifacts. Every command is a pure function of its config; emitted files
// contain no timestamps so reruns are byte-identical.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "srdc/checkpoint.hpp"
#include "srdc/data.hpp"
#include "srdc/errors.hpp"
#include "srdc/evaluation.hpp"
#include "srdc/trainer.hpp"

namespace srdc {

using json = nlohmann::json;

inline const char* kAblationNames[] = {"source_model", "no_source_reg",
                                       "no_feature_discrim", "no_soft_selection",
                                       "full"};

struct ExperimentConfig {
    bool use_generator = true;
    ShiftSpec shift;
    std::string source_csv, target_csv;

    std::vector<std::size_t> hidden = {64, 32};
    std::size_t feature_dim = 8;

    TrainConfig train;
    std::string ablation = "full";
    std::vector<std::uint64_t> seeds = {0};
    std::string out_dir = "runs/out";
};

namespace detail {

inline void reject_unknown(const json& obj,
                           std::initializer_list<const char*> allowed,
                           const std::string& where) {
    if (!obj.is_object())
        throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) known = known || it.key() == key;
        if (!known)
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
}

inline void apply_ablation(TrainConfig& cfg, const std::string& name) {
    cfg.source_only = cfg.no_source_reg = cfg.no_feature_discrim =
        cfg.no_soft_selection = false;
    if (name == "full") return;
    if (name == "source_model")
        cfg.source_only = true;
    else if (name == "no_source_reg")
        cfg.no_source_reg = true;
    else if (name == "no_feature_discrim")
        cfg.no_feature_discrim = true;
    else if (name == "no_soft_selection")
        cfg.no_soft_selection = true;
    else
        throw ConfigError("config: unknown ablation '" + name + "'");
}

inline std::string format_acc(double v) { return detail::format_double(v); }

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const json& doc) {
    detail::reject_unknown(
        doc, {"schema_version", "data", "model", "train", "seeds", "out_dir"},
        "config");
    if (doc.value("schema_version", 0) != 1)
        throw ConfigError("config: schema_version must be 1");

    ExperimentConfig cfg;
    if (!doc.contains("data")) throw ConfigError("config: missing 'data'");
    const json& data = doc.at("data");
    const bool has_gen = data.contains("generator");
    const bool has_csv = data.contains("source_csv") || data.contains("target_csv");
    if (has_gen == has_csv)
        throw ConfigError("config: specify exactly one data source "
                          "(generator or source_csv/target_csv)");
    if (has_gen) {
        detail::reject_unknown(data,
                               {"generator", "classes", "samples_per_class",
                                "separation", "noise_std", "rotation_deg",
                                "translation", "imbalance", "seed"},
                               "data");
        cfg.use_generator = true;
        const std::string kind = data.at("generator").get<std::string>();
        if (kind == "blobs")
            cfg.shift.generator = ShiftSpec::Generator::blobs;
        else if (kind == "moons")
            cfg.shift.generator = ShiftSpec::Generator::moons;
        else
            throw ConfigError("config: generator must be 'blobs' or 'moons'");
        cfg.shift.classes = data.value("classes", cfg.shift.classes);
        cfg.shift.samples_per_class =
            data.value("samples_per_class", cfg.shift.samples_per_class);
        cfg.shift.separation = data.value("separation", cfg.shift.separation);
        cfg.shift.noise_std = data.value("noise_std", cfg.shift.noise_std);
        cfg.shift.rotation_deg = data.value("rotation_deg", cfg.shift.rotation_deg);
        if (data.contains("translation"))
            cfg.shift.translation = data.at("translation").get<std::vector<double>>();
        if (data.contains("imbalance"))
            cfg.shift.target_imbalance =
                data.at("imbalance").get<std::vector<double>>();
        cfg.shift.seed = data.value("seed", cfg.shift.seed);
        cfg.shift.validate();
    } else {
        detail::reject_unknown(data, {"source_csv", "target_csv"}, "data");
        cfg.use_generator = false;
        if (!data.contains("source_csv") || !data.contains("target_csv"))
            throw ConfigError("config: both source_csv and target_csv required");
        cfg.source_csv = data.at("source_csv").get<std::string>();
        cfg.target_csv = data.at("target_csv").get<std::string>();
    }

    if (doc.contains("model")) {
        const json& model = doc.at("model");
        detail::reject_unknown(model, {"hidden", "feature_dim"}, "model");
        if (model.contains("hidden"))
            cfg.hidden = model.at("hidden").get<std::vector<std::size_t>>();
        cfg.feature_dim = model.value("feature_dim", cfg.feature_dim);
    }

    if (doc.contains("train")) {
        const json& train = doc.at("train");
        detail::reject_unknown(train,
                               {"epochs", "batch_size", "momentum", "weight_decay",
                                "lr0", "lr_alpha", "lr_beta", "lambda_gamma",
                                "aux_mode", "selection", "ablation",
                                "kmeans_max_iters", "kmeans_tol"},
                               "train");
        TrainConfig& t = cfg.train;
        t.epochs = train.value("epochs", t.epochs);
        t.batch_size = train.value("batch_size", t.batch_size);
        t.momentum = train.value("momentum", t.momentum);
        t.weight_decay = train.value("weight_decay", t.weight_decay);
        t.schedule.eta0 = train.value("lr0", t.schedule.eta0);
        t.schedule.alpha = train.value("lr_alpha", t.schedule.alpha);
        t.schedule.beta = train.value("lr_beta", t.schedule.beta);
        t.schedule.gamma = train.value("lambda_gamma", t.schedule.gamma);
        t.kmeans_max_iters = train.value("kmeans_max_iters", t.kmeans_max_iters);
        t.kmeans_tol = train.value("kmeans_tol", t.kmeans_tol);
        if (train.contains("aux_mode")) {
            const std::string mode = train.at("aux_mode").get<std::string>();
            if (mode == "batch")
                t.aux_mode = AuxMode::batch;
            else if (mode == "full")
                t.aux_mode = AuxMode::full;
            else
                throw ConfigError("config: aux_mode must be 'batch' or 'full'");
        }
        if (train.contains("selection")) {
            const std::string mode = train.at("selection").get<std::string>();
            if (mode == "best_target_acc")
                t.selection = Selection::best_target_acc;
            else if (mode == "final_epoch")
                t.selection = Selection::final_epoch;
            else
                throw ConfigError(
                    "config: selection must be 'best_target_acc' or 'final_epoch'");
        }
        if (train.contains("ablation"))
            cfg.ablation = train.at("ablation").get<std::string>();
        detail::apply_ablation(t, cfg.ablation);  // validates the name
    }

    if (doc.contains("seeds")) {
        cfg.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    }
    cfg.out_dir = doc.value("out_dir", cfg.out_dir);
    cfg.train.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in '" + path + "': " + e.what());
    }
    return parse_experiment_config(doc);
}

// Source keeps its labels; target labels are demoted to the evaluation
// channel before anything downstream can see them.
inline std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.use_generator) {
        return cfg.shift.generator == ShiftSpec::Generator::blobs
                   ? gen_blobs(cfg.shift)
                   : gen_moons(cfg.shift);
    }
    Dataset source = load_csv(cfg.source_csv);
    if (source.y.empty())
        throw ConfigError("data: source csv '" + cfg.source_csv + "' has no labels");
    for (int label : source.y)
        if (label == -1)
            throw ConfigError("data: source csv must be fully labeled");
    source.domain = Domain::source;
    Dataset target = as_unlabeled_target(load_csv(cfg.target_csv));
    return {std::move(source), std::move(target)};
}

inline ModelSpec make_model_spec(const ExperimentConfig& cfg, const Dataset& source) {
    ModelSpec spec;
    spec.input_dim = source.dim();
    spec.hidden = cfg.hidden;
    spec.feature_dim = cfg.feature_dim;
    int max_label = 0;
    for (int label : source.y)
        if (label > max_label) max_label = label;
    spec.classes = cfg.use_generator ? cfg.shift.classes
                                     : static_cast<std::size_t>(max_label);
    spec.validate();
    return spec;
}

namespace detail {

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_json(const std::string& path, const json& doc) {
    write_text(path, doc.dump(1) + "\n");
}

struct Stats {
    double mean = 0.0, stddev = 0.0;
};

// Mean and sample standard deviation (n-1), 0 for a single value.
inline Stats mean_std(const std::vector<double>& v) {
    Stats s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

}  // namespace detail

// ---- gen-data ---------------------------------------------------------------

struct GenDataResult {
    std::string source_path, target_path;
};

inline GenDataResult cmd_gen_data(const ExperimentConfig& cfg) {
    if (!cfg.use_generator)
        throw ConfigError("gen-data: config must use a generator data source");
    auto [source, target] = load_experiment_data(cfg);
    detail::ensure_dir(cfg.out_dir);
    GenDataResult result;
    result.source_path = cfg.out_dir + "/source.csv";
    result.target_path = cfg.out_dir + "/target.csv";
    save_csv(result.source_path, source);
    save_csv(result.target_path, target);  // labels land in the csv for later eval
    return result;
}

// ---- train --------------------------------------------------------------------

struct SeedRun {
    std::uint64_t seed = 0;
    TrainResult result;
    EvalReport target_report;
};

inline SeedRun run_one_seed(const ExperimentConfig& cfg, const Dataset& source,
                            const Dataset& target, const ModelSpec& spec,
                            std::uint64_t seed,
                            const ModelParams* warm_start = nullptr,
                            bool pretrained = false) {
    SeedRun run;
    run.seed = seed;
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.pretrained = pretrained;
    run.result = train(tc, source, target, spec, warm_start);
    bool any_label = false;
    for (int label : target.metric_labels()) any_label = any_label || label != -1;
    if (any_label)
        run.target_report = evaluate(run.result.selected, target);
    else
        run.target_report.accuracy = -1.0;  // unlabeled target, nothing to score
    return run;
}

inline json cmd_train(const ExperimentConfig& cfg) {
    auto [source, target] = load_experiment_data(cfg);
    const ModelSpec spec = make_model_spec(cfg, source);
    detail::ensure_dir(cfg.out_dir);

    json runs = json::array();
    std::vector<double> accs;
    for (std::uint64_t seed : cfg.seeds) {
        SeedRun run = run_one_seed(cfg, source, target, spec, seed);
        const std::string run_dir = cfg.out_dir + "/run_seed" + std::to_string(seed);
        detail::ensure_dir(run_dir);
        detail::write_text(run_dir + "/history.csv", run.result.history.to_csv());
        save_checkpoint(run_dir + "/checkpoint.json", spec, run.result.selected);

        std::size_t reseeds = 0;
        for (const EpochRecord& rec : run.result.history.epochs)
            reseeds += rec.kmeans_reseeds;

        json entry;
        entry["seed"] = seed;
        entry["selected_epoch"] = run.result.history.selected_epoch;
        entry["target_acc"] = run.target_report.accuracy;
        entry["target_nmi"] = run.target_report.nmi;
        entry["source_acc"] = run.result.history.epochs.back().source_acc;
        entry["kmeans_reseeds"] = reseeds;
        runs.push_back(std::move(entry));
        accs.push_back(run.target_report.accuracy);
    }
    detail::Stats stats = detail::mean_std(accs);

    json report;
    report["schema_version"] = 1;
    report["ablation"] = cfg.ablation;
    report["seeds"] = cfg.seeds;
    report["runs"] = std::move(runs);
    report["mean_target_acc"] = stats.mean;
    report["std_target_acc"] = stats.stddev;
    detail::write_json(cfg.out_dir + "/report.json", report);
    return report;
}

// ---- ablate -------------------------------------------------------------------

// Runs the five-variant suite per seed. The variant without source
// regularization has no supervised signal of its own, so it fine-tunes the
// trained supervised baseline of the same seed, with the classifier and
// centers at the 10x fine-tuning rate.
inline json cmd_ablate(const ExperimentConfig& cfg) {
    auto [source, target] = load_experiment_data(cfg);
    const ModelSpec spec = make_model_spec(cfg, source);
    detail::ensure_dir(cfg.out_dir);

    std::vector<ModelParams> baseline_params;  // per seed, from source_model
    json variants = json::array();
    std::string table = "variant,seed,target_acc\n";

    for (const char* name : kAblationNames) {
        ExperimentConfig variant_cfg = cfg;
        variant_cfg.ablation = name;
        detail::apply_ablation(variant_cfg.train, name);

        std::vector<double> accs;
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
            const std::uint64_t seed = cfg.seeds[si];
            SeedRun run;
            if (std::string(name) == "no_source_reg")
                run = run_one_seed(variant_cfg, source, target, spec, seed,
                                   &baseline_params.at(si), /*pretrained=*/true);
            else
                run = run_one_seed(variant_cfg, source, target, spec, seed);
            if (std::string(name) == "source_model")
                baseline_params.push_back(run.result.selected);
            accs.push_back(run.target_report.accuracy);
            table += std::string(name) + "," + std::to_string(seed) + "," +
                     detail::format_acc(run.target_report.accuracy) + "\n";
        }
        detail::Stats stats = detail::mean_std(accs);
        json entry;
        entry["variant"] = name;
        entry["accs"] = accs;
        entry["mean"] = stats.mean;
        entry["std"] = stats.stddev;
        variants.push_back(std::move(entry));
    }

    json report;
    report["schema_version"] = 1;
    report["seeds"] = cfg.seeds;
    report["variants"] = std::move(variants);
    detail::write_json(cfg.out_dir + "/ablation.json", report);
    detail::write_text(cfg.out_dir + "/ablation.csv", table);
    return report;
}

// ---- inductive ------------------------------------------------------------------

// 50/50 protocol: the full labeled source plus the target training half are
// the training data; the held-out target half is evaluation-only. Model
// selection is forced to final_epoch so test data never influences it.
inline json cmd_inductive(const ExperimentConfig& cfg, double ratio = 0.5) {
    auto [source, target] = load_experiment_data(cfg);
    const ModelSpec spec = make_model_spec(cfg, source);
    detail::ensure_dir(cfg.out_dir);

    json report;
    report["schema_version"] = 1;
    report["seeds"] = cfg.seeds;
    report["split_ratio"] = ratio;

    for (const std::string name : {"srdc", "source_only"}) {
        ExperimentConfig variant_cfg = cfg;
        variant_cfg.ablation = name == "srdc" ? "full" : "source_model";
        detail::apply_ablation(variant_cfg.train, variant_cfg.ablation);
        variant_cfg.train.selection = Selection::final_epoch;

        std::vector<double> train_accs, test_accs;
        json runs = json::array();
        for (std::uint64_t seed : cfg.seeds) {
            auto [target_train, target_test] = split(target, ratio, seed);
            SeedRun run = run_one_seed(variant_cfg, source, target_train, spec, seed);
            EvalReport test_report = evaluate(run.result.selected, target_test);
            train_accs.push_back(run.target_report.accuracy);
            test_accs.push_back(test_report.accuracy);
            json entry;
            entry["seed"] = seed;
            entry["transductive_acc"] = run.target_report.accuracy;
            entry["inductive_acc"] = test_report.accuracy;
            runs.push_back(std::move(entry));
        }
        detail::Stats train_stats = detail::mean_std(train_accs);
        detail::Stats test_stats = detail::mean_std(test_accs);
        json entry;
        entry["runs"] = std::move(runs);
        entry["transductive_mean"] = train_stats.mean;
        entry["transductive_std"] = train_stats.stddev;
        entry["inductive_mean"] = test_stats.mean;
        entry["inductive_std"] = test_stats.stddev;
        report[name] = std::move(entry);
    }
    detail::write_json(cfg.out_dir + "/inductive.json", report);
    return report;
}

// ---- eval ----------------------------------------------------------------------

inline json cmd_eval(const std::string& checkpoint_path, const std::string& data_csv,
                     const std::string& out_dir,
                     const std::string& domain_tag = "target") {
    auto [spec, params] = load_checkpoint(checkpoint_path);
    Dataset ds = load_csv(data_csv);
    if (ds.dim() != spec.input_dim)
        throw ConfigError("eval: dataset dim " + std::to_string(ds.dim()) +
                          " does not match checkpoint input dim " +
                          std::to_string(spec.input_dim));
    EvalReport report = evaluate(params, ds);
    detail::ensure_dir(out_dir);

    json doc;
    doc["schema_version"] = 1;
    doc["accuracy"] = report.accuracy;
    doc["per_class_accuracy"] = report.per_class_accuracy;
    doc["nmi"] = report.nmi;
    detail::write_json(out_dir + "/report.json", doc);

    std::string confusion;
    for (std::size_t i = 0; i < report.confusion.size(); ++i) {
        for (std::size_t j = 0; j < report.confusion[i].size(); ++j) {
            if (j) confusion += ',';
            confusion += std::to_string(report.confusion[i][j]);
        }
        confusion += '\n';
    }
    detail::write_text(out_dir + "/confusion.csv", confusion);

    const Tensor projected = pca_project(embed(params, ds.X), 2);
    const std::vector<int>& labels = ds.metric_labels();
    std::string embeddings = "pc1,pc2,label,prediction,domain\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        embeddings += detail::format_double(projected.at(i, 0)) + "," +
                      detail::format_double(projected.at(i, 1)) + "," +
                      std::to_string(labels[i]) + "," +
                      std::to_string(report.predictions[i]) + "," + domain_tag +
                      "\n";
    }
    detail::write_text(out_dir + "/embeddings.csv", embeddings);
    return doc;
}

}  // namespace srdc
