// Command-line front end: data generation, training, the ablation table,
// the inductive split protocol, and checkpoint evaluation. Exit codes:
// 0 success, 2 config error, 3 numerical abort, 4 I/O error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "srdc/harness.hpp"

namespace {

// --out beats the config value; relative paths are resolved against
// SRDC_OUT_ROOT when that is set.
std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& config_value) {
    std::string dir = flag_value.empty() ? config_value : flag_value;
    if (!dir.empty() && dir.front() != '/') {
        if (const char* root = std::getenv("SRDC_OUT_ROOT"))
            dir = std::string(root) + "/" + dir;
    }
    return dir;
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    std::string ablation;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)")
        ->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", opts.seed, "run a single seed instead of the config list");
    cmd->add_option("--ablation", opts.ablation,
                    "variant: full, source_model, no_source_reg, "
                    "no_feature_discrim, no_soft_selection");
}

srdc::ExperimentConfig load_config(const CommonOpts& opts) {
    srdc::ExperimentConfig cfg = srdc::load_experiment_config(opts.config_path);
    cfg.out_dir = resolve_out_dir(opts.out_dir, cfg.out_dir);
    if (opts.seed >= 0)
        cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
    if (!opts.ablation.empty()) {
        cfg.ablation = opts.ablation;
        srdc::detail::apply_ablation(cfg.train, opts.ablation);
    }
    return cfg;
}

void print_run_warnings(const srdc::json& report) {
    if (!report.contains("runs")) return;
    for (const auto& run : report.at("runs")) {
        if (run.value("kmeans_reseeds", 0) > 0)
            std::cerr << "warning: seed " << run.at("seed")
                      << ": empty target cluster reseeded "
                      << run.at("kmeans_reseeds") << " time(s)\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structurally regularized deep clustering for domain adaptation"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, ablate_opts, inductive_opts;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "write source/target CSVs");
    add_common(cmd_gen, gen_opts);
    CLI::App* cmd_train = app.add_subcommand("train", "train over the seed list");
    add_common(cmd_train, train_opts);
    CLI::App* cmd_ablate =
        app.add_subcommand("ablate", "run the five-variant ablation table");
    add_common(cmd_ablate, ablate_opts);
    CLI::App* cmd_inductive =
        app.add_subcommand("inductive", "50/50 held-out target protocol");
    add_common(cmd_inductive, inductive_opts);

    std::string eval_checkpoint, eval_data, eval_out = "runs/eval",
                eval_domain = "target";
    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a CSV");
    cmd_eval->add_option("--checkpoint", eval_checkpoint, "checkpoint JSON")->required();
    cmd_eval->add_option("--data", eval_data, "labeled dataset CSV")->required();
    cmd_eval->add_option("--out", eval_out, "output directory");
    cmd_eval->add_option("--domain", eval_domain, "domain tag for the embedding dump");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_gen->parsed()) {
            const auto cfg = load_config(gen_opts);
            const auto result = srdc::cmd_gen_data(cfg);
            std::cout << result.source_path << "\n" << result.target_path << "\n";
        } else if (cmd_train->parsed()) {
            const auto cfg = load_config(train_opts);
            const auto report = srdc::cmd_train(cfg);
            print_run_warnings(report);
            std::cout << "mean target acc " << report.at("mean_target_acc")
                      << " +/- " << report.at("std_target_acc") << " ("
                      << cfg.ablation << ", " << cfg.seeds.size()
                      << " seed(s)) -> " << cfg.out_dir << "/report.json\n";
        } else if (cmd_ablate->parsed()) {
            const auto cfg = load_config(ablate_opts);
            const auto report = srdc::cmd_ablate(cfg);
            for (const auto& variant : report.at("variants"))
                std::cout << variant.at("variant").get<std::string>() << ": "
                          << variant.at("mean") << " +/- " << variant.at("std")
                          << "\n";
            std::cout << "-> " << cfg.out_dir << "/ablation.json\n";
        } else if (cmd_inductive->parsed()) {
            const auto cfg = load_config(inductive_opts);
            const auto report = srdc::cmd_inductive(cfg);
            for (const std::string name : {"srdc", "source_only"})
                std::cout << name << ": held-out "
                          << report.at(name).at("inductive_mean")
                          << ", target-train "
                          << report.at(name).at("transductive_mean") << "\n";
            std::cout << "-> " << cfg.out_dir << "/inductive.json\n";
        } else if (cmd_eval->parsed()) {
            const std::string out_dir = resolve_out_dir(eval_out, eval_out);
            const auto report =
                srdc::cmd_eval(eval_checkpoint, eval_data, out_dir, eval_domain);
            std::cout << "accuracy " << report.at("accuracy") << ", nmi "
                      << report.at("nmi") << " -> " << out_dir << "/report.json\n";
        }
    } catch (const srdc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const srdc::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const srdc::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
