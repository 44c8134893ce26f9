#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "run_config.hpp"

namespace {

using namespace robust_embed;
using namespace robust_embed::cli;

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitNonFinite = 3;

int run(int argc, char** argv) {
    CLI::App app{"Adversarially robust sentence embeddings: train, evaluate, attack, plot", "robust-embed"};
    app.fallthrough();
    app.require_subcommand(0, 1);

    std::string config_file;
    bool dump_config = false;
    app.add_option("--config", config_file, "flat key = value config file");
    app.add_flag("--dump-config", dump_config, "print the fully resolved configuration and exit");

    // Every config key doubles as a flag; only flags actually given override.
    std::map<std::string, std::string> flag_values;
    for (const auto& key : RunConfig::keys()) {
        app.add_option("--" + key.name, flag_values[key.name], key.help + " [" + key.default_value + "]");
    }

    auto* train = app.add_subcommand("train", "train an encoder on a sentence corpus");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->require_subcommand(1);
    auto* eval_sts = eval->add_subcommand("sts", "Spearman correlation on an STS set");
    auto* eval_transfer = eval->add_subcommand("transfer", "logistic-regression probe accuracy");
    auto* eval_metrics = eval->add_subcommand("metrics", "alignment and uniformity");
    bool random_init = false;
    eval_metrics->add_flag("--random-init", random_init, "use an untrained encoder instead of the checkpoint");
    auto* attack = app.add_subcommand("attack", "black-box attacks against a checkpoint");
    attack->require_subcommand(1);
    auto* attack_classify = attack->add_subcommand("classify", "label-flip attacks on the classification test set");
    auto* attack_advsts = attack->add_subcommand("advsts", "build the adversarial STS set");
    auto* plot = app.add_subcommand("plot", "scatter plots from metric reports");
    std::vector<std::string> report_files, labels;
    plot->add_option("reports", report_files, "metric report files (metric=value lines)");
    plot->add_option("--labels", labels, "one label per report")->delimiter(',');

    for (auto* sub : {train, eval, eval_sts, eval_transfer, eval_metrics, attack, attack_classify, attack_advsts, plot}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg;
        cfg.apply_environment();
        if (!config_file.empty()) {
            if (!std::filesystem::exists(config_file)) {
                throw InputError("config: no such file: " + config_file);
            }
            cfg.merge_file(config_file);
        }
        for (const auto& key : RunConfig::keys()) {
            if (app.count("--" + key.name) > 0) cfg.set(key.name, flag_values[key.name]);
        }
        cfg.validate();

        if (dump_config) {
            std::cout << cfg.dump();
            return 0;
        }
        if (train->parsed()) {
            cmd_train(cfg);
        } else if (eval_sts->parsed()) {
            cmd_eval_sts(cfg);
        } else if (eval_transfer->parsed()) {
            cmd_eval_transfer(cfg);
        } else if (eval_metrics->parsed()) {
            cmd_eval_metrics(cfg, random_init);
        } else if (attack_classify->parsed()) {
            cmd_attack_classify(cfg);
        } else if (attack_advsts->parsed()) {
            cmd_attack_advsts(cfg);
        } else if (plot->parsed()) {
            if (report_files.empty()) throw ConfigError("plot: no report files given");
            std::vector<std::filesystem::path> paths(report_files.begin(), report_files.end());
            cmd_plot(cfg, paths, labels);
        } else {
            std::cout << app.help();
            return kExitUsage;
        }
        return 0;
    } catch (const NonFiniteLossError& e) {
        std::cerr << "error: non-finite loss\n" << e.what() << '\n';
        return kExitNonFinite;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
