#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "scorelab/experiments.hpp"

using namespace scorelab;

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scorelab - score-based generative modeling laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_override, seed_override, report_dir;
    bool parallel_seeds = false;

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config_path, "experiment config (json)")->required();
    run->add_option("--out", out_override, "override the output directory");
    run->add_option("--seed-override", seed_override, "comma-separated seed list");
    run->add_flag("--parallel-seeds", parallel_seeds, "run seed replicates in threads");

    auto* validate = app.add_subcommand("validate", "validate a config without running");
    validate->add_option("config", config_path, "experiment config (json)")->required();

    auto* report = app.add_subcommand("report", "aggregate results.csv files");
    report->add_option("results_dir", report_dir, "directory with experiment outputs")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            write_report(report_dir, std::cout);
            return 0;
        }
        nlohmann::json j = load_json(config_path);
        if (!out_override.empty()) j["output_dir"] = out_override;
        if (!seed_override.empty()) {
            nlohmann::json seeds = nlohmann::json::array();
            std::istringstream ss(seed_override);
            std::string tok;
            while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
            j["seeds"] = seeds;
        }
        ExperimentConfig cfg = parse_config(j);
        if (validate->parsed()) {
            std::cout << "ok: " << cfg.experiment << " (" << cfg.seeds.size()
                      << " seeds), config hash " << std::hex << config_hash(j) << std::dec
                      << "\n";
            return 0;
        }
        run_experiment(cfg, parallel_seeds);
        std::cout << "done: results in " << cfg.output_dir << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const CheckFailure& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
