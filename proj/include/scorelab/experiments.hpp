#pragma once

#include <nlohmann/json.hpp>

#include "scorelab/eval_metrics.hpp"

namespace scorelab {

// Config-driven experiment runner. Experiments:
//   E1_score_approx        constructed score network across a budget schedule
//   E2_train_sample        train, sample with the exponential integrator, TV vs p0
//   E3_builders            certification of all shallow builders
//   E4_kl_short_time       short-time KL bound check
//   E5_generalization_trend  score error vs sample count, truncated risk gap
struct ExperimentConfig {
    std::string experiment;
    std::vector<uint64_t> seeds;
    std::string output_dir;
    nlohmann::json params;
    nlohmann::json raw;
    // target is stored in raw["target"]; parsed lazily because E3 needs none
};

ExperimentConfig parse_config(const nlohmann::json& j);

// Semantic hash: canonical serialization with the output directory excluded.
uint64_t config_hash(const nlohmann::json& j);

// Runs the experiment; writes results.csv, manifest.json and artifacts into
// the output directory. Throws ConfigError / NumericalError / CheckFailure.
void run_experiment(const ExperimentConfig& cfg, bool parallel_seeds = false);

// Aggregates results.csv files under dir into a summary table.
void write_report(const std::string& results_dir, std::ostream& os);

// Appends a metric row with the stable schema
// name,value,stderr,n,seed,config_hash.
void append_metric_csv(std::ostream& os, const MetricReport& rep, uint64_t cfg_hash);

}  // namespace scorelab
