#pragma once

#include <string>

#include "limtr/trainer.hpp"

namespace limtr {

// Bundle generation loop used by the CLI and the python module: directories
// scn_00000, scn_00001, ... under out_dir, agent counts drawn per scenario.
void generate_bundles(const std::string& out_dir, int n_scenarios, uint64_t seed,
                      double cue_strength, int min_agents = 1, int max_agents = 8);

struct PipelineSettings {
    ModelConfig model;
    OptimConfig optim;
    std::string data_dir;
    std::string val_data_dir;  // takes precedence over val_fraction when set
    double val_fraction = 0.0;
    std::string out_dir;  // checkpoint.bin, config.json, loss_trace.csv, metrics.*
    bool quiet = true;
    int val_every = 1;  // validation cadence in epochs
};

struct PipelineResult {
    std::string checkpoint_path;
    bool has_metrics = false;
    MetricsReport metrics;
    int total_steps = 0;
    double final_train_loss = 0.0;
};

// Full train -> checkpoint -> (optional) validation pipeline. Deterministic
// given the settings.
PipelineResult run_training_pipeline(const PipelineSettings& settings);

// Loads a checkpoint (file or training output directory), evaluates on the
// bundles, writes predictions.jsonl + metrics.json/csv into out_dir.
MetricsReport run_eval_pipeline(const std::string& checkpoint, const std::string& data_dir,
                                const std::string& out_dir, uint64_t seed_override = 0);

}  // namespace limtr
