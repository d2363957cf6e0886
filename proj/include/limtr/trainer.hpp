#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "limtr/metrics.hpp"
#include "limtr/model.hpp"
#include "limtr/optim.hpp"

namespace limtr {

// A prepared target plus the ground-truth track it came from (kept for
// metric evaluation in the scene frame).
struct DatasetTarget {
    PreparedTarget prepared;
    AgentTrack track;
};

struct Dataset {
    std::vector<DatasetTarget> targets;
};

std::vector<std::string> list_bundle_dirs(const std::string& data_dir);

// Streams bundles (sorted by directory name) and preprocesses every agent.
// Deterministic given the seed; scenarios are processed in parallel but
// assembled in directory order.
Dataset prepare_dataset(const std::vector<std::string>& bundle_dirs, const ModelConfig& config,
                        uint64_t data_seed);

// Deterministic tail split by scenario order: the last `fraction` of the
// bundle list becomes validation.
void split_bundles(const std::vector<std::string>& dirs, double val_fraction,
                   std::vector<std::string>& train_dirs, std::vector<std::string>& val_dirs);

// Agent-frame gt endpoints per class, k-means'd into intention points.
// Classes with fewer than k endpoints fall back to a fixed anchor template
// scaled by the class's typical speed.
IntentionPointSet intentions_from_dataset(const Dataset& dataset, int k, uint64_t seed,
                                          int max_iters = 50);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0, nll = 0.0, velocity = 0.0, cross_entropy = 0.0;
    std::optional<MetricsReport> validation;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    int total_steps = 0;
};

// Seeded-shuffle epochs over the train targets; batches under 2 targets are
// dropped (batch statistics need at least 2 rows). Aborts on non-finite loss
// (naming the batch) or gradients (naming the parameter). Validation metrics
// run every val_every epochs (and on the final epoch).
TrainResult train(Model& model, const Dataset& train_set, const Dataset* val_set,
                  const OptimConfig& optim,
                  const std::function<void(const EpochStats&)>& on_epoch = nullptr,
                  int val_every = 1);

// Eval-mode forward over every target in order; optionally collects the
// scene-frame predictions for dumping.
MetricsReport evaluate(Model& model, const Dataset& dataset,
                       std::vector<ScenePrediction>* predictions_out = nullptr,
                       const EvalConfig& eval_config = EvalConfig());

void save_checkpoint(const Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);

}  // namespace limtr
