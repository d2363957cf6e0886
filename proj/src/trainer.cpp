#include "limtr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <stdexcept>

#include "limtr/checkpoint.hpp"

namespace limtr {

std::vector<std::string> list_bundle_dirs(const std::string& data_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(data_dir))
        throw std::runtime_error("data directory not found: " + data_dir);
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (!entry.is_directory()) continue;
        if (fs::exists(entry.path() / "header.json")) dirs.push_back(entry.path().string());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw std::runtime_error("no scenario bundles under " + data_dir);
    return dirs;
}

void split_bundles(const std::vector<std::string>& dirs, double val_fraction,
                   std::vector<std::string>& train_dirs, std::vector<std::string>& val_dirs) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("val fraction must lie in [0,1)");
    const size_t n_val = static_cast<size_t>(std::llround(val_fraction * dirs.size()));
    const size_t n_train = dirs.size() - n_val;
    train_dirs.assign(dirs.begin(), dirs.begin() + static_cast<long>(n_train));
    val_dirs.assign(dirs.begin() + static_cast<long>(n_train), dirs.end());
}

Dataset prepare_dataset(const std::vector<std::string>& bundle_dirs, const ModelConfig& config,
                        uint64_t data_seed) {
    std::vector<std::vector<DatasetTarget>> per_scenario(bundle_dirs.size());
    std::string first_error;
    std::mutex error_mu;
    parallel_for(bundle_dirs.size(), [&](size_t b0, size_t b1) {
        for (size_t i = b0; i < b1; ++i) {
            try {
                const Scenario scenario = read_bundle(bundle_dirs[i]);
                for (size_t a = 0; a < scenario.agents.size(); ++a) {
                    DatasetTarget t;
                    t.prepared = prepare_target(scenario, a, config, data_seed);
                    t.track = scenario.agents[a];
                    per_scenario[i].push_back(std::move(t));
                }
            } catch (const std::exception& e) {
                std::lock_guard lk(error_mu);
                if (first_error.empty()) first_error = e.what();
            }
        }
    });
    if (!first_error.empty()) throw std::runtime_error(first_error);

    Dataset out;
    for (auto& group : per_scenario)
        for (auto& t : group) out.targets.push_back(std::move(t));
    if (out.targets.empty()) throw std::runtime_error("dataset is empty");
    return out;
}

IntentionPointSet intentions_from_dataset(const Dataset& dataset, int k, uint64_t seed,
                                          int max_iters) {
    std::array<std::vector<Vec2>, 3> endpoints;
    for (const auto& t : dataset.targets) {
        if (!t.prepared.gt.has_valid) continue;
        endpoints[static_cast<size_t>(t.prepared.cls)].push_back(t.prepared.gt.endpoint);
    }

    IntentionPointSet set;
    set.k = k;
    for (size_t c = 0; c < 3; ++c) {
        if (endpoints[c].size() >= static_cast<size_t>(k)) {
            set.per_class[c] = kmeans(endpoints[c], k,
                                      derive_seed(seed, "intentions/" + std::to_string(c)),
                                      max_iters);
        } else {
            // Not enough data for this class: a fixed fan of anchors ahead of
            // the agent, scaled to a class-typical 8 s travel distance.
            const double reach = c == static_cast<size_t>(AgentClass::kVehicle) ? 40.0
                                 : c == static_cast<size_t>(AgentClass::kPedestrian) ? 10.0
                                                                                     : 25.0;
            set.per_class[c] = {{reach, 0.0},          {0.6 * reach, 0.5 * reach},
                                {0.6 * reach, -0.5 * reach}, {0.1 * reach, 0.7 * reach},
                                {0.1 * reach, -0.7 * reach}, {0.2 * reach, 0.0}};
            set.per_class[c].resize(static_cast<size_t>(k),
                                    set.per_class[c].empty() ? Vec2{0.0, 0.0}
                                                             : set.per_class[c].back());
        }
    }
    return set;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset* val_set,
                  const OptimConfig& optim,
                  const std::function<void(const EpochStats&)>& on_epoch, int val_every) {
    if (val_every < 1) val_every = 1;
    optim.validate();
    if (train_set.targets.empty()) throw std::invalid_argument("train: empty dataset");

    const size_t n = train_set.targets.size();
    const size_t batch = static_cast<size_t>(optim.batch_size);
    const int steps_per_epoch = static_cast<int>(n / batch) + ((n % batch) >= 2 ? 1 : 0);
    const int total_steps = steps_per_epoch * optim.epochs;

    AdamW adamw(optim);
    TrainResult result;
    result.total_steps = total_steps;
    int t = 0;

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < optim.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(optim.seed, "epoch/" + std::to_string(epoch)));
        for (size_t i = n; i-- > 1;) {
            const size_t j = shuffle_rng.uniform_int(i + 1);
            std::swap(order[i], order[j]);
        }

        EpochStats stats;
        stats.epoch = epoch;
        int batches = 0;
        for (size_t begin = 0; begin + 2 <= n; begin += batch) {
            const size_t end = std::min(n, begin + batch);
            if (end - begin < 2) break;  // batch statistics need >= 2 targets
            std::vector<const PreparedTarget*> ptrs;
            ptrs.reserve(end - begin);
            for (size_t i = begin; i < end; ++i)
                ptrs.push_back(&train_set.targets[order[i]].prepared);

            model.store.zero_grads();
            const auto res = model.run_batch(ptrs, Mode::kTrain, /*compute_loss=*/true,
                                             /*backprop=*/true);
            if (!std::isfinite(res.loss))
                throw std::runtime_error("non-finite loss in epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches));
            ++t;
            adamw.step(model.store, t, lr_schedule(t, total_steps, optim));
            stats.train_loss += res.loss;
            stats.nll += res.nll;
            stats.velocity += res.velocity;
            stats.cross_entropy += res.cross_entropy;
            ++batches;
        }
        if (batches > 0) {
            stats.train_loss /= batches;
            stats.nll /= batches;
            stats.velocity /= batches;
            stats.cross_entropy /= batches;
        }
        const bool last_epoch = epoch == optim.epochs - 1;
        if (val_set && (last_epoch || (epoch + 1) % val_every == 0))
            stats.validation = evaluate(model, *val_set);
        if (on_epoch) on_epoch(stats);
        result.epochs.push_back(std::move(stats));
    }
    return result;
}

MetricsReport evaluate(Model& model, const Dataset& dataset,
                       std::vector<ScenePrediction>* predictions_out,
                       const EvalConfig& eval_config) {
    if (dataset.targets.empty()) throw std::invalid_argument("evaluate: empty dataset");
    std::vector<MetricsInput> inputs;
    inputs.reserve(dataset.targets.size());

    const size_t batch = 64;
    for (size_t begin = 0; begin < dataset.targets.size(); begin += batch) {
        const size_t end = std::min(dataset.targets.size(), begin + batch);
        std::vector<const PreparedTarget*> ptrs;
        for (size_t i = begin; i < end; ++i)
            ptrs.push_back(&dataset.targets[i].prepared);
        const auto res = model.run_batch(ptrs, Mode::kEval, /*compute_loss=*/false,
                                         /*backprop=*/false);
        for (size_t i = begin; i < end; ++i) {
            const auto& prepared = dataset.targets[i].prepared;
            ScenePrediction sp = to_scene_frame(
                res.predictions[i - begin], prepared.ref_pose.x, prepared.ref_pose.y,
                prepared.ref_pose.heading, prepared.scenario_id, prepared.agent_index,
                prepared.cls);
            inputs.push_back(metrics_input_from(sp, dataset.targets[i].track));
            if (predictions_out) predictions_out->push_back(std::move(sp));
        }
    }
    return aggregate(inputs, eval_config);
}

void save_checkpoint(const Model& model, const std::string& path) {
    write_checkpoint(path, params_to_entries(model.store));
}

void load_checkpoint(Model& model, const std::string& path) {
    load_params(model.store, read_checkpoint(path));
    model.sync_intentions_from_store();
}

}  // namespace limtr
