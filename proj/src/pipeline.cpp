#include "limtr/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "limtr/checkpoint.hpp"
#include "limtr/config_json.hpp"

#ifndef LIMTR_BUILD_VERSION
#define LIMTR_BUILD_VERSION "unknown"
#endif

namespace limtr {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
}

}  // namespace

void generate_bundles(const std::string& out_dir, int n_scenarios, uint64_t seed,
                      double cue_strength, int min_agents, int max_agents) {
    if (min_agents < 1 || max_agents > 8 || min_agents > max_agents)
        throw std::invalid_argument("generate_bundles: need 1 <= min_agents <= max_agents <= 8");
    if (cue_strength < 0.0 || cue_strength > 1.0)
        throw std::invalid_argument("generate_bundles: cue_strength must lie in [0,1]");
    const CueSpec cue{cue_strength};
    std::filesystem::create_directories(out_dir);
    for (int i = 0; i < n_scenarios; ++i) {
        const uint64_t scenario_seed = derive_seed(seed, static_cast<uint64_t>(i));
        Rng rng(derive_seed(scenario_seed, "n_agents"));
        const int n_agents = min_agents + static_cast<int>(rng.uniform_int(
                                              static_cast<uint64_t>(max_agents - min_agents + 1)));
        Scenario s = gen_scenario(scenario_seed, n_agents, cue);
        char name[32];
        std::snprintf(name, sizeof(name), "scn_%05d", i);
        s.id = name;
        write_bundle(s, out_dir + "/" + name);
    }
}

PipelineResult run_training_pipeline(const PipelineSettings& settings) {
    ModelConfig config = settings.model;
    config.finalize();
    const OptimConfig& optim = settings.optim;

    std::vector<std::string> train_dirs, val_dirs;
    if (!settings.val_data_dir.empty()) {
        train_dirs = list_bundle_dirs(settings.data_dir);
        val_dirs = list_bundle_dirs(settings.val_data_dir);
    } else {
        split_bundles(list_bundle_dirs(settings.data_dir), settings.val_fraction, train_dirs,
                      val_dirs);
    }

    const Dataset train_set = prepare_dataset(train_dirs, config, optim.seed);
    Dataset val_set;
    if (!val_dirs.empty()) val_set = prepare_dataset(val_dirs, config, optim.seed);

    Model model(config, optim.seed);
    model.set_intentions(intentions_from_dataset(train_set, config.n_modes,
                                                 derive_seed(optim.seed, "intentions")));

    std::filesystem::create_directories(settings.out_dir);
    std::ofstream trace(settings.out_dir + "/loss_trace.csv", std::ios::trunc);
    trace << "epoch,train_loss,nll,velocity,cross_entropy,val_min_ade,val_map\n";
    trace.precision(10);

    PipelineResult out;
    const auto result = train(
        model, train_set, val_dirs.empty() ? nullptr : &val_set, optim,
        [&](const EpochStats& s) {
            trace << s.epoch << "," << s.train_loss << "," << s.nll << "," << s.velocity << ","
                  << s.cross_entropy;
            if (s.validation)
                trace << "," << s.validation->overall.min_ade << ","
                      << s.validation->overall.map;
            else
                trace << ",,";
            trace << "\n";
            trace.flush();
            if (!settings.quiet) {
                std::cout << "epoch " << s.epoch << " loss " << s.train_loss;
                if (s.validation)
                    std::cout << " val minADE " << s.validation->overall.min_ade << " mAP "
                              << s.validation->overall.map;
                std::cout << std::endl;
            }
            out.final_train_loss = s.train_loss;
        },
        settings.val_every);
    out.total_steps = result.total_steps;

    out.checkpoint_path = settings.out_dir + "/checkpoint.bin";
    save_checkpoint(model, out.checkpoint_path);

    nlohmann::json sidecar;
    sidecar["model"] = model_config_to_json(config);
    sidecar["optim"] = optim_config_to_json(optim);
    sidecar["build"] = LIMTR_BUILD_VERSION;
    sidecar["total_steps"] = result.total_steps;
    write_text(settings.out_dir + "/config.json", sidecar.dump(2) + "\n");

    if (!val_dirs.empty()) {
        out.metrics = evaluate(model, val_set);
        out.has_metrics = true;
        write_text(settings.out_dir + "/metrics.json", out.metrics.to_json() + "\n");
        write_text(settings.out_dir + "/metrics.csv", out.metrics.to_csv());
    }
    return out;
}

MetricsReport run_eval_pipeline(const std::string& checkpoint, const std::string& data_dir,
                                const std::string& out_dir, uint64_t seed_override) {
    std::string checkpoint_path = checkpoint;
    std::string sidecar_path;
    if (std::filesystem::is_directory(checkpoint)) {
        checkpoint_path = checkpoint + "/checkpoint.bin";
        sidecar_path = checkpoint + "/config.json";
    } else {
        sidecar_path =
            (std::filesystem::path(checkpoint).parent_path() / "config.json").string();
    }
    std::ifstream sf(sidecar_path);
    if (!sf) throw std::runtime_error("cannot open checkpoint sidecar: " + sidecar_path);
    nlohmann::json sidecar = nlohmann::json::parse(sf);
    const ModelConfig config = model_config_from_json(sidecar.at("model"));
    const uint64_t seed =
        seed_override != 0 ? seed_override
                           : optim_config_from_json(sidecar.at("optim")).seed;

    Model model(config, seed);
    load_checkpoint(model, checkpoint_path);

    const Dataset dataset = prepare_dataset(list_bundle_dirs(data_dir), config, seed);
    std::vector<ScenePrediction> predictions;
    const MetricsReport report = evaluate(model, dataset, &predictions);

    std::filesystem::create_directories(out_dir);
    write_prediction_dump(out_dir + "/predictions.jsonl", predictions);
    write_text(out_dir + "/metrics.json", report.to_json() + "\n");
    write_text(out_dir + "/metrics.csv", report.to_csv());
    return report;
}

}  // namespace limtr
