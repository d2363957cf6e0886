#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "limtr/checkpoint.hpp"
#include "limtr/config_json.hpp"
#include "limtr/pipeline.hpp"

#ifndef LIMTR_BUILD_VERSION
#define LIMTR_BUILD_VERSION "unknown"
#endif

namespace {

using limtr::FeatureSelection;
using limtr::MetricsReport;
using limtr::ModelConfig;
using limtr::OptimConfig;
using limtr::PipelineSettings;
using nlohmann::json;

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void append_manifest(const std::string& out_dir, json record) {
    std::filesystem::create_directories(out_dir);
    record["build"] = LIMTR_BUILD_VERSION;
    std::ofstream f(out_dir + "/manifest.jsonl", std::ios::app);
    if (!f) throw std::runtime_error("cannot append manifest in " + out_dir);
    f << record.dump() << "\n";
}

struct RunFlags {
    std::string data_dir;
    std::string val_data_dir;
    double val_fraction = 0.0;
    std::string out_dir;
    uint64_t seed = 0;
    int epochs = 60;
    int batch_size = 32;
    double lr = 3e-4;
    int depth = 12;
    std::vector<size_t> widths = {256, 512, 1024};
    std::string features = "intensity";
    int frames = 11;
    bool no_lidar = false;
    size_t n_points = limtr::kDefaultMaxPoints;
    size_t history_width = 128;
    size_t head_width = 512;
    double grad_clip = 0.0;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_train_flags) {
    cmd->add_option("--data", f.data_dir, "Directory of scenario bundles")->required();
    cmd->add_option("--out", f.out_dir, "Output directory")->required();
    cmd->add_option("--seed", f.seed, "Global seed");
    if (with_train_flags) {
        cmd->add_option("--val-data", f.val_data_dir, "Validation bundle directory");
        cmd->add_option("--val-frac", f.val_fraction,
                        "Tail fraction of --data held out for validation");
        cmd->add_option("--epochs", f.epochs, "Training epochs");
        cmd->add_option("--batch-size", f.batch_size, "Targets per optimizer step");
        cmd->add_option("--lr", f.lr, "Peak learning rate");
        cmd->add_option("--grad-clip", f.grad_clip, "Global gradient-norm clip (0 = off)");
    }
    cmd->add_option("--depth", f.depth, "Layers per MLP block (2..14 step 2)");
    cmd->add_option("--widths", f.widths, "Hidden widths of the three MLP blocks")
        ->expected(3)
        ->delimiter(',');
    cmd->add_option("--features", f.features,
                    "LiDAR features: range,intensity,elongation | all | none");
    cmd->add_option("--frames", f.frames, "LiDAR timeframes: 1, 3, 6 or 11");
    cmd->add_flag("--no-lidar", f.no_lidar, "Baseline without the LiDAR branch");
    cmd->add_option("--n-points", f.n_points, "Max LiDAR points per frame");
    cmd->add_option("--history-width", f.history_width, "Agent-history encoder width");
    cmd->add_option("--head-width", f.head_width, "Prediction head width");
}

// --config JSON fills any flag the command line left untouched; CLI wins.
void merge_config_file(CLI::App* cmd, const std::string& path) {
    if (path.empty()) return;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config file ") + path + ": " + e.what());
    }
    for (auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        CLI::Option* opt = cmd->get_option_no_throw(flag);
        if (!opt) throw CLI::ValidationError("config file sets unknown flag " + flag);
        if (opt->count() > 0) continue;
        std::vector<std::string> args;
        if (value.is_array()) {
            std::string joined;
            for (const auto& v : value)
                joined += (joined.empty() ? "" : ",") +
                          (v.is_string() ? v.get<std::string>() : v.dump());
            args.push_back(joined);
        } else if (value.is_string()) {
            args.push_back(value.get<std::string>());
        } else if (value.is_boolean()) {
            if (!value.get<bool>()) continue;
            args.push_back("true");
        } else {
            args.push_back(value.dump());
        }
        opt->add_result(args);
        opt->run_callback();
    }
}

PipelineSettings settings_from(const RunFlags& f, bool quiet) {
    PipelineSettings s;
    s.model.encoder.depth_per_block = f.depth;
    s.model.encoder.block_widths = {f.widths.at(0), f.widths.at(1), f.widths.at(2)};
    s.model.encoder.n_points = f.n_points;
    s.model.history_width = f.history_width;
    s.model.head_width = f.head_width;
    s.model.use_lidar = !f.no_lidar;
    s.model.features = FeatureSelection::parse(f.features);
    s.model.frame_count = f.frames;
    s.model.finalize();
    s.optim.lr_peak = f.lr;
    s.optim.epochs = f.epochs;
    s.optim.batch_size = f.batch_size;
    s.optim.seed = f.seed;
    s.optim.grad_clip = f.grad_clip;
    s.data_dir = f.data_dir;
    s.val_data_dir = f.val_data_dir;
    s.val_fraction = f.val_fraction;
    s.out_dir = f.out_dir;
    s.quiet = quiet;
    return s;
}

json flags_json(const RunFlags& f) {
    return json{{"data", f.data_dir},
                {"val_data", f.val_data_dir},
                {"val_frac", f.val_fraction},
                {"out", f.out_dir},
                {"seed", f.seed},
                {"epochs", f.epochs},
                {"batch_size", f.batch_size},
                {"lr", f.lr},
                {"depth", f.depth},
                {"widths", f.widths},
                {"features", f.features},
                {"frames", f.frames},
                {"no_lidar", f.no_lidar},
                {"n_points", f.n_points},
                {"history_width", f.history_width},
                {"head_width", f.head_width},
                {"grad_clip", f.grad_clip}};
}

int cmd_preprocess(const RunFlags& flags) {
    const std::string start = timestamp_utc();
    const PipelineSettings s = settings_from(flags, true);
    const auto dirs = limtr::list_bundle_dirs(flags.data_dir);
    std::vector<limtr::CheckpointEntry> entries;
    for (const auto& dir : dirs) {
        const limtr::Scenario scenario = limtr::read_bundle(dir);
        for (size_t a = 0; a < scenario.agents.size(); ++a) {
            const limtr::LidarTensor t = limtr::build_lidar_tensor(
                scenario, a, s.model.features, s.model.frame_count, s.model.encoder.n_points,
                flags.seed);
            limtr::CheckpointEntry data;
            data.name = "lidar/" + scenario.id + "/" + std::to_string(a);
            data.dims = {static_cast<uint32_t>(t.n_frames), static_cast<uint32_t>(t.n_points),
                         static_cast<uint32_t>(t.dim)};
            data.data.reserve(t.data.numel());
            for (double v : t.data.data) data.data.push_back(static_cast<float>(v));
            entries.push_back(std::move(data));

            limtr::CheckpointEntry mask;
            mask.name = "lidar/" + scenario.id + "/" + std::to_string(a) + "/mask";
            mask.dims = {static_cast<uint32_t>(t.n_frames), static_cast<uint32_t>(t.n_points)};
            mask.data.reserve(t.mask.size());
            for (uint8_t m : t.mask) mask.data.push_back(m ? 1.0f : 0.0f);
            entries.push_back(std::move(mask));
        }
    }
    std::filesystem::create_directories(flags.out_dir);
    const std::string cache_path = flags.out_dir + "/lidar_cache.bin";
    limtr::write_checkpoint(cache_path, entries);

    append_manifest(flags.out_dir, json{{"command", "preprocess"},
                                        {"config", flags_json(flags)},
                                        {"out", cache_path},
                                        {"started", start},
                                        {"finished", timestamp_utc()}});
    std::cout << "wrote " << entries.size() << " cache entries to " << cache_path << std::endl;
    return 0;
}

int cmd_train(const RunFlags& flags) {
    const std::string start = timestamp_utc();
    const auto result = limtr::run_training_pipeline(settings_from(flags, /*quiet=*/false));
    json manifest{{"command", "train"},
                  {"config", flags_json(flags)},
                  {"out", flags.out_dir},
                  {"checkpoint", result.checkpoint_path},
                  {"started", start}};
    if (result.has_metrics) {
        manifest["metrics"] = {{"min_ade", result.metrics.overall.min_ade},
                               {"miss_rate", result.metrics.overall.miss_rate},
                               {"map", result.metrics.overall.map}};
        std::cout << "val minADE " << result.metrics.overall.min_ade << " MR "
                  << result.metrics.overall.miss_rate << " mAP "
                  << result.metrics.overall.map << std::endl;
    }
    manifest["finished"] = timestamp_utc();
    append_manifest(flags.out_dir, manifest);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& out_dir, uint64_t seed) {
    const std::string start = timestamp_utc();
    const MetricsReport report = limtr::run_eval_pipeline(checkpoint, data_dir, out_dir, seed);
    append_manifest(out_dir,
                    json{{"command", "eval"},
                         {"config", {{"checkpoint", checkpoint}, {"data", data_dir},
                                     {"seed", seed}}},
                         {"out", out_dir},
                         {"started", start},
                         {"finished", timestamp_utc()},
                         {"metrics",
                          {{"min_ade", report.overall.min_ade},
                           {"miss_rate", report.overall.miss_rate},
                           {"map", report.overall.map}}}});
    std::cout << "minADE " << report.overall.min_ade << " MR " << report.overall.miss_rate
              << " mAP " << report.overall.map << std::endl;
    return 0;
}

int cmd_sweep(const RunFlags& flags, const std::vector<int>& depths, int n_seeds) {
    const std::string start = timestamp_utc();
    std::filesystem::create_directories(flags.out_dir);
    std::ofstream csv(flags.out_dir + "/sweep.csv", std::ios::trunc);
    csv << "depth,params,seed,min_ade,map\n";
    csv.precision(10);

    for (int depth : depths) {
        for (int s = 0; s < n_seeds; ++s) {
            RunFlags run = flags;
            run.depth = depth;
            run.seed = limtr::derive_seed(flags.seed, "sweep/" + std::to_string(depth) + "/" +
                                                          std::to_string(s));
            run.out_dir =
                flags.out_dir + "/d" + std::to_string(depth) + "_s" + std::to_string(s);
            const PipelineSettings settings = settings_from(run, /*quiet=*/true);
            const auto result = limtr::run_training_pipeline(settings);
            if (!result.has_metrics)
                throw std::runtime_error("sweep requires --val-frac or --val-data");
            csv << depth << "," << settings.model.encoder.param_count() << "," << s << ","
                << result.metrics.overall.min_ade << "," << result.metrics.overall.map << "\n";
            csv.flush();
            std::cout << "depth " << depth << " seed " << s << " params "
                      << settings.model.encoder.param_count() << " minADE "
                      << result.metrics.overall.min_ade << " mAP "
                      << result.metrics.overall.map << std::endl;
        }
    }
    append_manifest(flags.out_dir, json{{"command", "sweep"},
                                        {"config", flags_json(flags)},
                                        {"depths", depths},
                                        {"seeds", n_seeds},
                                        {"out", flags.out_dir + "/sweep.csv"},
                                        {"started", start},
                                        {"finished", timestamp_utc()}});
    return 0;
}

int cmd_ablate(const RunFlags& flags, const std::string& axis, int n_seeds) {
    const std::string start = timestamp_utc();
    std::vector<std::string> options;
    if (axis == "features")
        options = {"range", "intensity", "elongation", "all"};
    else if (axis == "frames")
        options = {"1", "3", "6", "11"};
    else
        throw CLI::ValidationError("--axis must be 'features' or 'frames'");

    std::filesystem::create_directories(flags.out_dir);
    std::ofstream csv(flags.out_dir + "/ablate.csv", std::ios::trunc);
    csv << "axis,option,seeds,map_mean,map_std,min_ade_mean,min_ade_std\n";
    csv.precision(10);

    for (const auto& option : options) {
        std::vector<double> maps, ades;
        for (int s = 0; s < n_seeds; ++s) {
            RunFlags run = flags;
            if (axis == "features")
                run.features = option;
            else
                run.frames = std::stoi(option);
            run.seed = limtr::derive_seed(flags.seed,
                                          "ablate/" + option + "/" + std::to_string(s));
            run.out_dir = flags.out_dir + "/" + axis + "_" + option + "_s" + std::to_string(s);
            const auto result = limtr::run_training_pipeline(settings_from(run, true));
            if (!result.has_metrics)
                throw std::runtime_error("ablate requires --val-frac or --val-data");
            maps.push_back(result.metrics.overall.map);
            ades.push_back(result.metrics.overall.min_ade);
        }
        auto mean_std = [](const std::vector<double>& xs) {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            return std::make_pair(
                mean, xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0);
        };
        const auto [map_mean, map_std] = mean_std(maps);
        const auto [ade_mean, ade_std] = mean_std(ades);
        csv << axis << "," << option << "," << n_seeds << "," << map_mean << "," << map_std
            << "," << ade_mean << "," << ade_std << "\n";
        csv.flush();
        std::cout << axis << "=" << option << " mAP " << map_mean << " (" << map_std
                  << ") minADE " << ade_mean << " (" << ade_std << ")" << std::endl;
    }
    append_manifest(flags.out_dir, json{{"command", "ablate"},
                                        {"config", flags_json(flags)},
                                        {"axis", axis},
                                        {"seeds", n_seeds},
                                        {"out", flags.out_dir + "/ablate.csv"},
                                        {"started", start},
                                        {"finished", timestamp_utc()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiMTR desk-scale motion prediction pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", LIMTR_BUILD_VERSION);

    auto* gen = app.add_subcommand("gen", "Generate synthetic scenario bundles");
    int gen_n = 100;
    uint64_t gen_seed = 0;
    double gen_cue = 0.0;
    int gen_min_agents = 1, gen_max_agents = 8;
    std::string gen_out, gen_config;
    gen->add_option("--scenarios", gen_n, "Number of scenarios")->required();
    gen->add_option("--seed", gen_seed, "Global seed");
    gen->add_option("--cue-strength", gen_cue, "Cue strength in [0,1]")
        ->check(CLI::Range(0.0, 1.0));
    gen->add_option("--min-agents", gen_min_agents, "Minimum agents per scenario");
    gen->add_option("--max-agents", gen_max_agents, "Maximum agents per scenario");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--config", gen_config, "JSON config file (fills flags not set here)");

    auto* preprocess =
        app.add_subcommand("preprocess", "Materialize per-target LiDAR tensors into a cache");
    RunFlags pre_flags;
    std::string pre_config;
    add_run_flags(preprocess, pre_flags, /*with_train_flags=*/false);
    preprocess->add_option("--config", pre_config, "JSON config file");

    auto* train_cmd = app.add_subcommand("train", "Train a model on scenario bundles");
    RunFlags train_flags;
    std::string train_config;
    add_run_flags(train_cmd, train_flags, /*with_train_flags=*/true);
    train_cmd->add_option("--config", train_config, "JSON config file");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_checkpoint, eval_data, eval_out, eval_config_file;
    uint64_t eval_seed = 0;
    eval_cmd
        ->add_option("--checkpoint", eval_checkpoint,
                     "Checkpoint file or training output directory")
        ->required();
    eval_cmd->add_option("--data", eval_data, "Bundle directory to evaluate on")->required();
    eval_cmd->add_option("--out", eval_out, "Output directory")->required();
    eval_cmd->add_option("--seed", eval_seed, "Preprocessing seed override (0 = from sidecar)");
    eval_cmd->add_option("--config", eval_config_file, "JSON config file");

    auto* sweep_cmd = app.add_subcommand("sweep", "Depth scaling sweep");
    RunFlags sweep_flags;
    std::vector<int> sweep_depths = {2, 4, 6, 8, 10, 12, 14};
    int sweep_seeds = 1;
    std::string sweep_config;
    add_run_flags(sweep_cmd, sweep_flags, /*with_train_flags=*/true);
    sweep_cmd->add_option("--depths", sweep_depths, "Depths to sweep")->delimiter(',');
    sweep_cmd->add_option("--seeds", sweep_seeds, "Seeds per depth");
    sweep_cmd->add_option("--config", sweep_config, "JSON config file");

    auto* ablate_cmd = app.add_subcommand("ablate", "Feature / timeframe ablation grid");
    RunFlags ablate_flags;
    std::string ablate_axis;
    int ablate_seeds = 2;
    std::string ablate_config;
    add_run_flags(ablate_cmd, ablate_flags, /*with_train_flags=*/true);
    ablate_cmd->add_option("--axis", ablate_axis, "features | frames")->required();
    ablate_cmd->add_option("--seeds", ablate_seeds, "Seeds per option");
    ablate_cmd->add_option("--config", ablate_config, "JSON config file");

    try {
        app.parse(argc, argv);

        if (gen->parsed()) merge_config_file(gen, gen_config);
        if (preprocess->parsed()) merge_config_file(preprocess, pre_config);
        if (train_cmd->parsed()) merge_config_file(train_cmd, train_config);
        if (eval_cmd->parsed()) merge_config_file(eval_cmd, eval_config_file);
        if (sweep_cmd->parsed()) merge_config_file(sweep_cmd, sweep_config);
        if (ablate_cmd->parsed()) merge_config_file(ablate_cmd, ablate_config);

        for (auto [cmd, flags] :
             {std::pair{train_cmd, &train_flags}, std::pair{sweep_cmd, &sweep_flags},
              std::pair{ablate_cmd, &ablate_flags}}) {
            if (cmd->parsed() && flags->no_lidar &&
                (cmd->count("--features") > 0 || cmd->count("--frames") > 0))
                throw CLI::ValidationError(
                    "--no-lidar cannot be combined with --features/--frames");
        }

        if (gen->parsed()) {
            const std::string start = timestamp_utc();
            limtr::generate_bundles(gen_out, gen_n, gen_seed, gen_cue, gen_min_agents,
                                    gen_max_agents);
            append_manifest(gen_out, json{{"command", "gen"},
                                          {"config",
                                           {{"scenarios", gen_n},
                                            {"seed", gen_seed},
                                            {"cue_strength", gen_cue},
                                            {"min_agents", gen_min_agents},
                                            {"max_agents", gen_max_agents}}},
                                          {"out", gen_out},
                                          {"started", start},
                                          {"finished", timestamp_utc()}});
            std::cout << "wrote " << gen_n << " bundles to " << gen_out << std::endl;
            return 0;
        }
        if (preprocess->parsed()) return cmd_preprocess(pre_flags);
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (eval_cmd->parsed()) return cmd_eval(eval_checkpoint, eval_data, eval_out, eval_seed);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, sweep_depths, sweep_seeds);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags, ablate_axis, ablate_seeds);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
