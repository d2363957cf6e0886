#include "limtr/config_json.hpp"

namespace limtr {

using nlohmann::json;

json model_config_to_json(const ModelConfig& config) {
    json j;
    j["depth"] = config.encoder.depth_per_block;
    j["block_widths"] = config.encoder.block_widths;
    j["out_dim"] = config.encoder.out_dim;
    j["n_points"] = config.encoder.n_points;
    j["history_width"] = config.history_width;
    j["history_depth"] = config.history_depth;
    j["head_width"] = config.head_width;
    j["head_depth"] = config.head_depth;
    j["n_modes"] = config.n_modes;
    j["future_steps"] = config.future_steps;
    j["use_lidar"] = config.use_lidar;
    j["features"] = config.features.str();
    j["frames"] = config.frame_count;
    j["loss_weights"] = {config.weights.nll, config.weights.velocity,
                         config.weights.cross_entropy};
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig config;
    config.encoder.depth_per_block = j.at("depth").get<int>();
    config.encoder.block_widths = j.at("block_widths").get<std::array<size_t, 3>>();
    config.encoder.out_dim = j.at("out_dim").get<size_t>();
    config.encoder.n_points = j.at("n_points").get<size_t>();
    config.history_width = j.at("history_width").get<size_t>();
    config.history_depth = j.at("history_depth").get<int>();
    config.head_width = j.at("head_width").get<size_t>();
    config.head_depth = j.at("head_depth").get<int>();
    config.n_modes = j.at("n_modes").get<int>();
    config.future_steps = j.at("future_steps").get<int>();
    config.use_lidar = j.at("use_lidar").get<bool>();
    config.features = FeatureSelection::parse(j.at("features").get<std::string>());
    config.frame_count = j.at("frames").get<int>();
    const auto w = j.at("loss_weights").get<std::vector<double>>();
    config.weights = {w.at(0), w.at(1), w.at(2)};
    config.finalize();
    return config;
}

json optim_config_to_json(const OptimConfig& config) {
    json j;
    j["lr_peak"] = config.lr_peak;
    j["beta1"] = config.beta1;
    j["beta2"] = config.beta2;
    j["eps"] = config.eps;
    j["weight_decay"] = config.weight_decay;
    j["warmup_fraction"] = config.warmup_fraction;
    j["epochs"] = config.epochs;
    j["batch_size"] = config.batch_size;
    j["seed"] = config.seed;
    j["grad_clip"] = config.grad_clip;
    return j;
}

OptimConfig optim_config_from_json(const json& j) {
    OptimConfig config;
    config.lr_peak = j.at("lr_peak").get<double>();
    config.beta1 = j.at("beta1").get<double>();
    config.beta2 = j.at("beta2").get<double>();
    config.eps = j.at("eps").get<double>();
    config.weight_decay = j.at("weight_decay").get<double>();
    config.warmup_fraction = j.at("warmup_fraction").get<double>();
    config.epochs = j.at("epochs").get<int>();
    config.batch_size = j.at("batch_size").get<int>();
    config.seed = j.at("seed").get<uint64_t>();
    config.grad_clip = j.at("grad_clip").get<double>();
    return config;
}

}  // namespace limtr
