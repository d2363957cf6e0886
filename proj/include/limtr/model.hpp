#pragma once

#include <optional>
#include <string>
#include <vector>

#include "limtr/encoder.hpp"
#include "limtr/lidar_pipeline.hpp"
#include "limtr/traj_head.hpp"

namespace limtr {

struct ModelConfig {
    EncoderConfig encoder;
    size_t history_width = 128;
    int history_depth = 2;
    size_t head_width = 512;
    int head_depth = 2;
    int n_modes = kNumModes;
    int future_steps = kFutureSteps;
    bool use_lidar = true;
    FeatureSelection features = FeatureSelection::parse("intensity");
    int frame_count = 11;
    SquashSpec squash;
    LossWeights weights;

    // Derives encoder.in_dim / n_frames from features and frame_count.
    void finalize();
};

// Everything the model needs for one target, precomputed once per run: the
// packed lidar rows, agent-centric history and ground truth, plus the pose
// and speed needed to map predictions back into the scene frame.
struct PreparedTarget {
    std::string scenario_id;
    size_t agent_index = 0;
    AgentClass cls = AgentClass::kVehicle;
    std::vector<float> lidar_rows;      // n_valid x dim, row-major
    std::vector<uint32_t> frame_counts; // frame_count entries
    HistoryFeatures hist;
    GtFuture gt;
    Pose ref_pose;
    double v0 = 0.0;  // speed at the current timestep
};

PreparedTarget prepare_target(const Scenario& scenario, size_t agent_index,
                              const ModelConfig& config, uint64_t data_seed);

class Model {
public:
    Model(const ModelConfig& config, uint64_t init_seed);

    struct BatchResult {
        double loss = 0.0, nll = 0.0, velocity = 0.0, cross_entropy = 0.0;
        std::vector<TrajectorySet> predictions;
    };

    // One pass over a batch. With backprop=true (train mode only) parameter
    // gradients are accumulated, scaled by 1/batch_size. Losses require
    // intentions to be set and every target to carry valid ground truth.
    BatchResult run_batch(const std::vector<const PreparedTarget*>& batch, Mode mode,
                          bool compute_loss, bool backprop);

    void set_intentions(const IntentionPointSet& set);
    // After load_params: refresh the in-memory intention set from the store.
    void sync_intentions_from_store();

    const ModelConfig& config() const { return config_; }
    size_t encoder_param_count() const { return config_.encoder.param_count(); }

    ParamStore store;
    IntentionPointSet intentions;
    // Test hook: zeroes the encoder output (and its incoming gradient) so
    // ablation wiring can be compared against the no-lidar baseline.
    bool zero_lidar_for_test = false;

private:
    ModelConfig config_;
    std::optional<LidarEncoder> encoder_;
    std::optional<HistoryEncoder> history_;
    std::optional<TrajDecoder> decoder_;
    Param* no_lidar_embedding_ = nullptr;
    std::array<Param*, 3> intention_buffers_{};
};

}  // namespace limtr
