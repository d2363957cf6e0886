#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "limtr/geometry.hpp"
#include "limtr/scenario.hpp"
#include "limtr/traj_head.hpp"

namespace limtr {

// Thresholds and scaling mirror the challenge definition the metrics come
// from; everything lives here so no constant is hard-coded in metric logic.
struct EvalConfig {
    std::vector<double> horizons_s = {3.0, 5.0, 8.0};
    double eval_rate_hz = 2.0;
    double pred_rate_hz = 10.0;
    std::vector<double> longitudinal_thresholds = {2.0, 3.6, 6.0};  // per horizon, meters
    std::vector<double> lateral_thresholds = {1.0, 1.8, 3.0};
    double speed_lower = 1.4;   // m/s; at or below -> scale_lower
    double speed_upper = 11.0;  // m/s; at or above -> scale_upper
    double scale_lower = 0.5;
    double scale_upper = 1.0;
    int n_modes = kNumModes;

    // classify_behavior defaults
    double stationary_displacement = 2.0;     // m
    double uturn_heading = 2.356194490192345; // 3*pi/4
    double turn_heading = 0.5235987755982988; // pi/6
    double straight_lateral = 1.6;            // m

    void validate() const;
    int eval_steps() const { return static_cast<int>(8.0 * eval_rate_hz); }
    int horizon_eval_steps(size_t horizon_index) const {
        return static_cast<int>(horizons_s[horizon_index] * eval_rate_hz);
    }
    double speed_scale(double v0) const;
};

enum class BehaviorBucket : int {
    kStationary = 0,
    kStraight,
    kStraightLeft,
    kStraightRight,
    kLeftTurn,
    kRightTurn,
    kLeftUTurn,
    kRightUTurn,
};
inline constexpr int kNumBuckets = 8;
const char* bucket_name(BehaviorBucket b);

// One evaluated target: scene-frame ground truth at 10 Hz plus the m
// predicted modes at 10 Hz with probabilities.
struct MetricsInput {
    AgentClass cls = AgentClass::kVehicle;
    std::vector<Vec2> gt_positions;           // kFutureSteps
    std::vector<Vec2> gt_velocities;          // kFutureSteps
    std::vector<uint8_t> gt_valid;            // kFutureSteps
    double v0 = 0.0;                          // gt speed at time 0
    std::vector<double> probabilities;        // n_modes
    std::vector<std::vector<Vec2>> mode_positions;  // n_modes x kFutureSteps
};

MetricsInput metrics_input_from(const ScenePrediction& pred, const AgentTrack& track);

// Every 5th step of an 80-step 10 Hz trajectory: indices 4, 9, ..., 79.
std::vector<Vec2> decimate(const std::vector<Vec2>& steps_10hz, const EvalConfig& config);
std::vector<uint8_t> decimate_valid(const std::vector<uint8_t>& valid_10hz,
                                    const EvalConfig& config);

// Min over modes of the mean L2 displacement over valid decimated steps
// within the horizon. nullopt when no step is valid (target skipped).
std::optional<double> min_ade(const std::vector<std::vector<Vec2>>& pred_modes_2hz,
                              const std::vector<Vec2>& gt_2hz,
                              const std::vector<uint8_t>& valid_2hz, int horizon_steps);

// True when every mode's final-position error, decomposed against the gt
// heading at the horizon, exceeds the velocity-scaled thresholds in either
// component. nullopt when the gt is invalid at the horizon step.
std::optional<bool> is_miss(const std::vector<std::vector<Vec2>>& pred_modes_2hz,
                            const MetricsInput& target, const EvalConfig& config,
                            size_t horizon_index);

// Per-mode hit flags behind is_miss/compute_map: hit[k] is true when mode k
// satisfies both thresholds.
std::optional<std::vector<uint8_t>> mode_hits(const std::vector<std::vector<Vec2>>& pred_2hz,
                                              const MetricsInput& target,
                                              const EvalConfig& config, size_t horizon_index);

BehaviorBucket classify_behavior(const std::vector<Vec2>& gt_positions,
                                 const std::vector<Vec2>& gt_velocities,
                                 const std::vector<uint8_t>& gt_valid,
                                 const EvalConfig& config);

// Ranked prediction sample for the precision-recall curve. Samples sort by
// probability descending; ties break by (target order, mode index).
struct ApSample {
    double probability = 0.0;
    size_t target_index = 0;
    int mode_index = 0;
    bool true_positive = false;
};

// Interpolated area under the precision-recall curve (monotone precision
// envelope, accumulated right to left), with total_gt positives achievable.
double average_precision(std::vector<ApSample> samples, int total_gt);

// mAP over the behavior buckets that saw at least one evaluated target.
double compute_map(const std::vector<MetricsInput>& targets, const EvalConfig& config,
                   size_t horizon_index);

struct MetricsCell {
    double min_ade = 0.0;
    double miss_rate = 0.0;
    double map = 0.0;
    int count = 0;  // evaluated targets
};

struct MetricsReport {
    // [class][horizon] cells plus per-class and overall averages.
    std::array<std::vector<MetricsCell>, 3> per_class;
    std::array<MetricsCell, 3> class_average;
    MetricsCell overall;
    std::vector<double> horizons_s;

    std::string to_json() const;
    std::string to_csv() const;
};

// Arithmetic means as defined by the challenge: per (class, horizon) over
// targets, per class over horizons, overall over classes with data. Throws
// when nothing is evaluable.
MetricsReport aggregate(const std::vector<MetricsInput>& targets, const EvalConfig& config);

}  // namespace limtr
