#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "limtr/scenario.hpp"
#include "limtr/tensor.hpp"

namespace limtr {

inline constexpr size_t kDefaultMaxPoints = 512;
inline constexpr double kDefaultCropMargin = 0.15;

// Which of the extra per-point features to keep, always laid out in the
// declared order range -> intensity -> elongation.
struct FeatureSelection {
    bool range = false;
    bool intensity = false;
    bool elongation = false;

    int count() const { return (range ? 1 : 0) + (intensity ? 1 : 0) + (elongation ? 1 : 0); }
    int point_dim() const { return 3 + count() + 3; }  // xyz + selected + one-hot class

    // Accepts "none", "all", or a comma list of feature names.
    static FeatureSelection parse(const std::string& spec);
    std::string str() const;

    bool operator==(const FeatureSelection&) const = default;
};

// Fixed-shape per-target tensor: data is frames x points x dim, mask marks
// real points. Padded entries are exactly zero.
struct LidarTensor {
    size_t n_frames = 0;
    size_t n_points = 0;
    size_t dim = 0;
    Tensor data;                // [n_frames, n_points, dim]
    std::vector<uint8_t> mask;  // n_frames * n_points
    AgentClass target_class = AgentClass::kVehicle;

    bool mask_at(size_t f, size_t p) const { return mask[f * n_points + p] != 0; }
};

struct Pose {
    double x = 0.0, y = 0.0, z = 0.0, heading = 0.0;
};

// Points whose box-frame coordinates satisfy |u_k| <= (1+margin)*half_extent_k
// on all three axes. Scene-frame coordinates are preserved in the output.
PointFrame crop_to_box(const PointFrame& frame, const OrientedBox& box,
                       double margin = kDefaultCropMargin);

// p' = R(-heading) * (p - position); the pose's forward direction maps to +x.
PointFrame to_agent_frame(const PointFrame& frame, const Pose& pose);
PointFrame from_agent_frame(const PointFrame& frame, const Pose& pose);

// Keeps all points (in order, zero-padded) when count <= n_max, otherwise a
// seeded uniform subset without replacement in ascending input order.
struct SampledPoints {
    std::vector<LidarPoint> points;  // n_max entries, padded with zeros
    std::vector<uint8_t> mask;       // n_max entries
};
SampledPoints sample_or_pad(const PointFrame& frame, size_t n_max, uint64_t rng_seed);

// Per-point rows [x, y, z, selected features..., one-hot class]; padded rows
// stay all-zero. Class order is (vehicle, pedestrian, cyclist).
Tensor featurize(const std::vector<LidarPoint>& points, const std::vector<uint8_t>& mask,
                 const FeatureSelection& selection, AgentClass target_class);

// Equally spaced frame subset over the 11 past frames:
//   11 -> all, 6 -> (0,2,4,6,8,10), 3 -> (0,5,10), 1 -> (10).
std::vector<int> select_frame_indices(int count);

// Full preprocessing for one target: per frame crop -> transform into the
// target's current pose (one reference frame for all timestamps) -> sample ->
// featurize. Frames with an invalid track state come out fully padded.
LidarTensor build_lidar_tensor(const std::vector<PointFrame>& scene_frames,
                               const std::vector<AgentState>& states, AgentClass cls,
                               const FeatureSelection& selection, size_t n_max,
                               uint64_t rng_seed, double margin = kDefaultCropMargin);

// Convenience over a scenario bundle with frame selection applied. The
// sampling seed is derived from (global_seed, scenario id, agent index).
LidarTensor build_lidar_tensor(const Scenario& scenario, size_t agent_index,
                               const FeatureSelection& selection, int frame_count,
                               size_t n_max, uint64_t global_seed);

}  // namespace limtr
