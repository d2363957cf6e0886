#include "limtr/lidar_pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace limtr {

FeatureSelection FeatureSelection::parse(const std::string& spec) {
    FeatureSelection sel;
    if (spec == "none" || spec.empty()) return sel;
    if (spec == "all") {
        sel.range = sel.intensity = sel.elongation = true;
        return sel;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "range")
            sel.range = true;
        else if (item == "intensity")
            sel.intensity = true;
        else if (item == "elongation")
            sel.elongation = true;
        else
            throw std::invalid_argument("unknown feature '" + item +
                                        "' (expected range, intensity, elongation, all, none)");
    }
    return sel;
}

std::string FeatureSelection::str() const {
    if (count() == 0) return "none";
    if (count() == 3) return "all";
    std::string s;
    if (range) s += "range";
    if (intensity) s += (s.empty() ? "" : ",") + std::string("intensity");
    if (elongation) s += (s.empty() ? "" : ",") + std::string("elongation");
    return s;
}

PointFrame crop_to_box(const PointFrame& frame, const OrientedBox& box, double margin) {
    if (margin < 0.0)
        throw std::invalid_argument("crop_to_box: margin must be >= 0, got " +
                                    std::to_string(margin));
    PointFrame out;
    out.timestamp_index = frame.timestamp_index;
    for (const auto& p : frame.points)
        if (box.contains({p.x, p.y, p.z}, margin)) out.points.push_back(p);
    return out;
}

PointFrame to_agent_frame(const PointFrame& frame, const Pose& pose) {
    PointFrame out;
    out.timestamp_index = frame.timestamp_index;
    out.points.reserve(frame.points.size());
    for (const auto& p : frame.points) {
        const Vec2 r = Vec2{p.x - pose.x, p.y - pose.y}.rotated(-pose.heading);
        LidarPoint q = p;
        q.x = r.x;
        q.y = r.y;
        q.z = p.z - pose.z;
        out.points.push_back(q);
    }
    return out;
}

PointFrame from_agent_frame(const PointFrame& frame, const Pose& pose) {
    PointFrame out;
    out.timestamp_index = frame.timestamp_index;
    out.points.reserve(frame.points.size());
    for (const auto& p : frame.points) {
        const Vec2 r = Vec2{p.x, p.y}.rotated(pose.heading);
        LidarPoint q = p;
        q.x = r.x + pose.x;
        q.y = r.y + pose.y;
        q.z = p.z + pose.z;
        out.points.push_back(q);
    }
    return out;
}

SampledPoints sample_or_pad(const PointFrame& frame, size_t n_max, uint64_t rng_seed) {
    if (n_max < 1) throw std::invalid_argument("sample_or_pad: n_max must be >= 1");
    SampledPoints out;
    out.points.assign(n_max, LidarPoint{});
    out.mask.assign(n_max, 0);

    const size_t count = frame.points.size();
    if (count <= n_max) {
        for (size_t i = 0; i < count; ++i) {
            out.points[i] = frame.points[i];
            out.mask[i] = 1;
        }
        return out;
    }

    // Partial Fisher-Yates over the index set, then ascending order so the
    // subset keeps the input ordering.
    Rng rng(rng_seed);
    std::vector<size_t> indices(count);
    std::iota(indices.begin(), indices.end(), size_t{0});
    for (size_t i = 0; i < n_max; ++i) {
        const size_t j = i + static_cast<size_t>(rng.uniform_int(count - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(n_max);
    std::sort(indices.begin(), indices.end());
    for (size_t i = 0; i < n_max; ++i) {
        out.points[i] = frame.points[indices[i]];
        out.mask[i] = 1;
    }
    return out;
}

Tensor featurize(const std::vector<LidarPoint>& points, const std::vector<uint8_t>& mask,
                 const FeatureSelection& selection, AgentClass target_class) {
    const int cls = static_cast<int>(target_class);
    if (cls < 0 || cls > 2)
        throw std::invalid_argument("featurize: unknown target class " + std::to_string(cls));
    if (mask.size() != points.size())
        throw std::invalid_argument("featurize: mask/points length mismatch");

    const size_t dim = static_cast<size_t>(selection.point_dim());
    Tensor rows({points.size(), dim});
    for (size_t i = 0; i < points.size(); ++i) {
        if (!mask[i]) continue;  // padded rows stay all-zero
        double* r = rows.ptr() + i * dim;
        const LidarPoint& p = points[i];
        size_t k = 0;
        r[k++] = p.x;
        r[k++] = p.y;
        r[k++] = p.z;
        if (selection.range) r[k++] = p.range;
        if (selection.intensity) r[k++] = p.intensity;
        if (selection.elongation) r[k++] = p.elongation;
        r[k + static_cast<size_t>(cls)] = 1.0;
    }
    return rows;
}

std::vector<int> select_frame_indices(int count) {
    switch (count) {
        case 11: return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        case 6: return {0, 2, 4, 6, 8, 10};
        case 3: return {0, 5, 10};
        case 1: return {10};
        default:
            throw std::invalid_argument("select_frame_indices: unsupported count " +
                                        std::to_string(count) + " (expected 1, 3, 6 or 11)");
    }
}

LidarTensor build_lidar_tensor(const std::vector<PointFrame>& scene_frames,
                               const std::vector<AgentState>& states, AgentClass cls,
                               const FeatureSelection& selection, size_t n_max,
                               uint64_t rng_seed, double margin) {
    if (scene_frames.size() != states.size())
        throw std::invalid_argument("build_lidar_tensor: frames/states size mismatch");
    if (scene_frames.empty()) throw std::invalid_argument("build_lidar_tensor: no frames");

    const size_t t_dim = scene_frames.size();
    const size_t d = static_cast<size_t>(selection.point_dim());

    LidarTensor out;
    out.n_frames = t_dim;
    out.n_points = n_max;
    out.dim = d;
    out.data = Tensor({t_dim, n_max, d});
    out.mask.assign(t_dim * n_max, 0);
    out.target_class = cls;

    // Single reference frame: the target's pose at the latest valid timestep,
    // so its own motion across time stays visible.
    const AgentState* ref = nullptr;
    for (size_t f = states.size(); f-- > 0;)
        if (states[f].valid) {
            ref = &states[f];
            break;
        }
    if (!ref) return out;  // fully occluded target: all-padded tensor
    const Pose ref_pose{ref->position.x, ref->position.y, ref->position.z, ref->heading};

    for (size_t f = 0; f < t_dim; ++f) {
        if (!states[f].valid) continue;
        PointFrame cropped = crop_to_box(scene_frames[f], states[f].box, margin);
        PointFrame local = to_agent_frame(cropped, ref_pose);
        const auto sampled =
            sample_or_pad(local, n_max, derive_seed(rng_seed, "frame/" + std::to_string(f)));
        const Tensor rows = featurize(sampled.points, sampled.mask, selection, cls);
        std::copy(rows.data.begin(), rows.data.end(), out.data.data.begin() + f * n_max * d);
        std::copy(sampled.mask.begin(), sampled.mask.end(), out.mask.begin() + f * n_max);
    }
    return out;
}

LidarTensor build_lidar_tensor(const Scenario& scenario, size_t agent_index,
                               const FeatureSelection& selection, int frame_count,
                               size_t n_max, uint64_t global_seed) {
    if (agent_index >= scenario.agents.size())
        throw std::invalid_argument("build_lidar_tensor: agent index out of range");
    const AgentTrack& track = scenario.agents[agent_index];
    if (scenario.frames.size() != track.past.size())
        throw std::invalid_argument("build_lidar_tensor: scenario frame count " +
                                    std::to_string(scenario.frames.size()) +
                                    " does not match track length " +
                                    std::to_string(track.past.size()));

    const std::vector<int> idx = select_frame_indices(frame_count);
    std::vector<PointFrame> frames;
    std::vector<AgentState> states;
    for (int i : idx) {
        frames.push_back(scenario.frames[static_cast<size_t>(i)]);
        states.push_back(track.past[static_cast<size_t>(i)]);
    }
    const uint64_t seed =
        derive_seed(derive_seed(global_seed, "lidar/" + scenario.id), agent_index);
    return build_lidar_tensor(frames, states, track.cls, selection, n_max, seed);
}

}  // namespace limtr
