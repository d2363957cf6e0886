#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "limtr/geometry.hpp"
#include "limtr/nn.hpp"
#include "limtr/scenario.hpp"

namespace limtr {

inline constexpr int kNumModes = 6;

// Class-specific anchor endpoints in the agent-centric frame, one per
// predicted mode.
struct IntentionPointSet {
    int k = kNumModes;
    std::array<std::vector<Vec2>, 3> per_class;

    const std::vector<Vec2>& for_class(AgentClass c) const {
        return per_class[static_cast<size_t>(c)];
    }
};

// Lloyd's algorithm with farthest-first seeding. Empty clusters are reseeded
// to the point currently farthest from its own centroid. Deterministic given
// the seed; the inertia trace is non-increasing.
std::vector<Vec2> kmeans(const std::vector<Vec2>& points, int k, uint64_t seed, int max_iters,
                         std::vector<double>* inertia_trace = nullptr);

IntentionPointSet kmeans_intentions(const std::array<std::vector<Vec2>, 3>& endpoints_per_class,
                                    int k, uint64_t seed, int max_iters);

// Per-step history rows in the agent-centric frame:
// [x, y, cos dh, sin dh, vx, vy, half_l, half_w, half_h, valid].
inline constexpr size_t kHistoryFeatureDim = 10;

struct HistoryFeatures {
    Tensor steps;                // [kPastSteps, kHistoryFeatureDim]
    std::vector<uint8_t> valid;  // kPastSteps
};

HistoryFeatures history_features(const AgentTrack& track);

// Ground-truth future in the agent-centric frame.
struct GtFuture {
    Tensor positions;            // [steps, 2]
    Tensor velocities;           // [steps, 2]
    std::vector<uint8_t> valid;  // steps
    Vec2 endpoint;               // last valid position
    bool has_valid = false;
};

GtFuture gt_future(const AgentTrack& track);

// One mode's trajectory parameters per step: x, y, std_x, std_y, rho, vx, vy.
inline constexpr size_t kTrajParamDim = 7;

struct TrajectorySet {
    int n_modes = 0;
    int steps = 0;
    std::vector<double> probabilities;  // n_modes, sums to 1
    Tensor params;                      // [n_modes, steps, kTrajParamDim]

    const double* mode_step(int mode, int step) const {
        return params.ptr() + (static_cast<size_t>(mode) * static_cast<size_t>(steps) +
                               static_cast<size_t>(step)) *
                                  kTrajParamDim;
    }
};

// PointNet-style encoder over the past steps: shared MLP then max-pool over
// valid steps.
class HistoryEncoder {
public:
    HistoryEncoder(ParamStore& store, size_t width, int depth, Rng& init_rng);

    // steps: [n_targets * kPastSteps, kHistoryFeatureDim] packed rows of
    // valid steps only; seg_offset marks each target's rows. Targets with no
    // valid steps are rejected upstream.
    Tensor forward(const Tensor& rows, const std::vector<size_t>& seg_offset, Mode mode);
    Tensor backward(const Tensor& grad_out);

    size_t out_dim() const { return block_.out_dim(); }

private:
    MlpBlock block_;
    std::vector<size_t> seg_offset_;
    std::vector<size_t> argmax_;
    size_t rows_total_ = 0;
};

// Shared per-mode MLP head (plain linear+relu hidden layers, linear output).
// Input rows are concat(fused_feature, intention point); output rows are
// steps*7 raw trajectory values followed by the mode logit.
class TrajDecoder {
public:
    TrajDecoder(ParamStore& store, size_t in_dim, size_t width, int depth, int steps,
                Rng& init_rng);

    Tensor forward(const Tensor& rows);
    Tensor backward(const Tensor& grad_out);

    size_t in_dim() const { return in_dim_; }
    size_t out_dim() const { return out_dim_; }
    int steps() const { return steps_; }

private:
    size_t in_dim_, out_dim_;
    int steps_;
    std::vector<Linear> hidden_;
    Linear output_;
    std::vector<Tensor> saved_preact_;
};

// Raw head outputs -> squashed trajectory parameters + probabilities.
// std = softplus(raw) + std_floor, rho = rho_scale * tanh(raw).
struct SquashSpec {
    double std_floor = 1e-3;
    double rho_scale = 0.99;
};

TrajectorySet squash_outputs(const Tensor& raw_rows, int n_modes, int steps,
                             const SquashSpec& spec);

// Index of the intention point nearest (L2) to the gt endpoint; ties go to
// the lowest index.
int positive_mode_for(const std::vector<Vec2>& intentions, const Vec2& gt_endpoint);

// Mean over valid steps of the bivariate Gaussian negative log-likelihood of
// the positive mode.
double gmm_nll(const TrajectorySet& pred, const GtFuture& gt, int positive_mode);
// Mean absolute velocity error over valid steps, averaged over the two
// components.
double velocity_l1(const TrajectorySet& pred, const GtFuture& gt, int positive_mode);
// -log p of the positive mode.
double mode_cross_entropy(const TrajectorySet& pred, int positive_mode);

struct LossWeights {
    double nll = 1.0;
    double velocity = 0.5;
    double cross_entropy = 1.0;
};

struct LossBreakdown {
    double total = 0.0, nll = 0.0, velocity = 0.0, cross_entropy = 0.0;
    int positive_mode = 0;
};

LossBreakdown total_loss(const TrajectorySet& pred, const GtFuture& gt,
                         const std::vector<Vec2>& intentions, const LossWeights& weights);

// Gradient of the weighted loss wrt the raw (pre-squash) head outputs for one
// target; adds into grad_raw_rows scaled by `scale`.
void total_loss_backward(const TrajectorySet& pred, const Tensor& raw_rows, const GtFuture& gt,
                         int positive_mode, const LossWeights& weights, const SquashSpec& spec,
                         double scale, Tensor& grad_raw_rows);

struct Pose;

// Scene-frame prediction record. The dump format is one JSON line per
// (scenario, agent) with mode probabilities and a base64 little-endian
// float32 block of shape n_modes x steps x 7; see docs/FORMATS.md.
struct ScenePrediction {
    std::string scenario_id;
    size_t agent_index = 0;
    AgentClass cls = AgentClass::kVehicle;
    int n_modes = 0;
    int steps = 0;
    std::vector<double> probabilities;
    Tensor params;  // [n_modes, steps, kTrajParamDim], scene frame

    const double* mode_step(int mode, int step) const {
        return params.ptr() + (static_cast<size_t>(mode) * static_cast<size_t>(steps) +
                               static_cast<size_t>(step)) *
                                  kTrajParamDim;
    }
};

// Rotates positions, velocities and covariances out of the agent-centric
// frame given the reference pose used at preprocessing time.
ScenePrediction to_scene_frame(const TrajectorySet& set, double ref_x, double ref_y,
                               double ref_heading, const std::string& scenario_id,
                               size_t agent_index, AgentClass cls);

void write_prediction_dump(const std::string& path,
                           const std::vector<ScenePrediction>& predictions);
std::vector<ScenePrediction> read_prediction_dump(const std::string& path);

}  // namespace limtr
