#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "limtr/geometry.hpp"
#include "limtr/rng.hpp"

namespace limtr {

inline constexpr int kPastSteps = 11;    // 1 s at 10 Hz, index 10 = current time
inline constexpr int kFutureSteps = 80;  // 8 s at 10 Hz

enum class AgentClass : int { kVehicle = 0, kPedestrian = 1, kCyclist = 2 };

const char* class_name(AgentClass c);
AgentClass class_from_name(const std::string& name);

struct LidarPoint {
    double x = 0.0, y = 0.0, z = 0.0;
    double range = 0.0, intensity = 0.0, elongation = 0.0;
};

struct PointFrame {
    int timestamp_index = 0;
    std::vector<LidarPoint> points;
};

struct AgentState {
    Vec3 position;
    double heading = 0.0;
    Vec2 velocity;
    OrientedBox box;
    bool valid = true;
};

struct FutureState {
    Vec2 position;
    Vec2 velocity;
    bool valid = true;
};

struct AgentTrack {
    AgentClass cls = AgentClass::kVehicle;
    std::vector<AgentState> past;     // kPastSteps entries
    std::vector<FutureState> future;  // kFutureSteps entries

    const AgentState& current() const { return past.back(); }
};

// The latest valid past state; everything target-centric (lidar tensors,
// history rows, gt futures) is expressed in this pose. Throws if no past
// step is valid.
const AgentState& reference_state(const AgentTrack& track);

struct Scenario {
    std::string id;
    std::vector<PointFrame> frames;  // kPastSteps entries
    std::vector<AgentTrack> agents;  // 1..8
};

// How strongly the planted point-cloud cue predicts the future turn
// direction. At 0 the cue is drawn independently of the future; at 1 it
// always encodes the true turn rate. Only pedestrians and cyclists carry
// the cue.
struct CueSpec {
    double cue_strength = 0.0;
};

// Resolved cue for one agent: the turn rate the planted cluster encodes.
struct CueDraw {
    double encoded_turn_rate = 0.0;
    bool from_future = false;  // true when the true turn rate was used
};

struct RenderedCloud {
    std::vector<LidarPoint> points;
    // Lateral sign of the planted cluster offset in the agent frame
    // (-1 right, 0 none/centered, +1 left). Generator metadata for tests;
    // never serialized.
    int cue_lateral_sign = 0;
};

// Virtual sensor providing the range feature.
inline constexpr Vec3 kSensorPosition{0.0, 0.0, 2.5};

// Draws the turn rate the cue will encode: the true rate with probability
// cue_strength, otherwise a rate sampled from the same maneuver marginal.
// Both branches consume identical rng draws so datasets generated with
// different strengths differ only in cue statistics.
CueDraw draw_cue(const CueSpec& cue, AgentClass cls, double true_turn_rate, Rng& rng);

RenderedCloud render_points(const AgentState& state, AgentClass cls, const CueDraw& cue,
                            Rng& rng);
// Convenience: mixes via draw_cue then renders.
RenderedCloud render_points(const AgentState& state, AgentClass cls, const CueSpec& cue,
                            double true_turn_rate, Rng& rng);

// Future turn rate of the sampled maneuver (0 for keep/stop); exposed for
// the generator and the cue-statistics tests.
struct AgentPlan {
    int maneuver = 0;  // 0 keep, 1 turn, 2 stop
    double turn_rate = 0.0;
    double decel = 0.0;
};

Scenario gen_scenario(uint64_t seed, int n_agents, const CueSpec& cue);

// Closed-form future state for each maneuver, used by the generator and by
// the kinematics oracle in tests. t is seconds after the current timestep.
FutureState rollout_state(const AgentState& current, const AgentPlan& plan, double t);

// On-disk scenario bundle: header.json + points_t00.bin..points_t10.bin +
// tracks.bin, little-endian float32 rows. See docs/FORMATS.md.
void write_bundle(const Scenario& scenario, const std::string& dir);
Scenario read_bundle(const std::string& dir);

}  // namespace limtr
