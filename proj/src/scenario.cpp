#include "limtr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace limtr {

namespace {

using nlohmann::json;

struct ClassProfile {
    Vec3 extents;        // full length/width/height
    double speed_lo, speed_hi;
    double p_keep, p_turn;  // p_stop = 1 - p_keep - p_turn
    double turn_lo, turn_hi;
    double decel_lo, decel_hi;
    double base_intensity;
    int points_per_frame;
    bool cue_capable;
};

const ClassProfile& profile(AgentClass cls) {
    static const ClassProfile kVehicle{{4.6, 2.0, 1.7}, 3.0, 9.0,  0.65, 0.25,
                                       0.05, 0.22,      1.5, 3.5,  0.25, 96,  false};
    static const ClassProfile kPed{{0.9, 0.9, 1.8},     0.8, 2.0,  0.15, 0.75,
                                   0.15, 0.50,          0.6, 1.2,  0.55, 48,  true};
    static const ClassProfile kCyc{{1.9, 0.7, 1.7},     2.0, 5.5,  0.15, 0.75,
                                   0.10, 0.40,          1.0, 2.5,  0.80, 60,  true};
    switch (cls) {
        case AgentClass::kVehicle: return kVehicle;
        case AgentClass::kPedestrian: return kPed;
        default: return kCyc;
    }
}

// Turn-rate marginal of the class's maneuver distribution (0 for keep/stop).
double sample_turn_rate_marginal(const ClassProfile& p, Rng& rng) {
    const double u = rng.uniform();
    const double mag = rng.uniform(p.turn_lo, p.turn_hi);  // always drawn
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    if (u < p.p_keep || u >= p.p_keep + p.p_turn) return 0.0;
    return sign * mag;
}

AgentPlan sample_plan(const ClassProfile& p, Rng& rng) {
    AgentPlan plan;
    const double u = rng.uniform();
    const double mag = rng.uniform(p.turn_lo, p.turn_hi);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double decel = rng.uniform(p.decel_lo, p.decel_hi);
    if (u < p.p_keep) {
        plan.maneuver = 0;
    } else if (u < p.p_keep + p.p_turn) {
        plan.maneuver = 1;
        plan.turn_rate = sign * mag;
    } else {
        plan.maneuver = 2;
        plan.decel = decel;
    }
    return plan;
}

int sign_of(double v) { return v > 1e-9 ? 1 : (v < -1e-9 ? -1 : 0); }

void fill_features(LidarPoint& pt, double base_intensity, double bump, Rng& rng) {
    pt.range = std::sqrt((pt.x - kSensorPosition.x) * (pt.x - kSensorPosition.x) +
                         (pt.y - kSensorPosition.y) * (pt.y - kSensorPosition.y) +
                         (pt.z - kSensorPosition.z) * (pt.z - kSensorPosition.z));
    pt.intensity = std::max(0.0, base_intensity + bump + rng.normal(0.0, 0.05));
    pt.elongation = std::fabs(rng.normal(0.0, 0.15));
}

}  // namespace

const char* class_name(AgentClass c) {
    switch (c) {
        case AgentClass::kVehicle: return "vehicle";
        case AgentClass::kPedestrian: return "pedestrian";
        default: return "cyclist";
    }
}

AgentClass class_from_name(const std::string& name) {
    if (name == "vehicle") return AgentClass::kVehicle;
    if (name == "pedestrian") return AgentClass::kPedestrian;
    if (name == "cyclist") return AgentClass::kCyclist;
    throw std::invalid_argument("unknown agent class: " + name);
}

const AgentState& reference_state(const AgentTrack& track) {
    for (size_t i = track.past.size(); i-- > 0;)
        if (track.past[i].valid) return track.past[i];
    throw std::invalid_argument("agent track has no valid past step");
}

CueDraw draw_cue(const CueSpec& cue, AgentClass cls, double true_turn_rate, Rng& rng) {
    // Both draws always happen so the stream advances identically regardless
    // of strength.
    const double u = rng.uniform();
    const double fake = sample_turn_rate_marginal(profile(cls), rng);
    CueDraw d;
    d.from_future = u < cue.cue_strength;
    d.encoded_turn_rate = d.from_future ? true_turn_rate : fake;
    return d;
}

RenderedCloud render_points(const AgentState& state, AgentClass cls, const CueDraw& cue,
                            Rng& rng) {
    const ClassProfile& prof = profile(cls);
    const Vec3 he{prof.extents.x / 2.0, prof.extents.y / 2.0, prof.extents.z / 2.0};
    const int total = prof.points_per_frame + static_cast<int>(rng.uniform_int(9)) - 4;
    const int n_cue = prof.cue_capable ? std::max(3, total / 7) : 0;
    const int n_body = total - n_cue;

    RenderedCloud out;
    out.points.reserve(static_cast<size_t>(total));

    // Body points on the box surface, with a little jitter, clamped inside
    // 1.05x the half extents.
    const double ax = he.y * he.z, ay = he.x * he.z, az = he.x * he.y;
    const double area_total = 2.0 * (ax + ay + az);
    for (int i = 0; i < n_body; ++i) {
        double pick = rng.uniform(0.0, area_total);
        double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        Vec3 local;
        if (pick < 2.0 * ax) {
            local = {pick < ax ? he.x : -he.x, u * he.y, v * he.z};
        } else if (pick < 2.0 * (ax + ay)) {
            local = {u * he.x, pick < 2.0 * ax + ay ? he.y : -he.y, v * he.z};
        } else {
            local = {u * he.x, v * he.y, pick < 2.0 * (ax + ay) + az ? he.z : -he.z};
        }
        local.x = std::clamp(local.x + rng.normal(0.0, 0.02), -1.05 * he.x, 1.05 * he.x);
        local.y = std::clamp(local.y + rng.normal(0.0, 0.02), -1.05 * he.y, 1.05 * he.y);
        local.z = std::clamp(local.z + rng.normal(0.0, 0.02), -1.05 * he.z, 1.05 * he.z);
        const Vec2 xy = Vec2{local.x, local.y}.rotated(state.heading);
        LidarPoint pt;
        pt.x = xy.x + state.position.x;
        pt.y = xy.y + state.position.y;
        pt.z = local.z + state.position.z;
        fill_features(pt, prof.base_intensity, 0.0, rng);
        out.points.push_back(pt);
    }

    // Cue cluster: a tight bright blob near the top front of the body whose
    // lateral offset encodes the turn rate the cue carries.
    if (n_cue > 0) {
        const double lateral = 0.85 * he.y * std::tanh(cue.encoded_turn_rate / 0.35);
        out.cue_lateral_sign = sign_of(lateral);
        const Vec3 center{0.3 * he.x, lateral, 0.6 * he.z};
        for (int i = 0; i < n_cue; ++i) {
            Vec3 local{center.x + rng.normal(0.0, 0.05), center.y + rng.normal(0.0, 0.05),
                       center.z + rng.normal(0.0, 0.05)};
            local.x = std::clamp(local.x, -1.05 * he.x, 1.05 * he.x);
            local.y = std::clamp(local.y, -1.05 * he.y, 1.05 * he.y);
            local.z = std::clamp(local.z, -1.05 * he.z, 1.05 * he.z);
            const Vec2 xy = Vec2{local.x, local.y}.rotated(state.heading);
            LidarPoint pt;
            pt.x = xy.x + state.position.x;
            pt.y = xy.y + state.position.y;
            pt.z = local.z + state.position.z;
            fill_features(pt, prof.base_intensity, 0.25, rng);
            out.points.push_back(pt);
        }
    }
    return out;
}

RenderedCloud render_points(const AgentState& state, AgentClass cls, const CueSpec& cue,
                            double true_turn_rate, Rng& rng) {
    return render_points(state, cls, draw_cue(cue, cls, true_turn_rate, rng), rng);
}

FutureState rollout_state(const AgentState& current, const AgentPlan& plan, double t) {
    FutureState fs;
    const double speed = current.velocity.norm();
    const double h0 = current.heading;
    const Vec2 p0{current.position.x, current.position.y};
    switch (plan.maneuver) {
        case 0: {
            fs.position = p0 + current.velocity * t;
            fs.velocity = current.velocity;
            break;
        }
        case 1: {
            const double w = plan.turn_rate;
            const double h = h0 + w * t;
            fs.position = {p0.x + speed / w * (std::sin(h) - std::sin(h0)),
                           p0.y + speed / w * (std::cos(h0) - std::cos(h))};
            fs.velocity = {speed * std::cos(h), speed * std::sin(h)};
            break;
        }
        default: {
            const double t_stop = plan.decel > 0.0 ? speed / plan.decel : 0.0;
            const double tc = std::min(t, t_stop);
            const double s = speed * tc - 0.5 * plan.decel * tc * tc;
            const Vec2 dir{std::cos(h0), std::sin(h0)};
            fs.position = p0 + dir * s;
            const double v = std::max(0.0, speed - plan.decel * t);
            fs.velocity = dir * v;
            break;
        }
    }
    fs.valid = true;
    return fs;
}

Scenario gen_scenario(uint64_t seed, int n_agents, const CueSpec& cue) {
    if (n_agents < 1 || n_agents > 8)
        throw std::invalid_argument("gen_scenario: n_agents must be in [1,8], got " +
                                    std::to_string(n_agents));

    Scenario s;
    s.id = "scn_" + std::to_string(seed);
    s.frames.resize(kPastSteps);
    for (int f = 0; f < kPastSteps; ++f) s.frames[f].timestamp_index = f;

    std::vector<AgentPlan> plans(static_cast<size_t>(n_agents));
    std::vector<CueDraw> cues(static_cast<size_t>(n_agents));

    for (int a = 0; a < n_agents; ++a) {
        Rng rng(derive_seed(seed, "agent/" + std::to_string(a)));
        AgentTrack track;
        const double cls_pick = rng.uniform();
        track.cls = cls_pick < 1.0 / 3.0   ? AgentClass::kVehicle
                    : cls_pick < 2.0 / 3.0 ? AgentClass::kPedestrian
                                           : AgentClass::kCyclist;
        const ClassProfile& prof = profile(track.cls);

        const double radius = 24.0 * std::sqrt(rng.uniform());
        const double angle = rng.uniform(0.0, 6.283185307179586477);
        const double heading = wrap_angle(rng.uniform(-3.141592653589793, 3.141592653589793));
        const double speed = rng.uniform(prof.speed_lo, prof.speed_hi);
        const Vec2 cur{radius * std::cos(angle), radius * std::sin(angle)};
        const Vec2 vel{speed * std::cos(heading), speed * std::sin(heading)};
        const double zc = prof.extents.z / 2.0;

        // Past: constant velocity, so the future maneuver is invisible in the
        // history and only the cue can reveal the turn.
        track.past.resize(kPastSteps);
        for (int f = 0; f < kPastSteps; ++f) {
            AgentState st;
            const double dt = -0.1 * (kPastSteps - 1 - f);
            st.position = {cur.x + vel.x * dt, cur.y + vel.y * dt, zc};
            st.heading = heading;
            st.velocity = vel;
            st.box.center = st.position;
            st.box.half_extents = {prof.extents.x / 2.0, prof.extents.y / 2.0,
                                   prof.extents.z / 2.0};
            st.box.heading = heading;
            st.valid = true;
            track.past[f] = st;
        }

        plans[static_cast<size_t>(a)] = sample_plan(prof, rng);
        track.future.resize(kFutureSteps);
        for (int k = 0; k < kFutureSteps; ++k)
            track.future[k] =
                rollout_state(track.current(), plans[static_cast<size_t>(a)], 0.1 * (k + 1));

        cues[static_cast<size_t>(a)] =
            draw_cue(cue, track.cls, plans[static_cast<size_t>(a)].turn_rate, rng);
        s.agents.push_back(std::move(track));
    }

    // Point clouds: per-agent surface points plus scene clutter hitting no
    // box in particular.
    for (int f = 0; f < kPastSteps; ++f) {
        for (int a = 0; a < n_agents; ++a) {
            Rng rng(derive_seed(seed, "points/" + std::to_string(a) + "/" + std::to_string(f)));
            const auto cloud = render_points(s.agents[static_cast<size_t>(a)].past[f],
                                             s.agents[static_cast<size_t>(a)].cls,
                                             cues[static_cast<size_t>(a)], rng);
            auto& dst = s.frames[f].points;
            dst.insert(dst.end(), cloud.points.begin(), cloud.points.end());
        }
        Rng rng(derive_seed(seed, "clutter/" + std::to_string(f)));
        for (int i = 0; i < 24; ++i) {
            LidarPoint pt;
            const double r = 30.0 * std::sqrt(rng.uniform());
            const double th = rng.uniform(0.0, 6.283185307179586477);
            pt.x = r * std::cos(th);
            pt.y = r * std::sin(th);
            pt.z = rng.uniform(0.0, 0.3);
            fill_features(pt, 0.1, 0.0, rng);
            s.frames[f].points.push_back(pt);
        }
    }
    return s;
}

namespace {

void append_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

class BinReader {
public:
    BinReader(std::string bytes, std::string path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    double f32(const char* what) {
        if (pos_ + 4 > bytes_.size())
            throw std::runtime_error("parse error in " + path_ + " at byte offset " +
                                     std::to_string(pos_) + ": truncated " + what);
        uint32_t bits = 0;
        for (int i = 3; i >= 0; --i)
            bits = (bits << 8) | static_cast<uint8_t>(bytes_[pos_ + static_cast<size_t>(i)]);
        pos_ += 4;
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    size_t offset() const { return pos_; }
    const std::string& path() const { return path_; }

private:
    std::string bytes_;
    std::string path_;
    size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

constexpr int kBundleVersion = 1;

std::string frame_file(int f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "points_t%02d.bin", f);
    return buf;
}

}  // namespace

void write_bundle(const Scenario& scenario, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    json header;
    header["version"] = kBundleVersion;
    header["id"] = scenario.id;
    header["n_agents"] = scenario.agents.size();
    header["n_frames"] = scenario.frames.size();
    header["n_future_steps"] = kFutureSteps;
    header["class_names"] = {"vehicle", "pedestrian", "cyclist"};
    json agents = json::array();
    for (const auto& a : scenario.agents) {
        json ja;
        ja["class"] = class_name(a.cls);
        agents.push_back(ja);
    }
    header["agents"] = agents;
    json counts = json::array();
    for (const auto& f : scenario.frames) counts.push_back(f.points.size());
    header["point_counts"] = counts;
    spit(dir + "/header.json", header.dump(2) + "\n");

    for (size_t f = 0; f < scenario.frames.size(); ++f) {
        std::string bytes;
        bytes.reserve(scenario.frames[f].points.size() * 24);
        for (const auto& p : scenario.frames[f].points) {
            append_f32(bytes, p.x);
            append_f32(bytes, p.y);
            append_f32(bytes, p.z);
            append_f32(bytes, p.range);
            append_f32(bytes, p.intensity);
            append_f32(bytes, p.elongation);
        }
        spit(dir + "/" + frame_file(static_cast<int>(f)), bytes);
    }

    std::string tracks;
    for (const auto& a : scenario.agents) {
        for (const auto& st : a.past) {
            append_f32(tracks, st.position.x);
            append_f32(tracks, st.position.y);
            append_f32(tracks, st.position.z);
            append_f32(tracks, st.heading);
            append_f32(tracks, st.velocity.x);
            append_f32(tracks, st.velocity.y);
            append_f32(tracks, st.box.center.x);
            append_f32(tracks, st.box.center.y);
            append_f32(tracks, st.box.center.z);
            append_f32(tracks, st.box.half_extents.x);
            append_f32(tracks, st.box.half_extents.y);
            append_f32(tracks, st.box.half_extents.z);
            append_f32(tracks, st.box.heading);
            append_f32(tracks, st.valid ? 1.0 : 0.0);
        }
        for (const auto& fu : a.future) {
            append_f32(tracks, fu.position.x);
            append_f32(tracks, fu.position.y);
            append_f32(tracks, fu.velocity.x);
            append_f32(tracks, fu.velocity.y);
            append_f32(tracks, fu.valid ? 1.0 : 0.0);
        }
    }
    spit(dir + "/tracks.bin", tracks);
}

Scenario read_bundle(const std::string& dir) {
    json header;
    try {
        header = json::parse(slurp(dir + "/header.json"));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("parse error in " + dir + "/header.json at byte offset " +
                                 std::to_string(e.byte) + ": " + e.what());
    }
    const int version = header.at("version").get<int>();
    if (version != kBundleVersion)
        throw std::runtime_error("bundle version mismatch in " + dir + ": file has " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kBundleVersion));

    Scenario s;
    s.id = header.at("id").get<std::string>();
    const size_t n_agents = header.at("n_agents").get<size_t>();
    const size_t n_frames = header.at("n_frames").get<size_t>();
    const size_t n_future = header.at("n_future_steps").get<size_t>();

    s.frames.resize(n_frames);
    for (size_t f = 0; f < n_frames; ++f) {
        s.frames[f].timestamp_index = static_cast<int>(f);
        BinReader r(slurp(dir + "/" + frame_file(static_cast<int>(f))),
                    dir + "/" + frame_file(static_cast<int>(f)));
        while (!r.at_end()) {
            LidarPoint p;
            p.x = r.f32("point x");
            p.y = r.f32("point y");
            p.z = r.f32("point z");
            p.range = r.f32("point range");
            p.intensity = r.f32("point intensity");
            p.elongation = r.f32("point elongation");
            s.frames[f].points.push_back(p);
        }
    }

    const auto& agents_meta = header.at("agents");
    if (agents_meta.size() != n_agents)
        throw std::runtime_error("parse error in " + dir + "/header.json: agents size " +
                                 std::to_string(agents_meta.size()) + " vs n_agents " +
                                 std::to_string(n_agents));

    BinReader r(slurp(dir + "/tracks.bin"), dir + "/tracks.bin");
    for (size_t a = 0; a < n_agents; ++a) {
        AgentTrack t;
        t.cls = class_from_name(agents_meta[a].at("class").get<std::string>());
        t.past.resize(n_frames);
        for (size_t f = 0; f < n_frames; ++f) {
            AgentState& st = t.past[f];
            st.position.x = r.f32("track x");
            st.position.y = r.f32("track y");
            st.position.z = r.f32("track z");
            st.heading = r.f32("track heading");
            st.velocity.x = r.f32("track vx");
            st.velocity.y = r.f32("track vy");
            st.box.center.x = r.f32("box cx");
            st.box.center.y = r.f32("box cy");
            st.box.center.z = r.f32("box cz");
            st.box.half_extents.x = r.f32("box hx");
            st.box.half_extents.y = r.f32("box hy");
            st.box.half_extents.z = r.f32("box hz");
            st.box.heading = r.f32("box heading");
            st.valid = r.f32("track valid") != 0.0;
        }
        t.future.resize(n_future);
        for (size_t k = 0; k < n_future; ++k) {
            FutureState& fu = t.future[k];
            fu.position.x = r.f32("future x");
            fu.position.y = r.f32("future y");
            fu.velocity.x = r.f32("future vx");
            fu.velocity.y = r.f32("future vy");
            fu.valid = r.f32("future valid") != 0.0;
        }
        s.agents.push_back(std::move(t));
    }
    if (!r.at_end())
        throw std::runtime_error("parse error in " + r.path() + " at byte offset " +
                                 std::to_string(r.offset()) + ": trailing bytes");
    return s;
}

}  // namespace limtr
