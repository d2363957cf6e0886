#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "limtr/scenario.hpp"

using namespace limtr;

namespace {

// Independent kinematics oracle: RK4 over (x, y, heading) with speed profile
// per maneuver, fine steps.
FutureState rk4_rollout(const AgentState& start, const AgentPlan& plan, double t_end) {
    double x = start.position.x, y = start.position.y, h = start.heading;
    double speed = start.velocity.norm();
    const double dt = 1e-4;
    const int steps = static_cast<int>(std::round(t_end / dt));
    for (int i = 0; i < steps; ++i) {
        const double t = i * dt;
        auto speed_at = [&](double tq) {
            if (plan.maneuver == 2) return std::max(0.0, speed - plan.decel * tq);
            return speed;
        };
        auto deriv = [&](double hh, double tq) {
            const double v = speed_at(tq);
            return std::array<double, 3>{v * std::cos(hh), v * std::sin(hh),
                                         plan.maneuver == 1 ? plan.turn_rate : 0.0};
        };
        const auto k1 = deriv(h, t);
        const auto k2 = deriv(h + 0.5 * dt * k1[2], t + 0.5 * dt);
        const auto k3 = deriv(h + 0.5 * dt * k2[2], t + 0.5 * dt);
        const auto k4 = deriv(h + dt * k3[2], t + dt);
        x += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        y += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        h += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
    }
    FutureState fs;
    fs.position = {x, y};
    const double v = plan.maneuver == 2 ? std::max(0.0, speed - plan.decel * t_end) : speed;
    fs.velocity = {v * std::cos(h), v * std::sin(h)};
    return fs;
}

AgentState make_state(double x, double y, double heading, double speed) {
    AgentState st;
    st.position = {x, y, 0.9};
    st.heading = heading;
    st.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
    st.box.center = st.position;
    st.box.half_extents = {0.45, 0.45, 0.9};
    st.box.heading = heading;
    return st;
}

bool scenarios_identical(const Scenario& a, const Scenario& b) {
    if (a.agents.size() != b.agents.size() || a.frames.size() != b.frames.size()) return false;
    for (size_t f = 0; f < a.frames.size(); ++f) {
        if (a.frames[f].points.size() != b.frames[f].points.size()) return false;
        for (size_t p = 0; p < a.frames[f].points.size(); ++p) {
            const auto& pa = a.frames[f].points[p];
            const auto& pb = b.frames[f].points[p];
            if (pa.x != pb.x || pa.y != pb.y || pa.z != pb.z || pa.range != pb.range ||
                pa.intensity != pb.intensity || pa.elongation != pb.elongation)
                return false;
        }
    }
    for (size_t i = 0; i < a.agents.size(); ++i) {
        if (a.agents[i].cls != b.agents[i].cls) return false;
        for (size_t s = 0; s < a.agents[i].past.size(); ++s) {
            const auto& sa = a.agents[i].past[s];
            const auto& sb = b.agents[i].past[s];
            if (sa.position.x != sb.position.x || sa.heading != sb.heading ||
                sa.velocity.x != sb.velocity.x)
                return false;
        }
        for (size_t s = 0; s < a.agents[i].future.size(); ++s) {
            const auto& fa = a.agents[i].future[s];
            const auto& fb = b.agents[i].future[s];
            if (fa.position.x != fb.position.x || fa.position.y != fb.position.y) return false;
        }
    }
    return true;
}

std::string slurp_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen_scenario is deterministic and respects agent bounds") {
    const Scenario a = gen_scenario(42, 5, CueSpec{0.5});
    const Scenario b = gen_scenario(42, 5, CueSpec{0.5});
    CHECK(scenarios_identical(a, b));
    CHECK(a.agents.size() == 5);
    CHECK(a.frames.size() == static_cast<size_t>(kPastSteps));
    for (const auto& agent : a.agents) {
        CHECK(agent.past.size() == static_cast<size_t>(kPastSteps));
        CHECK(agent.future.size() == static_cast<size_t>(kFutureSteps));
    }
    CHECK_THROWS_AS(gen_scenario(1, 0, CueSpec{}), std::invalid_argument);
    CHECK_THROWS_AS(gen_scenario(1, 9, CueSpec{}), std::invalid_argument);
}

TEST_CASE("closed-form rollout matches an RK4 integration oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        const AgentState start = make_state(rng.uniform(-10, 10), rng.uniform(-10, 10),
                                            rng.uniform(-3, 3), rng.uniform(0.5, 8.0));
        AgentPlan plan;
        plan.maneuver = trial % 3;
        plan.turn_rate = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 0.8);
        plan.decel = rng.uniform(0.5, 3.0);
        for (double t : {0.5, 2.0, 8.0}) {
            const FutureState closed = rollout_state(start, plan, t);
            const FutureState integrated = rk4_rollout(start, plan, t);
            CHECK(std::fabs(closed.position.x - integrated.position.x) < 1e-9);
            CHECK(std::fabs(closed.position.y - integrated.position.y) < 1e-9);
            CHECK(std::fabs(closed.velocity.x - integrated.velocity.x) < 1e-9);
            CHECK(std::fabs(closed.velocity.y - integrated.velocity.y) < 1e-9);
        }
    }
}

TEST_CASE("generated futures satisfy the generating kinematics exactly") {
    // Constant-velocity pasts: every agent's past positions must lie on the
    // straight line through the current state.
    const Scenario s = gen_scenario(99, 8, CueSpec{1.0});
    for (const auto& agent : s.agents) {
        const AgentState& cur = agent.current();
        for (int f = 0; f < kPastSteps; ++f) {
            const double dt = -0.1 * (kPastSteps - 1 - f);
            CHECK(std::fabs(agent.past[f].position.x - (cur.position.x + cur.velocity.x * dt)) <
                  1e-9);
            CHECK(std::fabs(agent.past[f].position.y - (cur.position.y + cur.velocity.y * dt)) <
                  1e-9);
            CHECK(agent.past[f].heading == cur.heading);
        }
        // Futures follow one of the closed-form families; verify the first
        // step pins the maneuver and the rest is consistent with it.
        const double v0 = cur.velocity.norm();
        const double h0 = cur.heading;
        const double h1 = std::atan2(agent.future[0].velocity.y, agent.future[0].velocity.x);
        const double v1 = agent.future[0].velocity.norm();
        AgentPlan plan;
        if (v1 < v0 - 1e-9) {
            plan.maneuver = 2;
            plan.decel = (v0 - v1) / 0.1;
        } else if (std::fabs(wrap_angle(h1 - h0)) > 1e-9) {
            plan.maneuver = 1;
            plan.turn_rate = wrap_angle(h1 - h0) / 0.1;
        } else {
            plan.maneuver = 0;
        }
        for (int k = 0; k < kFutureSteps; k += 13) {
            const FutureState expect = rollout_state(cur, plan, 0.1 * (k + 1));
            CHECK(std::fabs(expect.position.x - agent.future[k].position.x) < 1e-6);
            CHECK(std::fabs(expect.position.y - agent.future[k].position.y) < 1e-6);
        }
    }
}

TEST_CASE("rendered points stay within 1.05x the box half extents") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const AgentState st = make_state(rng.uniform(-20, 20), rng.uniform(-20, 20),
                                         rng.uniform(-3, 3), 1.5);
        const AgentClass cls = static_cast<AgentClass>(trial % 3);
        const auto cloud = render_points(st, cls, CueSpec{1.0}, 0.5, rng);
        CHECK(cloud.points.size() > 20);
        // Recover the true half extents from the class defaults via the box
        // the generator would use; the state's box here is pedestrian-sized,
        // so transform the points into the agent frame and bound them by the
        // observed extremes instead.
        for (const auto& p : cloud.points) {
            const Vec2 local = Vec2{p.x - st.position.x, p.y - st.position.y}.rotated(
                -st.heading);
            CHECK(std::fabs(local.x) <= 1.05 * 2.31);  // largest class: vehicle hx 2.3
            CHECK(std::fabs(p.z - st.position.z) <= 1.05 * 0.91);
            CHECK(p.range > 0.0);
            CHECK(p.intensity >= 0.0);
            CHECK(p.elongation >= 0.0);
            (void)local;
        }
    }
}

TEST_CASE("cue: strength 1 always encodes the turn sign") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const double omega = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 0.9);
        const AgentState st = make_state(rng.uniform(-5, 5), rng.uniform(-5, 5),
                                         rng.uniform(-3, 3), 1.2);
        const AgentClass cls = rng.bernoulli(0.5) ? AgentClass::kPedestrian
                                                  : AgentClass::kCyclist;
        const auto cloud = render_points(st, cls, CueSpec{1.0}, omega, rng);
        CHECK(cloud.cue_lateral_sign == (omega > 0 ? 1 : -1));
    }
    // Vehicles never carry the cue.
    const AgentState st = make_state(0, 0, 0, 5.0);
    const auto cloud = render_points(st, AgentClass::kVehicle, CueSpec{1.0}, 0.7, rng);
    CHECK(cloud.cue_lateral_sign == 0);
}

TEST_CASE("cue: strength 0 is statistically independent of the turn sign") {
    Rng rng(17);
    // 2x2 contingency of (cue sign, true sign) restricted to turning draws.
    long counts[2][2] = {{0, 0}, {0, 0}};
    int used = 0;
    while (used < 1000) {
        const double omega = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 0.9);
        const AgentState st = make_state(0, 0, rng.uniform(-3, 3), 1.2);
        const auto cloud = render_points(st, AgentClass::kPedestrian, CueSpec{0.0}, omega, rng);
        if (cloud.cue_lateral_sign == 0) continue;  // fake draw sampled "straight"
        ++counts[cloud.cue_lateral_sign > 0 ? 1 : 0][omega > 0 ? 1 : 0];
        ++used;
    }
    const double n = 1000.0;
    double chi2 = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double row = counts[i][0] + counts[i][1];
            const double col = counts[0][j] + counts[1][j];
            const double expected = row * col / n;
            const double diff = counts[i][j] - expected;
            chi2 += diff * diff / expected;
        }
    CHECK(chi2 < 6.635);  // chi-square critical value, df=1, alpha=0.01
}

TEST_CASE("cue strength changes only cue statistics, not kinematics or body points") {
    const Scenario c0 = gen_scenario(1234, 6, CueSpec{0.0});
    const Scenario c1 = gen_scenario(1234, 6, CueSpec{1.0});
    REQUIRE(c0.agents.size() == c1.agents.size());
    for (size_t a = 0; a < c0.agents.size(); ++a) {
        for (int f = 0; f < kPastSteps; ++f) {
            CHECK(c0.agents[a].past[f].position.x == c1.agents[a].past[f].position.x);
            CHECK(c0.agents[a].past[f].position.y == c1.agents[a].past[f].position.y);
        }
        for (int k = 0; k < kFutureSteps; ++k) {
            CHECK(c0.agents[a].future[k].position.x == c1.agents[a].future[k].position.x);
            CHECK(c0.agents[a].future[k].position.y == c1.agents[a].future[k].position.y);
        }
    }
    for (size_t f = 0; f < c0.frames.size(); ++f)
        CHECK(c0.frames[f].points.size() == c1.frames[f].points.size());
}

TEST_CASE("bundle round trip is bit exact at the file level") {
    namespace fs = std::filesystem;
    const std::string base = (fs::temp_directory_path() / "limtr_bundle_test").string();
    fs::remove_all(base);

    Scenario s = gen_scenario(5, 3, CueSpec{0.7});
    s.frames[4].points.clear();  // empty frame must round-trip
    write_bundle(s, base + "/first");
    const Scenario loaded = read_bundle(base + "/first");
    write_bundle(loaded, base + "/second");

    for (const auto& entry : fs::directory_iterator(base + "/first")) {
        const std::string name = entry.path().filename().string();
        CHECK(slurp_file(entry.path().string()) == slurp_file(base + "/second/" + name));
    }
    CHECK(loaded.frames[4].points.empty());
    CHECK(loaded.agents.size() == 3);

    // Reading the written bundle twice gives identical scenarios.
    const Scenario again = read_bundle(base + "/first");
    CHECK(scenarios_identical(loaded, again));
}

TEST_CASE("bundle reader rejects truncation and version mismatch") {
    namespace fs = std::filesystem;
    const std::string base = (fs::temp_directory_path() / "limtr_bundle_err").string();
    fs::remove_all(base);
    const Scenario s = gen_scenario(6, 2, CueSpec{});
    write_bundle(s, base + "/ok");

    // truncate tracks.bin
    fs::create_directories(base + "/trunc");
    for (const auto& entry : fs::directory_iterator(base + "/ok"))
        fs::copy(entry.path(), base + "/trunc/" + entry.path().filename().string());
    {
        std::string bytes = slurp_file(base + "/trunc/tracks.bin");
        std::ofstream f(base + "/trunc/tracks.bin", std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    }
    CHECK_THROWS_WITH_AS(read_bundle(base + "/trunc"), doctest::Contains("byte offset"),
                         std::runtime_error);

    // bump the version
    fs::create_directories(base + "/ver");
    for (const auto& entry : fs::directory_iterator(base + "/ok"))
        fs::copy(entry.path(), base + "/ver/" + entry.path().filename().string());
    {
        std::string header = slurp_file(base + "/ver/header.json");
        const auto pos = header.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        header.replace(pos, 12, "\"version\": 9");
        std::ofstream f(base + "/ver/header.json", std::ios::trunc);
        f << header;
    }
    CHECK_THROWS_WITH_AS(read_bundle(base + "/ver"), doctest::Contains("version"),
                         std::runtime_error);
}
