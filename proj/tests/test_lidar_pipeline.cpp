#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "limtr/lidar_pipeline.hpp"

using namespace limtr;

namespace {

// Independent point-in-scaled-box oracle with an explicit rotation matrix.
bool oracle_in_box(const LidarPoint& p, const OrientedBox& box, double margin) {
    const double c = std::cos(box.heading), s = std::sin(box.heading);
    // inverse rotation: R(-h) = [[c, s], [-s, c]]
    const double dx = p.x - box.center.x, dy = p.y - box.center.y, dz = p.z - box.center.z;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    const double f = 1.0 + margin;
    return std::fabs(u) <= f * box.half_extents.x && std::fabs(v) <= f * box.half_extents.y &&
           std::fabs(dz) <= f * box.half_extents.z;
}

LidarPoint make_point(double x, double y, double z) {
    LidarPoint p;
    p.x = x;
    p.y = y;
    p.z = z;
    p.range = std::sqrt(x * x + y * y + z * z);
    p.intensity = 0.5;
    p.elongation = 0.1;
    return p;
}

OrientedBox make_box(double cx, double cy, double cz, double hx, double hy, double hz,
                     double heading) {
    OrientedBox b;
    b.center = {cx, cy, cz};
    b.half_extents = {hx, hy, hz};
    b.heading = heading;
    return b;
}

}  // namespace

TEST_CASE("crop_to_box margin boundary cases") {
    const OrientedBox box = make_box(0, 0, 0, 2.0, 1.0, 1.0, 0.0);
    PointFrame frame;
    frame.points.push_back(make_point(0, 0, 0));           // center
    frame.points.push_back(make_point(2.2, 0, 0));         // 1.10 x half length
    frame.points.push_back(make_point(2.4, 0, 0));         // 1.20 x half length
    const PointFrame cropped = crop_to_box(frame, box, 0.15);
    REQUIRE(cropped.points.size() == 2);
    CHECK(cropped.points[0].x == 0.0);
    CHECK(cropped.points[1].x == 2.2);  // scene coordinates preserved
}

TEST_CASE("crop_to_box with rotated box") {
    // heading pi/2: the length axis points along +y.
    const OrientedBox box = make_box(0, 0, 0, 2.0, 1.0, 1.0, 1.5707963267948966);
    PointFrame frame;
    frame.points.push_back(make_point(0, 2.2, 0));  // within 1.15 * 2.0 along length
    frame.points.push_back(make_point(0, 2.4, 0));
    frame.points.push_back(make_point(1.2, 0, 0));  // width axis: beyond 1.15 * 1.0
    const PointFrame cropped = crop_to_box(frame, box, 0.15);
    REQUIRE(cropped.points.size() == 1);
    CHECK(cropped.points[0].y == 2.2);
}

TEST_CASE("crop_to_box agrees with the brute-force oracle exactly") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const OrientedBox box =
            make_box(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1, 1),
                     rng.uniform(0.3, 3.0), rng.uniform(0.3, 2.0), rng.uniform(0.3, 1.5),
                     rng.uniform(-3.2, 3.2));
        const double margin = rng.uniform(0.0, 0.4);
        PointFrame frame;
        for (int i = 0; i < 200; ++i)
            frame.points.push_back(make_point(rng.uniform(-8, 8), rng.uniform(-8, 8),
                                              rng.uniform(-3, 3)));
        const PointFrame cropped = crop_to_box(frame, box, margin);
        size_t expected = 0;
        for (const auto& p : frame.points)
            if (oracle_in_box(p, box, margin)) ++expected;
        CHECK(cropped.points.size() == expected);
        for (const auto& p : cropped.points) CHECK(oracle_in_box(p, box, margin));
    }
    CHECK_THROWS_AS(crop_to_box(PointFrame{}, make_box(0, 0, 0, 1, 1, 1, 0), -0.1),
                    std::invalid_argument);
}

TEST_CASE("to_agent_frame examples and round trip") {
    PointFrame frame;
    frame.points.push_back(make_point(2, 4, 0));
    const PointFrame same = to_agent_frame(frame, {0, 0, 0, 0});
    CHECK(same.points[0].x == doctest::Approx(2.0));
    CHECK(same.points[0].y == doctest::Approx(4.0));

    const PointFrame rotated = to_agent_frame(frame, {2, 3, 0, 1.5707963267948966});
    CHECK(rotated.points[0].x == doctest::Approx(1.0));
    CHECK(rotated.points[0].y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rotated.points[0].range == frame.points[0].range);  // features unchanged

    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        const Pose pose{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-2, 2),
                        rng.uniform(-3.2, 3.2)};
        PointFrame pts;
        for (int i = 0; i < 30; ++i)
            pts.points.push_back(
                make_point(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-2, 2)));
        const PointFrame there = to_agent_frame(pts, pose);
        const PointFrame back = from_agent_frame(there, pose);
        for (size_t i = 0; i < pts.points.size(); ++i) {
            CHECK(std::fabs(back.points[i].x - pts.points[i].x) < 1e-12);
            CHECK(std::fabs(back.points[i].y - pts.points[i].y) < 1e-12);
            CHECK(std::fabs(back.points[i].z - pts.points[i].z) < 1e-12);
        }
        // rigid motion: pairwise distances preserved
        for (size_t i = 1; i < 10; ++i) {
            const double before = std::hypot(pts.points[i].x - pts.points[0].x,
                                             pts.points[i].y - pts.points[0].y);
            const double after = std::hypot(there.points[i].x - there.points[0].x,
                                            there.points[i].y - there.points[0].y);
            CHECK(std::fabs(before - after) < 1e-9);
        }
    }
}

TEST_CASE("sample_or_pad: subsample, pad, and empty cases") {
    PointFrame big;
    for (int i = 0; i < 600; ++i) big.points.push_back(make_point(i, 0, 0));
    const auto sampled = sample_or_pad(big, 512, 77);
    CHECK(sampled.points.size() == 512);
    size_t true_count = 0;
    for (uint8_t m : sampled.mask) true_count += m;
    CHECK(true_count == 512);
    const auto sampled2 = sample_or_pad(big, 512, 77);
    for (size_t i = 0; i < 512; ++i) {
        CHECK(sampled.points[i].x == sampled2.points[i].x);  // seeded determinism
        CHECK(sampled.mask[i] == sampled2.mask[i]);
    }
    // subset preserves input order
    for (size_t i = 1; i < 512; ++i) CHECK(sampled.points[i].x > sampled.points[i - 1].x);

    PointFrame small;
    for (int i = 0; i < 100; ++i) small.points.push_back(make_point(i, 1, 0));
    const auto padded = sample_or_pad(small, 512, 1);
    for (size_t i = 0; i < 100; ++i) {
        CHECK(padded.mask[i] == 1);
        CHECK(padded.points[i].x == doctest::Approx(static_cast<double>(i)));
    }
    for (size_t i = 100; i < 512; ++i) {
        CHECK(padded.mask[i] == 0);
        CHECK(padded.points[i].x == 0.0);
        CHECK(padded.points[i].intensity == 0.0);
    }

    const auto empty = sample_or_pad(PointFrame{}, 512, 1);
    for (size_t i = 0; i < 512; ++i) CHECK(empty.mask[i] == 0);
}

TEST_CASE("featurize dimension formula and one-hot order") {
    std::vector<LidarPoint> pts = {make_point(1, 2, 3)};
    pts[0].range = 4.5;
    pts[0].intensity = 0.8;
    pts[0].elongation = 0.2;
    std::vector<uint8_t> mask = {1};

    FeatureSelection intensity_only = FeatureSelection::parse("intensity");
    Tensor rows = featurize(pts, mask, intensity_only, AgentClass::kPedestrian);
    REQUIRE(rows.shape[1] == 7);
    CHECK(rows.data[0] == 1.0);
    CHECK(rows.data[1] == 2.0);
    CHECK(rows.data[2] == 3.0);
    CHECK(rows.data[3] == 0.8);
    CHECK(rows.data[4] == 0.0);  // vehicle slot
    CHECK(rows.data[5] == 1.0);  // pedestrian slot
    CHECK(rows.data[6] == 0.0);  // cyclist slot

    CHECK(featurize(pts, mask, FeatureSelection::parse("all"), AgentClass::kVehicle).shape[1] ==
          9);
    CHECK(featurize(pts, mask, FeatureSelection::parse("none"), AgentClass::kCyclist).shape[1] ==
          6);

    // D = 3 + |selection| + 3 for all 8 subsets
    for (int bits = 0; bits < 8; ++bits) {
        FeatureSelection sel;
        sel.range = bits & 1;
        sel.intensity = bits & 2;
        sel.elongation = bits & 4;
        CHECK(sel.point_dim() == 6 + sel.count());
        const Tensor r = featurize(pts, mask, sel, AgentClass::kVehicle);
        CHECK(r.shape[1] == static_cast<size_t>(6 + sel.count()));
    }

    // padded rows stay all-zero
    std::vector<LidarPoint> two = {pts[0], make_point(9, 9, 9)};
    std::vector<uint8_t> mask2 = {1, 0};
    const Tensor r2 = featurize(two, mask2, intensity_only, AgentClass::kVehicle);
    for (size_t d = 0; d < 7; ++d) CHECK(r2.at2(1, d) == 0.0);
}

TEST_CASE("select_frame_indices equal spacing") {
    CHECK(select_frame_indices(6) == std::vector<int>{0, 2, 4, 6, 8, 10});
    CHECK(select_frame_indices(1) == std::vector<int>{10});
    CHECK(select_frame_indices(11) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(select_frame_indices(3) == std::vector<int>{0, 5, 10});
    CHECK_THROWS_AS(select_frame_indices(4), std::invalid_argument);
}

TEST_CASE("build_lidar_tensor shapes, determinism, and padding") {
    const Scenario s = gen_scenario(55, 4, CueSpec{1.0});
    const FeatureSelection sel = FeatureSelection::parse("intensity");

    const LidarTensor t = build_lidar_tensor(s, 0, sel, 11, 512, 9);
    CHECK(t.n_frames == 11);
    CHECK(t.n_points == 512);
    CHECK(t.dim == 7);
    CHECK(t.data.shape == std::vector<size_t>{11, 512, 7});

    const LidarTensor t2 = build_lidar_tensor(s, 0, sel, 11, 512, 9);
    for (size_t i = 0; i < t.data.numel(); ++i) CHECK(t.data.data[i] == t2.data.data[i]);
    CHECK(t.mask == t2.mask);

    // every frame with points has at least one valid entry, padded rows zero
    for (size_t f = 0; f < t.n_frames; ++f) {
        size_t valid = 0;
        for (size_t p = 0; p < t.n_points; ++p) {
            if (t.mask_at(f, p)) {
                ++valid;
            } else {
                for (size_t d = 0; d < t.dim; ++d)
                    CHECK(t.data.data[(f * t.n_points + p) * t.dim + d] == 0.0);
            }
        }
        CHECK(valid > 0);  // the target emits points every frame
    }

    // empty scene -> all-zero tensor, all-false mask
    std::vector<PointFrame> empty_frames(11);
    std::vector<AgentState> states(11, s.agents[0].past[0]);
    const LidarTensor empty = build_lidar_tensor(empty_frames, states,
                                                 AgentClass::kPedestrian, sel, 512, 3);
    for (double v : empty.data.data) CHECK(v == 0.0);
    for (uint8_t m : empty.mask) CHECK(m == 0);

    // frame selection produces the reduced time axis
    const LidarTensor t6 = build_lidar_tensor(s, 0, sel, 6, 512, 9);
    CHECK(t6.n_frames == 6);
    const LidarTensor t1 = build_lidar_tensor(s, 0, sel, 1, 512, 9);
    CHECK(t1.n_frames == 1);
}
