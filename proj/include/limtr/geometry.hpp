#pragma once

#include <cmath>

namespace limtr {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::hypot(x, y); }

    // Counter-clockwise rotation by angle (radians).
    Vec2 rotated(double angle) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {c * x - s * y, s * x + c * y};
    }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double kTwoPi = 6.283185307179586477;
    a = std::fmod(a, kTwoPi);
    if (a <= -3.141592653589793239) a += kTwoPi;
    if (a > 3.141592653589793239) a -= kTwoPi;
    return a;
}

// Yaw-only oriented box; half_extents strictly positive.
struct OrientedBox {
    Vec3 center;
    Vec3 half_extents;  // (l/2, w/2, h/2)
    double heading = 0.0;

    // Expresses p in the box frame: translate by -center, rotate by -heading.
    Vec3 to_box_frame(const Vec3& p) const {
        const Vec2 r = Vec2{p.x - center.x, p.y - center.y}.rotated(-heading);
        return {r.x, r.y, p.z - center.z};
    }

    Vec3 from_box_frame(const Vec3& u) const {
        const Vec2 r = Vec2{u.x, u.y}.rotated(heading);
        return {r.x + center.x, r.y + center.y, u.z + center.z};
    }

    bool contains(const Vec3& p, double margin = 0.0) const {
        const Vec3 u = to_box_frame(p);
        const double f = 1.0 + margin;
        return std::fabs(u.x) <= f * half_extents.x && std::fabs(u.y) <= f * half_extents.y &&
               std::fabs(u.z) <= f * half_extents.z;
    }
};

}  // namespace limtr
