#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace mst {

constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline double norm2(const Vec3& v) { return dot(v, v); }
inline double dist(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline bool finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline Vec3 normalized(const Vec3& v) {
    double n = norm(v);
    if (n == 0.0) throw std::domain_error("normalized: zero vector");
    return v / n;
}

/// Stable angle between two unit vectors, in [0, pi].
inline double angle_between(const Vec3& a, const Vec3& b) {
    return 2.0 * std::asin(0.5 * norm(a - b));
}

/// Unit tangent at `from` pointing toward `to` along the great circle
/// (both unit). Undefined for parallel/antipodal inputs.
inline Vec3 unit_tangent(const Vec3& from, const Vec3& to) {
    Vec3 t = to - dot(to, from) * from;
    double n = norm(t);
    if (n < 1e-14) throw std::domain_error("unit_tangent: degenerate pair");
    return t / n;
}

/// Walk angle `ang` from unit vector `a` along unit tangent `t` (t ⟂ a).
inline Vec3 rotate_toward(const Vec3& a, const Vec3& t, double ang) {
    return std::cos(ang) * a + std::sin(ang) * t;
}

/// Deterministic orthonormal tangent frame {e1, e2} at unit vector u,
/// with e1 x e2 = u.
/// Rodrigues rotation of v about a unit axis.
inline Vec3 rotate_about(const Vec3& axis, const Vec3& v, double ang) {
    double c = std::cos(ang), s = std::sin(ang);
    return c * v + s * cross(axis, v) + (1.0 - c) * dot(axis, v) * axis;
}

inline std::array<Vec3, 2> tangent_frame(const Vec3& u) {
    Vec3 ref = std::fabs(u.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    Vec3 e1 = normalized(cross(ref, u));
    Vec3 e2 = cross(u, e1);
    return {e1, e2};
}

/// Quintic smooth-step: 0 at 0, 1 at 1, zero first derivative at both ends.
inline double smoothstep5(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

/// Root of f on [lo, hi] by bisection; requires a sign change.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-12, int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) throw std::domain_error("bisect: no sign change");
    for (int i = 0; i < max_iter && hi - lo > tol; ++i) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0) == (flo > 0)) { lo = mid; flo = fm; } else { hi = mid; }
    }
    return 0.5 * (lo + hi);
}

/// Largest u >= 0 with |a + u d| = r. Requires the ray to reach radius r.
inline double ray_sphere_param(const Vec3& a, const Vec3& d, double r) {
    double A = norm2(d), B = 2.0 * dot(a, d), C = norm2(a) - r * r;
    double disc = B * B - 4.0 * A * C;
    if (disc < 0.0 || A == 0.0) throw std::domain_error("ray_sphere_param: no intersection");
    return (-B + std::sqrt(disc)) / (2.0 * A);
}

struct Vec2 {
    double x = 0.0, y = 0.0;
    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }

struct Mat2 {
    // row-major: [a b; c d]
    double a = 1, b = 0, c = 0, d = 1;

    Vec2 operator*(const Vec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    Mat2 operator*(const Mat2& m) const {
        return {a * m.a + b * m.c, a * m.b + b * m.d, c * m.a + d * m.c, c * m.b + d * m.d};
    }
    double det() const { return a * d - b * c; }
    Mat2 inverse() const {
        double dt = det();
        if (std::fabs(dt) < 1e-300) throw std::domain_error("Mat2: singular");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }
};

/// Split-mix style hash for seeding sub-generators deterministically.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace mst
