#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "errors.hpp"

namespace lexmorl {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double k, Vec2 v) { return {k * v.x, k * v.y}; }
    friend Vec2 operator*(Vec2 v, double k) { return {k * v.x, k * v.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 unit_from_angle(double rad) { return {std::cos(rad), std::sin(rad)}; }
inline Vec2 left_normal(Vec2 v) { return {-v.y, v.x}; }

inline Vec2 rotate(Vec2 v, double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wraps degrees into [-180, 180).
inline double wrap_degrees(double deg) {
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    return w - 180.0;
}

/// Axis-aligned box.
struct Box {
    Vec2 min;
    Vec2 max;

    bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
    bool intersects(const Box& o) const {
        return min.x <= o.max.x && o.min.x <= max.x && min.y <= o.max.y && o.min.y <= max.y;
    }
    double width() const { return max.x - min.x; }
    double height() const { return max.y - min.y; }
    bool valid() const { return max.x > min.x && max.y > min.y; }
    Vec2 clamp(Vec2 p) const { return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y)}; }
    std::array<Vec2, 4> corners() const { return {min, Vec2{max.x, min.y}, max, Vec2{min.x, max.y}}; }
};

/// Rectangle centered at `center`, long axis along `heading`.
struct OrientedRect {
    Vec2 center;
    double heading = 0.0;
    double length = 0.0;
    double width = 0.0;

    Vec2 axis() const { return unit_from_angle(heading); }

    /// Point in rectangle-local (forward, left) coordinates.
    Vec2 to_local(Vec2 p) const {
        const Vec2 d = p - center;
        const Vec2 f = axis();
        return {dot(d, f), dot(d, left_normal(f))};
    }

    std::array<Vec2, 4> corners() const {
        const Vec2 f = axis() * (0.5 * length);
        const Vec2 l = left_normal(axis()) * (0.5 * width);
        return {center + f + l, center + f - l, center - f - l, center - f + l};
    }

    /// Euclidean distance from p to the rectangle; 0 inside.
    double distance_to(Vec2 p) const {
        const Vec2 q = to_local(p);
        const double dx = std::max(std::abs(q.x) - 0.5 * length, 0.0);
        const double dy = std::max(std::abs(q.y) - 0.5 * width, 0.0);
        return std::hypot(dx, dy);
    }

    /// Signed clearance between a disc and the rectangle (negative on overlap).
    double clearance(Vec2 disc_center, double radius) const {
        const Vec2 q = to_local(disc_center);
        const double dx = std::abs(q.x) - 0.5 * length;
        const double dy = std::abs(q.y) - 0.5 * width;
        if (dx <= 0.0 && dy <= 0.0) return std::max(dx, dy) - radius;
        return std::hypot(std::max(dx, 0.0), std::max(dy, 0.0)) - radius;
    }

    bool overlaps_disc(Vec2 c, double radius) const { return clearance(c, radius) < 0.0; }

    /// Separating-axis test against an axis-aligned box.
    bool intersects(const Box& b) const {
        const auto rc = corners();
        const auto bc = b.corners();
        const Vec2 f = axis();
        const std::array<Vec2, 4> axes = {Vec2{1, 0}, Vec2{0, 1}, f, left_normal(f)};
        for (Vec2 ax : axes) {
            double r0 = std::numeric_limits<double>::infinity(), r1 = -r0;
            double b0 = r0, b1 = -r0;
            for (Vec2 c : rc) { const double d = dot(c, ax); r0 = std::min(r0, d); r1 = std::max(r1, d); }
            for (Vec2 c : bc) { const double d = dot(c, ax); b0 = std::min(b0, d); b1 = std::max(b1, d); }
            if (r1 < b0 || b1 < r0) return false;
        }
        return true;
    }
};

/// Projection of a point onto a polyline.
struct PolylineProjection {
    double arc = 0.0;      ///< arc length of the closest point
    double lateral = 0.0;  ///< signed offset, positive to the left of travel
    double distance = std::numeric_limits<double>::infinity();
};

/// Piecewise-linear path parameterized by arc length.
class Polyline {
public:
    Polyline() = default;
    explicit Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw ConfigError("polyline needs at least two points");
        cumulative_.assign(points_.size(), 0.0);
        for (std::size_t i = 1; i < points_.size(); ++i) {
            const double seg = distance(points_[i - 1], points_[i]);
            if (!(seg > 0.0)) throw ConfigError("polyline has coincident consecutive points");
            cumulative_[i] = cumulative_[i - 1] + seg;
        }
    }

    double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
    const std::vector<Vec2>& points() const { return points_; }

    /// Index of the segment containing arc length s.
    std::size_t segment_at(double s) const {
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
        const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cumulative_.begin() - 1, 0));
        return std::min(idx, points_.size() - 2);
    }

    Vec2 point_at(double s) const {
        s = std::clamp(s, 0.0, length());
        const std::size_t i = segment_at(s);
        const double seg = cumulative_[i + 1] - cumulative_[i];
        const double t = (s - cumulative_[i]) / seg;
        return points_[i] + t * (points_[i + 1] - points_[i]);
    }

    double heading_at(double s) const {
        const std::size_t i = segment_at(std::clamp(s, 0.0, length()));
        const Vec2 d = points_[i + 1] - points_[i];
        return std::atan2(d.y, d.x);
    }

    /// Closest point with arc length restricted to [s_lo, s_hi].
    PolylineProjection project(Vec2 p, double s_lo, double s_hi) const {
        PolylineProjection best;
        s_lo = std::max(s_lo, 0.0);
        s_hi = std::min(s_hi, length());
        if (s_hi < s_lo) return best;
        for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
            const double a = cumulative_[i], b = cumulative_[i + 1];
            if (b < s_lo || a > s_hi) continue;
            const Vec2 d = points_[i + 1] - points_[i];
            const double len = b - a;
            const Vec2 u = d * (1.0 / len);
            double s = a + dot(p - points_[i], u);
            s = std::clamp(s, std::max(a, s_lo), std::min(b, s_hi));
            const Vec2 q = points_[i] + (s - a) * u;
            const double dist = distance(p, q);
            if (dist < best.distance) {
                best.distance = dist;
                best.arc = s;
                best.lateral = cross(u, p - q);
            }
        }
        return best;
    }

private:
    std::vector<Vec2> points_;
    std::vector<double> cumulative_;
};

}  // namespace lexmorl
