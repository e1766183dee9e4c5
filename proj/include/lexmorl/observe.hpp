#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "env.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "map.hpp"

namespace lexmorl {

/// Ego-centric region of interest. Rows run along the ego heading (rear to
/// front), columns across it (right to left).
struct GridSpec {
    std::size_t rows = 40;       ///< H, along heading
    std::size_t cols = 30;       ///< W, across heading
    double cell = 0.5;           ///< meters per cell
    double rear_fraction = 0.25; ///< share of the ROI length behind the ego

    double length() const { return static_cast<double>(rows) * cell; }
    double width() const { return static_cast<double>(cols) * cell; }
    std::size_t size() const { return rows * cols * kGridLayers; }

    static constexpr std::size_t kGridLayers = 4;

    void validate() const {
        if (rows == 0 || cols == 0 || !(cell > 0.0)) throw InvalidArgument("grid: ROI dimensions must be positive");
        if (!(rear_fraction >= 0.0 && rear_fraction < 1.0)) throw InvalidArgument("grid: rear fraction outside [0, 1)");
    }
};

enum GridLayer : std::size_t { kOccupancy = 0, kRelativeSpeed = 1, kRelativeHeading = 2, kSemantic = 3 };

/// H x W x 4 tensor, channels last.
struct GridObservation {
    GridSpec spec;
    std::vector<double> data;

    double at(std::size_t r, std::size_t c, std::size_t layer) const {
        return data[(r * spec.cols + c) * GridSpec::kGridLayers + layer];
    }
    double& at(std::size_t r, std::size_t c, std::size_t layer) {
        return data[(r * spec.cols + c) * GridSpec::kGridLayers + layer];
    }
};

struct EgoObservation {
    double speed = 0.0;
};

/// Cell index of an ego-frame point, or false when outside the ROI.
inline bool grid_cell_of(const GridSpec& g, Vec2 local, std::size_t& row, std::size_t& col) {
    const double fwd = local.x + g.rear_fraction * g.length();
    const double lat = local.y + 0.5 * g.width();
    if (fwd < 0.0 || lat < 0.0) return false;
    const auto r = static_cast<std::size_t>(std::floor(fwd / g.cell));
    const auto c = static_cast<std::size_t>(std::floor(lat / g.cell));
    if (r >= g.rows || c >= g.cols) return false;
    row = r;
    col = c;
    return true;
}

/// Rasterizes pedestrians and road semantics around the ego.
///
/// Relative speed is the closing speed along the ego heading; relative
/// heading is pedestrian minus ego heading in degrees, wrapped to
/// [-180, 180). A cell holding several pedestrians keeps the nearest one.
inline GridObservation encode_grid(const EnvState& state, const MapSpec& map, const GridSpec& g) {
    g.validate();
    GridObservation obs{g, std::vector<double>(g.size(), 0.0)};
    const EgoState& ego = state.ego;
    const Vec2 f = unit_from_angle(ego.heading);
    const Vec2 l = left_normal(f);
    const double rear = g.rear_fraction * g.length();
    const double half_w = 0.5 * g.width();
    for (std::size_t r = 0; r < g.rows; ++r) {
        const double fwd = -rear + (static_cast<double>(r) + 0.5) * g.cell;
        for (std::size_t c = 0; c < g.cols; ++c) {
            const double lat = -half_w + (static_cast<double>(c) + 0.5) * g.cell;
            const Vec2 p = ego.position + fwd * f + lat * l;
            obs.at(r, c, kSemantic) = static_cast<double>(map.semantic(p));
        }
    }
    std::vector<double> nearest(g.rows * g.cols, std::numeric_limits<double>::infinity());
    const OrientedRect frame{ego.position, ego.heading, 0.0, 0.0};
    for (const auto& p : state.pedestrians) {
        std::size_t r = 0, c = 0;
        const Vec2 local = frame.to_local(p.position);
        if (!grid_cell_of(g, local, r, c)) continue;
        const double d = norm(local);
        double& best = nearest[r * g.cols + c];
        if (d >= best) continue;
        best = d;
        obs.at(r, c, kOccupancy) = 1.0;
        obs.at(r, c, kRelativeSpeed) = ego.speed - dot(p.velocity, f);
        obs.at(r, c, kRelativeHeading) = wrap_degrees((p.heading - ego.heading) * 180.0 / std::numbers::pi);
    }
    return obs;
}

inline EgoObservation encode_ego(const EnvState& state) { return {state.ego.speed}; }

}  // namespace lexmorl
