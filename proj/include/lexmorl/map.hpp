#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "geometry.hpp"

namespace lexmorl {

/// Semantic road-type codes written into the observation grid.
enum class RoadType : int { Sidewalk = 0, Road = 1, Intersection = 2, Crosswalk = 3 };

/// Straight two-way road. Centerline must be axis-aligned.
struct RoadSegment {
    Vec2 from;
    Vec2 to;

    bool horizontal() const { return from.y == to.y; }
};

/// Sidewalk strip beside one side of a road, clipped at crossing roads.
struct Sidewalk {
    Box area;
    std::size_t road = 0;
    int side = 0;  ///< +1 on the +y / +x side of the centerline, -1 opposite
};

/// Static road network plus the ego route.
///
/// Roads carry two lanes of `lane_width` each; sidewalks of
/// `sidewalk_width` run alongside and are cut where another road crosses.
class MapSpec {
public:
    std::string name;
    double lane_width = 3.5;
    double sidewalk_width = 3.0;
    std::vector<RoadSegment> roads;
    std::vector<Box> intersections;
    std::vector<Box> crosswalks;
    std::vector<Vec2> route;

    /// Validates and builds derived geometry. Throws ConfigError.
    void finalize() {
        if (!(lane_width > 0.0) || !(sidewalk_width > 0.0)) throw ConfigError("map: widths must be positive");
        if (roads.empty()) throw ConfigError("map: no roads");
        road_boxes_.clear();
        for (const auto& r : roads) {
            const bool h = r.from.y == r.to.y, v = r.from.x == r.to.x;
            if (h == v) throw ConfigError("map: road segments must be axis-aligned and non-degenerate");
            const double hw = lane_width;
            if (h)
                road_boxes_.push_back({{std::min(r.from.x, r.to.x), r.from.y - hw}, {std::max(r.from.x, r.to.x), r.from.y + hw}});
            else
                road_boxes_.push_back({{r.from.x - hw, std::min(r.from.y, r.to.y)}, {r.from.x + hw, std::max(r.from.y, r.to.y)}});
        }
        for (const auto& b : intersections)
            if (!b.valid()) throw ConfigError("map: degenerate intersection region");
        for (const auto& c : crosswalks) {
            if (!c.valid()) throw ConfigError("map: degenerate crosswalk");
            if (std::none_of(road_boxes_.begin(), road_boxes_.end(), [&](const Box& r) { return r.intersects(c); }))
                throw ConfigError("map: crosswalk does not intersect any road");
        }
        if (route.size() < 2) throw ConfigError("map: route needs at least two waypoints");
        for (Vec2 w : route)
            if (!on_road(w)) throw ConfigError("map: route waypoint off the road surface");
        path_ = Polyline(route);
        build_sidewalks();
        bounds_ = road_boxes_.front();
        auto grow = [&](const Box& b) {
            bounds_.min.x = std::min(bounds_.min.x, b.min.x); bounds_.min.y = std::min(bounds_.min.y, b.min.y);
            bounds_.max.x = std::max(bounds_.max.x, b.max.x); bounds_.max.y = std::max(bounds_.max.y, b.max.y);
        };
        for (const auto& b : road_boxes_) grow(b);
        for (const auto& s : sidewalks_) grow(s.area);
        finalized_ = true;
    }

    bool finalized() const { return finalized_; }
    const Polyline& path() const { return path_; }
    Vec2 goal() const { return route.back(); }
    const std::vector<Box>& road_boxes() const { return road_boxes_; }
    const std::vector<Sidewalk>& sidewalks() const { return sidewalks_; }
    const Box& bounds() const { return bounds_; }

    RoadType semantic(Vec2 p) const {
        for (const auto& c : crosswalks)
            if (c.contains(p)) return RoadType::Crosswalk;
        for (const auto& b : intersections)
            if (b.contains(p)) return RoadType::Intersection;
        for (const auto& b : road_boxes_)
            if (b.contains(p)) return RoadType::Road;
        return RoadType::Sidewalk;
    }

    bool on_road(Vec2 p) const {
        if (std::any_of(intersections.begin(), intersections.end(), [&](const Box& b) { return b.contains(p); }))
            return true;
        return std::any_of(road_boxes_.begin(), road_boxes_.end(), [&](const Box& b) { return b.contains(p); });
    }

    /// Index of the sidewalk strip containing p, or -1.
    int sidewalk_at(Vec2 p) const {
        if (on_road(p)) return -1;
        for (std::size_t i = 0; i < sidewalks_.size(); ++i)
            if (sidewalks_[i].area.contains(p)) return static_cast<int>(i);
        return -1;
    }

private:
    void build_sidewalks() {
        sidewalks_.clear();
        for (std::size_t ri = 0; ri < roads.size(); ++ri) {
            const Box& rb = road_boxes_[ri];
            const bool h = roads[ri].horizontal();
            for (int side : {-1, 1}) {
                Box strip = rb;
                if (h) {
                    strip.min.y = side > 0 ? rb.max.y : rb.min.y - sidewalk_width;
                    strip.max.y = side > 0 ? rb.max.y + sidewalk_width : rb.min.y;
                } else {
                    strip.min.x = side > 0 ? rb.max.x : rb.min.x - sidewalk_width;
                    strip.max.x = side > 0 ? rb.max.x + sidewalk_width : rb.min.x;
                }
                // Cut the strip along its axis wherever another road crosses it.
                std::vector<std::pair<double, double>> pieces = {
                    h ? std::pair{strip.min.x, strip.max.x} : std::pair{strip.min.y, strip.max.y}};
                for (std::size_t oj = 0; oj < road_boxes_.size(); ++oj) {
                    if (oj == ri || !road_boxes_[oj].intersects(strip)) continue;
                    const double c0 = h ? road_boxes_[oj].min.x : road_boxes_[oj].min.y;
                    const double c1 = h ? road_boxes_[oj].max.x : road_boxes_[oj].max.y;
                    std::vector<std::pair<double, double>> next;
                    for (auto [a, b] : pieces) {
                        if (c1 <= a || c0 >= b) { next.emplace_back(a, b); continue; }
                        if (c0 > a) next.emplace_back(a, c0);
                        if (c1 < b) next.emplace_back(c1, b);
                    }
                    pieces = std::move(next);
                }
                for (auto [a, b] : pieces) {
                    if (b - a < 1.0) continue;
                    Box piece = strip;
                    if (h) { piece.min.x = a; piece.max.x = b; } else { piece.min.y = a; piece.max.y = b; }
                    sidewalks_.push_back({piece, ri, side});
                }
            }
        }
    }

    std::vector<Box> road_boxes_;
    std::vector<Sidewalk> sidewalks_;
    Polyline path_;
    Box bounds_{};
    bool finalized_ = false;
};

inline void to_json(nlohmann::json& j, const Vec2& v) { j = nlohmann::json::array({v.x, v.y}); }
inline void from_json(const nlohmann::json& j, Vec2& v) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("map: point must be [x, y]");
    v = {j[0].get<double>(), j[1].get<double>()};
}
inline void to_json(nlohmann::json& j, const Box& b) { j = {{"min", b.min}, {"max", b.max}}; }
inline void from_json(const nlohmann::json& j, Box& b) {
    b.min = j.at("min").get<Vec2>();
    b.max = j.at("max").get<Vec2>();
}

inline nlohmann::json map_to_json(const MapSpec& m) {
    nlohmann::json roads = nlohmann::json::array();
    for (const auto& r : m.roads) roads.push_back({{"from", r.from}, {"to", r.to}});
    return {{"name", m.name},         {"lane_width", m.lane_width}, {"sidewalk_width", m.sidewalk_width},
            {"roads", roads},         {"intersections", m.intersections},
            {"crosswalks", m.crosswalks}, {"route", m.route}};
}

inline MapSpec map_from_json(const nlohmann::json& j) {
    MapSpec m;
    try {
        m.name = j.value("name", std::string("unnamed"));
        m.lane_width = j.value("lane_width", 3.5);
        m.sidewalk_width = j.value("sidewalk_width", 3.0);
        for (const auto& r : j.at("roads")) m.roads.push_back({r.at("from").get<Vec2>(), r.at("to").get<Vec2>()});
        m.intersections = j.value("intersections", std::vector<Box>{});
        m.crosswalks = j.value("crosswalks", std::vector<Box>{});
        m.route = j.at("route").get<std::vector<Vec2>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("map: ") + e.what());
    }
    m.finalize();
    return m;
}

inline MapSpec load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open map file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("map " + path + ": " + e.what());
    }
    return map_from_json(j);
}

namespace detail {

inline void add_intersection(MapSpec& m, Vec2 c, bool crosswalk_e, bool crosswalk_w, bool crosswalk_n, bool crosswalk_s) {
    const double hw = m.lane_width, cw = 3.0;
    m.intersections.push_back({{c.x - hw, c.y - hw}, {c.x + hw, c.y + hw}});
    if (crosswalk_e) m.crosswalks.push_back({{c.x + hw, c.y - hw}, {c.x + hw + cw, c.y + hw}});
    if (crosswalk_w) m.crosswalks.push_back({{c.x - hw - cw, c.y - hw}, {c.x - hw, c.y + hw}});
    if (crosswalk_n) m.crosswalks.push_back({{c.x - hw, c.y + hw}, {c.x + hw, c.y + hw + cw}});
    if (crosswalk_s) m.crosswalks.push_back({{c.x - hw, c.y - hw - cw}, {c.x + hw, c.y - hw}});
}

}  // namespace detail

/// Training map: square grid of two-way roads with four-way intersections.
/// Route runs straight through one intersection and turns left at the next.
inline MapSpec training_map() {
    MapSpec m;
    m.name = "train";
    m.roads = {{{-60, 0}, {140, 0}}, {{-60, 80}, {140, 80}}, {{0, -60}, {0, 140}}, {{80, -60}, {80, 140}}};
    for (Vec2 c : {Vec2{0, 0}, Vec2{80, 0}, Vec2{0, 80}, Vec2{80, 80}})
        detail::add_intersection(m, c, true, true, true, true);
    const double lane = 0.5 * m.lane_width;
    m.route = {{-20, -lane}, {80 + lane, -lane}, {80 + lane, 50}};
    m.finalize();
    return m;
}

/// Held-out map with three-way (T) junctions only.
inline MapSpec heldout_three_way_map() {
    MapSpec m;
    m.name = "heldout1";
    m.roads = {{{-60, 0}, {180, 0}}, {{40, 0}, {40, 100}}, {{120, -100}, {120, 0}}};
    detail::add_intersection(m, {40, 0}, true, true, true, false);
    detail::add_intersection(m, {120, 0}, true, true, false, true);
    const double lane = 0.5 * m.lane_width;
    m.route = {{-10, -lane}, {120 - lane, -lane}, {120 - lane, -40}};
    m.finalize();
    return m;
}

/// Held-out map with a denser grid and a longer route with two turns.
inline MapSpec heldout_multi_intersection_map() {
    MapSpec m;
    m.name = "heldout2";
    for (double y : {0.0, 50.0, 100.0}) m.roads.push_back({{-60, y}, {200, y}});
    for (double x : {0.0, 50.0, 100.0, 150.0}) m.roads.push_back({{x, -60}, {x, 160}});
    for (double x : {0.0, 50.0, 100.0, 150.0})
        for (double y : {0.0, 50.0, 100.0}) detail::add_intersection(m, {x, y}, true, true, true, true);
    const double lane = 0.5 * m.lane_width;
    m.route = {{-20, -lane}, {100 + lane, -lane}, {100 + lane, 100 - lane}, {140, 100 - lane}};
    m.finalize();
    return m;
}

/// Builtin map by name: "train", "heldout1" or "heldout2".
inline MapSpec builtin_map(const std::string& name) {
    if (name == "train") return training_map();
    if (name == "heldout1") return heldout_three_way_map();
    if (name == "heldout2") return heldout_multi_intersection_map();
    throw ConfigError("unknown builtin map '" + name + "'");
}

inline bool is_builtin_map(const std::string& name) {
    return name == "train" || name == "heldout1" || name == "heldout2";
}

/// Builtin name, or otherwise a path to a JSON map file.
inline MapSpec builtin_or_file_map(const std::string& name_or_path) {
    return is_builtin_map(name_or_path) ? builtin_map(name_or_path) : load_map(name_or_path);
}

}  // namespace lexmorl
