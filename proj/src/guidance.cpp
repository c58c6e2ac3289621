#include "yawdrive/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "yawdrive/errors.hpp"

namespace yawdrive {

namespace {

constexpr double kMaxSnap = 10.0;

// Points of `line` between arc lengths s0 <= s1.
std::vector<Vec2> slice_polyline(std::span<const Vec2> line, double s0, double s1)
{
    std::vector<Vec2> out;
    double acc = 0.0;
    auto point_at = [&](std::size_t i, double s) {
        const Vec2 d = line[i + 1] - line[i];
        const double len = d.norm();
        return line[i] + d * std::clamp((s - acc) / len, 0.0, 1.0);
    };
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double len = (line[i + 1] - line[i]).norm();
        const double next = acc + len;
        if (next >= s0 && acc <= s1) {
            if (out.empty()) out.push_back(point_at(i, s0));
            if (next <= s1)
                out.push_back(line[i + 1]);
            else
                out.push_back(point_at(i, s1));
        }
        acc = next;
        if (acc > s1) break;
    }
    return out;
}

void append_dedup(std::vector<Vec2>& out, std::span<const Vec2> pts)
{
    for (const auto& p : pts)
        if (out.empty() || (out.back() - p).norm() > 1e-9) out.push_back(p);
}

std::vector<Vec2> resample(std::span<const Vec2> line, double spacing)
{
    std::vector<Vec2> out;
    const double total = polyline_length(line);
    const auto n = static_cast<std::size_t>(std::floor(total / spacing + 1e-9));
    out.reserve(n + 1);
    std::size_t edge = 0;
    double acc = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double s = static_cast<double>(k) * spacing;
        while (edge + 2 < line.size() && acc + (line[edge + 1] - line[edge]).norm() < s) {
            acc += (line[edge + 1] - line[edge]).norm();
            ++edge;
        }
        const Vec2 d = line[edge + 1] - line[edge];
        const double len = d.norm();
        out.push_back(line[edge] + d * std::clamp((s - acc) / len, 0.0, 1.0));
    }
    return out;
}

struct Snap
{
    int segment = -1;
    double arc = 0.0;
    double distance = std::numeric_limits<double>::infinity();
};

Snap snap_start(const RoadNetwork& net, const Pose2D& start)
{
    Snap best, fallback;
    const Vec2 p = start.position();
    for (const auto& s : net.segments) {
        const auto proj = project_onto_polyline(s.centerline, p);
        if (proj.distance > kMaxSnap) continue;
        if (proj.distance < fallback.distance) fallback = {s.id, proj.arc, proj.distance};
        const Vec2 tangent = s.centerline[proj.edge + 1] - s.centerline[proj.edge];
        if (tangent.dot(start.heading()) > 0.0 && proj.distance < best.distance) best = {s.id, proj.arc, proj.distance};
    }
    return best.segment >= 0 ? best : fallback;
}

} // namespace

Route transform_route(const Route& route, const SE2Transform& t)
{
    Route out = route;
    for (auto& w : out.waypoints) w = t.apply(w);
    return out;
}

std::string_view to_string(Command c)
{
    switch (c) {
    case Command::Left: return "left";
    case Command::Right: return "right";
    case Command::Straight: return "straight";
    case Command::LaneFollow: return "lane_follow";
    }
    return "?";
}

Route plan_route(const RoadNetwork& net, const Pose2D& start, const Vec2& goal, double spacing)
{
    if (!(spacing > 0.0)) throw InvalidRoute("spacing must be positive");
    if ((goal - start.position()).norm() < spacing) throw InvalidRoute("start and goal coincide");

    const Snap from = snap_start(net, start);
    if (from.segment < 0) throw NoPath("start is not near any lane");
    const Location to = locate(net, goal);
    if (to.segment < 0 || std::abs(to.offset) > kMaxSnap) throw NoPath("goal is not near any lane");

    const std::size_t n = net.segments.size();
    std::vector<Vec2> path;
    const auto& first = net.segment(from.segment);
    if (to.segment == from.segment && to.arc > from.arc) {
        path = slice_polyline(first.centerline, from.arc, to.arc);
    } else {
        // Dijkstra over segment entry costs.
        std::vector<double> cost(n, std::numeric_limits<double>::infinity());
        std::vector<int> parent(n, -1);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
        const double head = first.length() - from.arc;
        for (int succ : first.successors)
            if (head < cost[succ]) {
                cost[succ] = head;
                parent[succ] = from.segment;
                queue.emplace(head, succ);
            }
        while (!queue.empty()) {
            const auto [c, v] = queue.top();
            queue.pop();
            if (c > cost[v]) continue;
            if (v == to.segment) break;
            const double next = c + net.segments[v].length();
            for (int succ : net.segments[v].successors)
                if (next < cost[succ]) {
                    cost[succ] = next;
                    parent[succ] = v;
                    queue.emplace(next, succ);
                }
        }
        if (!std::isfinite(cost[to.segment])) throw NoPath("goal unreachable from start");

        std::vector<int> chain;
        for (int v = to.segment; v != from.segment || chain.empty(); v = parent[v]) {
            chain.push_back(v);
            if (parent[v] == from.segment) break;
        }
        std::reverse(chain.begin(), chain.end());

        append_dedup(path, slice_polyline(first.centerline, from.arc, first.length()));
        for (std::size_t i = 0; i + 1 < chain.size(); ++i) append_dedup(path, net.segment(chain[i]).centerline);
        append_dedup(path, slice_polyline(net.segment(to.segment).centerline, 0.0, to.arc));
    }
    if (path.size() < 2) throw InvalidRoute("route collapsed to a point");

    Route route;
    route.spacing = spacing;
    route.waypoints = resample(path, spacing);
    if (route.waypoints.size() < 2) throw InvalidRoute("route shorter than one spacing");
    return route;
}

double yaw_of_segment(const Vec2& a, const Vec2& b)
{
    if (a == b) throw DegenerateSegment("segment endpoints coincide");
    const double yaw = std::atan2(b.y() - a.y(), b.x() - a.x());
    return wrap_angle(yaw);
}

std::size_t route_anchor(const Route& route, const Pose2D& pose)
{
    if (route.waypoints.empty()) throw InvalidRoute("empty route");
    const Vec2 p = pose.position();
    const Vec2 h = pose.heading();
    std::size_t ahead = route.waypoints.size(), nearest = 0;
    double best_ahead = std::numeric_limits<double>::infinity();
    double best_any = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < route.waypoints.size(); ++i) {
        const Vec2 d = route.waypoints[i] - p;
        const double dist = d.squaredNorm();
        if (dist < best_any) {
            best_any = dist;
            nearest = i;
        }
        if (d.dot(h) >= 0.0 && dist < best_ahead) {
            best_ahead = dist;
            ahead = i;
        }
    }
    return ahead < route.waypoints.size() ? ahead : nearest;
}

std::vector<double> trajectory_yaws(const Route& route, const Pose2D& pose, int k)
{
    const auto& wp = route.waypoints;
    if (wp.size() < 2) throw InvalidRoute("route needs at least two waypoints");
    const std::size_t anchor = route_anchor(route, pose);
    std::vector<double> yaws;
    yaws.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const std::size_t a = anchor + static_cast<std::size_t>(i);
        if (a + 1 < wp.size())
            yaws.push_back(yaw_of_segment(wp[a], wp[a + 1]));
        else
            yaws.push_back(yaws.empty() ? yaw_of_segment(wp[wp.size() - 2], wp.back()) : yaws.back());
    }
    return yaws;
}

YawVector yaw_guidance(std::span<const double> t_yaw)
{
    YawVector out;
    out.values.reserve(t_yaw.size());
    for (double y : t_yaw) out.values.push_back(wrap_angle(y - t_yaw.front()));
    if (!out.values.empty()) out.values.front() = 0.0;
    return out;
}

XYVector xy_guidance(const Route& route, const Pose2D& pose, int k, double scale)
{
    const auto& wp = route.waypoints;
    if (wp.size() < 2) throw InvalidRoute("route needs at least two waypoints");
    const std::size_t anchor = route_anchor(route, pose);
    XYVector out;
    for (int i = 0; i < k; ++i) {
        const std::size_t a = std::min(anchor + static_cast<std::size_t>(i), wp.size() - 1);
        out.values.push_back(wp[a] * scale);
    }
    return out;
}

JunctionApproach upcoming_junction(const RoadNetwork& net, const Route& route, std::size_t anchor, double horizon)
{
    const auto& wp = route.waypoints;
    JunctionApproach best;
    std::size_t best_center = std::numeric_limits<std::size_t>::max();
    for (std::size_t j = 0; j < net.junctions.size(); ++j) {
        const auto& junction = net.junctions[j];
        std::size_t i = 0;
        while (i < wp.size()) {
            if ((wp[i] - junction.center).norm() > junction.radius) {
                ++i;
                continue;
            }
            const std::size_t entry = i;
            std::size_t center = i;
            double closest = std::numeric_limits<double>::infinity();
            while (i < wp.size() && (wp[i] - junction.center).norm() <= junction.radius) {
                const double d = (wp[i] - junction.center).norm();
                if (d < closest) {
                    closest = d;
                    center = i;
                }
                ++i;
            }
            const std::size_t exit = i - 1;
            const bool not_passed = exit >= anchor;
            const bool in_reach = center <= anchor || static_cast<double>(center - anchor) * route.spacing <= horizon;
            if (not_passed && in_reach && center < best_center) {
                best_center = center;
                best.junction = static_cast<int>(j);
                best.entry = entry;
                best.exit = exit;
            }
        }
    }
    if (best.junction < 0) return best;
    const std::size_t n = wp.size();
    const double yaw_in = best.entry > 0 ? yaw_of_segment(wp[best.entry - 1], wp[best.entry]) : yaw_of_segment(wp[0], wp[1]);
    const double yaw_out =
        best.exit + 1 < n ? yaw_of_segment(wp[best.exit], wp[best.exit + 1]) : yaw_of_segment(wp[n - 2], wp[n - 1]);
    best.turn = wrap_angle(yaw_out - yaw_in);
    return best;
}

Command command_label(const RoadNetwork& net, const Route& route, const Pose2D& pose, double horizon,
                      double turn_threshold)
{
    if (route.waypoints.size() < 2) return Command::LaneFollow;
    const auto approach = upcoming_junction(net, route, route_anchor(route, pose), horizon);
    if (approach.junction < 0) return Command::LaneFollow;
    if (approach.turn > turn_threshold) return Command::Left;
    if (approach.turn < -turn_threshold) return Command::Right;
    return Command::Straight;
}

} // namespace yawdrive
