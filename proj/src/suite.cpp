#include "yawdrive/suite.hpp"

#include <cmath>
#include <random>

#include "yawdrive/errors.hpp"

namespace yawdrive {

namespace {

constexpr double kApproach = 26.0; // start distance before the node
constexpr double kDepart = 20.0;   // goal distance after the node

Vec2 right_of(const Vec2& u) { return {u.y(), -u.x()}; }

int junction_at(const RoadNetwork& net, const Vec2& node)
{
    for (std::size_t j = 0; j < net.junctions.size(); ++j)
        if ((net.junctions[j].center - node).norm() < 1e-6) return static_cast<int>(j);
    return -1;
}

std::vector<Task> square_tasks(const RoadNetwork& net, const SceneGeometry& g, bool turning)
{
    const double b = g.block;
    const double half = 0.5 * g.lane_width;
    std::vector<Vec2> nodes;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) nodes.emplace_back(c * b, r * b);
    auto neighbors = [&](int v) {
        std::vector<int> out;
        const int r = v / 3, c = v % 3;
        if (r > 0) out.push_back(v - 3);
        if (c > 0) out.push_back(v - 1);
        if (c < 2) out.push_back(v + 1);
        if (r < 2) out.push_back(v + 3);
        return out;
    };

    std::vector<Task> tasks;
    for (int v = 0; v < 9; ++v) {
        const auto nb = neighbors(v);
        for (int p : nb)
            for (int q : nb) {
                if (p == q) continue;
                const Vec2 u_in = (nodes[v] - nodes[p]).normalized();
                const Vec2 u_out = (nodes[q] - nodes[v]).normalized();
                const double cross = u_in.x() * u_out.y() - u_in.y() * u_out.x();
                const TurnKind turn = cross > 0.5 ? TurnKind::Left : (cross < -0.5 ? TurnKind::Right : TurnKind::Straight);
                if ((turn == TurnKind::Straight) == turning) continue;
                Task t;
                const Vec2 start = nodes[v] - kApproach * u_in + half * right_of(u_in);
                t.start = {start.x(), start.y(), std::atan2(u_in.y(), u_in.x())};
                t.goal = nodes[v] + kDepart * u_out + half * right_of(u_out);
                t.node = nodes[v];
                t.junction = junction_at(net, nodes[v]);
                t.turn = turn;
                t.category = nb.size() >= 3 ? TaskCategory::RoadOption : TaskCategory::LaneKeep;
                tasks.push_back(t);
            }
    }
    return tasks;
}

} // namespace

std::string_view to_string(TurnKind t)
{
    switch (t) {
    case TurnKind::Left: return "left";
    case TurnKind::Right: return "right";
    case TurnKind::Straight: return "straight";
    case TurnKind::None: return "none";
    }
    return "?";
}

TaskSuite square_suite(const SceneGeometry& geometry)
{
    TaskSuite suite;
    suite.name = "square32";
    suite.net = build_square_scene(geometry);
    suite.tasks = square_tasks(suite.net, geometry, true);
    return suite;
}

std::vector<Task> square_straight_tasks(const SceneGeometry& geometry)
{
    return square_tasks(build_square_scene(geometry), geometry, false);
}

std::vector<Task> square_collection_tasks(const SceneGeometry& geometry)
{
    const RoadNetwork net = build_square_scene(geometry);
    auto tasks = square_tasks(net, geometry, true);
    auto straight = square_tasks(net, geometry, false);
    tasks.insert(tasks.end(), straight.begin(), straight.end());
    return tasks;
}

std::vector<Task> random_tasks(const RoadNetwork& net, std::uint64_t seed, int count, double min_length)
{
    std::vector<int> lanes;
    for (const auto& s : net.segments)
        if (s.kind == SegmentKind::Lane && s.length() > 10.0) lanes.push_back(s.id);
    if (lanes.empty()) return {};

    std::mt19937_64 rng(seed ^ 0x5eedULL);
    auto midpoint = [&](int id, Pose2D& pose) {
        const auto& line = net.segment(id).centerline;
        const std::size_t m = line.size() / 2;
        const Vec2 d = line[m] - line[m - 1];
        pose = {line[m].x(), line[m].y(), std::atan2(d.y(), d.x())};
    };
    std::vector<Task> tasks;
    for (int attempts = 0; static_cast<int>(tasks.size()) < count && attempts < 100000; ++attempts) {
        Task t;
        Pose2D goal_pose;
        midpoint(lanes[rng() % lanes.size()], t.start);
        midpoint(lanes[rng() % lanes.size()], goal_pose);
        t.goal = goal_pose.position();
        try {
            const Route r = plan_route(net, t.start, t.goal);
            if (r.length() < min_length) continue;
        } catch (const Error&) {
            continue;
        }
        tasks.push_back(t);
    }
    return tasks;
}

TaskSuite town_suite(std::uint64_t seed, int rows, int cols, int count, double min_length)
{
    TaskSuite suite;
    suite.name = "town:" + std::to_string(seed);
    suite.net = build_grid_town(seed, rows, cols);
    suite.tasks = random_tasks(suite.net, seed, count, min_length);
    return suite;
}

} // namespace yawdrive
