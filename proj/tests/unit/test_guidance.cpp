#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "yawdrive/errors.hpp"
#include "yawdrive/guidance.hpp"
#include "yawdrive/suite.hpp"

using namespace yawdrive;

namespace {

constexpr double kPi = std::numbers::pi;

Route straight_route(int n, double spacing = 2.0, double yaw = 0.0)
{
    Route r;
    r.spacing = spacing;
    for (int i = 0; i < n; ++i) r.waypoints.emplace_back(i * spacing * std::cos(yaw), i * spacing * std::sin(yaw));
    return r;
}

// Points along a left quarter circle of radius 12 starting at the origin heading +x.
Route quarter_circle(double spacing)
{
    Route r;
    r.spacing = spacing;
    const double radius = 12.0;
    const int n = static_cast<int>(std::floor(radius * kPi / 2 / spacing));
    for (int i = 0; i <= n; ++i) {
        const double a = i * spacing / radius;
        r.waypoints.emplace_back(radius * std::sin(a), radius * (1 - std::cos(a)));
    }
    r.waypoints.emplace_back(radius, radius);
    return r;
}

} // namespace

TEST_CASE("plan_route on one straight segment")
{
    RoadNetwork net;
    LaneSegment s{0, {}, 4.0, {}, SegmentKind::Lane};
    for (int i = 0; i <= 40; ++i) s.centerline.emplace_back(i, 0.0);
    net.segments = {s};
    const Route r = plan_route(net, {1.0, 0.0, 0.0}, {31.0, 0.0});
    REQUIRE(r.waypoints.size() >= 2);
    for (std::size_t i = 1; i < r.waypoints.size(); ++i) {
        CHECK((r.waypoints[i] - r.waypoints[i - 1]).norm() == doctest::Approx(2.0).epsilon(0.1));
        CHECK(r.waypoints[i].y() == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS(plan_route(net, {1.0, 0.0, 0.0}, {2.0, 0.0}), InvalidRoute);
}

TEST_CASE("plan_route to a disconnected component")
{
    RoadNetwork net;
    LaneSegment a{0, {{0, 0}, {20, 0}}, 4.0, {}, SegmentKind::Lane};
    LaneSegment b{1, {{0, 100}, {20, 100}}, 4.0, {}, SegmentKind::Lane};
    net.segments = {a, b};
    CHECK_THROWS_AS(plan_route(net, {1, 0, 0}, {10, 100}), NoPath);
}

TEST_CASE("every square task route passes its designated node")
{
    const TaskSuite suite = square_suite();
    for (const Task& t : suite.tasks) {
        const Route r = plan_route(suite.net, t.start, t.goal);
        double closest = 1e9;
        for (const Vec2& w : r.waypoints) closest = std::min(closest, (w - t.node).norm());
        CHECK(closest < 8.0);
        for (std::size_t i = 1; i < r.waypoints.size(); ++i)
            REQUIRE((r.waypoints[i] - r.waypoints[i - 1]).norm() == doctest::Approx(2.0).epsilon(0.1));
    }
}

TEST_CASE("yaw_of_segment")
{
    CHECK(yaw_of_segment({0, 0}, {1, 0}) == 0.0);
    CHECK(yaw_of_segment({0, 0}, {0, 2}) == doctest::Approx(kPi / 2));
    CHECK(yaw_of_segment({1, 1}, {0, 0}) == doctest::Approx(-3 * kPi / 4));
    CHECK_THROWS_AS(yaw_of_segment({1, 1}, {1, 1}), DegenerateSegment);
}

TEST_CASE("trajectory_yaws")
{
    const auto flat = trajectory_yaws(straight_route(20), {0.5, 0.0, 0.0}, 5);
    CHECK(flat == std::vector<double>(5, 0.0));

    // Anchor at the third-from-last waypoint leaves two segments.
    Route end = straight_route(10);
    end.waypoints.back() = end.waypoints[8] + Vec2(0.0, 2.0);
    const auto padded = trajectory_yaws(end, {14.0, 0.0, 0.0}, 5);
    CHECK(padded[0] == 0.0);
    CHECK(padded[1] == doctest::Approx(kPi / 2));
    CHECK(padded[2] == padded[1]);
    CHECK(padded[4] == padded[1]);

    // Oracle: arctangents of the discretized arc computed directly.
    const Route arc = quarter_circle(2.0);
    const auto yaws = trajectory_yaws(arc, {0.0, 0.0, 0.0}, static_cast<int>(arc.waypoints.size()) - 1);
    for (std::size_t i = 0; i < yaws.size(); ++i) {
        const Vec2 d = arc.waypoints[i + 1] - arc.waypoints[i];
        CHECK(yaws[i] == doctest::Approx(std::atan2(d.y(), d.x())));
        if (i > 0) CHECK(yaws[i] > yaws[i - 1]);
    }
    CHECK(yaws.back() == doctest::Approx(kPi / 2).epsilon(0.1));

    CHECK_THROWS_AS(trajectory_yaws(Route{}, {}, 5), InvalidRoute);
}

TEST_CASE("yaw_guidance")
{
    CHECK(yaw_guidance(std::vector<double>(5, 0.1)).values == std::vector<double>(5, 0.0));
    const std::vector<double> rising{0, kPi / 4, kPi / 2, kPi / 2, kPi / 2};
    CHECK(yaw_guidance(rising).values == rising);
    const auto wrapped = yaw_guidance(std::vector<double>{3.0, -3.0, -3.0, -3.0, -3.0}).values;
    CHECK(wrapped[0] == 0.0);
    for (int i = 1; i < 5; ++i) CHECK(wrapped[i] == doctest::Approx(2 * kPi - 6.0));
}

TEST_CASE("xy_guidance is absolute")
{
    Route r;
    for (int i = 0; i < 10; ++i) r.waypoints.emplace_back(10.0 + 2.0 * i, 0.0);
    const XYVector v = xy_guidance(r, {9.0, 0.0, 0.0}, 5, 0.01);
    for (int i = 0; i < 5; ++i) {
        CHECK(v.values[i].x() == doctest::Approx(0.10 + 0.02 * i));
        CHECK(v.values[i].y() == 0.0);
    }
    const SE2Transform shift{0.0, {50.0, 0.0}};
    const Route moved = transform_route(r, shift);
    const XYVector w = xy_guidance(moved, shift.apply(Pose2D{9.0, 0.0, 0.0}), 5, 0.01);
    for (int i = 0; i < 5; ++i) CHECK(w.values[i].x() - v.values[i].x() == doctest::Approx(0.5));
    const auto y0 = yaw_guidance(trajectory_yaws(r, {9.0, 0.0, 0.0}, 5)).values;
    const auto y1 = yaw_guidance(trajectory_yaws(moved, shift.apply(Pose2D{9.0, 0.0, 0.0}), 5)).values;
    CHECK(y0 == y1);
}

TEST_CASE("yaw guidance mirror antisymmetry")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> bend(-0.4, 0.4);
    for (int trial = 0; trial < 100; ++trial) {
        Route r, m;
        Vec2 p(0, 0);
        double yaw = 0.0;
        for (int i = 0; i < 12; ++i) {
            r.waypoints.push_back(p);
            m.waypoints.emplace_back(p.x(), -p.y());
            yaw += bend(rng);
            p += 2.0 * Vec2(std::cos(yaw), std::sin(yaw));
        }
        const auto a = yaw_guidance(trajectory_yaws(r, {0, 0, 0}, 5)).values;
        const auto b = yaw_guidance(trajectory_yaws(m, {0, 0, 0}, 5)).values;
        for (int i = 0; i < 5; ++i) REQUIRE(std::abs(a[i] + b[i]) < 1e-9);
    }
}

TEST_CASE("command_label")
{
    const TaskSuite suite = square_suite();
    for (const Task& t : suite.tasks) {
        const Route r = plan_route(suite.net, t.start, t.goal);
        // Just before the node the command must name the task's turn when the
        // node is a junction, and lane following at corners.
        const Vec2 u = (t.node - t.start.position()).normalized();
        const Vec2 probe = t.start.position() + 16.0 * u;
        const Pose2D pose{probe.x(), probe.y(), t.start.yaw};
        const Command c = command_label(suite.net, r, pose, 15.0);
        if (t.category == TaskCategory::RoadOption)
            CHECK(c == (t.turn == TurnKind::Left ? Command::Left : Command::Right));
        else
            CHECK(c == Command::LaneFollow);
        CHECK(command_label(suite.net, r, t.start, 15.0) == Command::LaneFollow);
    }

    // Straight-through at the four-way.
    for (const Task& t : square_straight_tasks()) {
        const Route r = plan_route(suite.net, t.start, t.goal);
        const Vec2 u = (t.node - t.start.position()).normalized();
        const Vec2 probe = t.start.position() + 16.0 * u;
        CHECK(command_label(suite.net, r, {probe.x(), probe.y(), t.start.yaw}, 15.0) == Command::Straight);
    }
}

TEST_CASE("command_label thresholds on a synthetic junction")
{
    RoadNetwork net;
    net.junctions.push_back({{20.0, 0.0}, {}, 8.0});
    auto route_with_exit = [](double turn) {
        Route r;
        for (int i = 0; i <= 10; ++i) r.waypoints.emplace_back(2.0 * i, 0.0);
        Vec2 p = r.waypoints.back();
        for (int i = 1; i <= 10; ++i) r.waypoints.push_back(p += 2.0 * Vec2(std::cos(turn), std::sin(turn)));
        return r;
    };
    CHECK(command_label(net, route_with_exit(kPi / 2), {10.0, 0.0, 0.0}, 15.0) == Command::Left);
    CHECK(command_label(net, route_with_exit(-kPi / 2), {10.0, 0.0, 0.0}, 15.0) == Command::Right);
    CHECK(command_label(net, route_with_exit(-0.1), {10.0, 0.0, 0.0}, 15.0) == Command::Straight);

    // Junction 100 m away is outside a 20 m horizon.
    RoadNetwork far;
    far.junctions.push_back({{100.0, 0.0}, {}, 8.0});
    CHECK(command_label(far, straight_route(60), {0.0, 0.0, 0.0}, 20.0) == Command::LaneFollow);
}

TEST_CASE("command_label is invariant under joint SE(2) transforms")
{
    const TaskSuite suite = square_suite();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ang(-kPi, kPi), pos(-100, 100);
    for (const Task& t : suite.tasks) {
        const SE2Transform tf{ang(rng), {pos(rng), pos(rng)}};
        const Route r = plan_route(suite.net, t.start, t.goal);
        const RoadNetwork net2 = transform_network(suite.net, tf);
        const Route r2 = transform_route(r, tf);
        for (std::size_t k = 0; k < r.waypoints.size(); k += 3) {
            const Vec2 p = r.waypoints[k];
            const Vec2 d = r.waypoints[std::min(k + 1, r.waypoints.size() - 1)] - r.waypoints[k > 0 ? k - 1 : 0];
            const Pose2D pose{p.x(), p.y(), std::atan2(d.y(), d.x())};
            REQUIRE(command_label(suite.net, r, pose, 15.0) == command_label(net2, r2, tf.apply(pose), 15.0));
        }
    }
}
