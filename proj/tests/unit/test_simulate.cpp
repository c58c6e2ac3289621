#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "yawdrive/errors.hpp"
#include "yawdrive/expert.hpp"
#include "yawdrive/simulate.hpp"
#include "yawdrive/suite.hpp"

using namespace yawdrive;

namespace {

class ThrowingDriver : public Driver
{
  public:
    Action act(const DrivingContext&) override { throw ShapeError("broken network"); }
};

class ConstantDriver : public Driver
{
  public:
    explicit ConstantDriver(Action a) : a_(a) {}
    Action act(const DrivingContext&) override { return a_; }

  private:
    Action a_;
};

} // namespace

TEST_CASE("step_vehicle substitutions")
{
    const VehicleParams p;
    const VehicleState rest{{1.0, 2.0, 0.3}, 0.0};
    const VehicleState same = step_vehicle(rest, {}, 0.05, p);
    CHECK(same.pose.x == rest.pose.x);
    CHECK(same.pose.y == rest.pose.y);
    CHECK(same.pose.yaw == rest.pose.yaw);
    CHECK(same.speed == 0.0);

    CHECK(step_vehicle({{0, 0, 0}, 10.0}, {}, 0.05, p).speed == doctest::Approx(9.95));

    // Heading rate: compare one step to ten finer steps at constant speed.
    const VehicleState s0{{0, 0, 0}, 5.0};
    const double one = step_vehicle(s0, {1.0, 0, 0}, 0.05, VehicleParams{2.5, 0.6109, 3, 8, 0}).pose.yaw;
    CHECK(one == doctest::Approx(2.0 * std::tan(0.6109) * 0.05));
    VehicleState fine = s0;
    for (int i = 0; i < 10; ++i) fine = step_vehicle(fine, {1.0, 0, 0}, 0.005, VehicleParams{2.5, 0.6109, 3, 8, 0});
    CHECK(std::abs(fine.pose.yaw - one) < 1e-3);
    CHECK(one == doctest::Approx(0.0700).epsilon(0.01));

    CHECK_THROWS_AS(step_vehicle(s0, {1.5, 0, 0}, 0.05, p), InvalidAction);
    CHECK_THROWS_AS(step_vehicle(s0, {0, -0.1, 0}, 0.05, p), InvalidAction);
    CHECK_THROWS_AS(step_vehicle(s0, {0, 0, 2}, 0.05, p), InvalidAction);
    CHECK_THROWS_AS(step_vehicle(s0, {0, 0, 0}, 0.3, p), InvalidAction);
}

TEST_CASE("braking never speeds up and straight motion keeps heading")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const VehicleState s{{50 * u(rng), 50 * u(rng), 3.0 * u(rng)}, 10.0 * std::abs(u(rng))};
        REQUIRE(step_vehicle(s, {u(rng), 0.0, 1.0}, 0.05).speed <= s.speed);
        const VehicleState n = step_vehicle(s, {0.0, std::abs(u(rng)), 0.0}, 0.05);
        REQUIRE(n.pose.yaw == s.pose.yaw);
        const Vec2 d = n.pose.position() - s.pose.position();
        REQUIRE(std::abs(d.x() * std::sin(s.pose.yaw) - d.y() * std::cos(s.pose.yaw)) < 1e-12);
    }
}

TEST_CASE("check_success is a closed ball")
{
    CHECK(check_success({1, 1, 0}, {1, 1}, 3.0));
    CHECK(check_success({3, 0, 0}, {0, 0}, 3.0));
    CHECK_FALSE(check_success({3.0 + 1e-9, 0, 0}, {0, 0}, 3.0));
}

TEST_CASE("lane violation detection and event counting")
{
    RoadNetwork net;
    LaneSegment s{0, {}, 4.0, {}, SegmentKind::Lane};
    for (int i = 0; i <= 100; ++i) s.centerline.emplace_back(i, 0.0);
    net.segments = {s};
    Route r;
    for (int i = 0; i <= 50; ++i) r.waypoints.emplace_back(2.0 * i, 0.0);

    CHECK_FALSE(detect_lane_violation(net, r, {10, 0, 0}));
    CHECK(detect_lane_violation(net, r, {10, 2.1, 0}));

    // Hand-built trace over 0.5 km that leaves the lane twice.
    std::vector<bool> flags;
    for (int i = 0; i < 500; ++i) {
        const double offset = (i > 100 && i < 120) || (i > 300 && i < 310) ? 2.5 : 0.3;
        flags.push_back(detect_lane_violation(net, r, {std::fmod(i * 0.2, 100.0), offset, 0}));
    }
    const int events = count_violation_events(flags);
    CHECK(events == 2);
    CHECK(violations_per_km(events, 500.0) == doctest::Approx(4.0));
    CHECK(violations_per_km(3, 0.0) == 0.0);
}

TEST_CASE("run_episode outcomes and determinism")
{
    const TaskSuite suite = square_suite();
    const Task& t = suite.tasks.front();
    const Route r = plan_route(suite.net, t.start, t.goal);
    const EpisodeConfig cfg = make_episode_config(r, t.start, t.goal);

    BrakeDriver brake;
    const EpisodeResult stuck = run_episode(suite.net, r, brake, cfg, 1);
    CHECK(stuck.outcome == Outcome::Timeout);
    CHECK(stuck.distance_driven == 0.0);

    ExpertDriver expert;
    const EpisodeResult a = run_episode(suite.net, r, expert, cfg, 4);
    const EpisodeResult b = run_episode(suite.net, r, expert, cfg, 4);
    CHECK(a.outcome == Outcome::Success);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        REQUIRE(a.trace[i].state.pose.x == b.trace[i].state.pose.x);
        REQUIRE(a.trace[i].action.steer == b.trace[i].action.steer);
    }
    for (std::size_t i = 0; i < a.trace.size(); ++i) REQUIRE(a.trace[i].time == doctest::Approx(i * cfg.dt));
    for (std::size_t i = 1; i < a.trace.size(); ++i) REQUIRE(a.trace[i].time > a.trace[i - 1].time);

    // Independent scan of offsets reproduces the event count.
    std::vector<bool> flags;
    for (const auto& s : a.trace) flags.push_back(std::abs(s.offset) > 2.0);
    CHECK(count_violation_events(flags) == a.lane_violation_events);

    ConstantDriver veer({1.0, 0.5, 0.0});
    CHECK(run_episode(suite.net, r, veer, cfg, 1).outcome == Outcome::OffRoad);

    ThrowingDriver bad;
    CHECK_THROWS_AS(run_episode(suite.net, r, bad, cfg, 1), EpisodeError);
}

TEST_CASE("collision with an obstacle on the route")
{
    TaskSuite suite = square_suite();
    const Task& t = suite.tasks.front();
    const Route r = plan_route(suite.net, t.start, t.goal);
    suite.net.obstacles.push_back({r.waypoints[6], 1.0});
    ExpertDriver expert;
    CHECK(run_episode(suite.net, r, expert, make_episode_config(r, t.start, t.goal), 1).outcome == Outcome::Collision);
}

TEST_CASE("trace CSV export")
{
    const TaskSuite suite = square_suite();
    const Task& t = suite.tasks[3];
    const Route r = plan_route(suite.net, t.start, t.goal);
    ExpertDriver expert;
    const EpisodeResult res = run_episode(suite.net, r, expert, make_episode_config(r, t.start, t.goal), 1);
    const auto path = std::filesystem::temp_directory_path() / "yawdrive_trace_test.csv";
    write_trace_csv(res, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,x,y,yaw,v,steer,throttle,brake,offset");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == res.trace.size());
    std::filesystem::remove(path);
}
