#include "yawdrive/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "yawdrive/errors.hpp"

namespace yawdrive {

void validate_action(const Action& a)
{
    auto bad = [](double v, double lo, double hi) { return !std::isfinite(v) || v < lo || v > hi; };
    if (bad(a.steer, -1.0, 1.0)) throw InvalidAction("steer outside [-1, 1]");
    if (bad(a.throttle, 0.0, 1.0)) throw InvalidAction("throttle outside [0, 1]");
    if (bad(a.brake, 0.0, 1.0)) throw InvalidAction("brake outside [0, 1]");
}

VehicleState step_vehicle(const VehicleState& state, const Action& action, double dt, const VehicleParams& params)
{
    validate_action(action);
    if (!(dt > 0.0 && dt <= 0.2)) throw InvalidAction("dt must lie in (0, 0.2]");
    const double delta = action.steer * params.max_steer;
    const double v = state.speed;
    const double accel = params.max_accel * action.throttle - params.max_brake * action.brake - params.drag * v;
    VehicleState next;
    next.pose.x = state.pose.x + v * std::cos(state.pose.yaw) * dt;
    next.pose.y = state.pose.y + v * std::sin(state.pose.yaw) * dt;
    next.pose.yaw = wrap_angle(state.pose.yaw + v / params.wheelbase * std::tan(delta) * dt);
    next.speed = std::max(0.0, v + accel * dt);
    return next;
}

EpisodeConfig make_episode_config(const Route& route, const Pose2D& start, const Vec2& goal)
{
    EpisodeConfig cfg;
    cfg.start = start;
    cfg.goal = goal;
    cfg.time_limit = 4.0 * (route.length() / 5.0);
    return cfg;
}

std::string_view to_string(Outcome o)
{
    switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Timeout: return "timeout";
    case Outcome::OffRoad: return "offroad";
    case Outcome::Collision: return "collision";
    }
    return "?";
}

bool check_success(const Pose2D& pose, const Vec2& goal, double tol)
{
    return (pose.position() - goal).norm() <= tol;
}

namespace {

double nearest_lane_half_width(const RoadNetwork& net, const Vec2& p)
{
    const Location loc = locate(net, p);
    return loc.segment >= 0 ? 0.5 * net.segment(loc.segment).width : 2.0;
}

} // namespace

bool detect_lane_violation(const RoadNetwork& net, const Route& route, const Pose2D& pose)
{
    const auto proj = project_onto_polyline(route.waypoints, pose.position());
    return proj.distance > nearest_lane_half_width(net, pose.position());
}

int count_violation_events(const std::vector<bool>& flags)
{
    int events = 0;
    bool prev = false;
    for (bool f : flags) {
        if (f && !prev) ++events;
        prev = f;
    }
    return events;
}

double violations_per_km(int events, double distance_m)
{
    return distance_m > 0.0 ? events / (distance_m / 1000.0) : 0.0;
}

EpisodeResult run_episode(const RoadNetwork& net, const Route& route, Driver& driver, const EpisodeConfig& cfg,
                          std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    VehicleState state;
    {
        const Vec2 left(-std::sin(cfg.start.yaw), std::cos(cfg.start.yaw));
        const Vec2 p = cfg.start.position() + cfg.start_lateral_jitter * unit(rng) * left;
        state.pose = {p.x(), p.y(), wrap_angle(cfg.start.yaw + cfg.start_yaw_jitter * unit(rng))};
        state.speed = 0.0;
    }
    driver.reset(rng());

    EpisodeResult result;
    const double half_width = nearest_lane_half_width(net, state.pose.position());
    bool violating = false;
    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        const auto proj = project_onto_polyline(route.waypoints, state.pose.position());
        const bool now_violating = proj.distance > half_width;
        if (now_violating && !violating) ++result.lane_violation_events;
        violating = now_violating;

        bool terminal = true;
        if (check_success(state.pose, cfg.goal, cfg.goal_tolerance))
            result.outcome = Outcome::Success;
        else if (proj.distance > 2.0 * half_width)
            result.outcome = Outcome::OffRoad;
        else if (std::any_of(net.obstacles.begin(), net.obstacles.end(), [&](const Obstacle& o) {
                     return (o.center - state.pose.position()).norm() < o.radius + cfg.ego_radius;
                 }))
            result.outcome = Outcome::Collision;
        else if (t > cfg.time_limit)
            result.outcome = Outcome::Timeout;
        else
            terminal = false;

        if (terminal) {
            result.trace.push_back({t, state, Action{}, proj.offset});
            break;
        }

        Action action;
        try {
            action = driver.act(DrivingContext{net, route, state, t});
            validate_action(action);
        } catch (const Error& e) {
            throw EpisodeError(e.what());
        }
        result.trace.push_back({t, state, action, proj.offset});
        const VehicleState next = step_vehicle(state, action, cfg.dt, cfg.vehicle);
        result.distance_driven += (next.pose.position() - state.pose.position()).norm();
        state = next;
    }
    return result;
}

void write_trace_csv(const EpisodeResult& result, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw EpisodeError("cannot write trace " + path.string());
    out.precision(10);
    out << "t,x,y,yaw,v,steer,throttle,brake,offset\n";
    for (const auto& s : result.trace)
        out << s.time << ',' << s.state.pose.x << ',' << s.state.pose.y << ',' << s.state.pose.yaw << ','
            << s.state.speed << ',' << s.action.steer << ',' << s.action.throttle << ',' << s.action.brake << ','
            << s.offset << '\n';
}

} // namespace yawdrive
