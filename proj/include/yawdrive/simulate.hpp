#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "yawdrive/guidance.hpp"
#include "yawdrive/world.hpp"

namespace yawdrive {

struct VehicleState
{
    Pose2D pose;
    double speed = 0.0;
};

/// steer in [-1, 1], throttle and brake in [0, 1].
struct Action
{
    double steer = 0.0;
    double throttle = 0.0;
    double brake = 0.0;
};

/// Throws InvalidAction when a component is non-finite or out of range.
void validate_action(const Action& a);

struct VehicleParams
{
    double wheelbase = 2.5;
    double max_steer = 0.6109; // 35 degrees
    double max_accel = 3.0;
    double max_brake = 8.0;
    double drag = 0.1;
};

/// Kinematic bicycle, explicit Euler.
VehicleState step_vehicle(const VehicleState& state, const Action& action, double dt, const VehicleParams& params = {});

struct EpisodeConfig
{
    Pose2D start;
    Vec2 goal = Vec2::Zero();
    double goal_tolerance = 3.0;
    double time_limit = 60.0;
    double dt = 0.05;
    // Seeded perturbation of the start pose.
    double start_lateral_jitter = 0.25;
    double start_yaw_jitter = 0.05;
    double ego_radius = 1.0;
    VehicleParams vehicle{};
};

/// Default configuration: time limit = 4 * (route length / 5 m/s).
EpisodeConfig make_episode_config(const Route& route, const Pose2D& start, const Vec2& goal);

enum class Outcome : std::uint8_t
{
    Success,
    Timeout,
    OffRoad,
    Collision
};

std::string_view to_string(Outcome o);

struct TraceStep
{
    double time = 0.0;
    VehicleState state;
    Action action;
    double offset = 0.0; // signed lateral offset from the route
};

struct EpisodeResult
{
    Outcome outcome = Outcome::Timeout;
    std::vector<TraceStep> trace;
    int lane_violation_events = 0;
    double distance_driven = 0.0;
};

/// Everything a driver may look at on one step.
struct DrivingContext
{
    const RoadNetwork& net;
    const Route& route;
    const VehicleState& state;
    double time = 0.0;
};

/// Closed-loop controller. reset() is called once per episode with its seed.
class Driver
{
  public:
    virtual ~Driver() = default;
    virtual void reset(std::uint64_t /*seed*/) {}
    virtual Action act(const DrivingContext& ctx) = 0;
};

using DriverFactory = std::function<std::unique_ptr<Driver>()>;

bool check_success(const Pose2D& pose, const Vec2& goal, double tol);

/// Lateral offset is measured from the route polyline; the threshold is half
/// the width of the nearest lane.
bool detect_lane_violation(const RoadNetwork& net, const Route& route, const Pose2D& pose);

/// Number of false -> true transitions in a sequence of violation flags.
int count_violation_events(const std::vector<bool>& flags);

EpisodeResult run_episode(const RoadNetwork& net, const Route& route, Driver& driver, const EpisodeConfig& cfg,
                          std::uint64_t seed);

/// Writes `t,x,y,yaw,v,steer,throttle,brake,offset`, one row per step.
void write_trace_csv(const EpisodeResult& result, const std::filesystem::path& path);

/// Events per kilometer; zero when nothing was driven.
double violations_per_km(int events, double distance_m);

/// Always full brake, never moves.
class BrakeDriver : public Driver
{
  public:
    Action act(const DrivingContext&) override { return {0.0, 0.0, 1.0}; }
};

} // namespace yawdrive
