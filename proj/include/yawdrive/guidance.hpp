#pragma once

#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "yawdrive/world.hpp"

namespace yawdrive {

/// Planned path resampled at a fixed arc-length spacing.
struct Route
{
    std::vector<Vec2> waypoints;
    double spacing = 2.0;

    double length() const { return polyline_length(waypoints); }
};

Route transform_route(const Route& route, const SE2Transform& t);

enum class Command : std::uint8_t
{
    Left = 0,
    Right = 1,
    Straight = 2,
    LaneFollow = 3
};

inline constexpr int kCommandCount = 4;

std::string_view to_string(Command c);

/// Relative trajectory yaws; values[0] == 0.
struct YawVector
{
    std::vector<double> values;
};

/// Absolute upcoming waypoints multiplied by a fixed scale.
struct XYVector
{
    std::vector<Vec2> values;
};

struct GuidanceConfig
{
    int samples = 5;                         // K
    double spacing = 2.0;                    // route resampling, meters
    double xy_scale = 0.01;                  // 1/m
    double command_horizon = 15.0;           // meters
    double turn_threshold = std::numbers::pi / 6.0;

    friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

/// Shortest route by centerline arc length, resampled at `spacing`.
Route plan_route(const RoadNetwork& net, const Pose2D& start, const Vec2& goal, double spacing = 2.0);

/// Heading of the segment a -> b in (-pi, pi].
double yaw_of_segment(const Vec2& a, const Vec2& b);

/// Nearest waypoint not behind the vehicle (falls back to the nearest one).
std::size_t route_anchor(const Route& route, const Pose2D& pose);

std::vector<double> trajectory_yaws(const Route& route, const Pose2D& pose, int k);

YawVector yaw_guidance(std::span<const double> t_yaw);

XYVector xy_guidance(const Route& route, const Pose2D& pose, int k, double scale);

Command command_label(const RoadNetwork& net, const Route& route, const Pose2D& pose, double horizon,
                      double turn_threshold = std::numbers::pi / 6.0);

/// Index of the junction the command refers to, or -1 for lane following.
struct JunctionApproach
{
    int junction = -1;
    std::size_t entry = 0; // first route index inside the junction disc
    std::size_t exit = 0;  // last route index inside the junction disc
    double turn = 0.0;     // wrap(yaw_exit - yaw_entry)
};

JunctionApproach upcoming_junction(const RoadNetwork& net, const Route& route, std::size_t anchor, double horizon);

} // namespace yawdrive
