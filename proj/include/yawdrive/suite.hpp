#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "yawdrive/guidance.hpp"
#include "yawdrive/world.hpp"

namespace yawdrive {

enum class TurnKind : std::uint8_t
{
    Left,
    Right,
    Straight,
    None // navigation task without a designated junction
};

enum class TaskCategory : std::uint8_t
{
    RoadOption, // decision at a junction
    LaneKeep,   // perimeter corner
    Navigation
};

struct Task
{
    Pose2D start;
    Vec2 goal = Vec2::Zero();
    int junction = -1; // index into RoadNetwork::junctions, -1 for corners
    Vec2 node = Vec2::Zero();
    TurnKind turn = TurnKind::None;
    TaskCategory category = TaskCategory::Navigation;
};

struct TaskSuite
{
    std::string name;
    RoadNetwork net;
    std::vector<Task> tasks;
};

/// The 32 turning tasks of the square scene: left and right at every
/// junction approach that admits them plus both directions of every corner.
TaskSuite square_suite(const SceneGeometry& geometry = {});

/// Straight-through tasks at every junction approach; collection only.
std::vector<Task> square_straight_tasks(const SceneGeometry& geometry = {});

/// Turning tasks followed by straight-through tasks.
std::vector<Task> square_collection_tasks(const SceneGeometry& geometry = {});

/// Random solvable navigation tasks between lane midpoints with route length
/// >= min_length; fewer than `count` if the network does not allow them.
std::vector<Task> random_tasks(const RoadNetwork& net, std::uint64_t seed, int count, double min_length);

/// 25 random solvable navigation tasks with route length >= min_length on a
/// seeded grid town.
TaskSuite town_suite(std::uint64_t seed, int rows = 6, int cols = 6, int count = 25, double min_length = 300.0);

std::string_view to_string(TurnKind t);

} // namespace yawdrive
