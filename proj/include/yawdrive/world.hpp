#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace yawdrive {

using Vec2 = Eigen::Vector2d;

/// Maps an angle onto (-pi, pi]. Throws InvalidAngle for non-finite input.
double wrap_angle(double theta);

struct Pose2D
{
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    Vec2 position() const { return {x, y}; }
    Vec2 heading() const;
};

/// Proper rigid motion of the plane: p -> R(rotation) p + translation.
struct SE2Transform
{
    double rotation = 0.0;
    Vec2 translation = Vec2::Zero();

    Vec2 rotate(const Vec2& v) const;
    Vec2 apply(const Vec2& p) const;
    Pose2D apply(const Pose2D& pose) const;
};

enum class SegmentKind : std::uint8_t
{
    Lane,      // road lane, including corner curves
    Connector  // path through a junction
};

struct LaneSegment
{
    int id = 0;
    std::vector<Vec2> centerline;
    double width = 4.0;
    std::vector<int> successors;
    SegmentKind kind = SegmentKind::Lane;

    double length() const;
};

struct Junction
{
    Vec2 center = Vec2::Zero();
    std::vector<int> segments;
    double radius = 8.0;
};

struct Obstacle
{
    Vec2 center = Vec2::Zero();
    double radius = 1.0;
};

/// Directed lane graph plus static obstacles. Segment ids equal their index.
struct RoadNetwork
{
    std::vector<LaneSegment> segments;
    std::vector<Junction> junctions;
    std::vector<Obstacle> obstacles;

    const LaneSegment& segment(int id) const;

    /// Throws SceneFormatError when an invariant of the container is broken.
    void validate() const;
};

/// Fixed construction constants of the lattice scenes.
struct SceneGeometry
{
    double lane_width = 4.0;
    double junction_radius = 8.0;
    double corner_radius = 12.0;
    double block = 40.0;          // node spacing; square scene side = 2 * block
    double vertex_spacing = 1.0;  // max polyline vertex spacing
    double passthrough_cut = 1.0; // straight degree-2 nodes
};

struct GridTownOptions
{
    SceneGeometry geometry{};
    int obstacles = 0;            // static discs placed beside random roads
    double obstacle_radius = 1.0;
};

RoadNetwork build_square_scene(const SceneGeometry& geometry = {});

/// Deterministic lattice town; prunes at most 20% of the interior edges
/// while keeping the lane graph strongly connected.
RoadNetwork build_grid_town(std::uint64_t seed, int rows, int cols, const GridTownOptions& options = {});

RoadNetwork transform_network(const RoadNetwork& net, const SE2Transform& t);

/// Projection of a point onto a polyline.
struct PolylineProjection
{
    double distance = 0.0; // unsigned
    double arc = 0.0;      // arc length of the foot point
    double offset = 0.0;   // signed, positive to the left of travel
    std::size_t edge = 0;  // index of the polyline edge holding the foot point
};

PolylineProjection project_onto_polyline(std::span<const Vec2> line, const Vec2& p);
double polyline_length(std::span<const Vec2> line);

struct Location
{
    int segment = -1;
    double arc = 0.0;
    double offset = 0.0;
};

/// Segment whose centerline is closest to `point`; ties go to the lowest id.
Location locate(const RoadNetwork& net, const Vec2& point);

/// True when every segment can reach every other through successor links.
bool is_strongly_connected(const RoadNetwork& net);

std::string scene_to_json(const RoadNetwork& net);
RoadNetwork scene_from_json(const std::string& text);
void save_scene(const RoadNetwork& net, const std::filesystem::path& path);
RoadNetwork load_scene(const std::filesystem::path& path);

} // namespace yawdrive
