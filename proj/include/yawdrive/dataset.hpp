#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "yawdrive/expert.hpp"
#include "yawdrive/guidance.hpp"
#include "yawdrive/simulate.hpp"
#include "yawdrive/suite.hpp"

namespace yawdrive {

/// Binary ego-centric raster: 3 x 64 x 64 at 0.5 m/cell. The vehicle sits at
/// pixel coordinate (48, 32) (row, column, cell corners) facing row 0, so the
/// window spans 24 m ahead, 8 m behind and 16 m to either side.
struct Observation
{
    static constexpr int kChannels = 3;
    static constexpr int kSize = 64;
    static constexpr int kCells = kChannels * kSize * kSize;
    static constexpr double kResolution = 0.5;
    static constexpr double kEgoRow = 48.0;
    static constexpr double kEgoCol = 32.0;

    enum Channel
    {
        Drivable = 0,
        Boundary = 1,
        Obstacles = 2
    };

    std::vector<float> raster = std::vector<float>(kCells, 0.0f);

    float at(int channel, int row, int col) const { return raster[(channel * kSize + row) * kSize + col]; }
    float& at(int channel, int row, int col) { return raster[(channel * kSize + row) * kSize + col]; }

    /// Ego-frame offsets (forward, left) in meters of a cell center.
    static Vec2 cell_offset(int row, int col)
    {
        return {(kEgoRow - (row + 0.5)) * kResolution, (kEgoCol - (col + 0.5)) * kResolution};
    }

    friend bool operator==(const Observation&, const Observation&) = default;
};

Observation rasterize(const RoadNetwork& net, const VehicleState& state);

/// One demonstration frame. Stored in single precision, matching the record file.
struct Record
{
    Observation obs;
    float speed = 0.0f;
    std::array<float, 3> action{}; // steer, throttle, brake (clean expert label)
    std::array<float, 5> yaw_guide{};
    std::array<float, 10> xy_guide{}; // x0, y0, x1, y1, ...
    Command command = Command::LaneFollow;
    bool noised = false;

    Action label() const { return {action[0], action[1], action[2]}; }
    YawVector yaw() const { return {std::vector<double>(yaw_guide.begin(), yaw_guide.end())}; }
    XYVector xy() const
    {
        XYVector v;
        for (int i = 0; i < 5; ++i) v.values.emplace_back(xy_guide[2 * i], xy_guide[2 * i + 1]);
        return v;
    }

    friend bool operator==(const Record&, const Record&) = default;
};

enum class FrameTag : std::uint8_t
{
    RoadOptionTurn,
    LaneKeepTurn,
    Cruise
};

std::string_view to_string(FrameTag t);
FrameTag parse_frame_tag(std::string_view s);

struct CollectConfig
{
    ExpertParams expert{};
    std::uint64_t seed = 0;
    double turn_steer_threshold = 0.1;
    GuidanceConfig guidance{};
    std::string map = "square";

    friend bool operator==(const CollectConfig&, const CollectConfig&) = default;
};

struct DatasetManifest
{
    std::size_t frame_count = 0;
    std::size_t episode_count = 0;
    std::vector<FrameTag> tags;
    double speed_divisor = 10.0;
    double yaw_range = 3.141592653589793;
    double xy_scale = 0.01;
    CollectConfig config{};

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset
{
    std::vector<Record> records;
    DatasetManifest manifest;
};

/// Tag of a frame given the vehicle position, command and clean steer label.
FrameTag tag_frame(const RoadNetwork& net, const Vec2& position, Command command, double steer,
                   double steer_threshold = 0.1);

/// Drives the noisy expert over every task (episode i uses a seed derived
/// from cfg.seed and i) and records one frame per simulation step. Throws
/// CollectionError when the expert fails a task.
Dataset collect(const RoadNetwork& net, std::span<const Task> tasks, const CollectConfig& cfg);

struct Splits
{
    std::vector<std::size_t> subset1; // cruise + road-option turns
    std::vector<std::size_t> subset2; // cruise + lane-keeping turns
    std::vector<std::size_t> full;
};

Splits make_splits(const DatasetManifest& manifest);

struct DatasetStats
{
    std::array<std::size_t, kCommandCount> per_command{};
    std::array<std::size_t, 3> per_tag{};
    std::array<std::size_t, 21> steer_hist{}; // 21 bins over [-1, 1]
    std::array<std::size_t, 10> throttle_hist{};
    std::array<std::size_t, 10> brake_hist{};
    std::size_t exclusion_violations = 0; // frames with throttle > 0 and brake > 0
    std::size_t noised = 0;
};

/// Bin of `v` among `bins` equal bins over [lo, hi]; the upper edge joins the last bin.
int histogram_bin(double v, double lo, double hi, int bins);

DatasetStats dataset_stats(std::span<const Record> records, std::span<const FrameTag> tags = {});

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace yawdrive
