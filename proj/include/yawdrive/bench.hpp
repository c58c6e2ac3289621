#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "yawdrive/policy.hpp"
#include "yawdrive/suite.hpp"

namespace yawdrive {

struct TaskOutcome
{
    std::size_t task = 0;
    Outcome outcome = Outcome::Timeout;
    int violation_events = 0;
    double distance = 0.0;
    std::string error; // non-empty when the episode raised
};

struct SeedReport
{
    std::uint64_t seed = 0;
    int successes = 0;
    std::vector<TaskOutcome> outcomes;
    double violations_per_km = 0.0; // over successful runs only
};

struct BenchReport
{
    std::string policy;
    std::string suite;
    std::vector<std::uint64_t> seeds;
    std::vector<SeedReport> per_seed;
    double mean = 0.0;
    double std = 0.0; // population
};

struct MeanStd
{
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(std::span<const double> values);

/// Episode seed of task `task` under suite seed `seed`.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t task);

/// Runs every task (or the listed subset) once per seed. Per-task errors are
/// recorded as failures. `threads` = 0 uses the hardware concurrency.
BenchReport run_suite(const DriverFactory& policy, const TaskSuite& suite, std::span<const std::uint64_t> seeds,
                      const std::string& policy_name, std::span<const std::size_t> subset = {}, unsigned threads = 1);

/// One report per sigma (radians). Yaw-guided policies perturb each yaw
/// element, XY-guided ones each waypoint coordinate (sigma read in meters).
std::vector<BenchReport> yaw_noise_harness(const PolicySpec& spec, std::shared_ptr<const ParameterSet<double>> weights,
                                           const TaskSuite& suite, std::span<const double> sigmas,
                                           std::span<const std::uint64_t> seeds, unsigned threads = 1);

std::vector<BenchReport> command_noise_harness(const PolicySpec& spec,
                                               std::shared_ptr<const ParameterSet<double>> weights,
                                               const TaskSuite& suite, std::span<const double> probs,
                                               std::span<const std::uint64_t> seeds, unsigned threads = 1);

nlohmann::json report_to_json(const BenchReport& report);
void write_report_json(const BenchReport& report, const std::filesystem::path& path);

/// Attention weights of one tap (side x side) as a 64 x 64 byte image:
/// nearest-neighbor upsampling then min-max normalization; a constant map
/// becomes all 255.
std::vector<std::uint8_t> heat_map(std::span<const double> weights, int side);

/// Gray rendering of a raster, 255 * mean over channels.
std::vector<std::uint8_t> raster_gray(const Observation& obs);

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> gray, int width, int height);
void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width, int height);

/// Writes layerN.pgm (heat) and layerN.ppm (overlay) for the three taps.
Prediction heatmap_export(const PolicySpec& spec, const ParameterSet<double>& weights, const Record& record,
                          const std::filesystem::path& dir);

} // namespace yawdrive
