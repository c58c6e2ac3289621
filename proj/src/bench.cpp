#include "yawdrive/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

namespace yawdrive {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

TaskOutcome run_task(const DriverFactory& policy, const TaskSuite& suite, std::size_t index, std::uint64_t seed)
{
    TaskOutcome out;
    out.task = index;
    const Task& task = suite.tasks[index];
    try {
        const Route route = plan_route(suite.net, task.start, task.goal);
        auto driver = policy();
        const EpisodeResult r =
            run_episode(suite.net, route, *driver, make_episode_config(route, task.start, task.goal), episode_seed(seed, index));
        out.outcome = r.outcome;
        out.violation_events = r.lane_violation_events;
        out.distance = r.distance_driven;
    } catch (const Error& e) {
        out.outcome = Outcome::Timeout;
        out.error = e.what();
    }
    return out;
}

void check_noise_kind(const PolicySpec& spec, bool want_command)
{
    const bool is_command = spec.kind == PolicyKind::CommandBranch;
    if (is_command != want_command)
        throw ConditioningError(std::string(want_command ? "command" : "guidance") + " noise does not apply to a " +
                                std::string(to_string(spec.kind)) + " policy");
}

} // namespace

MeanStd mean_std(std::span<const double> values)
{
    MeanStd m;
    if (values.empty()) return m;
    for (double v : values) m.mean += v;
    m.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(var / static_cast<double>(values.size()));
    return m;
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t task) { return splitmix64(splitmix64(seed) + task); }

BenchReport run_suite(const DriverFactory& policy, const TaskSuite& suite, std::span<const std::uint64_t> seeds,
                      const std::string& policy_name, std::span<const std::size_t> subset, unsigned threads)
{
    if (seeds.empty()) throw EpisodeError("run_suite needs at least one seed");
    std::vector<std::size_t> tasks(subset.begin(), subset.end());
    if (tasks.empty())
        for (std::size_t i = 0; i < suite.tasks.size(); ++i) tasks.push_back(i);
    for (std::size_t t : tasks)
        if (t >= suite.tasks.size()) throw EpisodeError("task index " + std::to_string(t) + " out of range");

    BenchReport report;
    report.policy = policy_name;
    report.suite = suite.name;
    report.seeds.assign(seeds.begin(), seeds.end());

    // Jobs are (seed, task) pairs; results land in fixed slots so the report
    // does not depend on scheduling.
    const std::size_t jobs = seeds.size() * tasks.size();
    std::vector<TaskOutcome> results(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs;)
            results[j] = run_task(policy, suite, tasks[j % tasks.size()], seeds[j / tasks.size()]);
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    }

    std::vector<double> counts;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        SeedReport sr;
        sr.seed = seeds[s];
        int events = 0;
        double distance = 0.0;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            const TaskOutcome& o = results[s * tasks.size() + t];
            if (o.outcome == Outcome::Success && o.error.empty()) {
                ++sr.successes;
                events += o.violation_events;
                distance += o.distance;
            }
            sr.outcomes.push_back(o);
        }
        sr.violations_per_km = violations_per_km(events, distance);
        counts.push_back(sr.successes);
        report.per_seed.push_back(std::move(sr));
    }
    const MeanStd ms = mean_std(counts);
    report.mean = ms.mean;
    report.std = ms.std;
    return report;
}

std::vector<BenchReport> yaw_noise_harness(const PolicySpec& spec, std::shared_ptr<const ParameterSet<double>> weights,
                                           const TaskSuite& suite, std::span<const double> sigmas,
                                           std::span<const std::uint64_t> seeds, unsigned threads)
{
    check_noise_kind(spec, false);
    std::vector<BenchReport> reports;
    for (double sigma : sigmas) {
        GuidanceNoise noise;
        if (spec.kind == PolicyKind::YawGuided)
            noise.yaw_sigma = sigma;
        else
            noise.xy_sigma = sigma;
        reports.push_back(run_suite(as_driving_policy(spec, weights, noise), suite, seeds, std::string(to_string(spec.kind)),
                                    {}, threads));
    }
    return reports;
}

std::vector<BenchReport> command_noise_harness(const PolicySpec& spec,
                                               std::shared_ptr<const ParameterSet<double>> weights,
                                               const TaskSuite& suite, std::span<const double> probs,
                                               std::span<const std::uint64_t> seeds, unsigned threads)
{
    check_noise_kind(spec, true);
    std::vector<BenchReport> reports;
    for (double p : probs) {
        GuidanceNoise noise;
        noise.command_prob = p;
        reports.push_back(run_suite(as_driving_policy(spec, weights, noise), suite, seeds, std::string(to_string(spec.kind)),
                                    {}, threads));
    }
    return reports;
}

nlohmann::json report_to_json(const BenchReport& report)
{
    nlohmann::json j;
    j["policy"] = report.policy;
    j["suite"] = report.suite;
    j["seeds"] = report.seeds;
    j["per_seed"] = nlohmann::json::array();
    for (const auto& s : report.per_seed) {
        nlohmann::json failures = nlohmann::json::array();
        for (const auto& o : s.outcomes) {
            if (o.outcome == Outcome::Success && o.error.empty()) continue;
            nlohmann::json f = {{"task", o.task}, {"outcome", std::string(to_string(o.outcome))}};
            if (!o.error.empty()) f["error"] = o.error;
            failures.push_back(f);
        }
        j["per_seed"].push_back(
            {{"seed", s.seed}, {"successes", s.successes}, {"failures", failures}, {"violations_per_km", s.violations_per_km}});
    }
    j["mean"] = report.mean;
    j["std"] = report.std;
    return j;
}

void write_report_json(const BenchReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw WriteError("cannot open " + path.string());
    out << report_to_json(report).dump(2) << "\n";
    if (!out) throw WriteError("failed writing " + path.string());
}

std::vector<std::uint8_t> heat_map(std::span<const double> weights, int side)
{
    constexpr int kSize = Observation::kSize;
    if (side <= 0 || static_cast<std::size_t>(side) * side != weights.size() || kSize % side != 0)
        throw ShapeError("heat map needs a square tap dividing 64, got " + std::to_string(weights.size()) + " weights");
    const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
    const double range = *hi - *lo;
    const int block = kSize / side;
    std::vector<std::uint8_t> out(kSize * kSize);
    for (int r = 0; r < kSize; ++r)
        for (int c = 0; c < kSize; ++c) {
            const double w = weights[static_cast<std::size_t>((r / block) * side + c / block)];
            out[r * kSize + c] =
                range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (w - *lo) / range)) : std::uint8_t{255};
        }
    return out;
}

std::vector<std::uint8_t> raster_gray(const Observation& obs)
{
    constexpr int kPlane = Observation::kSize * Observation::kSize;
    std::vector<std::uint8_t> out(kPlane);
    for (int i = 0; i < kPlane; ++i) {
        double sum = 0.0;
        for (int c = 0; c < Observation::kChannels; ++c) sum += obs.raster[c * kPlane + i];
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * sum / Observation::kChannels));
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> gray, int width, int height)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WriteError("cannot open " + path.string());
    out << "P5 " << width << ' ' << height << " 255\n";
    out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    if (!out) throw WriteError("failed writing " + path.string());
}

void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width, int height)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WriteError("cannot open " + path.string());
    out << "P6 " << width << ' ' << height << " 255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw WriteError("failed writing " + path.string());
}

Prediction heatmap_export(const PolicySpec& spec, const ParameterSet<double>& weights, const Record& record,
                          const std::filesystem::path& dir)
{
    Guidance guidance = record.command;
    if (spec.kind == PolicyKind::YawGuided) guidance = record.yaw();
    if (spec.kind == PolicyKind::XYGuided) guidance = record.xy();
    const Prediction pred = forward(spec, weights, record.obs, record.speed, guidance);

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw WriteError("cannot create " + dir.string() + ": " + ec.message());
    const auto gray = raster_gray(record.obs);
    constexpr int kSize = Observation::kSize;
    for (int l = 0; l < 3; ++l) {
        const auto heat = heat_map(pred.attention[l], pred.tap_side[l]);
        std::vector<std::uint8_t> rgb(3 * heat.size());
        for (std::size_t i = 0; i < heat.size(); ++i) {
            const double base = 0.5 * gray[i];
            rgb[3 * i] = static_cast<std::uint8_t>(std::lround(base + 0.5 * heat[i]));
            rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround(base));
            rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(base));
        }
        const std::string stem = "layer" + std::to_string(l + 1);
        write_pgm(dir / (stem + ".pgm"), heat, kSize, kSize);
        write_ppm(dir / (stem + ".ppm"), rgb, kSize, kSize);
    }
    return pred;
}

} // namespace yawdrive
