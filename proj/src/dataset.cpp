#include "yawdrive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "yawdrive/errors.hpp"

namespace yawdrive {

namespace {

constexpr double kBoundaryBand = 0.25;
constexpr double kForwardMax = Observation::kEgoRow * Observation::kResolution;
constexpr double kForwardMin = (Observation::kEgoRow - Observation::kSize) * Observation::kResolution;
constexpr double kLeftMax = Observation::kEgoCol * Observation::kResolution;
constexpr double kLeftMin = (Observation::kEgoCol - Observation::kSize) * Observation::kResolution;

struct EgoFrame
{
    Vec2 origin;
    Vec2 forward;
    Vec2 left;

    Vec2 to_ego(const Vec2& p) const
    {
        const Vec2 d = p - origin;
        return {d.dot(forward), d.dot(left)};
    }
};

// Inclusive cell index range whose centers fall inside [lo, hi] along one
// ego axis; `ego` is the pixel coordinate of the vehicle on that axis.
std::pair<int, int> cell_range(double lo, double hi, double ego)
{
    const double inv = 1.0 / Observation::kResolution;
    const int first = static_cast<int>(std::ceil(ego - 0.5 - hi * inv));
    const int last = static_cast<int>(std::floor(ego - 0.5 - lo * inv));
    return {std::max(first, 0), std::min(last, Observation::kSize - 1)};
}

void paint_edge(Observation& obs, const Vec2& a, const Vec2& b, double half_width, bool boundary)
{
    const double margin = half_width + kBoundaryBand;
    const double fmin = std::min(a.x(), b.x()) - margin, fmax = std::max(a.x(), b.x()) + margin;
    const double lmin = std::min(a.y(), b.y()) - margin, lmax = std::max(a.y(), b.y()) + margin;
    if (fmax < kForwardMin || fmin > kForwardMax || lmax < kLeftMin || lmin > kLeftMax) return;
    const auto [r0, r1] = cell_range(fmin, fmax, Observation::kEgoRow);
    const auto [c0, c1] = cell_range(lmin, lmax, Observation::kEgoCol);
    const Vec2 d = b - a;
    const double len2 = d.squaredNorm();
    if (len2 <= 0.0) return;
    const double len = std::sqrt(len2);
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const Vec2 q = Observation::cell_offset(r, c) - a;
            const double t = q.dot(d) / len2;
            const double tc = std::clamp(t, 0.0, 1.0);
            if ((q - tc * d).norm() <= half_width) obs.at(Observation::Drivable, r, c) = 1.0f;
            if (boundary && t >= 0.0 && t <= 1.0) {
                const double lateral = std::abs(d.x() * q.y() - d.y() * q.x()) / len;
                if (std::abs(lateral - half_width) <= kBoundaryBand) obs.at(Observation::Boundary, r, c) = 1.0f;
            }
        }
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class RecordingDriver : public Driver
{
  public:
    RecordingDriver(const CollectConfig& cfg, std::vector<Record>& records, std::vector<FrameTag>& tags)
        : cfg_(cfg), records_(records), tags_(tags)
    {
    }

    void reset(std::uint64_t seed) override { rng_.seed(seed); }

    Action act(const DrivingContext& ctx) override
    {
        const Pose2D& pose = ctx.state.pose;
        const GuidanceConfig& gc = cfg_.guidance;
        Record r;
        r.obs = rasterize(ctx.net, ctx.state);
        r.speed = static_cast<float>(ctx.state.speed);
        const Action clean = expert_action(ctx.state, ctx.route, cfg_.expert);
        const NoisyAction noisy = inject_control_noise(clean, rng_, cfg_.expert.noise_prob, cfg_.expert.noise_sigma);
        r.action = {static_cast<float>(clean.steer), static_cast<float>(clean.throttle), static_cast<float>(clean.brake)};
        const YawVector yaw = yaw_guidance(trajectory_yaws(ctx.route, pose, gc.samples));
        const XYVector xy = xy_guidance(ctx.route, pose, gc.samples, gc.xy_scale);
        for (int i = 0; i < 5; ++i) {
            r.yaw_guide[i] = static_cast<float>(yaw.values[i]);
            r.xy_guide[2 * i] = static_cast<float>(xy.values[i].x());
            r.xy_guide[2 * i + 1] = static_cast<float>(xy.values[i].y());
        }
        r.command = command_label(ctx.net, ctx.route, pose, gc.command_horizon, gc.turn_threshold);
        r.noised = noisy.noised;
        tags_.push_back(tag_frame(ctx.net, pose.position(), r.command, clean.steer, cfg_.turn_steer_threshold));
        records_.push_back(std::move(r));
        return noisy.executed;
    }

  private:
    const CollectConfig& cfg_;
    std::vector<Record>& records_;
    std::vector<FrameTag>& tags_;
    std::mt19937_64 rng_;
};

constexpr char kMagic[4] = {'Y', 'D', 'R', 'V'};
constexpr std::uint32_t kVersion = 1;

} // namespace

Observation rasterize(const RoadNetwork& net, const VehicleState& state)
{
    Observation obs;
    const EgoFrame frame{state.pose.position(), state.pose.heading(), {-std::sin(state.pose.yaw), std::cos(state.pose.yaw)}};
    for (const auto& seg : net.segments) {
        const bool boundary = seg.kind == SegmentKind::Lane;
        const double half = 0.5 * seg.width;
        Vec2 prev = frame.to_ego(seg.centerline.front());
        for (std::size_t i = 1; i < seg.centerline.size(); ++i) {
            const Vec2 cur = frame.to_ego(seg.centerline[i]);
            paint_edge(obs, prev, cur, half, boundary);
            prev = cur;
        }
    }
    for (const auto& o : net.obstacles) {
        const Vec2 c = frame.to_ego(o.center);
        const auto [r0, r1] = cell_range(c.x() - o.radius, c.x() + o.radius, Observation::kEgoRow);
        const auto [c0, c1] = cell_range(c.y() - o.radius, c.y() + o.radius, Observation::kEgoCol);
        for (int r = r0; r <= r1; ++r)
            for (int col = c0; col <= c1; ++col)
                if ((Observation::cell_offset(r, col) - c).norm() <= o.radius) obs.at(Observation::Obstacles, r, col) = 1.0f;
    }
    return obs;
}

std::string_view to_string(FrameTag t)
{
    switch (t) {
    case FrameTag::RoadOptionTurn: return "road_option_turn";
    case FrameTag::LaneKeepTurn: return "lane_keep_turn";
    case FrameTag::Cruise: return "cruise";
    }
    return "?";
}

FrameTag parse_frame_tag(std::string_view s)
{
    if (s == "road_option_turn") return FrameTag::RoadOptionTurn;
    if (s == "lane_keep_turn") return FrameTag::LaneKeepTurn;
    if (s == "cruise") return FrameTag::Cruise;
    throw FormatError("unknown frame tag " + std::string(s));
}

FrameTag tag_frame(const RoadNetwork& net, const Vec2& position, Command command, double steer, double steer_threshold)
{
    if (command == Command::LaneFollow) return std::abs(steer) > steer_threshold ? FrameTag::LaneKeepTurn : FrameTag::Cruise;
    for (const auto& j : net.junctions)
        if ((position - j.center).norm() <= j.radius) return FrameTag::RoadOptionTurn;
    return FrameTag::Cruise;
}

Dataset collect(const RoadNetwork& net, std::span<const Task> tasks, const CollectConfig& cfg)
{
    Dataset data;
    data.manifest.config = cfg;
    data.manifest.xy_scale = cfg.guidance.xy_scale;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const Task& task = tasks[i];
        std::vector<Record> records;
        std::vector<FrameTag> tags;
        RecordingDriver driver(cfg, records, tags);
        EpisodeResult result;
        try {
            const Route route = plan_route(net, task.start, task.goal, cfg.guidance.spacing);
            result = run_episode(net, route, driver, make_episode_config(route, task.start, task.goal),
                                 splitmix64(cfg.seed ^ splitmix64(i)));
        } catch (const Error& e) {
            throw CollectionError("task " + std::to_string(i) + ": " + e.what());
        }
        if (result.outcome != Outcome::Success)
            throw CollectionError("expert failed task " + std::to_string(i) + " (" + std::string(to_string(result.outcome)) +
                                  ")");
        data.records.insert(data.records.end(), std::make_move_iterator(records.begin()),
                            std::make_move_iterator(records.end()));
        data.manifest.tags.insert(data.manifest.tags.end(), tags.begin(), tags.end());
        ++data.manifest.episode_count;
    }
    data.manifest.frame_count = data.records.size();
    return data;
}

Splits make_splits(const DatasetManifest& manifest)
{
    Splits s;
    for (std::size_t i = 0; i < manifest.tags.size(); ++i) {
        const FrameTag t = manifest.tags[i];
        s.full.push_back(i);
        if (t != FrameTag::LaneKeepTurn) s.subset1.push_back(i);
        if (t != FrameTag::RoadOptionTurn) s.subset2.push_back(i);
    }
    return s;
}

int histogram_bin(double v, double lo, double hi, int bins)
{
    const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
}

DatasetStats dataset_stats(std::span<const Record> records, std::span<const FrameTag> tags)
{
    if (records.empty()) throw EmptyDataset("no records");
    DatasetStats s;
    for (const auto& r : records) {
        ++s.per_command[static_cast<int>(r.command)];
        ++s.steer_hist[histogram_bin(r.action[0], -1.0, 1.0, 21)];
        ++s.throttle_hist[histogram_bin(r.action[1], 0.0, 1.0, 10)];
        ++s.brake_hist[histogram_bin(r.action[2], 0.0, 1.0, 10)];
        if (r.action[1] > 0.0f && r.action[2] > 0.0f) ++s.exclusion_violations;
        if (r.noised) ++s.noised;
    }
    for (FrameTag t : tags) ++s.per_tag[static_cast<int>(t)];
    return s;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    if (data.manifest.frame_count != data.records.size() || data.manifest.tags.size() != data.records.size())
        throw CorruptData("manifest does not match the record count");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw WriteError("cannot create " + dir.string() + ": " + ec.message());

    io::Writer w;
    w.bytes.reserve(16 + data.records.size() * (Observation::kCells * 4 + 80));
    w.put_bytes(kMagic, 4);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint64_t>(data.records.size());
    for (const auto& r : data.records) {
        w.put_bytes(r.obs.raster.data(), sizeof(float) * Observation::kCells);
        w.put<float>(r.speed);
        w.put_bytes(r.action.data(), sizeof(float) * 3);
        w.put_bytes(r.yaw_guide.data(), sizeof(float) * 5);
        w.put_bytes(r.xy_guide.data(), sizeof(float) * 10);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(r.command));
        w.put<std::uint8_t>(r.noised ? 1 : 0);
        w.put<std::uint16_t>(0);
    }
    w.save(dir / "records.bin");

    const auto& m = data.manifest;
    const auto& c = m.config;
    nlohmann::json j;
    j["frame_count"] = m.frame_count;
    j["episode_count"] = m.episode_count;
    std::vector<std::string> tags;
    for (FrameTag t : m.tags) tags.emplace_back(to_string(t));
    j["tags"] = tags;
    j["normalization"] = {{"speed_divisor", m.speed_divisor}, {"yaw_range", m.yaw_range}, {"xy_scale", m.xy_scale}};
    j["config"] = {{"seed", c.seed},
                   {"map", c.map},
                   {"turn_steer_threshold", c.turn_steer_threshold},
                   {"expert",
                    {{"lookahead", c.expert.lookahead},
                     {"cruise_speed", c.expert.cruise_speed},
                     {"turn_speed", c.expert.turn_speed},
                     {"speed_gain", c.expert.speed_gain},
                     {"noise_prob", c.expert.noise_prob},
                     {"noise_sigma", c.expert.noise_sigma},
                     {"preview_distance", c.expert.preview_distance},
                     {"turn_yaw_threshold", c.expert.turn_yaw_threshold}}},
                   {"guidance",
                    {{"samples", c.guidance.samples},
                     {"spacing", c.guidance.spacing},
                     {"xy_scale", c.guidance.xy_scale},
                     {"command_horizon", c.guidance.command_horizon},
                     {"turn_threshold", c.guidance.turn_threshold}}}};
    std::ofstream out(dir / "manifest.json");
    out << j.dump(1) << "\n";
    if (!out) throw WriteError("failed writing " + (dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    Dataset data;
    io::Reader r(dir / "records.bin");
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(r.name() + " has unknown magic bytes");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw FormatError("unsupported record version " + std::to_string(version));
    const auto count = r.get<std::uint64_t>();
    constexpr std::size_t kRecordBytes = Observation::kCells * 4 + 4 + 12 + 20 + 40 + 4;
    if (r.remaining() != count * kRecordBytes) throw CorruptData(r.name() + " is truncated or oversized");
    data.records.resize(count);
    for (auto& rec : data.records) {
        r.get_bytes(rec.obs.raster.data(), sizeof(float) * Observation::kCells);
        rec.speed = r.get<float>();
        r.get_bytes(rec.action.data(), sizeof(float) * 3);
        r.get_bytes(rec.yaw_guide.data(), sizeof(float) * 5);
        r.get_bytes(rec.xy_guide.data(), sizeof(float) * 10);
        const auto cmd = r.get<std::uint8_t>();
        if (cmd >= kCommandCount) throw CorruptData("invalid command byte");
        rec.command = static_cast<Command>(cmd);
        rec.noised = r.get<std::uint8_t>() != 0;
        r.get<std::uint16_t>();
    }

    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("cannot open " + (dir / "manifest.json").string());
    try {
        const auto j = nlohmann::json::parse(in);
        auto& m = data.manifest;
        m.frame_count = j.at("frame_count").get<std::size_t>();
        m.episode_count = j.at("episode_count").get<std::size_t>();
        for (const auto& t : j.at("tags")) m.tags.push_back(parse_frame_tag(t.get<std::string>()));
        const auto& n = j.at("normalization");
        m.speed_divisor = n.at("speed_divisor").get<double>();
        m.yaw_range = n.at("yaw_range").get<double>();
        m.xy_scale = n.at("xy_scale").get<double>();
        const auto& c = j.at("config");
        m.config.seed = c.at("seed").get<std::uint64_t>();
        m.config.map = c.at("map").get<std::string>();
        m.config.turn_steer_threshold = c.at("turn_steer_threshold").get<double>();
        const auto& e = c.at("expert");
        auto& ep = m.config.expert;
        ep.lookahead = e.at("lookahead").get<double>();
        ep.cruise_speed = e.at("cruise_speed").get<double>();
        ep.turn_speed = e.at("turn_speed").get<double>();
        ep.speed_gain = e.at("speed_gain").get<double>();
        ep.noise_prob = e.at("noise_prob").get<double>();
        ep.noise_sigma = e.at("noise_sigma").get<double>();
        ep.preview_distance = e.at("preview_distance").get<double>();
        ep.turn_yaw_threshold = e.at("turn_yaw_threshold").get<double>();
        const auto& gj = c.at("guidance");
        auto& gc = m.config.guidance;
        gc.samples = gj.at("samples").get<int>();
        gc.spacing = gj.at("spacing").get<double>();
        gc.xy_scale = gj.at("xy_scale").get<double>();
        gc.command_horizon = gj.at("command_horizon").get<double>();
        gc.turn_threshold = gj.at("turn_threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    if (data.manifest.frame_count != count || data.manifest.tags.size() != count)
        throw CorruptData("manifest count " + std::to_string(data.manifest.frame_count) + " does not match " +
                          std::to_string(count) + " records");
    return data;
}

} // namespace yawdrive
