#include "yawdrive/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

#include "yawdrive/errors.hpp"

namespace yawdrive {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Vec2 right_normal(const Vec2& u) { return {u.y(), -u.x()}; }

void append_straight(std::vector<Vec2>& out, const Vec2& a, const Vec2& b, double spacing)
{
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int i = 0; i <= n; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / n));
}

// Quarter-style arc tangent to `u_in` at `entry` and to `u_out` at `exit`.
void append_arc(std::vector<Vec2>& out, const Vec2& entry, const Vec2& u_in, const Vec2& exit, double spacing)
{
    const bool left = cross(u_in, exit - entry) > 0.0;
    const Vec2 n = left ? Vec2(-u_in.y(), u_in.x()) : right_normal(u_in);
    const double r = (exit - entry).dot(n);
    const Vec2 c = entry + r * n;
    const double a0 = std::atan2(entry.y() - c.y(), entry.x() - c.x());
    const double a1 = std::atan2(exit.y() - c.y(), exit.x() - c.x());
    const double sweep = wrap_angle(a1 - a0);
    const int steps = std::max(2, static_cast<int>(std::ceil(std::abs(sweep) * r / spacing)));
    for (int i = 0; i <= steps; ++i) {
        const double a = a0 + sweep * static_cast<double>(i) / steps;
        out.emplace_back(c.x() + r * std::cos(a), c.y() + r * std::sin(a));
    }
    out.front() = entry;
    out.back() = exit;
}

struct Lattice
{
    std::vector<Vec2> nodes;
    std::vector<std::pair<int, int>> edges; // undirected
};

RoadNetwork build_from_lattice(const Lattice& lat, const SceneGeometry& g)
{
    const int n_nodes = static_cast<int>(lat.nodes.size());
    std::vector<std::vector<int>> neighbors(n_nodes);
    for (auto [a, b] : lat.edges) {
        neighbors[a].push_back(b);
        neighbors[b].push_back(a);
    }
    for (auto& nb : neighbors) std::sort(nb.begin(), nb.end());

    auto dir = [&](int a, int b) -> Vec2 { return (lat.nodes[b] - lat.nodes[a]).normalized(); };

    // Distance from a node center at which road lanes stop.
    std::vector<double> cut(n_nodes, 0.0);
    std::vector<bool> is_junction(n_nodes, false);
    for (int v = 0; v < n_nodes; ++v) {
        const auto& nb = neighbors[v];
        if (nb.size() >= 3) {
            cut[v] = g.junction_radius;
            is_junction[v] = true;
        } else if (nb.size() == 2) {
            const double c = dir(v, nb[0]).dot(dir(v, nb[1]));
            cut[v] = std::abs(c) < 0.5 ? g.corner_radius : g.passthrough_cut;
        }
    }

    RoadNetwork net;
    const double half = 0.5 * g.lane_width;

    // One lane per directed edge, right-hand traffic.
    std::map<std::pair<int, int>, int> lane_of;
    for (auto [a, b] : lat.edges) {
        for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            const Vec2 u = dir(from, to);
            const Vec2 off = half * right_normal(u);
            LaneSegment seg;
            seg.id = static_cast<int>(net.segments.size());
            seg.width = g.lane_width;
            seg.kind = SegmentKind::Lane;
            append_straight(seg.centerline, lat.nodes[from] + cut[from] * u + off, lat.nodes[to] - cut[to] * u + off,
                            g.vertex_spacing);
            lane_of[{from, to}] = seg.id;
            net.segments.push_back(std::move(seg));
        }
    }

    // Node connectors: every incoming lane to every outgoing lane except U-turns.
    for (int v = 0; v < n_nodes; ++v) {
        Junction junction;
        junction.center = lat.nodes[v];
        junction.radius = g.junction_radius;
        for (int p : neighbors[v]) {
            const int in_id = lane_of.at({p, v});
            for (int q : neighbors[v]) {
                if (q == p) continue;
                const int out_id = lane_of.at({v, q});
                const Vec2 u_in = dir(p, v);
                const Vec2 u_out = dir(v, q);
                const Vec2 entry = net.segments[in_id].centerline.back();
                const Vec2 exit = net.segments[out_id].centerline.front();
                LaneSegment seg;
                seg.id = static_cast<int>(net.segments.size());
                seg.width = g.lane_width;
                seg.kind = is_junction[v] ? SegmentKind::Connector : SegmentKind::Lane;
                if (std::abs(cross(u_in, u_out)) < 1e-9)
                    append_straight(seg.centerline, entry, exit, g.vertex_spacing);
                else
                    append_arc(seg.centerline, entry, u_in, exit, g.vertex_spacing);
                seg.successors.push_back(out_id);
                net.segments[in_id].successors.push_back(seg.id);
                if (is_junction[v]) {
                    junction.segments.push_back(seg.id);
                }
                net.segments.push_back(std::move(seg));
            }
            if (is_junction[v]) junction.segments.push_back(in_id);
        }
        if (is_junction[v]) {
            for (int q : neighbors[v]) junction.segments.push_back(lane_of.at({v, q}));
            std::sort(junction.segments.begin(), junction.segments.end());
            net.junctions.push_back(std::move(junction));
        }
    }
    return net;
}

Lattice make_lattice(int rows, int cols, double block)
{
    Lattice lat;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) lat.nodes.emplace_back(c * block, r * block);
    auto id = [cols](int r, int c) { return r * cols + c; };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) lat.edges.emplace_back(id(r, c), id(r, c + 1));
            if (r + 1 < rows) lat.edges.emplace_back(id(r, c), id(r + 1, c));
        }
    return lat;
}

} // namespace

double wrap_angle(double theta)
{
    if (!std::isfinite(theta)) throw InvalidAngle("non-finite angle");
    double r = std::remainder(theta, 2.0 * kPi); // [-pi, pi]
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

Vec2 Pose2D::heading() const { return {std::cos(yaw), std::sin(yaw)}; }

Vec2 SE2Transform::rotate(const Vec2& v) const
{
    const double c = std::cos(rotation), s = std::sin(rotation);
    return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

Vec2 SE2Transform::apply(const Vec2& p) const { return rotate(p) + translation; }

Pose2D SE2Transform::apply(const Pose2D& pose) const
{
    const Vec2 p = apply(pose.position());
    return {p.x(), p.y(), wrap_angle(pose.yaw + rotation)};
}

double polyline_length(std::span<const Vec2> line)
{
    double len = 0.0;
    for (std::size_t i = 1; i < line.size(); ++i) len += (line[i] - line[i - 1]).norm();
    return len;
}

double LaneSegment::length() const { return polyline_length(centerline); }

const LaneSegment& RoadNetwork::segment(int id) const
{
    if (id < 0 || id >= static_cast<int>(segments.size()))
        throw SceneFormatError("segment id " + std::to_string(id) + " out of range");
    return segments[static_cast<std::size_t>(id)];
}

void RoadNetwork::validate() const
{
    const int n = static_cast<int>(segments.size());
    for (int i = 0; i < n; ++i) {
        const auto& s = segments[i];
        if (s.id != i) throw SceneFormatError("segment ids must equal their index");
        if (s.centerline.size() < 2) throw SceneFormatError("segment " + std::to_string(i) + " has < 2 points");
        if (!(s.width > 0.0)) throw SceneFormatError("segment " + std::to_string(i) + " has non-positive width");
        for (std::size_t k = 1; k < s.centerline.size(); ++k)
            if ((s.centerline[k] - s.centerline[k - 1]).norm() == 0.0)
                throw SceneFormatError("segment " + std::to_string(i) + " repeats a point");
        for (int succ : s.successors)
            if (succ < 0 || succ >= n) throw SceneFormatError("dangling successor " + std::to_string(succ));
    }
    for (const auto& j : junctions) {
        if (!(j.radius > 0.0)) throw SceneFormatError("junction radius must be positive");
        for (int id : j.segments)
            if (id < 0 || id >= n) throw SceneFormatError("junction references unknown segment");
    }
    for (const auto& o : obstacles)
        if (!(o.radius > 0.0)) throw SceneFormatError("obstacle radius must be positive");
}

RoadNetwork build_square_scene(const SceneGeometry& geometry)
{
    RoadNetwork net = build_from_lattice(make_lattice(3, 3, geometry.block), geometry);
    net.validate();
    return net;
}

RoadNetwork build_grid_town(std::uint64_t seed, int rows, int cols, const GridTownOptions& options)
{
    if (rows < 2 || cols < 2) throw InvalidGrid("rows and cols must be >= 2");
    const SceneGeometry& g = options.geometry;
    Lattice lat = make_lattice(rows, cols, g.block);
    std::mt19937_64 rng(seed);

    auto on_perimeter = [&](int a, int b) {
        const int ra = a / cols, ca = a % cols, rb = b / cols, cb = b % cols;
        return (ra == rb && (ra == 0 || ra == rows - 1)) || (ca == cb && (ca == 0 || ca == cols - 1));
    };
    std::vector<std::size_t> interior;
    for (std::size_t e = 0; e < lat.edges.size(); ++e)
        if (!on_perimeter(lat.edges[e].first, lat.edges[e].second)) interior.push_back(e);
    for (std::size_t i = interior.size(); i > 1; --i) std::swap(interior[i - 1], interior[rng() % i]);

    const std::size_t budget = interior.size() / 5;
    std::vector<bool> removed(lat.edges.size(), false);
    std::size_t n_removed = 0;
    for (std::size_t e : interior) {
        if (n_removed >= budget) break;
        removed[e] = true;
        Lattice trial{lat.nodes, {}};
        std::vector<int> degree(lat.nodes.size(), 0);
        for (std::size_t k = 0; k < lat.edges.size(); ++k)
            if (!removed[k]) {
                trial.edges.push_back(lat.edges[k]);
                ++degree[lat.edges[k].first];
                ++degree[lat.edges[k].second];
            }
        const bool ok = std::all_of(degree.begin(), degree.end(), [](int d) { return d >= 2; }) &&
                        is_strongly_connected(build_from_lattice(trial, g));
        if (ok)
            ++n_removed;
        else
            removed[e] = false;
    }
    Lattice pruned{lat.nodes, {}};
    for (std::size_t k = 0; k < lat.edges.size(); ++k)
        if (!removed[k]) pruned.edges.push_back(lat.edges[k]);

    RoadNetwork net = build_from_lattice(pruned, g);

    // Obstacles sit beside a road, outside both lanes and the shoulder.
    for (int i = 0; i < options.obstacles && !pruned.edges.empty(); ++i) {
        const auto [a, b] = pruned.edges[rng() % pruned.edges.size()];
        const Vec2 mid = 0.5 * (lat.nodes[a] + lat.nodes[b]);
        const Vec2 u = (lat.nodes[b] - lat.nodes[a]).normalized();
        const double side = (rng() & 1U) ? 1.0 : -1.0;
        const double along = (static_cast<double>(rng() % 1000) / 1000.0 - 0.5) * 0.5 * g.block;
        net.obstacles.push_back({mid + along * u + side * (g.lane_width + 3.0) * right_normal(u), options.obstacle_radius});
    }
    net.validate();
    return net;
}

RoadNetwork transform_network(const RoadNetwork& net, const SE2Transform& t)
{
    RoadNetwork out = net;
    for (auto& s : out.segments)
        for (auto& p : s.centerline) p = t.apply(p);
    for (auto& j : out.junctions) j.center = t.apply(j.center);
    for (auto& o : out.obstacles) o.center = t.apply(o.center);
    return out;
}

PolylineProjection project_onto_polyline(std::span<const Vec2> line, const Vec2& p)
{
    PolylineProjection best;
    best.distance = std::numeric_limits<double>::infinity();
    double arc0 = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Vec2 a = line[i];
        const Vec2 d = line[i + 1] - a;
        const double len2 = d.squaredNorm();
        const double len = std::sqrt(len2);
        const double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q = a + t * d;
        const double dist = (p - q).norm();
        if (dist < best.distance) {
            best.distance = dist;
            best.arc = arc0 + t * len;
            best.offset = cross(d, p - q) >= 0.0 ? dist : -dist;
            best.edge = i;
        }
        arc0 += len;
    }
    return best;
}

Location locate(const RoadNetwork& net, const Vec2& point)
{
    Location loc;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : net.segments) {
        const auto proj = project_onto_polyline(s.centerline, point);
        if (proj.distance < best) {
            best = proj.distance;
            loc = {s.id, proj.arc, proj.offset};
        }
    }
    return loc;
}

bool is_strongly_connected(const RoadNetwork& net)
{
    const std::size_t n = net.segments.size();
    if (n == 0) return true;
    std::vector<std::vector<int>> reverse(n);
    for (const auto& s : net.segments)
        for (int succ : s.successors) reverse[succ].push_back(s.id);
    auto reaches_all = [n](auto&& next) {
        std::vector<bool> seen(n, false);
        std::vector<int> stack{0};
        seen[0] = true;
        std::size_t count = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : next(v))
                if (!seen[w]) {
                    seen[w] = true;
                    ++count;
                    stack.push_back(w);
                }
        }
        return count == n;
    };
    return reaches_all([&](int v) -> const std::vector<int>& { return net.segments[v].successors; }) &&
           reaches_all([&](int v) -> const std::vector<int>& { return reverse[v]; });
}

std::string scene_to_json(const RoadNetwork& net)
{
    using nlohmann::json;
    json doc;
    doc["segments"] = json::array();
    for (const auto& s : net.segments) {
        json pts = json::array();
        for (const auto& p : s.centerline) pts.push_back({p.x(), p.y()});
        doc["segments"].push_back({{"id", s.id},
                                   {"kind", s.kind == SegmentKind::Lane ? "lane" : "connector"},
                                   {"width", s.width},
                                   {"centerline", std::move(pts)},
                                   {"successors", s.successors}});
    }
    doc["junctions"] = json::array();
    for (const auto& j : net.junctions)
        doc["junctions"].push_back(
            {{"center", {j.center.x(), j.center.y()}}, {"segments", j.segments}, {"radius", j.radius}});
    doc["obstacles"] = json::array();
    for (const auto& o : net.obstacles)
        doc["obstacles"].push_back({{"x", o.center.x()}, {"y", o.center.y()}, {"radius", o.radius}});
    return doc.dump();
}

RoadNetwork scene_from_json(const std::string& text)
{
    using nlohmann::json;
    RoadNetwork net;
    try {
        const json doc = json::parse(text);
        for (const auto& js : doc.at("segments")) {
            LaneSegment s;
            s.id = js.at("id").get<int>();
            s.width = js.at("width").get<double>();
            s.kind = js.value("kind", std::string("lane")) == "connector" ? SegmentKind::Connector : SegmentKind::Lane;
            for (const auto& p : js.at("centerline")) s.centerline.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
            s.successors = js.at("successors").get<std::vector<int>>();
            net.segments.push_back(std::move(s));
        }
        for (const auto& jj : doc.at("junctions")) {
            Junction j;
            j.center = {jj.at("center").at(0).get<double>(), jj.at("center").at(1).get<double>()};
            j.segments = jj.at("segments").get<std::vector<int>>();
            j.radius = jj.at("radius").get<double>();
            net.junctions.push_back(std::move(j));
        }
        for (const auto& jo : doc.at("obstacles"))
            net.obstacles.push_back({{jo.at("x").get<double>(), jo.at("y").get<double>()}, jo.at("radius").get<double>()});
    } catch (const json::exception& e) {
        throw SceneFormatError(e.what());
    }
    std::sort(net.segments.begin(), net.segments.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    net.validate();
    return net;
}

void save_scene(const RoadNetwork& net, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw SceneFormatError("cannot write " + path.string());
    out << scene_to_json(net);
}

RoadNetwork load_scene(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw SceneFormatError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return scene_from_json(ss.str());
}

} // namespace yawdrive
