#include "yawdrive/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "yawdrive/layers.hpp"
#include "yawdrive/optim.hpp"

namespace yawdrive {

namespace {

using G = Graph<double>;

constexpr double kSpeedDivisor = 10.0;

std::string stage_name(int i) { return "s" + std::to_string(i + 1); }

void add_conv(ParameterSet<double>& p, const std::string& name, int out, int in, int k)
{
    p.add(name + ".w", {out, in, k, k});
    p.add(name + ".b", {out});
}

void add_dense(ParameterSet<double>& p, const std::string& name, int out, int in)
{
    p.add(name + ".w", {out, in});
    p.add(name + ".b", {out});
}

Var conv(G& g, ParameterSet<double>& p, const std::string& name, Var x, int stride, int pad)
{
    return nn::conv2d(g, x, g.param(p.at(name + ".w")), g.param(p.at(name + ".b")), stride, pad);
}

Var dense(G& g, ParameterSet<double>& p, const std::string& name, Var x)
{
    return nn::dense(g, x, g.param(p.at(name + ".w")), g.param(p.at(name + ".b")));
}

Var residual_block(G& g, ParameterSet<double>& p, const std::string& name, Var x, int stride)
{
    auto param = [&](const std::string& n) { return g.param(p.at(name + n)); };
    const bool projected = p.contains(name + ".short.w");
    return nn::residual_block(g, x, param(".conv1.w"), param(".conv1.b"), param(".conv2.w"), param(".conv2.b"), stride,
                              projected ? param(".short.w") : Var{}, projected ? param(".short.b") : Var{});
}

void fill_guidance(const PolicySpec& spec, const Guidance& guidance, double* out)
{
    switch (spec.kind) {
    case PolicyKind::YawGuided: {
        const auto* y = std::get_if<YawVector>(&guidance);
        if (!y) throw ConditioningError("yaw-guided policy needs a yaw vector");
        if (static_cast<int>(y->values.size()) != spec.guide_samples) throw ConditioningError("yaw vector length mismatch");
        for (int i = 0; i < spec.guide_samples; ++i) out[i] = y->values[i] / std::numbers::pi;
        return;
    }
    case PolicyKind::XYGuided: {
        const auto* xy = std::get_if<XYVector>(&guidance);
        if (!xy) throw ConditioningError("xy-guided policy needs an xy vector");
        if (static_cast<int>(xy->values.size()) != spec.guide_samples) throw ConditioningError("xy vector length mismatch");
        for (int i = 0; i < spec.guide_samples; ++i) {
            out[2 * i] = xy->values[i].x();
            out[2 * i + 1] = xy->values[i].y();
        }
        return;
    }
    case PolicyKind::CommandBranch:
        if (!std::holds_alternative<Command>(guidance)) throw ConditioningError("command-branch policy needs a command");
        return;
    }
}

} // namespace

std::string_view to_string(PolicyKind k)
{
    switch (k) {
    case PolicyKind::YawGuided: return "yaw";
    case PolicyKind::XYGuided: return "xy";
    case PolicyKind::CommandBranch: return "cil";
    }
    return "?";
}

PolicyKind parse_policy_kind(std::string_view s)
{
    if (s == "yaw") return PolicyKind::YawGuided;
    if (s == "xy") return PolicyKind::XYGuided;
    if (s == "cil") return PolicyKind::CommandBranch;
    throw ConditioningError("unknown policy kind '" + std::string(s) + "'");
}

ParameterSet<double> make_weights(const PolicySpec& spec, std::uint64_t seed)
{
    ParameterSet<double> p;
    add_conv(p, "stem", spec.stem, Observation::kChannels, 3);
    int in = spec.stem;
    for (int s = 0; s < 3; ++s) {
        const int out = spec.stages[s];
        const std::string name = stage_name(s);
        add_conv(p, name + ".conv1", out, in, 3);
        add_conv(p, name + ".conv2", out, out, 3);
        if (s > 0 || out != in) add_conv(p, name + ".short", out, in, 1);
        in = out;
    }
    if (spec.stages[2] != spec.d) throw ShapeError("last stage width must equal the global feature width");
    for (int s = 0; s < 3; ++s) {
        const std::string name = "att" + std::to_string(s + 1);
        add_conv(p, name + ".proj", spec.d, spec.stages[s], 1);
        p.add(name + ".theta", {spec.d});
    }
    add_dense(p, "speed_head.fc1", spec.encoder, spec.perception_width());
    add_dense(p, "speed_head.fc2", 1, spec.encoder);
    add_dense(p, "speed_enc", spec.encoder, 1);
    if (spec.kind == PolicyKind::CommandBranch) {
        add_dense(p, "joint.fc1", spec.joint1, spec.perception_width() + spec.encoder);
        for (int b = 0; b < spec.branches; ++b) {
            const std::string name = "branch" + std::to_string(b);
            add_dense(p, name + ".fc2", spec.joint2, spec.joint1);
            add_dense(p, name + ".out", 3, spec.joint2);
        }
    } else {
        add_dense(p, "guide_enc", spec.encoder, spec.guidance_width());
        add_dense(p, "joint.fc1", spec.joint1, spec.perception_width() + 2 * spec.encoder);
        add_dense(p, "joint.fc2", spec.joint2, spec.joint1);
        add_dense(p, "joint.out", 3, spec.joint2);
    }
    init_he_normal(p, seed);
    return p;
}

PolicySpec infer_spec(const ParameterSet<double>& weights)
{
    PolicySpec spec;
    if (weights.contains("branch0.out.w")) {
        spec.kind = PolicyKind::CommandBranch;
    } else if (weights.contains("guide_enc.w")) {
        const int width = weights.at("guide_enc.w").value.dim(1);
        spec.kind = width == spec.guide_samples ? PolicyKind::YawGuided : PolicyKind::XYGuided;
    } else {
        throw ShapeError("weights match no policy architecture");
    }
    const auto reference = make_weights(spec, 0);
    if (reference.size() != weights.size()) throw ShapeError("weights have an unexpected tensor count");
    for (const auto& r : reference) {
        if (!weights.contains(r.name)) throw ShapeError("missing tensor " + r.name);
        if (weights.at(r.name).value.shape() != r.value.shape())
            throw ShapeError("tensor " + r.name + " has shape " + shape_string(weights.at(r.name).value.shape()));
    }
    return spec;
}

PolicyBatch make_batch(const PolicySpec& spec, const Dataset& data, std::span<const std::size_t> indices)
{
    const int n = static_cast<int>(indices.size());
    const int gw = spec.guidance_width();
    PolicyBatch b;
    b.raster = Tensord({n, Observation::kChannels, Observation::kSize, Observation::kSize});
    b.speed = Tensord({n, 1});
    b.guide = Tensord({n, std::max(gw, 1)});
    b.label_action = Tensord({n, 3});
    b.label_speed = Tensord({n, 1});
    for (int i = 0; i < n; ++i) {
        const Record& r = data.records.at(indices[i]);
        double* dst = b.raster.ptr() + static_cast<std::ptrdiff_t>(i) * Observation::kCells;
        std::copy(r.obs.raster.begin(), r.obs.raster.end(), dst);
        b.speed[i] = r.speed / kSpeedDivisor;
        b.label_speed[i] = r.speed;
        for (int j = 0; j < 3; ++j) b.label_action[3 * i + j] = r.action[j];
        if (spec.kind == PolicyKind::YawGuided)
            for (int j = 0; j < gw; ++j) b.guide[i * gw + j] = r.yaw_guide[j] / std::numbers::pi;
        else if (spec.kind == PolicyKind::XYGuided)
            for (int j = 0; j < gw; ++j) b.guide[i * gw + j] = r.xy_guide[j];
        b.commands.push_back(static_cast<int>(r.command));
    }
    return b;
}

NetworkOutputs build_network(G& g, ParameterSet<double>& p, const PolicySpec& spec, const PolicyBatch& batch)
{
    NetworkOutputs out;
    Var x = g.constant(batch.raster);
    x = nn::relu(g, conv(g, p, "stem", x, 2, 1));
    std::array<Var, 3> stages;
    for (int s = 0; s < 3; ++s) {
        x = residual_block(g, p, stage_name(s), x, s == 0 ? 1 : 2);
        stages[s] = x;
    }
    const Var global = nn::global_avg_pool(g, stages[2]);

    std::vector<Var> attended;
    for (int s = 0; s < 3; ++s) {
        const std::string name = "att" + std::to_string(s + 1);
        const Var local = conv(g, p, name + ".proj", stages[s], 1, 0);
        out.attention[s] = nn::attention_scores(g, local, global, g.param(p.at(name + ".theta")));
        out.tap_side[s] = g.value(local).dim(2);
        attended.push_back(nn::attended_feature(g, local, out.attention[s]));
    }
    const Var perception = nn::concat(g, attended);

    const Var speed_hidden = nn::relu(g, dense(g, p, "speed_head.fc1", perception));
    out.speed = nn::scale(g, dense(g, p, "speed_head.fc2", speed_hidden), kSpeedDivisor);

    const Var speed_code = nn::relu(g, dense(g, p, "speed_enc", g.constant(batch.speed)));
    if (spec.kind == PolicyKind::CommandBranch) {
        const Var joint = nn::relu(g, dense(g, p, "joint.fc1", nn::concat(g, {perception, speed_code})));
        std::vector<Var> heads;
        for (int b = 0; b < spec.branches; ++b) {
            const std::string name = "branch" + std::to_string(b);
            const Var h = nn::relu(g, dense(g, p, name + ".fc2", joint));
            heads.push_back(dense(g, p, name + ".out", h));
        }
        out.action = nn::squash_action(g, nn::select_rows(g, heads, std::span<const int>(batch.commands)));
    } else {
        const Var guide_code = nn::relu(g, dense(g, p, "guide_enc", g.constant(batch.guide)));
        Var h = nn::relu(g, dense(g, p, "joint.fc1", nn::concat(g, {perception, speed_code, guide_code})));
        h = nn::relu(g, dense(g, p, "joint.fc2", h));
        out.action = nn::squash_action(g, dense(g, p, "joint.out", h));
    }
    return out;
}

Prediction forward(const PolicySpec& spec, const ParameterSet<double>& weights, const Observation& obs, double speed,
                   const Guidance& guidance)
{
    PolicyBatch b;
    const int gw = spec.guidance_width();
    b.raster = Tensord({1, Observation::kChannels, Observation::kSize, Observation::kSize});
    std::copy(obs.raster.begin(), obs.raster.end(), b.raster.ptr());
    b.speed = Tensord({1, 1}, speed / kSpeedDivisor);
    b.guide = Tensord({1, std::max(gw, 1)});
    fill_guidance(spec, guidance, b.guide.ptr());
    b.commands = {static_cast<int>(std::holds_alternative<Command>(guidance) ? std::get<Command>(guidance)
                                                                              : Command::LaneFollow)};

    G g;
    g.record = false;
    // Parameters are only read; the graph copies their values.
    auto& params = const_cast<ParameterSet<double>&>(weights);
    const NetworkOutputs out = build_network(g, params, spec, b);
    Prediction pred;
    const auto& a = g.value(out.action);
    pred.action = {std::clamp(a[0], -1.0, 1.0), std::clamp(a[1], 0.0, 1.0), std::clamp(a[2], 0.0, 1.0)};
    pred.speed = g.value(out.speed)[0];
    for (int s = 0; s < 3; ++s) {
        const auto& w = g.value(out.attention[s]).data();
        pred.attention[s].assign(w.data(), w.data() + w.size());
        pred.tap_side[s] = out.tap_side[s];
    }
    return pred;
}

double dataset_loss(const PolicySpec& spec, const ParameterSet<double>& weights, const Dataset& data,
                    std::span<const std::size_t> indices, double alpha, double beta, int batch)
{
    if (indices.empty()) throw EmptyDataset("no frames to evaluate");
    auto& params = const_cast<ParameterSet<double>&>(weights);
    double total = 0.0;
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
        const auto chunk = indices.subspan(start, std::min<std::size_t>(static_cast<std::size_t>(batch), indices.size() - start));
        const PolicyBatch b = make_batch(spec, data, chunk);
        G g;
        g.record = false;
        const auto out = build_network(g, params, spec, b);
        const Var loss = nn::composite_l1_loss(g, out.action, b.label_action, out.speed, b.label_speed, alpha, beta);
        total += g.value(loss)[0] * static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(indices.size());
}

TrainResult train(const PolicySpec& spec, const Dataset& data, std::span<const std::size_t> indices,
                  const TrainConfig& cfg, const std::function<void(const LossPoint&)>& progress)
{
    if (indices.empty()) throw EmptyDataset("training split is empty");
    if (cfg.epochs <= 0 || cfg.batch <= 0 || cfg.lr <= 0.0 || cfg.halving <= 0 || !(cfg.val_fraction > 0.0) ||
        cfg.val_fraction > 0.5)
        throw ShapeError("invalid training configuration");

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(indices.begin(), indices.end());
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val =
        order.size() >= 2 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.val_fraction * order.size())))
                          : 0;
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    TrainResult result;
    ParameterSet<double> weights = make_weights(spec, cfg.seed);
    AdamState<double> adam;
    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = learning_rate(cfg.lr, cfg.halving, epoch);
        std::shuffle(fit.begin(), fit.end(), rng);
        const std::size_t used = cfg.epoch_samples ? std::min(cfg.epoch_samples, fit.size()) : fit.size();
        double train_total = 0.0;
        for (std::size_t start = 0; start < used; start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), used - start);
            const PolicyBatch b = make_batch(spec, data, std::span<const std::size_t>(fit).subspan(start, count));
            weights.zero_grad();
            G g;
            const auto out = build_network(g, weights, spec, b);
            const Var loss = nn::composite_l1_loss(g, out.action, b.label_action, out.speed, b.label_speed, cfg.alpha, cfg.beta);
            g.backward(loss);
            adam_step(weights, adam, lr);
            train_total += g.value(loss)[0] * static_cast<double>(count);
        }
        LossPoint point{epoch, train_total / static_cast<double>(used), 0.0, lr};
        point.val_loss = val.empty() ? point.train_loss : dataset_loss(spec, weights, data, val, cfg.alpha, cfg.beta, cfg.batch);
        result.curve.push_back(point);
        if (point.val_loss < best) {
            best = point.val_loss;
            result.weights = weights;
            result.best_epoch = epoch;
        }
        if (progress) progress(point);
    }
    return result;
}

void write_loss_curve_csv(std::span<const LossPoint> curve, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw WriteError("cannot open " + path.string());
    out << "epoch,train_loss,val_loss,lr\n";
    out.precision(17);
    for (const auto& p : curve) out << p.epoch << ',' << p.train_loss << ',' << p.val_loss << ',' << p.lr << '\n';
    if (!out) throw WriteError("failed writing " + path.string());
}

OpenLoopError evaluate_openloop(const PolicySpec& spec, const ParameterSet<double>& weights, const Dataset& data,
                                std::span<const std::size_t> indices)
{
    if (indices.empty()) throw EmptyDataset("no frames to evaluate");
    auto& params = const_cast<ParameterSet<double>&>(weights);
    OpenLoopError e;
    constexpr std::size_t kBatch = 64;
    for (std::size_t start = 0; start < indices.size(); start += kBatch) {
        const auto chunk = indices.subspan(start, std::min(kBatch, indices.size() - start));
        const PolicyBatch b = make_batch(spec, data, chunk);
        G g;
        g.record = false;
        const auto out = build_network(g, params, spec, b);
        const auto& a = g.value(out.action);
        const auto& s = g.value(out.speed);
        for (int i = 0; i < b.size(); ++i) {
            e.steer += std::abs(a[3 * i] - b.label_action[3 * i]);
            e.throttle += std::abs(a[3 * i + 1] - b.label_action[3 * i + 1]);
            e.brake += std::abs(a[3 * i + 2] - b.label_action[3 * i + 2]);
            e.speed += std::abs(s[i] - b.label_speed[i]);
        }
    }
    const double n = static_cast<double>(indices.size());
    e.steer /= n;
    e.throttle /= n;
    e.brake /= n;
    e.speed /= n;
    return e;
}

PolicyDriver::PolicyDriver(PolicySpec spec, std::shared_ptr<const ParameterSet<double>> weights, GuidanceNoise noise,
                           GuidanceConfig guidance)
    : spec_(spec), weights_(std::move(weights)), noise_(noise), guidance_(guidance)
{
    if (!weights_) throw ShapeError("policy driver without weights");
}

void PolicyDriver::reset(std::uint64_t seed)
{
    rng_.seed(seed);
    window_left_ = 0;
    corrupted_.clear();
}

Guidance PolicyDriver::guidance(const DrivingContext& ctx)
{
    const Pose2D& pose = ctx.state.pose;
    const int k = spec_.guide_samples;
    switch (spec_.kind) {
    case PolicyKind::YawGuided: {
        YawVector y = yaw_guidance(trajectory_yaws(ctx.route, pose, k));
        if (noise_.yaw_sigma > 0.0) {
            std::normal_distribution<double> n(0.0, noise_.yaw_sigma);
            for (double& v : y.values) v = wrap_angle(v + n(rng_));
        }
        return y;
    }
    case PolicyKind::XYGuided: {
        XYVector xy = xy_guidance(ctx.route, pose, k, guidance_.xy_scale);
        if (noise_.xy_sigma > 0.0) {
            std::normal_distribution<double> n(0.0, noise_.xy_sigma);
            for (Vec2& v : xy.values) v += guidance_.xy_scale * Vec2(n(rng_), n(rng_));
        }
        return xy;
    }
    case PolicyKind::CommandBranch: {
        const Command truth = command_label(ctx.net, ctx.route, pose, guidance_.command_horizon, guidance_.turn_threshold);
        if (window_left_ == 0 && noise_.command_prob > 0.0 &&
            std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < noise_.command_prob) {
            int c = static_cast<int>(rng_() % (kCommandCount - 1));
            if (c >= static_cast<int>(truth)) ++c;
            wrong_ = static_cast<Command>(c);
            window_left_ = noise_.command_window;
        }
        const bool corrupt = window_left_ > 0;
        corrupted_.push_back(corrupt);
        if (corrupt) {
            --window_left_;
            return wrong_;
        }
        return truth;
    }
    }
    return Command::LaneFollow;
}

Action PolicyDriver::act(const DrivingContext& ctx)
{
    const Guidance gd = guidance(ctx);
    return forward(spec_, *weights_, rasterize(ctx.net, ctx.state), ctx.state.speed, gd).action;
}

DriverFactory as_driving_policy(const PolicySpec& spec, std::shared_ptr<const ParameterSet<double>> weights,
                                const GuidanceNoise& noise)
{
    return [spec, weights, noise]() { return std::make_unique<PolicyDriver>(spec, weights, noise); };
}

} // namespace yawdrive
