#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "yawdrive/autodiff.hpp"
#include "yawdrive/dataset.hpp"
#include "yawdrive/simulate.hpp"

namespace yawdrive {

enum class PolicyKind : std::uint8_t
{
    YawGuided,
    XYGuided,
    CommandBranch
};

std::string_view to_string(PolicyKind k); // "yaw", "xy", "cil"
PolicyKind parse_policy_kind(std::string_view s);

struct PolicySpec
{
    PolicyKind kind = PolicyKind::YawGuided;
    int stem = 16;
    std::array<int, 3> stages{16, 32, 64};
    int d = 64; // global feature width and attention projection width
    int encoder = 64;
    int joint1 = 256;
    int joint2 = 128;
    int branches = kCommandCount;
    int guide_samples = 5;

    int guidance_width() const
    {
        switch (kind) {
        case PolicyKind::YawGuided: return guide_samples;
        case PolicyKind::XYGuided: return 2 * guide_samples;
        case PolicyKind::CommandBranch: return 0;
        }
        return 0;
    }
    int perception_width() const { return 3 * d; }
};

/// Freshly initialized (He-normal, zero bias) weights for `spec`.
ParameterSet<double> make_weights(const PolicySpec& spec, std::uint64_t seed);

/// Recovers the spec from weight names and shapes; ShapeError if they match no kind.
PolicySpec infer_spec(const ParameterSet<double>& weights);

using Guidance = std::variant<YawVector, XYVector, Command>;

/// Network-ready batch: raster [N,3,64,64], speed / 10 [N,1], normalized
/// guidance [N,G] (yaw / pi, or scaled XY) and commands.
struct PolicyBatch
{
    Tensord raster;
    Tensord speed;
    Tensord guide;
    Tensord label_action;
    Tensord label_speed; // m/s
    std::vector<int> commands;

    int size() const { return raster.rank() ? raster.dim(0) : 0; }
};

PolicyBatch make_batch(const PolicySpec& spec, const Dataset& data, std::span<const std::size_t> indices);

struct NetworkOutputs
{
    Var action; // squashed [N,3]
    Var speed;  // m/s [N,1]
    std::array<Var, 3> attention; // [N, H_l * W_l] per tap
    std::array<int, 3> tap_side{};
};

NetworkOutputs build_network(Graph<double>& g, ParameterSet<double>& weights, const PolicySpec& spec,
                             const PolicyBatch& batch);

struct Prediction
{
    Action action;
    double speed = 0.0;
    std::array<std::vector<double>, 3> attention;
    std::array<int, 3> tap_side{};
};

/// Single-frame inference. Throws ConditioningError if the guidance type
/// does not match the spec.
Prediction forward(const PolicySpec& spec, const ParameterSet<double>& weights, const Observation& obs, double speed,
                   const Guidance& guidance);

struct TrainConfig
{
    int epochs = 30;
    int batch = 64;
    double lr = 1e-3;
    int halving = 10;
    double alpha = 1.0;
    double beta = 0.1;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    std::size_t epoch_samples = 0; // training frames drawn per epoch, 0 = all
};

struct LossPoint
{
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult
{
    ParameterSet<double> weights; // lowest validation loss
    std::vector<LossPoint> curve;
    int best_epoch = 0;
};

TrainResult train(const PolicySpec& spec, const Dataset& data, std::span<const std::size_t> indices,
                  const TrainConfig& cfg, const std::function<void(const LossPoint&)>& progress = {});

/// Composite loss of `weights` over `indices`, evaluated in batches.
double dataset_loss(const PolicySpec& spec, const ParameterSet<double>& weights, const Dataset& data,
                    std::span<const std::size_t> indices, double alpha, double beta, int batch = 64);

void write_loss_curve_csv(std::span<const LossPoint> curve, const std::filesystem::path& path);

struct OpenLoopError
{
    double steer = 0.0;
    double throttle = 0.0;
    double brake = 0.0;
    double speed = 0.0;
};

OpenLoopError evaluate_openloop(const PolicySpec& spec, const ParameterSet<double>& weights, const Dataset& data,
                                std::span<const std::size_t> indices);

/// Perturbations applied to the guidance a policy sees in closed loop.
struct GuidanceNoise
{
    double yaw_sigma = 0.0;     // radians, per element of the yaw vector
    double xy_sigma = 0.0;      // meters, per waypoint coordinate
    double command_prob = 0.0;  // per-step chance to start a wrong-command window
    int command_window = 5;
};

/// Closed-loop driver: rasterize, build guidance from the live route, run
/// the network. Holds no state across steps beyond the noise generator.
class PolicyDriver : public Driver
{
  public:
    PolicyDriver(PolicySpec spec, std::shared_ptr<const ParameterSet<double>> weights, GuidanceNoise noise = {},
                 GuidanceConfig guidance = {});

    void reset(std::uint64_t seed) override;
    Action act(const DrivingContext& ctx) override;

    /// Guidance for the current step, noise included.
    Guidance guidance(const DrivingContext& ctx);
    /// Steps on which the command was replaced, in order of occurrence.
    const std::vector<bool>& corrupted() const { return corrupted_; }

  private:
    PolicySpec spec_;
    std::shared_ptr<const ParameterSet<double>> weights_;
    GuidanceNoise noise_;
    GuidanceConfig guidance_;
    std::mt19937_64 rng_;
    int window_left_ = 0;
    Command wrong_ = Command::LaneFollow;
    std::vector<bool> corrupted_;
};

DriverFactory as_driving_policy(const PolicySpec& spec, std::shared_ptr<const ParameterSet<double>> weights,
                                const GuidanceNoise& noise = {});

} // namespace yawdrive
