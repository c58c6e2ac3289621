#pragma once

#include <numbers>
#include <random>
#include <utility>

#include "yawdrive/guidance.hpp"
#include "yawdrive/simulate.hpp"

namespace yawdrive {

struct ExpertParams
{
    double lookahead = 5.0;
    double cruise_speed = 8.0;
    double turn_speed = 4.0;
    double speed_gain = 0.5;
    double noise_prob = 0.1;
    double noise_sigma = 0.3;
    double preview_distance = 20.0;
    double turn_yaw_threshold = std::numbers::pi / 8.0;

    friend bool operator==(const ExpertParams&, const ExpertParams&) = default;
};

/// Pure pursuit toward `target`, normalized by `max_steer` and clamped to
/// [-1, 1]. A target behind the vehicle saturates toward its side.
double pure_pursuit_steer(const Pose2D& pose, const Vec2& target, double wheelbase, double max_steer);

struct Pedals
{
    double throttle = 0.0;
    double brake = 0.0;
};

/// Proportional speed control; throttle and brake are never both non-zero.
Pedals longitudinal_control(double v, double v_target, double gain);

Action expert_action(const VehicleState& state, const Route& route, const ExpertParams& params,
                     const VehicleParams& vehicle = {});

struct NoisyAction
{
    Action executed;
    bool noised = false;
};

/// Gaussian steer perturbation applied with probability `prob`.
NoisyAction inject_control_noise(const Action& action, std::mt19937_64& rng, double prob, double sigma);

/// Noise-free scripted driver used for gating and as a reference policy.
class ExpertDriver : public Driver
{
  public:
    explicit ExpertDriver(ExpertParams params = {}, VehicleParams vehicle = {}) : params_(params), vehicle_(vehicle) {}

    Action act(const DrivingContext& ctx) override { return expert_action(ctx.state, ctx.route, params_, vehicle_); }

  private:
    ExpertParams params_;
    VehicleParams vehicle_;
};

} // namespace yawdrive
