#include "yawdrive/expert.hpp"

#include <algorithm>
#include <cmath>

#include "yawdrive/errors.hpp"

namespace yawdrive {

double pure_pursuit_steer(const Pose2D& pose, const Vec2& target, double wheelbase, double max_steer)
{
    const Vec2 d = target - pose.position();
    const double dist = d.norm();
    if (dist == 0.0) throw DegenerateTarget("target coincides with the vehicle position");
    const double alpha = wrap_angle(std::atan2(d.y(), d.x()) - pose.yaw);
    if (std::abs(alpha) >= std::numbers::pi / 2.0) return alpha >= 0.0 ? 1.0 : -1.0;
    const double delta = std::atan(2.0 * wheelbase * std::sin(alpha) / dist);
    return std::clamp(delta / max_steer, -1.0, 1.0);
}

Pedals longitudinal_control(double v, double v_target, double gain)
{
    const double e = v_target - v;
    if (e >= 0.0) return {std::clamp(gain * e, 0.0, 1.0), 0.0};
    return {0.0, std::clamp(-gain * e, 0.0, 1.0)};
}

Action expert_action(const VehicleState& state, const Route& route, const ExpertParams& params,
                     const VehicleParams& vehicle)
{
    const auto& wp = route.waypoints;
    if (wp.size() < 2) throw InvalidRoute("expert needs a route with two waypoints");
    const std::size_t anchor = route_anchor(route, state.pose);
    const Vec2 p = state.pose.position();

    std::size_t target = wp.size() - 1;
    for (std::size_t i = anchor; i < wp.size(); ++i)
        if ((wp[i] - p).norm() >= params.lookahead) {
            target = i;
            break;
        }

    const std::size_t base = std::min(anchor, wp.size() - 2);
    const double yaw0 = yaw_of_segment(wp[base], wp[base + 1]);
    const auto preview = static_cast<std::size_t>(std::ceil(params.preview_distance / route.spacing));
    double max_turn = 0.0;
    for (std::size_t i = base; i + 1 < wp.size() && i <= base + preview; ++i)
        max_turn = std::max(max_turn, std::abs(wrap_angle(yaw_of_segment(wp[i], wp[i + 1]) - yaw0)));
    const double v_target = max_turn > params.turn_yaw_threshold ? params.turn_speed : params.cruise_speed;

    Action a;
    a.steer = (wp[target] - p).norm() > 0.0 ? pure_pursuit_steer(state.pose, wp[target], vehicle.wheelbase, vehicle.max_steer)
                                             : 0.0;
    const Pedals pedals = longitudinal_control(state.speed, v_target, params.speed_gain);
    a.throttle = pedals.throttle;
    a.brake = pedals.brake;
    return a;
}

NoisyAction inject_control_noise(const Action& action, std::mt19937_64& rng, double prob, double sigma)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    NoisyAction out{action, false};
    if (unit(rng) < prob) {
        out.noised = true;
        if (sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, sigma);
            out.executed.steer = std::clamp(action.steer + noise(rng), -1.0, 1.0);
        }
    }
    return out;
}

} // namespace yawdrive
