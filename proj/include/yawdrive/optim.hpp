#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "yawdrive/autodiff.hpp"

namespace yawdrive {

struct AdamConfig
{
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct AdamState
{
    std::vector<Tensor<Scalar>> m;
    std::vector<Tensor<Scalar>> v;
    long step = 0;
};

/// One Adam update with bias correction. The state is sized lazily on the
/// first call.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, AdamState<Scalar>& state, Scalar lr, const AdamConfig& cfg = {})
{
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value.shape());
            state.v.emplace_back(p.value.shape());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam state does not match parameter count");
    ++state.step;
    const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape())
            throw ShapeError("adam: shape mismatch for " + p.name);
        m.data() = b1 * m.data() + (Scalar(1) - b1) * p.grad.data();
        v.data() = b2 * v.data() + (Scalar(1) - b2) * p.grad.data().cwiseAbs2();
        p.value.data().array() -=
            lr * (m.data().array() / c1) / ((v.data().array() / c2).sqrt() + static_cast<Scalar>(cfg.eps));
    }
}

/// Step schedule: the rate halves every `period` epochs.
inline double learning_rate(double initial, int period, int epoch)
{
    return initial * std::pow(0.5, epoch / period);
}

struct GradCheckReport
{
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped = 0; // probes whose +-h evaluation crossed a kink
};

/// Compares analytic parameter gradients of the scalar built by `loss`
/// against central differences on up to `probes_per_param` random
/// coordinates of every parameter.
inline GradCheckReport grad_check(ParameterSet<double>& params,
                                  const std::function<Var(Graph<double>&)>& loss, int probes_per_param = 5,
                                  double h = 1e-5, std::uint64_t seed = 7)
{
    auto evaluate = [&](std::uint64_t& digest) {
        Graph<double> g;
        g.record = false;
        g.track_kinks = true;
        const double v = g.value(loss(g))[0];
        digest = g.kink_digest;
        return v;
    };

    params.zero_grad();
    std::uint64_t base_digest = 0;
    {
        Graph<double> g;
        g.track_kinks = true;
        g.backward(loss(g));
        base_digest = g.kink_digest;
    }

    GradCheckReport report;
    std::mt19937_64 rng(seed);
    for (auto& p : params) {
        const Eigen::Index n = p.value.size();
        for (int k = 0; k < probes_per_param && k < n; ++k) {
            const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
            const double saved = p.value[i];
            std::uint64_t dp = 0, dm = 0;
            p.value[i] = saved + h;
            const double lp = evaluate(dp);
            p.value[i] = saved - h;
            const double lm = evaluate(dm);
            p.value[i] = saved;
            if (dp != base_digest || dm != base_digest) {
                ++report.skipped;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = p.grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic - numeric) / denom);
            ++report.checked;
        }
    }
    return report;
}

/// He-normal initialization (fan-in = trailing dims, or the length of a
/// vector); biases named "*.b" start at zero.
template <typename Scalar>
void init_he_normal(ParameterSet<Scalar>& params, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (auto& p : params) {
        const bool bias = p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0;
        if (bias) {
            p.value.set_zero();
            continue;
        }
        int fan_in = p.value.rank() == 1 ? static_cast<int>(p.value.size()) : 1;
        for (int d = 1; d < p.value.rank(); ++d) fan_in *= p.value.dim(d);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<Scalar>(dist(rng));
    }
}

} // namespace yawdrive
