#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "yawdrive/errors.hpp"
#include "yawdrive/layers.hpp"
#include "yawdrive/optim.hpp"
#include "yawdrive/weights.hpp"

using namespace yawdrive;

namespace {

Tensord random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0)
{
    Tensord t(shape);
    std::normal_distribution<double> n(0.0, scale);
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = n(rng);
    return t;
}

Parameter<double>& add_random(ParameterSet<double>& p, const std::string& name, const Shape& shape, std::mt19937_64& rng,
                              double scale = 1.0)
{
    auto& param = p.add(name, shape);
    param.value = random_tensor(shape, rng, scale);
    return param;
}

// Scalar probe of an op output: loss = sum(out * r) with a fixed random r.
GradCheckReport check_op(ParameterSet<double>& p, const std::function<Var(Graph<double>&)>& op, std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    Tensord r;
    return grad_check(
        p,
        [&](Graph<double>& g) {
            const Var out = op(g);
            if (r.size() != g.value(out).size()) r = random_tensor(g.value(out).shape(), rng);
            return nn::probe(g, out, r);
        },
        5);
}

Var P(Graph<double>& g, ParameterSet<double>& p, const std::string& name) { return g.param(p.at(name)); }

} // namespace

TEST_CASE("conv2d with an identity kernel returns its input")
{
    std::mt19937_64 rng(1);
    Graph<double> g;
    const Var x = g.constant(random_tensor({2, 3, 5, 6}, rng));
    Tensord w({3, 3, 3, 3});
    for (int c = 0; c < 3; ++c) w[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    const Var y = nn::conv2d(g, x, g.constant(w), g.constant(Tensord({3})), 1, 1);
    CHECK(g.value(y) == g.value(x));
}

TEST_CASE("conv2d shape arithmetic and errors")
{
    Graph<double> g;
    const Var x = g.constant(Tensord({1, 2, 8, 8}));
    CHECK(g.value(nn::conv2d(g, x, g.constant(Tensord({4, 2, 3, 3})), g.constant(Tensord({4})), 2, 1)).shape() ==
          Shape{1, 4, 4, 4});
    CHECK_THROWS_AS(nn::conv2d(g, x, g.constant(Tensord({4, 3, 3, 3})), g.constant(Tensord({4})), 1, 1), ShapeError);
    CHECK_THROWS_AS(nn::dense(g, g.constant(Tensord({2, 3})), g.constant(Tensord({4, 5})), g.constant(Tensord({4}))),
                    ShapeError);
}

TEST_CASE("relu zeroes negatives")
{
    Graph<double> g;
    const Var y = nn::relu(g, g.constant(Tensord({4}, Tensord::Vector::LinSpaced(4, -3.0, -0.5))));
    CHECK(g.value(y).data().isZero());
}

TEST_CASE("layer gradients match central differences")
{
    std::mt19937_64 rng(7);

    SUBCASE("dense (linear, tight)")
    {
        ParameterSet<double> p;
        add_random(p, "x", {3, 6}, rng);
        add_random(p, "w", {4, 6}, rng);
        add_random(p, "b", {4}, rng);
        const auto r = check_op(p, [&](auto& g) { return nn::dense(g, P(g, p, "x"), P(g, p, "w"), P(g, p, "b")); });
        CHECK(r.checked > 0);
        CHECK(r.max_rel_error < 1e-7);
    }
    for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 2, 0}, std::tuple{1, 1, 0}}) {
        CAPTURE(k);
        CAPTURE(stride);
        ParameterSet<double> p;
        add_random(p, "x", {2, 3, 7, 6}, rng);
        add_random(p, "w", {4, 3, k, k}, rng);
        add_random(p, "b", {4}, rng);
        const auto r = check_op(p, [&](auto& g) {
            return nn::conv2d(g, P(g, p, "x"), P(g, p, "w"), P(g, p, "b"), stride, pad);
        });
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("activations, pooling, concat, squash")
    {
        ParameterSet<double> p;
        add_random(p, "x", {2, 3, 4, 4}, rng);
        add_random(p, "y", {2, 3, 4, 4}, rng);
        add_random(p, "a", {3, 2}, rng);
        add_random(p, "c", {3, 4}, rng);
        add_random(p, "s", {5, 3}, rng);
        CHECK(check_op(p, [&](auto& g) { return nn::relu(g, P(g, p, "x")); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::tanh(g, P(g, p, "x")); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::sigmoid(g, P(g, p, "x")); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::add(g, P(g, p, "x"), P(g, p, "y")); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::scale(g, P(g, p, "x"), 2.5); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::global_avg_pool(g, P(g, p, "x")); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::concat(g, {P(g, p, "a"), P(g, p, "c")}); }).max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) { return nn::squash_action(g, P(g, p, "s")); }).max_rel_error < 1e-4);
    }
    SUBCASE("attention scores and attended feature jointly")
    {
        ParameterSet<double> p;
        add_random(p, "f", {2, 4, 3, 3}, rng);
        add_random(p, "g", {2, 4}, rng);
        add_random(p, "theta", {4}, rng);
        const auto r = check_op(p, [&](auto& g) {
            const Var f = P(g, p, "f");
            const Var w = nn::attention_scores(g, f, P(g, p, "g"), P(g, p, "theta"));
            return nn::attended_feature(g, f, w);
        });
        CHECK(r.max_rel_error < 1e-4);
        CHECK(check_op(p, [&](auto& g) {
                  return nn::attention_scores(g, P(g, p, "f"), P(g, p, "g"), P(g, p, "theta"));
              }).max_rel_error < 1e-4);
    }
    SUBCASE("select_rows and the composite loss")
    {
        ParameterSet<double> p;
        add_random(p, "h0", {4, 3}, rng);
        add_random(p, "h1", {4, 3}, rng);
        add_random(p, "s", {4, 1}, rng);
        const std::vector<int> sel{1, 0, 1, 1};
        CHECK(check_op(p, [&](auto& g) {
                  return nn::select_rows(g, {P(g, p, "h0"), P(g, p, "h1")}, std::span<const int>(sel));
              }).max_rel_error < 1e-4);
        const Tensord la = random_tensor({4, 3}, rng), ls = random_tensor({4, 1}, rng);
        const auto r = grad_check(p, [&](Graph<double>& g) {
            return nn::composite_l1_loss(g, nn::select_rows(g, {P(g, p, "h0"), P(g, p, "h1")}, std::span<const int>(sel)),
                                         la, P(g, p, "s"), ls, 1.0, 0.1);
        });
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("residual block")
{
    std::mt19937_64 rng(3);
    SUBCASE("zero convolutions with identity shortcut give relu(x)")
    {
        Graph<double> g;
        const Tensord x = random_tensor({1, 4, 5, 5}, rng);
        const Var in = g.constant(x);
        const Var zw = g.constant(Tensord({4, 4, 3, 3})), zb = g.constant(Tensord({4}));
        const Var out = nn::residual_block(g, in, zw, zb, zw, zb, 1);
        CHECK(g.value(out).data() == x.data().cwiseMax(0.0));
    }
    SUBCASE("stride 2 halves the resolution")
    {
        Graph<double> g;
        const Var in = g.constant(Tensord({1, 4, 8, 8}));
        const Var out = nn::residual_block(g, in, g.constant(Tensord({6, 4, 3, 3})), g.constant(Tensord({6})),
                                           g.constant(Tensord({6, 6, 3, 3})), g.constant(Tensord({6})), 2,
                                           g.constant(Tensord({6, 4, 1, 1})), g.constant(Tensord({6})));
        CHECK(g.value(out).shape() == Shape{1, 6, 4, 4});
    }
    SUBCASE("gradient check")
    {
        ParameterSet<double> p;
        add_random(p, "x", {2, 3, 6, 6}, rng);
        add_random(p, "w1", {4, 3, 3, 3}, rng, 0.3);
        add_random(p, "b1", {4}, rng, 0.1);
        add_random(p, "w2", {4, 4, 3, 3}, rng, 0.3);
        add_random(p, "b2", {4}, rng, 0.1);
        add_random(p, "ws", {4, 3, 1, 1}, rng, 0.3);
        add_random(p, "bs", {4}, rng, 0.1);
        const auto r = check_op(p, [&](auto& g) {
            return nn::residual_block(g, P(g, p, "x"), P(g, p, "w1"), P(g, p, "b1"), P(g, p, "w2"), P(g, p, "b2"), 2,
                                      P(g, p, "ws"), P(g, p, "bs"));
        });
        CHECK(r.checked > 0);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("attention examples")
{
    Graph<double> g;
    // All projected features equal -> uniform weights.
    Tensord same({1, 3, 2, 2});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) same[c * 4 + i] = 0.5 * c;
    Tensord theta({3});
    theta.data() << 1.0, -2.0, 0.7;
    const Var w1 = nn::attention_scores(g, g.constant(same), g.constant(Tensord({1, 3}, 0.3)), g.constant(theta));
    for (int i = 0; i < 4; ++i) CHECK(g.value(w1)[i] == doctest::Approx(0.25));

    // theta = 0 -> uniform.
    std::mt19937_64 rng(2);
    const Var w2 = nn::attention_scores(g, g.constant(random_tensor({1, 3, 2, 2}, rng)), g.constant(Tensord({1, 3})),
                                        g.constant(Tensord({3})));
    for (int i = 0; i < 4; ++i) CHECK(g.value(w2)[i] == doctest::Approx(0.25));

    // Scores [ln 2, 0] -> [2/3, 1/3].
    Tensord two({1, 1, 1, 2});
    two[0] = std::log(2.0);
    const Var w3 = nn::attention_scores(g, g.constant(two), g.constant(Tensord({1, 1})), g.constant(Tensord({1}, 1.0)));
    CHECK(g.value(w3)[0] == doctest::Approx(2.0 / 3.0));
    CHECK(g.value(w3)[1] == doctest::Approx(1.0 / 3.0));

    // One-hot and uniform weights in the attended feature.
    const Tensord f = random_tensor({1, 3, 2, 2}, rng);
    Tensord onehot({1, 4});
    onehot[2] = 1.0;
    const Var a = nn::attended_feature(g, g.constant(f), g.constant(onehot));
    for (int c = 0; c < 3; ++c) CHECK(g.value(a)[c] == f[c * 4 + 2]);
    const Var m = nn::attended_feature(g, g.constant(f), g.constant(Tensord({1, 4}, 0.25)));
    for (int c = 0; c < 3; ++c)
        CHECK(g.value(m)[c] == doctest::Approx((f[c * 4] + f[c * 4 + 1] + f[c * 4 + 2] + f[c * 4 + 3]) / 4));

    CHECK_THROWS_AS(nn::attention_scores(g, g.constant(f), g.constant(Tensord({1, 2})), g.constant(Tensord({3}))),
                    ShapeError);
}

TEST_CASE("composite loss arithmetic")
{
    Graph<double> g;
    Tensord la({1, 3});
    la.data() << 0.2, 0.5, 0.0;
    Tensord ls({1, 1}, 4.0);
    const Var exact = nn::composite_l1_loss(g, g.constant(la), la, g.constant(ls), ls, 1.0, 0.1);
    CHECK(g.value(exact)[0] == 0.0);

    Tensord pa({1, 3});
    pa.data() << 0.5, 0.8, 0.3; // mean |error| = 0.3
    const Var l = nn::composite_l1_loss(g, g.constant(pa), la, g.constant(Tensord({1, 1}, 5.0)), ls, 1.0, 0.1);
    CHECK(g.value(l)[0] == doctest::Approx(0.4));
    const Var no_speed = nn::composite_l1_loss(g, g.constant(pa), la, g.constant(Tensord({1, 1}, 5.0)), ls, 1.0, 0.0);
    CHECK(g.value(no_speed)[0] == doctest::Approx(0.3));
}

TEST_CASE("adam")
{
    // Independent scalar implementation of the update equations.
    auto scalar_adam = [](double theta, double grad, double& m, double& v, int t, double lr) {
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        return theta - lr * mh / (std::sqrt(vh) + 1e-8);
    };

    ParameterSet<double> p;
    p.add("a", {3}).value.data() << 1.0, -2.0, 0.5;
    p.add("b", {2}).value.data() << 0.1, 0.2;
    const ParameterSet<double> before = p;
    AdamState<double> st;
    adam_step(p, st, 1e-3);
    CHECK(p == before);

    AdamState<double> st2;
    p.at("a").grad.data().setConstant(1.0);
    p.at("b").grad.data().setZero();
    adam_step(p, st2, 1e-3);
    double m = 0, v = 0;
    const double expect = scalar_adam(1.0, 1.0, m, v, 1, 1e-3);
    CHECK(p.at("a").value[0] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(p.at("a").value[0] - 1.0 == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p.at("b").value == before.at("b").value);

    // A few more steps with varying gradients.
    double theta = p.at("a").value[1];
    for (int t = 2; t <= 5; ++t) {
        const double grad = 0.3 * t - 1.0;
        p.at("a").grad.data().setConstant(grad);
        adam_step(p, st2, 1e-3);
        theta = scalar_adam(theta, grad, m, v, t, 1e-3);
        CHECK(p.at("a").value[1] == doctest::Approx(theta).epsilon(1e-12));
    }
}

TEST_CASE("learning-rate schedule halves every period")
{
    CHECK(learning_rate(1e-3, 10, 0) == 1e-3);
    CHECK(learning_rate(1e-3, 10, 9) == 1e-3);
    CHECK(learning_rate(1e-3, 10, 10) == 5e-4);
    CHECK(learning_rate(1e-3, 10, 20) == 2.5e-4);
}

TEST_CASE("grad_check skips probes that cross a kink")
{
    ParameterSet<double> p;
    p.add("x", {6}); // all zeros: every probe straddles the relu kink
    const auto r = grad_check(p, [&](Graph<double>& g) {
        return nn::probe(g, nn::relu(g, g.param(p.at("x"))), Tensord({6}, 1.0));
    });
    CHECK(r.checked == 0);
    CHECK(r.skipped > 0);
}

TEST_CASE("forward passes are deterministic")
{
    std::mt19937_64 rng(4);
    const Tensord x = random_tensor({2, 3, 8, 8}, rng), w = random_tensor({5, 3, 3, 3}, rng);
    auto run = [&] {
        Graph<double> g;
        return g.value(nn::relu(g, nn::conv2d(g, g.constant(x), g.constant(w), g.constant(Tensord({5})), 2, 1)));
    };
    CHECK(run() == run());
}

TEST_CASE("weights file round trip and errors")
{
    std::mt19937_64 rng(8);
    ParameterSet<double> p;
    add_random(p, "stem.w", {4, 3, 3, 3}, rng);
    add_random(p, "stem.b", {4}, rng);
    add_random(p, "theta", {7}, rng);
    const auto dir = std::filesystem::temp_directory_path() / "yawdrive_weights_test";
    std::filesystem::create_directories(dir);
    save_weights(p, dir / "w.ywts");
    const ParameterSet<double> back = load_weights(dir / "w.ywts");
    CHECK(back == p);
    CHECK(back.at("theta").value.data() == p.at("theta").value.data());

    {
        std::ofstream bad(dir / "bad.ywts", std::ios::binary);
        bad << "NOPE0000";
    }
    CHECK_THROWS_AS(load_weights(dir / "bad.ywts"), FormatError);

    std::filesystem::resize_file(dir / "w.ywts", std::filesystem::file_size(dir / "w.ywts") - 9);
    CHECK_THROWS_AS(load_weights(dir / "w.ywts"), CorruptData);
    CHECK_THROWS_AS(load_weights(dir / "missing.ywts"), FormatError);
    std::filesystem::remove_all(dir);
}
