#include <doctest.h>

#include <cmath>

#include "mgbp/autograd.hpp"
#include "mgbp/ops.hpp"
#include "mgbp/rng.hpp"
#include "test_helpers.hpp"

using namespace mgbp;
using namespace mgbp::autograd;
using testutil::random_tensor;

namespace {

ops::ConvSpec spec2d(int64_t ci, int64_t co, int k, int s, int p) {
    ops::ConvSpec sp;
    sp.in_channels = ci;
    sp.out_channels = co;
    sp.kh = sp.kw = k;
    sp.sh = sp.sw = s;
    sp.ph = sp.pw = p;
    return sp;
}

}  // namespace

TEST_CASE("taped ops equal untaped evaluation bitwise") {
    Rng rng(42);
    const auto sp = spec2d(2, 3, 3, 2, 1);
    const Tensor x = random_tensor({1, 2, 8, 8}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);

    Tape tape;
    const Var y = tape.conv(tape.leaf(x), tape.leaf(w), tape.leaf(b), sp);
    const Tensor direct = ops::conv(x, w, b, sp);
    CHECK(ops::max_abs_diff(tape.value(y), direct) == 0.0);

    Tape tape2;
    const Var y2 = tape2.conv(tape2.leaf(x), tape2.leaf(w), tape2.leaf(b), sp);
    CHECK(ops::max_abs_diff(tape.value(y), tape2.value(y2)) == 0.0);
}

TEST_CASE("gradient of sum of squares is 2x") {
    const Tensor x({1, 1, 1, 3}, {0.5, -1.25, 2.0});
    Tape tape;
    const Var xv = tape.leaf(x, "x");
    const Var loss = tape.sum_all(tape.mul(xv, xv));
    const auto gm = tape.backward(loss, Tensor::scalar(1.0));
    for (int64_t i = 0; i < 3; ++i) CHECK(gm.at("x")[i] == doctest::Approx(2.0 * x[i]));
}

TEST_CASE("relu subgradient: negatives fall to zero") {
    const Tensor x({1, 1, 1, 2}, {-1.0, 2.0});
    Tape tape;
    const Var xv = tape.leaf(x, "x");
    const auto gm = tape.backward(tape.sum_all(tape.relu(xv)), Tensor::scalar(1.0));
    CHECK(gm.at("x")[0] == 0.0);
    CHECK(gm.at("x")[1] == 1.0);
}

TEST_CASE("conv weight gradient matches central differences") {
    Rng rng(7);
    const std::map<std::string, Tensor> leaves{
        {"x", random_tensor({1, 2, 6, 6}, rng)},
        {"w", random_tensor({2, 2, 3, 3}, rng)},
        {"b", random_tensor({2}, rng)},
    };
    auto fn = [](Tape& t, const LeafMap& lm) {
        const Var y = t.conv(lm.at("x"), lm.at("w"), lm.at("b"), spec2d(2, 2, 3, 1, 1));
        return t.sum_all(t.mul(y, y));
    };
    CHECK(finite_diff_check(fn, leaves, 1e-5, 99, 80) < 1e-6);
}

TEST_CASE("finite differences are exact for a linear function") {
    Rng rng(8);
    const std::map<std::string, Tensor> leaves{{"x", random_tensor({1, 1, 4, 4}, rng)}};
    auto fn = [](Tape& t, const LeafMap& lm) { return t.sum_all(t.mul_scalar(lm.at("x"), 3.0)); };
    CHECK(finite_diff_check(fn, leaves, 1e-5, 1, 60) < 1e-9);
}

TEST_CASE("relu kink: coordinates away from the kink check clean") {
    // all pre-activations at |v| >= 0.5 >> 10h, so central differences stay
    // on one side of the kink
    Rng rng(9);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] += x[i] >= 0.0 ? 0.5 : -0.5;
    const std::map<std::string, Tensor> leaves{{"x", x}};
    auto fn = [](Tape& t, const LeafMap& lm) { return t.sum_all(t.relu(lm.at("x"))); };
    CHECK(finite_diff_check(fn, leaves, 1e-5, 2, 60) < 1e-4);
}

TEST_CASE("every differentiable op passes the gradient check") {
    Rng rng(10);
    const Tensor x44 = random_tensor({1, 2, 8, 8}, rng, 0.2, 1.2);
    const Tensor y44 = random_tensor({1, 2, 8, 8}, rng, 0.3, 1.0);

    auto check = [&](const GraphFn& fn, const std::map<std::string, Tensor>& leaves,
                     double tol = 1e-6) {
        CHECK(finite_diff_check(fn, leaves, 1e-5, 11, 60) < tol);
    };

    check([](Tape& t, const LeafMap& lm) {  // conv_transposed, all three args
        const Var y = t.conv_transposed(lm.at("x"), lm.at("w"), lm.at("b"),
                                        spec2d(3, 2, 4, 2, 1));
        return t.mean_all(t.mul(y, y));
    },
          {{"x", random_tensor({1, 2, 4, 4}, rng)},
           {"w", random_tensor({2, 3, 4, 4}, rng)},
           {"b", random_tensor({3}, rng)}});

    check([&](Tape& t, const LeafMap& lm) {  // concat + shift + abs
        const Var c = t.concat_channels(lm.at("x"), t.shift2d(lm.at("x"), 1, -2));
        return t.mean_all(t.abs(c));
    },
          {{"x", x44}});

    check([&](Tape& t, const LeafMap& lm) {  // bicubic both directions
        const Var up = t.bicubic_resize(lm.at("x"), 2, ops::ResizeDir::up);
        const Var down = t.bicubic_resize(up, 4, ops::ResizeDir::down);
        return t.mean_all(t.mul(down, down));
    },
          {{"x", x44}});

    check([&](Tape& t, const LeafMap& lm) {  // blur + divide + sqrt + softplus
        const Var b = t.gaussian_blur(lm.at("x"), 5, 1.17);
        const Var v = t.divide(lm.at("y"), t.add_scalar(t.sqrt_clamp0(b), 1.0));
        return t.mean_all(t.softplus(v));
    },
          {{"x", x44}, {"y", y44}});

    check([&](Tape& t, const LeafMap& lm) {  // temporal crop on a 5D tensor
        const Var c = t.crop_time(lm.at("x"), 3);
        return t.mean_all(t.mul(c, c));
    },
          {{"x", random_tensor({1, 2, 5, 4, 4}, rng)}});

    check([&](Tape& t, const LeafMap& lm) {  // per-item mean reduction
        const Var m = t.mean_per_item(t.mul(lm.at("x"), lm.at("y")));
        return t.sum_all(t.softplus(m));
    },
          {{"x", x44}, {"y", y44}});
}

TEST_CASE("backward is linear: grad of a sum of losses is the sum of grads") {
    Rng rng(12);
    const Tensor x = random_tensor({1, 1, 4, 4}, rng);
    auto run = [&](int which) {
        Tape t;
        const Var xv = t.leaf(x, "x");
        const Var l1 = t.mean_all(t.abs(xv));
        const Var l2 = t.mean_all(t.mul(xv, xv));
        Var loss = which == 0 ? l1 : (which == 1 ? l2 : t.add(l1, l2));
        return t.backward(loss, Tensor::scalar(1.0)).at("x");
    };
    const Tensor g1 = run(0), g2 = run(1), gsum = run(2);
    CHECK(ops::max_abs_diff(ops::add(g1, g2), gsum) < 1e-14);
}

TEST_CASE("zero cotangent yields all-zero gradients") {
    Rng rng(13);
    Tape t;
    const Var xv = t.leaf(random_tensor({1, 1, 3, 3}, rng), "x");
    const Var loss = t.mean_all(t.mul(xv, xv));
    const auto gm = t.backward(loss, Tensor::scalar(0.0));
    for (int64_t i = 0; i < 9; ++i) CHECK(gm.at("x")[i] == 0.0);
}

TEST_CASE("unreached parameters get zero gradients; consumed tapes refuse reuse") {
    Rng rng(14);
    Tape t;
    const Var used = t.leaf(random_tensor({1, 1, 2, 2}, rng), "used");
    t.leaf(random_tensor({1, 1, 2, 2}, rng), "unused");
    const Var loss = t.sum_all(used);
    const auto gm = t.backward(loss, Tensor::scalar(1.0));
    CHECK(gm.contains("unused"));
    for (int64_t i = 0; i < 4; ++i) CHECK(gm.at("unused")[i] == 0.0);
    CHECK_THROWS_AS(t.backward(loss, Tensor::scalar(1.0)), state_error);
    CHECK_THROWS_AS(t.sum_all(used), state_error);
    t.reset();
    CHECK(t.size() == 0);
}

TEST_CASE("finite_diff_check rejects non-scalar outputs") {
    Rng rng(15);
    const std::map<std::string, Tensor> leaves{{"x", random_tensor({1, 1, 2, 2}, rng)}};
    auto fn = [](Tape& t, const LeafMap& lm) { return t.relu(lm.at("x")); };
    CHECK_THROWS_AS(finite_diff_check(fn, leaves, 1e-5, 0, 10), contract_error);
}
