#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mtlab/optim.hpp"
#include "mtlab/rng.hpp"
#include "test_util.hpp"

using namespace mtlab;
using mtlab_test::random_tensor;

TEST_CASE("cosine schedule endpoints and midpoint", "[optim]") {
  ScheduleSpec spec{ScheduleSpec::Kind::warmup_cosine, 100, 1100, 2.5e-3};
  REQUIRE(lr_warmup_cosine(0, spec) == 0.0);
  REQUIRE(lr_warmup_cosine(100, spec) == spec.peak_lr);
  REQUIRE(std::abs(lr_warmup_cosine(100 + 500, spec) - 0.5 * spec.peak_lr) < 1e-15);
  REQUIRE(std::abs(lr_warmup_cosine(1100, spec)) < 1e-15);
  REQUIRE_THROWS_AS(lr_warmup_cosine(1101, spec), std::invalid_argument);
  REQUIRE_THROWS_AS(lr_warmup_cosine(-1, spec), std::invalid_argument);
}

TEST_CASE("cosine schedule is continuous at the warmup boundary", "[optim]") {
  ScheduleSpec spec{ScheduleSpec::Kind::warmup_cosine, 40, 400, 1e-2};
  const double before = lr_warmup_cosine(39, spec);
  const double at = lr_warmup_cosine(40, spec);
  const double after = lr_warmup_cosine(41, spec);
  REQUIRE(std::abs(at - before) < spec.peak_lr * 0.05);
  REQUIRE(std::abs(after - at) < spec.peak_lr * 0.05);
  REQUIRE(at == spec.peak_lr);
}

TEST_CASE("constant inverse-sqrt schedule values", "[optim]") {
  ScheduleSpec spec{ScheduleSpec::Kind::constant_inv_sqrt, 10000, 0, 0.01};
  REQUIRE(lr_constant_inv_sqrt(5000, spec) == 0.01);
  REQUIRE(lr_constant_inv_sqrt(10000, spec) == 0.01);
  REQUIRE(lr_constant_inv_sqrt(40000, spec) == 0.005);
  double prev = lr_constant_inv_sqrt(10000, spec);
  for (long step = 10001; step < 12000; step += 37) {
    const double lr = lr_constant_inv_sqrt(step, spec);
    REQUIRE(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("adam leaves parameters unchanged on zero gradients", "[optim]") {
  Rng rng(50);
  std::vector<Tensor> params = {random_tensor({3, 4}, rng), random_tensor({7}, rng)};
  const std::vector<Tensor> before = params;
  std::vector<Tensor> grads = {Tensor::zeros({3, 4}), Tensor::zeros({7})};
  AdamState opt(params);
  opt.step(params, grads, 1e-3);
  REQUIRE(params == before);
  REQUIRE(opt.step_count() == 1);
}

TEST_CASE("first adam step moves by -lr sign(g)", "[optim]") {
  Rng rng(51);
  std::vector<Tensor> params = {random_tensor({6}, rng)};
  const std::vector<Tensor> before = params;
  std::vector<Tensor> grads = {Tensor::zeros({6})};
  for (std::size_t i = 0; i < 6; ++i)
    grads[0].data[i] = (i % 2 ? -1.0 : 1.0) * (0.05 + rng.uniform());
  AdamState opt(params);
  const double lr = 0.7;
  opt.step(params, grads, lr);
  for (std::size_t i = 0; i < 6; ++i) {
    const double update = params[0].data[i] - before[0].data[i];
    const double expected = -lr * (grads[0].data[i] > 0 ? 1.0 : -1.0);
    REQUIRE(update == Catch::Approx(expected).margin(1e-6));
  }
}

namespace {

// Reference Adam written as a flat scalar recurrence, independent of the
// production implementation.
struct ScalarAdam {
  double b1 = 0.9, b2 = 0.98, eps = 1e-9;
  double m = 0.0, v = 0.0;
  long t = 0;
  double apply(double w, double g, double lr) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, t));
    const double vhat = v / (1.0 - std::pow(b2, t));
    return w - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST_CASE("ten-step quadratic trajectory matches a reference adam", "[optim]") {
  // f(w) = 0.5 * sum(a_i * w_i^2), gradient a_i * w_i
  Rng rng(52);
  std::vector<Tensor> params = {random_tensor({5}, rng)};
  std::vector<double> ref(params[0].data.begin(), params[0].data.end());
  std::vector<double> curvature(5);
  for (double& a : curvature) a = 0.5 + rng.uniform();

  AdamState opt(params);
  std::vector<ScalarAdam> scalar(5);
  const double lr = 0.05;
  for (int step = 0; step < 10; ++step) {
    std::vector<Tensor> grads = {Tensor::zeros({5})};
    for (std::size_t i = 0; i < 5; ++i) grads[0].data[i] = curvature[i] * params[0].data[i];
    opt.step(params, grads, lr);
    for (std::size_t i = 0; i < 5; ++i)
      ref[i] = scalar[i].apply(ref[i], curvature[i] * ref[i], lr);
    for (std::size_t i = 0; i < 5; ++i)
      REQUIRE(params[0].data[i] == Catch::Approx(ref[i]).margin(1e-12));
  }
}

TEST_CASE("reset zeroes state and keeps hyperparameters", "[optim]") {
  Rng rng(53);
  std::vector<Tensor> params = {random_tensor({4}, rng)};
  AdamState opt(params, AdamConfig{0.8, 0.9, 1e-7});
  std::vector<Tensor> grads = {random_tensor({4}, rng)};
  opt.step(params, grads, 1e-2);
  opt.step(params, grads, 1e-2);
  REQUIRE(opt.step_count() == 2);

  opt.reset();
  REQUIRE(opt.step_count() == 0);
  for (const Tensor& t : opt.first_moment())
    for (double v : t.data) REQUIRE(v == 0.0);
  REQUIRE(opt.config().beta1 == 0.8);

  // reset then zero-gradient step leaves parameters unchanged
  const std::vector<Tensor> before = params;
  std::vector<Tensor> zeros = {Tensor::zeros({4})};
  opt.step(params, zeros, 1e-2);
  REQUIRE(params == before);

  // idempotence
  AdamState twice = opt;
  twice.reset();
  twice.reset();
  AdamState once = opt;
  once.reset();
  REQUIRE(twice == once);
}

TEST_CASE("post-reset trajectory equals a fresh optimizer bitwise", "[optim]") {
  Rng rng(54);
  std::vector<Tensor> params_a = {random_tensor({8}, rng)};
  std::vector<Tensor> params_b = params_a;

  AdamState used(params_a);
  std::vector<Tensor> g0 = {random_tensor({8}, rng)};
  used.step(params_a, g0, 3e-3);
  used.reset();

  AdamState fresh(params_b);
  params_b = params_a;  // same starting parameters for both trajectories

  Rng seq(55);
  for (int step = 0; step < 5; ++step) {
    std::vector<Tensor> g = {random_tensor({8}, seq)};
    used.step(params_a, g, 2e-3);
    fresh.step(params_b, g, 2e-3);
    REQUIRE(params_a == params_b);
  }
  REQUIRE(used == fresh);
}

TEST_CASE("first update sign pattern is invariant to gradient scale", "[optim]") {
  Rng rng(56);
  for (double c : {0.01, 1.0, 250.0}) {
    std::vector<Tensor> base_grads = {random_tensor({10}, rng)};
    std::vector<Tensor> params_a = {Tensor::zeros({10})};
    std::vector<Tensor> params_b = {Tensor::zeros({10})};
    std::vector<Tensor> scaled = base_grads;
    for (double& v : scaled[0].data) v *= c;
    AdamState a(params_a), b(params_b);
    a.step(params_a, base_grads, 1e-3);
    b.step(params_b, scaled, 1e-3);
    for (std::size_t i = 0; i < 10; ++i) {
      auto sign = [](double x) { return x > 0.0 ? 1 : x < 0.0 ? -1 : 0; };
      REQUIRE(sign(params_a[0].data[i]) == sign(params_b[0].data[i]));
    }
  }
}

TEST_CASE("adam rejects malformed input", "[optim]") {
  Rng rng(57);
  std::vector<Tensor> params = {random_tensor({3}, rng)};
  AdamState opt(params);
  std::vector<Tensor> wrong_shape = {Tensor::zeros({4})};
  REQUIRE_THROWS_AS(opt.step(params, wrong_shape, 1e-3), std::invalid_argument);
  std::vector<Tensor> bad = {Tensor::zeros({3})};
  bad[0].data[1] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(opt.step(params, bad, 1e-3), std::runtime_error);
  std::vector<Tensor> ok = {Tensor::zeros({3})};
  REQUIRE_THROWS_AS(opt.step(params, ok, -1.0), std::invalid_argument);
}
