#include <gtest/gtest.h>

#include <cmath>

#include "gsfuse/errors.hpp"
#include "gsfuse/grad_check.hpp"
#include "gsfuse/ops.hpp"
#include "gsfuse/tape.hpp"
#include "test_util.hpp"

using namespace gsfuse;
using gsfuse::testing::random_tensor;

TEST(Tensor, ShapeMatchesData) {
  Tensor t({3, 4});
  EXPECT_EQ(t.size(), 12u);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Matmul, Identity) {
  Tape tape;
  auto i2 = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  auto a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(ops::matmul(i2, a).value(), Tensor::from_rows({{1, 2}, {3, 4}}));
}

TEST(Matmul, ZeroRow) {
  Tape tape;
  auto a = tape.constant(Tensor::from_rows({{1, 0}, {0, 0}}));
  auto b = tape.constant(Tensor::from_rows({{0}, {5}}));
  EXPECT_EQ(ops::matmul(a, b).value(), Tensor::from_rows({{0}, {0}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 3}));
  EXPECT_THROW(ops::matmul(a, b), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  std::vector<Tensor> p = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
  GradCheckOptions o;
  o.tolerance = 1e-6;
  auto rep = grad_check([](Tape&, std::span<const Var> v) { return ops::sum(ops::matmul(v[0], v[1])); }, p, o);
  EXPECT_TRUE(rep.passed) << rep.summary();
  // A quadratic loss exercises non-constant upstream gradients too.
  auto rep2 = grad_check(
      [](Tape&, std::span<const Var> v) {
        auto y = ops::matmul(v[0], v[1]);
        return ops::sum(ops::mul(y, y));
      },
      p, o);
  EXPECT_TRUE(rep2.passed) << rep2.summary();
}

TEST(Softmax, Uniform) {
  Tape tape;
  auto s = ops::softmax(tape.constant(Tensor::vector({0, 0, 0})));
  for (double v : s.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ClosedForm) {
  Tape tape;
  auto s = ops::softmax(tape.constant(Tensor::vector({std::log(3.0), 0})));
  EXPECT_NEAR(s.value()[0], 0.75, 1e-15);
  EXPECT_NEAR(s.value()[1], 0.25, 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tape tape;
  auto s = ops::softmax(tape.constant(Tensor::vector({1000, 0})));
  EXPECT_TRUE(s.value().all_finite());
  EXPECT_DOUBLE_EQ(s.value()[0], 1.0);
  EXPECT_LT(s.value()[1], 1e-300);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 7}, rng, 3.0);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 4; ++r)
      for (double& v : shifted.row(r)) v += 17.25 * static_cast<double>(r + 1);
    Tape tape;
    auto a = ops::softmax(tape.constant(x)).value();
    auto b = ops::softmax(tape.constant(shifted)).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      std::size_t arg_a = 0, arg_b = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        sum += a.at(r, c);
        EXPECT_NEAR(a.at(r, c), b.at(r, c), 1e-12);
        if (a.at(r, c) > a.at(r, arg_a)) arg_a = c;
        if (b.at(r, c) > b.at(r, arg_b)) arg_b = c;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_EQ(arg_a, arg_b);
    }
  }
}

TEST(Elementwise, SigmoidClipLosses) {
  Tape tape;
  EXPECT_EQ(ops::sigmoid(tape.constant(Tensor::scalar(0))).item(), 0.5);
  EXPECT_EQ(ops::clip(tape.constant(Tensor::scalar(100)), -6, 6).item(), 6.0);
  EXPECT_EQ(ops::mse(tape.constant(Tensor::vector({1, 1})), tape.constant(Tensor::vector({1, 1}))).item(), 0.0);
  EXPECT_EQ(ops::mae(tape.constant(Tensor::vector({0, 2})), tape.constant(Tensor::vector({1, 1}))).item(), 1.0);
}

TEST(Elementwise, LossesNonNegativeZeroIffEqual) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Tape tape;
    Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 2}, rng);
    EXPECT_GT(ops::mse(tape.constant(a), tape.constant(b)).item(), 0.0);
    EXPECT_GT(ops::mae(tape.constant(a), tape.constant(b)).item(), 0.0);
    EXPECT_EQ(ops::mse(tape.constant(a), tape.constant(a)).item(), 0.0);
    EXPECT_EQ(ops::mae(tape.constant(a), tape.constant(a)).item(), 0.0);
  }
}

TEST(Tape, SeedGradientIsIdentity) {
  Tape tape;
  auto x = tape.leaf(Tensor::scalar(2.5));
  tape.backward(x);
  EXPECT_EQ(tape.grad(x).item(), 1.0);
}

TEST(Tape, BackwardVisitsEachNodeOnce) {
  Tape tape;
  auto x = tape.leaf(Tensor::scalar(2.0));
  auto y = ops::mul(x, x);       // shared parent used twice
  auto z = ops::add(y, y);       // diamond
  auto w = ops::add(z, x);
  tape.backward(w);
  EXPECT_EQ(tape.last_backward_visits(), 3u);  // y, z, w
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 4 * 2.0 + 1.0);
}

TEST(Tape, StopReplayReturnsRecordedValues) {
  Tape first;
  auto a = ops::detach(first.leaf(Tensor::scalar(3.0)));
  EXPECT_EQ(a.item(), 3.0);
  Tape second;
  second.replay_stops(first.stops());
  auto b = ops::detach(second.leaf(Tensor::scalar(4.0)));
  EXPECT_EQ(b.item(), 3.0);
  EXPECT_FALSE(b.requires_grad());
}

TEST(GradCheck, Square) {
  std::vector<Tensor> p = {Tensor::scalar(3.0)};
  auto rep = grad_check([](Tape&, std::span<const Var> v) { return ops::mul(v[0], v[0]); }, p);
  ASSERT_TRUE(rep.passed);
  EXPECT_LT(rep.max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsWrongGradient) {
  std::vector<Tensor> p = {Tensor::scalar(3.0)};
  // detach hides the second factor from the tape: analytic 3, numeric 6.
  auto rep = grad_check([](Tape&, std::span<const Var> v) { return ops::mul(v[0], ops::detach(v[0])); }, p);
  EXPECT_FALSE(rep.passed);
}

TEST(GradCheck, NonFiniteNamesParameter) {
  // (1e154 x)^2 sits just below the largest double at x = 1.34078 and overflows at x + h.
  std::vector<Tensor> p = {Tensor::scalar(1.34078)};
  std::vector<std::string> names = {"w"};
  try {
    grad_check([](Tape&, std::span<const Var> v) {
      auto y = ops::scale(v[0], 1e154);
      return ops::mul(y, y);
    }, p, names);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("w (parameter 0, coordinate 0)"), std::string::npos) << e.what();
  }
}

// Every differentiable primitive on random small shapes, 20 seeds each.
class PrimitiveGrad : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGrad, AllPrimitivesPass) {
  Rng rng(static_cast<std::uint64_t>(GetParam()) * 7919 + 1);
  auto A = random_tensor({3, 4}, rng);
  auto B = random_tensor({3, 4}, rng);
  auto C = random_tensor({4, 2}, rng);
  auto row = random_tensor({4}, rng);
  auto pos = A;
  for (double& v : pos.data()) v = std::abs(v) + 0.5;
  using Fn = ScalarFn;
  // Weighted sums keep upstream gradients non-uniform.
  auto wsum = [](Var x) {
    Tensor w(x.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return ops::sum(ops::mul(x, x.tape().constant(w)));
  };
  struct Case {
    const char* name;
    Fn f;
    std::vector<Tensor> p;
  };
  std::vector<Case> cases = {
      {"add", [&](Tape&, std::span<const Var> v) { return wsum(ops::add(v[0], v[1])); }, {A, B}},
      {"sub", [&](Tape&, std::span<const Var> v) { return wsum(ops::sub(v[0], v[1])); }, {A, B}},
      {"mul", [&](Tape&, std::span<const Var> v) { return wsum(ops::mul(v[0], v[1])); }, {A, B}},
      {"scale", [&](Tape&, std::span<const Var> v) { return wsum(ops::scale(v[0], -1.7)); }, {A}},
      {"add_scalar", [&](Tape&, std::span<const Var> v) { return wsum(ops::mul(ops::add_scalar(v[0], 0.4), v[0])); }, {A}},
      {"add_row", [&](Tape&, std::span<const Var> v) { return wsum(ops::add_row(v[0], v[1])); }, {A, row}},
      {"mul_row", [&](Tape&, std::span<const Var> v) { return wsum(ops::mul_row(v[0], v[1])); }, {A, row}},
      {"matmul", [&](Tape&, std::span<const Var> v) { return wsum(ops::matmul(v[0], v[1])); }, {A, C}},
      {"matmul_nt", [&](Tape&, std::span<const Var> v) { return wsum(ops::matmul_nt(v[0], v[1])); }, {A, B}},
      {"linear", [&](Tape&, std::span<const Var> v) { return wsum(ops::linear(v[0], v[1], v[2])); },
       {A, random_tensor({2, 4}, rng), random_tensor({2}, rng)}},
      {"transpose", [&](Tape&, std::span<const Var> v) { return wsum(ops::transpose(v[0])); }, {A}},
      {"softmax1", [&](Tape&, std::span<const Var> v) { return wsum(ops::softmax(v[0], 1)); }, {A}},
      {"softmax0", [&](Tape&, std::span<const Var> v) { return wsum(ops::softmax(v[0], 0)); }, {A}},
      {"log_softmax", [&](Tape&, std::span<const Var> v) { return wsum(ops::log_softmax_rows(v[0])); }, {A}},
      {"sigmoid", [&](Tape&, std::span<const Var> v) { return wsum(ops::sigmoid(v[0])); }, {A}},
      {"gelu", [&](Tape&, std::span<const Var> v) { return wsum(ops::gelu(v[0])); }, {A}},
      {"layernorm", [&](Tape&, std::span<const Var> v) { return wsum(ops::layernorm(v[0], v[1], v[2])); },
       {A, row, random_tensor({4}, rng)}},
      {"clip", [&](Tape&, std::span<const Var> v) { return wsum(ops::clip(v[0], -0.8, 0.9)); }, {A}},
      {"mse", [&](Tape&, std::span<const Var> v) { return ops::mse(v[0], v[1]); }, {A, B}},
      {"mae", [&](Tape&, std::span<const Var> v) { return ops::mae(v[0], v[1]); }, {A, B}},
      {"mean", [&](Tape&, std::span<const Var> v) { return ops::mean(ops::mul(v[0], v[0])); }, {A}},
      {"mean_rows", [&](Tape&, std::span<const Var> v) { return wsum(ops::mean_rows(v[0])); }, {A}},
      {"sum_rows", [&](Tape&, std::span<const Var> v) { return wsum(ops::sum_rows(v[0])); }, {A}},
      {"rowdot", [&](Tape&, std::span<const Var> v) { return wsum(ops::rowdot(v[0], v[1])); }, {A, B}},
      {"l2_normalize", [&](Tape&, std::span<const Var> v) { return wsum(ops::l2_normalize_rows(v[0])); }, {A}},
      {"gather", [&](Tape&, std::span<const Var> v) {
         const std::size_t idx[] = {2, 0, 2};
         return wsum(ops::gather_rows(v[0], idx));
       }, {A}},
      {"vconcat", [&](Tape&, std::span<const Var> v) {
         const Var parts[] = {v[0], v[1]};
         return wsum(ops::vconcat(parts));
       }, {A, row}},
      {"hconcat", [&](Tape&, std::span<const Var> v) {
         const Var parts[] = {v[0], v[1]};
         return wsum(ops::hconcat(parts));
       }, {A, random_tensor({3, 2}, rng)}},
      {"element", [&](Tape&, std::span<const Var> v) { return ops::mul(ops::element(v[0], 5), ops::element(v[0], 5)); }, {A}},
      {"slice", [&](Tape&, std::span<const Var> v) { return wsum(ops::slice(v[0], 3, 6)); }, {A}},
      {"reshape", [&](Tape&, std::span<const Var> v) { return wsum(ops::reshape(v[0], {4, 3})); }, {A}},
      {"attention", [&](Tape&, std::span<const Var> v) { return wsum(ops::attention(v[0], v[1], v[2], 2)); },
       {A, random_tensor({5, 4}, rng), random_tensor({5, 4}, rng)}},
  };
  for (auto& c : cases) {
    auto rep = grad_check(c.f, c.p);
    EXPECT_TRUE(rep.passed) << c.name << ": " << rep.summary();
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGrad, ::testing::Range(0, 20));
