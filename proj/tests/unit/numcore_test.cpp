#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dmtl/adam.hpp"
#include "dmtl/autodiff.hpp"
#include "gradcheck.hpp"

using namespace dmtl;
using dmtl::testing::gradient_error;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// keeps inputs away from the relu kink so central differences stay smooth
Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.data()) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{0, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at(1, 2), 1.5);
}

TEST(Tensor, ItemRequiresOneElement) {
  EXPECT_EQ(Tensor::scalar(3.0).item(), 3.0);
  EXPECT_THROW(Tensor::vector({1, 2}).item(), ShapeError);
}

TEST(Variable, ZeroGradClearsAndKeepsShape) {
  Variable v(Tensor({2, 2}, 1.0), "w");
  v.grad.fill(3.0);
  v.zero_grad();
  EXPECT_EQ(v.grad.shape(), v.value.shape());
  for (double g : v.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, SigmoidOfZeroIsHalf) {
  Tape t;
  EXPECT_EQ(ops::sigmoid(t.constant(Tensor::scalar(0.0))).value().item(), 0.5);
}

TEST(Ops, ReluClampsNegatives) {
  Tape t;
  const Var y = ops::relu(t.constant(Tensor::vector({-3.0, 2.0})));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 2.0);
}

TEST(Ops, L2OfIdenticalInputsIsZero) {
  Tape t;
  const Tensor v = Tensor::vector({1.0, 2.0});
  EXPECT_EQ(ops::l2_loss(t.constant(v), v).value().item(), 0.0);
}

TEST(Ops, AffineComputesXWPlusB) {
  Tape t;
  const Var x = t.constant(Tensor::matrix(1, 2, {1.0, 2.0}));
  const Var w = t.constant(Tensor::matrix(2, 2, {1.0, 0.0, 3.0, -1.0}));
  const Var b = t.constant(Tensor::vector({0.5, 0.5}));
  const Var y = ops::affine(x, w, b);
  EXPECT_EQ(y.value().at(0, 0), 7.5);
  EXPECT_EQ(y.value().at(0, 1), -1.5);
}

TEST(Ops, ShapeMismatchNamesTheOperation) {
  Tape t;
  const Var x = t.constant(Tensor({1, 3}));
  const Var w = t.constant(Tensor({2, 2}));
  const Var b = t.constant(Tensor({2}));
  try {
    ops::affine(x, w, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("affine"), std::string::npos);
  }
  EXPECT_THROW(ops::add(t.constant(Tensor({2})), t.constant(Tensor({3}))), ShapeError);
}

TEST(Ops, UniformLogitsGiveLogC) {
  Tape t;
  const std::vector<int> labels{0, 2, 1};
  const Var ce = ops::softmax_cross_entropy(t.constant(Tensor({3, 4}, 0.7)), labels);
  EXPECT_NEAR(ce.value().item(), std::log(4.0), 1e-12);
}

TEST(Ops, CrossEntropyRejectsBadLabels) {
  Tape t;
  const std::vector<int> labels{0, 5};
  EXPECT_THROW(ops::softmax_cross_entropy(t.constant(Tensor({2, 3})), labels), ShapeError);
}

TEST(Backward, SigmoidSlopeAtZero) {
  Variable x(Tensor::scalar(0.0), "x");
  Tape t;
  t.backward(ops::sigmoid(t.param(x)));
  EXPECT_EQ(x.grad.item(), 0.25);
}

TEST(Backward, NonScalarLossRejected) {
  Variable x(Tensor::vector({1.0, 2.0}), "x");
  Tape t;
  EXPECT_THROW(t.backward(ops::relu(t.param(x))), ShapeError);
}

TEST(Backward, UnusedVariableGetsExactZero) {
  Variable x(Tensor::scalar(1.5), "x"), unused(Tensor::scalar(2.0), "u");
  Tape t;
  t.param(unused);
  t.backward(ops::sigmoid(t.param(x)));
  EXPECT_EQ(unused.grad.item(), 0.0);
}

TEST(Backward, FrozenVariableNotAccumulated) {
  Variable x(Tensor::scalar(1.5), "x", false);
  Tape t;
  t.backward(ops::sigmoid(t.param(x)));
  EXPECT_EQ(x.grad.item(), 0.0);
}

TEST(Backward, L2OnTwoByTwoMatchesFiniteDifferences) {
  Variable w(Tensor::matrix(2, 2, {0.3, -0.7, 1.1, 0.4}), "W");
  Variable b(Tensor::vector({0.0, 0.0}), "b", false);
  const Tensor x = Tensor::matrix(1, 2, {0.5, -1.2});
  const Tensor y = Tensor::matrix(1, 2, {1.0, 2.0});
  const double err = gradient_error({&w}, [&](Tape& t) {
    return ops::l2_loss(ops::affine(t.constant(x), t.param(w), t.param(b)), y);
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Backward, ZeroGradThenBackwardEqualsFreshTape) {
  Variable w(Tensor::vector({0.2, -0.4}), "w");
  auto run = [&] {
    Tape t;
    t.backward(ops::sum(ops::sigmoid(t.param(w))));
  };
  run();
  const Tensor first = w.grad;
  run();  // accumulates
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(w.grad[i], 2 * first[i]);
  w.zero_grad();
  run();
  EXPECT_EQ(w.grad, first);
}

TEST(Backward, TapeIsDeterministic) {
  std::mt19937_64 rng(3);
  Variable w(random_tensor({3, 2}, rng), "w"), b(random_tensor({2}, rng), "b");
  const Tensor x = random_tensor({4, 3}, rng);
  const std::vector<int> labels{0, 1, 1, 0};
  auto run = [&] {
    w.zero_grad();
    b.zero_grad();
    Tape t;
    const Var l = ops::softmax_cross_entropy(ops::affine(t.constant(x), t.param(w), t.param(b)), labels);
    t.backward(l);
    return std::make_pair(l.value().item(), w.grad);
  };
  EXPECT_EQ(run(), run());
}

// One finite-difference case per op and seed.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, EveryOpMatchesCentralDifferences) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  Variable x(away_from_zero({3, 4}, rng), "x");
  Variable w(random_tensor({4, 2}, rng), "w");
  Variable b(random_tensor({2}, rng), "b");
  Variable s(random_tensor({1}, rng), "s");
  Variable y(random_tensor({3, 4}, rng), "y");
  const Tensor target = random_tensor({3, 2}, rng);
  const std::vector<int> labels{0, 1, 1};

  EXPECT_LT(gradient_error({&x, &w, &b}, [&](Tape& t) {
              return ops::sum(ops::affine(t.param(x), t.param(w), t.param(b)));
            }), 1e-4) << "affine";
  EXPECT_LT(gradient_error({&x}, [&](Tape& t) { return ops::sum(ops::relu(t.param(x))); }), 1e-4) << "relu";
  EXPECT_LT(gradient_error({&x}, [&](Tape& t) { return ops::sum(ops::sigmoid(t.param(x))); }), 1e-4) << "sigmoid";
  EXPECT_LT(gradient_error({&x}, [&](Tape& t) { return ops::mean(ops::scalar_mul(t.param(x), -1.7)); }), 1e-4)
      << "scalar_mul/mean";
  EXPECT_LT(gradient_error({&x, &s}, [&](Tape& t) {
              return ops::sum(ops::sigmoid(ops::scale(t.param(x), ops::element(t.param(s), 0))));
            }), 1e-4) << "scale/element";
  EXPECT_LT(gradient_error({&x, &y}, [&](Tape& t) {
              return ops::sum(ops::sigmoid(ops::add(t.param(x), t.param(y))));
            }), 1e-4) << "add";
  EXPECT_LT(gradient_error({&x, &w, &b}, [&](Tape& t) {
              return ops::softmax_cross_entropy(ops::affine(t.param(x), t.param(w), t.param(b)), labels);
            }), 1e-4) << "softmax_cross_entropy";
  EXPECT_LT(gradient_error({&x, &w, &b}, [&](Tape& t) {
              return ops::l2_loss(ops::affine(t.param(x), t.param(w), t.param(b)), target);
            }), 1e-4) << "l2_loss";
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 12));

TEST(Adam, FirstStepMovesByLearningRate) {
  Variable x(Tensor::scalar(1.0), "x");
  x.grad = Tensor::scalar(1.0);
  Adam opt({&x}, {.learning_rate = 0.1});
  opt.step();
  EXPECT_NEAR(x.value.item(), 0.9, 1e-6);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesValue) {
  Variable x(Tensor::vector({1.0, -2.0}), "x");
  Adam opt({&x}, {.learning_rate = 0.1});
  opt.step();
  EXPECT_EQ(x.value, Tensor::vector({1.0, -2.0}));
}

TEST(Adam, StepLeavesGradientsAndCountsUp) {
  Variable x(Tensor::scalar(1.0), "x");
  x.grad = Tensor::scalar(0.5);
  Adam opt({&x});
  for (std::size_t i = 1; i <= 3; ++i) {
    opt.step();
    EXPECT_EQ(opt.steps(), i);
    EXPECT_EQ(x.grad.item(), 0.5);
  }
  EXPECT_EQ(opt.first_moment(0).shape(), x.value.shape());
  EXPECT_EQ(opt.second_moment(0).shape(), x.value.shape());
}

TEST(Adam, ConvergesOnQuadratic) {
  Variable x(Tensor::scalar(1.0), "x");
  Adam opt({&x}, {.learning_rate = 0.01});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    Tape t;
    const Var v = t.param(x);
    t.backward(ops::sum(ops::scale(v, v)));
    opt.step();
  }
  EXPECT_LT(std::abs(x.value.item()), 1e-2);
}

TEST(Adam, RejectsNonPositiveLearningRate) {
  Variable x(Tensor::scalar(1.0), "x");
  EXPECT_THROW(Adam({&x}, {.learning_rate = 0.0}), ArgumentError);
}
