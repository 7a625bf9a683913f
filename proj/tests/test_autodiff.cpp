#include <gtest/gtest.h>

#include <cmath>

#include "ecgr/autodiff.hpp"
#include "ecgr/error.hpp"
#include "grad_check.hpp"

using namespace ecgr;
using namespace ecgr::ad;
using oracle::project;
using oracle::random_tensor;
using oracle::tape_vs_numeric;

namespace {

constexpr double kTol = 1e-4;

Tensor<double> no_grad(Tensor<double> t) {
  t.set_requires_grad(false);
  return t;
}

// Moves values away from the leaky-ReLU kink so central differences stay on one side.
Tensor<double> away_from_zero(Tensor<double> t) {
  for (double& v : t.data()) {
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
  }
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

TEST(Conv2d, OneByOneIdentity) {
  const Tensor<double> x = no_grad(random_tensor({1, 1, 3, 4}, 1));
  const Tensor<double> w({1, 1, 1, 1}, 1.0);
  const Tensor<double> y = conv2d<double>(nullptr, x, w, {}, {});
  EXPECT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OnesSum) {
  const Tensor<double> x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0);
  const Tensor<double> y = conv2d<double>(nullptr, x, w, {}, {});
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Conv2d, OutputGeometryAndShapeErrors) {
  const Tensor<double> x({2, 3, 12, 16}), w({5, 3, 3, 5});
  const Tensor<double> y = conv2d<double>(nullptr, x, w, {}, Geometry2d{1, 2, 1, 2});
  EXPECT_EQ(y.shape(), (Shape{2, 5, 12, 8}));
  EXPECT_THROW(conv2d<double>(nullptr, x, Tensor<double>({5, 2, 3, 5}), {}, {}), Error);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Tensor<double> x = random_tensor({1, 1, 4, 6}, seed);
    Tensor<double> w = random_tensor({2, 1, 3, 3}, seed + 10);
    Tensor<double> b = random_tensor({2}, seed + 20);
    const double err = tape_vs_numeric(
        [&](Tape<double>* t) { return project(t, conv2d(t, x, w, b, Geometry2d{1, 2, 1, 1}), 99); },
        {x, w, b});
    EXPECT_LT(err, kTol);
  }
}

TEST(Conv1d, IdentityAndOnes) {
  const Tensor<double> x = no_grad(random_tensor({1, 1, 7}, 2));
  const Tensor<double> y = conv1d<double>(nullptr, x, Tensor<double>({1, 1, 1}, 1.0), {}, 1, 0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  const Tensor<double> s = conv1d<double>(nullptr, Tensor<double>({1, 2, 3}, 1.0),
                                          Tensor<double>({1, 2, 3}, 1.0), {}, 1, 0);
  EXPECT_EQ(s.item(), 6.0);
}

TEST(Conv1d, GradientsMatchFiniteDifferences) {
  Tensor<double> x = random_tensor({2, 2, 9}, 3);
  Tensor<double> w = random_tensor({3, 2, 5}, 4);
  Tensor<double> b = random_tensor({3}, 5);
  EXPECT_LT(tape_vs_numeric([&](Tape<double>* t) { return project(t, conv1d(t, x, w, b, 2, 2), 7); },
                            {x, w, b}),
            kTol);
}

TEST(RowwiseConv1d, MatchesPerRowConv1d) {
  const Tensor<double> x = no_grad(random_tensor({2, 2, 3, 8}, 6));
  const Tensor<double> w = no_grad(random_tensor({3, 4, 2, 5}, 7));
  const Tensor<double> b = no_grad(random_tensor({3, 4}, 8));
  const Tensor<double> y = rowwise_conv1d<double>(nullptr, x, w, b, 2, 2);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 3, 4}));
  for (std::size_t h = 0; h < 3; ++h) {
    Tensor<double> xr({2, 2, 8}), wr({4, 2, 5}), br({4});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 8; ++i) xr.data()[(n * 2 + c) * 8 + i] = x.data()[((n * 2 + c) * 3 + h) * 8 + i];
    std::copy_n(w.data().begin() + static_cast<std::ptrdiff_t>(h * 40), 40, wr.data().begin());
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(h * 4), 4, br.data().begin());
    const Tensor<double> yr = conv1d<double>(nullptr, xr, wr, br, 2, 2);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < 4; ++i)
          EXPECT_NEAR(y.data()[((n * 4 + c) * 3 + h) * 4 + i], yr.data()[(n * 4 + c) * 4 + i], 1e-12);
  }
}

TEST(RowwiseConv1d, GradientsPerRowAndShared) {
  for (std::size_t groups : {std::size_t{3}, std::size_t{1}}) {
    Tensor<double> x = random_tensor({2, 2, 3, 8}, 9);
    Tensor<double> w = random_tensor({groups, 2, 2, 5}, 10);
    Tensor<double> b = random_tensor({groups, 2}, 11);
    EXPECT_LT(tape_vs_numeric(
                  [&](Tape<double>* t) { return project(t, rowwise_conv1d(t, x, w, b, 2, 2), 12); },
                  {x, w, b}),
              kTol);
  }
}

TEST(ConvTranspose2d, IdentityAndOnes) {
  const Tensor<double> x = no_grad(random_tensor({1, 1, 2, 3}, 13));
  const Tensor<double> y = conv_transpose2d<double>(nullptr, x, Tensor<double>({1, 1, 1, 1}, 1.0), {}, {});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  const Tensor<double> o = conv_transpose2d<double>(nullptr, Tensor<double>({1, 1, 1, 1}, 1.0),
                                                    Tensor<double>({1, 1, 3, 3}, 1.0), {}, {});
  ASSERT_EQ(o.shape(), (Shape{1, 1, 3, 3}));
  for (double v : o.data()) EXPECT_EQ(v, 1.0);
}

TEST(ConvTranspose2d, OutputExtent) {
  const Tensor<double> y = conv_transpose2d<double>(nullptr, Tensor<double>({1, 2, 12, 32}),
                                                    Tensor<double>({2, 3, 3, 4}), {},
                                                    Geometry2d{1, 2, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 3, 12, 64}));
}

TEST(ConvTranspose2d, GradientsMatchFiniteDifferences) {
  Tensor<double> x = random_tensor({2, 2, 3, 4}, 14);
  Tensor<double> w = random_tensor({2, 3, 3, 4}, 15);
  Tensor<double> b = random_tensor({3}, 16);
  EXPECT_LT(tape_vs_numeric(
                [&](Tape<double>* t) {
                  return project(t, conv_transpose2d(t, x, w, b, Geometry2d{1, 2, 1, 1}), 17);
                },
                {x, w, b}),
            kTol);
}

TEST(ConvTranspose2d, AdjointOfConv2d) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Geometry2d geo{2, 2, 1, 2};
    const Tensor<double> x = no_grad(random_tensor({2, 3, 7, 9}, seed));
    const Tensor<double> w = no_grad(random_tensor({4, 3, 3, 5}, seed + 1));
    const Tensor<double> cx = conv2d<double>(nullptr, x, w, {}, geo);
    const Tensor<double> y = no_grad(random_tensor(cx.shape(), seed + 2));
    const Tensor<double> ty = conv_transpose2d<double>(nullptr, y, w, {}, geo);
    ASSERT_EQ(ty.shape(), x.shape());
    const double lhs = dot(cx, y), rhs = dot(x, ty);
    EXPECT_LT(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12), 1e-5);
  }
}

TEST(BatchNorm, StandardizedBatchPassesThrough) {
  // Each channel already has zero mean and unit (biased) variance.
  Tensor<double> x({4, 1, 1, 2}, std::vector<double>{1, -1, 1, -1, -1, 1, -1, 1});
  BatchNormStats<double> stats{Tensor<double>({1}, 0.0), Tensor<double>({1}, 1.0)};
  const Tensor<double> y = batch_norm<double>(nullptr, x, Tensor<double>({1}, 1.0),
                                              Tensor<double>({1}, 0.0), stats, Mode::kTrain);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5);
  // Running stats moved 10% toward the batch statistics (unbiased variance 8/7).
  EXPECT_NEAR(stats.running_mean.item(), 0.0, 1e-12);
  EXPECT_NEAR(stats.running_var.item(), 0.9 + 0.1 * 8.0 / 7.0, 1e-12);
}

TEST(BatchNorm, ConstantBatchGivesZeros) {
  Tensor<double> x({3, 2, 2, 2}, 4.0);
  BatchNormStats<double> stats{Tensor<double>({2}, 0.0), Tensor<double>({2}, 1.0)};
  const Tensor<double> y = batch_norm<double>(nullptr, x, Tensor<double>({2}, 1.0),
                                              Tensor<double>({2}, 0.0), stats, Mode::kTrain);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  Tensor<double> x = no_grad(random_tensor({2, 1, 1, 3}, 20));
  BatchNormStats<double> stats{Tensor<double>({1}, 0.5), Tensor<double>({1}, 4.0)};
  const Tensor<double> y = batch_norm<double>(nullptr, x, Tensor<double>({1}, 2.0),
                                              Tensor<double>({1}, 0.25), stats, Mode::kEval);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y.data()[i], 2.0 * (x.data()[i] - 0.5) / std::sqrt(4.0 + 1e-5) + 0.25, 1e-12);
  }
  EXPECT_EQ(stats.running_mean.item(), 0.5);
}

TEST(BatchNorm, GradientsPerChannelAndPerRow) {
  BatchNormStats<double> s1{Tensor<double>({2}, 0.0), Tensor<double>({2}, 1.0)};
  Tensor<double> x = random_tensor({3, 2, 2, 3}, 21);
  Tensor<double> g = random_tensor({2}, 22, 0.5, 1.5);
  Tensor<double> b = random_tensor({2}, 23);
  EXPECT_LT(tape_vs_numeric(
                [&](Tape<double>* t) { return project(t, batch_norm(t, x, g, b, s1, Mode::kTrain), 24); },
                {x, g, b}),
            kTol);
  BatchNormStats<double> s2{Tensor<double>({2, 2}, 0.0), Tensor<double>({2, 2}, 1.0)};
  Tensor<double> gr = random_tensor({2, 2}, 25, 0.5, 1.5);
  Tensor<double> br = random_tensor({2, 2}, 26);
  EXPECT_LT(tape_vs_numeric(
                [&](Tape<double>* t) { return project(t, batch_norm(t, x, gr, br, s2, Mode::kTrain), 27); },
                {x, gr, br}),
            kTol);
}

TEST(LeakyRelu, ValuesAndSlope) {
  Tensor<double> x({2}, std::vector<double>{3.0, -1.0}, true);
  Tape<double> tape;
  Tensor<double> y = leaky_relu(&tape, x, 0.2);
  EXPECT_EQ(y.data()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.data()[1], -0.2);
  Tensor<double> s = sum(&tape, y);
  tape.backward(s);
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.2);
}

TEST(LeakyRelu, LibraryFdCheckIsTight) {
  Tensor<double> x = away_from_zero(random_tensor({40}, 30));
  const double err = fd_check([&](Tape<double>* t) { return project(t, leaky_relu(t, x, 0.2), 31); }, {x});
  EXPECT_LT(err, 1e-6);
}

TEST(Tanh, ValuesAndGradient) {
  const Tensor<double> z = tanh<double>(nullptr, Tensor<double>({3}, std::vector<double>{0.0, 40.0, -40.0}));
  EXPECT_EQ(z.data()[0], 0.0);
  EXPECT_EQ(z.data()[1], 1.0);
  EXPECT_EQ(z.data()[2], -1.0);
  Tensor<double> x = random_tensor({10}, 32, -2, 2);
  EXPECT_LT(tape_vs_numeric([&](Tape<double>* t) { return project(t, tanh(t, x), 33); }, {x}), kTol);
}

TEST(Dropout, IdentityCases) {
  const Tensor<double> x = no_grad(random_tensor({50}, 34));
  const Tensor<double> e = dropout<double>(nullptr, x, 0.2, Mode::kEval, 1);
  const Tensor<double> z = dropout<double>(nullptr, x, 0.0, Mode::kTrain, 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(e.data()[i], x.data()[i]);
    EXPECT_EQ(z.data()[i], x.data()[i]);
  }
}

TEST(Dropout, DropRateAndRescale) {
  const Tensor<double> x({100000}, 1.0);
  const Tensor<double> y = dropout<double>(nullptr, x, 0.2, Mode::kTrain, 7);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.25);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.2, 0.01);
  const Tensor<double> again = dropout<double>(nullptr, x, 0.2, Mode::kTrain, 7);
  EXPECT_EQ(again.values(), y.values());
}

TEST(Dropout, GradientFollowsMask) {
  Tensor<double> x = random_tensor({30}, 35);
  EXPECT_LT(tape_vs_numeric([&](Tape<double>* t) { return project(t, dropout(t, x, 0.3, Mode::kTrain, 5), 36); },
                            {x}),
            kTol);
}

TEST(Concat, ValuesAndGradient) {
  const Tensor<double> c = concat<double>(nullptr, {Tensor<double>({1}, 1.0), Tensor<double>({1}, 2.0)}, 0);
  EXPECT_EQ(c.values(), (std::vector<double>{1, 2}));
  Tensor<double> a = random_tensor({2, 1, 3}, 37);
  Tensor<double> b = random_tensor({2, 2, 3}, 38);
  const Tensor<double> ab = concat<double>(nullptr, {a, b}, 1);
  EXPECT_EQ(ab.shape(), (Shape{2, 3, 3}));
  EXPECT_EQ(ab.data()[9], a.data()[3]);
  EXPECT_EQ(ab.data()[12], b.data()[6]);
  EXPECT_LT(tape_vs_numeric([&](Tape<double>* t) { return project(t, concat<double>(t, {a, b}, 1), 39); },
                            {a, b}),
            kTol);
}

TEST(Backward, SumOfSquares) {
  Tensor<double> x({1}, 3.0, true);
  Tape<double> tape;
  Tensor<double> y = sum(&tape, mul(&tape, x, x));
  tape.backward(y);
  EXPECT_EQ(y.item(), 9.0);
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, ElementwiseOpsAndReshape) {
  Tensor<double> a = random_tensor({2, 3}, 40);
  Tensor<double> b = random_tensor({2, 3}, 41);
  EXPECT_LT(tape_vs_numeric(
                [&](Tape<double>* t) {
                  Tensor<double> y = add(t, mul(t, a, b), scale(t, a, -1.5));
                  return project(t, reshape(t, y, {3, 2}), 42);
                },
                {a, b}),
            kTol);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor<double> x({1}, 2.0, true);
  Tape<double> tape;
  Tensor<double> y = mul(&tape, x, x);
  Tensor<double> z = sum(&tape, add(&tape, y, y));  // 2x^2
  tape.backward(z);
  EXPECT_EQ(x.grad()[0], 8.0);
}

TEST(LossOps, GradientsMatchFiniteDifferences) {
  Tensor<double> p = random_tensor({2, 3, 16}, 43);
  Tensor<double> target = no_grad(random_tensor({2, 3, 16}, 44));
  EXPECT_LT(tape_vs_numeric([&](Tape<double>* t) { return mse_loss(t, p, target); }, {p}), kTol);
  EXPECT_LT(tape_vs_numeric([&](Tape<double>* t) { return pearson_loss(t, p, target, 1e-8); }, {p}), kTol);
}
