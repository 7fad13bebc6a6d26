#include <gtest/gtest.h>

#include <cmath>

#include "gestnet/gradcheck.hpp"
#include "gestnet/ops.hpp"
#include "gestnet/rng.hpp"

using namespace gestnet;

// ---------------------------------------------------------------------------
// mish
// ---------------------------------------------------------------------------

TEST(MishTest, KnownValues) {
  Tensor x({4}, {0.0, 1.0, 0.5, -1.0});
  Tensor y = mish(x);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  // frozen from a 40-digit evaluation of x*tanh(ln(1+e^x))
  EXPECT_NEAR(y[1], 0.8650983882673103, 1e-15);
  EXPECT_NEAR(y[2], 0.3752452113048951, 1e-15);
  EXPECT_NEAR(y[3], -0.3034014613741089, 1e-15);
}

TEST(MishTest, StableForLargeNegative) {
  Tensor y = mish(Tensor({1}, {-20.0}));
  EXPECT_NEAR(y[0], -4.1223072406287614e-8, 1e-20);
  EXPECT_LT(std::abs(y[0]), 1e-7);
  // far tail underflows to zero instead of NaN
  Tensor z = mish(Tensor({1}, {-1000.0}));
  EXPECT_EQ(z[0], 0.0);
}

TEST(MishTest, AsymptoticIdentity) {
  Tensor y = mish(Tensor({1}, {30.0}));
  EXPECT_GT(y[0] / 30.0, 0.999999);
  Tensor big = mish(Tensor({1}, {1000.0}));
  EXPECT_DOUBLE_EQ(big[0], 1000.0);
}

// ---------------------------------------------------------------------------
// softmax / log_softmax
// ---------------------------------------------------------------------------

TEST(SoftmaxTest, Symmetry) {
  Tensor y = softmax(Tensor({2}, {0.0, 0.0}), 0);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(SoftmaxTest, KnownValue) {
  Tensor y = softmax(Tensor({2}, {1.0, 0.0}), 0);
  EXPECT_NEAR(y[0], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(y[1], 0.2689414213699951, 1e-15);
}

TEST(SoftmaxTest, ShiftInvariance) {
  Rng rng(3);
  std::vector<double> v(14);
  for (auto& x : v) x = rng.uniform(-5, 5);
  Tensor a = softmax(Tensor({14}, v), 0);
  for (auto& x : v) x += 123.456;
  Tensor b = softmax(Tensor({14}, v), 0);
  for (std::size_t i = 0; i < 14; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(SoftmaxTest, RowsSumToOne) {
  Rng rng(4);
  std::vector<double> v(6 * 9);
  for (auto& x : v) x = rng.uniform(-30, 30);
  Tensor y = softmax(Tensor({6, 9}, v), 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      s += y[r * 9 + j];
      EXPECT_GT(y[r * 9 + j], 0.0);
      EXPECT_LT(y[r * 9 + j], 1.0);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SoftmaxTest, MiddleAxis) {
  // softmax over axis 1 of [2,3,2] equals per-column softmax of each 3-vector
  Rng rng(5);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.uniform(-2, 2);
  Tensor y = softmax(Tensor({2, 3, 2}, v), 1);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t in = 0; in < 2; ++in) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += y[(b * 3 + j) * 2 + in];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(SoftmaxTest, GradCheck) {
  Rng rng(6);
  std::vector<double> v(8);
  for (auto& x : v) x = rng.uniform(-3, 3);
  Tensor x({2, 4}, v);
  auto f = [](const Tensor& t) {
    Tensor w({2, 4}, {0.3, -0.7, 1.1, 0.2, -0.5, 0.9, -1.3, 0.4});
    return sum_all(mul(softmax(t, 1), w));
  };
  EXPECT_LT(finite_difference_check(f, x), 1e-6);
}

TEST(LogSoftmaxTest, MatchesLogOfSoftmax) {
  Rng rng(7);
  std::vector<double> v(10);
  for (auto& x : v) x = rng.uniform(-4, 4);
  Tensor x({2, 5}, v);
  Tensor a = log_softmax(x, 1);
  Tensor b = softmax(x, 1);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(a[i], std::log(b[i]), 1e-12);
}

TEST(LogSoftmaxTest, GradCheck) {
  Rng rng(8);
  std::vector<double> v(8);
  for (auto& x : v) x = rng.uniform(-3, 3);
  Tensor x({2, 4}, v);
  auto f = [](const Tensor& t) {
    Tensor w({2, 4}, {1.0, 0.0, -0.2, 0.8, 0.1, -0.4, 0.6, 0.2});
    return sum_all(mul(log_softmax(t, 1), w));
  };
  EXPECT_LT(finite_difference_check(f, x), 1e-6);
}

// ---------------------------------------------------------------------------
// cumax
// ---------------------------------------------------------------------------

TEST(CumaxTest, UniformInput) {
  const std::size_t n = 5;
  Tensor y = cumax(Tensor::zeros({n}), 0);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(y[i], static_cast<double>(i + 1) / static_cast<double>(n), 1e-12);
  }
}

TEST(CumaxTest, StepAtLargeValue) {
  // +30 at index 2 of a zero vector -> ~0 before, ~1 from index 2 on
  Tensor y = cumax(Tensor({5}, {0, 0, 30, 0, 0}), 0);
  EXPECT_LT(y[0], 1e-12);
  EXPECT_LT(y[1], 1e-12);
  EXPECT_GT(y[2], 1.0 - 1e-12);
  EXPECT_GT(y[4], 1.0 - 1e-12);
}

TEST(CumaxTest, MonotoneEndsAtOne) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(12);
    for (auto& x : v) x = rng.uniform(-10, 10);
    Tensor y = cumax(Tensor({12}, v), 0);
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_GE(y[i], 0.0);
      EXPECT_LE(y[i], 1.0);
      if (i) EXPECT_GE(y[i], y[i - 1]);
    }
    EXPECT_NEAR(y[11], 1.0, 1e-12);
  }
}

TEST(CumaxTest, GradCheck) {
  Rng rng(10);
  std::vector<double> v(9);
  for (auto& x : v) x = rng.uniform(-2, 2);
  Tensor x({3, 3}, v);
  auto f = [](const Tensor& t) {
    Tensor w({3, 3}, {0.5, -1.0, 0.25, 0.8, 0.3, -0.6, 1.2, -0.1, 0.7});
    return sum_all(mul(cumax(t, 1), w));
  };
  EXPECT_LT(finite_difference_check(f, x), 1e-6);
}

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

TEST(LayerNormTest, ConstantInputIsZero) {
  Tensor x({2, 4}, std::vector<double>(8, 3.5));
  Tensor y = layer_norm(x, Tensor::ones({4}), Tensor::zeros({4}), 1e-5);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y[i], 0.0, 1e-9);
}

TEST(LayerNormTest, NormalizesEachRow) {
  Rng rng(11);
  std::vector<double> v(3 * 6);
  for (auto& x : v) x = rng.uniform(-5, 5);
  Tensor y = layer_norm(Tensor({3, 6}, v), Tensor::ones({6}), Tensor::zeros({6}), 1e-12);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 6; ++j) mu += y[r * 6 + j];
    mu /= 6.0;
    for (std::size_t j = 0; j < 6; ++j) var += (y[r * 6 + j] - mu) * (y[r * 6 + j] - mu);
    var /= 6.0;
    EXPECT_NEAR(mu, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(LayerNormTest, HandComputedPair) {
  Tensor y = layer_norm(Tensor({1, 2}, {1.0, 3.0}), Tensor::ones({2}), Tensor::zeros({2}), 0.0);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNormTest, DimensionMismatchRejected) {
  Tensor x({2, 4}, std::vector<double>(8, 1.0));
  EXPECT_THROW(layer_norm(x, Tensor::ones({3}), Tensor::zeros({4}), 1e-5), ShapeError);
}

TEST(LayerNormTest, GradCheck) {
  Rng rng(12);
  std::vector<double> xv(2 * 5);
  for (auto& x : xv) x = rng.uniform(-2, 2);
  Tensor x({2, 5}, xv);
  Tensor gamma({5}, {1.1, 0.9, 1.3, 0.7, 1.0}, true);
  Tensor beta({5}, {0.1, -0.2, 0.0, 0.3, -0.1}, true);
  Tensor probe(x.shape(), x.values(), true);
  auto f = [&]() { return mean_all(mul(layer_norm(probe, gamma, beta, 1e-5),
                                       layer_norm(probe, gamma, beta, 1e-5))); };
  EXPECT_LT(finite_difference_check(f, {probe, gamma, beta}), 1e-6);
}

// ---------------------------------------------------------------------------
// batch_norm
// ---------------------------------------------------------------------------

TEST(BatchNormTest, HandComputedTrainMode) {
  // batch {0, 2} over one feature, eps 0 -> {-1, +1}
  Tensor x({2, 1}, {0.0, 2.0});
  std::vector<double> rm{0.0}, rv{1.0};
  Tensor y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, true, 0.1, 0.0);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
  // running stores moved toward batch stats (momentum 0.1)
  EXPECT_NEAR(rm[0], 0.1, 1e-12);
  EXPECT_NEAR(rv[0], 0.9 * 1.0 + 0.1 * 1.0, 1e-12);
}

TEST(BatchNormTest, EvalUsesRunningStats) {
  Tensor x({2, 1}, {1.0, 5.0});
  std::vector<double> rm{1.0}, rv{4.0};
  Tensor y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, false, 0.1, 0.0);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], 2.0, 1e-12);
  // eval must not touch the stores
  EXPECT_DOUBLE_EQ(rm[0], 1.0);
  EXPECT_DOUBLE_EQ(rv[0], 4.0);
}

TEST(BatchNormTest, GradCheckTrainMode) {
  Rng rng(13);
  std::vector<double> xv(4 * 3);
  for (auto& x : xv) x = rng.uniform(-2, 2);
  Tensor x({4, 3}, xv, true);
  Tensor gamma({3}, {1.2, 0.8, 1.0}, true);
  Tensor beta({3}, {0.0, 0.1, -0.2}, true);
  std::vector<double> rm(3, 0.0), rv(3, 1.0);
  std::vector<double> wv(4 * 3);
  for (auto& v : wv) v = rng.uniform(0.2, 1.5);  // keep column sums well away from zero
  Tensor w({4, 3}, wv);
  auto f = [&]() {
    return sum_all(mul(batch_norm(x, gamma, beta, rm, rv, true, 0.1, 1e-5), w));
  };
  EXPECT_LT(finite_difference_check(f, {x, gamma, beta}), 1e-6);
}

TEST(BatchNormTest, GradCheckEvalMode) {
  Rng rng(14);
  std::vector<double> xv(3 * 2);
  for (auto& x : xv) x = rng.uniform(-2, 2);
  Tensor x({3, 2}, xv, true);
  Tensor gamma({2}, {1.1, 0.9}, true);
  Tensor beta({2}, {0.2, -0.1}, true);
  std::vector<double> rm{0.3, -0.2}, rv{1.5, 0.8};
  auto f = [&]() {
    Tensor y = batch_norm(x, gamma, beta, rm, rv, false, 0.1, 1e-5);
    return mean_all(mul(y, y));
  };
  EXPECT_LT(finite_difference_check(f, {x, gamma, beta}), 1e-6);
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

TEST(DropoutTest, IdentityAtZeroAndEval) {
  Rng rng(15);
  Tensor x({4}, {1, 2, 3, 4});
  Tensor a = dropout(x, 0.0, true, rng);
  Tensor b = dropout(x, 0.5, false, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(a[i], x[i]);
    EXPECT_DOUBLE_EQ(b[i], x[i]);
  }
}

TEST(DropoutTest, InvertedScaling) {
  Rng rng(16);
  const std::size_t n = 100000;
  Tensor x({n}, std::vector<double>(n, 1.0));
  Tensor y = dropout(x, 0.5, true, rng);
  double mean = 0.0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(y[i], 2.0);  // 1/(1-p)
    }
    mean += y[i];
  }
  mean /= static_cast<double>(n);
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.01);
}

TEST(DropoutTest, InvalidProbabilityRejected) {
  Rng rng(17);
  Tensor x({2}, {1, 2});
  EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ConfigError);
}

TEST(DropoutTest, GradCheckThroughFixedMask) {
  std::vector<double> xv{0.5, -1.2, 2.0, 0.8, -0.3, 1.5};
  Tensor x({6}, xv);
  auto f = [](const Tensor& t) {
    Rng rng(42);  // reseeded per call -> identical mask
    return sum_all(mish(dropout(t, 0.5, true, rng)));
  };
  EXPECT_LT(finite_difference_check(f, x), 1e-6);
}

// ---------------------------------------------------------------------------
// primitive-wide finite-difference sweep (randomized small shapes)
// ---------------------------------------------------------------------------

TEST(PrimitiveSweepTest, AllPrimitivesPassGradCheck) {
  Rng rng(18);
  auto rand_tensor = [&](Shape s, double lo, double hi) {
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(s), std::move(v));
  };

  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
    Tensor x;
  };
  const std::vector<Case> cases = {
      {"add", [&](const Tensor& t) { return sum_all(mul(add(t, t), t)); }, rand_tensor({3, 3}, -2, 2)},
      {"sub",
       [&](const Tensor& t) {
         Tensor c({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
         return sum_all(mul(sub(t, c), sub(t, c)));
       },
       rand_tensor({3, 3}, -2, 2)},
      {"mul", [](const Tensor& t) { return sum_all(mul(t, mul(t, t))); }, rand_tensor({4}, -2, 2)},
      {"affine", [](const Tensor& t) { return mean_all(affine(t, 2.5, -0.5)); }, rand_tensor({5}, -2, 2)},
      {"add_broadcast",
       [](const Tensor& t) {
         Tensor bias({4}, {0.1, -0.2, 0.3, -0.4});
         return sum_all(gestnet::tanh(add_broadcast(t, bias)));
       },
       rand_tensor({2, 3, 4}, -1, 1)},
      {"matmul2d",
       [](const Tensor& t) {
         Tensor w({3, 2}, {0.5, -0.3, 0.2, 0.8, -0.6, 0.4});
         return sum_all(matmul(t, w));
       },
       rand_tensor({2, 3}, -1, 1)},
      {"reshape+permute",
       [](const Tensor& t) { return mean_all(mul(permute(reshape(t, {2, 3, 2}), {1, 0, 2}), permute(reshape(t, {2, 3, 2}), {1, 0, 2}))); },
       rand_tensor({12}, -1, 1)},
      {"sigmoid", [](const Tensor& t) { return sum_all(sigmoid(t)); }, rand_tensor({7}, -4, 4)},
      {"tanh", [](const Tensor& t) { return sum_all(gestnet::tanh(t)); }, rand_tensor({7}, -3, 3)},
      {"exp", [](const Tensor& t) { return sum_all(gestnet::exp(t)); }, rand_tensor({5}, -2, 1)},
      {"ln", [](const Tensor& t) { return sum_all(ln(t)); }, rand_tensor({5}, 0.5, 3)},
      {"softplus", [](const Tensor& t) { return sum_all(softplus(t)); }, rand_tensor({6}, -4, 4)},
      {"mean", [](const Tensor& t) { return mean_all(mul(t, t)); }, rand_tensor({6}, -2, 2)},
  };
  for (const auto& c : cases) {
    const double err = finite_difference_check(c.f, c.x);
    EXPECT_LT(err, 1e-5) << "primitive: " << c.name;
  }
}
