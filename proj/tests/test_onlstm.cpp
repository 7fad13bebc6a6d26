#include <gtest/gtest.h>

#include <cmath>

#include "gestnet/gradcheck.hpp"
#include "gestnet/onlstm.hpp"

using namespace gestnet;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(s), std::move(v));
}

void zero_params(ParamRegistry& reg) {
  for (auto& p : reg.params()) {
    auto& v = p.tensor.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

std::size_t layer_count(std::size_t in, std::size_t hidden, std::size_t chunk) {
  const std::size_t master = hidden / chunk;
  return (in + hidden) * 4 * hidden + 4 * hidden       // packed f,i,o,candidate
         + (in + hidden) * 2 * master + 2 * master;    // master forget/input
}

/// Plain-loop single-cell oracle: scalar LSTM with chunked master gates,
/// independent of the tensor op implementations.
struct CellOracle {
  std::size_t in, hidden, chunk;
  // column-major access mirrors Linear's [rows=in+hidden, cols] layout
  std::vector<double> gw, gb, mw, mb;

  static double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  std::pair<std::vector<double>, std::vector<double>> step(const std::vector<double>& x,
                                                           const std::vector<double>& h,
                                                           const std::vector<double>& c) const {
    const std::size_t master = hidden / chunk;
    std::vector<double> z(x);
    z.insert(z.end(), h.begin(), h.end());
    auto affine_col = [&](const std::vector<double>& w, const std::vector<double>& b,
                          std::size_t cols, std::size_t j) {
      double acc = b[j];
      for (std::size_t r = 0; r < z.size(); ++r) acc += z[r] * w[r * cols + j];
      return acc;
    };
    std::vector<double> f(hidden), i(hidden), o(hidden), cand(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      f[j] = sig(affine_col(gw, gb, 4 * hidden, j));
      i[j] = sig(affine_col(gw, gb, 4 * hidden, hidden + j));
      o[j] = sig(affine_col(gw, gb, 4 * hidden, 2 * hidden + j));
      cand[j] = std::tanh(affine_col(gw, gb, 4 * hidden, 3 * hidden + j));
    }
    // master gates: softmax then cumulative sum
    auto master_gate = [&](std::size_t offset) {
      std::vector<double> raw(master);
      double mx = -1e300;
      for (std::size_t j = 0; j < master; ++j) {
        raw[j] = affine_col(mw, mb, 2 * master, offset + j);
        mx = std::max(mx, raw[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < master; ++j) denom += std::exp(raw[j] - mx);
      std::vector<double> out(master);
      double run = 0.0;
      for (std::size_t j = 0; j < master; ++j) {
        run += std::exp(raw[j] - mx) / denom;
        out[j] = run;
      }
      return out;
    };
    const auto mf_small = master_gate(0);
    const auto mi_small = master_gate(master);
    std::vector<double> c2(hidden), h2(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      const double mf = mf_small[j / chunk];
      const double mi = 1.0 - mi_small[j / chunk];
      const double w = mf * mi;
      const double fe = f[j] * w + (mf - w);
      const double ie = i[j] * w + (mi - w);
      c2[j] = fe * c[j] + ie * cand[j];
      h2[j] = o[j] * std::tanh(c2[j]);
    }
    return {h2, c2};
  }
};

}  // namespace

TEST(OnLstmLayerTest, ParameterCounts) {
  Rng rng(50);
  OnLstmLayer l1(66, 660, 33, rng);
  OnLstmLayer l2(660, 660, 33, rng);
  ParamRegistry reg;
  l1.collect("layer1", reg);
  l2.collect("layer2", reg);
  EXPECT_EQ(reg.total_count("layer1"), 1948360u);
  EXPECT_EQ(reg.total_count("layer2"), 3540280u);
  EXPECT_EQ(reg.total_count("layer1"), layer_count(66, 660, 33));
  EXPECT_EQ(reg.total_count("layer2"), layer_count(660, 660, 33));
  // base-gate portion alone: 1,919,280 and 3,487,440
  EXPECT_EQ(reg.total_count("layer1.gates"), 1919280u);
  EXPECT_EQ(reg.total_count("layer2.gates"), 3487440u);
  EXPECT_EQ(reg.total_count("layer1.master"), 29080u);
  EXPECT_EQ(reg.total_count("layer2.master"), 52840u);
}

TEST(OnLstmLayerTest, ChunkMustDivideHidden) {
  Rng rng(51);
  EXPECT_THROW(OnLstmLayer(4, 6, 4, rng), ConfigError);
  OnLstmConfig bad;
  bad.hidden = 10;
  bad.chunk = 3;
  EXPECT_THROW(OnLstmNet(bad, rng), ConfigError);
}

TEST(OnLstmLayerTest, ZeroEverythingGivesZeroState) {
  Rng rng(52);
  OnLstmLayer layer(4, 6, 3, rng);
  ParamRegistry reg;
  layer.collect("l", reg);
  zero_params(reg);
  auto s = layer.initial_state(2);
  auto next = layer.step(Tensor::zeros({2, 4}), s);
  for (std::size_t i = 0; i < next.c.numel(); ++i) {
    EXPECT_DOUBLE_EQ(next.c[i], 0.0);
    EXPECT_DOUBLE_EQ(next.h[i], 0.0);
  }
}

TEST(OnLstmLayerTest, GateRangesHold) {
  Rng rng(53);
  OnLstmLayer layer(5, 8, 2, rng);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_tensor({3, 5}, rng, -3, 3);
    OnLstmLayer::State s{random_tensor({3, 8}, rng, -0.9, 0.9), random_tensor({3, 8}, rng, -2, 2)};
    OnLstmLayer::StepTrace trace;
    auto next = layer.step(x, s, &trace);
    for (std::size_t i = 0; i < trace.overlap.numel(); ++i) {
      EXPECT_GE(trace.overlap[i], 0.0);
      EXPECT_LE(trace.overlap[i], 1.0);
      EXPECT_GE(trace.forget_eff[i], 0.0);
      EXPECT_LE(trace.forget_eff[i], 1.0);
      EXPECT_GE(trace.input_eff[i], 0.0);
      EXPECT_LE(trace.input_eff[i], 1.0);
    }
    for (std::size_t i = 0; i < next.h.numel(); ++i) {
      EXPECT_GT(next.h[i], -1.0);
      EXPECT_LT(next.h[i], 1.0);
    }
  }
}

TEST(OnLstmLayerTest, MasterGatesMonotone) {
  Rng rng(54);
  OnLstmLayer layer(6, 12, 3, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({2, 6}, rng, -2, 2);
    OnLstmLayer::State s{random_tensor({2, 12}, rng, -0.9, 0.9),
                         random_tensor({2, 12}, rng, -1, 1)};
    auto [mf, mi] = layer.master_gates(x, s);
    const std::size_t m = 4;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t j = 1; j < m; ++j) {
        EXPECT_GE(mf[r * m + j], mf[r * m + j - 1]);  // forget non-decreasing
        EXPECT_LE(mi[r * m + j], mi[r * m + j - 1]);  // input non-increasing
      }
    }
  }
}

TEST(OnLstmLayerTest, MatchesScalarOracleMasterDimOne) {
  // chunk == hidden -> master dim 1: cumax of a single logit is exactly 1
  Rng rng(55);
  const std::size_t in = 3, hidden = 2, chunk = 2;
  OnLstmLayer layer(in, hidden, chunk, rng);
  CellOracle oracle{in, hidden, chunk, layer.gates.weight.values(), layer.gates.bias.values(),
                    layer.master.weight.values(), layer.master.bias.values()};

  std::vector<double> xv{0.4, -0.7, 1.1}, hv{0.2, -0.3}, cv{0.5, -0.8};
  auto [h2, c2] = oracle.step(xv, hv, cv);
  // with master dim 1: forget = 1, input = 0, so c' = c exactly
  EXPECT_DOUBLE_EQ(c2[0], cv[0]);
  EXPECT_DOUBLE_EQ(c2[1], cv[1]);

  OnLstmLayer::State s{Tensor({1, hidden}, hv), Tensor({1, hidden}, cv)};
  auto next = layer.step(Tensor({1, in}, xv), s);
  for (std::size_t j = 0; j < hidden; ++j) {
    EXPECT_NEAR(next.c[j], c2[j], 1e-12);
    EXPECT_NEAR(next.h[j], h2[j], 1e-12);
  }
}

TEST(OnLstmLayerTest, MatchesScalarOracleChunked) {
  Rng rng(56);
  const std::size_t in = 4, hidden = 6, chunk = 2;  // master dim 3
  OnLstmLayer layer(in, hidden, chunk, rng);
  CellOracle oracle{in, hidden, chunk, layer.gates.weight.values(), layer.gates.bias.values(),
                    layer.master.weight.values(), layer.master.bias.values()};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> xv(in), hv(hidden), cv(hidden);
    for (auto& v : xv) v = rng.uniform(-2, 2);
    for (auto& v : hv) v = rng.uniform(-0.9, 0.9);
    for (auto& v : cv) v = rng.uniform(-2, 2);
    auto [h2, c2] = oracle.step(xv, hv, cv);
    OnLstmLayer::State s{Tensor({1, hidden}, hv), Tensor({1, hidden}, cv)};
    auto next = layer.step(Tensor({1, in}, xv), s);
    for (std::size_t j = 0; j < hidden; ++j) {
      EXPECT_NEAR(next.c[j], c2[j], 1e-12);
      EXPECT_NEAR(next.h[j], h2[j], 1e-12);
    }
  }
}

TEST(OnLstmLayerTest, CellStateBoundGrowsLinearly) {
  Rng rng(57);
  OnLstmLayer layer(4, 6, 3, rng);
  auto s = layer.initial_state(2);
  for (std::size_t t = 1; t <= 20; ++t) {
    s = layer.step(random_tensor({2, 4}, rng, -5, 5), s);
    for (std::size_t i = 0; i < s.c.numel(); ++i) {
      EXPECT_LE(std::abs(s.c[i]), static_cast<double>(t) + 1e-12);
    }
  }
}

TEST(OnLstmLayerTest, ThreeStepGradCheck) {
  // acceptance configuration: input 4, hidden 6, chunk 3, 3 timesteps
  Rng rng(58);
  OnLstmLayer layer(4, 6, 3, rng);
  ParamRegistry reg;
  layer.collect("cell", reg);
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({2, 6}, rng, 0.3, 1.0);
  auto f = [&]() {
    auto s = layer.initial_state(2);
    for (std::size_t t = 0; t < 3; ++t) {
      s = layer.step(reshape(slice(x, 1, t, 1), {2, 4}), s);
    }
    return sum_all(mul(s.h, w));
  };
  std::vector<Tensor> leaves;
  for (auto& p : reg.params()) leaves.push_back(p.tensor);
  EXPECT_LT(finite_difference_check(f, leaves), 1e-5);
}

TEST(OnLstmNetTest, FullSizeParameterCounts) {
  Rng rng(59);
  OnLstmConfig cfg;  // full size: 66 -> 660/33 -> 660/33 -> head
  OnLstmNet net(cfg, rng);
  ParamRegistry reg;
  net.collect("onlstm", reg);
  EXPECT_EQ(reg.total_count("onlstm.layer1"), 1948360u);
  EXPECT_EQ(reg.total_count("onlstm.layer2"), 3540280u);
  EXPECT_EQ(reg.total_count("onlstm.head.fc1"), 338432u);
  EXPECT_EQ(reg.total_count("onlstm.head.fc2"), 262656u);
  EXPECT_EQ(reg.total_count("onlstm.head.fc3"), 7182u);
  EXPECT_EQ(reg.total_count("onlstm.head.bn3"), 56u);
  const std::size_t golden = layer_count(66, 660, 33) + layer_count(660, 660, 33) +
                             (660 * 512 + 512) + 4 * 512 + (512 * 512 + 512) + 4 * 512 +
                             (512 * 14 + 14) + 4 * 14;
  EXPECT_EQ(golden, 6101062u);
  EXPECT_EQ(reg.total_count(), golden);
}

TEST(OnLstmNetTest, EmptyRegistryCountsZero) {
  ParamRegistry reg;
  EXPECT_EQ(reg.total_count(), 0u);
  EXPECT_EQ(reg.trainable_count(), 0u);
}

TEST(OnLstmNetTest, ForwardMatchesManualStepping) {
  Rng rng(60);
  OnLstmConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden = 6;
  cfg.chunk = 3;
  cfg.fc_width = 8;
  cfg.classes = 3;
  OnLstmNet net(cfg, rng);
  Tensor x = random_tensor({2, 4, 5}, rng);
  NetContext eval{};
  auto out = net.forward(x, eval);

  auto s1 = net.layer1.initial_state(2);
  auto s2 = net.layer2.initial_state(2);
  for (std::size_t t = 0; t < 4; ++t) {
    Tensor x_t = reshape(slice(x, 1, t, 1), {2, 5});
    s1 = net.layer1.step(x_t, s1);
    s2 = net.layer2.step(s1.h, s2);
  }
  auto head_out = net.head.forward(s2.h, eval);
  ASSERT_EQ(out.logits.numel(), head_out.logits.numel());
  for (std::size_t i = 0; i < out.logits.numel(); ++i) {
    EXPECT_EQ(out.logits[i], head_out.logits[i]);
  }
}

TEST(OnLstmNetTest, EvalForwardShapes) {
  Rng rng(61);
  OnLstmConfig cfg;
  cfg.input_dim = 66;
  cfg.hidden = 20;
  cfg.chunk = 5;
  cfg.fc_width = 12;
  cfg.classes = 14;
  OnLstmNet net(cfg, rng);
  Tensor x = random_tensor({3, 10, 66}, rng);
  NetContext eval{};
  auto out = net.forward(x, eval);
  EXPECT_EQ(out.feature.shape(), (Shape{3, 12}));
  EXPECT_EQ(out.logits.shape(), (Shape{3, 14}));
}
