#pragma once

#include <string>
#include <vector>

#include "gestnet/nn.hpp"

namespace gestnet {

/// Dimensions of the ON-LSTM sub-network. chunk must divide hidden; the
/// master gates run at hidden/chunk and are chunk-expanded.
struct OnLstmConfig {
  std::size_t input_dim = 66;
  std::size_t hidden = 660;
  std::size_t chunk = 33;
  std::size_t fc_width = 512;
  std::size_t classes = 14;
  double dropout = 0.5;

  std::size_t master_dim() const {
    if (chunk == 0 || hidden % chunk != 0) {
      throw ConfigError("onlstm: chunk must divide hidden");
    }
    return hidden / chunk;
  }
};

/// One ordered-neuron LSTM layer. Gate weights are packed as
/// [in+hidden, 4*hidden] (f,i,o,candidate) and the master pair as
/// [in+hidden, 2*master_dim] (forget, input).
class OnLstmLayer {
 public:
  OnLstmLayer(std::size_t input_dim, std::size_t hidden, std::size_t chunk, Rng& rng)
      : gates(input_dim + hidden, 4 * hidden, rng),
        master(input_dim + hidden, 2 * (hidden / chunk), rng),
        input_dim_(input_dim),
        hidden_(hidden),
        chunk_(chunk) {
    if (chunk == 0 || hidden % chunk != 0) throw ConfigError("onlstm: chunk must divide hidden");
  }

  struct State {
    Tensor h;  // [batch, hidden], elementwise in (-1,1)
    Tensor c;  // [batch, hidden]
  };

  /// Expanded gate values of one step, for property checks.
  struct StepTrace {
    Tensor overlap;      // w = mf*mi
    Tensor forget_eff;   // f^
    Tensor input_eff;    // i^
  };

  State initial_state(std::size_t batch) const {
    return {Tensor::zeros({batch, hidden_}), Tensor::zeros({batch, hidden_})};
  }

  /// One timestep:
  ///   f,i,o = sigmoid, candidate = tanh of the packed affine;
  ///   master forget = cumax, master input = 1 - cumax, chunk-expanded;
  ///   overlap w = mf*mi;  f^ = f*w + (mf - w);  i^ = i*w + (mi - w);
  ///   c' = f^*c + i^*candidate;  h' = o*tanh(c').
  State step(const Tensor& x_t, const State& prev, StepTrace* trace = nullptr) const {
    if (x_t.rank() != 2 || x_t.dim(1) != input_dim_) {
      throw ShapeError("onlstm step: expected [batch," + std::to_string(input_dim_) + "], got " +
                       shape_str(x_t.shape()));
    }
    const std::size_t h = hidden_;
    const std::size_t m = h / chunk_;
    Tensor z = concat(x_t, prev.h, 1);
    Tensor g = gates.forward(z);
    Tensor f = sigmoid(slice(g, 1, 0, h));
    Tensor i = sigmoid(slice(g, 1, h, h));
    Tensor o = sigmoid(slice(g, 1, 2 * h, h));
    Tensor cand = gestnet::tanh(slice(g, 1, 3 * h, h));

    Tensor mg = master.forward(z);
    Tensor master_f = cumax(slice(mg, 1, 0, m), 1);
    Tensor master_i = affine(cumax(slice(mg, 1, m, m), 1), -1.0, 1.0);  // 1 - cumax
    Tensor mf = repeat_last(master_f, chunk_);
    Tensor mi = repeat_last(master_i, chunk_);

    Tensor w = mul(mf, mi);
    Tensor f_eff = add(mul(f, w), sub(mf, w));
    Tensor i_eff = add(mul(i, w), sub(mi, w));
    Tensor c = add(mul(f_eff, prev.c), mul(i_eff, cand));
    if (trace) *trace = {w, f_eff, i_eff};
    return {mul(o, gestnet::tanh(c)), c};
  }

  /// Pre-expansion master gates for a step, for inspecting the ordering
  /// structure (monotonicity checks). Forward-only.
  std::pair<Tensor, Tensor> master_gates(const Tensor& x_t, const State& prev) const {
    const std::size_t m = hidden_ / chunk_;
    Tensor z = concat(x_t, prev.h, 1);
    Tensor mg = master.forward(z);
    return {cumax(slice(mg, 1, 0, m), 1), affine(cumax(slice(mg, 1, m, m), 1), -1.0, 1.0)};
  }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    gates.collect(prefix + ".gates", reg);
    master.collect(prefix + ".master", reg);
  }

  std::size_t hidden() const { return hidden_; }

  Linear gates, master;

 private:
  std::size_t input_dim_, hidden_, chunk_;
};

/// ON-LSTM sub-network: layer 1 emits the full hidden sequence, layer 2
/// consumes it and keeps only its final hidden state, then the shared head.
class OnLstmNet {
 public:
  OnLstmNet(const OnLstmConfig& cfg, Rng& rng)
      : cfg_(cfg),
        layer1(cfg.input_dim, cfg.hidden, cfg.chunk, rng),
        layer2(cfg.hidden, cfg.hidden, cfg.chunk, rng),
        head(cfg.hidden, cfg.fc_width, cfg.classes, cfg.dropout, rng) {
    cfg.master_dim();  // validates
  }

  /// x: [batch, seq, input_dim] resampled window.
  SubNetworkOutput forward(const Tensor& x, const NetContext& ctx) {
    if (x.rank() != 3 || x.dim(2) != cfg_.input_dim) {
      throw ShapeError("onlstm input must be [batch,seq," + std::to_string(cfg_.input_dim) +
                       "], got " + shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0), steps = x.dim(1);
    auto s1 = layer1.initial_state(batch);
    auto s2 = layer2.initial_state(batch);
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor x_t = reshape(slice(x, 1, t, 1), {batch, cfg_.input_dim});
      s1 = layer1.step(x_t, s1);
      s2 = layer2.step(s1.h, s2);
    }
    auto out = head.forward(s2.h, ctx);
    return {out.feature, out.logits};
  }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    layer1.collect(prefix + ".layer1", reg);
    layer2.collect(prefix + ".layer2", reg);
    head.collect(prefix + ".head", reg);
  }

  const OnLstmConfig& config() const { return cfg_; }

  OnLstmLayer layer1, layer2;
  ClassifierHead head;

 private:
  OnLstmConfig cfg_;
};

}  // namespace gestnet
