#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gestnet/ops.hpp"
#include "gestnet/rng.hpp"
#include "gestnet/tensor.hpp"

namespace gestnet {

/// Trainable tensor with a stable name. `decay` marks weight matrices for
/// decoupled weight decay; biases and normalization affines stay unpenalized.
struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool decay = false;
};

/// Non-trainable persistent store (batch-norm running statistics).
struct StateEntry {
  std::string name;
  std::vector<double>* data = nullptr;
};

/// Named-parameter manifest of a network. Registration order is the
/// serialization and update order, so it must be deterministic.
class ParamRegistry {
 public:
  void add_param(std::string name, const Tensor& t, bool decay) {
    params_.push_back({std::move(name), t, decay});
  }
  void add_state(std::string name, std::vector<double>* s) {
    states_.push_back({std::move(name), s});
  }

  std::vector<ParamEntry>& params() { return params_; }
  const std::vector<ParamEntry>& params() const { return params_; }
  const std::vector<StateEntry>& states() const { return states_; }

  /// Trainable scalars only.
  std::size_t trainable_count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p.name.rfind(prefix, 0) == 0) n += p.tensor.numel();
    }
    return n;
  }

  /// Trainable scalars plus running stores, the accounting the layer tables use.
  std::size_t total_count(const std::string& prefix = "") const {
    std::size_t n = trainable_count(prefix);
    for (const auto& s : states_) {
      if (s.name.rfind(prefix, 0) == 0) n += s.data->size();
    }
    return n;
  }

 private:
  std::vector<ParamEntry> params_;
  std::vector<StateEntry> states_;
};

/// Train/eval switch plus the generator used by stochastic layers.
struct NetContext {
  bool training = false;
  Rng* rng = nullptr;

  Rng& require_rng() const {
    if (!rng) throw ConfigError("training-mode forward needs a generator");
    return *rng;
  }
};

namespace detail {
inline Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), /*requires_grad=*/true);
}
}  // namespace detail

/// Affine map x*W + b for x of shape [..., in].
class Linear {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(detail::uniform_init({in, out}, in, rng)),
        bias(detail::uniform_init({out}, in, rng)) {}

  Tensor forward(const Tensor& x) const { return add_broadcast(matmul(x, weight), bias); }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    reg.add_param(prefix + ".weight", weight, /*decay=*/true);
    reg.add_param(prefix + ".bias", bias, /*decay=*/false);
  }

  Tensor weight, bias;
};

/// Batch normalization over [batch, features] with running stores.
class BatchNorm {
 public:
  explicit BatchNorm(std::size_t features, double momentum = 0.1, double eps = 1e-5)
      : gamma(Tensor::ones({features}).set_requires_grad(true)),
        beta(Tensor::zeros({features}).set_requires_grad(true)),
        running_mean(features, 0.0),
        running_var(features, 1.0),
        momentum_(momentum),
        eps_(eps) {}

  Tensor forward(const Tensor& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum_, eps_);
  }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    reg.add_param(prefix + ".gamma", gamma, /*decay=*/false);
    reg.add_param(prefix + ".beta", beta, /*decay=*/false);
    reg.add_state(prefix + ".running_mean", &running_mean);
    reg.add_state(prefix + ".running_var", &running_var);
  }

  Tensor gamma, beta;
  std::vector<double> running_mean, running_var;

 private:
  double momentum_, eps_;
};

/// Layer-norm affine pair (the normalization itself is the layer_norm op).
class LayerNormAffine {
 public:
  explicit LayerNormAffine(std::size_t features, double eps = 1e-5)
      : gamma(Tensor::ones({features}).set_requires_grad(true)),
        beta(Tensor::zeros({features}).set_requires_grad(true)),
        eps_(eps) {}

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps_); }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    reg.add_param(prefix + ".gamma", gamma, /*decay=*/false);
    reg.add_param(prefix + ".beta", beta, /*decay=*/false);
  }

  Tensor gamma, beta;

 private:
  double eps_;
};

/// The three-stage fully-connected classifier head shared by both
/// sub-networks and the fusion classifier:
///   [FC w, BN, Mish, Dropout] x2 -> FC classes -> BN -> logits.
/// `feature` is the activation after the second Mish, before its dropout.
class ClassifierHead {
 public:
  ClassifierHead(std::size_t in, std::size_t width, std::size_t classes, double dropout_p,
                 Rng& rng)
      : fc1(in, width, rng),
        fc2(width, width, rng),
        fc3(width, classes, rng),
        bn1(width),
        bn2(width),
        bn3(classes),
        dropout_p_(dropout_p) {}

  struct Output {
    Tensor feature;  // [batch, width]
    Tensor logits;   // [batch, classes], post batch-norm, pre softmax
  };

  Output forward(const Tensor& x, const NetContext& ctx) {
    Rng dummy(0);
    Rng& rng = ctx.training ? ctx.require_rng() : dummy;
    Tensor h1 = mish(bn1.forward(fc1.forward(x), ctx.training));
    Tensor d1 = dropout(h1, dropout_p_, ctx.training, rng);
    Tensor h2 = mish(bn2.forward(fc2.forward(d1), ctx.training));
    Tensor d2 = dropout(h2, dropout_p_, ctx.training, rng);
    Tensor logits = bn3.forward(fc3.forward(d2), ctx.training);
    return {h2, logits};
  }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    fc1.collect(prefix + ".fc1", reg);
    bn1.collect(prefix + ".bn1", reg);
    fc2.collect(prefix + ".fc2", reg);
    bn2.collect(prefix + ".bn2", reg);
    fc3.collect(prefix + ".fc3", reg);
    bn3.collect(prefix + ".bn3", reg);
  }

  Linear fc1, fc2, fc3;
  BatchNorm bn1, bn2, bn3;

 private:
  double dropout_p_;
};

/// Feature vector and logits a sub-network exposes to the fusion stage.
struct SubNetworkOutput {
  Tensor feature;
  Tensor logits;
};

}  // namespace gestnet
