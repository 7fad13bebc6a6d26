#pragma once

#include <cstdint>
#include <vector>

#include "gestnet/fusion.hpp"
#include "gestnet/onlstm.hpp"
#include "gestnet/optimizer.hpp"
#include "gestnet/transformer.hpp"

namespace gestnet {

/// Architecture of the whole model. The two sub-network feature widths must
/// match (the fusion input is their concatenation).
struct ModelConfig {
  TransformerConfig transformer;
  OnLstmConfig onlstm;
  std::size_t classes = 14;

  void validate() const {
    if (transformer.fc_width != onlstm.fc_width) {
      throw ConfigError("model: sub-network feature widths must match for fusion");
    }
    if (transformer.classes != classes || onlstm.classes != classes) {
      throw ConfigError("model: classifier class counts must agree");
    }
    if (transformer.d_model != onlstm.input_dim) {
      throw ConfigError("model: sub-networks must consume the same input features");
    }
  }
};

/// The trainable bundle: transformer + ON-LSTM sub-networks, fusion MLP,
/// batch-norm stores, and the model-owned generator. Parameter names are
/// stable across runs; the registry order is the serialization order.
class GestureModel {
 public:
  GestureModel(const ModelConfig& cfg, std::uint64_t seed)
      : rng((cfg.validate(), Rng::derive(seed, 0x6d6f64656cULL))),
        transformer(cfg.transformer, rng),
        onlstm(cfg.onlstm, rng),
        fusion(cfg.transformer.fc_width, cfg.transformer.fc_width, cfg.classes,
               cfg.transformer.dropout, rng),
        config_(cfg) {
    transformer.collect("transformer", registry_);
    onlstm.collect("onlstm", registry_);
    fusion.collect("fusion", registry_);
  }

  GestureModel(const GestureModel&) = delete;
  GestureModel& operator=(const GestureModel&) = delete;

  struct ForwardResult {
    SubNetworkOutput t;  // transformer feature + logits
    SubNetworkOutput o;  // on-lstm feature + logits
    LogitSet logits;     // all four classifier logit tensors
  };

  /// One forward of every classifier on a [batch, seq, features] window.
  ForwardResult forward_all(const Tensor& x, const NetContext& ctx) {
    SubNetworkOutput t = transformer.forward(x, ctx);
    SubNetworkOutput o = onlstm.forward(x, ctx);
    Tensor logit_f = fusion.forward(t.feature, o.feature, ctx);
    Tensor logit_e = ensemble_logits(t.logits, o.logits);
    return {t, o, {t.logits, o.logits, logit_f, logit_e}};
  }

  ParamRegistry& registry() { return registry_; }
  const ParamRegistry& registry() const { return registry_; }
  const ModelConfig& config() const { return config_; }

  Rng rng;  // dropout masks and any stochastic layer draws
  TransformerNet transformer;
  OnLstmNet onlstm;
  FusionClassifier fusion;

 private:
  ModelConfig config_;
  ParamRegistry registry_;
};

/// Per-step loss values of the three trained classifiers.
struct StepLosses {
  double transformer = 0.0;
  double onlstm = 0.0;
  double fusion = 0.0;
  double total() const { return transformer + onlstm + fusion; }
};

/// One joint training step: a single forward through both sub-networks and
/// the fusion head, the three losses of the distillation topology (teachers
/// detached), one backward, one optimizer step over every parameter.
inline StepLosses joint_training_step(GestureModel& model, const Tensor& x,
                                      const std::vector<int>& labels, AdamW& opt, double lr,
                                      double temperature, double kd_scale = 1.0) {
  GradTape tape;
  StepLosses out;
  {
    TapeScope scope(tape);
    NetContext train{true, &model.rng};
    auto fwd = model.forward_all(x, train);
    Tensor l_t = sub_network_loss(fwd.logits.transformer, fwd.logits.fusion, labels, temperature,
                                  kd_scale);
    Tensor l_o =
        sub_network_loss(fwd.logits.onlstm, fwd.logits.fusion, labels, temperature, kd_scale);
    Tensor l_f =
        fusion_loss(fwd.logits.fusion, fwd.logits.ensemble, labels, temperature, kd_scale);
    Tensor total = add(add(l_t, l_o), l_f);
    out.transformer = l_t.item();
    out.onlstm = l_o.item();
    out.fusion = l_f.item();
    tape.backward(total);
  }
  opt.step(model.registry().params(), lr);
  return out;
}

}  // namespace gestnet
