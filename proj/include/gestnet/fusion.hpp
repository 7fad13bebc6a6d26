#pragma once

#include <string>
#include <vector>

#include "gestnet/nn.hpp"

namespace gestnet {

/// Temperature-softened class distribution: softmax(logits / T).
struct SoftenedDistribution {
  Tensor probs;  // same shape as logits; rows sum to 1, entries positive
  double temperature = 1.0;
};

/// Softened probability of a logit row (or batch of rows). T=1 reduces to
/// plain softmax.
inline SoftenedDistribution soften(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("soften: temperature must be positive");
  const std::size_t axis = logits.rank() == 0 ? 0 : logits.rank() - 1;
  return {softmax(scale(logits, 1.0 / temperature), axis), temperature};
}

/// Parameter-free ensemble classifier: the elementwise mean of the two
/// sub-network logit vectors.
inline Tensor ensemble_logits(const Tensor& logit_t, const Tensor& logit_o) {
  if (logit_t.shape() != logit_o.shape()) {
    throw ShapeError("ensemble_logits: shape mismatch " + shape_str(logit_t.shape()) + " vs " +
                     shape_str(logit_o.shape()));
  }
  return scale(add(logit_t, logit_o), 0.5);
}

/// Knowledge-distillation loss: KL(teacher || student) scaled by T^2,
/// averaged over the batch. The teacher is treated as a constant; no
/// gradient flows into it.
inline Tensor kd_loss(const SoftenedDistribution& teacher, const SoftenedDistribution& student) {
  if (teacher.temperature != student.temperature) {
    throw ConfigError("kd_loss: teacher and student temperatures differ");
  }
  if (teacher.probs.shape() != student.probs.shape()) {
    throw ShapeError("kd_loss: distribution shapes differ");
  }
  const std::size_t rows = teacher.probs.rank() <= 1
                               ? 1
                               : teacher.probs.numel() / teacher.probs.shape().back();
  Tensor t = teacher.probs.detach();
  Tensor log_ratio = sub(ln(t), ln(student.probs));
  const double t2 = teacher.temperature * teacher.temperature;
  return scale(sum_all(mul(t, log_ratio)), t2 / static_cast<double>(rows));
}

namespace detail {
inline Tensor one_hot_rows(const std::vector<int>& labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ConfigError("label index " + std::to_string(labels[i]) + " out of range for " +
                        std::to_string(classes) + " classes");
    }
    v[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(v));
}
}  // namespace detail

/// Cross-entropy against integer labels at temperature 1, batch-averaged.
inline Tensor ce_loss(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("ce_loss: logits must be [batch, classes] matching labels");
  }
  Tensor onehot = detail::one_hot_rows(labels, logits.dim(1));
  Tensor picked = sum_all(mul(log_softmax(logits, 1), onehot));
  return scale(picked, -1.0 / static_cast<double>(labels.size()));
}

/// Sub-network loss: FKD (fusion teaches the sub-network) plus hard CE.
/// kd_scale multiplies only the distillation term (1 = standard, 0 = CE only).
inline Tensor sub_network_loss(const Tensor& logit_m, const Tensor& logit_f,
                               const std::vector<int>& labels, double temperature,
                               double kd_scale = 1.0) {
  Tensor fkd = kd_loss(soften(logit_f, temperature), soften(logit_m, temperature));
  return add(scale(fkd, kd_scale), ce_loss(logit_m, labels));
}

/// Fusion loss: EKD (logit-average ensemble teaches the fusion head) plus CE.
inline Tensor fusion_loss(const Tensor& logit_f, const Tensor& logit_e,
                          const std::vector<int>& labels, double temperature,
                          double kd_scale = 1.0) {
  Tensor ekd = kd_loss(soften(logit_e, temperature), soften(logit_f, temperature));
  return add(scale(ekd, kd_scale), ce_loss(logit_f, labels));
}

/// Fusion classifier: three-layer MLP over the concatenated sub-network
/// features. Structurally the shared head with input 2*feature_width.
class FusionClassifier {
 public:
  FusionClassifier(std::size_t feature_width, std::size_t width, std::size_t classes,
                   double dropout_p, Rng& rng)
      : head(2 * feature_width, width, classes, dropout_p, rng) {}

  /// feat_t, feat_o: [batch, feature_width] from the same input window.
  Tensor forward(const Tensor& feat_t, const Tensor& feat_o, const NetContext& ctx) {
    if (feat_t.shape() != feat_o.shape()) {
      throw ShapeError("fusion: feature shapes differ");
    }
    return head.forward(concat(feat_t, feat_o, 1), ctx).logits;
  }

  void collect(const std::string& prefix, ParamRegistry& reg) { head.collect(prefix, reg); }

  ClassifierHead head;
};

/// All four logit vectors of one forward pass (Fig. 3 wiring).
struct LogitSet {
  Tensor transformer;  // logit_t
  Tensor onlstm;       // logit_o
  Tensor fusion;       // logit_f
  Tensor ensemble;     // logit_e = (logit_t + logit_o)/2 exactly
};

}  // namespace gestnet
