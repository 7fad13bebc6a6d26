#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gestnet/nn.hpp"

namespace gestnet {

/// AdamW hyperparameters. Defaults are the training setup of the full runs.
struct AdamWConfig {
  double alpha = 0.001;  // peak learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.001;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ConfigError("adamw: betas must lie in (0,1)");
    }
    if (alpha < 0.0 || weight_decay < 0.0 || epsilon <= 0.0) {
      throw ConfigError("adamw: alpha/weight_decay must be >= 0, epsilon > 0");
    }
  }
};

/// Warm-restart cycle plan: first cycle `base` epochs, each next cycle
/// ceil(previous * growth).
inline std::vector<std::size_t> cycle_lengths(std::size_t base, double growth, std::size_t n) {
  if (base < 1 || growth < 1.0 || n < 1) {
    throw ConfigError("cycle_lengths: base >= 1, growth >= 1, n >= 1");
  }
  std::vector<std::size_t> out;
  out.reserve(n);
  double len = static_cast<double>(base);
  out.push_back(base);
  for (std::size_t k = 1; k < n; ++k) {
    len = std::ceil(len * growth);
    out.push_back(static_cast<std::size_t>(len));
  }
  return out;
}

/// Cosine annealing within one cycle:
///   eta_min + (eta_max - eta_min) * (1 + cos(pi * step/steps)) / 2.
/// step may equal steps so the endpoint is evaluable; each new cycle
/// restarts at step 0 = eta_max.
inline double cosine_lr(std::size_t step_in_cycle, std::size_t steps_in_cycle, double eta_max,
                        double eta_min = 0.0) {
  if (steps_in_cycle == 0 || step_in_cycle > steps_in_cycle) {
    throw ConfigError("cosine_lr: need 0 <= step <= steps, steps > 0");
  }
  const double progress =
      static_cast<double>(step_in_cycle) / static_cast<double>(steps_in_cycle);
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(3.141592653589793238462643 * progress));
}

/// Adam with decoupled weight decay. The decay term never enters the moment
/// estimates:
///   theta -= lr * mhat / (sqrt(vhat) + eps) + lr * weight_decay * theta.
/// Decay applies only to entries registered with decay=true (weight
/// matrices), never to biases or normalization affines.
class AdamW {
 public:
  explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) { cfg.validate(); }

  void step(std::vector<ParamEntry>& params, double lr) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i].tensor.numel(), 0.0);
        slots_[i].v.assign(params[i].tensor.numel(), 0.0);
      }
    }
    if (slots_.size() != params.size()) {
      throw ConfigError("adamw: parameter list changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i].tensor;
      auto& theta = p.mutable_values();
      Slot& slot = slots_[i];
      const bool decay = params[i].decay;
      const double* g = p.has_grad() ? p.grad().data() : nullptr;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double gj = g ? g[j] : 0.0;
        if (!std::isfinite(gj)) {
          throw NonFiniteError("adamw: non-finite gradient for " + params[i].name);
        }
        slot.m[j] = cfg_.beta1 * slot.m[j] + (1.0 - cfg_.beta1) * gj;
        slot.v[j] = cfg_.beta2 * slot.v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = slot.m[j] / bc1;
        const double vhat = slot.v[j] / bc2;
        // both terms act on the pre-update parameter
        const double adam_term = lr * (mhat / (std::sqrt(vhat) + cfg_.epsilon));
        const double decay_term = decay ? lr * cfg_.weight_decay * theta[j] : 0.0;
        theta[j] -= adam_term + decay_term;
      }
    }
  }

  std::uint64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

}  // namespace gestnet
