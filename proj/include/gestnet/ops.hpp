#pragma once

#include <cmath>
#include <vector>

#include "gestnet/rng.hpp"
#include "gestnet/tensor.hpp"

namespace gestnet {

namespace detail {

/// Stable softplus: ln(1+e^x) = max(x,0) + ln(1+e^-|x|).
inline double softplus_stable(double x) {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid_stable(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::sigmoid_stable(x[i]);
  return finish_op("sigmoid", x.shape(), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      auto& g = detail::grad_buf(out->parents[0].get());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = out->value[i];
        g[i] += out->grad[i] * y * (1.0 - y);
      }
    };
  });
}

inline Tensor tanh(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(x[i]);
  return finish_op("tanh", x.shape(), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      auto& g = detail::grad_buf(out->parents[0].get());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = out->value[i];
        g[i] += out->grad[i] * (1.0 - y * y);
      }
    };
  });
}

inline Tensor exp(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(x[i]);
  return finish_op("exp", x.shape(), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      auto& g = detail::grad_buf(out->parents[0].get());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * out->value[i];
    };
  });
}

inline Tensor ln(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(x[i]);
  return finish_op("ln", x.shape(), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] / p->value[i];
    };
  });
}

inline Tensor softplus(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::softplus_stable(x[i]);
  return finish_op("softplus", x.shape(), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += out->grad[i] * detail::sigmoid_stable(p->value[i]);
    };
  });
}

/// mish(x) = x * tanh(softplus(x)), softplus in the stable formulation.
inline Tensor mish(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = x[i] * std::tanh(detail::softplus_stable(x[i]));
  }
  return finish_op("mish", x.shape(), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double xi = p->value[i];
        const double t = std::tanh(detail::softplus_stable(xi));
        g[i] += out->grad[i] * (t + xi * (1.0 - t * t) * detail::sigmoid_stable(xi));
      }
    };
  });
}

// ---------------------------------------------------------------------------
// softmax family (max-subtracted), cumax
// ---------------------------------------------------------------------------

namespace detail {

inline void check_distribution(const char* op, const std::vector<double>& v, const AxisSplit& ax,
                               bool cumulative) {
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      double last = 0.0;
      double sum = 0.0;
      for (std::size_t j = 0; j < ax.len; ++j) {
        const double y = v[(o * ax.len + j) * ax.inner + in];
        sum += y;
        last = y;
      }
      const double terminal = cumulative ? last : sum;
      if (std::abs(terminal - 1.0) > 1e-12) {
        throw NonFiniteError(std::string(op) + ": output does not normalize to 1");
      }
    }
  }
}

}  // namespace detail

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto ax = detail::split_axis(x.shape(), axis);
  std::vector<double> v(x.numel());
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const auto at = [&](std::size_t j) { return (o * ax.len + j) * ax.inner + in; };
      double mx = x[at(0)];
      for (std::size_t j = 1; j < ax.len; ++j) mx = std::max(mx, x[at(j)]);
      double denom = 0.0;
      for (std::size_t j = 0; j < ax.len; ++j) {
        const double e = std::exp(x[at(j)] - mx);
        v[at(j)] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < ax.len; ++j) v[at(j)] /= denom;
    }
  }
  if (runtime_checks()) detail::check_distribution("softmax", v, ax, false);
  return finish_op("softmax", x.shape(), std::move(v), {x.node_ptr()}, [ax](TensorNode* out) {
    return [out, ax]() {
      auto& g = detail::grad_buf(out->parents[0].get());
      for (std::size_t o = 0; o < ax.outer; ++o) {
        for (std::size_t in = 0; in < ax.inner; ++in) {
          const auto at = [&](std::size_t j) { return (o * ax.len + j) * ax.inner + in; };
          double dot = 0.0;
          for (std::size_t j = 0; j < ax.len; ++j) dot += out->value[at(j)] * out->grad[at(j)];
          for (std::size_t j = 0; j < ax.len; ++j)
            g[at(j)] += out->value[at(j)] * (out->grad[at(j)] - dot);
        }
      }
    };
  });
}

inline Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto ax = detail::split_axis(x.shape(), axis);
  std::vector<double> v(x.numel());
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const auto at = [&](std::size_t j) { return (o * ax.len + j) * ax.inner + in; };
      double mx = x[at(0)];
      for (std::size_t j = 1; j < ax.len; ++j) mx = std::max(mx, x[at(j)]);
      double denom = 0.0;
      for (std::size_t j = 0; j < ax.len; ++j) denom += std::exp(x[at(j)] - mx);
      const double lse = mx + std::log(denom);
      for (std::size_t j = 0; j < ax.len; ++j) v[at(j)] = x[at(j)] - lse;
    }
  }
  return finish_op("log_softmax", x.shape(), std::move(v), {x.node_ptr()}, [ax](TensorNode* out) {
    return [out, ax]() {
      auto& g = detail::grad_buf(out->parents[0].get());
      for (std::size_t o = 0; o < ax.outer; ++o) {
        for (std::size_t in = 0; in < ax.inner; ++in) {
          const auto at = [&](std::size_t j) { return (o * ax.len + j) * ax.inner + in; };
          double gsum = 0.0;
          for (std::size_t j = 0; j < ax.len; ++j) gsum += out->grad[at(j)];
          for (std::size_t j = 0; j < ax.len; ++j)
            g[at(j)] += out->grad[at(j)] - std::exp(out->value[at(j)]) * gsum;
        }
      }
    };
  });
}

/// cumax(x) = cumsum(softmax(x)) along `axis`: monotone gate in [0,1], ends at 1.
inline Tensor cumax(const Tensor& x, std::size_t axis) {
  const auto ax = detail::split_axis(x.shape(), axis);
  Tensor s = softmax(x, axis);  // recorded; its backward handles the softmax part
  std::vector<double> v(x.numel());
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const auto at = [&](std::size_t j) { return (o * ax.len + j) * ax.inner + in; };
      double run = 0.0;
      for (std::size_t j = 0; j < ax.len; ++j) {
        run += s[at(j)];
        v[at(j)] = std::min(run, 1.0);
      }
    }
  }
  if (runtime_checks()) detail::check_distribution("cumax", v, ax, true);
  return finish_op("cumsum", x.shape(), std::move(v), {s.node_ptr()}, [ax](TensorNode* out) {
    return [out, ax]() {
      auto& g = detail::grad_buf(out->parents[0].get());
      for (std::size_t o = 0; o < ax.outer; ++o) {
        for (std::size_t in = 0; in < ax.inner; ++in) {
          const auto at = [&](std::size_t j) { return (o * ax.len + j) * ax.inner + in; };
          double suffix = 0.0;
          for (std::size_t j = ax.len; j-- > 0;) {
            suffix += out->grad[at(j)];
            g[at(j)] += suffix;
          }
        }
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Normalization and dropout
// ---------------------------------------------------------------------------

/// Layer normalization over the last axis with affine parameters.
/// Variance is the biased (1/F) estimator.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: rank must be >= 1");
  const std::size_t f = s.back();
  if (gamma.shape() != Shape{f} || beta.shape() != Shape{f}) {
    throw ShapeError("layer_norm: gamma/beta must have shape [" + std::to_string(f) + "]");
  }
  const std::size_t rows = x.numel() / f;
  std::vector<double> v(x.numel());
  std::vector<double> inv_std(rows), mean(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * f;
    double mu = 0.0;
    for (std::size_t j = 0; j < f; ++j) mu += xr[j];
    mu /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(f);
    const double is = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_std[r] = is;
    for (std::size_t j = 0; j < f; ++j) v[r * f + j] = gamma[j] * ((xr[j] - mu) * is) + beta[j];
  }
  return finish_op(
      "layer_norm", s, std::move(v), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [rows, f, mean, inv_std](TensorNode* out) {
        return [out, rows, f, mean, inv_std]() {
          TensorNode* px = out->parents[0].get();
          TensorNode* pg = out->parents[1].get();
          TensorNode* pb = out->parents[2].get();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = px->value.data() + r * f;
            const double* gy = out->grad.data() + r * f;
            const double is = inv_std[r];
            const double mu = mean[r];
            // dgamma/dbeta
            if (pg->requires_grad) {
              auto& gg = detail::grad_buf(pg);
              for (std::size_t j = 0; j < f; ++j) gg[j] += gy[j] * ((xr[j] - mu) * is);
            }
            if (pb->requires_grad) {
              auto& gb = detail::grad_buf(pb);
              for (std::size_t j = 0; j < f; ++j) gb[j] += gy[j];
            }
            if (px->requires_grad) {
              auto& gx = detail::grad_buf(px);
              double m1 = 0.0, m2 = 0.0;  // mean(g*gamma), mean(g*gamma*xhat)
              for (std::size_t j = 0; j < f; ++j) {
                const double gg = gy[j] * pg->value[j];
                const double xhat = (xr[j] - mu) * is;
                m1 += gg;
                m2 += gg * xhat;
              }
              m1 /= static_cast<double>(f);
              m2 /= static_cast<double>(f);
              for (std::size_t j = 0; j < f; ++j) {
                const double gg = gy[j] * pg->value[j];
                const double xhat = (xr[j] - mu) * is;
                gx[r * f + j] += (gg - m1 - xhat * m2) * is;
              }
            }
          }
        };
      });
}

/// Batch normalization over the batch axis of a [batch, features] tensor.
/// Train mode normalizes by batch statistics (biased variance) and updates
/// the running stores; eval mode normalizes by the running stores.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         std::vector<double>& running_mean, std::vector<double>& running_var,
                         bool training, double momentum, double eps) {
  if (x.rank() != 2) throw ShapeError("batch_norm: expected [batch, features]");
  const std::size_t b = x.dim(0), f = x.dim(1);
  if (gamma.shape() != Shape{f} || beta.shape() != Shape{f} || running_mean.size() != f ||
      running_var.size() != f) {
    throw ShapeError("batch_norm: parameter size mismatch");
  }
  std::vector<double> mu(f, 0.0), var(f, 0.0);
  if (training) {
    if (b == 0) throw ShapeError("batch_norm: empty batch in train mode");
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < f; ++j) mu[j] += x[i * f + j];
    for (std::size_t j = 0; j < f; ++j) mu[j] /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = x[i * f + j] - mu[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(b);
    for (std::size_t j = 0; j < f; ++j) {
      running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mu[j];
      running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j];
    }
  } else {
    mu = running_mean;
    var = running_var;
  }
  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  std::vector<double> v(b * f);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j)
      v[i * f + j] = gamma[j] * ((x[i * f + j] - mu[j]) * inv_std[j]) + beta[j];

  return finish_op(
      "batch_norm", x.shape(), std::move(v), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [b, f, mu, inv_std, training](TensorNode* out) {
        return [out, b, f, mu, inv_std, training]() {
          TensorNode* px = out->parents[0].get();
          TensorNode* pg = out->parents[1].get();
          TensorNode* pb = out->parents[2].get();
          std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < f; ++j) {
              const double gy = out->grad[i * f + j];
              const double xhat = (px->value[i * f + j] - mu[j]) * inv_std[j];
              sum_g[j] += gy;
              sum_gx[j] += gy * xhat;
            }
          if (pg->requires_grad) {
            auto& gg = detail::grad_buf(pg);
            for (std::size_t j = 0; j < f; ++j) gg[j] += sum_gx[j];
          }
          if (pb->requires_grad) {
            auto& gb = detail::grad_buf(pb);
            for (std::size_t j = 0; j < f; ++j) gb[j] += sum_g[j];
          }
          if (px->requires_grad) {
            auto& gx = detail::grad_buf(px);
            const double invb = 1.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i)
              for (std::size_t j = 0; j < f; ++j) {
                const double gy = out->grad[i * f + j];
                if (training) {
                  const double xhat = (px->value[i * f + j] - mu[j]) * inv_std[j];
                  gx[i * f + j] += pg->value[j] * inv_std[j] *
                                   (gy - invb * sum_g[j] - xhat * invb * sum_gx[j]);
                } else {
                  gx[i * f + j] += pg->value[j] * inv_std[j] * gy;
                }
              }
          }
        };
      });
}

/// Inverted dropout: active units scaled by 1/(1-p) at train time,
/// identity in eval mode. p must lie in [0, 1).
inline Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
  if (!training || p == 0.0) {
    return affine(x, 1.0, 0.0);
  }
  const double keep = 1.0 - p;
  std::vector<double> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * mask[i];
  return finish_op("dropout", x.shape(), std::move(v), {x.node_ptr()},
                   [mask = std::move(mask)](TensorNode* out) {
                     return [out, mask]() {
                       auto& g = detail::grad_buf(out->parents[0].get());
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * mask[i];
                     };
                   });
}

}  // namespace gestnet
