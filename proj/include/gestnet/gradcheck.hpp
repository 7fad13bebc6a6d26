#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gestnet/ops.hpp"
#include "gestnet/tensor.hpp"

namespace gestnet {

/// Compare the tape gradient of a scalar function against central finite
/// differences over every coordinate of the given leaf tensors.
///
/// `f` rebuilds the forward computation on each call (it runs once under a
/// fresh tape for the analytic gradient, then twice per coordinate without a
/// tape). It must be deterministic across calls; stochastic pieces such as
/// dropout need a generator re-seeded inside `f`.
///
/// Worst coordinate found by a finite-difference sweep.
struct GradCheckReport {
  double max_rel_err = 0.0;   // over coordinates with |a - n| > abs_tol
  double max_abs_diff = 0.0;  // over all coordinates
  std::size_t worst_leaf = 0;
  std::size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Returns max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8).
///
/// `abs_tol` certifies coordinates by absolute agreement instead: when
/// |analytic - numeric| <= abs_tol the coordinate is excluded from the ratio.
/// Central differences carry ~5e-11 cancellation noise per unit of loss
/// scale, so near-zero true gradients cannot meet a tight ratio no matter how
/// exact the tape is; 1e-7 sits well above that noise and well below any real
/// gradient defect. abs_tol = 0 is the strict ratio over every coordinate.
inline GradCheckReport finite_difference_report(const std::function<Tensor()>& f,
                                                const std::vector<Tensor>& leaves,
                                                double eps = 1e-5, double abs_tol = 0.0) {
  std::vector<std::vector<double>> analytic;
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    if (loss.numel() != 1) throw TapeError("finite_difference_check: f must be scalar-valued");
    tape.backward(loss);
    for (const Tensor& leaf : leaves) {
      analytic.push_back(leaf.has_grad() ? leaf.grad() : std::vector<double>(leaf.numel(), 0.0));
    }
  }

  GradCheckReport report;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor leaf = leaves[l];
    std::vector<double>& vals = leaf.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double fp = f().item();
      vals[i] = saved - eps;
      const double fm = f().item();
      vals[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NonFiniteError("finite_difference_check: perturbed evaluation is non-finite");
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[l][i];
      const double diff = std::abs(a - numeric);
      report.max_abs_diff = std::max(report.max_abs_diff, diff);
      if (diff <= abs_tol) continue;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = diff / denom;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_leaf = l;
        report.worst_coord = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

inline double finite_difference_check(const std::function<Tensor()>& f,
                                      const std::vector<Tensor>& leaves, double eps = 1e-5) {
  return finite_difference_report(f, leaves, eps).max_rel_err;
}

/// Convenience form for a function of a single input tensor.
inline double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                      const Tensor& x, double eps = 1e-5) {
  Tensor probe(x.shape(), x.values(), /*requires_grad=*/true);
  return finite_difference_check([&]() { return f(probe); }, {probe}, eps);
}

}  // namespace gestnet
