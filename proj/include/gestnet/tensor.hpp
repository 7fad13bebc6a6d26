#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gestnet/errors.hpp"

namespace gestnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Runtime validation of op outputs (finiteness, distribution sums).
/// On by default; the cost is one linear pass per op.
inline bool& runtime_checks() {
  static bool enabled = true;
  return enabled;
}

class GradTape;

/// One node of the computation graph: forward value plus, when recorded on a
/// tape, parent links and a local-gradient closure.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  const char* op = "leaf";
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;
  std::uint64_t grad_pass = 0;  // backward pass that last zeroed `grad`
  std::uint64_t tape_mark = 0;  // tape this node was recorded/listed on
};

namespace detail {

inline thread_local GradTape* g_active_tape = nullptr;
inline thread_local std::uint64_t g_current_pass = 0;

inline std::uint64_t next_serial() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

/// Gradient buffer of `n`, zero-initialized on first touch per backward pass.
inline std::vector<double>& grad_buf(TensorNode* n) {
  if (n->grad_pass != g_current_pass) {
    n->grad.assign(n->value.size(), 0.0);
    n->grad_pass = g_current_pass;
  }
  return n->grad;
}

inline void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string("non-finite value in output of op '") + op + "'");
    }
  }
}

}  // namespace detail

/// Dense n-dimensional value tensor, 64-bit, row-major. Copying a Tensor
/// copies a handle to the same node; values are immutable after construction
/// except through mutable_values() on leaves (optimizer updates, loaders).
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    if (runtime_checks()) detail::check_finite("leaf", values);
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor zeros(Shape s) { return full(std::move(s), 0.0); }
  static Tensor ones(Shape s) { return full(std::move(s), 1.0); }

  static Tensor full(Shape s, double v, bool requires_grad = false) {
    std::vector<double> data(shape_numel(s), v);
    return Tensor(std::move(s), std::move(data), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return require().shape; }
  std::size_t rank() const { return require().shape.size(); }
  std::size_t numel() const { return require().value.size(); }
  std::size_t dim(std::size_t i) const { return require().shape.at(i); }

  const std::vector<double>& values() const { return require().value; }
  double operator[](std::size_t flat) const { return require().value[flat]; }

  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor with " + std::to_string(numel()) + " elements");
    return require().value[0];
  }

  /// Direct write access; reserved for leaves (parameter updates, loaders).
  std::vector<double>& mutable_values() {
    TensorNode& n = require();
    if (n.backprop) throw TapeError("mutable_values() is only valid on leaf tensors");
    return n.value;
  }

  bool requires_grad() const { return require().requires_grad; }

  Tensor& set_requires_grad(bool rg) {
    TensorNode& n = require();
    if (n.backprop) throw TapeError("set_requires_grad() is only valid on leaf tensors");
    n.requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return defined() && !node_->grad.empty(); }

  /// Gradient from the most recent backward pass this node took part in.
  const std::vector<double>& grad() const {
    if (!has_grad()) throw TapeError("tensor has no gradient (no backward pass reached it)");
    return node_->grad;
  }

  /// Same values, fresh leaf node, no gradient participation.
  Tensor detach() const {
    const TensorNode& n = require();
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = n.shape;
    t.node_->value = n.value;
    return t;
  }

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  friend class GradTape;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  TensorNode& require() const {
    if (!node_) throw ShapeError("use of undefined tensor");
    return *node_;
  }

  std::shared_ptr<TensorNode> node_;

  template <class BuildBackprop>
  friend Tensor finish_op(const char* op, Shape shape, std::vector<double> value,
                          std::vector<std::shared_ptr<TensorNode>> parents,
                          BuildBackprop build_backprop);
};

/// Ordered record of operations. Creation order is topological order, so one
/// reverse sweep propagates gradients; fan-out accumulates additively.
/// Single-threaded; independent tapes may live on different threads.
class GradTape {
 public:
  GradTape() : id_(detail::next_serial()) {}
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Propagate d(loss)/d(node) to every recorded node and requires-grad leaf.
  /// One shot: a second call on the same tape throws.
  void backward(const Tensor& loss) {
    if (consumed_) throw TapeError("backward() already ran on this tape");
    if (!loss.defined() || loss.numel() != 1) {
      throw TapeError("backward() requires a scalar loss tensor");
    }
    if (loss.node()->tape_mark != id_) {
      throw TapeError("loss tensor was not recorded on this tape");
    }
    consumed_ = true;
    detail::g_current_pass = detail::next_serial();
    detail::grad_buf(loss.node())[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      TensorNode* n = it->get();
      if (n->grad_pass != detail::g_current_pass) continue;  // no gradient reached it
      n->backprop();
    }
  }

  bool consumed() const { return consumed_; }
  std::size_t num_ops() const { return ops_.size(); }

  /// Requires-grad leaves touched by ops recorded here (parameters, inputs).
  const std::vector<std::shared_ptr<TensorNode>>& leaves() const { return leaves_; }

 private:
  friend class TapeScope;
  template <class BuildBackprop>
  friend Tensor finish_op(const char* op, Shape shape, std::vector<double> value,
                          std::vector<std::shared_ptr<TensorNode>> parents,
                          BuildBackprop build_backprop);

  void record(const std::shared_ptr<TensorNode>& n) {
    n->tape_mark = id_;
    ops_.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && p->parents.empty() && !p->backprop && p->tape_mark != id_) {
        p->tape_mark = id_;
        leaves_.push_back(p);
      }
    }
  }

  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<std::shared_ptr<TensorNode>> ops_;
  std::vector<std::shared_ptr<TensorNode>> leaves_;
};

/// RAII activation of a tape for the current thread. Ops run while a scope is
/// live are recorded; without one they are pure forward computations.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape) : prev_(detail::g_active_tape) {
    detail::g_active_tape = &tape;
  }
  ~TapeScope() { detail::g_active_tape = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* prev_;
};

inline GradTape* active_tape() { return detail::g_active_tape; }

/// Shared tail of every op: wraps the computed value in a node and, when a
/// tape is active and a parent requires grad, records the backprop closure.
/// `build_backprop(out)` returns the closure; it may capture saved state.
template <class BuildBackprop>
Tensor finish_op(const char* op, Shape shape, std::vector<double> value,
                 std::vector<std::shared_ptr<TensorNode>> parents,
                 BuildBackprop build_backprop) {
  if (shape_numel(shape) != value.size()) {
    throw ShapeError(std::string("op '") + op + "' produced mismatched shape");
  }
  if (runtime_checks()) detail::check_finite(op, value);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;

  GradTape* tape = detail::g_active_tape;
  if (tape) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    if (rg) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backprop = build_backprop(n.get());
      tape->record(n);
    }
  }
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

namespace detail {
inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return finish_op("add", a.shape(), std::move(v), {a.node_ptr(), b.node_ptr()},
                   [](TensorNode* out) {
                     return [out]() {
                       const auto& gy = out->grad;
                       for (int k = 0; k < 2; ++k) {
                         TensorNode* p = out->parents[k].get();
                         if (!p->requires_grad) continue;
                         auto& g = detail::grad_buf(p);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                       }
                     };
                   });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return finish_op("sub", a.shape(), std::move(v), {a.node_ptr(), b.node_ptr()},
                   [](TensorNode* out) {
                     return [out]() {
                       const auto& gy = out->grad;
                       TensorNode* pa = out->parents[0].get();
                       TensorNode* pb = out->parents[1].get();
                       if (pa->requires_grad) {
                         auto& g = detail::grad_buf(pa);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                       }
                       if (pb->requires_grad) {
                         auto& g = detail::grad_buf(pb);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i] -= gy[i];
                       }
                     };
                   });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return finish_op("mul", a.shape(), std::move(v), {a.node_ptr(), b.node_ptr()},
                   [](TensorNode* out) {
                     return [out]() {
                       const auto& gy = out->grad;
                       TensorNode* pa = out->parents[0].get();
                       TensorNode* pb = out->parents[1].get();
                       if (pa->requires_grad) {
                         auto& g = detail::grad_buf(pa);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * pb->value[i];
                       }
                       if (pb->requires_grad) {
                         auto& g = detail::grad_buf(pb);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * pa->value[i];
                       }
                     };
                   });
}

/// Elementwise s*x + c.
inline Tensor affine(const Tensor& x, double s, double c) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = s * x[i] + c;
  return finish_op("affine", x.shape(), std::move(v), {x.node_ptr()}, [s](TensorNode* out) {
    return [out, s]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += s * out->grad[i];
    };
  });
}

inline Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }
inline Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// add with broadcasting: b's shape must be a suffix of a's shape
/// (bias over rows, positional table over a batch, ...).
inline Tensor add_broadcast(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    throw ShapeError("add_broadcast: " + shape_str(sb) + " is not a suffix of " + shape_str(sa));
  }
  const std::size_t span = b.numel();
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i % span];
  return finish_op("add_broadcast", sa, std::move(v), {a.node_ptr(), b.node_ptr()},
                   [span](TensorNode* out) {
                     return [out, span]() {
                       const auto& gy = out->grad;
                       TensorNode* pa = out->parents[0].get();
                       TensorNode* pb = out->parents[1].get();
                       if (pa->requires_grad) {
                         auto& g = detail::grad_buf(pa);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
                       }
                       if (pb->requires_grad) {
                         auto& g = detail::grad_buf(pb);
                         for (std::size_t i = 0; i < gy.size(); ++i) g[i % span] += gy[i];
                       }
                     };
                   });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape target) {
  if (shape_numel(target) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(target));
  }
  std::vector<double> v = x.values();
  return finish_op("reshape", std::move(target), std::move(v), {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      for (std::size_t i = 0; i < out->grad.size(); ++i) g[i] += out->grad[i];
    };
  });
}

namespace detail {
inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}
}  // namespace detail

/// Reorder axes: out[i0,..] = x[i_perm[0],..]. Gradient is the inverse permute.
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || seen[axes[i]]) throw ShapeError("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  const auto in_strides = detail::row_major_strides(s);
  const auto out_strides = detail::row_major_strides(out_shape);
  const std::size_t n = x.numel();
  const std::size_t rank = s.size();

  // flat index map out -> in, shared by forward and backward
  auto map_index = [rank, axes, in_strides, out_strides](std::size_t out_flat) {
    std::size_t in_flat = 0;
    std::size_t rem = out_flat;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t idx = rem / out_strides[d];
      rem %= out_strides[d];
      in_flat += idx * in_strides[axes[d]];
    }
    return in_flat;
  };

  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = x[map_index(i)];
  return finish_op("permute", std::move(out_shape), std::move(v), {x.node_ptr()},
                   [map_index, n](TensorNode* out) {
                     return [out, map_index, n]() {
                       TensorNode* p = out->parents[0].get();
                       auto& g = detail::grad_buf(p);
                       for (std::size_t i = 0; i < n; ++i) g[map_index(i)] += out->grad[i];
                     };
                   });
}

/// Swap the last two axes.
inline Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose: rank must be >= 2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

namespace detail {
/// Decompose shape around `axis` into [outer, len, inner] extents.
struct AxisSplit {
  std::size_t outer, len, inner;
};
inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_str(s));
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}
}  // namespace detail

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& s = x.shape();
  const auto ax = detail::split_axis(s, axis);
  if (start + len > ax.len) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") exceeds axis length " + std::to_string(ax.len));
  }
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> v(ax.outer * len * ax.inner);
  for (std::size_t o = 0; o < ax.outer; ++o) {
    const std::size_t src = (o * ax.len + start) * ax.inner;
    const std::size_t dst = o * len * ax.inner;
    for (std::size_t i = 0; i < len * ax.inner; ++i) v[dst + i] = x[src + i];
  }
  return finish_op("slice", std::move(out_shape), std::move(v), {x.node_ptr()},
                   [ax, start, len](TensorNode* out) {
                     return [out, ax, start, len]() {
                       TensorNode* p = out->parents[0].get();
                       auto& g = detail::grad_buf(p);
                       for (std::size_t o = 0; o < ax.outer; ++o) {
                         const std::size_t dst = (o * ax.len + start) * ax.inner;
                         const std::size_t src = o * len * ax.inner;
                         for (std::size_t i = 0; i < len * ax.inner; ++i)
                           g[dst + i] += out->grad[src + i];
                       }
                     };
                   });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) throw ShapeError("concat: shape mismatch off-axis");
    }
    total += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  const auto ax_out = detail::split_axis(out_shape, axis);

  std::vector<double> v(shape_numel(out_shape));
  std::vector<std::size_t> offsets;  // start offset of each part along the axis
  std::size_t off = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const Tensor& t : parts) {
    const std::size_t len = t.shape()[axis];
    offsets.push_back(off);
    for (std::size_t o = 0; o < ax_out.outer; ++o) {
      const std::size_t src = o * len * ax_out.inner;
      const std::size_t dst = (o * ax_out.len + off) * ax_out.inner;
      for (std::size_t i = 0; i < len * ax_out.inner; ++i) v[dst + i] = t[src + i];
    }
    off += len;
    parents.push_back(t.node_ptr());
  }
  return finish_op("concat", std::move(out_shape), std::move(v), std::move(parents),
                   [ax_out, offsets](TensorNode* out) {
                     return [out, ax_out, offsets]() {
                       for (std::size_t k = 0; k < out->parents.size(); ++k) {
                         TensorNode* p = out->parents[k].get();
                         if (!p->requires_grad) continue;
                         const std::size_t plen = p->value.size() / (ax_out.outer * ax_out.inner);
                         auto& g = detail::grad_buf(p);
                         for (std::size_t o = 0; o < ax_out.outer; ++o) {
                           const std::size_t src = (o * ax_out.len + offsets[k]) * ax_out.inner;
                           const std::size_t dst = o * plen * ax_out.inner;
                           for (std::size_t i = 0; i < plen * ax_out.inner; ++i)
                             g[dst + i] += out->grad[src + i];
                         }
                       }
                     };
                   });
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  return concat(std::vector<Tensor>{a, b}, axis);
}

/// Repeat each element of the last axis `times` times in place:
/// [..., m] -> [..., m*times]. Gradient sums over each repeated block.
inline Tensor repeat_last(const Tensor& x, std::size_t times) {
  if (x.rank() == 0 || times == 0) throw ShapeError("repeat_last: rank >= 1 and times >= 1");
  const Shape& s = x.shape();
  const std::size_t m = s.back();
  Shape out_shape = s;
  out_shape.back() = m * times;
  const std::size_t rows = x.numel() / m;
  std::vector<double> v(rows * m * times);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      const double val = x[r * m + j];
      for (std::size_t t = 0; t < times; ++t) v[(r * m + j) * times + t] = val;
    }
  }
  return finish_op("repeat_last", std::move(out_shape), std::move(v), {x.node_ptr()},
                   [rows, m, times](TensorNode* out) {
                     return [out, rows, m, times]() {
                       TensorNode* p = out->parents[0].get();
                       auto& g = detail::grad_buf(p);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < m; ++j) {
                           double acc = 0.0;
                           for (std::size_t t = 0; t < times; ++t)
                             acc += out->grad[(r * m + j) * times + t];
                           g[r * m + j] += acc;
                         }
                       }
                     };
                   });
}

// ---------------------------------------------------------------------------
// Matrix multiplication: [m,k]x[k,n], [b,m,k]x[k,n] (shared weight), and
// [b,m,k]x[b,k,n] (batched).
// ---------------------------------------------------------------------------

namespace detail {

// C[m,n] += A[m,k] * B[k,n]; ikj order keeps the inner loop contiguous.
inline void mm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k,n] += A^T * B where A is [m,k], B is [m,n]
inline void mm_acc_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool a3 = sa.size() == 3, a2 = sa.size() == 2;
  const bool b3 = sb.size() == 3, b2 = sb.size() == 2;
  if (!((a2 && b2) || (a3 && b2) || (a3 && b3))) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t batch = a3 ? sa[0] : 1;
  const std::size_t m = a3 ? sa[1] : sa[0];
  const std::size_t k = a3 ? sa[2] : sa[1];
  const std::size_t kb = b3 ? sb[1] : sb[0];
  const std::size_t n = b3 ? sb[2] : sb[1];
  if (k != kb || (b3 && sb[0] != batch)) {
    throw ShapeError("matmul: inner/batch dims disagree " + shape_str(sa) + " x " + shape_str(sb));
  }

  Shape out_shape = a3 ? Shape{batch, m, n} : Shape{m, n};
  std::vector<double> v(batch * m * n, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    detail::mm_acc(a.values().data() + bi * m * k, b.values().data() + (b3 ? bi * k * n : 0),
                   v.data() + bi * m * n, m, k, n);
  }
  return finish_op(
      "matmul", std::move(out_shape), std::move(v), {a.node_ptr(), b.node_ptr()},
      [batch, m, k, n, b3](TensorNode* out) {
        return [out, batch, m, k, n, b3]() {
          TensorNode* pa = out->parents[0].get();
          TensorNode* pb = out->parents[1].get();
          const double* gy = out->grad.data();
          if (pa->requires_grad) {
            auto& ga = detail::grad_buf(pa);
            for (std::size_t bi = 0; bi < batch; ++bi) {
              // dA = dC * B^T ; B stored [k,n] so use mm with B^T semantics
              const double* bval = pb->value.data() + (b3 ? bi * k * n : 0);
              const double* g = gy + bi * m * n;
              double* dst = ga.data() + bi * m * k;
              for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                  double acc = 0.0;
                  const double* brow = bval + p * n;
                  const double* grow = g + i * n;
                  for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                  dst[i * k + p] += acc;
                }
              }
            }
          }
          if (pb->requires_grad) {
            auto& gb = detail::grad_buf(pb);
            for (std::size_t bi = 0; bi < batch; ++bi) {
              detail::mm_acc_at(pa->value.data() + bi * m * k, gy + bi * m * n,
                                gb.data() + (b3 ? bi * k * n : 0), m, k, n);
            }
          }
        };
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  return finish_op("sum", Shape{}, {s}, {x.node_ptr()}, [](TensorNode* out) {
    return [out]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      const double gy = out->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy;
    };
  });
}

inline Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  return finish_op("mean", Shape{}, {s * inv}, {x.node_ptr()}, [inv](TensorNode* out) {
    return [out, inv]() {
      TensorNode* p = out->parents[0].get();
      auto& g = detail::grad_buf(p);
      const double gy = out->grad[0] * inv;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy;
    };
  });
}

}  // namespace gestnet
