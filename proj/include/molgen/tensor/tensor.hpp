// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "molgen/error.hpp"
#include "molgen/rng.hpp"

namespace molgen {

using Shape = std::vector<int>;

inline std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

// Dense row-major tensor of doubles with a reverse-mode tape. Ops record a
// backward closure whenever gradients are enabled and some input requires
// them; backward(loss) replays the tape in reverse topological order and sums
// gradient contributions at fan-out points.
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Impl>> parents;
    std::function<void(Impl&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    void ensure_grad() {
      if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape) {
    auto impl = std::make_shared<Impl>();
    impl->values.assign(numel_of(shape), 0.0);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
  }

  static Tensor full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
    return t;
  }

  static Tensor from(std::vector<double> values, Shape shape) {
    if (static_cast<std::int64_t>(values.size()) != numel_of(shape)) {
      throw Error(ErrorCode::ShapeMismatch, "data length does not match " + shape_str(shape));
    }
    auto impl = std::make_shared<Impl>();
    impl->values = std::move(values);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
  }

  static Tensor scalar(double v) { return from({v}, {1}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const {
    return impl_->shape[i < 0 ? static_cast<int>(impl_->shape.size()) + i : i];
  }
  std::int64_t numel() const { return impl_->numel(); }

  const std::vector<double>& values() const { return impl_->values; }
  std::vector<double>& values_mut() { return impl_->values; }
  const std::vector<double>& grad() const { return impl_->grad; }
  std::vector<double>& grad_mut() { return impl_->grad; }

  double item() const {
    if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on shape " + shape_str(shape()));
    return impl_->values[0];
  }

  Tensor& set_requires_grad(bool flag = true) {
    impl_->requires_grad = flag;
    if (flag) impl_->ensure_grad();
    return *this;
  }
  bool requires_grad() const { return impl_->requires_grad; }

  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

  std::shared_ptr<Impl> impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

// Gradient recording is on by default; evaluation-mode code wraps forward
// passes in a NoGradGuard to skip the tape entirely.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool saved;
  NoGradGuard() : saved(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved; }
};

namespace detail {

using ImplPtr = std::shared_ptr<Tensor::Impl>;

inline Tensor make_result(Shape shape, std::vector<double> values,
                          std::vector<Tensor> parents,
                          std::function<void(Tensor::Impl&)> backward_fn) {
  auto impl = std::make_shared<Tensor::Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  bool needs = false;
  if (grad_mode()) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    impl->requires_grad = true;
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

// Trailing broadcast: b's shape must be a suffix of a's shape.
inline bool is_suffix(const Shape& suffix, const Shape& shape) {
  if (suffix.size() > shape.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), shape.rbegin());
}

inline void accumulate(Tensor::Impl& target, const std::vector<double>& contribution) {
  target.ensure_grad();
  for (std::size_t i = 0; i < contribution.size(); ++i) target.grad[i] += contribution[i];
}

}  // namespace detail

// ---- elementwise ----------------------------------------------------------

namespace detail {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b,
                        const char* name) {
  if (!is_suffix(b.shape(), a.shape())) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(name) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::int64_t n = a.numel();
  const std::int64_t span = b.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % span]);

  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [=](Tensor::Impl& self) {
    if (a_impl->requires_grad) {
      a_impl->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        a_impl->grad[i] += bwd_a(self.grad[i], a_impl->values[i], b_impl->values[i % span]);
      }
    }
    if (b_impl->requires_grad) {
      b_impl->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        b_impl->grad[i % span] += bwd_b(self.grad[i], a_impl->values[i], b_impl->values[i % span]);
      }
    }
  });
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd bwd) {
  const std::int64_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  auto a_impl = a.impl();
  auto result = make_result(a.shape(), std::move(out), {a}, nullptr);
  auto self_impl = result.impl();
  if (self_impl->requires_grad) {
    self_impl->backward_fn = [=](Tensor::Impl& self) {
      a_impl->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        a_impl->grad[i] += bwd(self.grad[i], a_impl->values[i], self.values[i]);
      }
    };
  }
  return result;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (detail::is_suffix(b.shape(), a.shape())) {
    return detail::broadcast_binary(
        a, b, [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return g; },
        "add");
  }
  return detail::broadcast_binary(
      b, a, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; },
      "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; },
      "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (detail::is_suffix(b.shape(), a.shape())) {
    return detail::broadcast_binary(
        a, b, [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; }, "mul");
  }
  return detail::broadcast_binary(
      b, a, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; }, "mul");
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(a, [c](double x) { return c * x; },
                       [c](double g, double, double) { return c * g; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary(a, [c](double x) { return x + c; },
                       [](double g, double, double) { return g; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::exp(x); },
                       [](double g, double, double y) { return g * y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::log(x); },
                       [](double g, double x, double) { return g / x; });
}

// ---- shape ops -------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw Error(ErrorCode::ShapeMismatch,
                "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto a_impl = a.impl();
  const Shape original = a.shape();
  return detail::make_result(std::move(shape), a.values(), {a}, [=](Tensor::Impl& self) {
    detail::accumulate(*a_impl, self.grad);
  });
}

inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw Error(ErrorCode::ShapeMismatch, "permute rank mismatch");
  }
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = a.dim(perm[i]);

  std::vector<std::int64_t> in_strides(r, 1), out_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.dim(i + 1);
  for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];

  const std::int64_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  std::vector<std::int64_t> gather(r);
  for (int i = 0; i < r; ++i) gather[i] = in_strides[perm[i]];
  for (std::int64_t o = 0; o < n; ++o) {
    std::int64_t rem = o, src = 0;
    for (int i = 0; i < r; ++i) {
      src += (rem / out_strides[i]) * gather[i];
      rem %= out_strides[i];
    }
    out[o] = av[src];
  }

  auto a_impl = a.impl();
  return detail::make_result(std::move(out_shape), std::move(out), {a}, [=](Tensor::Impl& self) {
    a_impl->ensure_grad();
    for (std::int64_t o = 0; o < n; ++o) {
      std::int64_t rem = o, src = 0;
      for (int i = 0; i < r; ++i) {
        src += (rem / out_strides[i]) * gather[i];
        rem %= out_strides[i];
      }
      a_impl->grad[src] += self.grad[o];
    }
  });
}

// Concatenation along `axis`; all inputs must agree on the other dims.
inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const Tensor& part : parts) {
    Shape expect = part.shape();
    expect[axis] = 0;
    Shape got = out_shape;
    got[axis] = 0;
    if (expect != got) throw Error(ErrorCode::ShapeMismatch, "concat " + shape_str(part.shape()));
    out_shape[axis] += part.dim(axis);
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[i];

  std::vector<double> out(numel_of(out_shape));
  const std::int64_t out_row = out_shape[axis] * inner;
  std::int64_t offset_rows = 0;
  for (const Tensor& part : parts) {
    const std::int64_t rows = part.dim(axis) * inner;
    const auto& pv = part.values();
    for (std::int64_t b = 0; b < outer; ++b) {
      std::copy(pv.begin() + b * rows, pv.begin() + (b + 1) * rows,
                out.begin() + b * out_row + offset_rows);
    }
    offset_rows += rows;
  }

  std::vector<detail::ImplPtr> impls;
  for (const Tensor& part : parts) impls.push_back(part.impl());
  return detail::make_result(out_shape, std::move(out), parts, [=](Tensor::Impl& self) {
    std::int64_t offset = 0;
    for (const auto& impl : impls) {
      std::int64_t rows = impl->numel() / outer;
      if (impl->requires_grad) {
        impl->ensure_grad();
        for (std::int64_t b = 0; b < outer; ++b) {
          for (std::int64_t i = 0; i < rows; ++i) {
            impl->grad[b * rows + i] += self.grad[b * out_row + offset + i];
          }
        }
      }
      offset += rows;
    }
  });
}

inline Tensor slice(const Tensor& a, int axis, int start, int length) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (start < 0 || start + length > a.dim(axis)) {
    throw Error(ErrorCode::ShapeMismatch, "slice out of range");
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
  const std::int64_t in_row = a.dim(axis) * inner;
  const std::int64_t out_row = length * inner;

  std::vector<double> out(numel_of(out_shape));
  const auto& av = a.values();
  for (std::int64_t b = 0; b < outer; ++b) {
    std::copy(av.begin() + b * in_row + start * inner, av.begin() + b * in_row + (start + length) * inner,
              out.begin() + b * out_row);
  }
  auto a_impl = a.impl();
  return detail::make_result(out_shape, std::move(out), {a}, [=](Tensor::Impl& self) {
    a_impl->ensure_grad();
    for (std::int64_t b = 0; b < outer; ++b) {
      for (std::int64_t i = 0; i < out_row; ++i) {
        a_impl->grad[b * in_row + start * inner + i] += self.grad[b * out_row + i];
      }
    }
  });
}

// ---- matmul ----------------------------------------------------------------

namespace detail {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenRowMajor>;
using ConstMatMap = Eigen::Map<const EigenRowMajor>;

}  // namespace detail

// Batched matrix product (.., m, k) x (.., k, n) -> (.., m, n). A rank-2
// right operand is shared across all leading dims of the left one.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const int ra = a.rank(), rb = b.rank();
  if (ra < 2 || rb < 2) throw Error(ErrorCode::ShapeMismatch, "matmul needs rank >= 2");
  const int m = a.dim(-2), k = a.dim(-1);
  const int kb = b.dim(-2), n = b.dim(-1);
  if (k != kb) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const bool shared_b = rb == 2 && ra > 2;
  if (!shared_b && ra != rb) throw Error(ErrorCode::ShapeMismatch, "matmul batch ranks differ");
  std::int64_t batch = 1;
  for (int i = 0; i < ra - 2; ++i) {
    batch *= a.dim(i);
    if (!shared_b && a.dim(i) != b.dim(i)) {
      throw Error(ErrorCode::ShapeMismatch, "matmul batch dims differ");
    }
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(batch * m * n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t s = 0; s < batch; ++s) {
    detail::ConstMatMap ma(av.data() + s * m * k, m, k);
    detail::ConstMatMap mb(bv.data() + (shared_b ? 0 : s * k * n), k, n);
    detail::MatMap mo(out.data() + s * m * n, m, n);
    mo.noalias() = ma * mb;
  }

  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return detail::make_result(std::move(out_shape), std::move(out), {a, b}, [=](Tensor::Impl& self) {
    if (a_impl->requires_grad) {
      a_impl->ensure_grad();
      for (std::int64_t s = 0; s < batch; ++s) {
        detail::ConstMatMap go(self.grad.data() + s * m * n, m, n);
        detail::ConstMatMap mb(b_impl->values.data() + (shared_b ? 0 : s * k * n), k, n);
        detail::MatMap ga(a_impl->grad.data() + s * m * k, m, k);
        ga.noalias() += go * mb.transpose();
      }
    }
    if (b_impl->requires_grad) {
      b_impl->ensure_grad();
      for (std::int64_t s = 0; s < batch; ++s) {
        detail::ConstMatMap go(self.grad.data() + s * m * n, m, n);
        detail::ConstMatMap ma(a_impl->values.data() + s * m * k, m, k);
        detail::MatMap gb(b_impl->grad.data() + (shared_b ? 0 : s * k * n), k, n);
        gb.noalias() += ma.transpose() * go;
      }
    }
  });
}

// ---- reductions and norms --------------------------------------------------

inline Tensor sum(const Tensor& a) {
  const auto& av = a.values();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  auto a_impl = a.impl();
  return detail::make_result({1}, {total}, {a}, [=](Tensor::Impl& self) {
    a_impl->ensure_grad();
    for (double& g : a_impl->grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return scale(sum(a), inv);
}

// Softmax over the last axis with max subtraction; rows of -inf-masked
// entries come out exactly zero.
inline Tensor softmax_last(const Tensor& a) {
  const int cols = a.dim(-1);
  const std::int64_t rows = a.numel() / cols;
  std::vector<double> out(a.numel());
  const auto& av = a.values();
  for (std::int64_t row = 0; row < rows; ++row) {
    const double* x = av.data() + row * cols;
    double* y = out.data() + row * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
  }
  auto a_impl = a.impl();
  auto result = detail::make_result(a.shape(), std::move(out), {a}, nullptr);
  auto self_impl = result.impl();
  if (self_impl->requires_grad) {
    self_impl->backward_fn = [=](Tensor::Impl& self) {
      a_impl->ensure_grad();
      for (std::int64_t row = 0; row < rows; ++row) {
        const double* y = self.values.data() + row * cols;
        const double* gy = self.grad.data() + row * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += y[j] * gy[j];
        double* gx = a_impl->grad.data() + row * cols;
        for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return result;
}

inline Tensor softmax(const Tensor& a, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis == r - 1) return softmax_last(a);
  std::vector<int> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[axis], perm[r - 1]);
  return permute(softmax_last(permute(a, perm)), perm);
}

// Layer normalization over the last axis: standardize, then affine gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6) {
  const int cols = x.dim(-1);
  if (gamma.numel() != cols || beta.numel() != cols) {
    throw Error(ErrorCode::ShapeMismatch, "layer_norm parameter width");
  }
  const std::int64_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::int64_t row = 0; row < rows; ++row) {
    const double* xr = xv.data() + row * cols;
    double mean_v = 0.0;
    for (int j = 0; j < cols; ++j) mean_v += xr[j];
    mean_v /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (xr[j] - mean_v) * (xr[j] - mean_v);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[row] = inv;
    for (int j = 0; j < cols; ++j) {
      const double h = (xr[j] - mean_v) * inv;
      (*xhat)[row * cols + j] = h;
      out[row * cols + j] = gv[j] * h + bv[j];
    }
  }
  auto x_impl = x.impl();
  auto g_impl = gamma.impl();
  auto b_impl = beta.impl();
  return detail::make_result(x.shape(), std::move(out), {x, gamma, beta}, [=](Tensor::Impl& self) {
    if (g_impl->requires_grad) g_impl->ensure_grad();
    if (b_impl->requires_grad) b_impl->ensure_grad();
    if (x_impl->requires_grad) x_impl->ensure_grad();
    for (std::int64_t row = 0; row < rows; ++row) {
      const double* gy = self.grad.data() + row * cols;
      const double* h = xhat->data() + row * cols;
      if (g_impl->requires_grad || b_impl->requires_grad) {
        for (int j = 0; j < cols; ++j) {
          if (g_impl->requires_grad) g_impl->grad[j] += gy[j] * h[j];
          if (b_impl->requires_grad) b_impl->grad[j] += gy[j];
        }
      }
      if (x_impl->requires_grad) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (int j = 0; j < cols; ++j) {
          const double dh = gy[j] * g_impl->values[j];
          mean_dh += dh;
          mean_dh_h += dh * h[j];
        }
        mean_dh /= cols;
        mean_dh_h /= cols;
        double* gx = x_impl->grad.data() + row * cols;
        const double inv = (*inv_sigma)[row];
        for (int j = 0; j < cols; ++j) {
          const double dh = gy[j] * g_impl->values[j];
          gx[j] += inv * (dh - mean_dh - h[j] * mean_dh_h);
        }
      }
    }
  });
}

// ---- lookup, dropout, losses ------------------------------------------------

// Rows of `weight` gathered by id; gradients scatter-add back into the rows.
inline Tensor embedding(const std::vector<int>& ids, const Tensor& weight) {
  const int dim = weight.dim(-1);
  const int vocab = weight.dim(0);
  std::vector<double> out(ids.size() * dim);
  const auto& wv = weight.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) throw Error(ErrorCode::ShapeMismatch, "embedding id out of range");
    std::copy(wv.begin() + ids[i] * dim, wv.begin() + (ids[i] + 1) * dim, out.begin() + i * dim);
  }
  auto w_impl = weight.impl();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return detail::make_result({static_cast<int>(ids.size()), dim}, std::move(out), {weight},
                             [=](Tensor::Impl& self) {
                               w_impl->ensure_grad();
                               for (std::size_t i = 0; i < ids_copy->size(); ++i) {
                                 const int row = (*ids_copy)[i];
                                 for (int j = 0; j < dim; ++j) {
                                   w_impl->grad[row * dim + j] += self.grad[i * dim + j];
                                 }
                               }
                             });
}

// Inverted-scaling dropout; identity (and no tape node) when not training.
inline Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  const auto& xv = x.values();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    out[i] = xv[i] * (*mask)[i];
  }
  auto x_impl = x.impl();
  return detail::make_result(x.shape(), std::move(out), {x}, [=](Tensor::Impl& self) {
    x_impl->ensure_grad();
    for (std::int64_t i = 0; i < self.numel(); ++i) x_impl->grad[i] += self.grad[i] * (*mask)[i];
  });
}

// Token-level cross entropy over (rows, vocab) logits, averaged over rows
// with nonzero mask weight.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<double>& mask) {
  const int vocab = logits.dim(-1);
  const std::int64_t rows = logits.numel() / vocab;
  if (static_cast<std::int64_t>(targets.size()) != rows || mask.size() != targets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "cross_entropy rows");
  }
  double weight_total = 0.0;
  for (double w : mask) weight_total += w;
  if (weight_total <= 0.0) throw Error(ErrorCode::ShapeMismatch, "cross_entropy: empty mask");

  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  const auto& lv = logits.values();
  double nll = 0.0;
  for (std::int64_t row = 0; row < rows; ++row) {
    const double* x = lv.data() + row * vocab;
    double* p = probs->data() + row * vocab;
    double mx = x[0];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, x[j]);
    double total = 0.0;
    for (int j = 0; j < vocab; ++j) {
      p[j] = std::exp(x[j] - mx);
      total += p[j];
    }
    const double inv = 1.0 / total;
    for (int j = 0; j < vocab; ++j) p[j] *= inv;
    if (mask[row] > 0.0) {
      nll -= mask[row] * std::log(std::max(p[targets[row]], 1e-300));
    }
  }
  nll /= weight_total;

  auto logits_impl = logits.impl();
  auto targets_copy = std::make_shared<std::vector<int>>(targets);
  auto mask_copy = std::make_shared<std::vector<double>>(mask);
  return detail::make_result({1}, {nll}, {logits}, [=](Tensor::Impl& self) {
    logits_impl->ensure_grad();
    const double g = self.grad[0] / weight_total;
    for (std::int64_t row = 0; row < rows; ++row) {
      const double w = (*mask_copy)[row];
      if (w <= 0.0) continue;
      const double* p = probs->data() + row * vocab;
      double* gx = logits_impl->grad.data() + row * vocab;
      const int t = (*targets_copy)[row];
      for (int j = 0; j < vocab; ++j) gx[j] += g * w * (p[j] - (j == t ? 1.0 : 0.0));
    }
  });
}

// ---- backward ----------------------------------------------------------------

// Populates gradients of everything reachable from `loss` through the tape.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward on shape " + shape_str(loss.shape()));
  }
  using Impl = Tensor::Impl;
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, std::size_t>> stack{{loss.impl().get(), 0}};
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (next < impl->parents.size()) {
      Impl* parent = impl->parents[next++].get();
      if (parent->backward_fn && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(impl);
      stack.pop_back();
    }
  }
  for (Impl* impl : order) impl->ensure_grad();
  auto* root = loss.impl().get();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---- initializers -------------------------------------------------------------

inline Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values_mut()) v = rng.uniform(-bound, bound);
  return t;
}

// Xavier/Glorot uniform for a (fan_in, fan_out) weight.
inline Tensor xavier_init(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  return uniform_init({fan_in, fan_out}, bound, rng);
}

}  // namespace molgen
