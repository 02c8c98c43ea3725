#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pgnniv {

using Shape = std::vector<std::size_t>;

namespace detail {

// Skips value-initialization so freshly resized buffers are not memset;
// every op fills its output completely before anyone reads it.
template <typename T>
struct NoInitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAllocator<U>;
  };
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) > 0) {
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
  }
};

using Buffer = std::vector<double, NoInitAllocator<double>>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::atomic<std::uint64_t> node_sequence{0};

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // allocated on first use during backward
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;  // empty for leaves and constants
  std::uint64_t seq = 0;
  bool requires_grad = false;
  bool backward_ran = false;

  std::size_t numel() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) {
      grad.resize(value.size());
      std::fill(grad.begin(), grad.end(), 0.0);
    }
  }
};

}  // namespace detail

/// Dense tensor handle. Copies are shallow: they refer to the same storage
/// and the same spot in the computation graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(std::vector<double> data, Shape shape) {
    return make_leaf(std::move(data), std::move(shape), false);
  }
  static Tensor parameter(std::vector<double> data, Shape shape) {
    return make_leaf(std::move(data), std::move(shape), true);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make_leaf(std::vector<double>(detail::shape_numel(shape), 0.0), std::move(shape),
                     requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    return make_leaf(std::vector<double>(detail::shape_numel(shape), v), std::move(shape),
                     requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return make_leaf({v}, Shape{1}, requires_grad);
  }

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->numel(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return {node_->value.data(), node_->value.size()}; }

  /// In-place access for optimizer updates of leaf parameters.
  std::span<double> mutable_data() {
    if (node_->backward_fn) {
      throw std::logic_error("mutable_data: only leaf tensors may be mutated in place");
    }
    return {node_->value.data(), node_->value.size()};
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  std::span<const double> grad() const {
    if (!has_grad()) {
      throw std::logic_error("grad: no gradient buffer (backward not run, or tensor not on path)");
    }
    return {node_->grad.data(), node_->grad.size()};
  }

  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (numel() != 1) {
      throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
    }
    return node_->value[0];
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  static Tensor make_leaf(std::vector<double> data, Shape shape, bool requires_grad) {
    if (detail::shape_numel(shape) != data.size()) {
      throw std::invalid_argument("tensor: shape " + detail::shape_str(shape) + " expects " +
                                  std::to_string(detail::shape_numel(shape)) + " values, got " +
                                  std::to_string(data.size()));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value.assign(data.begin(), data.end());
    n->requires_grad = requires_grad;
    n->seq = detail::node_sequence.fetch_add(1, std::memory_order_relaxed);
    return wrap(std::move(n));
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.resize(shape_numel(n->shape));
  bool requires = false;
  for (const Tensor& t : inputs) requires = requires || t.requires_grad();
  n->requires_grad = requires;
  n->inputs.reserve(inputs.size());
  for (Tensor& t : inputs) n->inputs.push_back(t.node());
  if (requires) n->backward_fn = std::move(backward_fn);
  n->seq = node_sequence.fetch_add(1, std::memory_order_relaxed);
  return Tensor::wrap(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " + detail::shape_str(a.shape()) +
                                " and " + detail::shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), p = b.extent(1);
  detail::Node* an = a.node().get();
  detail::Node* bn = b.node().get();

  Tensor out = detail::make_op({m, p}, {a, b}, [an, bn, m, k, p](detail::Node& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* da = an->grad.data();
      const double* bv = bn->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          double s = 0.0;
          const double* gi = g + i * p;
          const double* bk = bv + kk * p;
          for (std::size_t j = 0; j < p; ++j) s += gi[j] * bk[j];
          da[i * k + kk] += s;
        }
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* db = bn->grad.data();
      const double* av = an->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* gi = g + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = av[i * k + kk];
          double* dbk = db + kk * p;
          for (std::size_t j = 0; j < p; ++j) dbk[j] += aik * gi[j];
        }
      }
    }
  });

  double* c = out.node()->value.data();
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * p;
    for (std::size_t j = 0; j < p; ++j) ci[j] = 0.0;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      const double* bk = bv + kk * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise operations (binary ops allow scalar broadcast on either side)
// ---------------------------------------------------------------------------

namespace detail {

enum class Broadcast { none, left_scalar, right_scalar };

inline Broadcast binary_mode(const Tensor& a, const Tensor& b, const char* name) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.numel() == 1) return Broadcast::left_scalar;
  if (b.numel() == 1) return Broadcast::right_scalar;
  throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()) +
                              " (only scalar broadcast is supported)");
}

// FA(a_i, b_i) -> out_i; DA/DB give d out_i / d a_i and / d b_i from
// (a_i, b_i, out_i).
template <typename FA, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, FA f, DA dfa, DB dfb) {
  const Broadcast mode = binary_mode(a, b, name);
  const Shape& out_shape = (mode == Broadcast::left_scalar) ? b.shape() : a.shape();
  Node* an = a.node().get();
  Node* bn = b.node().get();

  Tensor out = detail::make_op(out_shape, {a, b}, [an, bn, mode, dfa, dfb](Node& self) {
    const std::size_t n = self.numel();
    const double* g = self.grad.data();
    const double* ov = self.value.data();
    const double* av = an->value.data();
    const double* bv = bn->value.data();
    if (an->requires_grad) {
      an->ensure_grad();
      double* da = an->grad.data();
      if (mode == Broadcast::left_scalar) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * dfa(av[0], bv[i], ov[i]);
        da[0] += s;
      } else if (mode == Broadcast::right_scalar) {
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * dfa(av[i], bv[0], ov[i]);
      } else {
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * dfa(av[i], bv[i], ov[i]);
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* db = bn->grad.data();
      if (mode == Broadcast::right_scalar) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * dfb(av[i], bv[0], ov[i]);
        db[0] += s;
      } else if (mode == Broadcast::left_scalar) {
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * dfb(av[0], bv[i], ov[i]);
      } else {
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * dfb(av[i], bv[i], ov[i]);
      }
    }
  });

  double* o = out.node()->value.data();
  const double* av = a.data().data();
  const double* bv = b.data().data();
  const std::size_t n = out.numel();
  if (mode == Broadcast::left_scalar) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(av[0], bv[i]);
  } else if (mode == Broadcast::right_scalar) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(av[i], bv[0]);
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(av[i], bv[i]);
  }
  return out;
}

template <typename F, typename DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  Node* xn = x.node().get();
  Tensor out = detail::make_op(x.shape(), {x}, [xn, df](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const std::size_t n = self.numel();
    const double* g = self.grad.data();
    const double* xv = xn->value.data();
    const double* ov = self.value.data();
    double* dx = xn->grad.data();
    for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * df(xv[i], ov[i]);
  });
  double* o = out.node()->value.data();
  const double* xv = x.data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) o[i] = f(xv[i]);
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

inline Tensor neg(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

inline Tensor ln(const Tensor& x) {
  const double* xv = x.data().data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!(xv[i] > 0.0)) {
      throw std::domain_error("ln: non-positive input " + std::to_string(xv[i]) + " at index " +
                              std::to_string(i));
    }
  }
  return detail::unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor pow_scalar(const Tensor& x, double e) {
  const bool integral = (e == std::floor(e));
  const double* xv = x.data().data();
  if (!integral) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (!(xv[i] > 0.0)) {
        throw std::domain_error("pow_scalar: fractional exponent needs positive base, got " +
                                std::to_string(xv[i]) + " at index " + std::to_string(i));
      }
    }
  }
  return detail::unary_op(
      x, [e](double v) { return std::pow(v, e); },
      [e](double v, double) { return e * std::pow(v, e - 1.0); });
}

/// max(x, lo). Entries below lo are clamped, get zero gradient, and are
/// counted into *events when a counter is supplied.
inline Tensor clamp_min(const Tensor& x, double lo, std::uint64_t* events = nullptr) {
  if (events) {
    const double* xv = x.data().data();
    std::uint64_t c = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) c += (xv[i] < lo) ? 1 : 0;
    *events += c;
  }
  return detail::unary_op(
      x, [lo](double v) { return v < lo ? lo : v; },
      [lo](double v, double) { return v < lo ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// Shape and layout ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (detail::shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + detail::shape_str(x.shape()) + " as " +
                                detail::shape_str(shape));
  }
  detail::Node* xn = x.node().get();
  Tensor out = detail::make_op(std::move(shape), {x}, [xn](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* dx = xn->grad.data();
    for (std::size_t i = 0; i < self.numel(); ++i) dx[i] += g[i];
  });
  std::copy(x.data().begin(), x.data().end(), out.node()->value.begin());
  return out;
}

/// Broadcasts a one-element tensor to [rows x cols].
inline Tensor broadcast_scalar(const Tensor& x, std::size_t rows, std::size_t cols) {
  if (x.numel() != 1) {
    throw std::invalid_argument("broadcast_scalar: expected one element, got " +
                                detail::shape_str(x.shape()));
  }
  detail::Node* xn = x.node().get();
  Tensor out = detail::make_op({rows, cols}, {x}, [xn](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    double s = 0.0;
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.numel(); ++i) s += g[i];
    xn->grad[0] += s;
  });
  std::fill(out.node()->value.begin(), out.node()->value.end(), x.item());
  return out;
}

/// Repeats a width-w vector across rows: [w] -> [rows x w].
inline Tensor tile_rows(const Tensor& v, std::size_t rows) {
  if (v.rank() != 1) {
    throw std::invalid_argument("tile_rows: expected rank-1 tensor, got " +
                                detail::shape_str(v.shape()));
  }
  const std::size_t w = v.extent(0);
  detail::Node* vn = v.node().get();
  Tensor out = detail::make_op({rows, w}, {v}, [vn, rows, w](detail::Node& self) {
    if (!vn->requires_grad) return;
    vn->ensure_grad();
    const double* g = self.grad.data();
    double* dv = vn->grad.data();
    for (std::size_t i = 0; i < rows; ++i) {
      const double* gi = g + i * w;
      for (std::size_t j = 0; j < w; ++j) dv[j] += gi[j];
    }
  });
  double* o = out.node()->value.data();
  const double* vv = v.data().data();
  for (std::size_t i = 0; i < rows; ++i) std::copy(vv, vv + w, o + i * w);
  return out;
}

/// Adds a width-P bias vector to every row of a [M x P] tensor.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.extent(0) != x.extent(1)) {
    throw std::invalid_argument("add_bias: incompatible shapes " + detail::shape_str(x.shape()) +
                                " and " + detail::shape_str(b.shape()));
  }
  const std::size_t m = x.extent(0), p = x.extent(1);
  detail::Node* xn = x.node().get();
  detail::Node* bn = b.node().get();
  Tensor out = detail::make_op({m, p}, {x, b}, [xn, bn, m, p](detail::Node& self) {
    const double* g = self.grad.data();
    if (xn->requires_grad) {
      xn->ensure_grad();
      double* dx = xn->grad.data();
      for (std::size_t i = 0; i < m * p; ++i) dx[i] += g[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      double* db = bn->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* gi = g + i * p;
        for (std::size_t j = 0; j < p; ++j) db[j] += gi[j];
      }
    }
  });
  double* o = out.node()->value.data();
  const double* xv = x.data().data();
  const double* bv = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = xv + i * p;
    double* oi = o + i * p;
    for (std::size_t j = 0; j < p; ++j) oi[j] = xi[j] + bv[j];
  }
  return out;
}

/// Column-wise concatenation of [N x w_i] tensors into [N x sum(w_i)].
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no tensors given");
  const std::size_t n = parts.front().extent(0);
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != 2 || t.extent(0) != n) {
      throw std::invalid_argument("concat_cols: expected [N x w] with N=" + std::to_string(n) +
                                  ", got " + detail::shape_str(t.shape()));
    }
    total += t.extent(1);
  }
  std::vector<detail::Node*> nodes;
  std::vector<std::size_t> widths;
  for (const Tensor& t : parts) {
    nodes.push_back(t.node().get());
    widths.push_back(t.extent(1));
  }
  Tensor out =
      detail::make_op({n, total}, parts, [nodes, widths, n, total](detail::Node& self) {
        const double* g = self.grad.data();
        std::size_t offset = 0;
        for (std::size_t part = 0; part < nodes.size(); ++part) {
          detail::Node* pn = nodes[part];
          const std::size_t w = widths[part];
          if (pn->requires_grad) {
            pn->ensure_grad();
            double* dp = pn->grad.data();
            for (std::size_t i = 0; i < n; ++i) {
              const double* gi = g + i * total + offset;
              double* dpi = dp + i * w;
              for (std::size_t j = 0; j < w; ++j) dpi[j] += gi[j];
            }
          }
          offset += w;
        }
      });
  double* o = out.node()->value.data();
  std::size_t offset = 0;
  for (std::size_t part = 0; part < parts.size(); ++part) {
    const double* pv = parts[part].data().data();
    const std::size_t w = widths[part];
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(pv + i * w, pv + (i + 1) * w, o + i * total + offset);
    }
    offset += w;
  }
  return out;
}

/// Extracts column j of a [N x w] tensor as [N x 1].
inline Tensor col(const Tensor& x, std::size_t j) {
  if (x.rank() != 2 || j >= x.extent(1)) {
    throw std::invalid_argument("col: index " + std::to_string(j) + " out of range for " +
                                detail::shape_str(x.shape()));
  }
  const std::size_t n = x.extent(0), w = x.extent(1);
  detail::Node* xn = x.node().get();
  Tensor out = detail::make_op({n, 1}, {x}, [xn, j, n, w](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double* g = self.grad.data();
    double* dx = xn->grad.data();
    for (std::size_t i = 0; i < n; ++i) dx[i * w + j] += g[i];
  });
  double* o = out.node()->value.data();
  const double* xv = x.data().data();
  for (std::size_t i = 0; i < n; ++i) o[i] = xv[i * w + j];
  return out;
}

// ---------------------------------------------------------------------------
// 1-D valid convolution with optional pre/post-activation biases
// ---------------------------------------------------------------------------

enum class Activation { identity, sigmoid };

inline Tensor conv1d(const Tensor& signal, const Tensor& kernel,
                     std::optional<Tensor> bias_pre = std::nullopt,
                     std::optional<Tensor> bias_post = std::nullopt,
                     Activation activation = Activation::identity) {
  if (signal.rank() != 3 || kernel.rank() != 3 || signal.extent(1) != kernel.extent(0)) {
    throw std::invalid_argument("conv1d: expected signal [N x C_in x W] and kernel "
                                "[C_in x C_out x K], got " +
                                detail::shape_str(signal.shape()) + " and " +
                                detail::shape_str(kernel.shape()));
  }
  const std::size_t n = signal.extent(0), ci = signal.extent(1), w = signal.extent(2);
  const std::size_t co = kernel.extent(1), k = kernel.extent(2);
  if (k > w) {
    throw std::invalid_argument("conv1d: kernel width " + std::to_string(k) +
                                " exceeds signal width " + std::to_string(w));
  }
  const std::size_t wo = w - k + 1;
  for (const auto& [b, name] :
       {std::pair{&bias_pre, "bias_pre"}, std::pair{&bias_post, "bias_post"}}) {
    if (b->has_value() &&
        ((*b)->rank() != 1 || (*b)->extent(0) != co)) {
      throw std::invalid_argument(std::string("conv1d: ") + name + " must have shape [" +
                                  std::to_string(co) + "], got " +
                                  detail::shape_str((*b)->shape()));
    }
  }

  std::vector<Tensor> inputs{signal, kernel};
  if (bias_pre) inputs.push_back(*bias_pre);
  if (bias_post) inputs.push_back(*bias_post);

  detail::Node* sn = signal.node().get();
  detail::Node* kn = kernel.node().get();
  detail::Node* bpre = bias_pre ? bias_pre->node().get() : nullptr;
  detail::Node* bpost = bias_post ? bias_post->node().get() : nullptr;

  Tensor out = detail::make_op(
      {n, co, wo}, std::move(inputs),
      [sn, kn, bpre, bpost, n, ci, w, co, k, wo, activation](detail::Node& self) {
        const double* g = self.grad.data();
        const double* ov = self.value.data();
        const double bpost0 = 0.0;
        // d(out)/d(pre-activation), flattened like the output
        detail::Buffer dpre(self.numel());
        for (std::size_t i = 0; i < self.numel(); ++i) {
          if (activation == Activation::sigmoid) {
            const double a =
                ov[i] - (bpost ? bpost->value[(i / wo) % co] : bpost0);  // sigmoid output
            dpre[i] = g[i] * a * (1.0 - a);
          } else {
            dpre[i] = g[i];
          }
        }
        if (bpost && bpost->requires_grad) {
          bpost->ensure_grad();
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t c = 0; c < co; ++c) {
              double acc = 0.0;
              const double* gr = g + (s * co + c) * wo;
              for (std::size_t j = 0; j < wo; ++j) acc += gr[j];
              bpost->grad[c] += acc;
            }
          }
        }
        if (bpre && bpre->requires_grad) {
          bpre->ensure_grad();
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t c = 0; c < co; ++c) {
              double acc = 0.0;
              const double* dr = dpre.data() + (s * co + c) * wo;
              for (std::size_t j = 0; j < wo; ++j) acc += dr[j];
              bpre->grad[c] += acc;
            }
          }
        }
        if (sn->requires_grad) {
          sn->ensure_grad();
          double* ds = sn->grad.data();
          const double* kv = kn->value.data();
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t c = 0; c < co; ++c) {
              const double* dr = dpre.data() + (s * co + c) * wo;
              for (std::size_t ic = 0; ic < ci; ++ic) {
                double* dsr = ds + (s * ci + ic) * w;
                const double* kr = kv + (ic * co + c) * k;
                for (std::size_t j = 0; j < wo; ++j) {
                  const double d = dr[j];
                  for (std::size_t t = 0; t < k; ++t) dsr[j + t] += d * kr[t];
                }
              }
            }
          }
        }
        if (kn->requires_grad) {
          kn->ensure_grad();
          double* dk = kn->grad.data();
          const double* sv = sn->value.data();
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t c = 0; c < co; ++c) {
              const double* dr = dpre.data() + (s * co + c) * wo;
              for (std::size_t ic = 0; ic < ci; ++ic) {
                const double* sr = sv + (s * ci + ic) * w;
                double* dkr = dk + (ic * co + c) * k;
                for (std::size_t t = 0; t < k; ++t) {
                  double acc = 0.0;
                  for (std::size_t j = 0; j < wo; ++j) acc += dr[j] * sr[j + t];
                  dkr[t] += acc;
                }
              }
            }
          }
        }
      });

  double* o = out.node()->value.data();
  const double* sv = signal.data().data();
  const double* kv = kernel.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < co; ++c) {
      double* orow = o + (s * co + c) * wo;
      const double pre = bias_pre ? bias_pre->data()[c] : 0.0;
      for (std::size_t j = 0; j < wo; ++j) orow[j] = pre;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* srow = sv + (s * ci + ic) * w;
        const double* krow = kv + (ic * co + c) * k;
        for (std::size_t t = 0; t < k; ++t) {
          const double kt = krow[t];
          for (std::size_t j = 0; j < wo; ++j) orow[j] += kt * srow[j + t];
        }
      }
      if (activation == Activation::sigmoid) {
        for (std::size_t j = 0; j < wo; ++j) {
          const double v = orow[j];
          orow[j] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        }
      }
      if (bias_post) {
        const double post = bias_post->data()[c];
        for (std::size_t j = 0; j < wo; ++j) orow[j] += post;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Mean over samples (axis 0) of the per-sample sum of squared components.
/// Rank-1 tensors count as a single sample.
inline Tensor mse(const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("mse: empty tensor");
  const std::size_t samples = x.rank() >= 2 ? x.extent(0) : 1;
  detail::Node* xn = x.node().get();
  Tensor out = detail::make_op({1}, {x}, [xn, samples](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0] * 2.0 / static_cast<double>(samples);
    const double* xv = xn->value.data();
    double* dx = xn->grad.data();
    for (std::size_t i = 0; i < xn->numel(); ++i) dx[i] += g * xv[i];
  });
  const double* xv = x.data().data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += xv[i] * xv[i];
  out.node()->value[0] = s / static_cast<double>(samples);
  return out;
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

/// Populates gradient buffers of every grad-flagged tensor the scalar root
/// depends on. A second call on the same root is an error; rebuild the graph
/// (a fresh forward pass) instead.
inline void backward(const Tensor& root) {
  detail::Node* r = root.node().get();
  if (r->numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                detail::shape_str(r->shape));
  }
  if (!r->requires_grad) {
    throw std::logic_error("backward: root does not depend on any gradient-enabled tensor");
  }
  if (r->backward_ran) {
    throw std::logic_error("backward: already run for this graph; rebuild before calling again");
  }
  r->backward_ran = true;

  std::vector<detail::Node*> order;
  std::vector<detail::Node*> stack{r};
  // seq ids are strictly increasing along construction, so sorting the
  // reachable set descending yields a reverse topological order.
  std::vector<detail::Node*> seen;
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (std::find(seen.begin(), seen.end(), n) != seen.end()) continue;
    seen.push_back(n);
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  r->ensure_grad();
  r->grad[0] = 1.0;
  for (detail::Node* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace pgnniv
