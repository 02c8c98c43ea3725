#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgnniv/tensor.hpp"

namespace pgnniv {

/// Uniform grid on [0, 1]: n nodes x_i = (i-1)/(n-1), i = 1..n, and n-1
/// elements of size L = 1/(n-1).
struct Grid1D {
  std::size_t n = 0;

  explicit Grid1D(std::size_t node_count) : n(node_count) {
    if (n < 3) {
      throw std::invalid_argument("Grid1D: need at least 3 nodes, got " + std::to_string(n));
    }
  }

  std::size_t nodes() const { return n; }
  std::size_t elements() const { return n - 1; }
  double element_size() const { return 1.0 / static_cast<double>(n - 1); }
  double node(std::size_t i) const {  // 0-based
    return static_cast<double>(i) / static_cast<double>(n - 1);
  }
  double element_midpoint(std::size_t e) const {  // 0-based
    return (node(e) + node(e + 1)) / 2.0;
  }
};

/// Fixed convolution stencil. The kernel is a constant tensor: it never
/// carries gradients and never appears in optimizer parameter lists.
class StencilOp {
 public:
  StencilOp(std::vector<double> kernel_coeffs, double scale) {
    std::vector<double> scaled;
    scaled.reserve(kernel_coeffs.size());
    for (double c : kernel_coeffs) scaled.push_back(c * scale);
    kernel_ = Tensor::constant(std::move(scaled), {1, 1, kernel_coeffs.size()});
  }

  static StencilOp forward_difference(double element_size) {
    return StencilOp({-1.0, 1.0}, 1.0 / element_size);
  }

  static StencilOp element_average() { return StencilOp({0.5, 0.5}, 1.0); }

  const Tensor& kernel() const { return kernel_; }
  bool trainable() const { return false; }

  /// Applies the stencil along the field axis of a [N x w] tensor,
  /// producing [N x (w - K + 1)].
  Tensor apply(const Tensor& field) const {
    if (field.rank() != 2) {
      throw std::invalid_argument("StencilOp: expected [N x w] field, got " +
                                  detail::shape_str(field.shape()));
    }
    const std::size_t rows = field.extent(0), w = field.extent(1);
    const std::size_t k = kernel_.extent(2);
    if (w < k) {
      throw std::invalid_argument("StencilOp: field width " + std::to_string(w) +
                                  " is narrower than the stencil (" + std::to_string(k) + ")");
    }
    Tensor as_signal = reshape(field, {rows, 1, w});
    Tensor filtered = conv1d(as_signal, kernel_);
    return reshape(filtered, {rows, w - k + 1});
  }

 private:
  Tensor kernel_;
};

/// First-order forward difference: out_i = (f_{i+1} - f_i)/L for a
/// [N x w] nodal field, w >= 2.
inline Tensor forward_diff(const Tensor& field, double element_size) {
  if (field.rank() != 2 || field.extent(1) < 2) {
    throw std::invalid_argument("forward_diff: need at least 2 nodes, got " +
                                detail::shape_str(field.shape()));
  }
  return StencilOp::forward_difference(element_size).apply(field);
}

/// Element average: out_i = (f_i + f_{i+1})/2 for a [N x w] nodal field.
inline Tensor element_average(const Tensor& field) {
  if (field.rank() != 2 || field.extent(1) < 2) {
    throw std::invalid_argument("element_average: need at least 2 nodes, got " +
                                detail::shape_str(field.shape()));
  }
  return StencilOp::element_average().apply(field);
}

/// Prepends/appends boundary flows to the element flux:
/// q_tilde = [q1, q_1..q_{n-1}, q2], shape [N x (n+1)].
inline Tensor concat_boundary_flows(const Tensor& q_elem, const Tensor& q1, const Tensor& q2) {
  if (q_elem.rank() != 2) {
    throw std::invalid_argument("concat_boundary_flows: element flux must be [N x (n-1)], got " +
                                detail::shape_str(q_elem.shape()));
  }
  const std::size_t rows = q_elem.extent(0);
  auto as_column = [rows](const Tensor& t, const char* name) {
    if (t.numel() != rows) {
      throw std::invalid_argument(std::string("concat_boundary_flows: ") + name + " has shape " +
                                  detail::shape_str(t.shape()) + ", expected " +
                                  std::to_string(rows) + " values");
    }
    return t.rank() == 2 ? t : reshape(t, {rows, 1});
  };
  return concat_cols({as_column(q1, "q1"), q_elem, as_column(q2, "q2")});
}

}  // namespace pgnniv
