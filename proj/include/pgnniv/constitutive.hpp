#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pgnniv/grid.hpp"
#include "pgnniv/tensor.hpp"

namespace pgnniv {

enum class ModelKind { scalar_k, diagonal_k, cnn_2l, cnn_3l, parametric };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::scalar_k: return "scalar-k";
    case ModelKind::diagonal_k: return "diagonal-k";
    case ModelKind::cnn_2l: return "cnn-2l";
    case ModelKind::cnn_3l: return "cnn-3l";
    case ModelKind::parametric: return "parametric";
  }
  throw std::logic_error("model_kind_name: bad enum");
}

inline ModelKind parse_model_kind(const std::string& name) {
  if (name == "scalar-k") return ModelKind::scalar_k;
  if (name == "diagonal-k") return ModelKind::diagonal_k;
  if (name == "cnn-2l") return ModelKind::cnn_2l;
  if (name == "cnn-3l") return ModelKind::cnn_3l;
  if (name == "parametric") return ModelKind::parametric;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected scalar-k|diagonal-k|cnn-2l|cnn-3l|parametric)");
}

// One homogeneous diffusivity value for the whole domain.
struct ScalarK {
  Tensor k;  // [1]
};

// One diffusivity value per element; position-dependent, field-independent.
struct DiagonalK {
  Tensor k;  // [n-1]
};

// Pointwise linear map k = w*um + b_pre + b_post (1x1 convolution).
struct Cnn2L {
  Tensor weight;     // [1 x 1 x 1]
  Tensor bias_pre;   // [1]
  Tensor bias_post;  // [1]
};

// Pointwise two-stage map with a sigmoid hidden layer of width m.
struct Cnn3L {
  Tensor w1;       // [1 x m x 1]
  Tensor b1_pre;   // [m]
  Tensor b1_post;  // [m]
  Tensor w2;       // [m x 1 x 1]
  Tensor b2_pre;   // [1]
  Tensor b2_post;  // [1]
  std::size_t hidden_width = 5;
};

// Prescribed law k(u) = alpha + beta * u^gamma with trainable parameters.
// u^gamma is computed as exp(gamma * ln(u)) with u clamped at kMinBase;
// clamp events are counted, never silent.
struct Parametric {
  Tensor alpha;  // [1]
  Tensor beta;   // [1]
  Tensor gamma;  // [1]
  mutable std::uint64_t clamp_events = 0;
  static constexpr double kMinBase = 1e-6;
};

using ConstitutiveModel = std::variant<ScalarK, DiagonalK, Cnn2L, Cnn3L, Parametric>;

inline ModelKind model_kind(const ConstitutiveModel& m) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ScalarK>) return ModelKind::scalar_k;
        else if constexpr (std::is_same_v<T, DiagonalK>) return ModelKind::diagonal_k;
        else if constexpr (std::is_same_v<T, Cnn2L>) return ModelKind::cnn_2l;
        else if constexpr (std::is_same_v<T, Cnn3L>) return ModelKind::cnn_3l;
        else return ModelKind::parametric;
      },
      m);
}

/// Fresh model with the documented initialization: positive mid-range values
/// for the plain diffusivity tensors, uniform [-0.3, 0.3] CNN kernels with
/// zero biases, and (alpha, beta, gamma) = (0.5, 0.5, 1.0).
inline ConstitutiveModel make_model(ModelKind kind, std::size_t elements,
                                    std::size_t hidden_width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> kernel_init(-0.3, 0.3);
  switch (kind) {
    case ModelKind::scalar_k:
      return ScalarK{Tensor::parameter({0.5}, {1})};
    case ModelKind::diagonal_k:
      return DiagonalK{Tensor::parameter(std::vector<double>(elements, 0.5), {elements})};
    case ModelKind::cnn_2l:
      return Cnn2L{Tensor::parameter({kernel_init(rng)}, {1, 1, 1}),
                   Tensor::parameter({0.0}, {1}), Tensor::parameter({0.0}, {1})};
    case ModelKind::cnn_3l: {
      const std::size_t m = hidden_width;
      if (m == 0) throw std::invalid_argument("make_model: cnn-3l hidden width must be >= 1");
      std::vector<double> w1(m), w2(m);
      for (double& w : w1) w = kernel_init(rng);
      for (double& w : w2) w = kernel_init(rng);
      return Cnn3L{Tensor::parameter(std::move(w1), {1, m, 1}),
                   Tensor::parameter(std::vector<double>(m, 0.0), {m}),
                   Tensor::parameter(std::vector<double>(m, 0.0), {m}),
                   Tensor::parameter(std::move(w2), {m, 1, 1}),
                   Tensor::parameter({0.0}, {1}),
                   Tensor::parameter({0.0}, {1}),
                   m};
    }
    case ModelKind::parametric:
      return Parametric{Tensor::parameter({0.5}, {1}), Tensor::parameter({0.5}, {1}),
                        Tensor::parameter({1.0}, {1})};
  }
  throw std::logic_error("make_model: bad enum");
}

/// Trainable parameters in a fixed, documented order.
inline std::vector<std::pair<std::string, Tensor>> model_parameters(const ConstitutiveModel& m) {
  using P = std::pair<std::string, Tensor>;
  return std::visit(
      [](const auto& v) -> std::vector<P> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ScalarK>) {
          return {P{"model/k", v.k}};
        } else if constexpr (std::is_same_v<T, DiagonalK>) {
          return {P{"model/k", v.k}};
        } else if constexpr (std::is_same_v<T, Cnn2L>) {
          return {P{"model/weight", v.weight}, P{"model/bias_pre", v.bias_pre},
                  P{"model/bias_post", v.bias_post}};
        } else if constexpr (std::is_same_v<T, Cnn3L>) {
          return {P{"model/w1", v.w1},         P{"model/b1_pre", v.b1_pre},
                  P{"model/b1_post", v.b1_post}, P{"model/w2", v.w2},
                  P{"model/b2_pre", v.b2_pre},   P{"model/b2_post", v.b2_post}};
        } else {
          return {P{"model/alpha", v.alpha}, P{"model/beta", v.beta}, P{"model/gamma", v.gamma}};
        }
      },
      m);
}

/// Element diffusivity k from the element-averaged field u_m [N x (n-1)].
/// Differentiable w.r.t. model parameters, and w.r.t. u_m for the three
/// field-dependent variants.
inline Tensor eval_k(const ConstitutiveModel& model, const Tensor& u_m) {
  if (u_m.rank() != 2) {
    throw std::invalid_argument("eval_k: expected [N x (n-1)] element field, got " +
                                detail::shape_str(u_m.shape()));
  }
  const std::size_t rows = u_m.extent(0), width = u_m.extent(1);
  return std::visit(
      [&](const auto& v) -> Tensor {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ScalarK>) {
          return broadcast_scalar(v.k, rows, width);
        } else if constexpr (std::is_same_v<T, DiagonalK>) {
          if (v.k.extent(0) != width) {
            throw std::invalid_argument("eval_k: diagonal model has " +
                                        std::to_string(v.k.extent(0)) + " entries but field has " +
                                        std::to_string(width) + " elements");
          }
          return tile_rows(v.k, rows);
        } else if constexpr (std::is_same_v<T, Cnn2L>) {
          Tensor signal = reshape(u_m, {rows, 1, width});
          Tensor out = conv1d(signal, v.weight, v.bias_pre, v.bias_post, Activation::identity);
          return reshape(out, {rows, width});
        } else if constexpr (std::is_same_v<T, Cnn3L>) {
          Tensor signal = reshape(u_m, {rows, 1, width});
          Tensor hidden = conv1d(signal, v.w1, v.b1_pre, v.b1_post, Activation::sigmoid);
          Tensor out = conv1d(hidden, v.w2, v.b2_pre, v.b2_post, Activation::identity);
          return reshape(out, {rows, width});
        } else {
          Tensor base = clamp_min(u_m, Parametric::kMinBase, &v.clamp_events);
          Tensor powed = exp(mul(ln(base), v.gamma));
          return add(mul(powed, v.beta), v.alpha);
        }
      },
      model);
}

/// Element flux by the discrete Fourier/Fick law:
/// q = -k(element_average(u)) .* forward_diff(u), shape [N x (n-1)].
inline Tensor flux(const ConstitutiveModel& model, const Tensor& u, const Grid1D& grid) {
  if (u.rank() != 2 || u.extent(1) != grid.nodes()) {
    throw std::invalid_argument("flux: field shape " + detail::shape_str(u.shape()) +
                                " does not match grid with " + std::to_string(grid.nodes()) +
                                " nodes");
  }
  Tensor k = eval_k(model, element_average(u));
  Tensor du = forward_diff(u, grid.element_size());
  return neg(mul(k, du));
}

/// Samples the learned constitutive relation. Field-dependent models are
/// evaluated pointwise at the given u values; position-dependent models
/// return their diffusivity over x at element midpoints instead.
inline std::vector<std::pair<double, double>> export_constitutive_curve(
    const ConstitutiveModel& model, const std::vector<double>& u_samples, const Grid1D& grid) {
  std::vector<std::pair<double, double>> curve;
  const ModelKind kind = model_kind(model);
  if (kind == ModelKind::scalar_k || kind == ModelKind::diagonal_k) {
    Tensor probe = Tensor::constant(std::vector<double>(grid.elements(), 0.0),
                                    {1, grid.elements()});
    Tensor k = eval_k(model, probe);
    curve.reserve(grid.elements());
    for (std::size_t e = 0; e < grid.elements(); ++e) {
      curve.emplace_back(grid.element_midpoint(e), k.data()[e]);
    }
    return curve;
  }
  if (u_samples.empty()) return curve;
  Tensor probe = Tensor::constant(u_samples, {1, u_samples.size()});
  Tensor k = eval_k(model, probe);
  curve.reserve(u_samples.size());
  for (std::size_t i = 0; i < u_samples.size(); ++i) {
    curve.emplace_back(u_samples[i], k.data()[i]);
  }
  return curve;
}

}  // namespace pgnniv
