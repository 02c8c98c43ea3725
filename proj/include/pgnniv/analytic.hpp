#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace pgnniv {

/// The five benchmark diffusion problems with closed-form solutions.
/// The first two have position-dependent diffusivity, the last three have
/// field-dependent diffusivity k = k(u).
enum class ProblemVariant {
  homogeneous,             // k(x) = 1
  heterogeneous_linear_k,  // k(x) = x + 1
  constant_diff,           // k(u) = 1
  linear_diff,             // k(u) = u
  exponential_diff,        // k(u) = exp(u)
};

inline const char* variant_name(ProblemVariant v) {
  switch (v) {
    case ProblemVariant::homogeneous: return "homogeneous";
    case ProblemVariant::heterogeneous_linear_k: return "heterogeneous";
    case ProblemVariant::constant_diff: return "constant";
    case ProblemVariant::linear_diff: return "linear";
    case ProblemVariant::exponential_diff: return "exponential";
  }
  throw std::logic_error("variant_name: bad enum");
}

inline ProblemVariant parse_variant(const std::string& name) {
  if (name == "homogeneous") return ProblemVariant::homogeneous;
  if (name == "heterogeneous") return ProblemVariant::heterogeneous_linear_k;
  if (name == "constant") return ProblemVariant::constant_diff;
  if (name == "linear") return ProblemVariant::linear_diff;
  if (name == "exponential") return ProblemVariant::exponential_diff;
  throw std::invalid_argument("unknown problem variant '" + name +
                              "' (expected homogeneous|heterogeneous|constant|linear|exponential)");
}

inline bool is_u_dependent(ProblemVariant v) {
  return v == ProblemVariant::constant_diff || v == ProblemVariant::linear_diff ||
         v == ProblemVariant::exponential_diff;
}

/// Lower bound of the boundary-condition sampling domain. Field-dependent
/// variants with fractional powers or logs need u > 0, so their BCs are
/// drawn from [0.05, 1] instead of [0, 1].
inline double bc_lower_bound(ProblemVariant v) {
  return (v == ProblemVariant::linear_diff || v == ProblemVariant::exponential_diff) ? 0.05 : 0.0;
}

struct FieldTriple {
  double u;
  double q;  // signed flux, q = -k du/dx (constant in x for all variants)
  double k;
};

/// Closed-form (u, q, k) at position x for boundary values u(0)=g1, u(1)=g2.
/// Throws std::domain_error when the solution formula is undefined for the
/// given boundary values (caller resamples).
inline FieldTriple analytic_solution(ProblemVariant v, double g1, double g2, double x) {
  switch (v) {
    case ProblemVariant::homogeneous:
    case ProblemVariant::constant_diff: {
      const double u = (g2 - g1) * x + g1;
      return {u, -(g2 - g1), 1.0};
    }
    case ProblemVariant::heterogeneous_linear_k: {
      const double c = (g2 - g1) / std::log(2.0);
      const double u = c * std::log(x + 1.0) + g1;
      return {u, -c, x + 1.0};
    }
    case ProblemVariant::linear_diff: {
      const double radicand = (g2 * g2 - g1 * g1) * x + g1 * g1;
      if (!(radicand > 0.0)) {
        throw std::domain_error("analytic_solution: linear-diffusivity radicand " +
                                std::to_string(radicand) + " <= 0 for g1=" + std::to_string(g1) +
                                ", g2=" + std::to_string(g2));
      }
      const double u = std::sqrt(radicand);
      return {u, -(g2 * g2 - g1 * g1) / 2.0, u};
    }
    case ProblemVariant::exponential_diff: {
      const double c = std::exp(g2) - std::exp(g1);
      const double arg = c * x + std::exp(g1);
      if (!(arg > 0.0)) {
        throw std::domain_error("analytic_solution: exponential-diffusivity log argument " +
                                std::to_string(arg) + " <= 0");
      }
      const double u = std::log(arg);
      return {u, -c, arg};  // k = exp(u(x)) = c x + exp(g1)
    }
  }
  throw std::logic_error("analytic_solution: bad enum");
}

/// The true constitutive law k(u) for field-dependent variants.
inline double true_k_of_u(ProblemVariant v, double u) {
  switch (v) {
    case ProblemVariant::constant_diff: return 1.0;
    case ProblemVariant::linear_diff: return u;
    case ProblemVariant::exponential_diff: return std::exp(u);
    default:
      throw std::invalid_argument("true_k_of_u: variant '" + std::string(variant_name(v)) +
                                  "' has position-dependent diffusivity");
  }
}

}  // namespace pgnniv
