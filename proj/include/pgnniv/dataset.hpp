#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgnniv/analytic.hpp"
#include "pgnniv/grid.hpp"

namespace pgnniv {

struct ProblemSpec {
  ProblemVariant variant = ProblemVariant::homogeneous;
  std::size_t grid_n = 10;
  std::size_t n_samples = 10000;
  double noise_p = 0.0;
  std::uint64_t seed = 0;
};

struct Sample {
  double g1 = 0.0, g2 = 0.0;  // essential boundary values
  double q1 = 0.0, q2 = 0.0;  // signed boundary flux values (equal: zero source)
  std::vector<double> u;        // nodal field, possibly noisy (training target)
  std::vector<double> u_clean;  // noise-free nodal field (evaluation only)
};

struct Dataset {
  ProblemSpec spec;
  std::vector<Sample> samples;
  std::size_t train_count = 0;

  std::span<const Sample> train() const { return {samples.data(), train_count}; }
  std::span<const Sample> test() const {
    return {samples.data() + train_count, samples.size() - train_count};
  }
};

/// White noise scaled by the per-profile population standard deviation:
/// u_i -> u_i + N(0, p * std(u)). A constant profile has zero deviation and
/// is returned untouched.
inline std::vector<double> add_noise(std::span<const double> u_clean, double p,
                                     std::mt19937_64& rng) {
  if (u_clean.size() < 2) throw std::invalid_argument("add_noise: need at least 2 nodes");
  if (p < 0.0) throw std::invalid_argument("add_noise: noise fraction must be >= 0");
  std::vector<double> out(u_clean.begin(), u_clean.end());
  if (p == 0.0) return out;
  const double n = static_cast<double>(u_clean.size());
  double mean = 0.0;
  for (double v : u_clean) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : u_clean) var += (v - mean) * (v - mean);
  var /= n;  // population convention
  const double s = p * std::sqrt(var);
  if (s == 0.0) return out;
  std::normal_distribution<double> noise(0.0, s);
  for (double& v : out) v += noise(rng);
  return out;
}

namespace detail {

// Stable per-sample RNG stream derived from (seed, index), so generation
// order (or parallel generation) cannot change the data.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Draws N boundary-condition pairs uniformly, evaluates the closed-form
/// solution at the grid nodes, applies optional noise, and splits 80/20
/// into train/test (deterministic in the seed).
inline Dataset generate(const ProblemSpec& spec) {
  const Grid1D grid(spec.grid_n);
  Dataset ds;
  ds.spec = spec;
  ds.samples.reserve(spec.n_samples);
  const double lo = bc_lower_bound(spec.variant);

  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    auto rng = detail::sample_rng(spec.seed, i);
    std::uniform_real_distribution<double> bc(lo, 1.0);
    Sample s;
    for (;;) {
      s.g1 = bc(rng);
      s.g2 = bc(rng);
      try {
        s.u_clean.clear();
        s.u_clean.reserve(grid.nodes());
        for (std::size_t j = 0; j < grid.nodes(); ++j) {
          s.u_clean.push_back(analytic_solution(spec.variant, s.g1, s.g2, grid.node(j)).u);
        }
        const double q = analytic_solution(spec.variant, s.g1, s.g2, 0.0).q;
        s.q1 = q;
        s.q2 = q;  // zero source: the flux is constant across the domain
        break;
      } catch (const std::domain_error&) {
        continue;  // invalid draw, resample
      }
    }
    // Pin the boundary nodes exactly.
    s.u_clean.front() = s.g1;
    s.u_clean.back() = s.g2;
    s.u = add_noise(s.u_clean, spec.noise_p, rng);
    ds.samples.push_back(std::move(s));
  }
  ds.train_count = (spec.n_samples * 8) / 10;
  return ds;
}

// ---------------------------------------------------------------------------
// CSV + metadata files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_samples_csv(const std::string& path, std::span<const Sample> samples,
                              std::size_t n, bool abs_flux) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "g1,g2,q1,q2";
  for (std::size_t j = 1; j <= n; ++j) out << ",u" << j;
  for (std::size_t j = 1; j <= n; ++j) out << ",uc" << j;
  out << '\n';
  for (const Sample& s : samples) {
    const double q1 = abs_flux ? std::abs(s.q1) : s.q1;
    const double q2 = abs_flux ? std::abs(s.q2) : s.q2;
    out << format_full(s.g1) << ',' << format_full(s.g2) << ',' << format_full(q1) << ','
        << format_full(q2);
    for (double v : s.u) out << ',' << format_full(v);
    for (double v : s.u_clean) out << ',' << format_full(v);
    out << '\n';
  }
}

inline std::vector<Sample> read_samples_csv(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path);
  const std::string expected_prefix = "g1,g2,q1,q2,u1";
  if (line.rfind(expected_prefix, 0) != 0) {
    throw std::runtime_error("unexpected header in " + path + ": " + line);
  }
  std::vector<Sample> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Sample s;
    const char* p = line.c_str();
    auto next = [&]() {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw std::runtime_error("malformed row in " + path + ": " + line);
      p = (*end == ',') ? end + 1 : end;
      return v;
    };
    s.g1 = next();
    s.g2 = next();
    s.q1 = next();
    s.q2 = next();
    s.u.resize(n);
    s.u_clean.resize(n);
    for (std::size_t j = 0; j < n; ++j) s.u[j] = next();
    for (std::size_t j = 0; j < n; ++j) s.u_clean[j] = next();
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace detail

}  // namespace pgnniv
