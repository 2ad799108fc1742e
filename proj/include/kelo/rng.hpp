/**
 * \file rng.hpp
 * \brief Seeded RNG with portable bounded draws.
 *
 * std::uniform_*_distribution output is implementation-defined, which would
 * break bit-for-bit reproducibility across standard libraries. The draws here
 * are specified directly on top of mt19937_64.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace kelo {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

  Eigen::Vector3d uniform_vector(double lo, double hi) {
    const double x = uniform(lo, hi);
    const double y = uniform(lo, hi);
    const double z = uniform(lo, hi);
    return {x, y, z};
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform direction on the unit sphere.
  Eigen::Vector3d unit_vector() {
    Eigen::Vector3d v(normal(), normal(), normal());
    double n = v.norm();
    while (n < 1e-12) {
      v = Eigen::Vector3d(normal(), normal(), normal());
      n = v.norm();
    }
    return v / n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kelo
