#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gkin/types.hpp"

namespace gkin {

// Independent stream per (seed, block); the layout of blocks fixes the results.
class BlockRng {
 public:
  BlockRng(std::uint64_t seed, std::uint64_t block) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
    eng_.seed(seq);
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  Vec3 unit_vector() {
    const double t = 2 * uniform() - 1;
    const double phi = 2 * kPi * uniform();
    const double s = std::sqrt(std::max(0.0, 1 - t * t));
    return Vec3(t, s * std::cos(phi), s * std::sin(phi));
  }

  // Uniform on the hemisphere { w : w . axis < 0 }.
  Vec3 incoming_direction(const Vec3& axis) {
    Vec3 e1, e2;
    orthonormal_frame(axis, e1, e2);
    const double t = uniform();
    const double phi = 2 * kPi * uniform();
    const double s = std::sqrt(std::max(0.0, 1 - t * t));
    return -t * axis + s * (std::cos(phi) * e1 + std::sin(phi) * e2);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gkin
