#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>
#include <string>

namespace gkin {

using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

// Backward ray footpoint lies on the grazing set, so 1/N is unbounded.
class GrazingSingularity : public std::domain_error {
 public:
  explicit GrazingSingularity(const std::string& what) : std::domain_error(what) {}
};

class GeometryError : public std::invalid_argument {
 public:
  explicit GeometryError(const std::string& what) : std::invalid_argument(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class SolverError : public std::runtime_error {
 public:
  enum class Kind { non_contractive, grid_resolution };
  SolverError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Orthonormal pair completing the unit vector axis to a right-handed frame.
inline void orthonormal_frame(const Vec3& axis, Vec3& e1, Vec3& e2) {
  const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  e1 = axis.cross(helper).normalized();
  e2 = axis.cross(e1);
}

}  // namespace gkin
