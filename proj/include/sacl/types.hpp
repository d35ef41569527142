#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <variant>

namespace sacl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat32 = Eigen::Matrix<double, 3, 2>;

using Timestep = std::int64_t;

inline constexpr int kPoseDim = 3;
inline constexpr int kMeasurementDim = 2;

/// Team label in {1, ..., N}. index() is the zero-based storage slot.
class RobotId {
 public:
  constexpr RobotId() = default;
  constexpr explicit RobotId(int label) : label_(label) {}

  static constexpr RobotId from_index(std::size_t index) {
    return RobotId(static_cast<int>(index) + 1);
  }

  constexpr int label() const { return label_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(label_ - 1); }
  constexpr bool valid_for(std::size_t team_size) const {
    return label_ >= 1 && static_cast<std::size_t>(label_) <= team_size;
  }

  friend constexpr auto operator<=>(RobotId, RobotId) = default;

 private:
  int label_ = 0;
};

using RobotSet = std::set<RobotId>;

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec3 vector() const { return {x, y, theta}; }
  Vec2 position() const { return {x, y}; }

  /// Builds a pose from a state vector, wrapping the heading into (-pi, pi].
  static Pose from_vector(const Vec3& v);

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct ControlInput {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s
};

/// Velocity-space noise covariance Q, units (m/s)^2 and (rad/s)^2.
struct MotionNoise {
  Mat2 q = Mat2::Zero();
};

struct MeasurementNoise {
  Mat2 r = Mat2::Identity();
};

/// Landmark robot position expressed in the observer body frame.
struct RelativeMeasurement {
  RobotId observer;
  RobotId landmark;
  Vec2 z = Vec2::Zero();
  Timestep time = 0;
};

/// Global (x, y) position readout of the observer.
struct AbsoluteMeasurement {
  RobotId observer;
  Vec2 z = Vec2::Zero();
  Timestep time = 0;
};

using Measurement = std::variant<RelativeMeasurement, AbsoluteMeasurement>;

RobotId observer_of(const Measurement& m);
std::optional<RobotId> landmark_of(const Measurement& m);

struct JacobianSet {
  Mat3 f_jac = Mat3::Identity();
  Mat32 g_jac = Mat32::Zero();
};

}  // namespace sacl
