#include "sacl/model.hpp"

#include "sacl/errors.hpp"

#include <cmath>
#include <numbers>

namespace sacl {

namespace {

void require_finite(const Pose& p, const char* what) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.theta)) {
    throw ModelError(std::string("non-finite pose in ") + what);
  }
}

void require_finite(const ControlInput& u, const char* what) {
  if (!std::isfinite(u.v) || !std::isfinite(u.omega)) {
    throw ModelError(std::string("non-finite control input in ") + what);
  }
}

void require_step(double dt, const char* what) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ModelError(std::string("time step must be positive and finite in ") + what);
  }
}

}  // namespace

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (!std::isfinite(a)) throw ModelError("wrap_angle: non-finite angle");
  if (a > -pi && a <= pi) return a;
  double r = std::fmod(a + pi, 2.0 * pi);
  if (r < 0.0) r += 2.0 * pi;
  r -= pi;
  return r <= -pi ? pi : r;
}

Pose Pose::from_vector(const Vec3& v) { return {v.x(), v.y(), wrap_angle(v.z())}; }

Pose propagate_pose(const Pose& p, const ControlInput& u, double dt) {
  require_finite(p, "propagate_pose");
  require_finite(u, "propagate_pose");
  require_step(dt, "propagate_pose");
  return {p.x + u.v * dt * std::cos(p.theta), p.y + u.v * dt * std::sin(p.theta),
          wrap_angle(p.theta + u.omega * dt)};
}

JacobianSet motion_jacobians(const Pose& p, const ControlInput& u, double dt) {
  require_finite(p, "motion_jacobians");
  require_finite(u, "motion_jacobians");
  require_step(dt, "motion_jacobians");
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  JacobianSet j;
  j.f_jac << 1.0, 0.0, -u.v * dt * s,
             0.0, 1.0, u.v * dt * c,
             0.0, 0.0, 1.0;
  j.g_jac << dt * c, 0.0,
             dt * s, 0.0,
             0.0, dt;
  return j;
}

Vec2 relative_measurement_model(const Pose& a, const Pose& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

RelativeJacobians relative_measurement_jacobians(const Pose& a, const Pose& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  RelativeJacobians j;
  j.observer << -c, -s, -s * dx + c * dy,
                 s, -c, -c * dx - s * dy;
  j.landmark << c, s, 0.0,
               -s, c, 0.0;
  return j;
}

Vec2 absolute_measurement_model(const Pose& a) { return a.position(); }

Mat23 absolute_measurement_jacobian() {
  Mat23 h;
  h << 1.0, 0.0, 0.0,
       0.0, 1.0, 0.0;
  return h;
}

MotionNoise velocity_proportional_noise(const ControlInput& cmd, double lin_frac,
                                        double ang_frac, double floor) {
  const double sv = lin_frac * std::abs(cmd.v);
  const double sw = ang_frac * std::abs(cmd.omega);
  MotionNoise n;
  n.q = Mat2::Zero();
  n.q(0, 0) = std::max(sv * sv, floor);
  n.q(1, 1) = std::max(sw * sw, floor);
  return n;
}

}  // namespace sacl
