#pragma once

#include "sacl/types.hpp"

namespace sacl {

/// Maps an angle into (-pi, pi]. Angles already in range are returned untouched.
double wrap_angle(double a);

/// Euler-discretized unicycle step.
Pose propagate_pose(const Pose& p, const ControlInput& u, double dt);

/// F = df/dx and G = df/d(eta) at (p, u). det(F) == 1 for every input.
JacobianSet motion_jacobians(const Pose& p, const ControlInput& u, double dt);

/// Position of `landmark` in the body frame of `observer`: Rot(theta_a)^T (p_b - p_a).
Vec2 relative_measurement_model(const Pose& observer, const Pose& landmark);

struct RelativeJacobians {
  Mat23 observer;  // dh/dx_a
  Mat23 landmark;  // dh/dx_b, third column always zero
};

RelativeJacobians relative_measurement_jacobians(const Pose& observer, const Pose& landmark);

Vec2 absolute_measurement_model(const Pose& observer);
Mat23 absolute_measurement_jacobian();

/// Q = diag((lin_frac*|v|)^2, (ang_frac*|omega|)^2), each diagonal entry floored at `floor`.
MotionNoise velocity_proportional_noise(const ControlInput& commanded, double lin_frac,
                                        double ang_frac, double floor);

}  // namespace sacl
