#pragma once

#include "sacl/linalg.hpp"
#include "sacl/types.hpp"

#include <span>
#include <vector>

namespace sacl {

/// Full team belief of the centralized EKF: every pose, every own covariance
/// and every cross-covariance P_{i,j} (stored for i < j).
struct JointBelief {
  std::vector<Pose> estimates;
  std::vector<Mat3> own_cov;
  PairBlockStore cross_cov;
  Timestep time = 0;

  /// Initial belief with all cross-covariances zero.
  static JointBelief initial(std::vector<Pose> estimates, std::vector<Mat3> covariances);

  std::size_t team_size() const { return estimates.size(); }

  /// P_{i,j}; the own covariance when i == j.
  Mat3 block(RobotId i, RobotId j) const;
};

/// Dense 3N x 3N team covariance assembled from the blocks.
Eigen::MatrixXd joint_covariance(const JointBelief& b);

struct InnovationData {
  Vec2 residual = Vec2::Zero();
  Mat2 innovation_cov = Mat2::Zero();
  std::vector<Mat32> gains;  // one per robot, pseudo gains included
};

struct JointUpdate {
  JointBelief belief;
  InnovationData innovation;
};

JointBelief oracle_propagate(const JointBelief& b, std::span<const ControlInput> inputs,
                             std::span<const MotionNoise> noises, double dt);

JointUpdate oracle_update(const JointBelief& b, const RelativeMeasurement& m,
                          const MeasurementNoise& noise);

/// Update that leaves the states of `missed` robots (and their mutual
/// cross-covariances) untouched. Neither endpoint of `m` may be missed.
JointUpdate oracle_partial_update(const JointBelief& b, const RelativeMeasurement& m,
                                  const MeasurementNoise& noise, const RobotSet& missed);

JointUpdate oracle_absolute_update(const JointBelief& b, const AbsoluteMeasurement& m,
                                   const MeasurementNoise& noise);

JointUpdate oracle_partial_absolute_update(const JointBelief& b, const AbsoluteMeasurement& m,
                                           const MeasurementNoise& noise,
                                           const RobotSet& missed);

/// Dispatches on the measurement kind.
JointUpdate oracle_partial_update(const JointBelief& b, const Measurement& m,
                                  const MeasurementNoise& noise, const RobotSet& missed);

}  // namespace sacl
