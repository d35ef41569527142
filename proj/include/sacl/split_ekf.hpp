#pragma once

#include "sacl/linalg.hpp"
#include "sacl/types.hpp"

#include <optional>
#include <vector>

namespace sacl {

/// Per-robot Split-EKF state. phi is the running product of motion Jacobians
/// since k = 0; the robot never holds any cross term.
struct SplitRobotState {
  RobotId id;
  Pose estimate;
  Mat3 cov = Mat3::Identity();
  Mat3 phi = Mat3::Identity();

  static SplitRobotState initial(RobotId id, const Pose& estimate, const Mat3& cov);
};

/// Server-held cross-correlation factors. P_{i,j} = Phi_i * Pi_{i,j} * Phi_j^T.
struct PiStore {
  PiStore() = default;
  explicit PiStore(std::size_t team_size) : entries(team_size) {}

  PairBlockStore entries;
  Timestep time = 0;
};

enum class PiUpdateSign {
  Subtract,  // Pi -= Gamma_i Gamma_j^T, consistent with P+ = P- - K S K^T
  Add,       // wrong sign, kept only as a negative control for the verifier
};

/// Innovation quantities of a single measurement. landmark_jac is absent for
/// absolute measurements.
struct Innovation {
  Vec2 residual = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
  Mat2 sqrt_inv_cov = Mat2::Zero();
  Vec2 whitened_residual = Vec2::Zero();
  Mat23 observer_jac = Mat23::Zero();
  std::optional<Mat23> landmark_jac;
};

struct GammaSet {
  std::vector<Mat32> gammas;  // indexed by RobotId::index()
  Mat2 sqrt_inv_cov = Mat2::Zero();
  Vec2 whitened_residual = Vec2::Zero();
};

inline constexpr double kPhiWarnCondition = 1e8;
inline constexpr double kPhiMaxCondition = 1e12;
inline constexpr double kCovarianceEigenFloor = -1e-9;

SplitRobotState split_propagate(const SplitRobotState& s, const ControlInput& u,
                                const MotionNoise& q, double dt);

/// S from local blocks plus the Phi/Pi reconstruction of P_{a,b}, and r_bar = S^{-1/2} r.
Innovation compute_innovation(const SplitRobotState& observer, const SplitRobotState& landmark,
                              const Mat3& pi_ab, const Vec2& z, const MeasurementNoise& noise);

Innovation compute_absolute_innovation(const SplitRobotState& observer, const Vec2& z,
                                       const MeasurementNoise& noise);

/// Gamma_i for every robot in the team. Only the observer's and landmark's
/// snapshots are needed; every other robot's factor comes from Pi alone.
GammaSet compute_gammas(const PiStore& pi, const SplitRobotState& observer,
                        const SplitRobotState& landmark, const Innovation& innovation);

GammaSet compute_absolute_gammas(const PiStore& pi, const SplitRobotState& observer,
                                 const Innovation& innovation);

/// x += Phi Gamma r_bar, P -= Phi Gamma Gamma^T Phi^T.
SplitRobotState split_update_robot(const SplitRobotState& s, const Mat32& gamma,
                                   const Vec2& whitened_residual);

/// Same update from accumulated sums over several sequential measurements.
SplitRobotState split_apply_correction(const SplitRobotState& s, const Vec3& gamma_residual_sum,
                                       const Mat3& gamma_outer_sum);

/// Pi_{i,j} -/+= Gamma_i Gamma_j^T for every pair not entirely inside `missed`.
/// Pairs are processed in parallel for large teams.
PiStore pi_update(const PiStore& pi, const GammaSet& gammas, const RobotSet& missed,
                  PiUpdateSign sign = PiUpdateSign::Subtract);

/// Single-threaded reference for pi_update.
PiStore pi_update_serial(const PiStore& pi, const GammaSet& gammas, const RobotSet& missed,
                         PiUpdateSign sign = PiUpdateSign::Subtract);

Mat3 reconstruct_cross_covariance(const PiStore& pi, const SplitRobotState& si,
                                  const SplitRobotState& sj);

}  // namespace sacl
