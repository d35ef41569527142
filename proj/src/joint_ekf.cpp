#include "sacl/joint_ekf.hpp"

#include "sacl/errors.hpp"
#include "sacl/model.hpp"

#include <string>

namespace sacl {

namespace {

void require_member(const JointBelief& b, RobotId id, const char* role) {
  if (!id.valid_for(b.team_size())) {
    throw ContractError(std::string(role) + " " + std::to_string(id.label()) +
                        " is not a team member");
  }
}

// Linearized measurement row: only the observer block and, for relative
// readings, the landmark block are nonzero.
struct MeasurementRow {
  RobotId observer;
  std::optional<RobotId> landmark;
  Mat23 h_observer;
  Mat23 h_landmark = Mat23::Zero();
  Vec2 residual;
};

JointUpdate apply_row(const JointBelief& b, const MeasurementRow& row,
                      const MeasurementNoise& noise, const RobotSet& missed) {
  const std::size_t n = b.team_size();
  const RobotId a = row.observer;

  Mat2 s = noise.r + row.h_observer * b.own_cov[a.index()] * row.h_observer.transpose();
  if (row.landmark) {
    const RobotId l = *row.landmark;
    const Mat3 p_al = b.block(a, l);
    s += row.h_landmark * b.own_cov[l.index()] * row.h_landmark.transpose() +
         row.h_observer * p_al * row.h_landmark.transpose() +
         row.h_landmark * p_al.transpose() * row.h_observer.transpose();
  }
  require_innovation_pd(s);
  const Mat2 s_inv = s.inverse();

  JointUpdate out{b, {}};
  out.innovation.residual = row.residual;
  out.innovation.innovation_cov = s;
  out.innovation.gains.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const RobotId id = RobotId::from_index(i);
    Eigen::Matrix<double, 3, 2> pht = b.block(id, a) * row.h_observer.transpose();
    if (row.landmark) pht += b.block(id, *row.landmark) * row.h_landmark.transpose();
    out.innovation.gains[i] = pht * s_inv;
  }

  const auto& k = out.innovation.gains;
  for (std::size_t i = 0; i < n; ++i) {
    const RobotId id = RobotId::from_index(i);
    if (missed.contains(id)) continue;
    out.belief.estimates[i] =
        Pose::from_vector(b.estimates[i].vector() + k[i] * row.residual);
    out.belief.own_cov[i] = symmetrized(b.own_cov[i] - k[i] * s * k[i].transpose());
  }
  for (std::size_t f = 0; f < b.cross_cov.pair_count(); ++f) {
    const auto [i, j] = b.cross_cov.pair_at(f);
    if (missed.contains(i) && missed.contains(j)) continue;
    out.belief.cross_cov.blocks()[f] -= k[i.index()] * s * k[j.index()].transpose();
  }
  return out;
}

void require_reachable(RobotId id, const RobotSet& missed, const char* role) {
  if (missed.contains(id)) {
    throw ContractError(std::string(role) + " " + std::to_string(id.label()) +
                        " is in the missed set; the reading must be discarded upstream");
  }
}

}  // namespace

JointBelief JointBelief::initial(std::vector<Pose> estimates, std::vector<Mat3> covariances) {
  if (estimates.size() != covariances.size()) {
    throw ContractError("JointBelief::initial: estimate/covariance count mismatch");
  }
  JointBelief b;
  b.cross_cov = PairBlockStore(estimates.size());
  b.estimates = std::move(estimates);
  b.own_cov = std::move(covariances);
  return b;
}

Mat3 JointBelief::block(RobotId i, RobotId j) const {
  if (i == j) return own_cov[i.index()];
  return cross_cov.get(i, j);
}

Eigen::MatrixXd joint_covariance(const JointBelief& b) {
  const auto n = static_cast<Eigen::Index>(b.team_size());
  Eigen::MatrixXd p(3 * n, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      p.block<3, 3>(3 * i, 3 * j) = b.block(RobotId::from_index(static_cast<std::size_t>(i)),
                                            RobotId::from_index(static_cast<std::size_t>(j)));
    }
  }
  return p;
}

JointBelief oracle_propagate(const JointBelief& b, std::span<const ControlInput> inputs,
                             std::span<const MotionNoise> noises, double dt) {
  const std::size_t n = b.team_size();
  if (inputs.size() != n || noises.size() != n || b.own_cov.size() != n ||
      b.cross_cov.team_size() != n) {
    throw ContractError("oracle_propagate: dimension mismatch");
  }
  std::vector<Mat3> f(n);
  JointBelief out = b;
  for (std::size_t i = 0; i < n; ++i) {
    const JacobianSet jac = motion_jacobians(b.estimates[i], inputs[i], dt);
    f[i] = jac.f_jac;
    out.estimates[i] = propagate_pose(b.estimates[i], inputs[i], dt);
    out.own_cov[i] = jac.f_jac * b.own_cov[i] * jac.f_jac.transpose() +
                     jac.g_jac * noises[i].q * jac.g_jac.transpose();
  }
  for (std::size_t k = 0; k < b.cross_cov.pair_count(); ++k) {
    const auto [i, j] = b.cross_cov.pair_at(k);
    out.cross_cov.blocks()[k] = f[i.index()] * b.cross_cov.blocks()[k] * f[j.index()].transpose();
  }
  out.time = b.time + 1;
  return out;
}

JointUpdate oracle_update(const JointBelief& b, const RelativeMeasurement& m,
                          const MeasurementNoise& noise) {
  return oracle_partial_update(b, m, noise, RobotSet{});
}

JointUpdate oracle_partial_update(const JointBelief& b, const RelativeMeasurement& m,
                                  const MeasurementNoise& noise, const RobotSet& missed) {
  require_member(b, m.observer, "observer");
  require_member(b, m.landmark, "landmark");
  if (m.observer == m.landmark) throw ContractError("observer and landmark coincide");
  require_reachable(m.observer, missed, "observer");
  require_reachable(m.landmark, missed, "landmark");

  const Pose& pa = b.estimates[m.observer.index()];
  const Pose& pb = b.estimates[m.landmark.index()];
  const RelativeJacobians jac = relative_measurement_jacobians(pa, pb);
  MeasurementRow row{m.observer, m.landmark, jac.observer, jac.landmark,
                     m.z - relative_measurement_model(pa, pb)};
  return apply_row(b, row, noise, missed);
}

JointUpdate oracle_absolute_update(const JointBelief& b, const AbsoluteMeasurement& m,
                                   const MeasurementNoise& noise) {
  return oracle_partial_absolute_update(b, m, noise, RobotSet{});
}

JointUpdate oracle_partial_absolute_update(const JointBelief& b, const AbsoluteMeasurement& m,
                                           const MeasurementNoise& noise,
                                           const RobotSet& missed) {
  require_member(b, m.observer, "observer");
  require_reachable(m.observer, missed, "observer");
  const Pose& pa = b.estimates[m.observer.index()];
  MeasurementRow row{m.observer, std::nullopt, absolute_measurement_jacobian(), Mat23::Zero(),
                     m.z - absolute_measurement_model(pa)};
  return apply_row(b, row, noise, missed);
}

JointUpdate oracle_partial_update(const JointBelief& b, const Measurement& m,
                                  const MeasurementNoise& noise, const RobotSet& missed) {
  if (const auto* rel = std::get_if<RelativeMeasurement>(&m)) {
    return oracle_partial_update(b, *rel, noise, missed);
  }
  return oracle_partial_absolute_update(b, std::get<AbsoluteMeasurement>(m), noise, missed);
}

}  // namespace sacl
