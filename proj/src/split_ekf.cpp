#include "sacl/split_ekf.hpp"

#include "sacl/errors.hpp"
#include "sacl/model.hpp"

#include <atomic>
#include <iostream>
#include <string>

namespace sacl {

namespace {

// Pair count above which pi_update fans out over OpenMP threads.
constexpr std::size_t kParallelPairThreshold = 256;

std::atomic<bool> g_phi_warned{false};

void check_phi_conditioning(const SplitRobotState& s) {
  const double cond = condition_number(s.phi);
  if (!(cond <= kPhiMaxCondition)) {
    throw NumericalError("Phi of robot " + std::to_string(s.id.label()) +
                         " is ill-conditioned (condition number " + std::to_string(cond) + ")");
  }
  if (cond > kPhiWarnCondition && !g_phi_warned.exchange(true)) {
    std::clog << "warning: Phi of robot " << s.id.label() << " has condition number " << cond
              << "\n";
  }
}

Mat32 phi_inverse_times(const SplitRobotState& s, const Mat32& rhs) {
  return s.phi.partialPivLu().solve(rhs);
}

Innovation finish_innovation(Innovation inn) {
  require_innovation_pd(inn.cov);
  inn.sqrt_inv_cov = inverse_sqrt_spd(inn.cov);
  inn.whitened_residual = inn.sqrt_inv_cov * inn.residual;
  return inn;
}

void accumulate_pair(PiStore& out, const GammaSet& g, std::size_t f, const RobotSet& missed,
                     double sign) {
  const auto [i, j] = out.entries.pair_at(f);
  if (missed.contains(i) && missed.contains(j)) return;
  out.entries.blocks()[f] += sign * (g.gammas[i.index()] * g.gammas[j.index()].transpose());
}

double sign_of(PiUpdateSign s) { return s == PiUpdateSign::Subtract ? -1.0 : 1.0; }

void require_gamma_count(const PiStore& pi, const GammaSet& g) {
  if (g.gammas.size() != pi.entries.team_size()) {
    throw ContractError("pi_update: gamma count does not match team size");
  }
}

}  // namespace

SplitRobotState SplitRobotState::initial(RobotId id, const Pose& estimate, const Mat3& cov) {
  return {id, estimate, cov, Mat3::Identity()};
}

SplitRobotState split_propagate(const SplitRobotState& s, const ControlInput& u,
                                const MotionNoise& q, double dt) {
  const JacobianSet jac = motion_jacobians(s.estimate, u, dt);
  SplitRobotState out = s;
  out.estimate = propagate_pose(s.estimate, u, dt);
  out.cov = jac.f_jac * s.cov * jac.f_jac.transpose() + jac.g_jac * q.q * jac.g_jac.transpose();
  out.phi = jac.f_jac * s.phi;
  return out;
}

Innovation compute_innovation(const SplitRobotState& a, const SplitRobotState& b,
                              const Mat3& pi_ab, const Vec2& z, const MeasurementNoise& noise) {
  const RelativeJacobians jac = relative_measurement_jacobians(a.estimate, b.estimate);
  Innovation inn;
  inn.observer_jac = jac.observer;
  inn.landmark_jac = jac.landmark;
  inn.residual = z - relative_measurement_model(a.estimate, b.estimate);
  const Mat3 p_ab = a.phi * pi_ab * b.phi.transpose();
  const Mat2 cross = jac.observer * p_ab * jac.landmark.transpose();
  inn.cov = noise.r + jac.observer * a.cov * jac.observer.transpose() +
            jac.landmark * b.cov * jac.landmark.transpose() + cross + cross.transpose();
  return finish_innovation(inn);
}

Innovation compute_absolute_innovation(const SplitRobotState& a, const Vec2& z,
                                       const MeasurementNoise& noise) {
  Innovation inn;
  inn.observer_jac = absolute_measurement_jacobian();
  inn.residual = z - absolute_measurement_model(a.estimate);
  inn.cov = noise.r + inn.observer_jac * a.cov * inn.observer_jac.transpose();
  return finish_innovation(inn);
}

GammaSet compute_gammas(const PiStore& pi, const SplitRobotState& a, const SplitRobotState& b,
                        const Innovation& inn) {
  if (!inn.landmark_jac) throw ContractError("compute_gammas: innovation has no landmark term");
  if (a.id == b.id) throw ContractError("compute_gammas: observer and landmark coincide");
  check_phi_conditioning(a);
  check_phi_conditioning(b);

  const std::size_t n = pi.entries.team_size();
  const Mat32 phi_a_ha = a.phi.transpose() * inn.observer_jac.transpose();
  const Mat32 phi_b_hb = b.phi.transpose() * inn.landmark_jac->transpose();

  GammaSet g;
  g.sqrt_inv_cov = inn.sqrt_inv_cov;
  g.whitened_residual = inn.whitened_residual;
  g.gammas.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RobotId id = RobotId::from_index(i);
    Mat32 pre;
    if (id == a.id) {
      pre = pi.entries.get(a.id, b.id) * phi_b_hb +
            phi_inverse_times(a, a.cov * inn.observer_jac.transpose());
    } else if (id == b.id) {
      pre = phi_inverse_times(b, b.cov * inn.landmark_jac->transpose()) +
            pi.entries.get(b.id, a.id) * phi_a_ha;
    } else {
      pre = pi.entries.get(id, b.id) * phi_b_hb + pi.entries.get(id, a.id) * phi_a_ha;
    }
    g.gammas[i] = pre * inn.sqrt_inv_cov;
  }
  return g;
}

GammaSet compute_absolute_gammas(const PiStore& pi, const SplitRobotState& a,
                                 const Innovation& inn) {
  check_phi_conditioning(a);
  const std::size_t n = pi.entries.team_size();
  const Mat32 phi_a_ha = a.phi.transpose() * inn.observer_jac.transpose();

  GammaSet g;
  g.sqrt_inv_cov = inn.sqrt_inv_cov;
  g.whitened_residual = inn.whitened_residual;
  g.gammas.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RobotId id = RobotId::from_index(i);
    const Mat32 pre = id == a.id ? phi_inverse_times(a, a.cov * inn.observer_jac.transpose())
                                 : pi.entries.get(id, a.id) * phi_a_ha;
    g.gammas[i] = pre * inn.sqrt_inv_cov;
  }
  return g;
}

SplitRobotState split_update_robot(const SplitRobotState& s, const Mat32& gamma,
                                   const Vec2& whitened_residual) {
  return split_apply_correction(s, gamma * whitened_residual, gamma * gamma.transpose());
}

SplitRobotState split_apply_correction(const SplitRobotState& s, const Vec3& gamma_residual_sum,
                                       const Mat3& gamma_outer_sum) {
  SplitRobotState out = s;
  out.estimate = Pose::from_vector(s.estimate.vector() + s.phi * gamma_residual_sum);
  out.cov = symmetrized(s.cov - s.phi * gamma_outer_sum * s.phi.transpose());
  const double lowest = min_eigenvalue(out.cov);
  if (lowest < kCovarianceEigenFloor) {
    throw NumericalError("covariance of robot " + std::to_string(s.id.label()) +
                         " lost positive semi-definiteness (min eigenvalue " +
                         std::to_string(lowest) + ")");
  }
  return out;
}

PiStore pi_update(const PiStore& pi, const GammaSet& gammas, const RobotSet& missed,
                  PiUpdateSign sign) {
  require_gamma_count(pi, gammas);
  PiStore out = pi;
  const double sgn = sign_of(sign);
  const auto pairs = static_cast<std::ptrdiff_t>(out.entries.pair_count());
#pragma omp parallel for schedule(static) if (out.entries.pair_count() >= kParallelPairThreshold)
  for (std::ptrdiff_t f = 0; f < pairs; ++f) {
    accumulate_pair(out, gammas, static_cast<std::size_t>(f), missed, sgn);
  }
  return out;
}

PiStore pi_update_serial(const PiStore& pi, const GammaSet& gammas, const RobotSet& missed,
                         PiUpdateSign sign) {
  require_gamma_count(pi, gammas);
  PiStore out = pi;
  const double sgn = sign_of(sign);
  for (std::size_t f = 0; f < out.entries.pair_count(); ++f) {
    accumulate_pair(out, gammas, f, missed, sgn);
  }
  return out;
}

Mat3 reconstruct_cross_covariance(const PiStore& pi, const SplitRobotState& si,
                                  const SplitRobotState& sj) {
  return si.phi * pi.entries.get(si.id, sj.id) * sj.phi.transpose();
}

}  // namespace sacl
