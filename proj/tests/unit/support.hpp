#pragma once

#include "sacl/joint_ekf.hpp"
#include "sacl/model.hpp"
#include "sacl/split_ekf.hpp"

#include <Eigen/Dense>

#include <numbers>
#include <random>
#include <vector>

namespace sacl::testing {

class Rand {
 public:
  explicit Rand(unsigned seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>()(gen_); }

  Pose pose(double span = 10.0) {
    return {uniform(-span, span), uniform(-span, span), uniform(-std::numbers::pi, std::numbers::pi)};
  }

  Eigen::MatrixXd spd(int n, double floor = 0.05) {
    Eigen::MatrixXd a(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) a(r, c) = 0.3 * normal();
    }
    return a * a.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
  }

  Mat3 spd3(double floor = 0.05) { return spd(3, floor); }

  ControlInput input() { return {uniform(-1.5, 1.5), uniform(-0.8, 0.8)}; }

  std::mt19937& engine() { return gen_; }

 private:
  std::mt19937 gen_;
};

inline Vec3 pose_diff(const Pose& a, const Pose& b) {
  return {a.x - b.x, a.y - b.y, wrap_angle(a.theta - b.theta)};
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

/// Belief whose joint covariance is a random dense SPD matrix.
inline JointBelief random_belief(Rand& rng, std::size_t n) {
  const Eigen::MatrixXd p = rng.spd(static_cast<int>(3 * n));
  std::vector<Pose> x;
  std::vector<Mat3> own;
  for (std::size_t i = 0; i < n; ++i) {
    x.push_back(rng.pose());
    own.push_back(p.block<3, 3>(3 * i, 3 * i));
  }
  JointBelief b = JointBelief::initial(x, own);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      b.cross_cov.set(RobotId::from_index(i), RobotId::from_index(j), p.block<3, 3>(3 * i, 3 * j));
    }
  }
  return b;
}

inline Eigen::VectorXd stacked_state(const JointBelief& b) {
  Eigen::VectorXd x(3 * b.team_size());
  for (std::size_t i = 0; i < b.team_size(); ++i) x.segment<3>(3 * i) = b.estimates[i].vector();
  return x;
}

struct DenseBelief {
  Eigen::VectorXd x;
  Eigen::MatrixXd p;
};

inline DenseBelief dense(const JointBelief& b) { return {stacked_state(b), joint_covariance(b)}; }

/// Textbook EKF update on the stacked state.
inline DenseBelief dense_update(const DenseBelief& b, const Eigen::MatrixXd& h, const Vec2& r, const Mat2& noise) {
  const Eigen::MatrixXd s = h * b.p * h.transpose() + noise;
  const Eigen::MatrixXd k = b.p * h.transpose() * s.inverse();
  DenseBelief out;
  out.x = b.x + k * r;
  out.p = b.p - k * s * k.transpose();
  return out;
}

inline Eigen::MatrixXd relative_row(const JointBelief& b, RobotId a, RobotId l) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 3 * b.team_size());
  const auto j = relative_measurement_jacobians(b.estimates[a.index()], b.estimates[l.index()]);
  h.block<2, 3>(0, 3 * a.index()) = j.observer;
  h.block<2, 3>(0, 3 * l.index()) = j.landmark;
  return h;
}

/// Max deviation between a block belief and a dense one; headings compared modulo 2 pi.
inline double belief_distance(const JointBelief& b, const DenseBelief& d) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.team_size(); ++i) {
    Vec3 e = b.estimates[i].vector() - d.x.segment<3>(3 * i);
    e(2) = wrap_angle(e(2));
    worst = std::max(worst, e.cwiseAbs().maxCoeff());
  }
  return std::max(worst, max_abs(joint_covariance(b) - d.p));
}

/// Split representation of a joint belief: random invertible Phi per robot and
/// Pi chosen so that Phi_i Pi_ij Phi_j^T reproduces the cross-covariances.
struct SplitTeam {
  std::vector<SplitRobotState> states;
  PiStore pi;
};

inline SplitTeam split_of(const JointBelief& b, Rand& rng) {
  SplitTeam t;
  const std::size_t n = b.team_size();
  t.pi = PiStore(n);
  for (std::size_t i = 0; i < n; ++i) {
    Mat3 phi = Mat3::Identity();
    Pose p = rng.pose();
    for (int k = 0; k < 5; ++k) {
      const ControlInput u = rng.input();
      phi = motion_jacobians(p, u, 0.5).f_jac * phi;
      p = propagate_pose(p, u, 0.5);
    }
    t.states.push_back({RobotId::from_index(i), b.estimates[i], b.own_cov[i], phi});
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const RobotId a = RobotId::from_index(i), c = RobotId::from_index(j);
      const Mat3 pij = b.cross_cov.get(a, c);
      t.pi.entries.set(a, c, t.states[i].phi.inverse() * pij * t.states[j].phi.inverse().transpose());
    }
  }
  return t;
}

}  // namespace sacl::testing
