#include "sacl/errors.hpp"
#include "sacl/joint_ekf.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace sacl {
namespace {

using testing::DenseBelief;
using testing::Rand;

MeasurementNoise noise(double s = 0.05) { return {Mat2::Identity() * s}; }

RelativeMeasurement reading(const JointBelief& b, RobotId a, RobotId l, Rand& rng) {
  Vec2 z = relative_measurement_model(b.estimates[a.index()], b.estimates[l.index()]);
  z += 0.3 * Vec2(rng.normal(), rng.normal());
  return {a, l, z, b.time};
}

TEST(OraclePropagate, ZeroCrossStaysZero) {
  Rand rng(1);
  JointBelief b = JointBelief::initial({rng.pose(), rng.pose(), rng.pose()}, {rng.spd3(), rng.spd3(), rng.spd3()});
  const std::vector<ControlInput> u = {rng.input(), rng.input(), rng.input()};
  const std::vector<MotionNoise> q(3, MotionNoise{Mat2::Identity() * 0.01});
  const JointBelief out = oracle_propagate(b, u, q, 0.1);
  for (const Mat3& m : out.cross_cov.blocks()) EXPECT_EQ(m, Mat3::Zero());
  EXPECT_EQ(out.time, b.time + 1);
}

TEST(OraclePropagate, NoProcessNoise) {
  Rand rng(2);
  const Pose p = rng.pose();
  const Mat3 cov = rng.spd3();
  const ControlInput u = rng.input();
  const JointBelief out = oracle_propagate(JointBelief::initial({p}, {cov}), std::vector{u},
                                           std::vector{MotionNoise{}}, 0.2);
  const Mat3 f = motion_jacobians(p, u, 0.2).f_jac;
  EXPECT_EQ(out.own_cov[0], f * cov * f.transpose());
  EXPECT_EQ(out.estimates[0], propagate_pose(p, u, 0.2));
}

TEST(OraclePropagate, MatchesDenseJointMatrices) {
  Rand rng(3);
  for (std::size_t n : {2u, 3u, 5u}) {
    const JointBelief b = testing::random_belief(rng, n);
    std::vector<ControlInput> u;
    std::vector<MotionNoise> q;
    const auto dim = static_cast<Eigen::Index>(3 * n);
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim, 2 * n);
    Eigen::MatrixXd qj = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      u.push_back(rng.input());
      q.push_back({rng.spd(2, 0.01)});
      const JacobianSet j = motion_jacobians(b.estimates[i], u[i], 0.1);
      f.block<3, 3>(3 * i, 3 * i) = j.f_jac;
      g.block<3, 2>(3 * i, 2 * i) = j.g_jac;
      qj.block<2, 2>(2 * i, 2 * i) = q[i].q;
    }
    const Eigen::MatrixXd expected = f * joint_covariance(b) * f.transpose() + g * qj * g.transpose();
    const JointBelief out = oracle_propagate(b, u, q, 0.1);
    EXPECT_LE(testing::max_abs(joint_covariance(out) - expected), 1e-12) << "n=" << n;
  }
}

TEST(OraclePropagate, DimensionMismatchIsContractError) {
  Rand rng(4);
  const JointBelief b = testing::random_belief(rng, 3);
  EXPECT_THROW(oracle_propagate(b, std::vector<ControlInput>(2), std::vector<MotionNoise>(3), 0.1), ContractError);
}

TEST(OracleUpdate, ZeroCorrelationInnovation) {
  Rand rng(5);
  const Mat3 pa = Mat3::Identity() * 0.4, pb = Mat3::Identity() * 0.7;
  const JointBelief b = JointBelief::initial({rng.pose(), rng.pose()}, {pa, pb});
  const RelativeMeasurement m = reading(b, RobotId(1), RobotId(2), rng);
  const JointUpdate up = oracle_update(b, m, noise());
  const RelativeJacobians j = relative_measurement_jacobians(b.estimates[0], b.estimates[1]);
  const Mat2 s = noise().r + j.observer * pa * j.observer.transpose() + j.landmark * pb * j.landmark.transpose();
  EXPECT_LE(testing::max_abs(up.innovation.innovation_cov - s), 1e-15);
}

TEST(OracleUpdate, MatchesDenseEkf) {
  Rand rng(6);
  for (std::size_t n : {2u, 3u, 4u, 5u}) {
    for (int trial = 0; trial < 20; ++trial) {
      const JointBelief b = testing::random_belief(rng, n);
      const auto a = RobotId(1 + static_cast<int>(rng.uniform(0, n - 0.01)));
      auto l = RobotId(1 + static_cast<int>(rng.uniform(0, n - 1.01)));
      if (l >= a) l = RobotId(l.label() + 1);
      const RelativeMeasurement m = reading(b, a, l, rng);
      const JointUpdate up = oracle_update(b, m, noise());
      const Vec2 r = m.z - relative_measurement_model(b.estimates[a.index()], b.estimates[l.index()]);
      const DenseBelief d = testing::dense_update(testing::dense(b), testing::relative_row(b, a, l), r, noise().r);
      EXPECT_LE(testing::belief_distance(up.belief, d), 1e-12) << "n=" << n;
    }
  }
}

TEST(OracleUpdate, SymmetryAndTraceDecrease) {
  Rand rng(7);
  JointBelief b = testing::random_belief(rng, 4);
  for (int k = 0; k < 50; ++k) {
    const RobotId a(1 + k % 4), l(1 + (k + 1 + k / 4) % 4);
    if (a == l) continue;
    const JointUpdate up = oracle_update(b, reading(b, a, l, rng), noise());
    const Eigen::MatrixXd p = joint_covariance(up.belief);
    EXPECT_LE(testing::max_abs(p - p.transpose()), 1e-12);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(up.belief.own_cov[i].trace(), b.own_cov[i].trace() + 1e-12);
    b = up.belief;
  }
}

TEST(OracleUpdate, RejectsIndefiniteInnovation) {
  Rand rng(8);
  const JointBelief b = JointBelief::initial({rng.pose(), rng.pose()}, {Mat3::Zero(), Mat3::Zero()});
  EXPECT_THROW(oracle_update(b, reading(b, RobotId(1), RobotId(2), rng), MeasurementNoise{-Mat2::Identity()}),
               NumericalError);
}

TEST(OracleUpdate, RejectsBadPairs) {
  Rand rng(9);
  const JointBelief b = testing::random_belief(rng, 3);
  EXPECT_THROW(oracle_update(b, {RobotId(1), RobotId(1), Vec2::Zero(), 0}, noise()), ContractError);
  EXPECT_THROW(oracle_update(b, {RobotId(1), RobotId(4), Vec2::Zero(), 0}, noise()), ContractError);
}

TEST(PartialUpdate, EmptyMissedSetIsFullUpdate) {
  Rand rng(10);
  const JointBelief b = testing::random_belief(rng, 4);
  const RelativeMeasurement m = reading(b, RobotId(2), RobotId(3), rng);
  const JointUpdate full = oracle_update(b, m, noise());
  const JointUpdate part = oracle_partial_update(b, m, noise(), {});
  EXPECT_EQ(full.belief.estimates, part.belief.estimates);
  EXPECT_EQ(joint_covariance(full.belief), joint_covariance(part.belief));
}

TEST(PartialUpdate, OnlyReachableRobotsChange) {
  Rand rng(11);
  const JointBelief b = testing::random_belief(rng, 5);
  const RobotSet missed{RobotId(1), RobotId(3), RobotId(5)};
  const RelativeMeasurement m = reading(b, RobotId(2), RobotId(4), rng);
  const JointUpdate up = oracle_partial_update(b, m, noise(), missed);
  for (RobotId id : missed) {
    EXPECT_EQ(up.belief.estimates[id.index()], b.estimates[id.index()]);
    EXPECT_EQ(up.belief.own_cov[id.index()], b.own_cov[id.index()]);
  }
  EXPECT_NE(up.belief.estimates[1], b.estimates[1]);
  EXPECT_NE(up.belief.estimates[3], b.estimates[3]);
  EXPECT_NE(up.belief.cross_cov.get(RobotId(2), RobotId(4)), b.cross_cov.get(RobotId(2), RobotId(4)));
  EXPECT_EQ(up.belief.cross_cov.get(RobotId(1), RobotId(3)), b.cross_cov.get(RobotId(1), RobotId(3)));
  EXPECT_EQ(up.belief.cross_cov.get(RobotId(3), RobotId(5)), b.cross_cov.get(RobotId(3), RobotId(5)));
  // Missed-to-reachable terms still move with the pseudo gain.
  EXPECT_NE(up.belief.cross_cov.get(RobotId(1), RobotId(2)), b.cross_cov.get(RobotId(1), RobotId(2)));
  EXPECT_EQ(up.innovation.gains.size(), 5u);
  EXPECT_NE(up.innovation.gains[0], Mat32::Zero());
}

TEST(PartialUpdate, MissedEndpointIsContractError) {
  Rand rng(12);
  const JointBelief b = testing::random_belief(rng, 3);
  const RelativeMeasurement m = reading(b, RobotId(1), RobotId(2), rng);
  EXPECT_THROW(oracle_partial_update(b, m, noise(), {RobotId(1)}), ContractError);
  EXPECT_THROW(oracle_partial_update(b, m, noise(), {RobotId(2)}), ContractError);
}

// The gains for the reachable robots minimize the trace of their posterior
// covariance among all linear gains acting on the same residual.
TEST(PartialUpdate, GainsMinimizeReachableTrace) {
  Rand rng(13);
  const JointBelief b = testing::random_belief(rng, 4);
  const RobotSet missed{RobotId(4)};
  const RelativeMeasurement m = reading(b, RobotId(1), RobotId(2), rng);
  const JointUpdate up = oracle_partial_update(b, m, noise(), missed);

  const Eigen::MatrixXd p = joint_covariance(b);
  const Eigen::MatrixXd h = testing::relative_row(b, RobotId(1), RobotId(2));
  const Eigen::MatrixXd s = h * p * h.transpose() + noise().r;
  const Eigen::MatrixXd p_uu = p.topLeftCorner(9, 9);
  const Eigen::MatrixXd c = p.topRows(9) * h.transpose();  // Cov(e_U, H e)
  const auto trace_with = [&](const Eigen::MatrixXd& l) {
    return (p_uu - l * c.transpose() - c * l.transpose() + l * s * l.transpose()).trace();
  };
  Eigen::MatrixXd k(9, 2);
  for (int i = 0; i < 3; ++i) k.middleRows<3>(3 * i) = up.innovation.gains[i];
  double reached = 0.0;
  for (int i = 0; i < 3; ++i) reached += up.belief.own_cov[i].trace();
  EXPECT_NEAR(trace_with(k), reached, 1e-10);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd d(9, 2);
    for (int r = 0; r < 9; ++r) {
      for (int col = 0; col < 2; ++col) d(r, col) = rng.normal() * std::pow(10.0, rng.uniform(-4, 0));
    }
    EXPECT_GE(trace_with(k + d), reached - 1e-12);
  }
}

TEST(AbsoluteUpdate, NearPerfectObservation) {
  Rand rng(14);
  const JointBelief b = testing::random_belief(rng, 3);
  const AbsoluteMeasurement m{RobotId(2), Vec2(1.25, -3.5), 0};
  const JointUpdate up = oracle_absolute_update(b, m, MeasurementNoise{Mat2::Identity() * 1e-12});
  EXPECT_LE((up.belief.estimates[1].position() - m.z).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(AbsoluteUpdate, ZeroCrossOnlyObserverChanges) {
  Rand rng(15);
  const JointBelief b = JointBelief::initial({rng.pose(), rng.pose(), rng.pose()}, {rng.spd3(), rng.spd3(), rng.spd3()});
  const JointUpdate up = oracle_absolute_update(b, {RobotId(3), Vec2(0.5, 0.5), 0}, noise());
  EXPECT_EQ(up.belief.estimates[0], b.estimates[0]);
  EXPECT_EQ(up.belief.estimates[1], b.estimates[1]);
  EXPECT_EQ(up.belief.own_cov[0], b.own_cov[0]);
  EXPECT_NE(up.belief.estimates[2], b.estimates[2]);
  for (const Mat3& m : up.belief.cross_cov.blocks()) EXPECT_EQ(m, Mat3::Zero());
}

TEST(AbsoluteUpdate, MatchesDenseEkf) {
  Rand rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const JointBelief b = testing::random_belief(rng, 3);
    const AbsoluteMeasurement m{RobotId(1 + trial % 3), Vec2(rng.normal(), rng.normal()), 0};
    const JointUpdate up = oracle_absolute_update(b, m, noise());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 9);
    h.block<2, 3>(0, 3 * m.observer.index()) = absolute_measurement_jacobian();
    const Vec2 r = m.z - b.estimates[m.observer.index()].position();
    EXPECT_LE(testing::belief_distance(up.belief, testing::dense_update(testing::dense(b), h, r, noise().r)), 1e-12);
  }
}

}  // namespace
}  // namespace sacl
