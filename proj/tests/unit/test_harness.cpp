#include "sacl/errors.hpp"
#include "sacl/harness.hpp"
#include "sacl/random.hpp"
#include "support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>

namespace sacl {
namespace {

Scenario short_table(double duration = 60.0) {
  Scenario sc = build_table1_scenario();
  sc.duration_s = duration;
  std::erase_if(sc.measurements, [&](const MeasurementWindow& w) { return w.t_end > duration; });
  std::erase_if(sc.dropout.windows, [&](const DisconnectWindow& w) { return w.t_end > duration; });
  return sc;
}

Scenario low_noise_table() {
  Scenario sc = build_table1_scenario();
  for (RobotSpec& r : sc.robots) {
    r.linear_noise_frac *= 0.1;
    r.angular_noise_frac *= 0.1;
  }
  return sc;
}

TEST(Estimators, NamesRoundTrip) {
  for (Estimator e : kAllEstimators) EXPECT_EQ(parse_estimator(estimator_name(e)), e);
  EXPECT_EQ(estimator_name(Estimator::SaSplitDropout), "sa_split_dropout");
  EXPECT_FALSE(parse_estimator("kalman").has_value());
  const EstimatorSet s{Estimator::PartialOracle, Estimator::DeadReckoning};
  EXPECT_EQ(s.members(), (std::vector{Estimator::DeadReckoning, Estimator::PartialOracle}));
}

TEST(Simulation, NoiseFreeDeadReckoningTracksTruth) {
  Scenario sc = short_table(30.0);
  for (RobotSpec& r : sc.robots) r.linear_noise_frac = r.angular_noise_frac = 0.0;
  sc.perturb_initial_estimate = false;
  const RunRecord run = run_once(sc, {Estimator::DeadReckoning}, 3);
  ASSERT_FALSE(run.flagged);
  for (Timestep k = 0; k <= run.steps; ++k) {
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(run.estimate_at(Estimator::DeadReckoning, k, RobotId::from_index(i)),
                run.truth_at(k, RobotId::from_index(i)));
    }
  }
}

TEST(Simulation, CommonRandomNumbers) {
  const Scenario sc = short_table();
  const RunRecord all = run_once(sc, EstimatorSet::all(), 21);
  const RunRecord dr = run_once(sc, {Estimator::DeadReckoning}, 21);
  const RunRecord sa = run_once(sc, {Estimator::SaSplit, Estimator::JointEkf}, 21);
  EXPECT_EQ(all.truth, dr.truth);
  EXPECT_EQ(all.estimates.at(Estimator::DeadReckoning).poses, dr.estimates.at(Estimator::DeadReckoning).poses);
  EXPECT_EQ(all.estimates.at(Estimator::SaSplit).poses, sa.estimates.at(Estimator::SaSplit).poses);
  EXPECT_EQ(all.estimates.at(Estimator::JointEkf).poses, sa.estimates.at(Estimator::JointEkf).poses);
  // Truth follows the commanded path; the seed only moves the noise.
  EXPECT_EQ(run_once(sc, {Estimator::DeadReckoning}, 22).truth, dr.truth);
  EXPECT_NE(run_once(sc, {Estimator::DeadReckoning}, 22).estimates.at(Estimator::DeadReckoning).poses,
            dr.estimates.at(Estimator::DeadReckoning).poses);
}

TEST(Simulation, QuietStepKeepsPrior) {
  TeamSimulation sim(short_table(), EstimatorSet::all(), 4);
  int quiet = 0;
  while (!sim.finished()) {
    sim.advance();
    if (!sim.last_epoch().scheduled.empty()) continue;
    ++quiet;
    for (Estimator e : kAllEstimators) {
      ASSERT_EQ(sim.estimates(e), sim.prior_estimates(e));
      ASSERT_EQ(sim.covariances(e), sim.prior_covariances(e));
    }
  }
  EXPECT_GT(quiet, 400);
}

TEST(Simulation, ExtraWindowNeverRaisesTrace) {
  Scenario base = short_table();
  base.measurements.clear();
  Scenario more = base;
  more.measurements.push_back({20.0, 25.0, RobotId(1), RobotId(3)});
  const RunRecord a = run_once(base, {Estimator::JointEkf}, 8);
  const RunRecord b = run_once(more, {Estimator::JointEkf}, 8);
  const auto& ca = a.estimates.at(Estimator::JointEkf).covariances;
  const auto& cb = b.estimates.at(Estimator::JointEkf).covariances;
  // Linearization points differ between the two runs, hence the slack.
  for (std::size_t k = 0; k <= static_cast<std::size_t>(a.steps); ++k) {
    double ta = 0.0, tb = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      ta += ca[k * 4 + i].trace();
      tb += cb[k * 4 + i].trace();
    }
    ASSERT_LE(tb, ta * (1.0 + 1e-6)) << "step " << k;
  }
}

TEST(Simulation, AccessorsRejectWrongEstimator) {
  TeamSimulation sim(short_table(), {Estimator::DeadReckoning}, 1);
  EXPECT_THROW(sim.joint_belief(Estimator::JointEkf), ContractError);
  EXPECT_THROW(sim.robot_nodes(Estimator::SaSplit), ContractError);
  EXPECT_THROW(sim.estimates(Estimator::JointEkf), ContractError);
}

TEST(MonteCarlo, SingleRunRmsIsErrorNorm) {
  const Scenario sc = short_table();
  const MetricReport rep = run_monte_carlo(sc, 1, {Estimator::SaSplit}, 5, 1);
  const RunRecord run = run_once(sc, {Estimator::SaSplit}, derive_seed(5, 0));
  for (Timestep k : {Timestep(0), Timestep(300), sc.steps()}) {
    for (std::size_t i = 0; i < 4; ++i) {
      const RobotId r = RobotId::from_index(i);
      const Vec2 d = run.estimate_at(Estimator::SaSplit, k, r).position() - run.truth_at(k, r).position();
      EXPECT_DOUBLE_EQ(rep.rms_at(Estimator::SaSplit, r, k), d.norm());
    }
  }
  EXPECT_EQ(rep.runs_used, 1u);
}

TEST(MonteCarlo, RunSeedsArePrefixStable) {
  const Scenario sc = short_table();
  const EstimatorSet est{Estimator::DeadReckoning, Estimator::SaSplitDropout};
  const MetricReport four = run_monte_carlo(sc, 4, est, 9, 1);
  std::vector<RunRecord> runs;
  for (std::size_t m = 0; m < 4; ++m) runs.push_back(run_once(sc, est, derive_seed(9, m)));
  const MetricReport manual = reduce_runs(runs, est);
  EXPECT_EQ(format_metrics_csv(four), format_metrics_csv(manual));
  const MetricReport eight = run_monte_carlo(sc, 8, est, 9, 1);
  EXPECT_NE(format_metrics_csv(four), format_metrics_csv(eight));
}

TEST(MonteCarlo, ParallelMatchesSerialBitwise) {
  const Scenario sc = short_table();
  const EstimatorSet est = EstimatorSet::all();
  const MetricReport serial = run_monte_carlo_serial(sc, 6, est, 13);
  for (int jobs : {1, 2, 3}) {
    const MetricReport par = run_monte_carlo(sc, 6, est, 13, jobs);
    for (Estimator e : kAllEstimators) {
      EXPECT_EQ(par.rms.at(e), serial.rms.at(e)) << "jobs " << jobs;
      EXPECT_EQ(par.anees.at(e), serial.anees.at(e)) << "jobs " << jobs;
    }
  }
}

TEST(MonteCarlo, FlaggedRunsAreExcluded) {
  Scenario sc = short_table(20.0);
  SimulationOptions opt;
  opt.pi_sign = PiUpdateSign::Add;
  opt.route_through_wire = false;
  // Corrupt Pi sign with a long measurement run breaks the SA filter down.
  sc.measurements = {{2.0, 19.0, RobotId(1), RobotId(2)}, {2.0, 19.0, RobotId(2), RobotId(3)},
                     {2.0, 19.0, RobotId(3), RobotId(4)}, {2.0, 19.0, RobotId(4), RobotId(1)}};
  const RunRecord run = run_once(sc, {Estimator::SaSplit}, 2, opt);
  ASSERT_TRUE(run.flagged);
  EXPECT_FALSE(run.flag_reason.empty());
  const MetricReport rep = reduce_runs({run, run_once(sc, {Estimator::SaSplit}, 2)}, {Estimator::SaSplit});
  EXPECT_EQ(rep.runs_flagged, 1u);
  EXPECT_EQ(rep.runs_used, 1u);
}

TEST(MonteCarlo, JointEkfNeesIsConsistentAtLowNoise) {
  const Scenario sc = low_noise_table();
  const std::size_t runs = 50;
  const MetricReport rep = run_monte_carlo(sc, runs, {Estimator::JointEkf}, 7, 1);
  const boost::math::chi_squared chi(3.0 * runs);
  const double lo = boost::math::quantile(chi, 0.025) / runs / 1.5;
  const double hi = boost::math::quantile(chi, 0.975) / runs * 1.5;
  const auto& a = rep.anees.at(Estimator::JointEkf);
  double mean = 0.0;
  std::size_t inside = 0;
  for (double v : a) {
    mean += v;
    inside += v >= lo && v <= hi;
  }
  mean /= static_cast<double>(a.size());
  RecordProperty("mean_anees", std::to_string(mean));
  EXPECT_GE(mean, lo);
  EXPECT_LE(mean, hi);
  EXPECT_GE(static_cast<double>(inside) / a.size(), 0.9) << "mean " << mean << " band [" << lo << ", " << hi << "]";
}

TEST(Csv, FormatAndRoundTrip) {
  MetricReport r;
  r.team_size = 2;
  r.dt = 0.1;
  r.steps = 2;
  r.estimators = {Estimator::DeadReckoning, Estimator::SaSplit};
  r.rms[Estimator::DeadReckoning] = {0, 0, 0.1, 0.2, 1.0 / 3.0, 12345.678901234};
  r.anees[Estimator::DeadReckoning] = {0, 0, 3, 3, 2.5, 1e-20};
  r.rms[Estimator::SaSplit] = {0, 0, 0.05, 0.1, 0.2, 0.3};
  r.anees[Estimator::SaSplit] = {0, 0, 1, 2, 3, 4};
  const std::string text = format_metrics_csv(r);
  EXPECT_EQ(text,
            "time_s,robot,dr_rms_m,dr_anees,sa_split_rms_m,sa_split_anees\n"
            "0,1,0,0,0,0\n"
            "0,2,0,0,0,0\n"
            "0.1,1,0.1,3,0.05,1\n"
            "0.1,2,0.2,3,0.1,2\n"
            "0.2,1,0.333333333333,2.5,0.2,3\n"
            "0.2,2,12345.6789012,1e-20,0.3,4\n");
  const MetricReport back = parse_metrics_csv(text);
  EXPECT_EQ(back.team_size, 2u);
  EXPECT_EQ(back.steps, 2);
  EXPECT_EQ(back.estimators, r.estimators);
  EXPECT_EQ(format_metrics_csv(back), text);
}

TEST(Csv, EmptyTeamIsHeaderOnly) {
  MetricReport r;
  r.estimators = {Estimator::JointEkf};
  EXPECT_EQ(format_metrics_csv(r), "time_s,robot,joint_ekf_rms_m,joint_ekf_anees\n");
  EXPECT_EQ(parse_metrics_csv(format_metrics_csv(r)).team_size, 0u);
}

TEST(Csv, RejectsMalformed) {
  EXPECT_THROW(parse_metrics_csv(""), ContractError);
  EXPECT_THROW(parse_metrics_csv("t,robot\n"), ContractError);
  EXPECT_THROW(parse_metrics_csv("time_s,robot,foo_rms_m,foo_anees\n"), ContractError);
  EXPECT_THROW(parse_metrics_csv("time_s,robot,dr_rms_m,dr_anees\n0,1,0\n"), ContractError);
}

TEST(Csv, ReportsAreByteStable) {
  const Scenario sc = short_table();
  EXPECT_EQ(format_metrics_csv(run_monte_carlo(sc, 3, EstimatorSet::all(), 1, 1)),
            format_metrics_csv(run_monte_carlo(sc, 3, EstimatorSet::all(), 1, 2)));
}

TEST(Verify, ShortScenarios) {
  const Scenario sc = short_table();
  const EquivalenceReport perfect = verify_equivalence(sc, 3);
  EXPECT_TRUE(perfect.passed(1e-8)) << perfect.max_discrepancy();
  EXPECT_GT(perfect.update_epochs, 0u);
  EXPECT_EQ(perfect.steps, static_cast<std::size_t>(sc.steps()));

  EquivalenceOptions lossy;
  lossy.with_dropouts = true;
  lossy.bernoulli_override = 0.3;
  const EquivalenceReport drop = verify_equivalence(sc, 3, lossy);
  EXPECT_TRUE(drop.passed(1e-8)) << drop.max_discrepancy();
  EXPECT_GT(drop.missed_robot_epochs, 0u);

  EquivalenceOptions bad;
  bad.pi_sign = PiUpdateSign::Add;
  EXPECT_FALSE(verify_equivalence(sc, 3, bad).passed(1e-8));

  lossy.bernoulli_override = 1.0;
  EXPECT_THROW(verify_equivalence(sc, 3, lossy), ContractError);
}

}  // namespace
}  // namespace sacl
