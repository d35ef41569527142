#include "sacl/errors.hpp"
#include "sacl/network.hpp"
#include "sacl/scenario.hpp"

#include <gtest/gtest.h>

#include <vector>

namespace sacl {
namespace {

std::vector<Pose> origin_poses(std::size_t n) { return std::vector<Pose>(n); }

TEST(Window, BoundariesOnStepGrid) {
  // (135, 140] at dt = 0.1: steps 1351..1400.
  EXPECT_FALSE(step_in_window(135.0, 140.0, 1350, 0.1));
  EXPECT_TRUE(step_in_window(135.0, 140.0, 1351, 0.1));
  EXPECT_TRUE(step_in_window(135.0, 140.0, 1400, 0.1));
  EXPECT_FALSE(step_in_window(135.0, 140.0, 1401, 0.1));
  // 0.3 / 0.1 is not exact in floating point.
  EXPECT_TRUE(step_in_window(0.0, 0.3, 3, 0.1));
  EXPECT_FALSE(step_in_window(0.3, 0.3, 3, 0.1));
}

TEST(Channel, EmptyScheduleDeliversEveryone) {
  const DropoutSchedule s;
  const auto poses = origin_poses(5);
  for (Timestep t = 0; t < 100; ++t) {
    const DeliveryReport r = channel_epoch(s, poses, t, 0.1, 3);
    EXPECT_TRUE(r.missed.empty());
    EXPECT_EQ(r.delivered.size(), 5u);
    EXPECT_EQ(r.time, t);
  }
}

TEST(Channel, TableWindowsMissRobotFourExactly) {
  const Scenario sc = build_table1_scenario();
  const auto poses = origin_poses(4);
  std::vector<Timestep> missed_steps;
  for (Timestep k = 0; k <= sc.steps(); ++k) {
    const DeliveryReport r = channel_epoch(sc.dropout, poses, k, sc.dt_s, sc.seed);
    ASSERT_EQ(r.missed.size() + r.delivered.size(), 4u);
    if (!r.missed.empty()) {
      ASSERT_EQ(r.missed, RobotSet{RobotId(4)});
      missed_steps.push_back(k);
    }
  }
  ASSERT_EQ(missed_steps.size(), 100u);
  EXPECT_EQ(missed_steps.front(), 1351);
  EXPECT_EQ(missed_steps[49], 1400);
  EXPECT_EQ(missed_steps[50], 1801);
  EXPECT_EQ(missed_steps.back(), 1850);
}

TEST(Channel, ZonesUsePose) {
  DropoutSchedule s;
  s.zones = {{0.0, 0.0, 1.0, 1.0}};
  const std::vector<Pose> poses = {{0.5, 0.5, 0.0}, {1.5, 0.5, 0.0}, {1.0, 1.0, 2.0}};
  const DeliveryReport r = channel_epoch(s, poses, 0, 0.1, 1);
  EXPECT_EQ(r.missed, (RobotSet{RobotId(1), RobotId(3)}));
  EXPECT_EQ(r.delivered, RobotSet{RobotId(2)});
}

TEST(Channel, BernoulliRateAndDeterminism) {
  DropoutSchedule s;
  s.bernoulli_p = {0.0, 0.3, 0.05};
  const auto poses = origin_poses(3);
  std::vector<int> lost(3, 0);
  const int epochs = 20000;
  for (Timestep t = 0; t < epochs; ++t) {
    const DeliveryReport a = channel_epoch(s, poses, t, 0.1, 99);
    const DeliveryReport b = channel_epoch(s, poses, t, 0.1, 99);
    ASSERT_EQ(a.missed, b.missed);
    for (RobotId id : a.missed) ++lost[id.index()];
  }
  EXPECT_EQ(lost[0], 0);
  EXPECT_NEAR(lost[1] / double(epochs), 0.3, 0.015);
  EXPECT_NEAR(lost[2] / double(epochs), 0.05, 0.006);

  int differ = 0;
  for (Timestep t = 0; t < 200; ++t) {
    differ += channel_epoch(s, poses, t, 0.1, 99).missed != channel_epoch(s, poses, t, 0.1, 100).missed;
  }
  EXPECT_GT(differ, 0);
}

TEST(Gate, NeedsBothEndpoints) {
  DeliveryReport r;
  r.delivered = {RobotId(1), RobotId(2)};
  r.missed = {RobotId(3)};
  EXPECT_EQ(gate_measurement(r, RelativeMeasurement{RobotId(1), RobotId(2), {}, 0}), GateResult::Accepted);
  EXPECT_EQ(gate_measurement(r, RelativeMeasurement{RobotId(1), RobotId(3), {}, 0}), GateResult::Discarded);
  EXPECT_EQ(gate_measurement(r, RelativeMeasurement{RobotId(3), RobotId(2), {}, 0}), GateResult::Discarded);
  EXPECT_EQ(gate_measurement(r, AbsoluteMeasurement{RobotId(2), {}, 0}), GateResult::Accepted);
  EXPECT_EQ(gate_measurement(r, AbsoluteMeasurement{RobotId(3), {}, 0}), GateResult::Discarded);
}

TEST(Schedule, Validation) {
  DropoutSchedule s;
  s.windows = {{RobotId(5), 0.0, 1.0}};
  EXPECT_THROW(s.validate(4), ScenarioError);
  s.windows = {{RobotId(1), 2.0, 1.0}};
  EXPECT_THROW(s.validate(4), ScenarioError);
  s.windows.clear();
  s.bernoulli_p = {0.1, 0.1};
  EXPECT_THROW(s.validate(4), ScenarioError);
  s.bernoulli_p = {0.1, 0.1, 0.1, 1.0};
  EXPECT_THROW(s.validate(4), ScenarioError);
  s.bernoulli_p = {0.1, 0.1, 0.1, -0.1};
  EXPECT_THROW(s.validate(4), ScenarioError);
  s.bernoulli_p = {0.0, 0.1, 0.5, 0.99};
  EXPECT_NO_THROW(s.validate(4));
  s.zones = {{1.0, 0.0, 0.0, 1.0}};
  EXPECT_THROW(s.validate(4), ScenarioError);
}

}  // namespace
}  // namespace sacl
