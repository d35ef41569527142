#include "sacl/network.hpp"

#include "sacl/errors.hpp"
#include "sacl/random.hpp"

#include <cmath>
#include <string>

namespace sacl {

bool DropoutZone::contains(const Vec2& p) const {
  return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
}

void DropoutSchedule::validate(std::size_t team_size) const {
  for (const auto& w : windows) {
    if (!w.robot.valid_for(team_size)) {
      throw ScenarioError("dropout.windows: robot " + std::to_string(w.robot.label()) +
                          " is not a team member");
    }
    if (!(w.t_start <= w.t_end)) throw ScenarioError("dropout.windows: t_start > t_end");
  }
  if (!bernoulli_p.empty() && bernoulli_p.size() != team_size) {
    throw ScenarioError("dropout.bernoulli_p: expected one probability per robot");
  }
  for (const double p : bernoulli_p) {
    if (!(p >= 0.0 && p < 1.0)) throw ScenarioError("dropout.bernoulli_p: must lie in [0, 1)");
  }
  for (const auto& z : zones) {
    if (!(z.x_min <= z.x_max && z.y_min <= z.y_max)) {
      throw ScenarioError("dropout.zones: empty rectangle");
    }
  }
}

bool step_in_window(double t_start, double t_end, Timestep k, double dt) {
  const auto first = static_cast<Timestep>(std::llround(t_start / dt));
  const auto last = static_cast<Timestep>(std::llround(t_end / dt));
  return k > first && k <= last;
}

DeliveryReport channel_epoch(const DropoutSchedule& sched, std::span<const Pose> poses,
                             Timestep t, double dt, std::uint64_t seed) {
  const CounterRng rng(seed);
  DeliveryReport report;
  report.time = t;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const RobotId id = RobotId::from_index(i);
    bool lost = false;
    for (const auto& w : sched.windows) {
      if (w.robot == id && step_in_window(w.t_start, w.t_end, t, dt)) lost = true;
    }
    for (const auto& z : sched.zones) {
      if (z.contains(poses[i].position())) lost = true;
    }
    if (!sched.bernoulli_p.empty() && sched.bernoulli_p[i] > 0.0) {
      const double u = rng.uniform({kChannelStream, static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(id.label())});
      if (u < sched.bernoulli_p[i]) lost = true;
    }
    (lost ? report.missed : report.delivered).insert(id);
  }
  return report;
}

GateResult gate_measurement(const DeliveryReport& report, const Measurement& m) {
  if (!report.delivered.contains(observer_of(m))) return GateResult::Discarded;
  if (const auto l = landmark_of(m); l && !report.delivered.contains(*l)) {
    return GateResult::Discarded;
  }
  return GateResult::Accepted;
}

}  // namespace sacl
