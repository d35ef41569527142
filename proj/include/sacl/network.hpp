#pragma once

#include "sacl/types.hpp"

#include <span>
#include <vector>

namespace sacl {

/// Robot disconnected for t in (t_start, t_end], seconds.
struct DisconnectWindow {
  RobotId robot;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// Axis-aligned rectangle in which a robot has no link to the server.
struct DropoutZone {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(const Vec2& p) const;
};

struct DropoutSchedule {
  std::vector<DisconnectWindow> windows;
  std::vector<double> bernoulli_p;  // per robot, empty means no random loss
  std::vector<DropoutZone> zones;

  /// Throws ScenarioError on malformed entries.
  void validate(std::size_t team_size) const;
};

struct DeliveryReport {
  Timestep time = 0;
  RobotSet delivered;
  RobotSet missed;
};

/// True when step k (time k*dt) lies in (t_start, t_end]. Boundaries are
/// compared on the step grid, not in floating-point seconds.
bool step_in_window(double t_start, double t_end, Timestep k, double dt);

/// Random stream id reserved for channel loss draws.
inline constexpr std::uint64_t kChannelStream = 0xC4A77E1ULL;

/// Delivery outcome of one epoch. A robot is missed if it is inside an
/// active window, inside a zone, or loses its Bernoulli draw keyed by
/// (seed, t, robot). Losses cover both directions of the exchange.
DeliveryReport channel_epoch(const DropoutSchedule& sched, std::span<const Pose> poses,
                             Timestep t, double dt, std::uint64_t seed);

enum class GateResult { Accepted, Discarded };

GateResult gate_measurement(const DeliveryReport& report, const Measurement& m);

}  // namespace sacl
