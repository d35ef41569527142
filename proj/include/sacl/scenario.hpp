#pragma once

#include "sacl/network.hpp"
#include "sacl/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sacl {

/// Outward square spiral: a straight edge followed by a 90 degree arc turn,
/// repeated. Edge lengths grow by `edge_growth_m` every second edge and every
/// edge (including its turn) takes the same time, so all robots reach their
/// corners together.
struct SquareHelixPath {
  double first_edge_m = 2.0;
  double edge_growth_m = 0.5;
  double edge_duration_s = 10.0;
  double turn_duration_s = 2.0;
  int turn_direction = 1;  // +1 counter-clockwise, -1 clockwise

  /// Commanded input applied over [k*dt, (k+1)*dt).
  ControlInput control_at(Timestep k, double dt) const;
};

struct RobotSpec {
  Pose start;
  Mat3 initial_cov = Mat3::Identity();
  double linear_noise_frac = 0.0;
  double angular_noise_frac = 0.0;
  SquareHelixPath path;
};

/// Readings taken for every step in (t_start, t_end]. No landmark means an
/// absolute position reading.
struct MeasurementWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  RobotId observer;
  std::optional<RobotId> landmark;
};

struct Scenario {
  std::string name = "unnamed";
  double duration_s = 300.0;
  double dt_s = 0.1;
  std::vector<RobotSpec> robots;
  std::vector<MeasurementWindow> measurements;
  DropoutSchedule dropout;
  MeasurementNoise measurement_noise;
  double process_noise_floor = 1e-6;
  bool perturb_initial_estimate = true;
  std::uint64_t seed = 1;

  std::size_t team_size() const { return robots.size(); }
  Timestep steps() const;

  /// Throws ScenarioError naming the offending field.
  void validate() const;
};

/// Four robots over 300 s with the fixed 12-window measurement timetable and
/// two disconnections of robot 4.
Scenario build_table1_scenario();

/// N robots on staggered spirals with seeded random measurement windows.
Scenario build_random_scenario(std::size_t n_robots, std::uint64_t seed);

inline constexpr std::string_view kScenarioFormat = "sacl-scenario/1";

std::string serialize_scenario(const Scenario& sc);
Scenario parse_scenario(std::string_view text);
Scenario load_scenario_file(const std::filesystem::path& path);
void save_scenario_file(const Scenario& sc, const std::filesystem::path& path);

/// Built-in template name ("table1") or a path to a scenario file.
Scenario resolve_scenario(std::string_view name_or_path);

}  // namespace sacl
