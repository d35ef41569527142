#include "sacl/scenario.hpp"

#include "sacl/errors.hpp"
#include "sacl/random.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sacl {

using Json = nlohmann::ordered_json;

ControlInput SquareHelixPath::control_at(Timestep k, double dt) const {
  const auto edge_steps = static_cast<Timestep>(std::llround(edge_duration_s / dt));
  const auto turn_steps = static_cast<Timestep>(std::llround(turn_duration_s / dt));
  const Timestep cycle = edge_steps + turn_steps;
  const Timestep edge = k / cycle;
  const Timestep phase = k % cycle;
  const double length = first_edge_m + edge_growth_m * static_cast<double>(edge / 2);
  ControlInput u;
  u.v = length / edge_duration_s;
  if (phase >= edge_steps) {
    u.omega = turn_direction * (std::numbers::pi / 2.0) / (static_cast<double>(turn_steps) * dt);
  }
  return u;
}

Timestep Scenario::steps() const { return static_cast<Timestep>(std::llround(duration_s / dt_s)); }

namespace {

bool is_spd(const Eigen::MatrixXd& m) {
  if (!m.allFinite() || !m.isApprox(m.transpose(), 1e-12)) return false;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() > 0.0;
}

std::string robot_field(std::size_t i, const char* field) {
  return "robots[" + std::to_string(i) + "]." + field;
}

}  // namespace

void Scenario::validate() const {
  if (!(dt_s > 0.0) || !std::isfinite(dt_s)) throw ScenarioError("dt_s: must be positive");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw ScenarioError("duration_s: must be positive");
  }
  if (robots.empty()) throw ScenarioError("robots: at least one robot required");
  const std::size_t n = robots.size();
  for (std::size_t i = 0; i < n; ++i) {
    const RobotSpec& r = robots[i];
    if (!std::isfinite(r.start.x) || !std::isfinite(r.start.y) || !std::isfinite(r.start.theta)) {
      throw ScenarioError(robot_field(i, "start") + ": non-finite pose");
    }
    if (!is_spd(r.initial_cov)) {
      throw ScenarioError(robot_field(i, "initial_cov") + ": must be symmetric positive definite");
    }
    if (!(r.linear_noise_frac >= 0.0) || !(r.angular_noise_frac >= 0.0)) {
      throw ScenarioError(robot_field(i, "noise") + ": fractions must be non-negative");
    }
    const SquareHelixPath& p = r.path;
    if (!(p.edge_duration_s >= dt_s) || !(p.turn_duration_s >= dt_s) || !(p.first_edge_m >= 0.0) ||
        !std::isfinite(p.edge_growth_m) || (p.turn_direction != 1 && p.turn_direction != -1)) {
      throw ScenarioError(robot_field(i, "path") + ": invalid square-helix parameters");
    }
  }
  for (std::size_t k = 0; k < measurements.size(); ++k) {
    const MeasurementWindow& w = measurements[k];
    const std::string where = "measurements[" + std::to_string(k) + "]";
    if (!(w.t_start <= w.t_end) || w.t_start < 0.0 || w.t_end > duration_s) {
      throw ScenarioError(where + ": window must satisfy 0 <= t_start <= t_end <= duration_s");
    }
    if (!w.observer.valid_for(n)) throw ScenarioError(where + ".observer: not a team member");
    if (w.landmark) {
      if (!w.landmark->valid_for(n)) throw ScenarioError(where + ".landmark: not a team member");
      if (*w.landmark == w.observer) {
        throw ScenarioError(where + ": observer and landmark must differ");
      }
    }
  }
  for (const auto& w : dropout.windows) {
    if (w.t_start < 0.0 || w.t_end > duration_s) {
      throw ScenarioError("dropout.windows: window outside [0, duration_s]");
    }
  }
  dropout.validate(n);
  if (!is_spd(measurement_noise.r)) {
    throw ScenarioError("measurement_noise: must be symmetric positive definite");
  }
  if (!(process_noise_floor > 0.0)) throw ScenarioError("process_noise_floor: must be positive");
}

Scenario build_table1_scenario() {
  Scenario sc;
  sc.name = "table1";
  sc.duration_s = 300.0;
  sc.dt_s = 0.1;
  sc.seed = 7;

  const double lin[] = {0.35, 0.30, 0.25, 0.20};
  const double ang[] = {0.25, 0.20, 0.20, 0.15};
  // Four inner corners, each robot heading along the square counter-clockwise.
  const Pose starts[] = {{-1.0, -1.0, 0.0},
                         {1.0, -1.0, std::numbers::pi / 2.0},
                         {1.0, 1.0, std::numbers::pi},
                         {-1.0, 1.0, -std::numbers::pi / 2.0}};
  for (int i = 0; i < 4; ++i) {
    RobotSpec r;
    r.start = starts[i];
    r.initial_cov = Eigen::Vector3d(0.01, 0.01, 0.0025).asDiagonal();
    r.linear_noise_frac = lin[i];
    r.angular_noise_frac = ang[i];
    sc.robots.push_back(r);
  }

  const auto rel = [](double t0, double t1, int a, int b) {
    return MeasurementWindow{t0, t1, RobotId(a), RobotId(b)};
  };
  sc.measurements = {
      rel(45, 50, 1, 2),   rel(45, 50, 2, 3),   rel(45, 50, 3, 4),
      rel(90, 95, 3, 4),   rel(90, 95, 4, 1),
      rel(135, 140, 1, 2), rel(135, 140, 3, 4),
      rel(180, 185, 2, 3),
      rel(225, 230, 1, 2), rel(225, 230, 3, 4),
      rel(270, 275, 2, 3), rel(270, 275, 4, 1),
  };
  sc.dropout.windows = {{RobotId(4), 135.0, 140.0}, {RobotId(4), 180.0, 185.0}};
  sc.measurement_noise.r = Mat2::Identity() * 0.01;
  return sc;
}

Scenario build_random_scenario(std::size_t n_robots, std::uint64_t seed) {
  if (n_robots < 2) throw ScenarioError("random scenario: at least two robots required");
  const CounterRng rng(seed);
  constexpr std::uint64_t kStream = 0x5CE7A210ULL;
  const auto draw = [&](std::uint64_t a, std::uint64_t b) {
    return rng.uniform({kStream, a, b});
  };

  Scenario sc;
  sc.name = "random-" + std::to_string(n_robots);
  sc.seed = seed;
  sc.duration_s = 300.0;
  sc.dt_s = 0.1;
  const Pose corners[] = {{-1.0, -1.0, 0.0},
                          {1.0, -1.0, std::numbers::pi / 2.0},
                          {1.0, 1.0, std::numbers::pi},
                          {-1.0, 1.0, -std::numbers::pi / 2.0}};
  for (std::size_t i = 0; i < n_robots; ++i) {
    const double scale = 1.0 + 0.5 * static_cast<double>(i / 4);
    const Pose& c = corners[i % 4];
    RobotSpec r;
    r.start = {c.x * scale, c.y * scale, c.theta};
    r.initial_cov = Eigen::Vector3d(0.01, 0.01, 0.0025).asDiagonal();
    r.linear_noise_frac = 0.15 + 0.2 * draw(i, 1);
    r.angular_noise_frac = 0.10 + 0.15 * draw(i, 2);
    r.path.first_edge_m = 2.0 * scale;
    sc.robots.push_back(r);
  }

  // Six 5 s windows, each with one to three distinct readings.
  for (std::uint64_t slot = 0; slot < 6; ++slot) {
    const double t0 = 45.0 * static_cast<double>(slot + 1);
    const auto count = 1 + static_cast<std::uint64_t>(3.0 * draw(100 + slot, 0));
    for (std::uint64_t m = 0; m < count; ++m) {
      const auto a = static_cast<int>(static_cast<double>(n_robots) * draw(100 + slot, 10 + m));
      auto b = static_cast<int>(static_cast<double>(n_robots - 1) * draw(100 + slot, 20 + m));
      if (b >= a) ++b;
      MeasurementWindow w{t0, t0 + 5.0, RobotId(a + 1), RobotId(b + 1)};
      const bool duplicate = std::any_of(sc.measurements.begin(), sc.measurements.end(),
                                         [&](const MeasurementWindow& o) {
                                           return o.t_start == w.t_start &&
                                                  o.observer == w.observer &&
                                                  o.landmark == w.landmark;
                                         });
      if (!duplicate) sc.measurements.push_back(w);
    }
  }
  const auto abs_slot = static_cast<double>(static_cast<int>(5.0 * draw(200, 0)));
  sc.measurements.push_back({60.0 + 45.0 * abs_slot, 62.0 + 45.0 * abs_slot, RobotId(1), std::nullopt});

  const auto lost = static_cast<int>(static_cast<double>(n_robots) * draw(300, 0));
  sc.dropout.windows = {{RobotId(lost + 1), 130.0, 190.0}};
  sc.measurement_noise.r = Mat2::Identity() * 0.01;
  return sc;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename Derived>
Json matrix_json(const Eigen::MatrixBase<Derived>& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ScenarioError(where + (where.empty() ? "" : ".") + key + ": missing");
  }
  return j.at(key);
}

double number(const Json& j, const char* key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_number()) throw ScenarioError(where + "." + key + ": expected a number");
  return v.get<double>();
}

double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

int integer(const Json& j, const char* key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_number_integer()) throw ScenarioError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

template <int Rows, int Cols>
Eigen::Matrix<double, Rows, Cols> matrix(const Json& j, const char* key, const std::string& where) {
  const Json& v = require(j, key, where);
  const std::string field = where + "." + key;
  if (!v.is_array() || v.size() != Rows) throw ScenarioError(field + ": wrong row count");
  Eigen::Matrix<double, Rows, Cols> m;
  for (int r = 0; r < Rows; ++r) {
    if (!v[r].is_array() || v[r].size() != Cols) throw ScenarioError(field + ": wrong column count");
    for (int c = 0; c < Cols; ++c) {
      if (!v[r][c].is_number()) throw ScenarioError(field + ": expected numbers");
      m(r, c) = v[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string serialize_scenario(const Scenario& sc) {
  Json j;
  j["format"] = kScenarioFormat;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["duration_s"] = sc.duration_s;
  j["dt_s"] = sc.dt_s;
  j["process_noise_floor"] = sc.process_noise_floor;
  j["perturb_initial_estimate"] = sc.perturb_initial_estimate;
  j["measurement_noise"] = matrix_json(sc.measurement_noise.r);
  Json robots = Json::array();
  for (std::size_t i = 0; i < sc.robots.size(); ++i) {
    const RobotSpec& r = sc.robots[i];
    Json rj;
    rj["id"] = i + 1;
    rj["start"] = {r.start.x, r.start.y, r.start.theta};
    rj["initial_cov"] = matrix_json(r.initial_cov);
    rj["linear_noise_frac"] = r.linear_noise_frac;
    rj["angular_noise_frac"] = r.angular_noise_frac;
    rj["path"] = {{"type", "square_helix"},
                  {"first_edge_m", r.path.first_edge_m},
                  {"edge_growth_m", r.path.edge_growth_m},
                  {"edge_duration_s", r.path.edge_duration_s},
                  {"turn_duration_s", r.path.turn_duration_s},
                  {"turn_direction", r.path.turn_direction}};
    robots.push_back(rj);
  }
  j["robots"] = robots;
  Json meas = Json::array();
  for (const auto& w : sc.measurements) {
    Json wj;
    wj["t_start"] = w.t_start;
    wj["t_end"] = w.t_end;
    wj["observer"] = w.observer.label();
    wj["landmark"] = w.landmark ? Json(w.landmark->label()) : Json(nullptr);
    meas.push_back(wj);
  }
  j["measurements"] = meas;
  Json windows = Json::array();
  for (const auto& w : sc.dropout.windows) {
    windows.push_back({{"robot", w.robot.label()}, {"t_start", w.t_start}, {"t_end", w.t_end}});
  }
  Json zones = Json::array();
  for (const auto& z : sc.dropout.zones) {
    zones.push_back({{"x_min", z.x_min}, {"y_min", z.y_min}, {"x_max", z.x_max}, {"y_max", z.y_max}});
  }
  j["dropout"] = {{"windows", windows}, {"bernoulli_p", sc.dropout.bernoulli_p}, {"zones", zones}};
  return j.dump(2) + "\n";
}

Scenario parse_scenario(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario: invalid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) throw ScenarioError("scenario: top level must be an object");
  const Json& format = require(j, "format", "");
  if (!format.is_string() || format.get<std::string>() != kScenarioFormat) {
    throw ScenarioError("format: expected \"" + std::string(kScenarioFormat) + "\"");
  }

  Scenario sc;
  sc.name = j.value("name", std::string("unnamed"));
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ScenarioError("seed: expected a non-negative integer");
    sc.seed = j["seed"].get<std::uint64_t>();
  }
  sc.duration_s = number(j, "duration_s", "");
  sc.dt_s = number(j, "dt_s", "");
  sc.process_noise_floor = number_or(j, "process_noise_floor", sc.process_noise_floor, "");
  if (j.contains("perturb_initial_estimate")) {
    if (!j["perturb_initial_estimate"].is_boolean()) {
      throw ScenarioError("perturb_initial_estimate: expected a boolean");
    }
    sc.perturb_initial_estimate = j["perturb_initial_estimate"].get<bool>();
  }
  sc.measurement_noise.r = matrix<2, 2>(j, "measurement_noise", "");

  const Json& robots = require(j, "robots", "");
  if (!robots.is_array()) throw ScenarioError("robots: expected an array");
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const Json& rj = robots[i];
    const std::string where = "robots[" + std::to_string(i) + "]";
    if (rj.contains("id") && (!rj["id"].is_number_integer() || rj["id"].get<std::size_t>() != i + 1)) {
      throw ScenarioError(where + ".id: robots must be listed in id order starting at 1");
    }
    RobotSpec r;
    const Json& start = require(rj, "start", where);
    if (!start.is_array() || start.size() != 3 || !start[0].is_number() || !start[1].is_number() ||
        !start[2].is_number()) {
      throw ScenarioError(where + ".start: expected [x, y, theta]");
    }
    r.start = {start[0].get<double>(), start[1].get<double>(), start[2].get<double>()};
    r.initial_cov = matrix<3, 3>(rj, "initial_cov", where);
    r.linear_noise_frac = number(rj, "linear_noise_frac", where);
    r.angular_noise_frac = number(rj, "angular_noise_frac", where);
    const Json& pj = require(rj, "path", where);
    const std::string pwhere = where + ".path";
    if (pj.value("type", std::string()) != "square_helix") {
      throw ScenarioError(pwhere + ".type: only \"square_helix\" is supported");
    }
    r.path.first_edge_m = number(pj, "first_edge_m", pwhere);
    r.path.edge_growth_m = number(pj, "edge_growth_m", pwhere);
    r.path.edge_duration_s = number(pj, "edge_duration_s", pwhere);
    r.path.turn_duration_s = number(pj, "turn_duration_s", pwhere);
    r.path.turn_direction = integer(pj, "turn_direction", pwhere);
    sc.robots.push_back(r);
  }

  if (j.contains("measurements")) {
    const Json& meas = j["measurements"];
    if (!meas.is_array()) throw ScenarioError("measurements: expected an array");
    for (std::size_t k = 0; k < meas.size(); ++k) {
      const std::string where = "measurements[" + std::to_string(k) + "]";
      MeasurementWindow w;
      w.t_start = number(meas[k], "t_start", where);
      w.t_end = number(meas[k], "t_end", where);
      w.observer = RobotId(integer(meas[k], "observer", where));
      if (meas[k].contains("landmark") && !meas[k]["landmark"].is_null()) {
        w.landmark = RobotId(integer(meas[k], "landmark", where));
      }
      sc.measurements.push_back(w);
    }
  }

  if (j.contains("dropout")) {
    const Json& d = j["dropout"];
    if (!d.is_object()) throw ScenarioError("dropout: expected an object");
    if (d.contains("windows")) {
      for (std::size_t k = 0; k < d["windows"].size(); ++k) {
        const std::string where = "dropout.windows[" + std::to_string(k) + "]";
        const Json& wj = d["windows"][k];
        sc.dropout.windows.push_back({RobotId(integer(wj, "robot", where)),
                                      number(wj, "t_start", where), number(wj, "t_end", where)});
      }
    }
    if (d.contains("bernoulli_p")) {
      if (!d["bernoulli_p"].is_array()) throw ScenarioError("dropout.bernoulli_p: expected an array");
      for (const Json& p : d["bernoulli_p"]) {
        if (!p.is_number()) throw ScenarioError("dropout.bernoulli_p: expected numbers");
        sc.dropout.bernoulli_p.push_back(p.get<double>());
      }
    }
    if (d.contains("zones")) {
      for (std::size_t k = 0; k < d["zones"].size(); ++k) {
        const std::string where = "dropout.zones[" + std::to_string(k) + "]";
        const Json& zj = d["zones"][k];
        sc.dropout.zones.push_back({number(zj, "x_min", where), number(zj, "y_min", where),
                                    number(zj, "x_max", where), number(zj, "y_max", where)});
      }
    }
  }

  sc.validate();
  return sc;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

void save_scenario_file(const Scenario& sc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ScenarioError("cannot write scenario file: " + path.string());
  out << serialize_scenario(sc);
  if (!out) throw ScenarioError("write failed: " + path.string());
}

Scenario resolve_scenario(std::string_view name_or_path) {
  if (name_or_path == "table1") return build_table1_scenario();
  return load_scenario_file(std::filesystem::path(name_or_path));
}

}  // namespace sacl
