#pragma once

#include "sacl/joint_ekf.hpp"
#include "sacl/network.hpp"
#include "sacl/protocol.hpp"
#include "sacl/scenario.hpp"
#include "sacl/split_ekf.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sacl {

enum class Estimator : std::uint8_t {
  DeadReckoning,
  JointEkf,
  SaSplit,
  SaSplitDropout,
  PartialOracle,
};

inline constexpr std::array<Estimator, 5> kAllEstimators = {
    Estimator::DeadReckoning, Estimator::JointEkf, Estimator::SaSplit,
    Estimator::SaSplitDropout, Estimator::PartialOracle};

std::string_view estimator_name(Estimator e);
std::optional<Estimator> parse_estimator(std::string_view name);

class EstimatorSet {
 public:
  EstimatorSet() = default;
  EstimatorSet(std::initializer_list<Estimator> list);
  static EstimatorSet all();

  void insert(Estimator e) { bits_ |= bit(e); }
  bool contains(Estimator e) const { return (bits_ & bit(e)) != 0; }
  bool empty() const { return bits_ == 0; }

  /// Members in canonical order.
  std::vector<Estimator> members() const;

  friend bool operator==(EstimatorSet, EstimatorSet) = default;

 private:
  static constexpr std::uint8_t bit(Estimator e) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(e));
  }
  std::uint8_t bits_ = 0;
};

/// Measurement and delivery outcome of one step.
struct EpochRecord {
  Timestep step = 0;
  std::vector<Measurement> scheduled;
  std::vector<Measurement> accepted;  // both endpoints delivered, update order
  DeliveryReport report;
};

struct SimulationOptions {
  PiUpdateSign pi_sign = PiUpdateSign::Subtract;
  std::optional<double> bernoulli_override;  // replaces every robot's loss probability
  bool route_through_wire = true;            // encode/decode every message
};

/// One universe: a single truth realization and noise draw shared by every
/// requested estimator (common random numbers).
class TeamSimulation {
 public:
  TeamSimulation(const Scenario& sc, EstimatorSet estimators, std::uint64_t seed,
                 SimulationOptions options = {});
  ~TeamSimulation();
  TeamSimulation(TeamSimulation&&) noexcept;
  TeamSimulation& operator=(TeamSimulation&&) noexcept;

  const Scenario& scenario() const;
  EstimatorSet estimators() const;
  Timestep step() const;
  bool finished() const;

  /// Propagates truth and every estimator by one step, then runs the
  /// measurement epoch at the new step.
  void advance();

  const std::vector<Pose>& truth() const;
  std::vector<Pose> estimates(Estimator e) const;
  std::vector<Mat3> covariances(Estimator e) const;

  /// State after propagation, before this step's update.
  const std::vector<Pose>& prior_estimates(Estimator e) const;
  const std::vector<Mat3>& prior_covariances(Estimator e) const;

  /// JointEkf or PartialOracle only.
  const JointBelief& joint_belief(Estimator e) const;

  /// SaSplit or SaSplitDropout only.
  const std::vector<RobotNode>& robot_nodes(Estimator e) const;
  const Server& server(Estimator e) const;
  Mat3 split_cross_covariance(Estimator e, RobotId i, RobotId j) const;

  const EpochRecord& last_epoch() const;
  std::vector<ProtocolEvent> drain_events();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct EstimateTrace {
  std::vector<Pose> poses;          // [step * N + robot]
  std::vector<Mat3> covariances;    // posterior
  std::vector<double> prior_trace;  // trace of P before the step's update
};

struct RunRecord {
  std::size_t team_size = 0;
  double dt = 0.0;
  Timestep steps = 0;
  std::uint64_t seed = 0;
  std::vector<Pose> truth;  // [step * N + robot]
  std::map<Estimator, EstimateTrace> estimates;
  std::vector<EpochRecord> epochs;  // only steps with scheduled readings
  std::vector<ProtocolEvent> events;
  bool flagged = false;
  std::string flag_reason;

  const Pose& truth_at(Timestep k, RobotId r) const {
    return truth[static_cast<std::size_t>(k) * team_size + r.index()];
  }
  const Pose& estimate_at(Estimator e, Timestep k, RobotId r) const {
    return estimates.at(e).poses[static_cast<std::size_t>(k) * team_size + r.index()];
  }
};

RunRecord run_once(const Scenario& sc, EstimatorSet estimators, std::uint64_t seed,
                   SimulationOptions options = {});

struct MetricReport {
  std::size_t team_size = 0;
  double dt = 0.0;
  Timestep steps = 0;  // rows cover steps 0..steps
  EstimatorSet estimators;
  std::map<Estimator, std::vector<double>> rms;    // [step * N + robot], metres
  std::map<Estimator, std::vector<double>> anees;  // run-averaged pose NEES
  std::size_t runs_used = 0;
  std::size_t runs_flagged = 0;

  double rms_at(Estimator e, RobotId r, Timestep k) const;
  double final_rms(Estimator e, RobotId r) const { return rms_at(e, r, steps); }
};

/// Monte-Carlo batch with runs fanned out over OpenMP threads (jobs <= 0
/// uses the OpenMP default). Run m uses derive_seed(base_seed, m); the
/// reduction is in run order, so the result does not depend on `jobs`.
MetricReport run_monte_carlo(const Scenario& sc, std::size_t runs, EstimatorSet estimators,
                             std::uint64_t base_seed, int jobs = 0,
                             SimulationOptions options = {});

/// Single-threaded reference for run_monte_carlo.
MetricReport run_monte_carlo_serial(const Scenario& sc, std::size_t runs,
                                    EstimatorSet estimators, std::uint64_t base_seed,
                                    SimulationOptions options = {});

/// Per-run squared position errors reduced into a report.
MetricReport reduce_runs(const std::vector<RunRecord>& runs, EstimatorSet estimators);

// CSV: header "time_s,robot,<est>_rms_m,<est>_anees,..." in canonical
// estimator order, one row per (step, robot), values with 12 significant digits.
std::string format_metrics_csv(const MetricReport& r);
MetricReport parse_metrics_csv(std::string_view text);
void export_metrics(const MetricReport& r, const std::filesystem::path& path);

struct EquivalenceOptions {
  bool with_dropouts = false;
  std::optional<double> bernoulli_override;
  PiUpdateSign pi_sign = PiUpdateSign::Subtract;
};

/// Lock-step comparison of the server-assisted filter against its oracle:
/// the joint EKF under perfect links, the partial-update EKF under dropouts.
struct EquivalenceReport {
  double max_pose_diff = 0.0;   // metres / radians
  double max_cov_diff = 0.0;    // own covariance entries
  double max_cross_diff = 0.0;  // reconstructed Phi Pi Phi^T vs oracle P_{i,j}
  Timestep worst_step = 0;
  RobotId worst_robot;
  std::size_t steps = 0;
  std::size_t update_epochs = 0;
  std::size_t missed_robot_epochs = 0;  // (robot, epoch) pairs skipped
  bool missed_unchanged = true;         // missed robots kept their prior exactly
  std::string aborted;                  // set when a filter broke down before the end
  double elapsed_s = 0.0;

  double max_discrepancy() const;
  bool passed(double tol) const {
    return max_discrepancy() <= tol && missed_unchanged && aborted.empty();
  }
};

EquivalenceReport verify_equivalence(const Scenario& sc, std::uint64_t seed,
                                     EquivalenceOptions options = {});

}  // namespace sacl
