#include "sacl/harness.hpp"

#include "sacl/errors.hpp"
#include "sacl/model.hpp"
#include "sacl/random.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>

namespace sacl {

std::string_view estimator_name(Estimator e) {
  switch (e) {
    case Estimator::DeadReckoning: return "dr";
    case Estimator::JointEkf: return "joint_ekf";
    case Estimator::SaSplit: return "sa_split";
    case Estimator::SaSplitDropout: return "sa_split_dropout";
    case Estimator::PartialOracle: return "partial_oracle";
  }
  return "unknown";
}

std::optional<Estimator> parse_estimator(std::string_view name) {
  for (Estimator e : kAllEstimators) {
    if (estimator_name(e) == name) return e;
  }
  return std::nullopt;
}

EstimatorSet::EstimatorSet(std::initializer_list<Estimator> list) {
  for (Estimator e : list) insert(e);
}

EstimatorSet EstimatorSet::all() {
  EstimatorSet s;
  for (Estimator e : kAllEstimators) s.insert(e);
  return s;
}

std::vector<Estimator> EstimatorSet::members() const {
  std::vector<Estimator> out;
  for (Estimator e : kAllEstimators) {
    if (contains(e)) out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr std::uint64_t kOdometryStream = 0x0D0E1ULL;
constexpr std::uint64_t kMeasurementStream = 0x3EA5ULL;
constexpr std::uint64_t kInitialStream = 0x1417ULL;

std::uint64_t key(std::int64_t v) { return static_cast<std::uint64_t>(v); }

bool finite_pose(const Pose& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.theta);
}

Vec3 pose_error(const Pose& est, const Pose& truth) {
  return {est.x - truth.x, est.y - truth.y, wrap_angle(est.theta - truth.theta)};
}

struct SaEstimator {
  std::vector<RobotNode> nodes;
  Server server;
  std::vector<Pose> prior_pose;
  std::vector<Mat3> prior_cov;
};

struct OracleEstimator {
  JointBelief belief;
  std::vector<Pose> prior_pose;
  std::vector<Mat3> prior_cov;
};

struct DrEstimator {
  std::vector<SplitRobotState> states;
  std::vector<Pose> prior_pose;
  std::vector<Mat3> prior_cov;
};

}  // namespace

struct TeamSimulation::Impl {
  Scenario sc;
  EstimatorSet estimators;
  std::uint64_t seed;
  SimulationOptions options;
  DropoutSchedule channel;
  CounterRng rng;
  Mat2 r_chol;
  Timestep k = 0;
  std::vector<Pose> truth;
  std::optional<DrEstimator> dr;
  std::optional<OracleEstimator> joint;
  std::optional<OracleEstimator> partial;
  std::optional<SaEstimator> sa;
  std::optional<SaEstimator> sa_dropout;
  EpochRecord last;
  std::vector<ProtocolEvent> events;

  Impl(const Scenario& s, EstimatorSet e, std::uint64_t sd, SimulationOptions o)
      : sc(s), estimators(e), seed(sd), options(o), channel(s.dropout), rng(sd) {
    if (estimators.empty()) throw ContractError("at least one estimator required");
    sc.validate();
    if (options.bernoulli_override) {
      const double p = *options.bernoulli_override;
      if (!(p >= 0.0 && p < 1.0)) throw ContractError("loss probability must lie in [0, 1)");
      channel.bernoulli_p.assign(sc.team_size(), p);
    }
    r_chol = sc.measurement_noise.r.llt().matrixL();

    const std::size_t n = sc.team_size();
    std::vector<Pose> est0;
    std::vector<Mat3> cov0;
    for (std::size_t i = 0; i < n; ++i) {
      const RobotSpec& r = sc.robots[i];
      truth.push_back(r.start);
      Pose x0 = r.start;
      if (sc.perturb_initial_estimate) {
        const Mat3 l = r.initial_cov.llt().matrixL();
        Vec3 w;
        for (int c = 0; c < 3; ++c) w(c) = rng.normal({kInitialStream, i, key(c)});
        x0 = Pose::from_vector(r.start.vector() + l * w);
      }
      est0.push_back(x0);
      cov0.push_back(r.initial_cov);
    }

    if (estimators.contains(Estimator::DeadReckoning)) {
      DrEstimator d;
      for (std::size_t i = 0; i < n; ++i) {
        d.states.push_back(SplitRobotState::initial(RobotId::from_index(i), est0[i], cov0[i]));
      }
      d.prior_pose = est0;
      d.prior_cov = cov0;
      dr = std::move(d);
    }
    const auto make_oracle = [&] { return OracleEstimator{JointBelief::initial(est0, cov0), est0, cov0}; };
    if (estimators.contains(Estimator::JointEkf)) joint = make_oracle();
    if (estimators.contains(Estimator::PartialOracle)) partial = make_oracle();
    const auto make_sa = [&] {
      SaEstimator s{{}, Server(ServerConfig{n, sc.measurement_noise, options.pi_sign}), est0, cov0};
      for (std::size_t i = 0; i < n; ++i) {
        s.nodes.push_back(RobotNode::initial(RobotId::from_index(i), est0[i], cov0[i]));
      }
      return s;
    };
    if (estimators.contains(Estimator::SaSplit)) sa = make_sa();
    if (estimators.contains(Estimator::SaSplitDropout)) sa_dropout = make_sa();
  }

  const std::vector<Pose>& prior_pose(Estimator e) const {
    switch (e) {
      case Estimator::DeadReckoning: if (dr) return dr->prior_pose; break;
      case Estimator::JointEkf: if (joint) return joint->prior_pose; break;
      case Estimator::PartialOracle: if (partial) return partial->prior_pose; break;
      case Estimator::SaSplit: if (sa) return sa->prior_pose; break;
      case Estimator::SaSplitDropout: if (sa_dropout) return sa_dropout->prior_pose; break;
    }
    throw ContractError("estimator not part of this simulation: " + std::string(estimator_name(e)));
  }

  const std::vector<Mat3>& prior_cov(Estimator e) const {
    switch (e) {
      case Estimator::DeadReckoning: if (dr) return dr->prior_cov; break;
      case Estimator::JointEkf: if (joint) return joint->prior_cov; break;
      case Estimator::PartialOracle: if (partial) return partial->prior_cov; break;
      case Estimator::SaSplit: if (sa) return sa->prior_cov; break;
      case Estimator::SaSplitDropout: if (sa_dropout) return sa_dropout->prior_cov; break;
    }
    throw ContractError("estimator not part of this simulation: " + std::string(estimator_name(e)));
  }

  const OracleEstimator& oracle(Estimator e) const {
    if (e == Estimator::JointEkf && joint) return *joint;
    if (e == Estimator::PartialOracle && partial) return *partial;
    throw ContractError("no joint belief for estimator " + std::string(estimator_name(e)));
  }

  const SaEstimator& split(Estimator e) const {
    if (e == Estimator::SaSplit && sa) return *sa;
    if (e == Estimator::SaSplitDropout && sa_dropout) return *sa_dropout;
    throw ContractError("no split-EKF state for estimator " + std::string(estimator_name(e)));
  }

  LandmarkMessage via_wire(const LandmarkMessage& m) const {
    return options.route_through_wire ? decode_landmark_message(encode(m)) : m;
  }

  UpdateMessage via_wire(const UpdateMessage& m) const {
    return options.route_through_wire ? decode_update_message(encode(m)) : m;
  }

  void sa_epoch(SaEstimator& s, const std::vector<Measurement>& scheduled, const RobotSet& missed,
                std::string_view tag) {
    std::vector<LandmarkMessage> msgs;
    RobotSet senders;
    for (const Measurement& m : scheduled) {
      const RobotId a = observer_of(m);
      if (missed.contains(a)) continue;
      MeasurementReport rep;
      if (const auto* rel = std::get_if<RelativeMeasurement>(&m)) {
        rep = {MeasurementKind::Relative, rel->landmark, rel->z};
      } else {
        rep = {MeasurementKind::Absolute, RobotId(), std::get<AbsoluteMeasurement>(m).z};
      }
      msgs.push_back(via_wire(robot_emit_landmark_message(s.nodes[a.index()], rep)));
      senders.insert(a);
    }
    for (const Measurement& m : scheduled) {
      const auto b = landmark_of(m);
      if (!b || missed.contains(*b) || senders.contains(*b)) continue;
      msgs.push_back(via_wire(robot_emit_landmark_message(s.nodes[b->index()], std::nullopt)));
      senders.insert(*b);
    }
    if (msgs.empty()) return;

    EpochResult res = s.server.handle_measurement_epoch(msgs, missed);
    for (const UpdateMessage& u : res.updates) {
      if (missed.contains(u.recipient)) continue;
      RobotNode& node = s.nodes[u.recipient.index()];
      ApplyResult ar = robot_apply_update(node, via_wire(u));
      if (ar.outcome == ApplyOutcome::Stale) {
        res.events.push_back({k, ReasonCode::Stale,
                              "robot=" + std::to_string(u.recipient.label()) + " message_time=" +
                                  std::to_string(u.time)});
      }
      node = ar.node;
    }
    for (ProtocolEvent& e : res.events) {
      e.detail += " estimator=" + std::string(tag);
      events.push_back(std::move(e));
    }
  }

  void advance() {
    const std::size_t n = sc.team_size();
    const double dt = sc.dt_s;
    std::vector<ControlInput> measured(n);
    std::vector<MotionNoise> noise(n);
    for (std::size_t i = 0; i < n; ++i) {
      const RobotSpec& r = sc.robots[i];
      const ControlInput u = r.path.control_at(k, dt);
      noise[i] = velocity_proportional_noise(u, r.linear_noise_frac, r.angular_noise_frac,
                                             sc.process_noise_floor);
      truth[i] = propagate_pose(truth[i], u, dt);
      const double sv = r.linear_noise_frac * std::abs(u.v);
      const double sw = r.angular_noise_frac * std::abs(u.omega);
      measured[i].v = u.v + sv * rng.normal({kOdometryStream, key(k), i, 0});
      measured[i].omega = u.omega + sw * rng.normal({kOdometryStream, key(k), i, 1});
    }
    ++k;

    if (dr) {
      for (std::size_t i = 0; i < n; ++i) {
        dr->states[i] = split_propagate(dr->states[i], measured[i], noise[i], dt);
        dr->prior_pose[i] = dr->states[i].estimate;
        dr->prior_cov[i] = dr->states[i].cov;
      }
    }
    for (OracleEstimator* o : {joint ? &*joint : nullptr, partial ? &*partial : nullptr}) {
      if (!o) continue;
      o->belief = oracle_propagate(o->belief, measured, noise, dt);
      o->prior_pose = o->belief.estimates;
      o->prior_cov = o->belief.own_cov;
    }
    for (SaEstimator* s : {sa ? &*sa : nullptr, sa_dropout ? &*sa_dropout : nullptr}) {
      if (!s) continue;
      for (std::size_t i = 0; i < n; ++i) {
        s->nodes[i] = robot_step(s->nodes[i], measured[i], noise[i], dt);
        s->prior_pose[i] = s->nodes[i].split.estimate;
        s->prior_cov[i] = s->nodes[i].split.cov;
      }
    }

    last = EpochRecord{};
    last.step = k;
    last.report = channel_epoch(channel, truth, k, dt, seed);
    for (std::size_t w = 0; w < sc.measurements.size(); ++w) {
      const MeasurementWindow& win = sc.measurements[w];
      if (!step_in_window(win.t_start, win.t_end, k, dt)) continue;
      const Pose& pa = truth[win.observer.index()];
      Vec2 nu;
      nu << rng.normal({kMeasurementStream, key(k), w, 0}), rng.normal({kMeasurementStream, key(k), w, 1});
      nu = r_chol * nu;
      if (win.landmark) {
        const Vec2 z = relative_measurement_model(pa, truth[win.landmark->index()]) + nu;
        last.scheduled.emplace_back(RelativeMeasurement{win.observer, *win.landmark, z, k});
      } else {
        last.scheduled.emplace_back(AbsoluteMeasurement{win.observer, absolute_measurement_model(pa) + nu, k});
      }
    }
    sort_by_update_order(last.scheduled);
    for (const Measurement& m : last.scheduled) {
      if (gate_measurement(last.report, m) == GateResult::Accepted) last.accepted.push_back(m);
    }
    if (last.scheduled.empty()) return;

    const RobotSet none;
    if (joint) {
      for (const Measurement& m : last.scheduled) {
        joint->belief = oracle_partial_update(joint->belief, m, sc.measurement_noise, none).belief;
      }
    }
    if (partial) {
      for (const Measurement& m : last.accepted) {
        partial->belief =
            oracle_partial_update(partial->belief, m, sc.measurement_noise, last.report.missed).belief;
      }
    }
    if (sa) sa_epoch(*sa, last.scheduled, none, estimator_name(Estimator::SaSplit));
    if (sa_dropout) {
      sa_epoch(*sa_dropout, last.scheduled, last.report.missed,
               estimator_name(Estimator::SaSplitDropout));
    }
  }

  std::vector<Pose> estimates(Estimator e) const {
    switch (e) {
      case Estimator::DeadReckoning:
        if (dr) {
          std::vector<Pose> out;
          for (const auto& s : dr->states) out.push_back(s.estimate);
          return out;
        }
        break;
      case Estimator::JointEkf:
      case Estimator::PartialOracle: return oracle(e).belief.estimates;
      case Estimator::SaSplit:
      case Estimator::SaSplitDropout: {
        std::vector<Pose> out;
        for (const auto& nd : split(e).nodes) out.push_back(nd.split.estimate);
        return out;
      }
    }
    throw ContractError("estimator not part of this simulation: " + std::string(estimator_name(e)));
  }

  std::vector<Mat3> covariances(Estimator e) const {
    switch (e) {
      case Estimator::DeadReckoning:
        if (dr) {
          std::vector<Mat3> out;
          for (const auto& s : dr->states) out.push_back(s.cov);
          return out;
        }
        break;
      case Estimator::JointEkf:
      case Estimator::PartialOracle: return oracle(e).belief.own_cov;
      case Estimator::SaSplit:
      case Estimator::SaSplitDropout: {
        std::vector<Mat3> out;
        for (const auto& nd : split(e).nodes) out.push_back(nd.split.cov);
        return out;
      }
    }
    throw ContractError("estimator not part of this simulation: " + std::string(estimator_name(e)));
  }
};

TeamSimulation::TeamSimulation(const Scenario& sc, EstimatorSet estimators, std::uint64_t seed,
                               SimulationOptions options)
    : impl_(std::make_unique<Impl>(sc, estimators, seed, options)) {}
TeamSimulation::~TeamSimulation() = default;
TeamSimulation::TeamSimulation(TeamSimulation&&) noexcept = default;
TeamSimulation& TeamSimulation::operator=(TeamSimulation&&) noexcept = default;

const Scenario& TeamSimulation::scenario() const { return impl_->sc; }
EstimatorSet TeamSimulation::estimators() const { return impl_->estimators; }
Timestep TeamSimulation::step() const { return impl_->k; }
bool TeamSimulation::finished() const { return impl_->k >= impl_->sc.steps(); }

void TeamSimulation::advance() {
  if (finished()) throw ContractError("simulation already finished");
  impl_->advance();
}

const std::vector<Pose>& TeamSimulation::truth() const { return impl_->truth; }
std::vector<Pose> TeamSimulation::estimates(Estimator e) const { return impl_->estimates(e); }
std::vector<Mat3> TeamSimulation::covariances(Estimator e) const { return impl_->covariances(e); }
const std::vector<Pose>& TeamSimulation::prior_estimates(Estimator e) const {
  return impl_->prior_pose(e);
}
const std::vector<Mat3>& TeamSimulation::prior_covariances(Estimator e) const {
  return impl_->prior_cov(e);
}
const JointBelief& TeamSimulation::joint_belief(Estimator e) const {
  return impl_->oracle(e).belief;
}
const std::vector<RobotNode>& TeamSimulation::robot_nodes(Estimator e) const {
  return impl_->split(e).nodes;
}
const Server& TeamSimulation::server(Estimator e) const { return impl_->split(e).server; }

Mat3 TeamSimulation::split_cross_covariance(Estimator e, RobotId i, RobotId j) const {
  const SaEstimator& s = impl_->split(e);
  const std::size_t n = s.nodes.size();
  if (!i.valid_for(n) || !j.valid_for(n)) throw ContractError("robot id outside the team");
  if (i == j) return s.nodes[i.index()].split.cov;
  return reconstruct_cross_covariance(s.server.pi(), s.nodes[i.index()].split,
                                      s.nodes[j.index()].split);
}

const EpochRecord& TeamSimulation::last_epoch() const { return impl_->last; }

std::vector<ProtocolEvent> TeamSimulation::drain_events() {
  std::vector<ProtocolEvent> out;
  out.swap(impl_->events);
  return out;
}

// ---------------------------------------------------------------------------
// Runs

RunRecord run_once(const Scenario& sc, EstimatorSet estimators, std::uint64_t seed,
                   SimulationOptions options) {
  TeamSimulation sim(sc, estimators, seed, options);
  RunRecord rec;
  rec.team_size = sc.team_size();
  rec.dt = sc.dt_s;
  rec.steps = sc.steps();
  rec.seed = seed;
  const std::size_t rows = static_cast<std::size_t>(rec.steps + 1) * rec.team_size;
  rec.truth.reserve(rows);
  const std::vector<Estimator> members = estimators.members();
  for (Estimator e : members) {
    EstimateTrace& t = rec.estimates[e];
    t.poses.reserve(rows);
    t.covariances.reserve(rows);
    t.prior_trace.reserve(rows);
  }

  const auto record = [&] {
    rec.truth.insert(rec.truth.end(), sim.truth().begin(), sim.truth().end());
    for (Estimator e : members) {
      EstimateTrace& t = rec.estimates[e];
      const std::vector<Pose> poses = sim.estimates(e);
      const std::vector<Mat3> covs = sim.covariances(e);
      for (std::size_t i = 0; i < poses.size(); ++i) {
        if (!finite_pose(poses[i]) || !covs[i].allFinite()) {
          throw NumericalError(std::string(estimator_name(e)) + ": non-finite state for robot " +
                               std::to_string(i + 1) + " at step " + std::to_string(sim.step()));
        }
        t.poses.push_back(poses[i]);
        t.covariances.push_back(covs[i]);
        t.prior_trace.push_back(sim.prior_covariances(e)[i].trace());
      }
    }
  };

  try {
    record();
    while (!sim.finished()) {
      sim.advance();
      if (!sim.last_epoch().scheduled.empty()) rec.epochs.push_back(sim.last_epoch());
      for (ProtocolEvent& ev : sim.drain_events()) rec.events.push_back(std::move(ev));
      record();
    }
  } catch (const NumericalError& e) {
    rec.flagged = true;
    rec.flag_reason = e.what();
  } catch (const ModelError& e) {
    rec.flagged = true;
    rec.flag_reason = e.what();
  }
  return rec;
}

namespace {

// Per-run squared position errors and pose NEES, [step * N + robot].
struct RunContribution {
  bool flagged = false;
  std::map<Estimator, std::vector<double>> sq_err;
  std::map<Estimator, std::vector<double>> nees;
};

RunContribution contribution(const RunRecord& run, EstimatorSet estimators) {
  RunContribution c;
  c.flagged = run.flagged;
  if (run.flagged) return c;
  const std::size_t rows = run.truth.size();
  for (Estimator e : estimators.members()) {
    const auto it = run.estimates.find(e);
    if (it == run.estimates.end()) throw ContractError("run lacks estimator " + std::string(estimator_name(e)));
    const EstimateTrace& t = it->second;
    std::vector<double>& sq = c.sq_err[e];
    std::vector<double>& ne = c.nees[e];
    sq.resize(rows);
    ne.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const Vec3 err = pose_error(t.poses[r], run.truth[r]);
      sq[r] = err.head<2>().squaredNorm();
      ne[r] = err.dot(t.covariances[r].ldlt().solve(err));
    }
  }
  return c;
}

MetricReport reduce(const std::vector<RunContribution>& parts, EstimatorSet estimators,
                    std::size_t team_size, double dt, Timestep steps) {
  MetricReport rep;
  rep.team_size = team_size;
  rep.dt = dt;
  rep.steps = steps;
  rep.estimators = estimators;
  const std::size_t rows = static_cast<std::size_t>(steps + 1) * team_size;
  for (Estimator e : estimators.members()) {
    rep.rms[e].assign(rows, 0.0);
    rep.anees[e].assign(rows, 0.0);
  }
  for (const RunContribution& c : parts) {
    if (c.flagged) {
      ++rep.runs_flagged;
      continue;
    }
    ++rep.runs_used;
    for (Estimator e : estimators.members()) {
      const auto& sq = c.sq_err.at(e);
      const auto& ne = c.nees.at(e);
      auto& acc_r = rep.rms[e];
      auto& acc_n = rep.anees[e];
      for (std::size_t r = 0; r < rows; ++r) {
        acc_r[r] += sq[r];
        acc_n[r] += ne[r];
      }
    }
  }
  const double m = static_cast<double>(rep.runs_used);
  for (Estimator e : estimators.members()) {
    for (double& v : rep.rms[e]) v = rep.runs_used ? std::sqrt(v / m) : std::numeric_limits<double>::quiet_NaN();
    for (double& v : rep.anees[e]) v = rep.runs_used ? v / m : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

}  // namespace

double MetricReport::rms_at(Estimator e, RobotId r, Timestep k) const {
  const auto it = rms.find(e);
  if (it == rms.end()) throw ContractError("report lacks estimator " + std::string(estimator_name(e)));
  if (!r.valid_for(team_size) || k < 0 || k > steps) throw ContractError("rms_at: index out of range");
  return it->second[static_cast<std::size_t>(k) * team_size + r.index()];
}

MetricReport reduce_runs(const std::vector<RunRecord>& runs, EstimatorSet estimators) {
  if (runs.empty()) throw ContractError("reduce_runs: no runs");
  std::vector<RunContribution> parts;
  parts.reserve(runs.size());
  for (const RunRecord& r : runs) parts.push_back(contribution(r, estimators));
  return reduce(parts, estimators, runs.front().team_size, runs.front().dt, runs.front().steps);
}

MetricReport run_monte_carlo(const Scenario& sc, std::size_t runs, EstimatorSet estimators,
                             std::uint64_t base_seed, int jobs, SimulationOptions options) {
  if (runs == 0) throw ContractError("run_monte_carlo: at least one run required");
  sc.validate();
  std::vector<RunContribution> parts(runs);
  std::vector<std::exception_ptr> errors(runs);
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  const auto count = static_cast<std::int64_t>(runs);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t m = 0; m < count; ++m) {
    try {
      const RunRecord rec = run_once(sc, estimators, derive_seed(base_seed, key(m)), options);
      parts[m] = contribution(rec, estimators);
    } catch (...) {
      errors[m] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reduce(parts, estimators, sc.team_size(), sc.dt_s, sc.steps());
}

MetricReport run_monte_carlo_serial(const Scenario& sc, std::size_t runs, EstimatorSet estimators,
                                    std::uint64_t base_seed, SimulationOptions options) {
  if (runs == 0) throw ContractError("run_monte_carlo: at least one run required");
  sc.validate();
  std::vector<RunContribution> parts;
  parts.reserve(runs);
  for (std::size_t m = 0; m < runs; ++m) {
    parts.push_back(contribution(run_once(sc, estimators, derive_seed(base_seed, m), options), estimators));
  }
  return reduce(parts, estimators, sc.team_size(), sc.dt_s, sc.steps());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

double parse_number(std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw ContractError("metrics CSV: bad number '" + tmp + "'");
  return v;
}

}  // namespace

std::string format_metrics_csv(const MetricReport& r) {
  const std::vector<Estimator> members = r.estimators.members();
  std::string out = "time_s,robot";
  for (Estimator e : members) {
    out += ",";
    out += estimator_name(e);
    out += "_rms_m,";
    out += estimator_name(e);
    out += "_anees";
  }
  out += "\n";
  if (r.team_size == 0) return out;
  for (Timestep k = 0; k <= r.steps; ++k) {
    for (std::size_t i = 0; i < r.team_size; ++i) {
      const std::size_t row = static_cast<std::size_t>(k) * r.team_size + i;
      append_number(out, static_cast<double>(k) * r.dt);
      out += ",";
      out += std::to_string(i + 1);
      for (Estimator e : members) {
        out += ",";
        append_number(out, r.rms.at(e)[row]);
        out += ",";
        append_number(out, r.anees.at(e)[row]);
      }
      out += "\n";
    }
  }
  return out;
}

MetricReport parse_metrics_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw ContractError("metrics CSV: missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "time_s" || header[1] != "robot" || header.size() % 2 != 0) {
    throw ContractError("metrics CSV: malformed header");
  }
  MetricReport rep;
  std::vector<Estimator> members;
  for (std::size_t c = 2; c < header.size(); c += 2) {
    const std::string_view col = header[c];
    const std::string_view suffix = "_rms_m";
    if (col.size() <= suffix.size() || col.substr(col.size() - suffix.size()) != suffix) {
      throw ContractError("metrics CSV: unexpected column " + std::string(col));
    }
    const auto e = parse_estimator(col.substr(0, col.size() - suffix.size()));
    if (!e) throw ContractError("metrics CSV: unknown estimator in column " + std::string(col));
    members.push_back(*e);
    rep.estimators.insert(*e);
  }
  if (lines.size() == 1) return rep;

  std::size_t n = 0;
  std::vector<double> times;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto f = split_fields(lines[l]);
    if (f.size() != header.size()) throw ContractError("metrics CSV: wrong field count on line " + std::to_string(l + 1));
    const auto robot = static_cast<std::size_t>(parse_number(f[1]));
    n = std::max(n, robot);
    if (robot == 1) times.push_back(parse_number(f[0]));
    for (std::size_t c = 0; c < members.size(); ++c) {
      rep.rms[members[c]].push_back(parse_number(f[2 + 2 * c]));
      rep.anees[members[c]].push_back(parse_number(f[3 + 2 * c]));
    }
  }
  if ((lines.size() - 1) % n != 0) throw ContractError("metrics CSV: ragged robot rows");
  rep.team_size = n;
  rep.steps = static_cast<Timestep>((lines.size() - 1) / n) - 1;
  rep.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  return rep;
}

void export_metrics(const MetricReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << format_metrics_csv(r);
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Equivalence

double EquivalenceReport::max_discrepancy() const {
  return std::max({max_pose_diff, max_cov_diff, max_cross_diff});
}

EquivalenceReport verify_equivalence(const Scenario& sc, std::uint64_t seed, EquivalenceOptions options) {
  const auto t0 = std::chrono::steady_clock::now();
  const Estimator oracle = options.with_dropouts ? Estimator::PartialOracle : Estimator::JointEkf;
  const Estimator split = options.with_dropouts ? Estimator::SaSplitDropout : Estimator::SaSplit;
  SimulationOptions sim_opts;
  sim_opts.pi_sign = options.pi_sign;
  sim_opts.bernoulli_override = options.bernoulli_override;
  TeamSimulation sim(sc, EstimatorSet{oracle, split}, seed, sim_opts);

  EquivalenceReport rep;
  rep.worst_robot = RobotId(1);
  const std::size_t n = sc.team_size();
  const auto note = [&](double& slot, double diff, RobotId robot) {
    if (!(diff <= slot)) {
      slot = std::isnan(diff) ? std::numeric_limits<double>::infinity() : diff;
      if (slot >= rep.max_discrepancy()) {
        rep.worst_step = sim.step();
        rep.worst_robot = robot;
      }
    }
  };
  const auto compare = [&] {
    const std::vector<Pose> xs = sim.estimates(split);
    const std::vector<Mat3> ps = sim.covariances(split);
    const JointBelief& b = sim.joint_belief(oracle);
    for (std::size_t i = 0; i < n; ++i) {
      const RobotId id = RobotId::from_index(i);
      const Vec3 d = pose_error(xs[i], b.estimates[i]);
      note(rep.max_pose_diff, d.cwiseAbs().maxCoeff(), id);
      note(rep.max_cov_diff, (ps[i] - b.own_cov[i]).cwiseAbs().maxCoeff(), id);
      for (std::size_t j = i + 1; j < n; ++j) {
        const RobotId jd = RobotId::from_index(j);
        const Mat3 diff = sim.split_cross_covariance(split, id, jd) - b.block(id, jd);
        note(rep.max_cross_diff, diff.cwiseAbs().maxCoeff(), id);
      }
    }
  };

  compare();
  while (!sim.finished()) {
    try {
      sim.advance();
    } catch (const NumericalError& e) {
      rep.aborted = "step " + std::to_string(sim.step()) + ": " + e.what();
      break;
    }
    ++rep.steps;
    compare();
    const EpochRecord& ep = sim.last_epoch();
    if (ep.scheduled.empty()) continue;
    ++rep.update_epochs;
    if (!options.with_dropouts) continue;
    const std::vector<Pose> xs = sim.estimates(split);
    const std::vector<Mat3> ps = sim.covariances(split);
    const JointBelief& b = sim.joint_belief(oracle);
    for (RobotId id : ep.report.missed) {
      ++rep.missed_robot_epochs;
      const std::size_t i = id.index();
      const bool same = xs[i] == sim.prior_estimates(split)[i] && ps[i] == sim.prior_covariances(split)[i] &&
                        b.estimates[i] == sim.prior_estimates(oracle)[i] &&
                        b.own_cov[i] == sim.prior_covariances(oracle)[i];
      if (!same && rep.missed_unchanged) {
        rep.missed_unchanged = false;
        rep.worst_step = sim.step();
        rep.worst_robot = id;
      }
    }
  }
  rep.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace sacl
