#include "cli.hpp"

#include "sacl/errors.hpp"
#include "sacl/harness.hpp"
#include "sacl/random.hpp"
#include "sacl/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace sacl::cli {

namespace {

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::size_t runs = 1;
  std::vector<std::string> estimators;
  std::string out_dir;
  int jobs = 0;
  std::optional<double> bernoulli;
  bool corrupt_pi_sign = false;
};

struct VerifyArgs {
  std::string scenario = "table1";
  std::optional<std::uint64_t> seed;
  double bernoulli = 0.1;
  double tol = 1e-8;
  bool corrupt_pi_sign = false;
};

struct GenArgs {
  std::string template_name;
  std::size_t robots = 4;
  std::uint64_t seed = 1;
  std::string out;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

EstimatorSet parse_estimators(const std::vector<std::string>& names) {
  if (names.empty()) return EstimatorSet::all();
  EstimatorSet set;
  for (const std::string& n : names) {
    const auto e = parse_estimator(n);
    if (!e) throw ScenarioError("unknown estimator '" + n + "'");
    set.insert(*e);
  }
  return set;
}

int cmd_run(const RunArgs& a, int verbosity, std::ostream& out, std::ostream& err) {
  Scenario sc;
  EstimatorSet est;
  try {
    sc = resolve_scenario(a.scenario);
    est = parse_estimators(a.estimators);
    if (a.runs == 0) throw ScenarioError("--mc must be at least 1");
    if (a.bernoulli && !(*a.bernoulli >= 0.0 && *a.bernoulli < 1.0)) {
      throw ScenarioError("--bernoulli must lie in [0, 1)");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  const std::uint64_t seed = a.seed.value_or(sc.seed);
  SimulationOptions opts;
  opts.bernoulli_override = a.bernoulli;
  if (a.corrupt_pi_sign) opts.pi_sign = PiUpdateSign::Add;

  std::filesystem::path dir = a.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    dir = env && *env ? env : ".";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    err << "error: cannot create output directory " << dir.string() << ": " << ec.message() << "\n";
    return kExitBadInput;
  }

  if (verbosity > 0) {
    err << "scenario " << sc.name << ": " << sc.team_size() << " robots, " << sc.steps()
        << " steps, " << a.runs << " run(s), seed " << seed << "\n";
  }

  // Run 0 is always simulated on its own so its protocol events can be logged.
  const RunRecord first = run_once(sc, est, derive_seed(seed, 0), opts);
  MetricReport report;
  if (a.runs == 1) {
    report = reduce_runs({first}, est);
  } else {
    report = run_monte_carlo(sc, a.runs, est, seed, a.jobs, opts);
  }

  const std::filesystem::path csv = dir / "metrics.csv";
  const std::filesystem::path log = dir / "events.log";
  try {
    export_metrics(report, csv);
    std::ofstream events(log, std::ios::binary);
    if (!events) throw Error("cannot open for writing: " + log.string());
    for (const ProtocolEvent& e : first.events) events << format_event(e) << "\n";
    if (first.flagged) events << sc.steps() << " DIVERGED " << first.flag_reason << "\n";
    if (!events) throw Error("write failed: " + log.string());
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }

  out << "scenario " << sc.name << ", " << report.runs_used << " run(s) used, " << report.runs_flagged
      << " flagged\n";
  if (report.runs_used > 0) {
    out << "final-time RMS position error [m]:\n";
    for (Estimator e : est.members()) {
      out << "  " << estimator_name(e) << ":";
      for (std::size_t i = 0; i < report.team_size; ++i) {
        out << " r" << (i + 1) << "=" << fmt(report.final_rms(e, RobotId::from_index(i)));
      }
      out << "\n";
    }
  }
  out << "wrote " << csv.string() << " and " << log.string() << "\n";

  if (report.runs_flagged > 0 || first.flagged) {
    err << "error: estimator divergence in " << std::max<std::size_t>(report.runs_flagged, 1)
        << " run(s)";
    if (first.flagged) err << " (run 0: " << first.flag_reason << ")";
    err << "\n";
    return kExitDivergence;
  }
  return kExitOk;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  Scenario sc;
  try {
    sc = resolve_scenario(a.scenario);
    if (!(a.bernoulli >= 0.0 && a.bernoulli < 1.0)) throw ScenarioError("--bernoulli must lie in [0, 1)");
    if (!(a.tol > 0.0)) throw ScenarioError("--tol must be positive");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  const std::uint64_t seed = a.seed.value_or(sc.seed);
  const PiUpdateSign sign = a.corrupt_pi_sign ? PiUpdateSign::Add : PiUpdateSign::Subtract;

  struct Suite {
    const char* label;
    EquivalenceOptions opts;
  };
  Suite perfect{"perfect links vs joint EKF", {false, std::nullopt, sign}};
  Suite lossy{"dropouts vs partial-update EKF", {true, a.bernoulli, sign}};

  int code = kExitOk;
  for (const Suite& s : {perfect, lossy}) {
    const EquivalenceReport r = verify_equivalence(sc, seed, s.opts);
    const bool ok = r.passed(a.tol);
    out << s.label << ": " << (ok ? "PASS" : "FAIL") << "  pose " << fmt(r.max_pose_diff) << "  cov "
        << fmt(r.max_cov_diff) << "  cross " << fmt(r.max_cross_diff) << "  (" << r.steps << " steps, "
        << r.update_epochs << " update epochs";
    if (s.opts.with_dropouts) {
      out << ", " << r.missed_robot_epochs << " missed robot-epochs, missed robots "
          << (r.missed_unchanged ? "unchanged" : "CHANGED");
    }
    out << ")\n";
    if (!r.aborted.empty()) {
      err << "error: " << s.label << ": filter broke down at " << r.aborted
          << "\n";
    }
    if (!ok) {
      err << "error: " << s.label << ": discrepancy " << fmt(r.max_discrepancy()) << " exceeds "
          << fmt(a.tol) << " at step " << r.worst_step << " robot " << r.worst_robot.label() << "\n";
      code = kExitVerifyFailed;
    }
  }
  return code;
}

int cmd_scenario_gen(const GenArgs& a, std::ostream& out, std::ostream& err) {
  std::string text;
  try {
    Scenario sc;
    if (a.template_name == "table1") {
      sc = build_table1_scenario();
    } else if (a.template_name == "random") {
      sc = build_random_scenario(a.robots, a.seed);
    } else {
      throw ScenarioError("unknown template '" + a.template_name + "' (expected table1 or random)");
    }
    text = serialize_scenario(sc);
    parse_scenario(text);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  if (a.out.empty()) {
    out << text;
    return kExitOk;
  }
  std::ofstream f(a.out, std::ios::binary);
  f << text;
  if (!f) {
    err << "error: cannot write " << a.out << "\n";
    return kExitBadInput;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Server-assisted cooperative localization simulator"};
  app.name("sacl");
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "More diagnostics on stderr");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and write metrics.csv and events.log");
  run_cmd->add_option("--scenario", run.scenario, "Built-in name (table1) or scenario file")->required();
  run_cmd->add_option("--seed", run.seed, "Base seed (default: the scenario's seed)");
  run_cmd->add_option("--mc", run.runs, "Number of Monte-Carlo runs");
  run_cmd->add_option("--estimators", run.estimators,
                      "Comma-separated subset of dr,joint_ekf,sa_split,sa_split_dropout,partial_oracle")
      ->delimiter(',');
  run_cmd->add_option("--out", run.out_dir, std::string("Output directory (default: $") + kOutDirEnv + " or .)");
  run_cmd->add_option("--jobs", run.jobs, "Monte-Carlo worker threads (0 = OpenMP default)");
  run_cmd->add_option("--bernoulli", run.bernoulli, "Per-epoch link loss probability for every robot");
  run_cmd->add_flag("--corrupt-pi-sign", run.corrupt_pi_sign, "Test hook: add instead of subtract in the Pi update");

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Check the split filter against its joint-EKF oracles");
  verify_cmd->add_option("--scenario", verify.scenario, "Built-in name (table1) or scenario file");
  verify_cmd->add_option("--seed", verify.seed, "Seed (default: the scenario's seed)");
  verify_cmd->add_option("--bernoulli", verify.bernoulli, "Extra link loss probability in the dropout suite");
  verify_cmd->add_option("--tol", verify.tol, "Maximum allowed discrepancy");
  verify_cmd->add_flag("--corrupt-pi-sign", verify.corrupt_pi_sign, "Test hook: flip the Pi update sign");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("scenario-gen", "Emit a scenario file from a template");
  gen_cmd->add_option("template", gen.template_name, "table1 or random")->required();
  gen_cmd->add_option("--robots", gen.robots, "Team size for the random template");
  gen_cmd->add_option("--seed", gen.seed, "Seed for the random template");
  gen_cmd->add_option("--out", gen.out, "Output file (default: stdout)");

  std::vector<std::string> argv_store{"sacl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*run_cmd) return cmd_run(run, verbosity, out, err);
    if (*verify_cmd) return cmd_verify(verify, out, err);
    return cmd_scenario_gen(gen, out, err);
  } catch (const ScenarioError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
}

}  // namespace sacl::cli
