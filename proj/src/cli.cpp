#include "dcmwalk/cli.hpp"

#include "dcmwalk/errors.hpp"
#include "dcmwalk/scenario_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unistd.h>

namespace dcmwalk {

using nlohmann::ordered_json;

namespace {

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

const char* outcome_name(Outcome o)
{
  return o == Outcome::kCompleted ? "completed" : "fell";
}

Scenario load(const std::filesystem::path& path, const CliOptions& opt)
{
  Scenario s = load_scenario(path);
  if (opt.seed) s.seed = *opt.seed;
  return s;
}

ordered_json envelope_fields(const RecoveryEnvelope& e)
{
  ordered_json trace = ordered_json::array();
  for (const EnvelopeTrial& t : e.trace) trace.push_back({{"magnitude", t.magnitude}, {"recovered", t.recovered}});
  return {{"direction", {e.direction.x(), e.direction.y()}},
          {"duration", e.duration},
          {"magnitude", e.magnitude},
          {"bracket", {e.bracket_lo, e.bracket_hi}},
          {"tolerance", e.tolerance},
          {"unbounded", e.unbounded},
          {"bisection_runs", e.bisection_runs},
          {"monotonicity_violations", e.monotonicity_violations},
          {"trace", trace}};
}

template <class F>
int guarded(std::ostream& log, F&& f)
{
  try {
    return f();
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
  }
  return kExitConfig;
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& content)
{
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("cannot write " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string trajectory_csv(const SimLog& log)
{
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const SimSample& s : log.samples) {
    const double v[] = {s.t,       s.com.x.x(), s.com.x.y(), s.com.z,    s.com.v.x(),  s.com.v.y(),  s.xi.x(),
                        s.xi.y(),  s.cop.x(),   s.cop.y(),   s.cmp.x(),  s.cmp.y(),    s.hdot.x(),   s.hdot.y()};
    for (double x : v) {
      out += num(x);
      out += ',';
    }
    out += std::to_string(s.foothold_id);
    out += s.push_active ? ",1\n" : ",0\n";
  }
  return out;
}

std::string footsteps_csv(const SimLog& log, const GaitPlan& plan)
{
  std::string out = "id,foot,landing_t,planned_x,planned_y,x,y\n";
  for (std::size_t f = 0; f < log.footholds.size(); ++f) {
    const Foothold& h = log.footholds[f];
    const Eigen::Vector2d& p = plan.steps.footholds[f].position;
    out += std::to_string(f) + ',' + (h.foot == Foot::kLeft ? "left" : "right") + ',' +
           num(plan.timeline.landing_tick(static_cast<int>(f)) * plan.timeline.period()) + ',' + num(p.x()) + ',' +
           num(p.y()) + ',' + num(h.position.x()) + ',' + num(h.position.y()) + '\n';
  }
  return out;
}

std::string summary_json(const Scenario& s, const SimLog& log)
{
  ordered_json j;
  j["outcome"] = outcome_name(log.outcome);
  if (log.fall) {
    j["fall"] = {{"t", log.fall->t}, {"rule", log.fall->rule}, {"detail", log.fall->detail}};
  } else {
    j["fall"] = nullptr;
  }
  double cmp_offset = 0.0;
  for (const SimSample& smp : log.samples) cmp_offset = std::max(cmp_offset, (smp.cmp - smp.cop).norm());
  int max_iter = 0;
  for (const ControlRecord& r : log.controls) max_iter = std::max({max_iter, r.iterations[0], r.iterations[1]});
  j["metrics"] = {{"peak_hdot", log.peak_hdot},
                  {"max_cmp_cop_offset", cmp_offset},
                  {"max_dcm_error", log.max_dcm_error},
                  {"max_foothold_deviation", log.max_foothold_deviation},
                  {"control_ticks", log.controls.size()},
                  {"max_qp_iterations", max_iter}};
  if (log.outcome == Outcome::kCompleted) {
    j["terminal"] = {{"cop_xi", log.terminal.cop_xi}, {"cop_com", log.terminal.cop_com}, {"hdot", log.terminal.hdot}};
  } else {
    j["terminal"] = nullptr;
  }
  j["fall_thresholds"] = {{"reachability", s.mpc.reachability},
                          {"com_cop_distance", s.com_cop_factor * s.mpc.reachability},
                          {"dcm_outside_time", s.gait.durations.ssp + s.gait.durations.dsp}};
  j["scenario"] = ordered_json::parse(scenario_to_json(s));
  return j.dump(2) + '\n';
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows)
{
  std::string out =
    "mode,outcome,forward_N,forward_unbounded,lateral_N,lateral_unbounded,peak_hdot,max_foothold_deviation\n";
  for (const ComparisonRow& r : rows) {
    out += std::string(to_string(r.mode)) + ',' + outcome_name(r.outcome) + ',' + num(r.forward.magnitude) + ',' +
           (r.forward.unbounded ? "1" : "0") + ',' + num(r.lateral.magnitude) + ',' + (r.lateral.unbounded ? "1" : "0") +
           ',' + num(r.peak_hdot) + ',' + num(r.max_foothold_deviation) + '\n';
  }
  return out;
}

std::string envelope_json(const Scenario& s, const RecoveryEnvelope& e, double push_start)
{
  ordered_json j = envelope_fields(e);
  j["push_start"] = push_start;
  j["scenario"] = ordered_json::parse(scenario_to_json(s));
  return j.dump(2) + '\n';
}

int cmd_run(const std::filesystem::path& scenario, const std::filesystem::path& out, const CliOptions& opt, std::ostream& log)
{
  return guarded(log, [&] {
    const Scenario s = load(scenario, opt);
    const GaitPlan plan = build_gait(s);
    const SimLog sim = run(s, plan);
    std::filesystem::create_directories(out);
    write_atomic(out / "trajectory.csv", trajectory_csv(sim));
    write_atomic(out / "footsteps.csv", footsteps_csv(sim, plan));
    write_atomic(out / "summary.json", summary_json(s, sim));
    if (sim.fall) {
      log << "fell at t = " << sim.fall->t << " s (" << sim.fall->rule << ")";
      if (!sim.fall->detail.empty()) log << ": " << sim.fall->detail;
      log << '\n';
      return kExitFall;
    }
    return kExitOk;
  });
}

int cmd_compare(const std::filesystem::path& scenario,
                const std::vector<std::string>& modes,
                const std::filesystem::path& out,
                const CliOptions& opt,
                std::ostream& log,
                double duration,
                double tolerance)
{
  return guarded(log, [&] {
    if (modes.size() < 2) throw ConfigError("compare needs at least two modes");
    std::vector<ControlMode> parsed;
    for (const std::string& m : modes) {
      const auto mode = parse_mode(m);
      if (!mode) throw ConfigError("unknown mode '" + m + "' (cop-only, cop+step, cop+step+cmp, cop+cmp)");
      parsed.push_back(*mode);
    }
    const Scenario s = load(scenario, opt);
    CompareOptions co;
    co.duration = duration;
    co.envelope.tolerance = tolerance;
    co.jobs = opt.jobs;
    const auto rows = compare_controllers(s, parsed, co);
    std::filesystem::create_directories(out);
    write_atomic(out / "comparison.csv", comparison_csv(rows));
    return kExitOk;
  });
}

int cmd_envelope(const std::filesystem::path& scenario,
                 char direction,
                 double duration,
                 double tolerance,
                 const std::filesystem::path& out,
                 const CliOptions& opt,
                 std::ostream& log)
{
  return guarded(log, [&] {
    if (direction != 'x' && direction != 'y') throw ConfigError("direction must be x or y");
    const Scenario s = load(scenario, opt);
    EnvelopeOptions eo;
    eo.tolerance = tolerance;
    const Eigen::Vector2d dir = direction == 'x' ? Eigen::Vector2d::UnitX() : Eigen::Vector2d::UnitY();
    const RecoveryEnvelope e = max_recoverable_push(s, dir, duration, eo);
    const double start = s.envelope_push_start.value_or(default_push_start(build_gait(s)));
    std::filesystem::create_directories(out);
    write_atomic(out / "envelope.json", envelope_json(s, e, start));
    return kExitOk;
  });
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Walking pattern generation with DCM model predictive control"};
  app.require_subcommand(1);

  CliOptions opt;
  std::uint64_t seed = 0;
  app.add_option("--jobs", opt.jobs, "Worker threads for comparisons")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");

  const char* env = std::getenv(kOutDirEnv);
  std::string out_dir = env && *env ? env : "out";
  std::string file;
  std::string modes;
  std::string dir = "x";
  double duration = 0.1;
  double tol = 5.0;

  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario");
  run_cmd->add_option("file", file, "Scenario file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory");

  auto* cmp_cmd = app.add_subcommand("compare", "Compare controller modes on one scenario");
  cmp_cmd->add_option("file", file, "Scenario file")->required();
  cmp_cmd->add_option("--modes", modes, "Comma-separated modes")->required();
  cmp_cmd->add_option("--duration", duration, "Envelope push duration (s)");
  cmp_cmd->add_option("--tol", tol, "Envelope tolerance (N)");
  cmp_cmd->add_option("--out", out_dir, "Output directory");

  auto* env_cmd = app.add_subcommand("envelope", "Largest recoverable push along an axis");
  env_cmd->add_option("file", file, "Scenario file")->required();
  env_cmd->add_option("--dir", dir, "Push direction")->check(CLI::IsMember({"x", "y"}));
  env_cmd->add_option("--duration", duration, "Push duration (s)");
  env_cmd->add_option("--tol", tol, "Bisection tolerance (N)");
  env_cmd->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) opt.seed = seed;

  if (run_cmd->parsed()) return cmd_run(file, out_dir, opt, err);
  if (cmp_cmd->parsed()) {
    std::vector<std::string> list;
    std::stringstream ss(modes);
    for (std::string m; std::getline(ss, m, ',');) {
      if (!m.empty()) list.push_back(m);
    }
    return cmd_compare(file, list, out_dir, opt, err, duration, tol);
  }
  return cmd_envelope(file, dir.front(), duration, tol, out_dir, opt, err);
}

}  // namespace dcmwalk
