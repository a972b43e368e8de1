#include "dcmwalk/simulator.hpp"

#include "dcmwalk/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <thread>

namespace dcmwalk {

using Eigen::Vector2d;

const char* to_string(ControlMode m)
{
  switch (m) {
    case ControlMode::kCopOnly:
      return "cop-only";
    case ControlMode::kCopStep:
      return "cop+step";
    case ControlMode::kCopStepCmp:
      return "cop+step+cmp";
    case ControlMode::kCopCmp:
      return "cop+cmp";
  }
  return "?";
}

std::optional<ControlMode> parse_mode(const std::string& s)
{
  for (ControlMode m : {ControlMode::kCopOnly, ControlMode::kCopStep, ControlMode::kCopStepCmp, ControlMode::kCopCmp}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

void apply_mode(MpcConfig& cfg, ControlMode m)
{
  cfg.step_adjust = m == ControlMode::kCopStep || m == ControlMode::kCopStepCmp;
  cfg.cmp_modulation = m == ControlMode::kCopStepCmp || m == ControlMode::kCopCmp;
}

GaitPlan build_gait(const Scenario& s)
{
  return build_gait(s.gait, s.vertical, s.mpc.gravity);
}

double default_push_start(const GaitPlan& plan)
{
  for (const PhaseSegment& seg : plan.timeline.segments()) {
    if (seg.kind == PhaseKind::kSsp) return (seg.first_tick + 0.5 * seg.ticks) * plan.timeline.period();
  }
  return 0.0;
}

namespace {

int inner_steps_per_tick(double T, double dt)
{
  const double r = T / dt;
  const long n = std::lround(r);
  if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-9 * r) {
    throw ConfigError("control period must be an integer multiple of the plant time step");
  }
  return static_cast<int>(n);
}

long to_inner_index(double t, double dt)
{
  return std::lround(t / dt);
}

}  // namespace

void validate(const Scenario& s, const GaitPlan& plan)
{
  s.mpc.validate();
  if (!(s.dt > 0.0)) throw ConfigError("sim.dt must be positive");
  (void)inner_steps_per_tick(plan.timeline.period(), s.dt);
  if (!(s.com_cop_factor > 0.0)) throw ConfigError("sim.com_cop_factor must be positive");
  const double end = plan.timeline.total_duration();
  for (std::size_t i = 0; i < s.pushes.size(); ++i) {
    const PushEvent& p = s.pushes[i];
    const std::string where = "pushes[" + std::to_string(i) + "]";
    if (!(p.duration > 0.0)) throw ConfigError(where + ".duration must be positive");
    if (!(p.start >= 0.0) || p.start + p.duration > end + 1e-9) {
      throw ConfigError(where + " lies outside the walking timeline");
    }
    if (!p.force.allFinite()) throw ConfigError(where + ".force must be finite");
  }
  if (s.envelope_push_start && (*s.envelope_push_start < 0.0 || *s.envelope_push_start > end)) {
    throw ConfigError("sim.envelope_push_start lies outside the walking timeline");
  }
  if (s.mpc.step_adjust) {
    for (int k = 0; k < plan.timeline.total_ticks(); ++k) {
      (void)footstep_selection(plan.timeline, k, s.mpc.horizon, s.mpc.previewed_steps);
    }
  }
}

double distance_to_regions(const Vector2d& p, const std::vector<std::pair<Vector2d, Vector2d>>& regions)
{
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [lo, hi] : regions) {
    const Vector2d gap = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    best = std::min(best, gap.norm());
  }
  return best;
}

std::optional<std::string> detect_fall(const FallCheck& c)
{
  if (!c.xi.allFinite() || !c.com.allFinite()) return std::string("dcm-divergence");
  if ((c.com - c.cop).norm() > c.com_cop_factor * c.reachability) return std::string("com-cop-distance");
  if (distance_to_regions(c.xi, c.regions) > c.reachability && c.time_outside >= c.step_duration) {
    return std::string("dcm-divergence");
  }
  return std::nullopt;
}

SimLog run(const Scenario& s, const RunOptions& opt)
{
  const GaitPlan plan = build_gait(s);
  return run(s, plan, opt);
}

SimLog run(const Scenario& s, const GaitPlan& plan, const RunOptions& opt)
{
  validate(s, plan);
  const PhaseTimeline& tl = plan.timeline;
  const MpcConfig& cfg = s.mpc;
  const double T = tl.period();
  const double dt = s.dt;
  const double g = cfg.gravity;
  const int sub = inner_steps_per_tick(T, dt);
  const int total = tl.total_ticks();
  const HeightTrajectory height = plan.vertical.trajectory();
  const Vector2d cop_half = cfg.contact_half_extent.value_or(plan.steps.foot_half_extent);
  const Vector2d foot_half = plan.steps.foot_half_extent;
  const double step_duration = s.gait.durations.ssp + s.gait.durations.dsp;

  struct Window
  {
    long begin, end;
    Vector2d force;
  };
  std::vector<Window> windows;
  for (const PushEvent& p : s.pushes) {
    windows.push_back({to_inner_index(p.start, dt), to_inner_index(p.start + p.duration, dt), p.force});
  }
  auto push_at = [&](long i, bool& active) {
    Vector2d f = Vector2d::Zero();
    active = false;
    for (const Window& w : windows) {
      if (i >= w.begin && i < w.end) {
        f += w.force;
        active = true;
      }
    }
    return f;
  };

  Controller ctl(plan, cfg);
  SimLog log;
  log.footholds = plan.steps.footholds;
  std::vector<Vector2d> feet;
  for (const Foothold& f : plan.steps.footholds) feet.push_back(f.position);

  // Start on the reference: CoM at rest over the reference DCM, CoP on the
  // reference CoP, so xi(0) = xi_ref(0).
  ComState st;
  st.x = plan.refs.dcm_at(0);
  const VerticalSample v0 = height(0.0);
  st.z = v0.z;
  st.zd = v0.zd;
  st.zdd = v0.zdd;
  Vector2d cop = plan.refs.cop_at(0);
  Vector2d hdot = Vector2d::Zero();
  double time_outside = 0.0;

  auto dcm_of = [&](const ComState& c) { return dcm_from_state(c, natural_frequency(c.z, g)).xi; };
  auto refresh_feet = [&] {
    for (std::size_t f = 0; f < feet.size(); ++f) log.footholds[f].position = feet[f];
  };
  auto record = [&](double t, const Vector2d& hddot, int foothold, bool push, const PhaseSegment& seg) {
    const double hn = hdot.norm();
    log.peak_hdot = std::max(log.peak_hdot, hn);
    if (!opt.record_samples) return;
    SimSample smp;
    smp.t = t;
    smp.com = st;
    smp.xi = dcm_of(st);
    smp.cop = cop;
    smp.cmp = cmp_from_cop(cop, hdot, cfg.mass, st.zdd, g);
    smp.hdot = hdot;
    smp.hddot = hddot;
    const auto box = support_box(log.footholds, seg, cop_half);
    smp.support_lo = box.first;
    smp.support_hi = box.second;
    smp.foothold_id = foothold;
    smp.push_active = push;
    log.samples.push_back(smp);
  };
  auto fell = [&](double t, std::string rule, std::string detail) {
    log.outcome = Outcome::kFell;
    log.fall = FallInfo{t, std::move(rule), std::move(detail)};
  };

  {
    bool active = false;
    (void)push_at(0, active);
    record(0.0, Vector2d::Zero(), tl.assigned_foothold(0), active, tl.segment_at(0));
  }

  for (int k = 0; k < total && log.outcome == Outcome::kCompleted; ++k) {
    const double tk = static_cast<double>(k) * sub * dt;
    const Vector2d xi = dcm_of(st);
    log.max_dcm_error = std::max(log.max_dcm_error, (xi - plan.refs.dcm_at(k)).norm());

    std::array<AxisState, 2> psi;
    for (int a = 0; a < 2; ++a) {
      psi[static_cast<std::size_t>(a)] = {xi(a), st.x(a), axis_momentum(hdot, static_cast<Axis>(a)), cop(a)};
    }
    ControlOutput out;
    try {
      out = ctl.solve_tick(k, psi, feet);
    } catch (const FallPredicted& e) {
      fell(tk, "qp-infeasible", e.what());
      break;
    }

    ControlRecord rec;
    rec.tick = k;
    for (int a = 0; a < 2; ++a) {
      const AxisOutput& ax = out.axes[static_cast<std::size_t>(a)];
      rec.status[static_cast<std::size_t>(a)] = ax.status;
      rec.cost[static_cast<std::size_t>(a)] = ax.cost;
      rec.iterations[static_cast<std::size_t>(a)] = ax.iterations;
      for (std::size_t q = 0; q < ax.foothold_ids.size(); ++q) {
        feet[static_cast<std::size_t>(ax.foothold_ids[q])](a) = ax.footholds(static_cast<Eigen::Index>(q));
      }
    }
    refresh_feet();
    rec.footholds = feet;
    log.controls.push_back(std::move(rec));

    const Vector2d cop_rate(out.cop_rate0(Axis::kX), out.cop_rate0(Axis::kY));
    const Vector2d hddot = physical_momentum(out.hddot0(Axis::kX), out.hddot0(Axis::kY));
    const PhaseSegment& seg = tl.segment_at(k);

    for (int j = 0; j < sub; ++j) {
      const long i = static_cast<long>(k) * sub + j;
      PlantInput in;
      in.cop = cop;
      in.cop_rate = cop_rate;
      in.hdot = hdot;
      in.hddot = hddot;
      in.mass = cfg.mass;
      bool active = false;
      in.force = push_at(i, active);
      st = integrate_plant(st, static_cast<double>(i) * dt, in, dt, height, g);
      cop += dt * cop_rate;
      hdot += dt * hddot;
      const double t = static_cast<double>(i + 1) * dt;
      bool next_active = false;
      (void)push_at(i + 1, next_active);
      record(t, hddot, tl.assigned_foothold(k), next_active, seg);

      FallCheck fc;
      fc.xi = dcm_of(st);
      fc.com = st.x;
      fc.cop = cop;
      fc.reachability = cfg.reachability;
      fc.com_cop_factor = s.com_cop_factor;
      fc.step_duration = std::numeric_limits<double>::infinity();
      if (auto why = detect_fall(fc)) {
        fell(t, *why, "");
        break;
      }
    }
    if (log.outcome == Outcome::kFell) break;

    // Capture regions after this tick: contact box and the next foothold.
    FallCheck fc;
    fc.xi = dcm_of(st);
    fc.com = st.x;
    fc.cop = cop;
    fc.reachability = cfg.reachability;
    fc.com_cop_factor = s.com_cop_factor;
    fc.step_duration = step_duration;
    fc.regions.push_back(support_box(log.footholds, tl.segment_at(k + 1), foot_half));
    for (std::size_t f = 2; f < feet.size(); ++f) {
      if (tl.landing_tick(static_cast<int>(f)) > k + 1) {
        const Vector2d reach = foot_half + (cfg.step_adjust ? cfg.foothold_bounds : Vector2d::Zero());
        fc.regions.emplace_back(feet[f] - reach, feet[f] + reach);
        break;
      }
    }
    const bool outside = distance_to_regions(fc.xi, fc.regions) > cfg.reachability;
    time_outside = outside ? time_outside + T : 0.0;
    fc.time_outside = time_outside;
    if (auto why = detect_fall(fc)) fell(static_cast<double>(k + 1) * T, *why, "");
  }

  for (std::size_t f = 0; f < feet.size(); ++f) {
    log.max_foothold_deviation =
      std::max(log.max_foothold_deviation, (feet[f] - plan.steps.footholds[f].position).norm());
  }
  if (log.outcome == Outcome::kCompleted) {
    const Vector2d xi = dcm_of(st);
    log.terminal.cop_xi = (cop - xi).lpNorm<Eigen::Infinity>();
    log.terminal.cop_com = (cop - st.x).lpNorm<Eigen::Infinity>();
    log.terminal.hdot = hdot.lpNorm<Eigen::Infinity>();
  }
  return log;
}

namespace {

bool recovers(const Scenario& base, const GaitPlan& plan, const Vector2d& dir, double duration, double start, double mag)
{
  Scenario s = base;
  s.pushes = {PushEvent{dir * mag, start, duration}};
  RunOptions opt;
  opt.record_samples = false;
  return run(s, plan, opt).outcome == Outcome::kCompleted;
}

}  // namespace

RecoveryEnvelope max_recoverable_push(const Scenario& s, const Vector2d& direction, double duration, const EnvelopeOptions& opt)
{
  if (!(direction.norm() > 0.0)) throw ConfigError("push direction must be non-zero");
  if (!(opt.tolerance > 0.0)) throw ConfigError("envelope tolerance must be positive");
  if (!(opt.bracket_lo >= 0.0) || !(opt.bracket_hi > opt.bracket_lo)) throw ConfigError("envelope bracket must satisfy 0 <= lo < hi");
  if (!(duration >= 0.0)) throw ConfigError("push duration must be non-negative");

  RecoveryEnvelope env;
  env.direction = direction.normalized();
  env.duration = duration;
  env.tolerance = opt.tolerance;
  const double cap = std::max(opt.cap, opt.bracket_hi);

  if (duration == 0.0) {
    env.magnitude = cap;
    env.bracket_lo = env.bracket_hi = cap;
    env.unbounded = true;
    return env;
  }

  const GaitPlan plan = build_gait(s);
  validate(s, plan);
  const double start = s.envelope_push_start.value_or(default_push_start(plan));
  if (start + duration > plan.timeline.total_duration() + 1e-9) throw ConfigError("envelope push ends after the walk");

  auto trial = [&](double mag) {
    const bool ok = recovers(s, plan, env.direction, duration, start, mag);
    env.trace.push_back({mag, ok});
    return ok;
  };

  double lo = opt.bracket_lo;
  double hi = opt.bracket_hi;
  if (!trial(lo)) {
    // Not even the lower end is recoverable; shrink towards zero.
    hi = lo;
    lo = 0.0;
    if (hi > 0.0 && !trial(0.0)) {
      env.magnitude = 0.0;
      env.bracket_lo = env.bracket_hi = 0.0;
      return env;
    }
  } else {
    while (trial(hi)) {
      lo = hi;
      if (hi >= cap) {
        env.magnitude = cap;
        env.bracket_lo = env.bracket_hi = cap;
        env.unbounded = true;
        return env;
      }
      hi = std::min(2.0 * hi, cap);
    }
  }
  while (hi - lo > opt.tolerance) {
    const double mid = 0.5 * (lo + hi);
    ++env.bisection_runs;
    if (trial(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  env.magnitude = lo;
  env.bracket_lo = lo;
  env.bracket_hi = hi;

  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < opt.spot_checks && lo > 0.0; ++i) {
    if (!trial(lo * u(rng))) ++env.monotonicity_violations;
  }
  return env;
}

std::vector<ComparisonRow> compare_controllers(const Scenario& s, const std::vector<ControlMode>& modes, const CompareOptions& opt)
{
  std::vector<ComparisonRow> rows(modes.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    Scenario sm = s;
    apply_mode(sm.mpc, modes[i]);
    rows[i].mode = modes[i];
    ComparisonRow* row = &rows[i];
    tasks.emplace_back([sm, row] {
      RunOptions ro;
      ro.record_samples = false;
      const SimLog log = run(sm, ro);
      row->outcome = log.outcome;
      row->peak_hdot = log.peak_hdot;
      row->max_foothold_deviation = log.max_foothold_deviation;
    });
    tasks.emplace_back([sm, row, &opt] { row->forward = max_recoverable_push(sm, Vector2d::UnitX(), opt.duration, opt.envelope); });
    tasks.emplace_back([sm, row, &opt] { row->lateral = max_recoverable_push(sm, Vector2d::UnitY(), opt.duration, opt.envelope); });
  }

  const int workers = std::max(1, std::min<int>(opt.jobs, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (auto& t : tasks) t();
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

}  // namespace dcmwalk
