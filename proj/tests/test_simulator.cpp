#include "dcmwalk/simulator.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace dcmwalk;
using Eigen::Vector2d;

namespace {

/// Three-step gait at constant 0.85 m height used for the push comparisons.
Scenario comparison_scenario(ControlMode mode)
{
  Scenario s;
  s.gait.step_count = 3;
  s.gait.step_length = 0.3;
  s.gait.durations = {1.0, 0.2, 0.6, 2.0};
  s.gait.period = 0.05;
  s.vertical = {{0.0, 0.85}};
  s.mpc.previewed_steps = 3;
  s.mpc.foothold_bounds = {0.055, 0.02};
  s.envelope_push_start = 1.0;
  apply_mode(s.mpc, mode);
  return s;
}

Scenario pushed(Scenario s, Vector2d force, double start = 1.0, double duration = 0.1)
{
  s.pushes = {PushEvent{force, start, duration}};
  return s;
}

bool same_bits(double a, double b)
{
  return std::memcmp(&a, &b, sizeof a) == 0;
}

bool same_bits(const Vector2d& a, const Vector2d& b)
{
  return same_bits(a.x(), b.x()) && same_bits(a.y(), b.y());
}

}  // namespace

TEST_CASE("control modes")
{
  for (ControlMode m : {ControlMode::kCopOnly, ControlMode::kCopStep, ControlMode::kCopStepCmp, ControlMode::kCopCmp}) {
    REQUIRE(parse_mode(to_string(m)).has_value());
    CHECK(*parse_mode(to_string(m)) == m);
  }
  CHECK_FALSE(parse_mode("cop").has_value());
  MpcConfig c;
  apply_mode(c, ControlMode::kCopStep);
  CHECK(c.step_adjust);
  CHECK_FALSE(c.cmp_modulation);
  apply_mode(c, ControlMode::kCopCmp);
  CHECK_FALSE(c.step_adjust);
  CHECK(c.cmp_modulation);
}

TEST_CASE("nominal walk")
{
  SUBCASE("every mode completes at rest")
  {
    for (ControlMode m : {ControlMode::kCopOnly, ControlMode::kCopStep, ControlMode::kCopStepCmp, ControlMode::kCopCmp}) {
      const SimLog log = run(comparison_scenario(m));
      CAPTURE(to_string(m));
      CHECK(log.outcome == Outcome::kCompleted);
      CHECK_FALSE(log.fall.has_value());
      CHECK(log.terminal.cop_xi <= 1e-5);
      CHECK(log.terminal.cop_com <= 1e-5);
      CHECK(log.terminal.hdot <= 1e-5);
      for (const ControlRecord& r : log.controls) {
        CHECK(r.status[0] == QpStatus::kOptimal);
        CHECK(r.status[1] == QpStatus::kOptimal);
      }
    }
  }
  SUBCASE("DCM tracking with the calibrated tracking weight")
  {
    Scenario s = comparison_scenario(ControlMode::kCopStep);
    s.mpc.weights.dcm_tracking = 100.0;
    const SimLog log = run(s);
    CHECK(log.outcome == Outcome::kCompleted);
    CHECK(log.max_dcm_error < 0.02);
  }
  SUBCASE("sample bookkeeping")
  {
    const Scenario s = comparison_scenario(ControlMode::kCopStep);
    const SimLog log = run(s);
    const GaitPlan plan = build_gait(s);
    const int total = plan.timeline.total_ticks();
    CHECK(static_cast<int>(log.controls.size()) == total);
    CHECK(static_cast<long>(log.samples.size()) == std::lround(plan.timeline.total_duration() / s.dt) + 1);
    for (const SimSample& smp : log.samples) CHECK_FALSE(smp.push_active);
    CHECK(log.samples.front().t == 0.0);
    CHECK(log.samples.back().t == doctest::Approx(plan.timeline.total_duration()));
  }
}

TEST_CASE("logged CMP offset is the momentum rate over the vertical force")
{
  Scenario s = comparison_scenario(ControlMode::kCopStepCmp);
  s.vertical = {{0.0, 0.85}, {2.0, 0.85}, {3.0, 0.75}, {5.2, 0.75}};
  s = pushed(s, {400.0, -300.0});
  const SimLog log = run(s);
  REQUIRE(log.outcome == Outcome::kCompleted);
  REQUIRE(log.peak_hdot > 1.0);
  const double m = s.mpc.mass;
  for (const SimSample& smp : log.samples) {
    const double fz = m * (s.mpc.gravity + smp.com.zdd);
    CHECK(smp.cmp.x() - smp.cop.x() == doctest::Approx(smp.hdot.y() / fz).epsilon(1e-12).scale(1.0));
    CHECK(smp.cmp.y() - smp.cop.y() == doctest::Approx(-smp.hdot.x() / fz).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("runs are bit-identical")
{
  const Scenario s = pushed(comparison_scenario(ControlMode::kCopStepCmp), {250.0, 150.0});
  const SimLog a = run(s);
  const SimLog b = run(s);
  REQUIRE(a.samples.size() == b.samples.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const SimSample& p = a.samples[i];
    const SimSample& q = b.samples[i];
    identical = identical && same_bits(p.com.x, q.com.x) && same_bits(p.com.v, q.com.v) && same_bits(p.xi, q.xi) &&
                same_bits(p.cop, q.cop) && same_bits(p.cmp, q.cmp) && same_bits(p.hdot, q.hdot) &&
                p.foothold_id == q.foothold_id && p.push_active == q.push_active;
  }
  CHECK(identical);
  REQUIRE(a.controls.size() == b.controls.size());
  for (std::size_t i = 0; i < a.controls.size(); ++i) {
    CHECK(a.controls[i].iterations == b.controls[i].iterations);
    CHECK(same_bits(a.controls[i].cost[0], b.controls[i].cost[0]));
    CHECK(same_bits(a.controls[i].cost[1], b.controls[i].cost[1]));
  }
}

TEST_CASE("plant against the prediction model over one control period")
{
  const double T = 0.06;
  const double dt = 1e-3;
  const double z = 0.75;
  const double m = 90.0;
  const Omega w = natural_frequency(z);
  const HeightTrajectory flat = [z](double) { return VerticalSample{z, 0.0, 0.0}; };

  // x axis only: CoM, velocity, held copdot and Hddot.
  const double x0 = 0.02, v0 = 0.15, cop0 = -0.01, hdot0 = 12.0, copdot = 0.4, hddot = -150.0;
  ComState st;
  st.x = {x0, 0.0};
  st.v = {v0, 0.0};
  st.z = z;
  PlantInput in;
  in.cop = {cop0, 0.0};
  in.cop_rate = {copdot, 0.0};
  in.hdot = {0.0, hdot0};
  in.hddot = {0.0, hddot};
  in.mass = m;
  for (int i = 0; i < 60; ++i) {
    st = integrate_plant(st, i * dt, in, dt, flat);
    in.cop += dt * in.cop_rate;
    in.hdot += dt * in.hddot;
  }
  const double xi_plant = st.x.x() + st.v.x() / w.w;

  const Eigen::Vector4d psi0(x0 + v0 / w.w, x0, hdot0, cop0);
  const Eigen::Vector2d u(hddot, copdot);

  const StageMatrices euler = discretize(w, 0.0, m, kGravity, T);
  const Eigen::Vector4d pe = euler.A * psi0 + euler.B * u;
  CHECK(std::abs(pe(1) - st.x.x()) < 1e-3);
  CHECK(std::abs(pe(0) - xi_plant) < 1e-3);

  // The exact hold model only differs by the RK4 truncation error.
  const StageMatrices zoh = discretize_zoh(w, 0.0, m, kGravity, T);
  const Eigen::Vector4d pz = zoh.A * psi0 + zoh.B * u;
  CHECK(std::abs(pz(1) - st.x.x()) < 1e-9);
  CHECK(std::abs(pz(0) - xi_plant) < 1e-9);
  CHECK(std::abs(pz(2) - in.hdot.y()) < 1e-12);
  CHECK(std::abs(pz(3) - in.cop.x()) < 1e-12);
}

TEST_CASE("baseline mode keeps CMP on CoP")
{
  const SimLog log = run(pushed(comparison_scenario(ControlMode::kCopStep), {120.0, 100.0}));
  REQUIRE(log.outcome == Outcome::kCompleted);
  CHECK(log.peak_hdot == 0.0);
  bool pure = true;
  for (const SimSample& smp : log.samples) {
    pure = pure && smp.hdot.isZero(0.0) && smp.hddot.isZero(0.0) && same_bits(smp.cmp, smp.cop);
  }
  CHECK(pure);
}

TEST_CASE("push windows")
{
  const Scenario s = pushed(comparison_scenario(ControlMode::kCopStep), {80.0, 0.0}, 1.2, 0.05);
  const SimLog log = run(s);
  int active = 0;
  for (const SimSample& smp : log.samples) {
    if (smp.push_active) {
      ++active;
      CHECK(smp.t >= 1.2 - 1e-9);
      CHECK(smp.t < 1.25 - 1e-9);
    }
  }
  CHECK(active == 50);
}

TEST_CASE("fall rules")
{
  const std::vector<std::pair<Vector2d, Vector2d>> regions{{{-0.1, -0.1}, {0.1, 0.1}}, {{0.2, 0.0}, {0.4, 0.2}}};

  SUBCASE("distance to the nearest box")
  {
    CHECK(distance_to_regions({0.0, 0.0}, regions) == 0.0);
    CHECK(distance_to_regions({0.15, 0.0}, regions) == doctest::Approx(0.05));
    CHECK(distance_to_regions({0.5, 0.3}, regions) == doctest::Approx(std::hypot(0.1, 0.1)));
  }
  SUBCASE("DCM beyond reach fires only after a full step duration")
  {
    FallCheck c;
    c.regions = regions;
    c.step_duration = 0.8;
    c.reachability = 0.4;
    const double T = 0.05;
    int fired_at = -1;
    for (int k = 0; k < 40 && fired_at < 0; ++k) {
      // DCM ramped away from the regions at 5 cm per tick.
      c.xi = {0.1 + 0.05 * k, 0.0};
      const bool outside = distance_to_regions(c.xi, c.regions) > c.reachability;
      c.time_outside = outside ? c.time_outside + T : 0.0;
      if (auto why = detect_fall(c)) {
        CHECK(*why == "dcm-divergence");
        fired_at = k;
      }
    }
    // Outside from k = 15 on (0.85 lies 0.45 past the nearest edge at 0.4);
    // sixteen outside ticks make the 0.8 s.
    CHECK(fired_at == 15 + 15);
  }
  SUBCASE("CoM far from the CoP")
  {
    FallCheck c;
    c.regions = regions;
    c.com = {0.61, 0.0};
    CHECK(detect_fall(c) == std::optional<std::string>("com-cop-distance"));
    c.com = {0.59, 0.0};
    CHECK_FALSE(detect_fall(c).has_value());
  }
  SUBCASE("non-finite state")
  {
    FallCheck c;
    c.regions = regions;
    c.xi = {std::nan(""), 0.0};
    CHECK(detect_fall(c) == std::optional<std::string>("dcm-divergence"));
  }
  SUBCASE("empty CoP interval makes the tick infeasible")
  {
    const Scenario s = comparison_scenario(ControlMode::kCopOnly);
    const GaitPlan plan = build_gait(s);
    std::vector<Vector2d> feet;
    for (const Foothold& f : plan.steps.footholds) feet.push_back(f.position);
    AxisHorizon hz = build_axis_horizon(plan, 5, feet, s.mpc, Axis::kX);
    // Contact intervals are widened by the sole half-extent on both sides.
    const double h = hz.cop_half_extent;
    hz.support_lo[3] = {-1, 1.5 * h, 1.5 * h};
    hz.support_hi[3] = {-1, -1.5 * h, -1.5 * h};
    const CondensedSystem cs = condense(hz.stages);
    const AxisState psi0{0.0, 0.0, 0.0, 0.0};
    QpProblem p = build_cost(cs, hz, s.mpc, psi0);
    const auto tags = build_constraints(p, cs, hz, s.mpc, psi0);
    const QpSolution sol = QpSolver{}.solve(p);
    CHECK(sol.status == QpStatus::kInfeasible);
    bool cop_row = false;
    for (int r : sol.violated) {
      const RowKind k = tags[static_cast<std::size_t>(r)].kind;
      cop_row = cop_row || k == RowKind::kCopUpper || k == RowKind::kCopLower;
    }
    CHECK(cop_row);
  }
  SUBCASE("a contact surface too small for the push ends the run as infeasible")
  {
    Scenario s = pushed(comparison_scenario(ControlMode::kCopOnly), {250.0, 0.0});
    s.mpc.contact_half_extent = Vector2d(1e-3, 1e-3);
    const SimLog log = run(s);
    REQUIRE(log.outcome == Outcome::kFell);
    CHECK(log.fall->rule == "qp-infeasible");
    CHECK(log.fall->detail.find("QP infeasible") != std::string::npos);
  }
}

TEST_CASE("recovery envelope")
{
  EnvelopeOptions opt;
  opt.spot_checks = 3;

  SUBCASE("bracket invariants and bisection count")
  {
    const Scenario s = comparison_scenario(ControlMode::kCopStep);
    const RecoveryEnvelope e = max_recoverable_push(s, {1.0, 0.0}, 0.1, opt);
    CHECK_FALSE(e.unbounded);
    CHECK(e.bracket_hi - e.bracket_lo <= opt.tolerance);
    CHECK(e.magnitude == e.bracket_lo);
    CHECK(e.bisection_runs <= 7);
    CHECK(e.monotonicity_violations == 0);
    CHECK(e.magnitude >= 120.0);

    RunOptions ro;
    ro.record_samples = false;
    CHECK(run(pushed(s, {e.magnitude, 0.0}), ro).outcome == Outcome::kCompleted);
    CHECK(run(pushed(s, {e.magnitude + e.tolerance, 0.0}), ro).outcome == Outcome::kFell);

    SUBCASE("ten times the envelope falls")
    {
      const SimLog log = run(pushed(s, {10.0 * e.magnitude, 0.0}), ro);
      REQUIRE(log.outcome == Outcome::kFell);
      CHECK((log.fall->rule == "qp-infeasible" || log.fall->rule == "dcm-divergence"));
    }
    SUBCASE("trace is consistent with the bracket")
    {
      for (const EnvelopeTrial& t : e.trace) {
        if (t.magnitude <= e.bracket_lo) CHECK(t.recovered);
        if (t.magnitude >= e.bracket_hi) CHECK_FALSE(t.recovered);
      }
    }
  }
  SUBCASE("deterministic for a fixed seed")
  {
    Scenario s = comparison_scenario(ControlMode::kCopOnly);
    s.seed = 7;
    const RecoveryEnvelope a = max_recoverable_push(s, {0.0, 1.0}, 0.1, opt);
    const RecoveryEnvelope b = max_recoverable_push(s, {0.0, 1.0}, 0.1, opt);
    CHECK(same_bits(a.magnitude, b.magnitude));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(same_bits(a.trace[i].magnitude, b.trace[i].magnitude));
  }
  SUBCASE("zero duration delivers no impulse")
  {
    const RecoveryEnvelope e = max_recoverable_push(comparison_scenario(ControlMode::kCopOnly), {1.0, 0.0}, 0.0, opt);
    CHECK(e.unbounded);
    CHECK(e.magnitude == opt.cap);
    CHECK(e.trace.empty());
  }
  SUBCASE("bad arguments")
  {
    const Scenario s = comparison_scenario(ControlMode::kCopOnly);
    CHECK_THROWS_AS((void)max_recoverable_push(s, {0.0, 0.0}, 0.1, opt), ConfigError);
    EnvelopeOptions bad = opt;
    bad.bracket_hi = 0.0;
    CHECK_THROWS_AS((void)max_recoverable_push(s, {1.0, 0.0}, 0.1, bad), ConfigError);
  }
}

TEST_CASE("scenario validation")
{
  Scenario s = comparison_scenario(ControlMode::kCopStep);
  const GaitPlan plan = build_gait(s);
  CHECK_NOTHROW(validate(s, plan));

  Scenario bad = s;
  bad.dt = 0.003;
  CHECK_THROWS_AS(validate(bad, plan), ConfigError);
  bad = pushed(s, {10.0, 0.0}, 10.0);
  CHECK_THROWS_AS(validate(bad, plan), ConfigError);
  bad = pushed(s, {10.0, 0.0}, 1.0, 0.0);
  CHECK_THROWS_AS(validate(bad, plan), ConfigError);
  bad = s;
  bad.com_cop_factor = 0.0;
  CHECK_THROWS_AS(validate(bad, plan), ConfigError);
  CHECK(default_push_start(plan) == doctest::Approx(1.0 + 0.3));
}

TEST_CASE("controller comparison")
{
  Scenario s = comparison_scenario(ControlMode::kCopStep);
  CompareOptions opt;
  opt.envelope.spot_checks = 0;
  opt.jobs = 2;
  const auto rows = compare_controllers(s, {ControlMode::kCopStep, ControlMode::kCopStep}, opt);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].outcome == Outcome::kCompleted);
  CHECK(same_bits(rows[0].forward.magnitude, rows[1].forward.magnitude));
  CHECK(same_bits(rows[0].lateral.magnitude, rows[1].lateral.magnitude));
  CHECK(rows[0].peak_hdot == 0.0);
}
