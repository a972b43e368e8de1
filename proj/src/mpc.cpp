#include "dcmwalk/mpc.hpp"

#include "dcmwalk/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace dcmwalk {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

void MpcConfig::validate() const
{
  const double w[] = {weights.cop_rate, weights.hdot, weights.hddot, weights.cop_tracking, weights.dcm_tracking};
  for (double a : w) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("mpc weights must be finite and non-negative");
  }
  if (horizon < 1) throw ConfigError("mpc horizon must be at least 1 tick");
  if (previewed_steps < 0) throw ConfigError("mpc previewed_steps must be non-negative");
  if (!(reachability > 0.0)) throw ConfigError("mpc reachability must be positive");
  if (!(foothold_bounds.minCoeff() >= 0.0)) throw ConfigError("mpc foothold_bounds must be non-negative");
  if (!(min_foot_clearance >= 0.0)) throw ConfigError("mpc min_foot_clearance must be non-negative");
  if (!(mass > 0.0)) throw ConfigError("mass must be positive");
  if (!(gravity > 0.0)) throw ConfigError("gravity must be positive");
  if (!(regularization >= 0.0)) throw ConfigError("mpc regularization must be non-negative");
  if (contact_half_extent && !(contact_half_extent->minCoeff() > 0.0)) {
    throw ConfigError("contact half extents must be positive");
  }
}

FallPredicted::FallPredicted(Axis axis, int tick, std::vector<std::string> violated)
  : std::runtime_error([&] {
      std::ostringstream os;
      os << "QP infeasible on the " << (axis == Axis::kX ? "x" : "y") << " axis at tick " << tick;
      if (!violated.empty()) {
        os << ":";
        for (const auto& v : violated) os << ' ' << v;
      }
      return os.str();
    }()),
    axis_(axis),
    tick_(tick),
    violated_(std::move(violated))
{
}

std::string describe(const RowTag& tag)
{
  const char* name = "?";
  switch (tag.kind) {
    case RowKind::kCopUpper:
      name = "cop_upper";
      break;
    case RowKind::kCopLower:
      name = "cop_lower";
      break;
    case RowKind::kFootholdUpper:
      name = "foothold_upper";
      break;
    case RowKind::kFootholdLower:
      name = "foothold_lower";
      break;
    case RowKind::kReachUpper:
      name = "reach_upper";
      break;
    case RowKind::kReachLower:
      name = "reach_lower";
      break;
    case RowKind::kClearance:
      name = "clearance";
      break;
  }
  return std::string(name) + "[" + std::to_string(tag.index) + "]";
}

StageMatrices discretize(const Omega& w, double zdd, double mass, double g, double T)
{
  check_omega(w);
  const double mg = mass * (g + zdd);
  if (!(mg > 0.0)) throw std::domain_error("discretize: mass (g + zdd) must be positive");
  const double beta = w.vrp_denominator() / w.w;
  StageMatrices s;
  s.A(0, 0) = 1.0 + T * beta;
  s.A(0, 2) = -T * beta / mg;
  s.A(0, 3) = -T * beta;
  s.A(1, 0) = w.w * T;
  s.A(1, 1) = 1.0 - w.w * T;
  s.B(2, 0) = T;
  s.B(3, 1) = T;
  return s;
}

StageMatrices discretize_zoh(const Omega& w, double zdd, double mass, double g, double T)
{
  check_omega(w);
  const double mg = mass * (g + zdd);
  if (!(mg > 0.0)) throw std::domain_error("discretize: mass (g + zdd) must be positive");
  const double beta = w.vrp_denominator() / w.w;
  Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
  M(0, 0) = beta;
  M(0, 2) = -beta / mg;
  M(0, 3) = -beta;
  M(1, 0) = w.w;
  M(1, 1) = -w.w;
  M(2, 4) = 1.0;
  M(3, 5) = 1.0;
  const Eigen::Matrix<double, 6, 6> E = (M * T).exp();
  StageMatrices s;
  s.A = E.topLeftCorner<4, 4>();
  s.B = E.topRightCorner<4, 2>();
  return s;
}

VectorXd CondensedSystem::predict(const AxisState& psi0, const VectorXd& inputs) const
{
  return phi_k * psi0.vector() + phi_u1 * inputs;
}

CondensedSystem condense(const std::vector<StageMatrices>& stages)
{
  const Index N = static_cast<Index>(stages.size());
  if (N < 1) throw std::invalid_argument("condense: empty horizon");
  CondensedSystem cs;
  cs.phi_k.resize(4 * N, 4);
  cs.phi_u1 = MatrixXd::Zero(4 * N, 2 * N);
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  for (Index j = 0; j < N; ++j) {
    const StageMatrices& s = stages[static_cast<std::size_t>(j)];
    P = s.A * P;
    cs.phi_k.block<4, 4>(4 * j, 0) = P;
    for (Index i = 0; i < j; ++i) {
      cs.phi_u1.block<4, 2>(4 * j, 2 * i) = s.A * cs.phi_u1.block<4, 2>(4 * (j - 1), 2 * i);
    }
    cs.phi_u1.block<4, 2>(4 * j, 2 * j) = s.B;
  }
  return cs;
}

FootstepSelection footstep_selection(const PhaseTimeline& timeline, int current_tick, int N, int m)
{
  if (N < 1) throw std::invalid_argument("footstep_selection: N must be positive");
  FootstepSelection sel;
  sel.current_foothold = timeline.assigned_foothold(current_tick);
  sel.phi_0 = VectorXd::Zero(N);
  std::vector<int> column_of_tick(static_cast<std::size_t>(N), -1);
  for (int j = 0; j < N; ++j) {
    const int f = timeline.assigned_foothold(current_tick + j + 1);
    const bool landed = f < 2 || timeline.landing_tick(f) <= current_tick;
    if (landed) {
      sel.phi_0(j) = 1.0;
      continue;
    }
    auto it = std::find(sel.previewed.begin(), sel.previewed.end(), f);
    if (it == sel.previewed.end()) {
      sel.previewed.push_back(f);
      it = sel.previewed.end() - 1;
    }
    column_of_tick[static_cast<std::size_t>(j)] = static_cast<int>(it - sel.previewed.begin());
  }
  if (static_cast<int>(sel.previewed.size()) > m) {
    throw ConfigError("horizon of " + std::to_string(N) + " ticks at tick " + std::to_string(current_tick) +
                      " covers " + std::to_string(sel.previewed.size()) + " future steps but only " +
                      std::to_string(m) + " are previewed");
  }
  sel.phi_u2 = MatrixXd::Zero(N, static_cast<Index>(sel.previewed.size()));
  for (int j = 0; j < N; ++j) {
    if (column_of_tick[static_cast<std::size_t>(j)] >= 0) sel.phi_u2(j, column_of_tick[static_cast<std::size_t>(j)]) = 1.0;
  }
  return sel;
}

AxisHorizon build_axis_horizon(const GaitPlan& plan,
                               int tick,
                               const std::vector<Eigen::Vector2d>& footholds,
                               const MpcConfig& cfg,
                               Axis axis)
{
  const auto& tl = plan.timeline;
  const int N = cfg.horizon;
  const int a = static_cast<int>(axis);
  if (footholds.size() != plan.steps.footholds.size()) {
    throw std::invalid_argument("build_axis_horizon: foothold count does not match the plan");
  }

  AxisHorizon hz;
  hz.axis = axis;
  hz.tick = tick;
  hz.period = tl.period();
  hz.cop_half_extent = cfg.contact_half_extent ? (*cfg.contact_half_extent)(a) : plan.steps.foot_half_extent(a);
  hz.selection = footstep_selection(tl, tick, N, cfg.step_adjust ? cfg.previewed_steps : N + 2);

  std::vector<int> column(plan.steps.footholds.size(), -1);
  if (cfg.step_adjust) {
    for (std::size_t c = 0; c < hz.selection.previewed.size(); ++c) {
      column[static_cast<std::size_t>(hz.selection.previewed[c])] = static_cast<int>(c);
    }
  } else {
    hz.selection.phi_u2.resize(N, 0);
    hz.selection.previewed.clear();
  }

  auto ref = [&](int f) {
    FootRef r;
    r.column = column[static_cast<std::size_t>(f)];
    r.value = footholds[static_cast<std::size_t>(f)](a);
    r.nominal = plan.steps.footholds[static_cast<std::size_t>(f)].position(a);
    return r;
  };

  hz.stages.reserve(static_cast<std::size_t>(N));
  for (int j = 1; j <= N; ++j) {
    const int t0 = tick + j - 1;
    const auto disc = cfg.discretization == Discretization::kEuler ? discretize : discretize_zoh;
    hz.stages.push_back(
      disc(plan.vertical.omega_at(t0), plan.vertical.at_tick(t0).zdd, cfg.mass, cfg.gravity, tl.period()));
    const int t = tick + j;
    hz.cop_ref.push_back(plan.refs.cop_at(t)(a));
    hz.dcm_ref.push_back(plan.refs.dcm_at(t)(a));
    const PhaseSegment& seg = tl.segment_at(t);
    hz.assigned.push_back(ref(seg.assigned));
    FootRef fa = ref(seg.foot_a), fb = ref(seg.foot_b);
    if (fb.nominal < fa.nominal) std::swap(fa, fb);
    hz.support_lo.push_back(fa);
    hz.support_hi.push_back(fb);
  }

  // Terminal conditions on the final plan tick once it is inside the horizon.
  const int total = tl.total_ticks();
  if (tick + N >= total) hz.terminal_index = std::max(total - tick, 1);

  for (int f : hz.selection.previewed) {
    hz.previewed_nominal.push_back(plan.steps.footholds[static_cast<std::size_t>(f)].position(a));
    hz.landing_index.push_back(tl.landing_tick(f) - tick);
    if (axis == Axis::kY) {
      hz.swing_support.push_back(ref(f - 1));
      hz.swing_side.push_back(plan.steps.footholds[static_cast<std::size_t>(f)].foot == Foot::kLeft ? 1 : -1);
    }
  }
  return hz;
}

namespace {

/// Affine expression a . Gamma + b.
struct Affine
{
  RowVectorXd a;
  double b = 0.0;
};

class Expressions
{
public:
  Expressions(const CondensedSystem& cs, const AxisHorizon& hz, const AxisState& psi0)
    : n_(hz.num_variables()), nu_(2 * hz.horizon()), s0_(cs.phi_k * psi0.vector()), S_(cs.phi_u1)
  {
  }

  /// Component c (0 xi, 1 x, 2 Hdot, 3 cop) of psi at horizon index j >= 1.
  Affine state(int j, int c) const
  {
    const Index r = 4 * (j - 1) + c;
    Affine e{RowVectorXd::Zero(n_), s0_(r)};
    e.a.head(nu_) = S_.row(r);
    return e;
  }

  Affine foot(const FootRef& f) const
  {
    Affine e{RowVectorXd::Zero(n_), 0.0};
    if (f.column >= 0) {
      e.a(nu_ + f.column) = 1.0;
    } else {
      e.b = f.value;
    }
    return e;
  }

  /// Displacement of a foothold from its planned position.
  Affine shift(const FootRef& f) const
  {
    Affine e = foot(f);
    e.b -= f.nominal;
    return e;
  }

  Affine unit(Index i) const
  {
    Affine e{RowVectorXd::Zero(n_), 0.0};
    e.a(i) = 1.0;
    return e;
  }

  Affine constant(double v) const { return {RowVectorXd::Zero(n_), v}; }

  Index n() const { return n_; }
  Index nu() const { return nu_; }

private:
  Index n_;
  Index nu_;
  VectorXd s0_;
  const MatrixXd& S_;
};

Affine operator-(Affine l, const Affine& r)
{
  l.a -= r.a;
  l.b -= r.b;
  return l;
}

Affine operator+(Affine l, double c)
{
  l.b += c;
  return l;
}

class RowSink
{
public:
  explicit RowSink(Index n) : n_(n) {}

  void add(const Affine& e)
  {
    rows_.push_back(e);
  }

  void into(MatrixXd& M, VectorXd& v) const
  {
    M.resize(static_cast<Index>(rows_.size()), n_);
    v.resize(static_cast<Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      M.row(static_cast<Index>(i)) = rows_[i].a;
      v(static_cast<Index>(i)) = rows_[i].b;
    }
  }

private:
  Index n_;
  std::vector<Affine> rows_;
};

}  // namespace

QpProblem build_cost(const CondensedSystem& cs, const AxisHorizon& hz, const MpcConfig& cfg, const AxisState& psi0)
{
  const int N = hz.horizon();
  if (cs.horizon() != N) throw std::invalid_argument("build_cost: horizon mismatch");
  const Expressions ex(cs, hz, psi0);
  const Index n = ex.n();
  const MpcWeights& w = cfg.weights;

  // Residual rows r_i(Gamma) with weights w_i; J = sum w_i r_i^2.
  MatrixXd M = MatrixXd::Zero(5 * N, n);
  VectorXd b = VectorXd::Zero(5 * N);
  VectorXd wt = VectorXd::Zero(5 * N);
  Index row = 0;
  auto put = [&](const Affine& e, double weight) {
    M.row(row) = e.a;
    b(row) = e.b;
    wt(row) = weight;
    ++row;
  };
  for (int j = 1; j <= N; ++j) {
    const std::size_t k = static_cast<std::size_t>(j - 1);
    const Affine offset = ex.shift(hz.assigned[k]);
    put(ex.unit(2 * (j - 1) + 1), w.cop_rate);
    put(ex.state(j, 2), w.hdot);
    put(ex.unit(2 * (j - 1)), w.hddot);
    put(ex.state(j, 3) - offset + (-hz.cop_ref[k]), w.cop_tracking);
    put(ex.state(j, 0) + (-hz.dcm_ref[k]), w.dcm_tracking);
  }

  QpProblem p(n);
  const MatrixXd WM = wt.asDiagonal() * M;
  p.H = 2.0 * M.transpose() * WM;
  p.H.diagonal().array() += cfg.regularization;
  p.f = 2.0 * WM.transpose() * b;
  return p;
}

std::vector<RowTag> build_constraints(QpProblem& p,
                                      const CondensedSystem& cs,
                                      const AxisHorizon& hz,
                                      const MpcConfig& cfg,
                                      const AxisState& psi0)
{
  const int N = hz.horizon();
  const Expressions ex(cs, hz, psi0);
  if (p.num_variables() != ex.n()) throw std::invalid_argument("build_constraints: problem size mismatch");

  RowSink eq(ex.n());
  if (!cfg.cmp_modulation) {
    for (int i = 0; i < N; ++i) eq.add(ex.unit(2 * i));
  }
  if (hz.terminal_index > 0) {
    const int J = hz.terminal_index;
    eq.add(ex.state(J, 3) - ex.state(J, 0));
    // One tick ahead the CoM is already fixed by the current state.
    if (J > 1) eq.add(ex.state(J, 3) - ex.state(J, 1));
    eq.add(ex.state(J, 2));
    // Hold the rest state past the end of the plan.
    for (int i = J; i < N; ++i) {
      eq.add(ex.unit(2 * i + 1));
      if (cfg.cmp_modulation) eq.add(ex.unit(2 * i));
    }
  } else {
    const std::size_t k = static_cast<std::size_t>(N - 1);
    eq.add(ex.state(N, 0) + (-hz.dcm_ref[k]));
  }

  RowSink in(ex.n());
  std::vector<RowTag> tags;
  auto add = [&](const Affine& e, RowKind kind, int index) {
    in.add(e);
    tags.push_back({kind, index});
  };
  const double h = hz.cop_half_extent;
  for (int j = 1; j <= N; ++j) {
    const std::size_t k = static_cast<std::size_t>(j - 1);
    add(ex.state(j, 3) - ex.foot(hz.support_hi[k]) + (-h), RowKind::kCopUpper, hz.tick + j);
    add(ex.foot(hz.support_lo[k]) - ex.state(j, 3) + (-h), RowKind::kCopLower, hz.tick + j);
  }
  const int a = static_cast<int>(hz.axis);
  const double dev = cfg.foothold_bounds(a);
  for (int c = 0; c < hz.num_footholds(); ++c) {
    const int f = hz.selection.previewed[static_cast<std::size_t>(c)];
    const Affine p_c = ex.unit(ex.nu() + c);
    const double nom = hz.previewed_nominal[static_cast<std::size_t>(c)];
    add(p_c + (-(nom + dev)), RowKind::kFootholdUpper, f);
    add(ex.constant(nom - dev) - p_c, RowKind::kFootholdLower, f);
    const Affine x_land = ex.state(hz.landing_index[static_cast<std::size_t>(c)], 1);
    add(p_c - x_land + (-cfg.reachability), RowKind::kReachUpper, f);
    add(x_land - p_c + (-cfg.reachability), RowKind::kReachLower, f);
    if (hz.axis == Axis::kY) {
      const Affine support = ex.foot(hz.swing_support[static_cast<std::size_t>(c)]);
      if (hz.swing_side[static_cast<std::size_t>(c)] > 0) {
        add(support - p_c + cfg.min_foot_clearance, RowKind::kClearance, f);
      } else {
        add(p_c - support + cfg.min_foot_clearance, RowKind::kClearance, f);
      }
    }
  }

  eq.into(p.C, p.D);
  in.into(p.E, p.F);
  return tags;
}

Controller::Controller(const GaitPlan& plan, MpcConfig cfg) : plan_(&plan), cfg_(std::move(cfg))
{
  cfg_.validate();
}

AxisOutput Controller::solve_axis(int tick, Axis axis, const AxisState& psi0, const std::vector<Eigen::Vector2d>& footholds)
{
  const AxisHorizon hz = build_axis_horizon(*plan_, tick, footholds, cfg_, axis);
  const CondensedSystem cs = condense(hz.stages);
  QpProblem p = build_cost(cs, hz, cfg_, psi0);
  const std::vector<RowTag> tags = build_constraints(p, cs, hz, cfg_, psi0);

  const int N = hz.horizon();
  const int m = hz.num_footholds();
  std::optional<VectorXd> warm;
  auto& prev = previous_[static_cast<std::size_t>(axis)];
  if (prev && prev->hddot.size() == N) {
    VectorXd x(2 * N + m);
    for (int i = 0; i < N; ++i) {
      const int src = std::min(i + 1, N - 1);
      x(2 * i) = prev->hddot(src);
      x(2 * i + 1) = prev->cop_rate(src);
    }
    for (int c = 0; c < m; ++c) {
      const int f = hz.selection.previewed[static_cast<std::size_t>(c)];
      x(2 * N + c) = footholds[static_cast<std::size_t>(f)](static_cast<int>(axis));
      for (std::size_t q = 0; q < prev->foothold_ids.size(); ++q) {
        if (prev->foothold_ids[q] == f) x(2 * N + c) = prev->footholds(static_cast<Index>(q));
      }
    }
    warm = std::move(x);
  }

  const QpSolution s = solver_.solve(p, warm);
  if (s.status != QpStatus::kOptimal) {
    std::vector<std::string> why;
    if (s.status == QpStatus::kMaxIterations) why.emplace_back("iteration-limit");
    if (!s.inconsistent_equalities.empty()) why.emplace_back("terminal-equalities");
    for (int r : s.violated) why.push_back(describe(tags[static_cast<std::size_t>(r)]));
    prev.reset();
    throw FallPredicted(axis, tick, std::move(why));
  }

  AxisOutput out;
  out.hddot.resize(N);
  out.cop_rate.resize(N);
  for (int i = 0; i < N; ++i) {
    out.hddot(i) = s.x(2 * i);
    out.cop_rate(i) = s.x(2 * i + 1);
  }
  out.foothold_ids = hz.selection.previewed;
  out.footholds = s.x.tail(m);
  out.predicted = cs.predict(psi0, s.x.head(2 * N));
  out.status = s.status;
  out.iterations = s.iterations;
  out.cost = s.objective;
  out.residuals = s.residuals;
  prev = out;
  return out;
}

ControlOutput Controller::solve_tick(int tick,
                                     const std::array<AxisState, 2>& state,
                                     const std::vector<Eigen::Vector2d>& footholds)
{
  ControlOutput out;
  out.axes[0] = solve_axis(tick, Axis::kX, state[0], footholds);
  out.axes[1] = solve_axis(tick, Axis::kY, state[1], footholds);
  return out;
}

ControlOutput solve_tick(const std::array<AxisState, 2>& state,
                         const GaitPlan& plan,
                         int tick,
                         const std::vector<Eigen::Vector2d>& footholds,
                         const MpcConfig& cfg)
{
  Controller c(plan, cfg);
  return c.solve_tick(tick, state, footholds);
}

}  // namespace dcmwalk
