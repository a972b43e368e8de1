#pragma once

// Per-axis DCM model predictive controller. Each control tick and each
// horizontal axis gets one condensed QP over
//
//   Gamma_U = [Hddot_0, copdot_0, ..., Hddot_{N-1}, copdot_{N-1}, p_1 .. p_m]
//
// with the state psi = [xi, x, Hdot, cop] propagated by the time-varying
// discrete DCM dynamics and p_j the positions of the previewed footholds.

#include "dcmwalk/gait_plan.hpp"
#include "dcmwalk/lip_model.hpp"
#include "dcmwalk/qp_solver.hpp"

#include <Eigen/Core>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcmwalk {

/// psi_k for one axis. hdot uses the per-axis mapping of axis_momentum().
struct AxisState
{
  double xi = 0.0;
  double x = 0.0;
  double hdot = 0.0;
  double cop = 0.0;

  [[nodiscard]] Eigen::Vector4d vector() const { return {xi, x, hdot, cop}; }
  static AxisState from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

struct StageMatrices
{
  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
};

struct CondensedSystem
{
  Eigen::MatrixXd phi_k;   // 4N x 4
  Eigen::MatrixXd phi_u1;  // 4N x 2N

  [[nodiscard]] int horizon() const { return static_cast<int>(phi_k.rows() / 4); }
  /// Stacked psi_{k+1} .. psi_{k+N}.
  [[nodiscard]] Eigen::VectorXd predict(const AxisState& psi0, const Eigen::VectorXd& inputs) const;
};

/// Foothold assignment of the horizon ticks k+1 .. k+N.
struct FootstepSelection
{
  Eigen::VectorXd phi_0;   // N, ticks on the current fixed foothold
  Eigen::MatrixXd phi_u2;  // N x m', ticks on previewed step j
  int current_foothold = 0;
  /// Foothold index of each Phi_u2 column, in step order.
  std::vector<int> previewed;
};

struct MpcWeights
{
  double cop_rate = 1e-1;      // alpha_1
  double hdot = 1e-3;          // alpha_2
  double hddot = 1e-5;         // alpha_3
  double cop_tracking = 1.0;   // alpha_4
  double dcm_tracking = 10.0;  // alpha_5
};

/// How the per-tick prediction model is obtained from the continuous DCM
/// dynamics: forward Euler, or exact integration with piecewise-constant
/// Hddot and copdot (zero-order hold) at the tick's omega and zdd.
enum class Discretization { kEuler, kZeroOrderHold };

struct MpcConfig
{
  MpcWeights weights;
  Discretization discretization = Discretization::kZeroOrderHold;
  int horizon = 40;
  int previewed_steps = 3;
  /// Foothold-to-CoM reachability bound l (m), applied per axis.
  double reachability = 0.4;
  /// Largest deviation of a previewed foothold from its planned position, (x, y).
  Eigen::Vector2d foothold_bounds{0.15, 0.10};
  double min_foot_clearance = 0.16;
  bool step_adjust = true;
  bool cmp_modulation = true;
  double mass = 90.0;
  double gravity = kGravity;
  double regularization = 1e-9;
  /// CoP limits when the usable contact surface is smaller than the sole.
  std::optional<Eigen::Vector2d> contact_half_extent;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Error raised when a tick's QP has no feasible solution.
class FallPredicted : public std::runtime_error
{
public:
  FallPredicted(Axis axis, int tick, std::vector<std::string> violated);

  [[nodiscard]] Axis axis() const { return axis_; }
  [[nodiscard]] int tick() const { return tick_; }
  [[nodiscard]] const std::vector<std::string>& violated() const { return violated_; }

private:
  Axis axis_;
  int tick_;
  std::vector<std::string> violated_;
};

/// Position of a foothold along one axis: a fixed value, or decision column
/// `column` of the foothold block.
struct FootRef
{
  int column = -1;
  double value = 0.0;
  double nominal = 0.0;
};

/// Per-axis data of one horizon, ticks k+1 .. k+N.
struct AxisHorizon
{
  Axis axis = Axis::kX;
  int tick = 0;
  double period = 0.06;
  std::vector<StageMatrices> stages;
  std::vector<double> cop_ref;
  std::vector<double> dcm_ref;
  std::vector<FootRef> assigned;
  std::vector<FootRef> support_lo;
  std::vector<FootRef> support_hi;
  double cop_half_extent = 0.1;
  /// Horizon index (1-based) of the final plan tick, where cop = xi = x and
  /// Hdot = 0 are imposed, when the plan ends inside the horizon; 0 selects
  /// the DCM surrogate xi_N = xi_ref_N instead.
  int terminal_index = 0;
  FootstepSelection selection;
  /// Per foothold column: nominal position, horizon index (1-based) of the
  /// landing tick, and the foot it swings past.
  std::vector<double> previewed_nominal;
  std::vector<int> landing_index;
  std::vector<FootRef> swing_support;
  std::vector<int> swing_side;  // +1 must stay above swing_support, -1 below

  [[nodiscard]] int horizon() const { return static_cast<int>(stages.size()); }
  [[nodiscard]] int num_footholds() const { return static_cast<int>(previewed_nominal.size()); }
  [[nodiscard]] int num_variables() const { return 2 * horizon() + num_footholds(); }
};

/// Inequality row tags, used to report why a QP is infeasible.
enum class RowKind { kCopUpper, kCopLower, kFootholdUpper, kFootholdLower, kReachUpper, kReachLower, kClearance };

struct RowTag
{
  RowKind kind;
  int index;
};

[[nodiscard]] std::string describe(const RowTag& tag);

/// Throws std::domain_error for omega <= kOmegaMin, omega^2 <= omega_dot or
/// mass (g + zdd) <= 0.
[[nodiscard]] StageMatrices discretize(const Omega& w, double zdd, double mass, double g, double T);
/// Zero-order-hold counterpart of discretize(), same preconditions.
[[nodiscard]] StageMatrices discretize_zoh(const Omega& w, double zdd, double mass, double g, double T);

[[nodiscard]] CondensedSystem condense(const std::vector<StageMatrices>& stages);

/// Throws ConfigError when the horizon reaches more than m future steps.
[[nodiscard]] FootstepSelection footstep_selection(const PhaseTimeline& timeline, int current_tick, int N, int m);

/// Horizon data for one axis. `footholds` are the current positions (landed
/// footholds as placed, future ones as last planned).
[[nodiscard]] AxisHorizon build_axis_horizon(const GaitPlan& plan,
                                             int tick,
                                             const std::vector<Eigen::Vector2d>& footholds,
                                             const MpcConfig& cfg,
                                             Axis axis);

/// H and f of the tracking cost; C, D, E, F left empty.
[[nodiscard]] QpProblem build_cost(const CondensedSystem& cs,
                                   const AxisHorizon& hz,
                                   const MpcConfig& cfg,
                                   const AxisState& psi0);

/// Adds the terminal, support-polygon, foothold and reachability constraints
/// to p. Returns one tag per inequality row.
std::vector<RowTag> build_constraints(QpProblem& p,
                                      const CondensedSystem& cs,
                                      const AxisHorizon& hz,
                                      const MpcConfig& cfg,
                                      const AxisState& psi0);

struct AxisOutput
{
  Eigen::VectorXd hddot;     // N
  Eigen::VectorXd cop_rate;  // N
  std::vector<int> foothold_ids;
  Eigen::VectorXd footholds;
  Eigen::VectorXd predicted;  // 4N, stacked psi
  QpStatus status = QpStatus::kOptimal;
  int iterations = 0;
  double cost = 0.0;
  KktResiduals residuals;
};

struct ControlOutput
{
  std::array<AxisOutput, 2> axes;

  [[nodiscard]] double hddot0(Axis a) const { return axes[static_cast<int>(a)].hddot(0); }
  [[nodiscard]] double cop_rate0(Axis a) const { return axes[static_cast<int>(a)].cop_rate(0); }
};

/// Receding-horizon controller for one gait plan. Keeps the previous
/// solution of each axis to warm-start the next tick.
class Controller
{
public:
  Controller(const GaitPlan& plan, MpcConfig cfg);

  /// Throws FallPredicted when an axis QP is infeasible.
  [[nodiscard]] ControlOutput solve_tick(int tick,
                                         const std::array<AxisState, 2>& state,
                                         const std::vector<Eigen::Vector2d>& footholds);

  [[nodiscard]] const MpcConfig& config() const { return cfg_; }
  [[nodiscard]] const GaitPlan& plan() const { return *plan_; }

private:
  AxisOutput solve_axis(int tick, Axis axis, const AxisState& psi0, const std::vector<Eigen::Vector2d>& footholds);

  const GaitPlan* plan_;
  MpcConfig cfg_;
  QpSolver solver_;
  std::array<std::optional<AxisOutput>, 2> previous_;
};

/// Stateless single-tick solve.
[[nodiscard]] ControlOutput solve_tick(const std::array<AxisState, 2>& state,
                                       const GaitPlan& plan,
                                       int tick,
                                       const std::vector<Eigen::Vector2d>& footholds,
                                       const MpcConfig& cfg);

}  // namespace dcmwalk
