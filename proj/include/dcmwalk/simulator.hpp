#pragma once

// Closed-loop walking simulation: the pendulum plant integrated at a fine
// inner step, the predictive controller sampled every control period with
// zero-order hold, push disturbances on the CoM, and fall detection.

#include "dcmwalk/gait_plan.hpp"
#include "dcmwalk/lip_model.hpp"
#include "dcmwalk/mpc.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dcmwalk {

/// Which authorities the controller may use besides the CoP.
enum class ControlMode { kCopOnly, kCopStep, kCopStepCmp, kCopCmp };

[[nodiscard]] const char* to_string(ControlMode m);
/// Accepts "cop-only", "cop+step", "cop+step+cmp", "cop+cmp".
[[nodiscard]] std::optional<ControlMode> parse_mode(const std::string& s);
void apply_mode(MpcConfig& cfg, ControlMode m);

struct PushEvent
{
  Eigen::Vector2d force = Eigen::Vector2d::Zero();
  double start = 0.0;
  double duration = 0.1;
};

struct Scenario
{
  GaitParams gait;
  std::vector<HeightWaypoint> vertical{{0.0, 0.75}};
  MpcConfig mpc;
  std::vector<PushEvent> pushes;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  /// Start of envelope test pushes; defaults to the middle of the first
  /// single support phase.
  std::optional<double> envelope_push_start;
  /// Fall rule (c) fires when |CoM - CoP| exceeds this multiple of l.
  double com_cop_factor = 1.5;
};

/// Throws ConfigError for inconsistent scenarios.
void validate(const Scenario& s, const GaitPlan& plan);
[[nodiscard]] GaitPlan build_gait(const Scenario& s);
[[nodiscard]] double default_push_start(const GaitPlan& plan);

struct SimSample
{
  double t = 0.0;
  ComState com;
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();
  Eigen::Vector2d cop = Eigen::Vector2d::Zero();
  Eigen::Vector2d cmp = Eigen::Vector2d::Zero();
  Eigen::Vector2d hdot = Eigen::Vector2d::Zero();
  Eigen::Vector2d hddot = Eigen::Vector2d::Zero();
  /// CoP limits of the feet in contact.
  Eigen::Vector2d support_lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d support_hi = Eigen::Vector2d::Zero();
  int foothold_id = 0;
  bool push_active = false;
};

struct ControlRecord
{
  int tick = 0;
  std::array<QpStatus, 2> status{QpStatus::kOptimal, QpStatus::kOptimal};
  std::array<double, 2> cost{0.0, 0.0};
  std::array<int, 2> iterations{0, 0};
  std::vector<Eigen::Vector2d> footholds;
};

enum class Outcome { kCompleted, kFell };

struct FallInfo
{
  double t = 0.0;
  /// "qp-infeasible", "dcm-divergence" or "com-cop-distance".
  std::string rule;
  std::string detail;
};

struct TerminalResiduals
{
  double cop_xi = 0.0;
  double cop_com = 0.0;
  double hdot = 0.0;
};

struct SimLog
{
  std::vector<SimSample> samples;
  std::vector<ControlRecord> controls;
  std::vector<Foothold> footholds;
  Outcome outcome = Outcome::kCompleted;
  std::optional<FallInfo> fall;
  TerminalResiduals terminal;
  double peak_hdot = 0.0;
  double max_foothold_deviation = 0.0;
  double max_dcm_error = 0.0;
};

struct RunOptions
{
  bool record_samples = true;
};

[[nodiscard]] SimLog run(const Scenario& s, const RunOptions& opt = {});
[[nodiscard]] SimLog run(const Scenario& s, const GaitPlan& plan, const RunOptions& opt = {});

/// Inputs of the fall rules at one instant.
struct FallCheck
{
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();
  Eigen::Vector2d com = Eigen::Vector2d::Zero();
  Eigen::Vector2d cop = Eigen::Vector2d::Zero();
  /// Regions the DCM may be captured in: the support box and the reachable
  /// box of the next foothold.
  std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> regions;
  /// Time the DCM has already spent outside every region.
  double time_outside = 0.0;
  double step_duration = 0.0;
  double reachability = 0.4;
  double com_cop_factor = 1.5;
};

/// Distance from p to the nearest box; 0 inside.
[[nodiscard]] double distance_to_regions(const Eigen::Vector2d& p,
                                         const std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>>& regions);

/// Rules (b) and (c); rule (a) is raised by the controller itself.
[[nodiscard]] std::optional<std::string> detect_fall(const FallCheck& c);

struct EnvelopeTrial
{
  double magnitude = 0.0;
  bool recovered = false;
};

struct RecoveryEnvelope
{
  Eigen::Vector2d direction = Eigen::Vector2d::UnitX();
  double duration = 0.1;
  double magnitude = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double tolerance = 5.0;
  bool unbounded = false;
  std::vector<EnvelopeTrial> trace;
  int bisection_runs = 0;
  int monotonicity_violations = 0;
};

struct EnvelopeOptions
{
  double bracket_lo = 0.0;
  double bracket_hi = 500.0;
  double tolerance = 5.0;
  double cap = 4000.0;
  int spot_checks = 2;
};

[[nodiscard]] RecoveryEnvelope max_recoverable_push(const Scenario& s,
                                                    const Eigen::Vector2d& direction,
                                                    double duration,
                                                    const EnvelopeOptions& opt = {});

struct ComparisonRow
{
  ControlMode mode = ControlMode::kCopStep;
  Outcome outcome = Outcome::kCompleted;
  RecoveryEnvelope forward;
  RecoveryEnvelope lateral;
  double peak_hdot = 0.0;
  double max_foothold_deviation = 0.0;
};

struct CompareOptions
{
  double duration = 0.1;
  EnvelopeOptions envelope;
  int jobs = 1;
};

/// Runs the scenario and both envelope searches for each mode. Rows follow
/// the order of `modes`.
[[nodiscard]] std::vector<ComparisonRow> compare_controllers(const Scenario& s,
                                                             const std::vector<ControlMode>& modes,
                                                             const CompareOptions& opt = {});

}  // namespace dcmwalk
