#pragma once

// Nominal walking plan: footholds, the double/single support timeline, the
// prescribed CoM height with the natural frequency it implies, and the CoP
// and DCM reference trajectories tracked by the controller.

#include "dcmwalk/errors.hpp"
#include "dcmwalk/lip_model.hpp"

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace dcmwalk {

enum class Foot { kLeft, kRight };
enum class PhaseKind { kInitialDsp, kDsp, kSsp, kFinalDsp };

[[nodiscard]] const char* to_string(PhaseKind k);

struct Foothold
{
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Foot foot = Foot::kLeft;
};

/// Footholds in contact order. Entries 0 and 1 are the initial stance (0 is
/// the first swing foot, 1 the first support foot); entry j + 1 is where
/// step j lands, so single support phase j stands on entry j.
struct FootstepPlan
{
  std::vector<Foothold> footholds;
  double step_length = 0.0;
  double step_width = 0.0;
  /// Half-extents of the rectangular sole, (sagittal, lateral).
  Eigen::Vector2d foot_half_extent{0.115, 0.065};

  [[nodiscard]] int step_count() const { return static_cast<int>(footholds.size()) - 2; }
};

struct PhaseSegment
{
  PhaseKind kind = PhaseKind::kInitialDsp;
  int first_tick = 0;
  int ticks = 0;
  /// Footholds in contact; equal for single support.
  int foot_a = 0;
  int foot_b = 0;
  /// Foothold that supports the upcoming single support phase (the last
  /// landed one during the final double support).
  int assigned = 0;

  [[nodiscard]] int end_tick() const { return first_tick + ticks; }
};

class PhaseTimeline
{
public:
  PhaseTimeline() = default;
  PhaseTimeline(std::vector<PhaseSegment> segments, double period);

  [[nodiscard]] double period() const { return period_; }
  [[nodiscard]] const std::vector<PhaseSegment>& segments() const { return segments_; }
  [[nodiscard]] int total_ticks() const { return total_ticks_; }
  [[nodiscard]] double total_duration() const { return total_ticks_ * period_; }

  /// Segment containing tick i under [first, end) ownership. Ticks at or past
  /// the end map to the final segment, ticks before 0 to the first.
  [[nodiscard]] const PhaseSegment& segment_at(int tick) const;
  [[nodiscard]] int segment_index_at(int tick) const;

  /// Tick at which foothold f touches down; 0 for the initial stance.
  [[nodiscard]] int landing_tick(int foothold) const;

  /// Foothold index assigned to a tick: the current support foot during
  /// single support, the upcoming support foot during double support.
  [[nodiscard]] int assigned_foothold(int tick) const { return segment_at(tick).assigned; }

  /// First tick of single support phase j (1-based).
  [[nodiscard]] int ssp_first_tick(int j) const;

private:
  std::vector<PhaseSegment> segments_;
  std::vector<int> landing_;
  double period_ = 0.06;
  int total_ticks_ = 0;
};

struct PhaseDurations
{
  double initial_dsp = 1.0;
  double dsp = 0.2;
  double ssp = 0.6;
  double final_dsp = 2.0;
};

struct GaitParams
{
  int step_count = 3;
  double step_length = 0.3;
  double step_width = 0.2;
  PhaseDurations durations;
  double period = 0.05;
  Eigen::Vector2d foot_half_extent{0.115, 0.065};
  Foot first_swing = Foot::kLeft;
};

/// Lays out alternating footholds and the phase timeline. Throws ConfigError
/// when a duration is not a positive multiple of the period or step_count < 1.
[[nodiscard]] std::pair<FootstepPlan, PhaseTimeline> build_plan(const GaitParams& p);

struct HeightWaypoint
{
  double t = 0.0;
  double z = 0.75;
};

/// Prescribed CoM height. z(t) is a shape-preserving piecewise cubic through
/// the waypoints with zero slope at both ends, so a flat pair of waypoints
/// gives a flat segment. omega uses the quasi-static rule sqrt(g / z) and
/// omega_dot is the centered difference of omega over one control period.
class VerticalProfile
{
public:
  VerticalProfile() = default;

  [[nodiscard]] VerticalSample sample(double t) const;
  [[nodiscard]] HeightTrajectory trajectory() const;

  /// Per-tick values; ticks past the plan end hold the final value with
  /// zero rates.
  [[nodiscard]] Omega omega_at(int tick) const;
  [[nodiscard]] VerticalSample at_tick(int tick) const;
  [[nodiscard]] double omega_max() const;
  [[nodiscard]] int ticks() const { return static_cast<int>(omega_.size()); }
  [[nodiscard]] double gravity() const { return g_; }

private:
  friend VerticalProfile build_vertical_profile(const std::vector<HeightWaypoint>&, const PhaseTimeline&, double);

  std::vector<double> t_;
  std::vector<double> z_;
  std::vector<double> slope_;
  std::vector<VerticalSample> samples_;
  std::vector<Omega> omega_;
  double period_ = 0.06;
  double g_ = kGravity;
};

/// Throws ConfigError for malformed waypoints and when the profile would
/// violate omega > kOmegaMin, omega^2 - omega_dot > 0 or g + zdd > 0.
[[nodiscard]] VerticalProfile build_vertical_profile(const std::vector<HeightWaypoint>& waypoints,
                                                     const PhaseTimeline& timeline,
                                                     double g = kGravity);

struct ReferenceTrajectories
{
  std::vector<Eigen::Vector2d> cop;
  std::vector<Eigen::Vector2d> dcm;

  /// Clamped lookup; the plan is held past its final tick.
  [[nodiscard]] const Eigen::Vector2d& cop_at(int tick) const;
  [[nodiscard]] const Eigen::Vector2d& dcm_at(int tick) const;
};

/// CoP reference for ticks 0..total_ticks: linear shifts between the stance
/// midpoint and the support feet during double support, constant in single
/// support.
[[nodiscard]] std::vector<Eigen::Vector2d> build_reference_cop(const FootstepPlan& plan,
                                                               const PhaseTimeline& timeline);

/// DCM reference by backward recursion of the discrete zero-momentum DCM
/// dynamics from xi_N = cop_N.
[[nodiscard]] std::vector<Eigen::Vector2d> build_reference_dcm(const std::vector<Eigen::Vector2d>& cop_ref,
                                                               const VerticalProfile& vertical,
                                                               const PhaseTimeline& timeline);

struct GaitPlan
{
  FootstepPlan steps;
  PhaseTimeline timeline;
  VerticalProfile vertical;
  ReferenceTrajectories refs;
};

[[nodiscard]] GaitPlan build_gait(const GaitParams& p, const std::vector<HeightWaypoint>& waypoints,
                                  double g = kGravity);

/// Per-axis support interval (lo, hi) of the feet in contact at a tick.
[[nodiscard]] std::pair<Eigen::Vector2d, Eigen::Vector2d> support_box(const std::vector<Foothold>& footholds,
                                                                      const PhaseSegment& seg,
                                                                      const Eigen::Vector2d& half_extent);

}  // namespace dcmwalk
