#pragma once

// Linear inverted pendulum with a time-varying natural frequency, the
// divergent component of motion (DCM) and the ground reference points that
// drive it (CoP, CMP, VRP).
//
// Horizontal quantities are Eigen::Vector2d in (x, y) order. Angular momentum
// rates are physical (Hdot_x, Hdot_y) unless a function says otherwise.

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <stdexcept>

namespace dcmwalk {

inline constexpr double kGravity = 9.81;

/// Lower bound on the natural frequency; below it the CoM no longer tracks
/// the DCM.
inline constexpr double kOmegaMin = 0.1;

enum class Axis { kX = 0, kY = 1 };

struct ComState
{
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  double z = 0.75;
  double zd = 0.0;
  double zdd = 0.0;
};

/// Natural frequency and its time derivative.
struct Omega
{
  double w = 0.0;
  double wd = 0.0;

  /// Gain of the DCM dynamics, w - wd / w.
  [[nodiscard]] double dcm_gain() const { return w - wd / w; }
  /// w^2 - wd, the denominator of the VRP and CMP relations.
  [[nodiscard]] double vrp_denominator() const { return w * w - wd; }
};

struct CentroidalMomentum
{
  Eigen::Vector2d hdot = Eigen::Vector2d::Zero();
  Eigen::Vector2d hddot = Eigen::Vector2d::Zero();
};

struct GroundPoints
{
  Eigen::Vector2d cop = Eigen::Vector2d::Zero();
  Eigen::Vector2d cmp = Eigen::Vector2d::Zero();
  Eigen::Vector3d vrp = Eigen::Vector3d::Zero();
};

struct Dcm
{
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();
  std::optional<double> xi_z;
};

/// Prescribed vertical CoM motion sampled at one instant.
struct VerticalSample
{
  double z = 0.75;
  double zd = 0.0;
  double zdd = 0.0;
};

using HeightTrajectory = std::function<VerticalSample(double t)>;

/// Inputs held by the plant over one integration step. CoP and momentum rate
/// ramp linearly with the given rates from their values at the step start.
struct PlantInput
{
  Eigen::Vector2d cop = Eigen::Vector2d::Zero();
  Eigen::Vector2d cop_rate = Eigen::Vector2d::Zero();
  Eigen::Vector2d hdot = Eigen::Vector2d::Zero();
  Eigen::Vector2d hddot = Eigen::Vector2d::Zero();
  Eigen::Vector2d force = Eigen::Vector2d::Zero();
  double mass = 90.0;
};

/// omega = sqrt(g / z). Throws std::domain_error unless z > 0 and g > 0.
[[nodiscard]] Omega natural_frequency(double z, double g = kGravity);

/// Throws std::domain_error when w.w <= kOmegaMin or w^2 - wd <= 0.
void check_omega(const Omega& w);

[[nodiscard]] Dcm dcm_from_state(const ComState& s, const Omega& w);
[[nodiscard]] Eigen::Vector2d com_velocity(const Dcm& xi, const ComState& s, const Omega& w);
[[nodiscard]] Eigen::Vector2d dcm_rate(const Dcm& xi, const Eigen::Vector2d& vrp, const Omega& w);

/// CMP from CoP and physical momentum rate (Hdot_x, Hdot_y).
/// Throws std::domain_error when g + zdd <= 0 (free fall) or mass <= 0.
[[nodiscard]] Eigen::Vector2d cmp_from_cop(const Eigen::Vector2d& cop,
                                           const Eigen::Vector2d& hdot,
                                           double mass,
                                           double zdd,
                                           double g = kGravity);

/// VRP above the CMP at height g / (w^2 - wd). Throws std::domain_error
/// when the denominator is not positive.
[[nodiscard]] Eigen::Vector3d vrp_from_cmp(const Eigen::Vector2d& cmp, const Omega& w, double g = kGravity);

/// Per-axis scalar momentum state used by the predictive controller: Hdot_y
/// on the x axis, -Hdot_x on the y axis. With this mapping the CMP offset is
/// +state / (m (g + zdd)) on both axes.
[[nodiscard]] inline double axis_momentum(const Eigen::Vector2d& hdot, Axis a)
{
  return a == Axis::kX ? hdot.y() : -hdot.x();
}

/// Inverse of axis_momentum: physical (Hdot_x, Hdot_y) from the two axis states.
[[nodiscard]] inline Eigen::Vector2d physical_momentum(double x_axis_state, double y_axis_state)
{
  return {-y_axis_state, x_axis_state};
}

/// One RK4 step of the horizontal pendulum about the CMP, started at time t.
/// Horizontal acceleration is g / z(t) * (x - cmp) + force / mass; the vertical
/// components of the result are read from the prescribed trajectory at t + dt.
[[nodiscard]] ComState integrate_plant(const ComState& s,
                                       double t,
                                       const PlantInput& in,
                                       double dt,
                                       const HeightTrajectory& height,
                                       double g = kGravity);

/// Constant-height convenience overload with held CoP and momentum rate.
[[nodiscard]] ComState integrate_plant(const ComState& s,
                                       const Eigen::Vector2d& cop,
                                       const Eigen::Vector2d& hdot,
                                       double mass,
                                       double dt,
                                       double g = kGravity);

}  // namespace dcmwalk
