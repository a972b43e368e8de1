#include "dcmwalk/lip_model.hpp"

#include <cmath>
#include <string>

namespace dcmwalk {

Omega natural_frequency(double z, double g)
{
  if (!(z > 0.0) || !(g > 0.0)) {
    throw std::domain_error("natural_frequency: height and gravity must be positive (z=" + std::to_string(z) +
                            ", g=" + std::to_string(g) + ")");
  }
  return Omega{std::sqrt(g / z), 0.0};
}

void check_omega(const Omega& w)
{
  if (!(w.w > kOmegaMin)) {
    throw std::domain_error("omega " + std::to_string(w.w) + " is below the lower bound");
  }
  if (!(w.vrp_denominator() > 0.0)) {
    throw std::domain_error("omega^2 - omega_dot must be positive");
  }
}

Dcm dcm_from_state(const ComState& s, const Omega& w)
{
  return Dcm{s.x + s.v / w.w, std::nullopt};
}

Eigen::Vector2d com_velocity(const Dcm& xi, const ComState& s, const Omega& w)
{
  return w.w * (xi.xi - s.x);
}

Eigen::Vector2d dcm_rate(const Dcm& xi, const Eigen::Vector2d& vrp, const Omega& w)
{
  return w.dcm_gain() * (xi.xi - vrp);
}

Eigen::Vector2d cmp_from_cop(const Eigen::Vector2d& cop, const Eigen::Vector2d& hdot, double mass, double zdd, double g)
{
  const double support = mass * (g + zdd);
  if (!(mass > 0.0) || !(g + zdd > 0.0)) {
    throw std::domain_error("cmp_from_cop: vertical support force must be positive (free fall)");
  }
  return cop + Eigen::Vector2d(hdot.y(), -hdot.x()) / support;
}

Eigen::Vector3d vrp_from_cmp(const Eigen::Vector2d& cmp, const Omega& w, double g)
{
  const double den = w.vrp_denominator();
  if (!(den > 0.0)) {
    throw std::domain_error("vrp_from_cmp: omega^2 - omega_dot must be positive");
  }
  return {cmp.x(), cmp.y(), g / den};
}

namespace {

using State4 = Eigen::Vector4d;  // x, y, vx, vy

State4 plant_rhs(const State4& q, double tau, double t0, const PlantInput& in, const HeightTrajectory& height, double g)
{
  const VerticalSample vs = height(t0 + tau);
  const Eigen::Vector2d cop = in.cop + tau * in.cop_rate;
  const Eigen::Vector2d hdot = in.hdot + tau * in.hddot;
  const Eigen::Vector2d cmp = cmp_from_cop(cop, hdot, in.mass, vs.zdd, g);
  const double w2 = g / vs.z;
  State4 dq;
  dq.head<2>() = q.tail<2>();
  dq.tail<2>() = w2 * (q.head<2>() - cmp) + in.force / in.mass;
  return dq;
}

}  // namespace

ComState integrate_plant(const ComState& s, double t, const PlantInput& in, double dt, const HeightTrajectory& height,
                         double g)
{
  State4 q;
  q << s.x, s.v;
  const State4 k1 = plant_rhs(q, 0.0, t, in, height, g);
  const State4 k2 = plant_rhs(q + 0.5 * dt * k1, 0.5 * dt, t, in, height, g);
  const State4 k3 = plant_rhs(q + 0.5 * dt * k2, 0.5 * dt, t, in, height, g);
  const State4 k4 = plant_rhs(q + dt * k3, dt, t, in, height, g);
  q += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  const VerticalSample vs = height(t + dt);
  ComState out;
  out.x = q.head<2>();
  out.v = q.tail<2>();
  out.z = vs.z;
  out.zd = vs.zd;
  out.zdd = vs.zdd;
  return out;
}

ComState integrate_plant(const ComState& s, const Eigen::Vector2d& cop, const Eigen::Vector2d& hdot, double mass,
                         double dt, double g)
{
  const VerticalSample fixed{s.z, 0.0, 0.0};
  PlantInput in;
  in.cop = cop;
  in.hdot = hdot;
  in.mass = mass;
  return integrate_plant(
    s, 0.0, in, dt, [fixed](double) { return fixed; }, g);
}

}  // namespace dcmwalk
