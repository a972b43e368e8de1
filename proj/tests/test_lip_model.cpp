#include "dcmwalk/lip_model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dcmwalk;

TEST_CASE("natural frequency")
{
  CHECK(natural_frequency(0.75, 9.81).w == doctest::Approx(3.6166).epsilon(1e-4));
  CHECK(natural_frequency(9.81, 9.81).w == doctest::Approx(1.0));
  CHECK(natural_frequency(0.85, 9.81).w == doctest::Approx(3.3973).epsilon(1e-4));
  CHECK(natural_frequency(0.75).wd == 0.0);
  CHECK_THROWS_AS((void)natural_frequency(0.0, 9.81), std::domain_error);
  CHECK_THROWS_AS((void)natural_frequency(0.75, -1.0), std::domain_error);
}

TEST_CASE("omega validity")
{
  CHECK_NOTHROW(check_omega({3.6, 0.0}));
  CHECK_THROWS_AS(check_omega({0.05, 0.0}), std::domain_error);
  CHECK_THROWS_AS(check_omega({2.0, 4.5}), std::domain_error);
}

TEST_CASE("dcm and com velocity")
{
  const Omega w{3.6166, 0.0};
  ComState rest;
  CHECK(dcm_from_state(rest, w).xi.norm() == 0.0);

  ComState s;
  s.x = {0.1, 0.0};
  s.v = {0.36166, 0.0};
  CHECK(dcm_from_state(s, w).xi.x() == doctest::Approx(0.2));

  Dcm xi{{0.2, -0.1}, std::nullopt};
  ComState c;
  c.x = {0.1, -0.1};
  const Eigen::Vector2d v = com_velocity(xi, c, w);
  CHECK(v.x() == doctest::Approx(0.36166));
  CHECK(v.y() == 0.0);
  CHECK(v.x() > 0.0);
}

TEST_CASE("dcm/com round trip is exact for random states")
{
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> wdist(kOmegaMin * 1.01, 10.0);
  for (int i = 0; i < 1000; ++i) {
    ComState s;
    s.x = {u(rng), u(rng)};
    s.v = {u(rng), u(rng)};
    const Omega w{wdist(rng), u(rng)};
    const Eigen::Vector2d v = com_velocity(dcm_from_state(s, w), s, w);
    CHECK((v - s.v).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + s.v.norm() * w.w));
  }
}

TEST_CASE("dcm rate")
{
  const Omega w{3.6166, 0.0};
  Dcm xi{{0.3, 0.1}, std::nullopt};
  const Eigen::Vector2d rate = dcm_rate(xi, {0.1, 0.1}, w);
  CHECK(rate.x() == doctest::Approx(0.72332));
  CHECK(rate.y() == 0.0);

  // omega_dot lowers the gain by omega_dot / omega.
  const Omega wv{3.6166, 1.0};
  const Eigen::Vector2d slower = dcm_rate(xi, {0.1, 0.1}, wv);
  CHECK(slower.x() == doctest::Approx(0.72332 - 1.0 / 3.6166 * 0.2));

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d p{u(rng), u(rng)};
    CHECK(dcm_rate(Dcm{p, std::nullopt}, p, w).norm() == 0.0);
    const Eigen::Vector2d q = p + Eigen::Vector2d(1e-3, 0.0);
    CHECK(dcm_rate(Dcm{q, std::nullopt}, p, w).norm() > 0.0);
  }
}

TEST_CASE("cmp from cop")
{
  const Eigen::Vector2d cop{0.1, 0.02};
  CHECK((cmp_from_cop(cop, Eigen::Vector2d::Zero(), 90.0, 0.0) - cop).norm() == 0.0);

  const Eigen::Vector2d cmp = cmp_from_cop(cop, {0.0, 70.0}, 90.0, 0.0, 9.81);
  CHECK(cmp.x() == doctest::Approx(0.1793).epsilon(1e-3));
  CHECK(cmp.y() == doctest::Approx(0.02));

  const Eigen::Vector2d h{12.0, -30.0};
  const Eigen::Vector2d plus = cmp_from_cop(cop, h, 90.0, 0.5) - cop;
  const Eigen::Vector2d minus = cmp_from_cop(cop, -h, 90.0, 0.5) - cop;
  CHECK((plus + minus).norm() == doctest::Approx(0.0).epsilon(1e-15));

  // Hdot_x moves the CMP in -y.
  CHECK(cmp_from_cop(cop, {10.0, 0.0}, 90.0, 0.0).y() < cop.y());
  CHECK_THROWS_AS((void)cmp_from_cop(cop, h, 90.0, -9.81), std::domain_error);
}

TEST_CASE("vrp from cmp")
{
  const Eigen::Vector2d cmp{0.3, -0.1};
  const Eigen::Vector3d vrp = vrp_from_cmp(cmp, {3.6166, 0.0});
  CHECK(vrp.z() == doctest::Approx(0.75).epsilon(1e-4));
  CHECK(vrp.x() == cmp.x());
  CHECK(vrp.y() == cmp.y());
  CHECK(vrp_from_cmp(cmp, {3.6166, 0.5}).z() > vrp.z());
  CHECK_THROWS_AS((void)vrp_from_cmp(cmp, {1.0, 1.0}), std::domain_error);

  const Omega w = natural_frequency(0.85);
  CHECK(vrp_from_cmp(cmp, w).z() == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("plant equilibrium")
{
  ComState s;
  s.x = {0.2, -0.05};
  const ComState out = integrate_plant(s, s.x, Eigen::Vector2d::Zero(), 90.0, 1e-3);
  CHECK((out.x - s.x).norm() == 0.0);
  CHECK(out.v.norm() == 0.0);
}

namespace {

// Hyperbolic closed form of the LIPM about a fixed CoP.
Eigen::Vector2d lipm_closed_form(const ComState& s0, const Eigen::Vector2d& cop, double w, double t)
{
  return cop + (s0.x - cop) * std::cosh(w * t) + s0.v / w * std::sinh(w * t);
}

double max_closed_form_error(double dt, double horizon)
{
  ComState s;
  s.z = 0.75;
  s.x = {0.05, -0.02};
  s.v = {0.2, 0.1};
  const Eigen::Vector2d cop{0.0, 0.01};
  const double w = natural_frequency(s.z).w;
  const ComState s0 = s;
  double worst = 0.0;
  const int steps = static_cast<int>(std::lround(horizon / dt));
  for (int i = 1; i <= steps; ++i) {
    s = integrate_plant(s, cop, Eigen::Vector2d::Zero(), 90.0, dt);
    worst = std::max(worst, (s.x - lipm_closed_form(s0, cop, w, i * dt)).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace

TEST_CASE("plant matches the hyperbolic closed form")
{
  CHECK(max_closed_form_error(1e-3, 1.0) < 1e-6);
  CHECK(max_closed_form_error(1e-4, 1.0) < 1e-8);
}

TEST_CASE("integrated plant DCM obeys the DCM rate law")
{
  ComState s;
  s.x = {0.02, 0.0};
  s.v = {0.1, -0.05};
  const Eigen::Vector2d cop{0.0, 0.0};
  const Omega w = natural_frequency(s.z);
  for (double dt : {1e-3, 1e-4}) {
    ComState a = s;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const ComState b = integrate_plant(a, cop, Eigen::Vector2d::Zero(), 90.0, dt);
      const Eigen::Vector2d fd = (dcm_from_state(b, w).xi - dcm_from_state(a, w).xi) / dt;
      const Eigen::Vector2d law = dcm_rate(dcm_from_state(a, w), cop, w);
      worst = std::max(worst, (fd - law).lpNorm<Eigen::Infinity>());
      a = b;
    }
    // First-order in dt.
    CHECK(worst < 5.0 * dt);
  }
}

TEST_CASE("plant with momentum pivots about the CMP")
{
  ComState s;
  const Eigen::Vector2d hdot{-20.0, 35.0};
  const Eigen::Vector2d cmp = cmp_from_cop(Eigen::Vector2d::Zero(), hdot, 90.0, 0.0);
  s.x = cmp;
  const ComState out = integrate_plant(s, Eigen::Vector2d::Zero(), hdot, 90.0, 1e-3);
  CHECK(out.v.norm() < 1e-14);
}
