#include "dcmwalk/gait_plan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcmwalk {

const char* to_string(PhaseKind k)
{
  switch (k) {
    case PhaseKind::kInitialDsp:
      return "initial-dsp";
    case PhaseKind::kDsp:
      return "dsp";
    case PhaseKind::kSsp:
      return "ssp";
    case PhaseKind::kFinalDsp:
      return "final-dsp";
  }
  return "?";
}

PhaseTimeline::PhaseTimeline(std::vector<PhaseSegment> segments, double period)
  : segments_(std::move(segments)), period_(period)
{
  int tick = 0;
  int max_foot = 0;
  for (auto& s : segments_) {
    s.first_tick = tick;
    tick += s.ticks;
    max_foot = std::max({max_foot, s.foot_a, s.foot_b, s.assigned});
  }
  total_ticks_ = tick;

  landing_.assign(static_cast<std::size_t>(max_foot) + 1, 0);
  // Foothold f (f >= 2) touches down when the double support that first
  // contains it begins.
  for (const auto& s : segments_) {
    if (s.kind == PhaseKind::kSsp) continue;
    const int f = std::max(s.foot_a, s.foot_b);
    if (f >= 2 && landing_[f] == 0) landing_[f] = s.first_tick;
  }
}

int PhaseTimeline::segment_index_at(int tick) const
{
  if (tick <= 0) return 0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (tick < segments_[i].end_tick()) return static_cast<int>(i);
  }
  return static_cast<int>(segments_.size()) - 1;
}

const PhaseSegment& PhaseTimeline::segment_at(int tick) const
{
  return segments_[segment_index_at(tick)];
}

int PhaseTimeline::landing_tick(int foothold) const
{
  if (foothold < 0 || foothold >= static_cast<int>(landing_.size())) {
    throw std::out_of_range("landing_tick: unknown foothold");
  }
  return landing_[foothold];
}

int PhaseTimeline::ssp_first_tick(int j) const
{
  int seen = 0;
  for (const auto& s : segments_) {
    if (s.kind == PhaseKind::kSsp && ++seen == j) return s.first_tick;
  }
  throw std::out_of_range("ssp_first_tick: no such single support phase");
}

namespace {

int ticks_for(double duration, double period, const char* what)
{
  const double ratio = duration / period;
  const double rounded = std::round(ratio);
  if (!(duration > 0.0) || rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << what << " duration " << duration << " s is not a positive multiple of the control period " << period
       << " s";
    throw ConfigError(os.str());
  }
  return static_cast<int>(rounded);
}

}  // namespace

std::pair<FootstepPlan, PhaseTimeline> build_plan(const GaitParams& p)
{
  if (p.step_count < 1) throw ConfigError("step_count must be at least 1");
  if (!(p.period > 0.0)) throw ConfigError("control period must be positive");
  if (!(p.foot_half_extent.x() > 0.0) || !(p.foot_half_extent.y() > 0.0)) {
    throw ConfigError("foot half-extents must be positive");
  }

  const int n_init = ticks_for(p.durations.initial_dsp, p.period, "initial DSP");
  const int n_dsp = p.step_count > 1 ? ticks_for(p.durations.dsp, p.period, "DSP") : 0;
  const int n_ssp = ticks_for(p.durations.ssp, p.period, "SSP");
  const int n_final = ticks_for(p.durations.final_dsp, p.period, "final DSP");

  FootstepPlan plan;
  plan.step_length = p.step_length;
  plan.step_width = p.step_width;
  plan.foot_half_extent = p.foot_half_extent;

  const Foot support_first = p.first_swing == Foot::kLeft ? Foot::kRight : Foot::kLeft;
  auto lateral = [&](Foot f) { return f == Foot::kLeft ? 0.5 * p.step_width : -0.5 * p.step_width; };
  plan.footholds.push_back({{0.0, lateral(p.first_swing)}, p.first_swing});
  plan.footholds.push_back({{0.0, lateral(support_first)}, support_first});
  for (int j = 1; j <= p.step_count; ++j) {
    const Foot f = (j % 2 == 1) ? p.first_swing : support_first;
    plan.footholds.push_back({{j * p.step_length, lateral(f)}, f});
  }

  std::vector<PhaseSegment> segs;
  segs.push_back({PhaseKind::kInitialDsp, 0, n_init, 0, 1, 1});
  for (int j = 1; j <= p.step_count; ++j) {
    segs.push_back({PhaseKind::kSsp, 0, n_ssp, j, j, j});
    if (j < p.step_count) segs.push_back({PhaseKind::kDsp, 0, n_dsp, j, j + 1, j + 1});
  }
  const int last = p.step_count + 1;
  segs.push_back({PhaseKind::kFinalDsp, 0, n_final, last - 1, last, last});

  return {std::move(plan), PhaseTimeline(std::move(segs), p.period)};
}

VerticalSample VerticalProfile::sample(double t) const
{
  if (t_.size() == 1 || t <= t_.front()) return {z_.front(), 0.0, 0.0};
  if (t >= t_.back()) return {z_.back(), 0.0, 0.0};

  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const std::size_t k = static_cast<std::size_t>(std::distance(t_.begin(), it)) - 1;
  const double h = t_[k + 1] - t_[k];
  const double s = (t - t_[k]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double z0 = z_[k], z1 = z_[k + 1], d0 = slope_[k] * h, d1 = slope_[k + 1] * h;

  // Written in terms of the rise so a flat segment evaluates exactly flat.
  const double rise = z1 - z0;
  VerticalSample out;
  out.z = z0 + (-2 * s3 + 3 * s2) * rise + (s3 - 2 * s2 + s) * d0 + (s3 - s2) * d1;
  out.zd = ((-6 * s2 + 6 * s) * rise + (3 * s2 - 4 * s + 1) * d0 + (3 * s2 - 2 * s) * d1) / h;
  out.zdd = ((-12 * s + 6) * rise + (6 * s - 4) * d0 + (6 * s - 2) * d1) / (h * h);
  return out;
}

HeightTrajectory VerticalProfile::trajectory() const
{
  return [self = *this](double t) { return self.sample(t); };
}

Omega VerticalProfile::omega_at(int tick) const
{
  if (tick < 0) tick = 0;
  if (tick >= ticks()) return Omega{omega_.back().w, 0.0};
  return omega_[tick];
}

VerticalSample VerticalProfile::at_tick(int tick) const
{
  if (tick < 0) tick = 0;
  if (tick >= ticks()) return {samples_.back().z, 0.0, 0.0};
  return samples_[tick];
}

double VerticalProfile::omega_max() const
{
  double m = 0.0;
  for (const auto& w : omega_) m = std::max(m, w.w);
  return m;
}

VerticalProfile build_vertical_profile(const std::vector<HeightWaypoint>& waypoints, const PhaseTimeline& timeline,
                                       double g)
{
  if (waypoints.empty()) throw ConfigError("vertical profile needs at least one waypoint");
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    if (!(waypoints[i].z > 0.0)) throw ConfigError("vertical waypoint heights must be positive");
    if (i > 0 && !(waypoints[i].t > waypoints[i - 1].t)) {
      throw ConfigError("vertical waypoint times must be strictly increasing");
    }
  }
  const double horizon = timeline.total_duration();
  if (waypoints.size() > 1 && (waypoints.front().t > 1e-9 || waypoints.back().t < horizon - 1e-9)) {
    throw ConfigError("vertical waypoints must span the gait timeline [0, " + std::to_string(horizon) + "] s");
  }

  VerticalProfile vp;
  vp.period_ = timeline.period();
  vp.g_ = g;
  for (const auto& w : waypoints) {
    vp.t_.push_back(w.t);
    vp.z_.push_back(w.z);
  }

  // Fritsch-Carlson slopes, clamped to zero at both ends.
  const std::size_t n = vp.t_.size();
  vp.slope_.assign(n, 0.0);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double h0 = vp.t_[k] - vp.t_[k - 1];
    const double h1 = vp.t_[k + 1] - vp.t_[k];
    const double d0 = (vp.z_[k] - vp.z_[k - 1]) / h0;
    const double d1 = (vp.z_[k + 1] - vp.z_[k]) / h1;
    if (d0 * d1 <= 0.0) continue;
    const double w1 = 2 * h1 + h0;
    const double w2 = h1 + 2 * h0;
    vp.slope_[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
  }

  const double T = timeline.period();
  const int count = timeline.total_ticks() + 1;
  vp.samples_.reserve(count);
  vp.omega_.reserve(count);
  auto omega_of = [&](double t) { return std::sqrt(g / vp.sample(t).z); };
  for (int i = 0; i < count; ++i) {
    const double t = i * T;
    const VerticalSample s = vp.sample(t);
    const Omega w{std::sqrt(g / s.z), (omega_of(t + T) - omega_of(t - T)) / (2 * T)};
    if (!(g + s.zdd > 0.0)) {
      throw ConfigError("vertical profile rejected: g + zdd <= 0 at t=" + std::to_string(t));
    }
    if (!(w.w > kOmegaMin) || !(w.vrp_denominator() > 0.0)) {
      throw ConfigError("vertical profile rejected: omega out of range at t=" + std::to_string(t));
    }
    vp.samples_.push_back(s);
    vp.omega_.push_back(w);
  }
  return vp;
}

const Eigen::Vector2d& ReferenceTrajectories::cop_at(int tick) const
{
  return cop[static_cast<std::size_t>(std::clamp(tick, 0, static_cast<int>(cop.size()) - 1))];
}

const Eigen::Vector2d& ReferenceTrajectories::dcm_at(int tick) const
{
  return dcm[static_cast<std::size_t>(std::clamp(tick, 0, static_cast<int>(dcm.size()) - 1))];
}

std::vector<Eigen::Vector2d> build_reference_cop(const FootstepPlan& plan, const PhaseTimeline& timeline)
{
  const auto& f = plan.footholds;
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(timeline.total_ticks()) + 1);
  for (int i = 0; i <= timeline.total_ticks(); ++i) {
    const PhaseSegment& s = timeline.segment_at(i);
    const double lambda = static_cast<double>(i - s.first_tick) / s.ticks;
    const Eigen::Vector2d a = f[s.foot_a].position;
    const Eigen::Vector2d b = f[s.foot_b].position;
    const Eigen::Vector2d mid = 0.5 * (a + b);
    switch (s.kind) {
      case PhaseKind::kSsp:
        out.push_back(a);
        break;
      case PhaseKind::kInitialDsp:
        out.push_back(mid + lambda * (f[s.assigned].position - mid));
        break;
      case PhaseKind::kDsp:
        out.push_back(a + lambda * (b - a));
        break;
      case PhaseKind::kFinalDsp:
        out.push_back(a + lambda * (mid - a));
        break;
    }
  }
  return out;
}

std::vector<Eigen::Vector2d> build_reference_dcm(const std::vector<Eigen::Vector2d>& cop_ref,
                                                 const VerticalProfile& vertical, const PhaseTimeline& timeline)
{
  const double T = timeline.period();
  std::vector<Eigen::Vector2d> xi(cop_ref.size());
  if (cop_ref.empty()) return xi;
  xi.back() = cop_ref.back();
  for (int k = static_cast<int>(cop_ref.size()) - 2; k >= 0; --k) {
    const Omega w = vertical.omega_at(k);
    const double gain = T * w.vrp_denominator() / w.w;
    xi[k] = (xi[k + 1] + gain * cop_ref[k]) / (1.0 + gain);
  }
  return xi;
}

GaitPlan build_gait(const GaitParams& p, const std::vector<HeightWaypoint>& waypoints, double g)
{
  GaitPlan gp;
  std::tie(gp.steps, gp.timeline) = build_plan(p);
  gp.vertical = build_vertical_profile(waypoints, gp.timeline, g);
  gp.refs.cop = build_reference_cop(gp.steps, gp.timeline);
  gp.refs.dcm = build_reference_dcm(gp.refs.cop, gp.vertical, gp.timeline);
  return gp;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> support_box(const std::vector<Foothold>& footholds, const PhaseSegment& seg,
                                                        const Eigen::Vector2d& half_extent)
{
  const Eigen::Vector2d a = footholds[seg.foot_a].position;
  const Eigen::Vector2d b = footholds[seg.foot_b].position;
  return {a.cwiseMin(b) - half_extent, a.cwiseMax(b) + half_extent};
}

}  // namespace dcmwalk
