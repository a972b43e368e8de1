#include "dcmwalk/errors.hpp"
#include "dcmwalk/mpc.hpp"
#include "dcmwalk/qp_solver.hpp"
#include "dcmwalk/scenario_io.hpp"
#include "dcmwalk/simulator.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace dcmwalk;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

StageMatrices stage(const Omega& w, double zdd, double mass, double g, double T, const std::string& method)
{
  if (method == "zoh") return discretize_zoh(w, zdd, mass, g, T);
  if (method == "euler") return discretize(w, zdd, mass, g, T);
  throw py::value_error("method must be 'zoh' or 'euler'");
}

/// Stacks one 2-vector per sample into an n x 2 array.
template <class F>
RowMatrix column_pair(const std::vector<SimSample>& s, F&& get)
{
  RowMatrix out(static_cast<Eigen::Index>(s.size()), 2);
  for (std::size_t i = 0; i < s.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = get(s[i]).transpose();
  return out;
}

py::dict envelope_dict(const RecoveryEnvelope& e)
{
  py::list trace;
  for (const EnvelopeTrial& t : e.trace) trace.append(py::make_tuple(t.magnitude, t.recovered));
  py::dict d;
  d["direction"] = Eigen::Vector2d(e.direction);
  d["duration"] = e.duration;
  d["magnitude"] = e.magnitude;
  d["bracket"] = py::make_tuple(e.bracket_lo, e.bracket_hi);
  d["tolerance"] = e.tolerance;
  d["unbounded"] = e.unbounded;
  d["bisection_runs"] = e.bisection_runs;
  d["monotonicity_violations"] = e.monotonicity_violations;
  d["trace"] = trace;
  return d;
}

ControlMode mode_of(const std::string& name)
{
  const auto m = parse_mode(name);
  if (!m) throw py::value_error("unknown mode '" + name + "'");
  return *m;
}

}  // namespace

PYBIND11_MODULE(_dcmwalk, m)
{
  m.doc() = "DCM model predictive walking controller";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FallPredicted>(m, "FallPredicted", PyExc_RuntimeError);

  m.attr("GRAVITY") = kGravity;

  m.def(
    "natural_frequency",
    [](double z, double g) {
      const Omega w = natural_frequency(z, g);
      return py::make_tuple(w.w, w.wd);
    },
    py::arg("z"), py::arg("g") = kGravity, "omega = sqrt(g / z) and its rate (zero).");

  m.def(
    "dcm_from_state",
    [](const Eigen::Vector2d& x, const Eigen::Vector2d& v, double w, double wd) {
      ComState s;
      s.x = x;
      s.v = v;
      return Eigen::Vector2d(dcm_from_state(s, {w, wd}).xi);
    },
    py::arg("x"), py::arg("v"), py::arg("omega"), py::arg("omega_dot") = 0.0);

  m.def(
    "cmp_from_cop",
    [](const Eigen::Vector2d& cop, const Eigen::Vector2d& hdot, double mass, double zdd, double g) {
      return Eigen::Vector2d(cmp_from_cop(cop, hdot, mass, zdd, g));
    },
    py::arg("cop"), py::arg("hdot"), py::arg("mass"), py::arg("zdd") = 0.0, py::arg("g") = kGravity);

  m.def(
    "discretize",
    [](double w, double wd, double zdd, double mass, double g, double T, const std::string& method) {
      const StageMatrices s = stage({w, wd}, zdd, mass, g, T, method);
      return py::make_tuple(Eigen::Matrix4d(s.A), Eigen::MatrixXd(s.B));
    },
    py::arg("omega"), py::arg("omega_dot"), py::arg("zdd"), py::arg("mass"), py::arg("g") = kGravity, py::arg("T"),
    py::arg("method") = "zoh", "Per-tick (A, B) of the state [xi, x, Hdot, cop] with inputs [Hddot, copdot].");

  m.def(
    "condense",
    [](const std::vector<std::pair<Eigen::Matrix4d, Eigen::MatrixXd>>& stages) {
      std::vector<StageMatrices> st;
      for (const auto& [A, B] : stages) {
        if (B.rows() != 4 || B.cols() != 2) throw py::value_error("B must be 4 x 2");
        StageMatrices sm;
        sm.A = A;
        sm.B = B;
        st.push_back(sm);
      }
      const CondensedSystem cs = condense(st);
      return py::make_tuple(cs.phi_k, cs.phi_u1);
    },
    py::arg("stages"), "Stacked prediction matrices (Phi_k, Phi_u1) of a list of (A, B).");

  m.def(
    "solve_qp",
    [](const Eigen::MatrixXd& H, const Eigen::VectorXd& f, std::optional<Eigen::MatrixXd> C,
       std::optional<Eigen::VectorXd> D, std::optional<Eigen::MatrixXd> E, std::optional<Eigen::VectorXd> F) {
      QpProblem p;
      p.H = H;
      p.f = f;
      const Eigen::Index n = f.size();
      p.C = C.value_or(Eigen::MatrixXd(0, n));
      p.D = D.value_or(Eigen::VectorXd(0));
      p.E = E.value_or(Eigen::MatrixXd(0, n));
      p.F = F.value_or(Eigen::VectorXd(0));
      p.validate();
      const QpSolution s = solve_qp(p);
      py::dict d;
      d["status"] = to_string(s.status);
      d["x"] = s.x;
      d["lambda_eq"] = s.lambda_eq;
      d["lambda_ineq"] = s.lambda_ineq;
      d["objective"] = s.objective;
      d["iterations"] = s.iterations;
      d["violated"] = s.violated;
      return d;
    },
    py::arg("H"), py::arg("f"), py::arg("C") = py::none(), py::arg("D") = py::none(), py::arg("E") = py::none(),
    py::arg("F") = py::none(), "min 1/2 x'Hx + f'x  s.t.  Cx + D = 0, Ex + F <= 0.");

  py::class_<Scenario>(m, "Scenario")
    .def(py::init<>())
    .def_static("from_json", [](const std::string& text) { return parse_scenario(text, "<python>"); })
    .def_static("load", [](const std::string& path) { return load_scenario(path); })
    .def("to_json", [](const Scenario& s) { return scenario_to_json(s); })
    .def(
      "with_mode",
      [](Scenario s, const std::string& mode) {
        apply_mode(s.mpc, mode_of(mode));
        return s;
      },
      py::arg("mode"))
    .def(
      "with_pushes",
      [](Scenario s, const std::vector<std::tuple<double, double, double, double>>& pushes) {
        s.pushes.clear();
        for (const auto& [fx, fy, start, duration] : pushes) s.pushes.push_back({{fx, fy}, start, duration});
        return s;
      },
      py::arg("pushes"), "Pushes as (fx, fy, start, duration) tuples.")
    .def_property_readonly("period", [](const Scenario& s) { return s.gait.period; })
    .def_property_readonly("total_duration", [](const Scenario& s) { return build_gait(s).timeline.total_duration(); });

  m.def(
    "simulate",
    [](const Scenario& s) {
      SimLog log;
      {
        py::gil_scoped_release release;
        log = run(s);
      }
      const auto& smp = log.samples;
      Eigen::VectorXd t(static_cast<Eigen::Index>(smp.size())), z(t.size());
      Eigen::VectorXi foot(t.size()), push(t.size());
      for (std::size_t i = 0; i < smp.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        t(k) = smp[i].t;
        z(k) = smp[i].com.z;
        foot(k) = smp[i].foothold_id;
        push(k) = smp[i].push_active ? 1 : 0;
      }
      py::dict d;
      d["outcome"] = log.outcome == Outcome::kCompleted ? "completed" : "fell";
      if (log.fall) {
        d["fall"] = py::dict(py::arg("t") = log.fall->t, py::arg("rule") = log.fall->rule,
                             py::arg("detail") = log.fall->detail);
      } else {
        d["fall"] = py::none();
      }
      d["t"] = t;
      d["z"] = z;
      d["com"] = column_pair(smp, [](const SimSample& x) { return x.com.x; });
      d["com_velocity"] = column_pair(smp, [](const SimSample& x) { return x.com.v; });
      d["xi"] = column_pair(smp, [](const SimSample& x) { return x.xi; });
      d["cop"] = column_pair(smp, [](const SimSample& x) { return x.cop; });
      d["cmp"] = column_pair(smp, [](const SimSample& x) { return x.cmp; });
      d["hdot"] = column_pair(smp, [](const SimSample& x) { return x.hdot; });
      d["foothold_id"] = foot;
      d["push_active"] = push;
      RowMatrix feet(static_cast<Eigen::Index>(log.footholds.size()), 2);
      for (std::size_t f = 0; f < log.footholds.size(); ++f) {
        feet.row(static_cast<Eigen::Index>(f)) = log.footholds[f].position.transpose();
      }
      d["footholds"] = feet;
      d["peak_hdot"] = log.peak_hdot;
      d["max_dcm_error"] = log.max_dcm_error;
      d["max_foothold_deviation"] = log.max_foothold_deviation;
      d["terminal"] = py::make_tuple(log.terminal.cop_xi, log.terminal.cop_com, log.terminal.hdot);
      return d;
    },
    py::arg("scenario"), "Closed-loop run; arrays are per plant step.");

  m.def(
    "max_recoverable_push",
    [](const Scenario& s, const Eigen::Vector2d& direction, double duration, double tolerance, double bracket_hi) {
      EnvelopeOptions opt;
      opt.tolerance = tolerance;
      opt.bracket_hi = bracket_hi;
      RecoveryEnvelope e;
      {
        py::gil_scoped_release release;
        e = max_recoverable_push(s, direction, duration, opt);
      }
      return envelope_dict(e);
    },
    py::arg("scenario"), py::arg("direction"), py::arg("duration") = 0.1, py::arg("tolerance") = 5.0,
    py::arg("bracket_hi") = 500.0);

  m.def(
    "compare_controllers",
    [](const Scenario& s, const std::vector<std::string>& modes, double duration, double tolerance, int jobs) {
      std::vector<ControlMode> parsed;
      for (const auto& name : modes) parsed.push_back(mode_of(name));
      CompareOptions opt;
      opt.duration = duration;
      opt.envelope.tolerance = tolerance;
      opt.jobs = jobs;
      std::vector<ComparisonRow> rows;
      {
        py::gil_scoped_release release;
        rows = compare_controllers(s, parsed, opt);
      }
      py::list out;
      for (const ComparisonRow& r : rows) {
        py::dict d;
        d["mode"] = to_string(r.mode);
        d["outcome"] = r.outcome == Outcome::kCompleted ? "completed" : "fell";
        d["forward"] = envelope_dict(r.forward);
        d["lateral"] = envelope_dict(r.lateral);
        d["peak_hdot"] = r.peak_hdot;
        d["max_foothold_deviation"] = r.max_foothold_deviation;
        out.append(d);
      }
      return out;
    },
    py::arg("scenario"), py::arg("modes"), py::arg("duration") = 0.1, py::arg("tolerance") = 5.0, py::arg("jobs") = 1);
}
