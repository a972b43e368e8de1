#include "dcmwalk/scenario_io.hpp"

#include "dcmwalk/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>

namespace dcmwalk {

using nlohmann::ordered_json;

namespace {

/// Line of every value in a syntactically valid JSON text, keyed by JSON
/// pointer. Object members map to the line of their key.
class LineIndex
{
public:
  explicit LineIndex(const std::string& text) : s_(text) { value(""); }

  [[nodiscard]] int line_of(std::string path) const
  {
    for (;;) {
      if (auto it = lines_.find(path); it != lines_.end()) return it->second;
      const auto cut = path.rfind('/');
      if (cut == std::string::npos) return 1;
      path.erase(cut);
    }
  }

private:
  void ws()
  {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\n' || s_[i_] == '\r')) {
      if (s_[i_] == '\n') ++line_;
      ++i_;
    }
  }

  std::string string()
  {
    std::string out;
    ++i_;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\') ++i_;
      if (i_ < s_.size()) out += s_[i_++];
    }
    ++i_;
    return out;
  }

  void value(const std::string& path)
  {
    ws();
    lines_.emplace(path, line_);
    if (i_ >= s_.size()) return;
    if (s_[i_] == '{') {
      ++i_;
      ws();
      while (i_ < s_.size() && s_[i_] != '}') {
        const int key_line = line_;
        const std::string child = path + "/" + string();
        ws();
        ++i_;  // ':'
        value(child);
        lines_[child] = key_line;
        ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        ws();
      }
      ++i_;
    } else if (s_[i_] == '[') {
      ++i_;
      ws();
      for (int n = 0; i_ < s_.size() && s_[i_] != ']'; ++n) {
        value(path + "/" + std::to_string(n));
        ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        ws();
      }
      ++i_;
    } else if (s_[i_] == '"') {
      (void)string();
    } else {
      while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != '}' && s_[i_] != ']' && s_[i_] != ' ' && s_[i_] != '\n' &&
             s_[i_] != '\r' && s_[i_] != '\t') {
        ++i_;
      }
    }
  }

  const std::string& s_;
  std::size_t i_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class Reader
{
public:
  Reader(const std::string& text, std::string source) : index_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const
  {
    std::ostringstream os;
    os << source_ << ':' << index_.line_of(path) << ": " << (path.empty() ? "document" : path.substr(1)) << ": " << msg;
    throw ConfigError(os.str());
  }

  void object(const ordered_json& j, const std::string& path, std::initializer_list<const char*> keys) const
  {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : j.items()) {
      bool known = false;
      for (const char* allowed : keys) known = known || k == allowed;
      if (!known) fail(path + "/" + k, "unknown key '" + k + "'");
    }
  }

  double number(const ordered_json& j, const std::string& path) const
  {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  long integer(const ordered_json& j, const std::string& path) const
  {
    if (!j.is_number_integer() && !j.is_number_unsigned()) fail(path, "expected an integer");
    return j.get<long>();
  }

  bool flag(const ordered_json& j, const std::string& path) const
  {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_string() && j.get<std::string>() == "on") return true;
    if (j.is_string() && j.get<std::string>() == "off") return false;
    fail(path, "expected true/false or \"on\"/\"off\"");
  }

  Eigen::Vector2d vec2(const ordered_json& j, const std::string& path) const
  {
    if (!j.is_array() || j.size() != 2) fail(path, "expected an array of two numbers");
    return {number(j[0], path + "/0"), number(j[1], path + "/1")};
  }

  std::string text(const ordered_json& j, const std::string& path) const
  {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

  /// Calls f(value, path) when key is present.
  template <class F>
  void opt(const ordered_json& j, const std::string& path, const char* key, F&& f) const
  {
    if (auto it = j.find(key); it != j.end()) f(*it, path + "/" + key);
  }

private:
  LineIndex index_;
  std::string source_;
};

void read_gait(const Reader& r, const ordered_json& j, const std::string& p, GaitParams& g)
{
  r.object(j, p, {"step_count", "step_length", "step_width", "durations", "period", "foot_half_extent", "first_swing"});
  r.opt(j, p, "step_count", [&](auto& v, auto q) { g.step_count = static_cast<int>(r.integer(v, q)); });
  r.opt(j, p, "step_length", [&](auto& v, auto q) { g.step_length = r.number(v, q); });
  r.opt(j, p, "step_width", [&](auto& v, auto q) { g.step_width = r.number(v, q); });
  r.opt(j, p, "period", [&](auto& v, auto q) { g.period = r.number(v, q); });
  r.opt(j, p, "foot_half_extent", [&](auto& v, auto q) { g.foot_half_extent = r.vec2(v, q); });
  r.opt(j, p, "durations", [&](auto& d, const std::string& q) {
    r.object(d, q, {"initial_dsp", "dsp", "ssp", "final_dsp"});
    r.opt(d, q, "initial_dsp", [&](auto& v, auto qq) { g.durations.initial_dsp = r.number(v, qq); });
    r.opt(d, q, "dsp", [&](auto& v, auto qq) { g.durations.dsp = r.number(v, qq); });
    r.opt(d, q, "ssp", [&](auto& v, auto qq) { g.durations.ssp = r.number(v, qq); });
    r.opt(d, q, "final_dsp", [&](auto& v, auto qq) { g.durations.final_dsp = r.number(v, qq); });
  });
  r.opt(j, p, "first_swing", [&](auto& v, auto q) {
    const std::string f = r.text(v, q);
    if (f == "left") {
      g.first_swing = Foot::kLeft;
    } else if (f == "right") {
      g.first_swing = Foot::kRight;
    } else {
      r.fail(q, "expected \"left\" or \"right\"");
    }
  });
}

void read_vertical(const Reader& r, const ordered_json& j, const std::string& p, std::vector<HeightWaypoint>& out)
{
  r.object(j, p, {"waypoints"});
  r.opt(j, p, "waypoints", [&](auto& w, const std::string& q) {
    if (!w.is_array() || w.empty()) r.fail(q, "expected a non-empty array of {t, z} waypoints");
    out.clear();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string qi = q + "/" + std::to_string(i);
      r.object(w[i], qi, {"t", "z"});
      if (!w[i].contains("t") || !w[i].contains("z")) r.fail(qi, "waypoint needs both t and z");
      out.push_back({r.number(w[i]["t"], qi + "/t"), r.number(w[i]["z"], qi + "/z")});
    }
  });
}

void read_mpc(const Reader& r, const ordered_json& j, const std::string& p, MpcConfig& c)
{
  r.object(j, p,
           {"weights", "discretization", "horizon", "previewed_steps", "reachability", "foothold_bounds",
            "min_foot_clearance", "step_adjust", "cmp_modulation", "mass", "gravity", "regularization"});
  r.opt(j, p, "weights", [&](auto& w, const std::string& q) {
    r.object(w, q, {"cop_rate", "hdot", "hddot", "cop_tracking", "dcm_tracking"});
    r.opt(w, q, "cop_rate", [&](auto& v, auto qq) { c.weights.cop_rate = r.number(v, qq); });
    r.opt(w, q, "hdot", [&](auto& v, auto qq) { c.weights.hdot = r.number(v, qq); });
    r.opt(w, q, "hddot", [&](auto& v, auto qq) { c.weights.hddot = r.number(v, qq); });
    r.opt(w, q, "cop_tracking", [&](auto& v, auto qq) { c.weights.cop_tracking = r.number(v, qq); });
    r.opt(w, q, "dcm_tracking", [&](auto& v, auto qq) { c.weights.dcm_tracking = r.number(v, qq); });
  });
  r.opt(j, p, "discretization", [&](auto& v, auto q) {
    const std::string d = r.text(v, q);
    if (d == "zoh") {
      c.discretization = Discretization::kZeroOrderHold;
    } else if (d == "euler") {
      c.discretization = Discretization::kEuler;
    } else {
      r.fail(q, "expected \"zoh\" or \"euler\"");
    }
  });
  r.opt(j, p, "horizon", [&](auto& v, auto q) { c.horizon = static_cast<int>(r.integer(v, q)); });
  r.opt(j, p, "previewed_steps", [&](auto& v, auto q) { c.previewed_steps = static_cast<int>(r.integer(v, q)); });
  r.opt(j, p, "reachability", [&](auto& v, auto q) { c.reachability = r.number(v, q); });
  r.opt(j, p, "foothold_bounds", [&](auto& v, auto q) { c.foothold_bounds = r.vec2(v, q); });
  r.opt(j, p, "min_foot_clearance", [&](auto& v, auto q) { c.min_foot_clearance = r.number(v, q); });
  r.opt(j, p, "step_adjust", [&](auto& v, auto q) { c.step_adjust = r.flag(v, q); });
  r.opt(j, p, "cmp_modulation", [&](auto& v, auto q) { c.cmp_modulation = r.flag(v, q); });
  r.opt(j, p, "mass", [&](auto& v, auto q) { c.mass = r.number(v, q); });
  r.opt(j, p, "gravity", [&](auto& v, auto q) { c.gravity = r.number(v, q); });
  r.opt(j, p, "regularization", [&](auto& v, auto q) { c.regularization = r.number(v, q); });
}

void read_pushes(const Reader& r, const ordered_json& j, const std::string& p, std::vector<PushEvent>& out)
{
  if (!j.is_array()) r.fail(p, "expected an array of pushes");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string q = p + "/" + std::to_string(i);
    r.object(j[i], q, {"force", "start", "duration"});
    PushEvent e;
    r.opt(j[i], q, "force", [&](auto& v, auto qq) { e.force = r.vec2(v, qq); });
    r.opt(j[i], q, "start", [&](auto& v, auto qq) { e.start = r.number(v, qq); });
    r.opt(j[i], q, "duration", [&](auto& v, auto qq) { e.duration = r.number(v, qq); });
    out.push_back(e);
  }
}

void read_sim(const Reader& r, const ordered_json& j, const std::string& p, Scenario& s)
{
  r.object(j, p, {"dt", "seed", "envelope_push_start", "com_cop_factor"});
  r.opt(j, p, "dt", [&](auto& v, auto q) { s.dt = r.number(v, q); });
  r.opt(j, p, "seed", [&](auto& v, auto q) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.template get<long>() >= 0)) {
      r.fail(q, "expected a non-negative integer");
    }
    s.seed = v.template get<std::uint64_t>();
  });
  r.opt(j, p, "envelope_push_start", [&](auto& v, auto q) {
    if (v.is_null()) {
      s.envelope_push_start.reset();
    } else {
      s.envelope_push_start = r.number(v, q);
    }
  });
  r.opt(j, p, "com_cop_factor", [&](auto& v, auto q) { s.com_cop_factor = r.number(v, q); });
}

ordered_json vec(const Eigen::Vector2d& v)
{
  return ordered_json::array({v.x(), v.y()});
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source)
{
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Locate the byte offset the parser stopped at.
    int line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size()); ++i) {
      line += text[i] == '\n';
    }
    throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }

  const Reader r(text, source);
  r.object(doc, "", {"description", "gait", "vertical", "mpc", "pushes", "contact", "sim"});
  Scenario s;
  r.opt(doc, "", "description", [&](auto& v, auto q) { (void)r.text(v, q); });
  r.opt(doc, "", "gait", [&](auto& v, auto q) { read_gait(r, v, q, s.gait); });
  r.opt(doc, "", "vertical", [&](auto& v, auto q) { read_vertical(r, v, q, s.vertical); });
  r.opt(doc, "", "mpc", [&](auto& v, auto q) { read_mpc(r, v, q, s.mpc); });
  r.opt(doc, "", "pushes", [&](auto& v, auto q) { read_pushes(r, v, q, s.pushes); });
  r.opt(doc, "", "contact", [&](auto& v, const std::string& q) {
    r.object(v, q, {"half_extent"});
    r.opt(v, q, "half_extent", [&](auto& h, auto qq) {
      if (h.is_null()) {
        s.mpc.contact_half_extent.reset();
      } else {
        s.mpc.contact_half_extent = r.vec2(h, qq);
      }
    });
  });
  r.opt(doc, "", "sim", [&](auto& v, auto q) { read_sim(r, v, q, s); });

  // Semantic checks; positions point at the section concerned.
  auto section = [&](const ConfigError& e, const char* path) { r.fail(path, e.what()); };
  try {
    s.mpc.validate();
  } catch (const ConfigError& e) {
    section(e, "/mpc");
  }
  PhaseTimeline timeline;
  try {
    timeline = build_plan(s.gait).second;
  } catch (const ConfigError& e) {
    section(e, "/gait");
  }
  try {
    (void)build_vertical_profile(s.vertical, timeline, s.mpc.gravity);
  } catch (const ConfigError& e) {
    section(e, "/vertical");
  } catch (const std::domain_error& e) {
    section(ConfigError(e.what()), "/vertical");
  }
  const GaitPlan plan = build_gait(s);
  try {
    validate(s, plan);
  } catch (const ConfigError& e) {
    // Messages name the offending field, e.g. "pushes[1] ..." or "sim.dt ...".
    const std::string msg = e.what();
    std::string path = "/sim";
    if (msg.rfind("pushes[", 0) == 0) {
      path = "/pushes/" + msg.substr(7, msg.find(']') - 7);
    } else if (msg.rfind("sim.", 0) == 0) {
      path = "/sim/" + msg.substr(4, msg.find(' ') - 4);
    } else if (msg.find("future steps") != std::string::npos) {
      path = "/mpc";
    } else if (msg.find("plant time step") != std::string::npos) {
      path = "/sim/dt";
    }
    section(e, path.c_str());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open scenario file");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_scenario(os.str(), path.string());
}

std::string scenario_to_json(const Scenario& s, int indent)
{
  ordered_json j;
  const GaitParams& g = s.gait;
  j["gait"] = {{"step_count", g.step_count},
               {"step_length", g.step_length},
               {"step_width", g.step_width},
               {"durations",
                {{"initial_dsp", g.durations.initial_dsp},
                 {"dsp", g.durations.dsp},
                 {"ssp", g.durations.ssp},
                 {"final_dsp", g.durations.final_dsp}}},
               {"period", g.period},
               {"foot_half_extent", vec(g.foot_half_extent)},
               {"first_swing", g.first_swing == Foot::kLeft ? "left" : "right"}};
  ordered_json wp = ordered_json::array();
  for (const HeightWaypoint& w : s.vertical) wp.push_back({{"t", w.t}, {"z", w.z}});
  j["vertical"] = {{"waypoints", wp}};
  const MpcConfig& c = s.mpc;
  j["mpc"] = {{"weights",
               {{"cop_rate", c.weights.cop_rate},
                {"hdot", c.weights.hdot},
                {"hddot", c.weights.hddot},
                {"cop_tracking", c.weights.cop_tracking},
                {"dcm_tracking", c.weights.dcm_tracking}}},
              {"discretization", c.discretization == Discretization::kEuler ? "euler" : "zoh"},
              {"horizon", c.horizon},
              {"previewed_steps", c.previewed_steps},
              {"reachability", c.reachability},
              {"foothold_bounds", vec(c.foothold_bounds)},
              {"min_foot_clearance", c.min_foot_clearance},
              {"step_adjust", c.step_adjust},
              {"cmp_modulation", c.cmp_modulation},
              {"mass", c.mass},
              {"gravity", c.gravity},
              {"regularization", c.regularization}};
  ordered_json pushes = ordered_json::array();
  for (const PushEvent& p : s.pushes) pushes.push_back({{"force", vec(p.force)}, {"start", p.start}, {"duration", p.duration}});
  j["pushes"] = pushes;
  j["contact"] = {{"half_extent", c.contact_half_extent ? vec(*c.contact_half_extent) : ordered_json(nullptr)}};
  j["sim"] = {{"dt", s.dt},
              {"seed", s.seed},
              {"envelope_push_start", s.envelope_push_start.value_or(default_push_start(build_gait(s)))},
              {"com_cop_factor", s.com_cop_factor}};
  return j.dump(indent);
}

}  // namespace dcmwalk
