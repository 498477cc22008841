#pragma once

// Run configuration for the command line tool. Files are YAML; JSON parses
// through the same reader. Unknown keys are rejected and every default is
// materialized so the echoed config describes the run completely.

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>
#include <json.hpp>

#include "focal/classifier.hpp"
#include "focal/error.hpp"
#include "focal/expression.hpp"
#include "focal/surfaces.hpp"

namespace focal {

struct SurfaceConfig {
  std::string type = "round_sphere";
  double radius = 1.0;
  double a = 0.0, b = 0.0, c = 0.0;
  std::string r, z;
  double s_min = 0.0, s_max = kPi;
  std::string g11, g12, g22;
  double u_min = 0.0, u_max = 1.0, v_min = 0.0, v_max = 1.0;
  bool periodic_v = false;
  double scale = 1.0;

  SurfaceSpec build() const {
    if (type == "round_sphere") return SurfaceSpec::round_sphere(radius);
    if (type == "triaxial_ellipsoid") return SurfaceSpec::triaxial_ellipsoid(a, b, c);
    if (type == "spheroid") {
      if (!(a > 0.0 && c > 0.0)) throw Error(ErrorCode::ConfigError, "spheroid: a and c must be positive");
      return SurfaceSpec::spheroid(a, c);
    }
    if (type == "surface_of_revolution") return SurfaceSpec(SurfaceOfRevolution{r, z, s_min, s_max});
    if (type == "chart_metric") {
      return SurfaceSpec(ChartMetric{g11, g12, g22, u_min, u_max, v_min, v_max, periodic_v, scale});
    }
    throw Error(ErrorCode::ConfigError, "surface.type '" + type + "' is not one of round_sphere, triaxial_ellipsoid, "
                                        "spheroid, surface_of_revolution, chart_metric");
  }
};

/// Either a named point of the surface or explicit chart coordinates.
struct PointConfig {
  std::string named;
  int chart = 0;
  double u = 0.0, v = 0.0;

  ChartPoint resolve(const SurfaceSpec& s) const {
    if (!named.empty()) {
      const auto p = s.named_point(named);
      if (!p) {
        std::string names;
        for (const auto& np : s.named_points()) names += (names.empty() ? "" : ", ") + np.name;
        throw Error(ErrorCode::ConfigError, "unknown named point '" + named + "' (available: " + names + ")");
      }
      return *p;
    }
    const ChartPoint p{chart, u, v};
    if (!(s.chart(chart).depth(u, v) >= 0.0)) {
      throw Error(ErrorCode::ConfigError, "point (" + format_double(u) + ", " + format_double(v) +
                                              ") lies outside chart " + std::to_string(chart));
    }
    return p;
  }
};

/// Uniform random chart points for sweeps, drawn from the run seed.
struct RandomPointsConfig {
  std::size_t count = 0;
  int chart = 0;
  double u_min = 0.0, u_max = 0.0, v_min = 0.0, v_max = 0.0;
};

struct CircleMapConfig {
  std::string expression;
  std::size_t plot_samples = 1024;
};

struct TraceConfig {
  double theta = 0.0;
  double t_end = 10.0;
  double dt = 0.01;
};

struct LoopFractionConfig {
  std::size_t directions = 64;
  double t_max = 0.0;
};

struct PlotConfig {
  double cobweb_seed = 0.5;
  std::size_t cobweb_steps = 50;
};

struct RunConfig {
  std::string command = "classify";
  SurfaceConfig surface;
  std::vector<PointConfig> points;
  RandomPointsConfig random_points;
  ClassifierConfig classifier;
  CircleMapConfig circlemap;
  TraceConfig trace;
  LoopFractionConfig loopfraction;
  PlotConfig plot;
  std::string output = "focal_out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  static constexpr const char* kCommands[] = {"classify", "sweep", "circlemap", "trace", "loopfraction"};

  bool needs_surface() const { return command != "circlemap"; }

  /// Checks everything that can be checked without integrating.
  void validate() const {
    bool known = false;
    for (const char* c : kCommands) known = known || command == c;
    if (!known) throw Error(ErrorCode::ConfigError, "command '" + command + "' is not recognized");
    if (threads < 1) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
    classifier.validate();
    if (plot.cobweb_steps < 1) throw Error(ErrorCode::ConfigError, "plot.cobweb_steps must be >= 1");
    if (command == "circlemap") {
      if (circlemap.expression.empty()) throw Error(ErrorCode::ConfigError, "circlemap.expression is required");
      Expression::parse(circlemap.expression, {"x"});
      if (circlemap.plot_samples < 16) throw Error(ErrorCode::ConfigError, "circlemap.plot_samples must be >= 16");
      return;
    }
    const SurfaceSpec s = surface.build();
    if (points.empty() && random_points.count == 0) throw Error(ErrorCode::ConfigError, "at least one point is required");
    if (command != "sweep" && (points.size() != 1 || random_points.count != 0)) {
      throw Error(ErrorCode::ConfigError, command + " takes exactly one point");
    }
    for (const auto& p : points) p.resolve(s);
    if (random_points.count > 0) {
      s.chart(random_points.chart);
      if (!(random_points.u_max > random_points.u_min && random_points.v_max > random_points.v_min)) {
        throw Error(ErrorCode::ConfigError, "random_points needs u_min < u_max and v_min < v_max");
      }
    }
    if (command == "trace") {
      if (!(trace.t_end > 0.0)) throw Error(ErrorCode::ConfigError, "trace.t_end must be positive");
      if (!(trace.dt > 0.0)) throw Error(ErrorCode::ConfigError, "trace.dt must be positive");
    }
    if (command == "loopfraction") {
      if (loopfraction.directions < 16) throw Error(ErrorCode::ConfigError, "loopfraction.directions must be >= 16");
      if (!(loopfraction.t_max >= 0.0)) throw Error(ErrorCode::ConfigError, "loopfraction.t_max must be >= 0");
    }
    if (command == "classify" || command == "sweep" ||
        (command == "loopfraction" && loopfraction.t_max == 0.0)) {
      classifier.resolved(s);
    }
  }

  /// Explicit points followed by the seeded random ones.
  std::vector<ChartPoint> resolve_points(const SurfaceSpec& s) const {
    std::vector<ChartPoint> out;
    for (const auto& p : points) out.push_back(p.resolve(s));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> du(random_points.u_min, random_points.u_max);
    std::uniform_real_distribution<double> dv(random_points.v_min, random_points.v_max);
    while (out.size() < points.size() + random_points.count) {
      const ChartPoint p{random_points.chart, du(rng), dv(rng)};
      if (s.chart(p.chart).depth(p.u, p.v) > 0.0) out.push_back(p);
    }
    return out;
  }
};

namespace detail {

inline std::string where(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.line >= 0 ? " (line " + std::to_string(m.line + 1) + ")" : "";
}

inline void check_keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
  if (!n.IsMap()) throw Error(ErrorCode::ConfigError, "'" + path + "' must be a mapping" + where(n));
  for (const auto& kv : n) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      throw Error(ErrorCode::ConfigError,
                  "unknown key '" + (path.empty() ? key : path + "." + key) + "'" + where(kv.first));
    }
  }
}

template <class T>
void read(const YAML::Node& n, const char* key, const std::string& path, T& out) {
  const YAML::Node v = n[key];
  if (!v) return;
  const std::string full = path.empty() ? key : path + "." + key;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      const long long x = v.as<long long>();
      if (x < 0) throw Error(ErrorCode::ConfigError, "'" + full + "' must be >= 0" + where(v));
      out = static_cast<T>(x);
    } else {
      out = v.as<T>();
    }
  } catch (const YAML::Exception&) {
    throw Error(ErrorCode::ConfigError, "'" + full + "' has an invalid value" + where(v));
  }
}

inline PointConfig read_point(const YAML::Node& n, const std::string& path) {
  PointConfig p;
  if (n.IsScalar()) {
    p.named = n.as<std::string>();
    return p;
  }
  check_keys(n, path, {"named", "chart", "u", "v"});
  read(n, "named", path, p.named);
  read(n, "chart", path, p.chart);
  read(n, "u", path, p.u);
  read(n, "v", path, p.v);
  if (p.named.empty() && (!n["u"] || !n["v"])) {
    throw Error(ErrorCode::ConfigError, "'" + path + "' needs either 'named' or both 'u' and 'v'" + where(n));
  }
  return p;
}

}  // namespace detail

inline RunConfig parse_run_config(const YAML::Node& root) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(root, "", {"command", "surface", "point", "points", "random_points", "flow", "classifier", "circlemap",
                        "trace", "loopfraction", "plot", "output", "seed", "threads"});
  read(root, "command", "", c.command);
  read(root, "output", "", c.output);
  read(root, "seed", "", c.seed);
  read(root, "threads", "", c.threads);

  if (const auto s = root["surface"]) {
    check_keys(s, "surface", {"type", "radius", "a", "b", "c", "r", "z", "s_min", "s_max", "g11", "g12", "g22", "u_min",
                              "u_max", "v_min", "v_max", "periodic_v", "scale"});
    auto& sc = c.surface;
    read(s, "type", "surface", sc.type);
    for (const auto& [key, slot] : std::initializer_list<std::pair<const char*, double*>>{
             {"radius", &sc.radius}, {"a", &sc.a}, {"b", &sc.b}, {"c", &sc.c}, {"s_min", &sc.s_min},
             {"s_max", &sc.s_max}, {"u_min", &sc.u_min}, {"u_max", &sc.u_max}, {"v_min", &sc.v_min},
             {"v_max", &sc.v_max}, {"scale", &sc.scale}}) {
      read(s, key, "surface", *slot);
    }
    for (const auto& [key, slot] : std::initializer_list<std::pair<const char*, std::string*>>{
             {"r", &sc.r}, {"z", &sc.z}, {"g11", &sc.g11}, {"g12", &sc.g12}, {"g22", &sc.g22}}) {
      read(s, key, "surface", *slot);
    }
    read(s, "periodic_v", "surface", sc.periodic_v);
  }

  if (root["point"] && root["points"]) {
    throw Error(ErrorCode::ConfigError, "give either 'point' or 'points', not both" + detail::where(root["points"]));
  }
  if (const auto p = root["point"]) c.points.push_back(detail::read_point(p, "point"));
  if (const auto ps = root["points"]) {
    if (!ps.IsSequence()) throw Error(ErrorCode::ConfigError, "'points' must be a list" + detail::where(ps));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      c.points.push_back(detail::read_point(ps[i], "points[" + std::to_string(i) + "]"));
    }
  }
  if (const auto r = root["random_points"]) {
    check_keys(r, "random_points", {"count", "chart", "u_min", "u_max", "v_min", "v_max"});
    auto& rp = c.random_points;
    read(r, "count", "random_points", rp.count);
    read(r, "chart", "random_points", rp.chart);
    read(r, "u_min", "random_points", rp.u_min);
    read(r, "u_max", "random_points", rp.u_max);
    read(r, "v_min", "random_points", rp.v_min);
    read(r, "v_max", "random_points", rp.v_max);
  }

  if (const auto f = root["flow"]) {
    check_keys(f, "flow", {"rel_tol", "abs_tol", "max_step", "t_max", "renormalize_every", "return_radius",
                           "refine_tol", "accept_miss", "switch_margin"});
    auto& fc = c.classifier.flow;
    read(f, "rel_tol", "flow", fc.rel_tol);
    read(f, "abs_tol", "flow", fc.abs_tol);
    read(f, "max_step", "flow", fc.max_step);
    read(f, "t_max", "flow", fc.t_max);
    read(f, "renormalize_every", "flow", fc.renormalize_every);
    read(f, "return_radius", "flow", fc.return_radius);
    read(f, "refine_tol", "flow", fc.refine_tol);
    read(f, "accept_miss", "flow", fc.accept_miss);
    read(f, "switch_margin", "flow", fc.switch_margin);
  }

  if (const auto k = root["classifier"]) {
    check_keys(k, "classifier", {"probe_directions", "map_directions", "time_tol", "pole_tol", "closure_tol",
                                 "closure_directions", "derivative_floor", "rotation_iterations", "ulam_bins",
                                 "ulam_samples_per_bin", "basin_orbits", "basin_iterations", "growth_ratio",
                                 "max_atomicity", "prefilter_directions", "prefilter_threshold"});
    auto& cc = c.classifier;
    const std::string p = "classifier";
    read(k, "probe_directions", p, cc.probe_directions);
    read(k, "map_directions", p, cc.map_directions);
    read(k, "time_tol", p, cc.time_tol);
    read(k, "pole_tol", p, cc.pole_tol);
    read(k, "closure_tol", p, cc.closure_tol);
    read(k, "closure_directions", p, cc.closure_directions);
    read(k, "derivative_floor", p, cc.derivative_floor);
    read(k, "rotation_iterations", p, cc.rotation_iterations);
    read(k, "ulam_bins", p, cc.ulam_bins);
    read(k, "ulam_samples_per_bin", p, cc.ulam_samples_per_bin);
    read(k, "basin_orbits", p, cc.basin_orbits);
    read(k, "basin_iterations", p, cc.basin_iterations);
    read(k, "growth_ratio", p, cc.thresholds.growth_ratio);
    read(k, "max_atomicity", p, cc.thresholds.max_atomicity);
    read(k, "prefilter_directions", p, cc.prefilter_directions);
    read(k, "prefilter_threshold", p, cc.prefilter_threshold);
  }

  if (const auto m = root["circlemap"]) {
    check_keys(m, "circlemap", {"expression", "plot_samples"});
    read(m, "expression", "circlemap", c.circlemap.expression);
    read(m, "plot_samples", "circlemap", c.circlemap.plot_samples);
  }
  if (const auto t = root["trace"]) {
    check_keys(t, "trace", {"theta", "t_end", "dt"});
    read(t, "theta", "trace", c.trace.theta);
    read(t, "t_end", "trace", c.trace.t_end);
    read(t, "dt", "trace", c.trace.dt);
  }
  if (const auto l = root["loopfraction"]) {
    check_keys(l, "loopfraction", {"directions", "t_max"});
    read(l, "directions", "loopfraction", c.loopfraction.directions);
    read(l, "t_max", "loopfraction", c.loopfraction.t_max);
  }
  if (const auto pl = root["plot"]) {
    check_keys(pl, "plot", {"cobweb_seed", "cobweb_steps"});
    read(pl, "cobweb_seed", "plot", c.plot.cobweb_seed);
    read(pl, "cobweb_steps", "plot", c.plot.cobweb_steps);
  }
  c.classifier.threads = c.threads;
  return c;
}

inline RunConfig parse_run_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
  }
  if (!root || root.IsNull()) throw Error(ErrorCode::ConfigError, "config is empty");
  return parse_run_config(root);
}

inline RunConfig load_run_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw Error(ErrorCode::IOFailure, "cannot read config file '" + path + "'");
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigError, "malformed config '" + path + "': " + e.what());
  }
  if (!root || root.IsNull()) throw Error(ErrorCode::ConfigError, "config file '" + path + "' is empty");
  return parse_run_config(root);
}

/// Full config with defaults, suitable for re-parsing.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["command"] = c.command;
  const auto& s = c.surface;
  ordered_json sj;
  sj["type"] = s.type;
  if (s.type == "round_sphere") {
    sj["radius"] = s.radius;
  } else if (s.type == "triaxial_ellipsoid") {
    sj["a"] = s.a;
    sj["b"] = s.b;
    sj["c"] = s.c;
  } else if (s.type == "spheroid") {
    sj["a"] = s.a;
    sj["c"] = s.c;
  } else if (s.type == "surface_of_revolution") {
    sj["r"] = s.r;
    sj["z"] = s.z;
    sj["s_min"] = s.s_min;
    sj["s_max"] = s.s_max;
  } else {
    sj["g11"] = s.g11;
    sj["g12"] = s.g12;
    sj["g22"] = s.g22;
    sj["u_min"] = s.u_min;
    sj["u_max"] = s.u_max;
    sj["v_min"] = s.v_min;
    sj["v_max"] = s.v_max;
    sj["periodic_v"] = s.periodic_v;
    sj["scale"] = s.scale;
  }
  j["surface"] = sj;
  ordered_json pts = ordered_json::array();
  for (const auto& p : c.points) {
    if (!p.named.empty()) {
      pts.push_back({{"named", p.named}});
    } else {
      pts.push_back({{"chart", p.chart}, {"u", p.u}, {"v", p.v}});
    }
  }
  j["points"] = pts;
  const auto& r = c.random_points;
  j["random_points"] = {{"count", r.count}, {"chart", r.chart}, {"u_min", r.u_min},
                        {"u_max", r.u_max}, {"v_min", r.v_min}, {"v_max", r.v_max}};
  const auto& f = c.classifier.flow;
  j["flow"] = {{"rel_tol", f.rel_tol},
               {"abs_tol", f.abs_tol},
               {"max_step", f.max_step},
               {"t_max", f.t_max},
               {"renormalize_every", f.renormalize_every},
               {"return_radius", f.return_radius},
               {"refine_tol", f.refine_tol},
               {"accept_miss", f.accept_miss},
               {"switch_margin", f.switch_margin}};
  const auto& k = c.classifier;
  j["classifier"] = {{"probe_directions", k.probe_directions},
                     {"map_directions", k.map_directions},
                     {"time_tol", k.time_tol},
                     {"pole_tol", k.pole_tol},
                     {"closure_tol", k.closure_tol},
                     {"closure_directions", k.closure_directions},
                     {"derivative_floor", k.derivative_floor},
                     {"rotation_iterations", k.rotation_iterations},
                     {"ulam_bins", k.ulam_bins},
                     {"ulam_samples_per_bin", k.ulam_samples_per_bin},
                     {"basin_orbits", k.basin_orbits},
                     {"basin_iterations", k.basin_iterations},
                     {"growth_ratio", k.thresholds.growth_ratio},
                     {"max_atomicity", k.thresholds.max_atomicity},
                     {"prefilter_directions", k.prefilter_directions},
                     {"prefilter_threshold", k.prefilter_threshold}};
  j["circlemap"] = {{"expression", c.circlemap.expression}, {"plot_samples", c.circlemap.plot_samples}};
  j["trace"] = {{"theta", c.trace.theta}, {"t_end", c.trace.t_end}, {"dt", c.trace.dt}};
  j["loopfraction"] = {{"directions", c.loopfraction.directions}, {"t_max", c.loopfraction.t_max}};
  j["plot"] = {{"cobweb_seed", c.plot.cobweb_seed}, {"cobweb_steps", c.plot.cobweb_steps}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

}  // namespace focal
