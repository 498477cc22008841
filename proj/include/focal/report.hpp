#pragma once

// JSON and CSV emission for classifier and circle-map results.

#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "focal/circle_dynamics.hpp"
#include "focal/classifier.hpp"
#include "focal/error.hpp"
#include "focal/return_map.hpp"
#include "focal/surfaces.hpp"

namespace focal {

using Json = nlohmann::ordered_json;

inline Json to_json(const ChartPoint& p) { return {{"chart", p.chart}, {"u", p.u}, {"v", p.v}}; }

inline Json to_json(const RotationEstimate& r) {
  return {{"value", r.value}, {"lower", r.lower}, {"upper", r.upper}, {"n_iter", r.n_iter}};
}

inline Json to_json(const FixedPointSet& s) {
  Json a = Json::array();
  for (const auto& p : s.points) {
    a.push_back({{"theta", p.theta},
                 {"multiplier", p.multiplier},
                 {"stability", to_string(p.stability)},
                 {"tangential", p.tangential}});
  }
  return a;
}

inline Json to_json(const UlamDensity& u) {
  return {{"M", u.M},
          {"atomicity", u.atomicity},
          {"l1_to_uniform", u.l1_to_uniform},
          {"residual", u.residual},
          {"sweeps", u.sweeps},
          {"direct_solve", u.direct_solve}};
}

inline Json to_json(const BasinReport& b) {
  return {{"n_orbits", b.n_orbits},
          {"n_iter", b.n_iter},
          {"fractions", b.fractions},
          {"non_convergent", b.non_convergent},
          {"degenerate", b.degenerate}};
}

inline Json to_json(const FlowConfig& f) {
  return {{"rel_tol", f.rel_tol},         {"abs_tol", f.abs_tol},
          {"max_step", f.max_step},       {"t_max", f.t_max},
          {"renormalize_every", f.renormalize_every}, {"return_radius", f.return_radius},
          {"refine_tol", f.refine_tol},   {"accept_miss", f.accept_miss},
          {"switch_margin", f.switch_margin}};
}

inline Json to_json(const ClassifierConfig& c) {
  return {{"flow", to_json(c.flow)},
          {"probe_directions", c.probe_directions},
          {"map_directions", c.map_directions},
          {"time_tol", c.time_tol},
          {"pole_tol", c.pole_tol},
          {"closure_tol", c.closure_tol},
          {"closure_directions", c.closure_directions},
          {"derivative_floor", c.derivative_floor},
          {"rotation_iterations", c.rotation_iterations},
          {"ulam_bins", {c.ulam_bins, 2 * c.ulam_bins}},
          {"ulam_samples_per_bin", c.ulam_samples_per_bin},
          {"basin_orbits", c.basin_orbits},
          {"basin_iterations", c.basin_iterations},
          {"growth_ratio", c.thresholds.growth_ratio},
          {"max_atomicity", c.thresholds.max_atomicity},
          {"prefilter_directions", c.prefilter_directions},
          {"prefilter_threshold", c.prefilter_threshold},
          {"threads", c.threads}};
}

inline Json to_json(const MapAnalysis& a) {
  Json j;
  j["orientation"] = to_string(a.orientation);
  j["rotation"] = a.rotation ? to_json(*a.rotation) : Json(nullptr);
  j["reversibility_defect"] = a.reversibility_defect;
  j["identity_defect"] = a.identity_defect;
  j["identity_defect_square"] = a.identity_defect_square;
  j["fixed_points_square"] = a.fixed_point_continuum ? Json("continuum") : to_json(a.fixed_points_square);
  j["basins_square"] = a.basins ? to_json(*a.basins) : Json(nullptr);
  j["ulam"] = {to_json(a.ulam_coarse), to_json(a.ulam_fine)};
  j["atomicity_ratio"] = a.conservativity.atomicity_ratio;
  j["conservativity"] = to_string(a.conservativity.verdict);
  j["conservativity_reason"] = a.conservativity.reason;
  return j;
}

inline Json to_json(const Verdict& v) {
  Json j;
  j["tag"] = to_string(v.tag);
  j["inconclusive"] = v.inconclusive;
  j["point"] = to_json(v.point);
  j["T_p"] = v.T_p() ? Json(*v.T_p()) : Json(nullptr);
  j["loop_fraction"] = v.loop_fraction ? Json(*v.loop_fraction) : Json(nullptr);
  if (v.probe) {
    j["probe"] = {{"is_self_focal", v.probe->is_self_focal},
                  {"returning_fraction", v.probe->returning_fraction},
                  {"return_time_spread", v.probe->return_time_spread},
                  {"first_return_spread", v.probe->first_return_spread},
                  {"time_tol", v.probe->time_tol},
                  {"t_max", v.probe->t_max},
                  {"directions", v.config.probe_directions}};
  }
  if (v.return_map) {
    const auto& g = *v.return_map;
    double worst_miss = 0.0;
    for (double m : g.miss_distance) worst_miss = std::max(worst_miss, m);
    j["return_map"] = {{"N", g.N}, {"degree", g.degree}, {"max_miss_distance", worst_miss}};
  }
  if (v.analysis) j["analysis"] = to_json(*v.analysis);
  if (v.closure) {
    j["closure"] = {{"period", v.closure->period},
                    {"n_dirs", v.closure->n_dirs},
                    {"residual", v.closure->residual},
                    {"worst_theta", v.closure->worst_theta},
                    {"base_residual", v.closure->base_residual},
                    {"angle_residual", v.closure->angle_residual}};
  }
  j["diagnostics"] = v.diagnostics;
  j["provenance"] = to_json(v.config);
  return j;
}

inline Json to_json(const SweepEntry& e) {
  Json j;
  j["point"] = to_json(e.point);
  j["prefilter_fraction"] = e.prefilter_fraction;
  j["verdict"] = e.verdict ? to_json(*e.verdict) : Json(nullptr);
  j["error"] = e.error ? Json(*e.error) : Json(nullptr);
  return j;
}

inline void write_density_csv(std::ostream& os, const UlamDensity& u) {
  os << "# Ulam invariant density, M = " << u.M << " bins\n"
     << "# columns: bin_center,mass\n"
     << "bin_center,mass\n";
  for (std::size_t j = 0; j < u.M; ++j) os << format_double(u.bin_center(j)) << ',' << format_double(u.mass[j]) << '\n';
}

/// Staircase segments (x, x) -> (x, f(x)) -> (f(x), f(x)) of one orbit.
inline void write_cobweb_csv(std::ostream& os, const CircleMap& f, double seed, std::size_t steps) {
  os << "# cobweb segments of the orbit of theta = " << format_double(seed) << "\n"
     << "# columns: step,x0,y0,x1,y1\n"
     << "step,x0,y0,x1,y1\n";
  double x = wrap_angle(seed);
  for (std::size_t k = 0; k < steps; ++k) {
    const double y = f(x);
    os << k << ',' << format_double(x) << ',' << format_double(x) << ',' << format_double(x) << ','
       << format_double(y) << '\n';
    os << k << ',' << format_double(x) << ',' << format_double(y) << ',' << format_double(y) << ','
       << format_double(y) << '\n';
    x = y;
  }
}

inline void write_map_samples_csv(std::ostream& os, const CircleMap& f, std::size_t n) {
  os << "# circle map samples on a uniform grid\n"
     << "# columns: theta_in,theta_out\n"
     << "theta_in,theta_out\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
    os << format_double(x) << ',' << format_double(f(x)) << '\n';
  }
}

/// Opens `path` for writing or throws IOFailure.
inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IOFailure, "cannot write '" + path + "'");
  return os;
}

}  // namespace focal
