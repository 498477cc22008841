#pragma once

// Point classification: self-focal probe, return map, circle-map analysis,
// and direct closure check for pole candidates.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "focal/circle_dynamics.hpp"
#include "focal/circle_map.hpp"
#include "focal/error.hpp"
#include "focal/geodesic_flow.hpp"
#include "focal/parallel.hpp"
#include "focal/return_map.hpp"
#include "focal/surfaces.hpp"

namespace focal {

struct ClassifierConfig {
  FlowConfig flow;
  std::size_t probe_directions = 64;
  std::size_t map_directions = 256;
  /// Zero means 1e-4 x the median first return time.
  double time_tol = 0.0;
  double pole_tol = 1e-4;
  /// Zero means 1e-4 x length scale.
  double closure_tol = 0.0;
  std::size_t closure_directions = 64;
  double derivative_floor = 1e-9;
  std::size_t rotation_iterations = 10000;
  std::size_t ulam_bins = 256;
  std::size_t ulam_samples_per_bin = 32;
  std::size_t basin_orbits = 256;
  std::size_t basin_iterations = 1000;
  ConservativityThresholds thresholds;
  std::size_t prefilter_directions = 16;
  double prefilter_threshold = 0.5;
  std::size_t threads = 1;

  void validate() const {
    flow.validate();
    auto at_least = [](std::size_t v, std::size_t lo, const char* what) {
      if (v < lo) throw Error(ErrorCode::ConfigError, std::string(what) + " must be >= " + std::to_string(lo));
    };
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0)) throw Error(ErrorCode::ConfigError, std::string(what) + " must be positive");
    };
    auto nonnegative = [](double v, const char* what) {
      if (!(v >= 0.0)) throw Error(ErrorCode::ConfigError, std::string(what) + " must be >= 0");
    };
    at_least(probe_directions, 64, "probe_directions");
    at_least(map_directions, 16, "map_directions");
    at_least(closure_directions, 1, "closure_directions");
    at_least(rotation_iterations, 1, "rotation_iterations");
    at_least(ulam_bins, 64, "ulam_bins");
    at_least(ulam_samples_per_bin, 1, "ulam_samples_per_bin");
    at_least(basin_orbits, 1, "basin_orbits");
    at_least(prefilter_directions, 16, "prefilter_directions");
    at_least(threads, 1, "threads");
    nonnegative(time_tol, "time_tol");
    nonnegative(closure_tol, "closure_tol");
    positive(pole_tol, "pole_tol");
    positive(derivative_floor, "derivative_floor");
    positive(thresholds.growth_ratio, "growth_ratio");
    positive(thresholds.max_atomicity, "max_atomicity");
    if (prefilter_threshold < 0.0 || prefilter_threshold > 1.0) {
      throw Error(ErrorCode::ConfigError, "prefilter_threshold must lie in [0, 1]");
    }
  }

  ClassifierConfig resolved(const SurfaceSpec& surface) const {
    validate();
    ClassifierConfig r = *this;
    r.flow = flow.resolved(surface);
    if (r.closure_tol == 0.0) r.closure_tol = 1e-4 * surface.length_scale();
    return r;
  }
};

enum class VerdictTag { NotSelfFocal, SelfFocalDissipative, Pole };

inline const char* to_string(VerdictTag t) {
  switch (t) {
    case VerdictTag::NotSelfFocal: return "NotSelfFocal";
    case VerdictTag::SelfFocalDissipative: return "SelfFocalDissipative";
    case VerdictTag::Pole: return "Pole";
  }
  return "?";
}

struct ClosureReport {
  double period = 0.0;
  std::size_t n_dirs = 0;
  double residual = 0.0;
  double worst_theta = 0.0;
  double base_residual = 0.0;
  double angle_residual = 0.0;
};

struct MapAnalysis {
  Orientation orientation = Orientation::Preserving;
  std::optional<RotationEstimate> rotation;
  double reversibility_defect = 0.0;
  double identity_defect = 0.0;
  double identity_defect_square = 0.0;
  FixedPointSet fixed_points_square;
  bool fixed_point_continuum = false;
  std::optional<BasinReport> basins;
  UlamDensity ulam_coarse;
  UlamDensity ulam_fine;
  ConservativityReport conservativity;
  std::vector<std::string> diagnostics;
};

struct Verdict {
  VerdictTag tag = VerdictTag::NotSelfFocal;
  bool inconclusive = false;
  std::vector<std::string> diagnostics;
  ChartPoint point;
  std::optional<double> loop_fraction;
  std::optional<SelfFocalReport> probe;
  std::optional<CircleMapGrid> return_map;
  std::optional<MapAnalysis> analysis;
  std::optional<ClosureReport> closure;
  ClassifierConfig config;

  std::optional<double> T_p() const { return probe ? probe->T_p : std::nullopt; }
};

/// Runs every circle-map analysis on a return map. Exposed separately so
/// synthetic maps can be fed through the same decision path.
inline MapAnalysis analyze_return_map(const CircleMap& f, const ClassifierConfig& cfg) {
  MapAnalysis a;
  a.orientation = orientation(f);
  if (a.orientation == Orientation::Reversing) {
    a.diagnostics.emplace_back("OrientationReversingAnomaly: return map reverses the fiber orientation");
  } else {
    a.rotation = rotation_number(f, cfg.rotation_iterations);
  }
  a.reversibility_defect = reversibility_defect(f);
  a.identity_defect = identity_defect(f);
  const CircleMap sq = compose_square(f);
  a.identity_defect_square = identity_defect(sq);
  if (a.identity_defect_square <= cfg.pole_tol) {
    a.fixed_point_continuum = true;
  } else {
    try {
      a.fixed_points_square = fixed_points(sq);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooManyFixedPoints) throw;
      a.fixed_point_continuum = true;
      a.diagnostics.emplace_back(std::string("fixed points: ") + e.what());
    }
    if (!a.fixed_point_continuum) a.basins = birkhoff_basins(sq, a.fixed_points_square, cfg.basin_orbits, cfg.basin_iterations);
  }
  UlamOptions uo;
  uo.samples_per_bin = cfg.ulam_samples_per_bin;
  uo.threads = cfg.threads;
  a.ulam_coarse = ulam_density(f, cfg.ulam_bins, uo);
  a.ulam_fine = ulam_density(f, 2 * cfg.ulam_bins, uo);
  a.conservativity = conservativity_verdict(a.ulam_coarse, a.ulam_fine, a.fixed_points_square,
                                            a.basins ? &*a.basins : nullptr, cfg.thresholds);
  return a;
}

/// Follows n_dirs geodesics from p for time 2 T_p and measures how far each
/// lands from its starting unit covector (base distance + angle distance).
inline ClosureReport verify_pole(const SurfaceSpec& surface, const ChartPoint& p, double T_p, std::size_t n_dirs,
                                 const FlowConfig& cfg, std::size_t threads = 1) {
  const ChartPoint base = surface.designate(p);
  const FlowConfig rc = cfg.resolved(surface, false);
  std::vector<double> dx(n_dirs), da(n_dirs);
  parallel_for(n_dirs, threads, [&](std::size_t i) {
    const double theta = kTwoPi * static_cast<double>(i) / static_cast<double>(n_dirs);
    const PhasePoint start = angle_to_covector(surface, base, theta);
    const PhasePoint end = integrate(surface, start, 2.0 * T_p, rc);
    const auto local = try_transition(surface, end, base.chart);
    if (!local) {
      dx[i] = da[i] = std::numeric_limits<double>::infinity();
      return;
    }
    dx[i] = base_distance(surface, base, *local);
    da[i] = circle_distance(covector_to_angle(surface, *local), theta);
  });
  ClosureReport r;
  r.period = 2.0 * T_p;
  r.n_dirs = n_dirs;
  for (std::size_t i = 0; i < n_dirs; ++i) {
    const double total = dx[i] + da[i];
    if (i == 0 || total > r.residual) {
      r.residual = total;
      r.worst_theta = kTwoPi * static_cast<double>(i) / static_cast<double>(n_dirs);
    }
    r.base_residual = std::max(r.base_residual, dx[i]);
    r.angle_residual = std::max(r.angle_residual, da[i]);
  }
  return r;
}

namespace detail {

inline void decide(Verdict& v, const SurfaceSpec& surface, const ClassifierConfig& rc) {
  const MapAnalysis& a = *v.analysis;
  const bool near_identity = a.identity_defect_square <= rc.pole_tol;
  // inconclusive cases keep the tag closest to what the map looks like
  v.tag = near_identity ? VerdictTag::Pole : VerdictTag::SelfFocalDissipative;
  switch (a.conservativity.verdict) {
    case Conservativity::Conservative:
      if (!near_identity) {
        v.inconclusive = true;
        v.diagnostics.push_back("DichotomyViolation: conservative return map but identity_defect(square) = " +
                                format_double(a.identity_defect_square) + " > pole_tol");
        return;
      }
      v.closure = verify_pole(surface, v.point, *v.probe->T_p, rc.closure_directions, rc.flow, rc.threads);
      if (!(v.closure->residual <= rc.closure_tol)) {
        v.inconclusive = true;
        v.diagnostics.push_back("ClosureFailed: residual " + format_double(v.closure->residual) +
                                " at 2T_p exceeds closure_tol");
      }
      return;
    case Conservativity::Dissipative:
      if (near_identity) {
        v.inconclusive = true;
        v.diagnostics.push_back("Inconclusive: dissipative return map whose square is the identity to pole_tol");
      }
      v.tag = VerdictTag::SelfFocalDissipative;
      return;
    case Conservativity::Inconclusive:
      v.inconclusive = true;
      v.diagnostics.push_back("Inconclusive: conservativity (" + a.conservativity.reason + ")");
      return;
  }
}

}  // namespace detail

inline Verdict classify_point(const SurfaceSpec& surface, const ChartPoint& p, const ClassifierConfig& cfg) {
  Verdict v;
  v.config = cfg.resolved(surface);
  const ClassifierConfig& rc = v.config;
  v.point = surface.designate(p);
  try {
    v.probe = probe_self_focal(surface, v.point, rc.probe_directions, rc.time_tol, rc.flow, rc.threads);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Inconclusive) throw;
    v.tag = VerdictTag::NotSelfFocal;
    v.inconclusive = true;
    v.diagnostics.push_back(std::string("Inconclusive: self-focal probe: ") + e.what());
    return v;
  }
  if (!v.probe->is_self_focal) {
    v.tag = VerdictTag::NotSelfFocal;
    v.loop_fraction = v.probe->returning_fraction;
    return v;
  }
  v.loop_fraction = 1.0;
  v.return_map = build_return_map(surface, v.point, *v.probe->T_p, rc.map_directions, rc.flow, rc.threads,
                                  rc.derivative_floor);
  v.analysis = analyze_return_map(v.return_map->map(), rc);
  for (const auto& d : v.analysis->diagnostics) v.diagnostics.push_back(d);
  detail::decide(v, surface, rc);
  return v;
}

struct SweepEntry {
  ChartPoint point;
  double prefilter_fraction = 0.0;
  std::optional<Verdict> verdict;
  std::optional<std::string> error;
};

/// Classifies every candidate. Points whose coarse loop fraction is below
/// the prefilter threshold are reported NotSelfFocal without the full
/// pipeline. Failures are recorded per point.
inline std::vector<SweepEntry> sweep(const SurfaceSpec& surface, const std::vector<ChartPoint>& points,
                                     const ClassifierConfig& cfg) {
  const ClassifierConfig rc = cfg.resolved(surface);
  ClassifierConfig inner = rc;
  inner.threads = 1;
  std::vector<SweepEntry> out(points.size());
  parallel_for(points.size(), rc.threads, [&](std::size_t i) {
    SweepEntry& e = out[i];
    e.point = points[i];
    try {
      e.point = surface.designate(points[i]);
      e.prefilter_fraction = loop_fraction(surface, e.point, rc.prefilter_directions, rc.flow.t_max, rc.flow);
      if (e.prefilter_fraction < rc.prefilter_threshold) {
        Verdict v;
        v.config = rc;
        v.point = e.point;
        v.tag = VerdictTag::NotSelfFocal;
        v.loop_fraction = e.prefilter_fraction;
        v.diagnostics.push_back("prefilter: loop fraction below threshold");
        e.verdict = std::move(v);
      } else {
        e.verdict = classify_point(surface, e.point, inner);
        e.verdict->config.threads = rc.threads;
      }
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
  });
  return out;
}

}  // namespace focal
