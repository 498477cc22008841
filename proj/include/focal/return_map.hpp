#pragma once

// Fans of geodesics from a base point: loop fractions, self-focal probing and
// the first return map on the fiber circle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "focal/circle_map.hpp"
#include "focal/error.hpp"
#include "focal/geodesic_flow.hpp"
#include "focal/parallel.hpp"
#include "focal/surfaces.hpp"

namespace focal {

struct ReturnSample {
  double theta_in = 0.0;
  double t_first = 0.0;
  double theta_out = 0.0;
  double miss_distance = 0.0;
};

struct SelfFocalReport {
  bool is_self_focal = false;
  std::optional<double> T_p;
  double returning_fraction = 0.0;
  /// Spread of the event times at the common return time, or of the first
  /// return times when no common time exists.
  double return_time_spread = 0.0;
  double first_return_spread = 0.0;
  double time_tol = 0.0;
  double t_max = 0.0;
  std::vector<ReturnSample> samples;  // returning directions only
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

inline double fan_angle(std::size_t i, std::size_t n) {
  return kTwoPi * static_cast<double>(i) / static_cast<double>(n);
}

inline std::vector<std::vector<CrossingEvent>> fan_events(const SurfaceSpec& surface, const ChartPoint& base,
                                                         std::size_t n, const FlowConfig& cfg, std::size_t threads) {
  std::vector<std::vector<CrossingEvent>> events(n);
  parallel_for(n, threads, [&](std::size_t i) { events[i] = detect_fiber_returns(surface, base, fan_angle(i, n), cfg); });
  return events;
}

}  // namespace detail

/// Fraction of n uniformly spaced directions at x that come back through x
/// before t_max.
inline double loop_fraction(const SurfaceSpec& surface, const ChartPoint& x, std::size_t n, double t_max,
                            const FlowConfig& cfg, std::size_t threads = 1) {
  if (n < 16) throw Error(ErrorCode::ConfigError, "loop_fraction needs at least 16 directions");
  FlowConfig c = cfg;
  if (t_max > 0.0) c.t_max = t_max;
  const ChartPoint base = surface.designate(x);
  const auto events = detail::fan_events(surface, base, n, c, threads);
  const auto hits = std::count_if(events.begin(), events.end(), [](const auto& e) { return !e.empty(); });
  return static_cast<double>(hits) / static_cast<double>(n);
}

/// time_tol <= 0 selects 1e-4 x the median first return time.
inline SelfFocalReport probe_self_focal(const SurfaceSpec& surface, const ChartPoint& p, std::size_t n, double time_tol,
                                        const FlowConfig& cfg, std::size_t threads = 1) {
  if (n < 64) throw Error(ErrorCode::ConfigError, "probe_self_focal needs at least 64 directions");
  const FlowConfig rc = cfg.resolved(surface);
  const ChartPoint base = surface.designate(p);
  const auto events = detail::fan_events(surface, base, n, rc, threads);

  SelfFocalReport r;
  r.t_max = rc.t_max;
  std::vector<double> firsts;
  for (std::size_t i = 0; i < n; ++i) {
    if (events[i].empty()) continue;
    const auto& e = events[i].front();
    r.samples.push_back({detail::fan_angle(i, n), e.t, e.theta_out, e.miss_distance});
    firsts.push_back(e.t);
  }
  r.returning_fraction = static_cast<double>(firsts.size()) / static_cast<double>(n);
  if (!firsts.empty()) {
    const auto [lo, hi] = std::minmax_element(firsts.begin(), firsts.end());
    r.first_return_spread = *hi - *lo;
  }
  r.return_time_spread = r.first_return_spread;
  r.time_tol = time_tol > 0.0 ? time_tol : 1e-4 * detail::median(firsts);
  if (firsts.size() < n) {
    if (r.returning_fraction > 0.98) {
      throw Error(ErrorCode::Inconclusive, "only " + format_double(r.returning_fraction) +
                                               " of directions returned before t_max = " + format_double(rc.t_max) +
                                               "; the horizon may be too short");
    }
    return r;
  }

  // smallest event time of direction 0 that every other direction shares
  for (const auto& candidate : events[0]) {
    std::vector<double> matched;
    matched.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& e : events[i]) {
        if (std::fabs(e.t - candidate.t) < std::fabs(best - candidate.t)) best = e.t;
      }
      if (std::fabs(best - candidate.t) > r.time_tol) break;
      matched.push_back(best);
    }
    if (matched.size() != n) continue;
    const auto [lo, hi] = std::minmax_element(matched.begin(), matched.end());
    if (*hi - *lo > r.time_tol) continue;
    r.is_self_focal = true;
    r.T_p = detail::median(matched);
    r.return_time_spread = *hi - *lo;
    break;
  }
  return r;
}

struct CircleMapGrid {
  std::size_t N = 0;
  std::vector<double> theta_in;
  std::vector<double> theta_out;
  std::vector<double> lifted;
  std::vector<double> t_first;
  std::vector<double> t_event;
  std::vector<double> miss_distance;
  int degree = 1;
  double T_p = 0.0;
  std::shared_ptr<const MonotonePeriodicInterpolant> interpolant;

  CircleMap map() const { return CircleMap::from_grid(interpolant); }
};

/// Builds a monotone periodic interpolant from lifted samples and checks the
/// derivative floor at nodes and cell midpoints.
inline std::shared_ptr<const MonotonePeriodicInterpolant> make_interpolant(const std::vector<double>& lifted,
                                                                            int degree, double derivative_floor) {
  const std::size_t n = lifted.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if ((lifted[i + 1] - lifted[i]) * degree <= 0.0) {
      throw Error(ErrorCode::NonMonotoneSamples, "lifted samples not monotone at node " + std::to_string(i));
    }
  }
  auto interp = std::make_shared<const MonotonePeriodicInterpolant>(lifted, degree);
  const double h = kTwoPi / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (double off : {0.0, 0.5}) {
      const double x = h * (static_cast<double>(i) + off);
      if (interp->derivative(x) * degree < derivative_floor) {
        throw Error(ErrorCode::NonMonotoneSamples,
                    "interpolant derivative below floor near theta = " + format_double(x));
      }
    }
  }
  return interp;
}

/// Samples the return map at time T_p on n directions. For each direction the
/// event closest to T_p is used.
inline CircleMapGrid build_return_map(const SurfaceSpec& surface, const ChartPoint& p, double T_p, std::size_t n,
                                      const FlowConfig& cfg, std::size_t threads = 1, double derivative_floor = 1e-9) {
  if (!(T_p > 0.0)) throw Error(ErrorCode::ConfigError, "T_p must be positive");
  if (n < 16) throw Error(ErrorCode::ConfigError, "return map needs at least 16 directions");
  FlowConfig c = cfg.resolved(surface, false);
  // events past T_p only matter when they are closer than the one before it
  c.t_max = std::min(c.t_max > 0.0 ? c.t_max : std::numeric_limits<double>::infinity(), 1.05 * T_p);
  const ChartPoint base = surface.designate(p);
  const auto events = detail::fan_events(surface, base, n, c, threads);

  CircleMapGrid g;
  g.N = n;
  g.T_p = T_p;
  for (std::size_t i = 0; i < n; ++i) {
    if (events[i].empty()) {
      throw Error(ErrorCode::Inconclusive, "direction theta = " + format_double(detail::fan_angle(i, n)) +
                                               " does not return before " + format_double(c.t_max));
    }
    const auto best = std::min_element(events[i].begin(), events[i].end(), [T_p](const auto& a, const auto& b) {
      return std::fabs(a.t - T_p) < std::fabs(b.t - T_p);
    });
    g.theta_in.push_back(detail::fan_angle(i, n));
    g.theta_out.push_back(best->theta_out);
    g.t_first.push_back(events[i].front().t);
    g.t_event.push_back(best->t);
    g.miss_distance.push_back(best->miss_distance);
  }
  g.lifted.resize(n);
  g.lifted[0] = wrap_pi(g.theta_out[0]);
  for (std::size_t i = 1; i < n; ++i) g.lifted[i] = g.lifted[i - 1] + wrap_pi(g.theta_out[i] - g.theta_out[i - 1]);
  const double closing = g.lifted[n - 1] + wrap_pi(g.theta_out[0] - g.theta_out[n - 1]) - g.lifted[0];
  const double turns = closing / kTwoPi;
  const long degree = std::lround(turns);
  if (std::fabs(turns - static_cast<double>(degree)) > 1e-6 || (degree != 1 && degree != -1)) {
    throw Error(ErrorCode::NonMonotoneSamples, "sampled return map has degree " + format_double(turns));
  }
  g.degree = static_cast<int>(degree);
  g.interpolant = make_interpolant(g.lifted, g.degree, derivative_floor);
  return g;
}

inline void write_return_map_csv(std::ostream& os, const CircleMapGrid& g) {
  os << "# first return map samples; angles in radians in the g-orthonormal coframe at the base point\n"
     << "# columns: theta_in,theta_out,t_first,miss_distance\n"
     << "theta_in,theta_out,t_first,miss_distance\n";
  for (std::size_t i = 0; i < g.N; ++i) {
    os << format_double(g.theta_in[i]) << ',' << format_double(g.theta_out[i]) << ',' << format_double(g.t_first[i])
       << ',' << format_double(g.miss_distance[i]) << '\n';
  }
}

}  // namespace focal
