#pragma once

// Dynamics of circle homeomorphisms: rotation numbers, fixed points,
// reversibility, Ulam invariant densities and conservativity verdicts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <boost/math/tools/minima.hpp>

#include "focal/circle_map.hpp"
#include "focal/error.hpp"
#include "focal/parallel.hpp"
#include "focal/surfaces.hpp"

namespace focal {

enum class Orientation { Preserving, Reversing };

inline const char* to_string(Orientation o) { return o == Orientation::Preserving ? "preserving" : "reversing"; }

inline Orientation orientation(const CircleMap& map) {
  return map.degree() > 0 ? Orientation::Preserving : Orientation::Reversing;
}

struct RotationEstimate {
  double value = 0.0;  // in [0, 2pi)
  double lower = 0.0;
  double upper = 0.0;
  std::size_t n_iter = 0;

  double width() const { return upper - lower; }

  /// True when some representative of `alpha` mod 2pi lies in [lower - slack, upper + slack].
  bool contains(double alpha, double slack = 0.0) const {
    const double mid = 0.5 * (lower + upper);
    const double rep = mid + wrap_pi(alpha - mid);
    return rep >= lower - slack && rep <= upper + slack;
  }
};

/// Rotation number in radians. Every displacement average (F^n(x) - x)/n is
/// within 2pi/n of the true value, so the bracket is the intersection of those
/// windows over 16 starting points.
inline RotationEstimate rotation_number(const CircleMap& map, std::size_t n_iter = 10000, double x0 = 0.0) {
  if (map.degree() != 1) {
    throw Error(ErrorCode::OrientationReversing, "rotation number is undefined for orientation reversing maps");
  }
  if (n_iter == 0) throw Error(ErrorCode::ConfigError, "n_iter must be positive");
  constexpr int kStarts = 16;
  std::array<double, kStarts> mean{};
  for (int k = 0; k < kStarts; ++k) {
    double x = wrap_angle(x0 + kTwoPi * k / kStarts);
    // F(x) - x is 2pi-periodic, so accumulate displacements on the reduced orbit
    double total = 0.0;
    for (std::size_t i = 0; i < n_iter; ++i) {
      const double y = map.lift(x);
      total += y - x;
      x = wrap_angle(y);
    }
    mean[k] = total / static_cast<double>(n_iter);
  }
  const double window = kTwoPi / static_cast<double>(n_iter);
  const auto [lo, hi] = std::minmax_element(mean.begin(), mean.end());
  const double d0 = mean[0];
  RotationEstimate r;
  r.n_iter = n_iter;
  r.value = wrap_angle(d0);
  if (r.value >= kTwoPi) r.value = 0.0;
  const double offset = r.value - d0;
  r.lower = std::min(*hi - window, d0) + offset;
  r.upper = std::max(*lo + window, d0) + offset;
  // the intersection is at most 2 windows wide; drop the rounding excess
  while (r.upper - r.lower > 2.0 * window && r.upper > r.value) r.upper = std::nextafter(r.upper, r.lower);
  return r;
}

/// sup over a 1024 grid of dist(s f s(theta), f^-1(theta)) with s(theta) = theta + pi.
inline double reversibility_defect(const CircleMap& map, std::size_t grid = 1024) {
  double worst = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double theta = kTwoPi * static_cast<double>(i) / static_cast<double>(grid);
    const double lhs = map(theta + kPi) + kPi;
    worst = std::max(worst, circle_distance(lhs, map.inverse(theta)));
  }
  return worst;
}

inline double identity_defect(const CircleMap& map, std::size_t grid = 4096) {
  double worst = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double theta = kTwoPi * static_cast<double>(i) / static_cast<double>(grid);
    worst = std::max(worst, circle_distance(map(theta), theta));
  }
  return worst;
}

/// f o f. Grid-backed maps are resampled on twice as many nodes.
inline CircleMap compose_square(const CircleMap& map) {
  const int degree = map.degree() * map.degree();
  if (map.grid_nodes() == 0) {
    return CircleMap::from_lift([map](double x) { return map.lift(map.lift(x)); }, degree);
  }
  const std::size_t n = 2 * map.grid_nodes();
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
    values[i] = map.lift(map.lift(x));
  }
  return CircleMap::from_grid(std::make_shared<MonotonePeriodicInterpolant>(std::move(values), degree));
}

enum class Stability { Attracting, Repelling, Neutral };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::Attracting: return "attracting";
    case Stability::Repelling: return "repelling";
    case Stability::Neutral: return "neutral";
  }
  return "?";
}

struct FixedPoint {
  double theta = 0.0;
  double multiplier = 1.0;
  Stability stability = Stability::Neutral;
  bool tangential = false;  // found as a dip without sign change
};

struct FixedPointSet {
  std::vector<FixedPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_neutral() const {
    return std::any_of(points.begin(), points.end(), [](const FixedPoint& p) { return p.stability == Stability::Neutral; });
  }
  bool has_hyperbolic() const {
    return std::any_of(points.begin(), points.end(), [](const FixedPoint& p) { return p.stability != Stability::Neutral; });
  }
};

struct FixedPointOptions {
  std::size_t grid = 4096;
  double root_tol = 1e-12;
  double dip_tol = 1e-9;
  double derivative_step = 1e-6;
  double neutral_tol = 1e-6;
  std::size_t max_count = 10000;
  // this many consecutive dips means a whole arc of fixed points
  std::size_t continuum_run = 8;
};

inline FixedPointSet fixed_points(const CircleMap& map, const FixedPointOptions& opt = {}) {
  if (map.degree() != 1) {
    throw Error(ErrorCode::OrientationReversing, "fixed point scan expects an orientation preserving map");
  }
  const std::size_t n = opt.grid;
  const double h = kTwoPi / static_cast<double>(n);
  std::vector<double> disp(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = h * static_cast<double>(i);
    disp[i] = map.lift(x) - x;
  }
  const auto [mn, mx] = std::minmax_element(disp.begin(), disp.end());
  const long k_lo = static_cast<long>(std::ceil((*mn - opt.dip_tol) / kTwoPi));
  const long k_hi = static_cast<long>(std::floor((*mx + opt.dip_tol) / kTwoPi));

  std::vector<double> roots;
  std::vector<bool> tangential;
  for (long k = k_lo; k <= k_hi; ++k) {
    const double shift = kTwoPi * static_cast<double>(k);
    auto g = [&](double x) { return map.lift(x) - x - shift; };
    std::size_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = disp[i] - shift;
      const double b = disp[i + 1] - shift;
      const double x = h * static_cast<double>(i);
      run = std::fabs(a) < opt.dip_tol ? run + 1 : 0;
      if (run >= opt.continuum_run) {
        throw Error(ErrorCode::TooManyFixedPoints, "displacement vanishes on an arc near theta = " + format_double(x));
      }
      if (a == 0.0) {
        roots.push_back(x);
        tangential.push_back(false);
        continue;
      }
      if (a * b < 0.0) {
        double lo = x, hi = x + h, glo = a;
        while (hi - lo > opt.root_tol) {
          const double mid = 0.5 * (lo + hi);
          const double gm = g(mid);
          if (gm == 0.0) {
            lo = hi = mid;
            break;
          }
          if ((gm < 0.0) == (glo < 0.0)) {
            lo = mid;
            glo = gm;
          } else {
            hi = mid;
          }
        }
        roots.push_back(0.5 * (lo + hi));
        tangential.push_back(false);
        continue;
      }
      // local minimum of |g| without sign change
      if (std::fabs(a) < opt.dip_tol) {
        const double prev = i > 0 ? disp[i - 1] - shift : disp[n - 1] - shift;
        if (prev * a > 0.0 && std::fabs(a) <= std::fabs(prev) && std::fabs(a) <= std::fabs(b)) {
          auto absg = [&](double t) { return std::fabs(g(t)); };
          const auto best = boost::math::tools::brent_find_minima(absg, x - h, x + h, 40);
          roots.push_back(best.first);
          tangential.push_back(true);
        }
      }
      if (roots.size() > opt.max_count) {
        throw Error(ErrorCode::TooManyFixedPoints, "more than " + std::to_string(opt.max_count) + " fixed points");
      }
    }
  }

  FixedPointSet out;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    const double theta = wrap_angle(roots[i]);
    const bool dup = std::any_of(out.points.begin(), out.points.end(), [&](const FixedPoint& p) {
      return circle_distance(p.theta, theta) <= 10.0 * opt.root_tol;
    });
    if (dup) continue;
    FixedPoint fp;
    fp.theta = theta >= kTwoPi ? 0.0 : theta;
    const double d = opt.derivative_step;
    fp.multiplier = (map.lift(fp.theta + d) - map.lift(fp.theta - d)) / (2.0 * d);
    fp.tangential = tangential[i];
    if (fp.tangential || std::fabs(fp.multiplier - 1.0) <= opt.neutral_tol) {
      fp.stability = Stability::Neutral;
    } else {
      fp.stability = std::fabs(fp.multiplier) < 1.0 ? Stability::Attracting : Stability::Repelling;
    }
    out.points.push_back(fp);
  }
  std::sort(out.points.begin(), out.points.end(), [](const FixedPoint& a, const FixedPoint& b) { return a.theta < b.theta; });
  return out;
}

struct UlamDensity {
  std::size_t M = 0;
  std::vector<double> mass;
  double atomicity = 0.0;
  double l1_to_uniform = 0.0;
  double residual = 0.0;  // |vP - v|_1
  std::size_t sweeps = 0;
  bool direct_solve = false;

  double bin_center(std::size_t j) const { return kTwoPi * (static_cast<double>(j) + 0.5) / static_cast<double>(M); }
};

struct UlamOptions {
  std::size_t samples_per_bin = 32;
  double tolerance = 1e-12;
  std::size_t max_sweeps = 100000;
  std::size_t threads = 1;
};

namespace detail {

inline double l1_residual(const Eigen::SparseMatrix<double, Eigen::RowMajor>& P, const Eigen::VectorXd& v) {
  const Eigen::VectorXd w = P.transpose() * v;
  return (w - v).lpNorm<1>();
}

}  // namespace detail

/// Stationary vector of the Ulam transfer matrix, starting from the uniform
/// distribution. Slowly mixing chains (near-rotations) fall back to a sparse
/// direct solve once the sweep budget runs out.
inline UlamDensity ulam_density(const CircleMap& map, std::size_t M, const UlamOptions& opt = {}) {
  if (M < 64) throw Error(ErrorCode::ConfigError, "ulam_density needs at least 64 bins");
  if (opt.samples_per_bin == 0) throw Error(ErrorCode::ConfigError, "samples_per_bin must be positive");
  const double h = kTwoPi / static_cast<double>(M);
  const double w = 1.0 / static_cast<double>(opt.samples_per_bin);
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(M);
  parallel_for(M, opt.threads, [&](std::size_t j) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t k = 0; k < opt.samples_per_bin; ++k) {
      const double theta = h * (static_cast<double>(j) + (static_cast<double>(k) + 0.5) * w);
      auto bin = static_cast<std::size_t>(map(theta) / h);
      if (bin >= M) bin = M - 1;
      auto it = std::find_if(row.begin(), row.end(), [bin](const auto& e) { return e.first == bin; });
      if (it == row.end()) {
        row.emplace_back(bin, w);
      } else {
        it->second += w;
      }
    }
    rows[j] = std::move(row);
  });
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t j = 0; j < M; ++j) {
    for (const auto& [bin, weight] : rows[j]) triplets.emplace_back(static_cast<int>(j), static_cast<int>(bin), weight);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> P(static_cast<int>(M), static_cast<int>(M));
  P.setFromTriplets(triplets.begin(), triplets.end());
  const Eigen::SparseMatrix<double> Pt = P.transpose();

  UlamDensity out;
  out.M = M;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(static_cast<int>(M), 1.0 / static_cast<double>(M));
  double residual = detail::l1_residual(P, v);
  std::size_t sweeps = 0;
  while (residual > opt.tolerance && sweeps < opt.max_sweeps) {
    Eigen::VectorXd next = Pt * v;
    next /= next.sum();
    residual = (next - v).lpNorm<1>();
    v.swap(next);
    ++sweeps;
  }
  out.sweeps = sweeps;
  if (residual > opt.tolerance) {
    // stationary equation v = vP with row 0 replaced by the normalization
    std::vector<Eigen::Triplet<double>> t2;
    for (std::size_t j = 0; j < M; ++j) {
      for (const auto& [bin, weight] : rows[j]) {
        if (bin != 0) t2.emplace_back(static_cast<int>(bin), static_cast<int>(j), weight);
      }
      if (j != 0) t2.emplace_back(static_cast<int>(j), static_cast<int>(j), -1.0);
      t2.emplace_back(0, static_cast<int>(j), 1.0);
    }
    Eigen::SparseMatrix<double> B(static_cast<int>(M), static_cast<int>(M));
    B.setFromTriplets(t2.begin(), t2.end());
    B.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(B);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<int>(M));
    rhs[0] = 1.0;
    Eigen::VectorXd x;
    if (lu.info() == Eigen::Success) x = lu.solve(rhs);
    const bool ok = lu.info() == Eigen::Success && x.allFinite() && x.minCoeff() > -1e-12;
    if (ok) {
      x = x.cwiseMax(0.0);
      x /= x.sum();
      const double r2 = detail::l1_residual(P, x);
      if (r2 <= 1e-10) {
        v = x;
        residual = r2;
        out.direct_solve = true;
      }
    }
    if (!out.direct_solve) {
      throw Error(ErrorCode::NonConvergent, "Ulam iteration stalled after " + std::to_string(sweeps) +
                                                " sweeps with residual " + format_double(residual));
    }
  }
  out.residual = residual;
  out.mass.assign(v.data(), v.data() + v.size());
  const double mx = *std::max_element(out.mass.begin(), out.mass.end());
  out.atomicity = static_cast<double>(M) * mx;
  const double u = 1.0 / static_cast<double>(M);
  for (double m : out.mass) out.l1_to_uniform += std::fabs(m - u);
  return out;
}

struct BasinReport {
  std::size_t n_orbits = 0;
  std::size_t n_iter = 0;
  std::vector<double> seeds;
  std::vector<int> assignment;     // index into the fixed point list, -1 if none
  std::vector<double> fractions;   // per fixed point
  std::size_t non_convergent = 0;
  bool degenerate = false;         // every seed is stationary
};

inline BasinReport birkhoff_basins(const CircleMap& map, const FixedPointSet& fps, std::size_t n_orbits = 256,
                                   std::size_t n_iter = 1000, double capture = 1e-6) {
  BasinReport r;
  r.n_orbits = n_orbits;
  r.n_iter = n_iter;
  r.fractions.assign(fps.size(), 0.0);
  std::size_t stationary = 0;
  for (std::size_t i = 0; i < n_orbits; ++i) {
    const double seed = kTwoPi * (static_cast<double>(i) + 0.5) / static_cast<double>(n_orbits);
    r.seeds.push_back(seed);
    if (circle_distance(map(seed), seed) <= 1e-12) ++stationary;
    double x = seed;
    for (std::size_t k = 0; k < n_iter; ++k) x = map(x);
    int owner = -1;
    for (std::size_t j = 0; j < fps.size(); ++j) {
      if (circle_distance(x, fps.points[j].theta) <= capture) {
        owner = static_cast<int>(j);
        break;
      }
    }
    r.assignment.push_back(owner);
    if (owner >= 0) {
      r.fractions[static_cast<std::size_t>(owner)] += 1.0 / static_cast<double>(n_orbits);
    } else {
      ++r.non_convergent;
    }
  }
  r.degenerate = n_orbits > 0 && stationary == n_orbits;
  return r;
}

enum class Conservativity { Conservative, Dissipative, Inconclusive };

inline const char* to_string(Conservativity c) {
  switch (c) {
    case Conservativity::Conservative: return "Conservative";
    case Conservativity::Dissipative: return "Dissipative";
    case Conservativity::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct ConservativityThresholds {
  double growth_ratio = 1.6;
  double max_atomicity = 8.0;
};

struct ConservativityReport {
  Conservativity verdict = Conservativity::Inconclusive;
  double atomicity_ratio = 0.0;
  std::string reason;
};

/// `coarse` and `fine` are Ulam densities at M and 2M bins. `fps` and `basins`
/// refer to the map whose dynamics decide the case (usually f o f).
inline ConservativityReport conservativity_verdict(const UlamDensity& coarse, const UlamDensity& fine,
                                                   const FixedPointSet& fps, const BasinReport* basins = nullptr,
                                                   const ConservativityThresholds& th = {}) {
  ConservativityReport r;
  r.atomicity_ratio = fine.atomicity / coarse.atomicity;
  if (fps.has_neutral()) {
    r.verdict = Conservativity::Inconclusive;
    r.reason = "neutral fixed point";
    return r;
  }
  bool hyperbolic_basin = false;
  if (basins != nullptr) {
    for (std::size_t j = 0; j < fps.size() && j < basins->fractions.size(); ++j) {
      if (fps.points[j].stability != Stability::Neutral && basins->fractions[j] > 0.0) hyperbolic_basin = true;
    }
  }
  if (r.atomicity_ratio >= th.growth_ratio || hyperbolic_basin) {
    r.verdict = Conservativity::Dissipative;
    r.reason = hyperbolic_basin ? "hyperbolic fixed point with nonempty basin" : "atomicity grows under refinement";
    return r;
  }
  if (std::max(coarse.atomicity, fine.atomicity) <= th.max_atomicity && !fps.has_hyperbolic()) {
    r.verdict = Conservativity::Conservative;
    r.reason = "bounded atomicity and no hyperbolic fixed points";
    return r;
  }
  r.verdict = Conservativity::Inconclusive;
  r.reason = fps.has_hyperbolic() ? "hyperbolic fixed points without captured orbits" : "atomicity above threshold";
  return r;
}

}  // namespace focal
