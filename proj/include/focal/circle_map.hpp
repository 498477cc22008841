#pragma once

// Circle maps on R/2piZ represented through a continuous lift F with
// F(x + 2pi) = F(x) + 2pi * degree.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "focal/error.hpp"
#include "focal/surfaces.hpp"

namespace focal {

/// Periodic monotone piecewise-cubic Hermite interpolant of a lift sampled on
/// the uniform grid x_i = 2pi i / N. Slopes use the harmonic-mean limiter, so
/// strictly monotone data give a strictly monotone interpolant.
class MonotonePeriodicInterpolant {
 public:
  MonotonePeriodicInterpolant(std::vector<double> values, int degree) : y_(std::move(values)), degree_(degree) {
    const std::size_t n = y_.size();
    if (n < 4) throw Error(ErrorCode::NonMonotoneSamples, "need at least 4 samples");
    h_ = kTwoPi / static_cast<double>(n);
    std::vector<double> secant(n);
    for (std::size_t i = 0; i < n; ++i) secant[i] = (node(i + 1) - node(i)) / h_;
    slope_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = secant[(i + n - 1) % n];
      const double b = secant[i];
      slope_[i] = a * b > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
    }
  }

  std::size_t size() const { return y_.size(); }
  int degree() const { return degree_; }
  const std::vector<double>& values() const { return y_; }

  double operator()(double x) const {
    const auto [i, t, shift] = locate(x);
    const double y0 = node(i), y1 = node(i + 1);
    const double m0 = slope_[i], m1 = slope_[(i + 1) % y_.size()];
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h_ * m0 + (-2 * t3 + 3 * t2) * y1 +
           (t3 - t2) * h_ * m1 + shift;
  }

  double derivative(double x) const {
    const auto [i, t, shift] = locate(x);
    (void)shift;
    const double y0 = node(i), y1 = node(i + 1);
    const double m0 = slope_[i], m1 = slope_[(i + 1) % y_.size()];
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * y0 + (-6 * t2 + 6 * t) * y1) / h_ + (3 * t2 - 4 * t + 1) * m0 + (3 * t2 - 2 * t) * m1;
  }

 private:
  // lifted node value with periodic extension
  double node(std::size_t i) const {
    const std::size_t n = y_.size();
    return y_[i % n] + kTwoPi * degree_ * static_cast<double>(i / n);
  }

  struct Where {
    std::size_t i;
    double t;
    double shift;
  };
  Where locate(double x) const {
    const double k = std::floor(x / kTwoPi);
    const double r = x - kTwoPi * k;
    std::size_t i = static_cast<std::size_t>(r / h_);
    if (i >= y_.size()) i = y_.size() - 1;
    return {i, (r - h_ * static_cast<double>(i)) / h_, kTwoPi * degree_ * k};
  }

  std::vector<double> y_;
  std::vector<double> slope_;
  int degree_;
  double h_;
};

/// A circle homeomorphism given by a lift. Immutable and cheap to copy.
class CircleMap {
 public:
  using Fn = std::function<double(double)>;

  /// Wraps a continuous lift. `grid_nodes` > 0 marks a grid-backed map.
  static CircleMap from_lift(Fn lift, int degree, std::size_t grid_nodes = 0) {
    if (degree != 1 && degree != -1) throw Error(ErrorCode::NonHomeomorphism, "degree must be +1 or -1");
    CircleMap m;
    m.lift_ = std::move(lift);
    m.degree_ = degree;
    m.grid_nodes_ = grid_nodes;
    return m;
  }

  /// Builds a lift of an arbitrary circle-valued evaluator by unwrapping it
  /// on a uniform grid; fails unless the result is a homeomorphism.
  static CircleMap from_circle_function(Fn f, std::size_t samples = 4096) {
    auto table = std::make_shared<std::vector<double>>(samples + 1);
    auto& t = *table;
    const double h = kTwoPi / static_cast<double>(samples);
    t[0] = f(0.0);
    for (std::size_t i = 1; i <= samples; ++i) {
      const double y = f(h * static_cast<double>(i % samples));
      t[i] = t[i - 1] + wrap_pi(y - t[i - 1]);
    }
    const double turns = (t[samples] - t[0]) / kTwoPi;
    const int degree = static_cast<int>(std::lround(turns));
    if (std::fabs(turns - degree) > 1e-9 || (degree != 1 && degree != -1)) {
      throw Error(ErrorCode::NonHomeomorphism, "sampled map has degree " + format_double(turns));
    }
    for (std::size_t i = 0; i < samples; ++i) {
      if ((t[i + 1] - t[i]) * degree <= 0.0) {
        throw Error(ErrorCode::NonHomeomorphism, "sampled lift is not strictly monotone near x = " +
                                                     format_double(h * static_cast<double>(i)));
      }
    }
    auto lift = [f, table, h, samples, degree](double x) {
      const double k = std::floor(x / kTwoPi);
      const double r = x - kTwoPi * k;
      std::size_t i = static_cast<std::size_t>(r / h);
      if (i >= samples) i = samples - 1;
      const double w = (r - h * static_cast<double>(i)) / h;
      const double guess = (1.0 - w) * (*table)[i] + w * (*table)[i + 1];
      const double y = f(r);
      return y + kTwoPi * std::round((guess - y) / kTwoPi) + kTwoPi * degree * k;
    };
    return from_lift(lift, degree);
  }

  static CircleMap from_grid(std::shared_ptr<const MonotonePeriodicInterpolant> interp) {
    const int degree = interp->degree();
    const std::size_t n = interp->size();
    return from_lift([interp](double x) { return (*interp)(x); }, degree, n);
  }

  static CircleMap rotation(double alpha) {
    return from_lift([alpha](double x) { return x + alpha; }, 1);
  }
  static CircleMap identity() { return rotation(0.0); }
  static CircleMap reflection() {
    return from_lift([](double x) { return -x; }, -1);
  }

  double lift(double x) const { return lift_(x); }
  double operator()(double theta) const { return wrap_angle(lift_(theta)); }
  int degree() const { return degree_; }
  std::size_t grid_nodes() const { return grid_nodes_; }

  /// Solves F(x) = y for the lift.
  double inverse_lift(double y) const {
    const double g0 = lift_(0.0) - degree_ * 0.0;
    // F(x) - degree * x is periodic, so the root lies within 2pi of this guess
    const double guess = degree_ * (y - g0);
    double lo = guess - kTwoPi - 1e-9, hi = guess + kTwoPi + 1e-9;
    auto f = [this, y](double x) { return degree_ * (lift_(x) - y); };
    double flo = f(lo), fhi = f(hi);
    for (int k = 0; k < 8 && flo > 0.0; ++k) flo = f(lo -= kTwoPi);
    for (int k = 0; k < 8 && fhi < 0.0; ++k) fhi = f(hi += kTwoPi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    std::uintmax_t iters = 200;
    auto tol = [](double a, double b) { return std::fabs(a - b) <= 4e-16 * std::max(1.0, std::fabs(a)); };
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    return 0.5 * (a + b);
  }

  double inverse(double theta) const { return wrap_angle(inverse_lift(theta)); }

  CircleMap inverse_map() const {
    const CircleMap self = *this;
    return from_lift([self](double y) { return self.inverse_lift(y); }, degree_, grid_nodes_);
  }

 private:
  CircleMap() = default;

  Fn lift_;
  int degree_ = 1;
  std::size_t grid_nodes_ = 0;
};

/// Lift normalized at x0: F(x0) is the representative of f(x0) nearest x0.
inline std::function<double(double)> build_lift(const CircleMap& map, double x0) {
  const double shift = kTwoPi * std::round((x0 - map.lift(x0)) / kTwoPi);
  return [map, shift](double x) { return map.lift(x) + shift; };
}

/// Checks strict monotonicity and the lift periodicity on a uniform grid.
inline void validate_homeomorphism(const CircleMap& map, std::size_t grid = 4096) {
  const double h = kTwoPi / static_cast<double>(grid);
  double prev = map.lift(0.0);
  for (std::size_t i = 1; i <= grid; ++i) {
    const double x = h * static_cast<double>(i);
    const double y = map.lift(x);
    if ((y - prev) * map.degree() <= 0.0) {
      throw Error(ErrorCode::NonHomeomorphism, "lift not strictly monotone near x = " + format_double(x));
    }
    prev = y;
  }
  const double jump = map.lift(kTwoPi) - map.lift(0.0);
  if (std::fabs(jump - kTwoPi * map.degree()) > 1e-9) {
    throw Error(ErrorCode::NonHomeomorphism, "lift fails F(x + 2pi) = F(x) + 2pi deg");
  }
}

}  // namespace focal
