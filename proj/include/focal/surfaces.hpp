#pragma once

// Real-analytic surfaces as chart atlases carrying metric jets, plus the
// fiber-circle parametrization of unit covectors used throughout the library.
//
// Built-ins:
//   RoundSphere / TriaxialEllipsoid  two angular charts whose polar axes are
//                                    z and x respectively (the second is the
//                                    first rotated by pi/2 about the y axis).
//   SurfaceOfRevolution              meridian chart (s, phi) plus a cap chart
//                                    around each pole.
//   ChartMetric                      a single rectangle with user metric.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/differentiation/autodiff.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "focal/error.hpp"
#include "focal/expression.hpp"

namespace focal {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Reduces an angle to [0, 2pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

/// Reduces an angle to (-pi, pi].
inline double wrap_pi(double a) {
  double r = wrap_angle(a);
  return r > kPi ? r - kTwoPi : r;
}

inline double circle_distance(double a, double b) { return std::fabs(wrap_pi(a - b)); }

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

/// Metric components and their first partials in one chart.
struct MetricJet {
  double g11 = 1.0, g12 = 0.0, g22 = 1.0;
  double du_g11 = 0.0, du_g12 = 0.0, du_g22 = 0.0;
  double dv_g11 = 0.0, dv_g12 = 0.0, dv_g22 = 0.0;

  double det() const { return g11 * g22 - g12 * g12; }
  bool positive_definite() const { return g11 > 0.0 && g22 > 0.0 && det() > 0.0; }
  Eigen::Matrix2d matrix() const { return (Eigen::Matrix2d() << g11, g12, g12, g22).finished(); }
  Eigen::Matrix2d inverse() const {
    const double d = det();
    return (Eigen::Matrix2d() << g22 / d, -g12 / d, -g12 / d, g11 / d).finished();
  }
};

struct ChartPoint {
  int chart = 0;
  double u = 0.0;
  double v = 0.0;
};

/// A point (x, xi) of the cotangent bundle in chart coordinates.
struct PhasePoint {
  int chart = 0;
  double u = 0.0;
  double v = 0.0;
  double pu = 0.0;
  double pv = 0.0;

  ChartPoint base() const { return {chart, u, v}; }
  Eigen::Vector2d covector() const { return {pu, pv}; }
};

/// Point image in the target chart together with d(target)/d(source).
struct ChartMapping {
  double u = 0.0;
  double v = 0.0;
  Eigen::Matrix2d jacobian = Eigen::Matrix2d::Identity();
};

class Chart {
 public:
  virtual ~Chart() = default;
  virtual MetricJet metric(double u, double v) const = 0;
  /// Distance (in coordinate units) from the chart's degenerate boundary;
  /// negative outside the domain.
  virtual double depth(double u, double v) const = 0;
  virtual bool periodic_v() const { return false; }
  virtual std::string name() const = 0;
};

struct NamedPoint {
  std::string name;
  ChartPoint point;
};

class Atlas {
 public:
  virtual ~Atlas() = default;
  virtual std::size_t size() const = 0;
  virtual const Chart& chart(std::size_t i) const = 0;
  virtual std::optional<ChartMapping> map_point(int from, int to, double u, double v) const = 0;
  virtual double length_scale() const = 0;
  virtual std::optional<double> period_hint() const = 0;
  virtual std::vector<NamedPoint> named_points() const = 0;
};

/// Margin by which chart domains are inflated when accepting points.
inline constexpr double kOverlapMargin = 0.05;

// ---------------------------------------------------------------------------
// Variant parameter blocks

struct RoundSphere {
  double radius = 1.0;
};

struct TriaxialEllipsoid {
  double a = 0.0, b = 0.0, c = 0.0;
};

/// Meridian (r(s), z(s)) for s in [s_min, s_max] with r = 0 at both ends.
/// When z is empty, s is arclength and the metric is ds^2 + r(s)^2 dphi^2.
struct SurfaceOfRevolution {
  std::string r;
  std::string z;
  double s_min = 0.0;
  double s_max = kPi;
};

struct ChartMetric {
  std::string g11, g12, g22;
  double u_min = 0.0, u_max = 1.0, v_min = 0.0, v_max = 1.0;
  bool periodic_v = false;
  double scale = 1.0;
};

namespace detail {

// ---------------------------------------------------------------------------
// Quadrics: X = M * S(u, v) with S the unit-sphere angular parametrization.

class QuadricChart final : public Chart {
 public:
  QuadricChart(Eigen::Matrix3d m, std::string name)
      : m_(std::move(m)), minv_(m_.inverse()), name_(std::move(name)) {}

  Eigen::Vector3d embed(double u, double v) const {
    return m_ * Eigen::Vector3d(std::sin(u) * std::cos(v), std::sin(u) * std::sin(v), std::cos(u));
  }

  Eigen::Matrix<double, 3, 2> tangent(double u, double v) const {
    const double su = std::sin(u), cu = std::cos(u), sv = std::sin(v), cv = std::cos(v);
    Eigen::Matrix<double, 3, 2> t;
    t.col(0) = m_ * Eigen::Vector3d(cu * cv, cu * sv, -su);
    t.col(1) = m_ * Eigen::Vector3d(-su * sv, su * cv, 0.0);
    return t;
  }

  std::pair<double, double> coords(const Eigen::Vector3d& x) const {
    const Eigen::Vector3d s = minv_ * x;
    return {std::atan2(std::hypot(s.x(), s.y()), s.z()), std::atan2(s.y(), s.x())};
  }

  MetricJet metric(double u, double v) const override {
    const double su = std::sin(u), cu = std::cos(u), sv = std::sin(v), cv = std::cos(v);
    const Eigen::Vector3d xu = m_ * Eigen::Vector3d(cu * cv, cu * sv, -su);
    const Eigen::Vector3d xv = m_ * Eigen::Vector3d(-su * sv, su * cv, 0.0);
    const Eigen::Vector3d xuu = m_ * Eigen::Vector3d(-su * cv, -su * sv, -cu);
    const Eigen::Vector3d xuv = m_ * Eigen::Vector3d(-cu * sv, cu * cv, 0.0);
    const Eigen::Vector3d xvv = m_ * Eigen::Vector3d(-su * cv, -su * sv, 0.0);
    MetricJet j;
    j.g11 = xu.dot(xu);
    j.g12 = xu.dot(xv);
    j.g22 = xv.dot(xv);
    j.du_g11 = 2.0 * xuu.dot(xu);
    j.dv_g11 = 2.0 * xuv.dot(xu);
    j.du_g12 = xuu.dot(xv) + xu.dot(xuv);
    j.dv_g12 = xuv.dot(xv) + xu.dot(xvv);
    j.du_g22 = 2.0 * xuv.dot(xv);
    j.dv_g22 = 2.0 * xvv.dot(xv);
    return j;
  }

  double depth(double u, double) const override { return std::min(u, kPi - u); }
  bool periodic_v() const override { return true; }
  std::string name() const override { return name_; }

 private:
  Eigen::Matrix3d m_;
  Eigen::Matrix3d minv_;
  std::string name_;
};

class QuadricAtlas final : public Atlas {
 public:
  QuadricAtlas(double a, double b, double c, bool ellipsoid) : a_(a), b_(b), c_(c), ellipsoid_(ellipsoid) {
    const Eigen::Matrix3d d = Eigen::Vector3d(a, b, c).asDiagonal();
    // rotation by pi/2 about y: (s1, s2, s3) -> (s3, s2, -s1)
    Eigen::Matrix3d q;
    q << 0, 0, 1, 0, 1, 0, -1, 0, 0;
    charts_[0] = std::make_unique<QuadricChart>(d, "polar-z");
    charts_[1] = std::make_unique<QuadricChart>(d * q, "polar-x");
  }

  std::size_t size() const override { return 2; }
  const Chart& chart(std::size_t i) const override { return *charts_.at(i); }
  const QuadricChart& quadric_chart(std::size_t i) const { return *charts_.at(i); }

  std::optional<ChartMapping> map_point(int from, int to, double u, double v) const override {
    if (from == to) return ChartMapping{u, v, Eigen::Matrix2d::Identity()};
    const auto& src = *charts_.at(static_cast<std::size_t>(from));
    const auto& dst = *charts_.at(static_cast<std::size_t>(to));
    const auto [u2, v2] = dst.coords(src.embed(u, v));
    if (dst.depth(u2, v2) < 1e-6) return std::nullopt;
    const auto ts = src.tangent(u, v);
    const auto td = dst.tangent(u2, v2);
    const Eigen::Matrix2d gram = td.transpose() * td;
    ChartMapping m{u2, v2, gram.ldlt().solve(td.transpose() * ts)};
    return m;
  }

  double length_scale() const override { return std::cbrt(a_ * b_ * c_); }

  /// Circumference of the principal ellipse in the plane of the longest and
  /// shortest axes (the common loop length from an umbilic; 2 pi R on spheres).
  std::optional<double> period_hint() const override {
    auto speed = [this](double t) { return std::hypot(a_ * std::sin(t), c_ * std::cos(t)); };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(speed, 0.0, kTwoPi, 15, 1e-14);
  }

  ChartPoint point_from_embedding(const Eigen::Vector3d& x) const {
    ChartPoint best;
    double best_depth = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 2; ++i) {
      const auto [u, v] = charts_[static_cast<std::size_t>(i)]->coords(x);
      const double d = charts_[static_cast<std::size_t>(i)]->depth(u, v);
      if (d > best_depth + 1e-12) {
        best_depth = d;
        best = {i, u, v};
      }
    }
    return best;
  }

  std::vector<Eigen::Vector3d> umbilics() const {
    const double a2 = a_ * a_, b2 = b_ * b_, c2 = c_ * c_;
    const double x = a_ * std::sqrt((a2 - b2) / (a2 - c2));
    const double z = c_ * std::sqrt((b2 - c2) / (a2 - c2));
    return {{x, 0.0, z}, {-x, 0.0, z}, {x, 0.0, -z}, {-x, 0.0, -z}};
  }

  std::vector<NamedPoint> named_points() const override {
    std::vector<NamedPoint> out;
    out.push_back({"north_pole", point_from_embedding({0.0, 0.0, c_})});
    out.push_back({"south_pole", point_from_embedding({0.0, 0.0, -c_})});
    if (ellipsoid_) {
      const auto u = umbilics();
      for (std::size_t i = 0; i < u.size(); ++i) {
        out.push_back({"umbilic" + std::to_string(i), point_from_embedding(u[i])});
      }
    }
    return out;
  }

 private:
  double a_, b_, c_;
  bool ellipsoid_;
  std::array<std::unique_ptr<QuadricChart>, 2> charts_;
};

// ---------------------------------------------------------------------------
// Surfaces of revolution

struct ProfileJet {
  double r = 0, r1 = 0, r2 = 0, r3 = 0;
  double z1 = 0, z2 = 0;
};

class Profile {
 public:
  Profile(const SurfaceOfRevolution& p)
      : r_(Expression::parse(p.r, {"s"})), s0_(p.s_min), s1_(p.s_max), arclength_(p.z.empty()) {
    if (!arclength_) z_ = Expression::parse(p.z, {"s"});
    if (!(s1_ > s0_)) throw Error(ErrorCode::ConfigError, "surface_of_revolution: s_max must exceed s_min");
    validate();
  }

  double s0() const { return s0_; }
  double s1() const { return s1_; }
  double span() const { return s1_ - s0_; }
  bool arclength() const { return arclength_; }
  double cap_extent() const { return cap_extent_; }
  double radius_scale() const { return r_max_; }
  double equator() const { return s_equator_; }

  ProfileJet jet(double s) const {
    using boost::math::differentiation::make_fvar;
    const auto x = make_fvar<double, 3>(s);
    const auto r = r_.eval1(x);
    ProfileJet j;
    j.r = r.derivative(0);
    j.r1 = r.derivative(1);
    j.r2 = r.derivative(2);
    j.r3 = r.derivative(3);
    if (!arclength_) {
      const auto z = z_.eval1(x);
      j.z1 = z.derivative(1);
      j.z2 = z.derivative(2);
    }
    return j;
  }

  double radius(double s) const { return r_(s); }

  double meridian_speed(double s) const {
    if (arclength_) return 1.0;
    const auto j = jet(s);
    return std::hypot(j.r1, j.z1);
  }

  /// s of the cap point at parameter distance sigma from the pole on `side`
  /// (+1 north at s_min, -1 south at s_max).
  double s_of(int side, double sigma) const { return side > 0 ? s0_ + sigma : s1_ - sigma; }

  /// Cap radial coordinate R(sigma) and dR/dsigma.
  std::pair<double, double> cap_radial(int side, double sigma) const {
    if (arclength_) return {sigma, 1.0};
    const auto j = jet(s_of(side, sigma));
    return {j.r, side > 0 ? j.r1 : -j.r1};
  }

  /// Inverse of cap_radial in sigma.
  double cap_sigma(int side, double rho) const {
    if (arclength_) return rho;
    if (rho <= 0.0) return 0.0;
    const auto [r_lim, dr_lim] = cap_radial(side, sigma_lim_);
    if (rho >= r_lim) return sigma_lim_ + (rho - r_lim) / dr_lim;
    const double slope0 = cap_radial(side, 0.0).second;
    const double guess = std::clamp(rho / slope0, 0.0, sigma_lim_);
    auto f = [&](double sg) {
      const auto [rr, dr] = cap_radial(side, sg);
      return std::make_pair(rr - rho, dr);
    };
    std::uintmax_t iters = 60;
    return boost::math::tools::newton_raphson_iterate(f, guess, 0.0, sigma_lim_, 50, iters);
  }

 private:
  void validate() {
    const double span = s1_ - s0_;
    r_max_ = 0.0;
    for (int i = 1; i < 400; ++i) {
      const double s = s0_ + span * i / 400.0;
      const double r = radius(s);
      if (!(r > 0.0)) {
        throw Error(ErrorCode::ConfigError, "surface_of_revolution: r(s) must be positive inside (s_min, s_max)");
      }
      if (r > r_max_) {
        r_max_ = r;
        s_equator_ = s;
      }
    }
    const double tol = 1e-9 * r_max_;
    const auto j0 = jet(s0_);
    const auto j1 = jet(s1_);
    if (std::fabs(j0.r) > tol || std::fabs(j1.r) > tol) {
      throw Error(ErrorCode::ConfigError, "surface_of_revolution: r must vanish at s_min and s_max (poles)");
    }
    if (!(j0.r1 > 0.0) || !(j1.r1 < 0.0)) {
      throw Error(ErrorCode::ConfigError, "surface_of_revolution: r must leave the poles transversally");
    }
    // smoothness at the poles: the meridian must meet the axis at a right angle
    if (arclength_) {
      if (std::fabs(std::fabs(j0.r1) - 1.0) > 1e-8 || std::fabs(std::fabs(j1.r1) - 1.0) > 1e-8) {
        throw Error(ErrorCode::ConfigError, "surface_of_revolution: |dr/ds| must be 1 at the poles");
      }
    } else if (std::fabs(j0.z1) > 1e-8 * std::fabs(j0.r1) || std::fabs(j1.z1) > 1e-8 * std::fabs(j1.r1)) {
      throw Error(ErrorCode::ConfigError, "surface_of_revolution: dz/ds must vanish at the poles");
    }
    // caps stay where the radial coordinate is strongly monotone
    sigma_lim_ = 0.5 * span;
    if (!arclength_) {
      for (int side : {+1, -1}) {
        const double slope0 = cap_radial(side, 0.0).second;
        for (int i = 1; i <= 200; ++i) {
          const double sg = 0.5 * span * i / 200.0;
          if (cap_radial(side, sg).second <= 0.2 * slope0) {
            sigma_lim_ = std::min(sigma_lim_, 0.5 * span * (i - 1) / 200.0);
            break;
          }
        }
      }
    }
    cap_extent_ = std::min(0.4 * span, 0.9 * sigma_lim_);
    if (!(cap_extent_ > 0.15)) {
      throw Error(ErrorCode::ConfigError, "surface_of_revolution: pole caps too small for chart switching");
    }
  }

  Expression r_;
  Expression z_;
  double s0_, s1_;
  bool arclength_;
  double r_max_ = 0.0;
  double s_equator_ = 0.0;
  double sigma_lim_ = 0.0;
  double cap_extent_ = 0.0;
};

class MeridianChart final : public Chart {
 public:
  explicit MeridianChart(std::shared_ptr<const Profile> p) : p_(std::move(p)) {}

  MetricJet metric(double s, double) const override {
    const auto j = p_->jet(s);
    MetricJet m;
    m.g11 = p_->arclength() ? 1.0 : j.r1 * j.r1 + j.z1 * j.z1;
    m.g12 = 0.0;
    m.g22 = j.r * j.r;
    m.du_g11 = p_->arclength() ? 0.0 : 2.0 * (j.r1 * j.r2 + j.z1 * j.z2);
    m.du_g22 = 2.0 * j.r * j.r1;
    return m;
  }

  double depth(double s, double) const override { return std::min(s - p_->s0(), p_->s1() - s); }
  bool periodic_v() const override { return true; }
  std::string name() const override { return "meridian"; }

 private:
  std::shared_ptr<const Profile> p_;
};

/// Cartesian chart around a pole. With an explicit z(s) the coordinates are
/// the projection (r cos phi, r sin phi) onto the equatorial plane; for an
/// arclength profile they are geodesic normal coordinates. The south cap
/// flips the angular sense so that every chart shares one orientation.
class CapChart final : public Chart {
 public:
  CapChart(std::shared_ptr<const Profile> p, int side) : p_(std::move(p)), side_(side) {}

  MetricJet metric(double x, double y) const override {
    const double rho = std::hypot(x, y);
    const double sigma = p_->cap_sigma(side_, rho);
    const auto j = p_->jet(p_->s_of(side_, sigma));
    // g_ij = k delta_ij + q x_i x_j with k, q functions of rho
    double k = 1.0, kp_over_rho = 0.0, q = 0.0, qp_over_rho = 0.0;
    if (!p_->arclength()) {
      double w, c = 0.0;
      if (sigma < 1e-7 * p_->span()) {
        w = j.z2 / (j.r1 * j.r1);
      } else {
        const double rr1 = j.r1 * j.r;
        w = j.z1 / rr1;
        const double ws = (j.z2 * rr1 - j.z1 * (j.r2 * j.r + j.r1 * j.r1)) / (rr1 * rr1);
        c = 2.0 * w * ws / rr1;
      }
      q = w * w;
      qp_over_rho = c;
    } else {
      const double dr = side_ > 0 ? j.r1 : -j.r1;
      const double d3r = side_ > 0 ? j.r3 : -j.r3;
      if (rho < 1e-4) {
        k = 1.0 + d3r * rho * rho / 3.0;
        kp_over_rho = 2.0 * d3r / 3.0;
        q = -d3r / 3.0;
      } else {
        const double ratio = j.r / rho;
        k = ratio * ratio;
        const double kp = 2.0 * ratio * (dr * rho - j.r) / (rho * rho);
        q = (1.0 - k) / (rho * rho);
        const double qp = -kp / (rho * rho) - 2.0 * (1.0 - k) / (rho * rho * rho);
        kp_over_rho = kp / rho;
        qp_over_rho = qp / rho;
      }
    }
    MetricJet m;
    m.g11 = k + q * x * x;
    m.g12 = q * x * y;
    m.g22 = k + q * y * y;
    m.du_g11 = kp_over_rho * x + qp_over_rho * x * x * x + 2.0 * q * x;
    m.dv_g11 = kp_over_rho * y + qp_over_rho * x * x * y;
    m.du_g12 = qp_over_rho * x * x * y + q * y;
    m.dv_g12 = qp_over_rho * x * y * y + q * x;
    m.du_g22 = kp_over_rho * x + qp_over_rho * x * y * y;
    m.dv_g22 = kp_over_rho * y + qp_over_rho * y * y * y + 2.0 * q * y;
    return m;
  }

  double depth(double x, double y) const override {
    return p_->cap_extent() - p_->cap_sigma(side_, std::hypot(x, y));
  }
  std::string name() const override { return side_ > 0 ? "north-cap" : "south-cap"; }

 private:
  std::shared_ptr<const Profile> p_;
  int side_;
};

class RevolutionAtlas final : public Atlas {
 public:
  explicit RevolutionAtlas(const SurfaceOfRevolution& spec) : p_(std::make_shared<Profile>(spec)) {
    charts_[0] = std::make_unique<MeridianChart>(p_);
    charts_[1] = std::make_unique<CapChart>(p_, +1);
    charts_[2] = std::make_unique<CapChart>(p_, -1);
  }

  std::size_t size() const override { return 3; }
  const Chart& chart(std::size_t i) const override { return *charts_.at(i); }
  const Profile& profile() const { return *p_; }

  std::optional<ChartMapping> map_point(int from, int to, double u, double v) const override {
    if (from == to) return ChartMapping{u, v, Eigen::Matrix2d::Identity()};
    if (from == 0) {
      const int side = to == 1 ? +1 : -1;
      const double sigma = side > 0 ? u - p_->s0() : p_->s1() - u;
      if (sigma > p_->cap_extent() + kOverlapMargin || sigma < 0.0) return std::nullopt;
      return meridian_to_cap(side, u, v);
    }
    if (to != 0) return std::nullopt;
    const int side = from == 1 ? +1 : -1;
    const double rho = std::hypot(u, v);
    const double sigma = p_->cap_sigma(side, rho);
    const double s = p_->s_of(side, sigma);
    if (charts_[0]->depth(s, 0.0) < 1e-6) return std::nullopt;
    const double phi = side > 0 ? std::atan2(v, u) : std::atan2(-v, u);
    const auto fwd = meridian_to_cap(side, s, phi);
    return ChartMapping{s, phi, fwd.jacobian.inverse()};
  }

  double length_scale() const override { return p_->radius_scale(); }

  std::optional<double> period_hint() const override {
    if (p_->arclength()) return 2.0 * p_->span();
    auto speed = [this](double s) { return p_->meridian_speed(s); };
    return 2.0 * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(speed, p_->s0(), p_->s1(), 15, 1e-14);
  }

  std::vector<NamedPoint> named_points() const override {
    return {{"north_pole", {1, 0.0, 0.0}}, {"south_pole", {2, 0.0, 0.0}}, {"equator", {0, p_->equator(), 0.0}}};
  }

 private:
  ChartMapping meridian_to_cap(int side, double s, double phi) const {
    const double sigma = side > 0 ? s - p_->s0() : p_->s1() - s;
    const auto [rr, dr_dsigma] = p_->cap_radial(side, sigma);
    const double dr_ds = side > 0 ? dr_dsigma : -dr_dsigma;
    const double c = std::cos(phi), sn = std::sin(phi);
    ChartMapping m;
    if (side > 0) {
      m.u = rr * c;
      m.v = rr * sn;
      m.jacobian << dr_ds * c, -rr * sn, dr_ds * sn, rr * c;
    } else {
      m.u = rr * c;
      m.v = -rr * sn;
      m.jacobian << dr_ds * c, -rr * sn, -dr_ds * sn, -rr * c;
    }
    return m;
  }

  std::shared_ptr<Profile> p_;
  std::array<std::unique_ptr<Chart>, 3> charts_;
};

// ---------------------------------------------------------------------------
// User metric on a rectangle

class RectangleChart final : public Chart {
 public:
  explicit RectangleChart(const ChartMetric& spec)
      : spec_(spec),
        g11_(Expression::parse(spec.g11, {"u", "v"})),
        g12_(Expression::parse(spec.g12, {"u", "v"})),
        g22_(Expression::parse(spec.g22, {"u", "v"})) {
    if (!(spec.u_max > spec.u_min) || !(spec.v_max > spec.v_min)) {
      throw Error(ErrorCode::ConfigError, "chart_metric: empty domain rectangle");
    }
  }

  MetricJet metric(double u, double v) const override {
    using boost::math::differentiation::make_fvar;
    using F = boost::math::differentiation::autodiff_fvar<double, 1>;
    const std::array<F, 2> at_u{make_fvar<double, 1>(u), F(v)};
    const std::array<F, 2> at_v{F(u), make_fvar<double, 1>(v)};
    MetricJet m;
    const auto e11u = g11_(std::span<const F>(at_u));
    const auto e12u = g12_(std::span<const F>(at_u));
    const auto e22u = g22_(std::span<const F>(at_u));
    m.g11 = e11u.derivative(0);
    m.g12 = e12u.derivative(0);
    m.g22 = e22u.derivative(0);
    m.du_g11 = e11u.derivative(1);
    m.du_g12 = e12u.derivative(1);
    m.du_g22 = e22u.derivative(1);
    m.dv_g11 = g11_(std::span<const F>(at_v)).derivative(1);
    m.dv_g12 = g12_(std::span<const F>(at_v)).derivative(1);
    m.dv_g22 = g22_(std::span<const F>(at_v)).derivative(1);
    return m;
  }

  double depth(double u, double v) const override {
    double d = std::min(u - spec_.u_min, spec_.u_max - u);
    if (!spec_.periodic_v) d = std::min({d, v - spec_.v_min, spec_.v_max - v});
    return d;
  }
  bool periodic_v() const override { return spec_.periodic_v; }
  std::string name() const override { return "rectangle"; }

 private:
  ChartMetric spec_;
  Expression g11_, g12_, g22_;
};

class RectangleAtlas final : public Atlas {
 public:
  explicit RectangleAtlas(const ChartMetric& spec) : spec_(spec), chart_(spec) {}
  std::size_t size() const override { return 1; }
  const Chart& chart(std::size_t) const override { return chart_; }
  std::optional<ChartMapping> map_point(int from, int to, double u, double v) const override {
    if (from != 0 || to != 0) return std::nullopt;
    return ChartMapping{u, v, Eigen::Matrix2d::Identity()};
  }
  double length_scale() const override { return spec_.scale; }
  std::optional<double> period_hint() const override { return std::nullopt; }
  std::vector<NamedPoint> named_points() const override {
    return {{"center", {0, 0.5 * (spec_.u_min + spec_.u_max), 0.5 * (spec_.v_min + spec_.v_max)}}};
  }

 private:
  ChartMetric spec_;
  RectangleChart chart_;
};

}  // namespace detail

// ---------------------------------------------------------------------------

/// An immutable analytic surface: parameters plus the atlas built from them.
class SurfaceSpec {
 public:
  using Params = std::variant<RoundSphere, SurfaceOfRevolution, TriaxialEllipsoid, ChartMetric>;

  explicit SurfaceSpec(Params params) : params_(std::move(params)) {
    std::visit([this](const auto& p) { build(p); }, params_);
  }

  static SurfaceSpec round_sphere(double radius = 1.0) { return SurfaceSpec(RoundSphere{radius}); }
  static SurfaceSpec triaxial_ellipsoid(double a, double b, double c) {
    return SurfaceSpec(TriaxialEllipsoid{a, b, c});
  }
  /// Ellipsoid of revolution with equatorial radius a and polar semi-axis c,
  /// realized as a surface of revolution.
  static SurfaceSpec spheroid(double a, double c) {
    return SurfaceSpec(SurfaceOfRevolution{format_double(a) + " * sin(s)", format_double(c) + " * cos(s)", 0.0, kPi});
  }

  const Params& params() const { return params_; }
  const Atlas& atlas() const { return *atlas_; }
  std::size_t chart_count() const { return atlas_->size(); }
  const Chart& chart(int i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= atlas_->size()) {
      throw Error(ErrorCode::OutOfChart, "no chart with id " + std::to_string(i));
    }
    return atlas_->chart(static_cast<std::size_t>(i));
  }
  double length_scale() const { return atlas_->length_scale(); }
  std::optional<double> period_hint() const { return atlas_->period_hint(); }
  std::vector<NamedPoint> named_points() const { return atlas_->named_points(); }

  std::optional<ChartPoint> named_point(std::string_view name) const {
    for (const auto& np : atlas_->named_points()) {
      if (np.name == name) return np.point;
    }
    return std::nullopt;
  }

  std::string kind() const {
    switch (params_.index()) {
      case 0: return "round_sphere";
      case 1: return "surface_of_revolution";
      case 2: return "triaxial_ellipsoid";
      default: return "chart_metric";
    }
  }

  /// Re-expresses x in the chart where it lies deepest inside the domain.
  ChartPoint designate(const ChartPoint& x) const {
    ChartPoint best = x;
    double best_depth = chart(x.chart).depth(x.u, x.v);
    for (std::size_t i = 0; i < atlas_->size(); ++i) {
      const int to = static_cast<int>(i);
      if (to == x.chart) continue;
      const auto m = atlas_->map_point(x.chart, to, x.u, x.v);
      if (!m) continue;
      const double d = atlas_->chart(i).depth(m->u, m->v);
      if (d > best_depth + 1e-12) {
        best_depth = d;
        best = {to, m->u, m->v};
      }
    }
    return best;
  }

 private:
  void build(const RoundSphere& p) {
    if (!(p.radius > 0.0)) throw Error(ErrorCode::ConfigError, "round_sphere: radius must be positive");
    atlas_ = std::make_shared<detail::QuadricAtlas>(p.radius, p.radius, p.radius, false);
  }
  void build(const TriaxialEllipsoid& p) {
    if (!(p.a > p.b && p.b > p.c && p.c > 0.0)) {
      throw Error(ErrorCode::ConfigError, "triaxial_ellipsoid: need a > b > c > 0");
    }
    atlas_ = std::make_shared<detail::QuadricAtlas>(p.a, p.b, p.c, true);
  }
  void build(const SurfaceOfRevolution& p) { atlas_ = std::make_shared<detail::RevolutionAtlas>(p); }
  void build(const ChartMetric& p) { atlas_ = std::make_shared<detail::RectangleAtlas>(p); }

  Params params_;
  std::shared_ptr<const Atlas> atlas_;
};

// ---------------------------------------------------------------------------
// Operations

inline MetricJet metric_at(const SurfaceSpec& surface, int chart, double u, double v) {
  const auto& c = surface.chart(chart);
  if (!(c.depth(u, v) >= -kOverlapMargin)) {
    throw Error(ErrorCode::OutOfChart, "point (" + format_double(u) + ", " + format_double(v) +
                                           ") outside chart '" + c.name() + "'");
  }
  return c.metric(u, v);
}

/// |xi|_g = sqrt(g^{ij} xi_i xi_j).
inline double hamiltonian(const SurfaceSpec& surface, const PhasePoint& p) {
  const auto g = metric_at(surface, p.chart, p.u, p.v);
  const Eigen::Vector2d xi = p.covector();
  return std::sqrt(xi.dot(g.inverse() * xi));
}

namespace detail {

/// g_x-orthonormal coframe (Gram-Schmidt on du, dv under the inverse metric).
inline std::pair<Eigen::Vector2d, Eigen::Vector2d> coframe(const MetricJet& g) {
  const Eigen::Matrix2d ginv = g.inverse();
  auto inner = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.dot(ginv * b); };
  Eigen::Vector2d e1(1.0, 0.0);
  e1 /= std::sqrt(inner(e1, e1));
  Eigen::Vector2d e2(0.0, 1.0);
  e2 -= inner(e2, e1) * e1;
  e2 /= std::sqrt(inner(e2, e2));
  return {e1, e2};
}

}  // namespace detail

inline PhasePoint angle_to_covector(const SurfaceSpec& surface, const ChartPoint& x, double theta) {
  const auto g = metric_at(surface, x.chart, x.u, x.v);
  const auto [e1, e2] = detail::coframe(g);
  const Eigen::Vector2d xi = std::cos(theta) * e1 + std::sin(theta) * e2;
  return {x.chart, x.u, x.v, xi.x(), xi.y()};
}

inline double covector_to_angle(const SurfaceSpec& surface, const PhasePoint& p) {
  const auto g = metric_at(surface, p.chart, p.u, p.v);
  const Eigen::Matrix2d ginv = g.inverse();
  const Eigen::Vector2d xi = p.covector();
  const double h = std::sqrt(xi.dot(ginv * xi));
  if (!(std::fabs(h - 1.0) <= 1e-6)) {
    throw Error(ErrorCode::NotUnit, "covector norm " + format_double(h) + " is not 1");
  }
  const auto [e1, e2] = detail::coframe(g);
  return wrap_angle(std::atan2(xi.dot(ginv * e2), xi.dot(ginv * e1)));
}

/// Same point and covector in another chart, or nullopt when the target
/// chart does not contain the point (inflated by kOverlapMargin).
inline std::optional<PhasePoint> try_transition(const SurfaceSpec& surface, const PhasePoint& p, int target) {
  if (target == p.chart) return p;
  const auto m = surface.atlas().map_point(p.chart, target, p.u, p.v);
  if (!m) return std::nullopt;
  if (surface.chart(target).depth(m->u, m->v) < -kOverlapMargin) return std::nullopt;
  // covectors pull back with the inverse transpose of the point Jacobian
  const Eigen::Vector2d xi = m->jacobian.transpose().fullPivLu().solve(p.covector());
  return PhasePoint{target, m->u, m->v, xi.x(), xi.y()};
}

inline PhasePoint transition(const SurfaceSpec& surface, const PhasePoint& p, int target) {
  auto q = try_transition(surface, p, target);
  if (!q || surface.chart(target).depth(q->u, q->v) < 0.0) {
    throw Error(ErrorCode::NotInOverlap, "point not in the overlap with chart " + std::to_string(target));
  }
  return *q;
}

/// Position-only transition.
inline std::optional<ChartPoint> try_point_transition(const SurfaceSpec& surface, const ChartPoint& x, int target) {
  if (target == x.chart) return x;
  const auto m = surface.atlas().map_point(x.chart, target, x.u, x.v);
  if (!m || surface.chart(target).depth(m->u, m->v) < -kOverlapMargin) return std::nullopt;
  return ChartPoint{target, m->u, m->v};
}

/// Chart-coordinate displacement x - y (wrapping periodic v).
inline Eigen::Vector2d chart_delta(const SurfaceSpec& surface, const ChartPoint& x, const ChartPoint& y) {
  double dv = x.v - y.v;
  if (surface.chart(x.chart).periodic_v()) dv = wrap_pi(dv);
  return {x.u - y.u, dv};
}

}  // namespace focal
