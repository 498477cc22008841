#pragma once

// Homogeneous geodesic flow G^t on the unit cosphere bundle: Hamilton field
// of H(x, xi) = |xi|_g, adaptive Dormand-Prince 5(4) integration with dense
// output and transparent chart switching, time reversal, and detection of
// returns to the fiber over a base point.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "focal/error.hpp"
#include "focal/surfaces.hpp"

namespace focal {

struct FlowConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  /// Zero means 0.05 x length scale.
  double max_step = 0.0;
  /// Zero means 1.5 x the surface's period hint.
  double t_max = 0.0;
  int renormalize_every = 10;
  /// Near-pass radius; zero means 1e-3 x length scale.
  double return_radius = 0.0;
  /// Time tolerance for locating the closest approach.
  double refine_tol = 1e-10;
  /// Largest refined miss distance accepted as a return; zero means 1e-6 x length scale.
  double accept_miss = 0.0;
  /// Chart switching starts when the depth in the current chart drops below this.
  double switch_margin = 0.1;

  void validate() const {
    auto positive = [](double x, const char* what) {
      if (!(x > 0.0)) throw Error(ErrorCode::ConfigError, std::string("flow.") + what + " must be positive");
    };
    auto nonnegative = [](double x, const char* what) {
      if (!(x >= 0.0)) throw Error(ErrorCode::ConfigError, std::string("flow.") + what + " must be >= 0");
    };
    positive(rel_tol, "rel_tol");
    positive(abs_tol, "abs_tol");
    positive(refine_tol, "refine_tol");
    positive(switch_margin, "switch_margin");
    nonnegative(max_step, "max_step");
    nonnegative(t_max, "t_max");
    nonnegative(return_radius, "return_radius");
    nonnegative(accept_miss, "accept_miss");
    if (renormalize_every < 1) throw Error(ErrorCode::ConfigError, "flow.renormalize_every must be >= 1");
  }

  /// Copy with every surface-dependent default materialized.
  FlowConfig resolved(const SurfaceSpec& surface, bool need_horizon = true) const {
    validate();
    FlowConfig r = *this;
    const double scale = surface.length_scale();
    if (r.max_step == 0.0) r.max_step = 0.05 * scale;
    if (r.return_radius == 0.0) r.return_radius = 1e-3 * scale;
    if (r.accept_miss == 0.0) r.accept_miss = 1e-6 * scale;
    if (r.t_max == 0.0 && need_horizon) {
      const auto hint = surface.period_hint();
      if (!hint) throw Error(ErrorCode::ConfigError, "flow.t_max is required for this surface");
      r.t_max = 1.5 * *hint;
    }
    return r;
  }
};

struct CrossingEvent {
  double t = 0.0;
  PhasePoint phase;
  double theta_out = 0.0;
  double miss_distance = 0.0;
};

namespace detail {

using FlowState = std::array<double, 4>;

inline FlowState hamilton_field(const Chart& chart, const FlowState& x) {
  const MetricJet g = chart.metric(x[0], x[1]);
  const Eigen::Matrix2d ginv = g.inverse();
  const Eigen::Vector2d xi(x[2], x[3]);
  const Eigen::Vector2d w = ginv * xi;
  const double h = std::sqrt(xi.dot(w));
  // dxi/dt = -dH/dx = (1/2H) w^T (dg/dx) w since d(g^{-1}) = -g^{-1} dg g^{-1}
  const double dpu = (w.x() * w.x() * g.du_g11 + 2.0 * w.x() * w.y() * g.du_g12 + w.y() * w.y() * g.du_g22) / (2.0 * h);
  const double dpv = (w.x() * w.x() * g.dv_g11 + 2.0 * w.x() * w.y() * g.dv_g12 + w.y() * w.y() * g.dv_g22) / (2.0 * h);
  return {w.x() / h, w.y() / h, dpu, dpv};
}

inline double norm_in_chart(const Chart& chart, const FlowState& x) {
  const MetricJet g = chart.metric(x[0], x[1]);
  const Eigen::Vector2d xi(x[2], x[3]);
  return std::sqrt(xi.dot(g.inverse() * xi));
}

/// Adaptive stepper over the atlas. After step() the dense output of the
/// just-completed interval is available through dense(); renormalization and
/// chart switches are applied lazily at the start of the next step.
class FlowStepper {
 public:
  FlowStepper(const SurfaceSpec& surface, const FlowConfig& cfg)
      : surface_(surface),
        cfg_(cfg),
        dense_(boost::numeric::odeint::make_dense_output(
            cfg.abs_tol, cfg.rel_tol, cfg.max_step, boost::numeric::odeint::runge_kutta_dopri5<FlowState>())) {}

  void start(const PhasePoint& p, double t0 = 0.0) {
    chart_ = p.chart;
    const FlowState x{p.u, p.v, p.pu, p.pv};
    dense_.initialize(x, t0, std::min(cfg_.max_step, 0.01 * surface_.length_scale()));
    pending_ = false;
    since_renorm_ = 0;
  }

  std::pair<double, double> step() {
    if (pending_) settle();
    const Chart* chart = &surface_.chart(chart_);
    auto sys = [chart](const FlowState& x, FlowState& dxdt, double) { dxdt = hamilton_field(*chart, x); };
    std::pair<double, double> iv;
    try {
      iv = dense_.do_step(sys);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::BlowUp, std::string("step size control failed: ") + e.what());
    }
    const auto& x = dense_.current_state();
    for (double c : x) {
      if (!std::isfinite(c)) throw Error(ErrorCode::BlowUp, "non-finite state");
    }
    if (dense_.current_time_step() < 1e-13 * surface_.length_scale()) {
      throw Error(ErrorCode::BlowUp, "step size underflow");
    }
    ++since_renorm_;
    pending_ = true;
    return iv;
  }

  PhasePoint dense(double t) const {
    FlowState x;
    dense_.calc_state(t, x);
    return {chart_, x[0], x[1], x[2], x[3]};
  }

  PhasePoint current() const {
    const auto& x = dense_.current_state();
    return {chart_, x[0], x[1], x[2], x[3]};
  }

  double time() const { return dense_.current_time(); }
  int chart() const { return chart_; }

 private:
  void settle() {
    pending_ = false;
    FlowState x = dense_.current_state();
    bool changed = false;
    if (since_renorm_ >= cfg_.renormalize_every) {
      const double h = norm_in_chart(surface_.chart(chart_), x);
      x[2] /= h;
      x[3] /= h;
      since_renorm_ = 0;
      changed = true;
    }
    const double depth = surface_.chart(chart_).depth(x[0], x[1]);
    if (depth < cfg_.switch_margin) {
      const PhasePoint here{chart_, x[0], x[1], x[2], x[3]};
      std::optional<PhasePoint> best;
      double best_depth = depth;
      for (std::size_t i = 0; i < surface_.chart_count(); ++i) {
        const int to = static_cast<int>(i);
        if (to == chart_) continue;
        const auto q = try_transition(surface_, here, to);
        if (!q) continue;
        const double d = surface_.chart(to).depth(q->u, q->v);
        if (d > best_depth) {
          best_depth = d;
          best = q;
        }
      }
      if (best) {
        chart_ = best->chart;
        x = {best->u, best->v, best->pu, best->pv};
        changed = true;
      } else if (depth < 0.0) {
        throw Error(ErrorCode::LeftAtlas, "trajectory left every chart at t = " + format_double(time()));
      }
    }
    if (changed) dense_.initialize(x, dense_.current_time(), dense_.current_time_step());
  }

  using Dense = boost::numeric::odeint::result_of::make_dense_output<
      boost::numeric::odeint::runge_kutta_dopri5<FlowState>>::type;

  const SurfaceSpec& surface_;
  FlowConfig cfg_;
  Dense dense_;
  int chart_ = 0;
  bool pending_ = false;
  int since_renorm_ = 0;
};

inline void require_unit(const SurfaceSpec& surface, const PhasePoint& p) {
  const double h = hamiltonian(surface, p);
  if (!(std::fabs(h - 1.0) <= 1e-6)) {
    throw Error(ErrorCode::NotUnit, "flow is restricted to H = 1, got H = " + format_double(h));
  }
}

inline PhasePoint normalized(const SurfaceSpec& surface, PhasePoint p) {
  const double h = hamiltonian(surface, p);
  p.pu /= h;
  p.pv /= h;
  return p;
}

}  // namespace detail

/// Darboux-coordinate Hamilton field (du, dv, dpu, dpv)/dt of H = |xi|_g.
inline std::array<double, 4> hamilton_field(const SurfaceSpec& surface, const PhasePoint& p) {
  metric_at(surface, p.chart, p.u, p.v);
  return detail::hamilton_field(surface.chart(p.chart), {p.u, p.v, p.pu, p.pv});
}

/// tau(x, xi) = (x, -xi).
inline PhasePoint time_reverse(const PhasePoint& p) { return {p.chart, p.u, p.v, -p.pu, -p.pv}; }

/// G^t(p); negative t runs the reversed flow tau G^{|t|} tau.
inline PhasePoint integrate(const SurfaceSpec& surface, const PhasePoint& p, double t, const FlowConfig& cfg) {
  detail::require_unit(surface, p);
  if (t < 0.0) return time_reverse(integrate(surface, time_reverse(p), -t, cfg));
  if (t == 0.0) return p;
  const FlowConfig rc = cfg.resolved(surface, false);
  detail::FlowStepper stepper(surface, rc);
  stepper.start(p);
  for (std::size_t n = 0;; ++n) {
    const auto [t0, t1] = stepper.step();
    if (t1 >= t) return detail::normalized(surface, stepper.dense(t));
    if (n > 100'000'000) throw Error(ErrorCode::BlowUp, "step budget exhausted");
  }
}

struct TrajectorySample {
  double t = 0.0;
  PhasePoint phase;
  double h = 0.0;
};

/// Samples G^t(p) every dt on [0, t_end] (plus the endpoint).
inline std::vector<TrajectorySample> trace(const SurfaceSpec& surface, const PhasePoint& p, double t_end, double dt,
                                           const FlowConfig& cfg) {
  detail::require_unit(surface, p);
  if (!(dt > 0.0) || !(t_end > 0.0)) throw Error(ErrorCode::ConfigError, "trace needs positive dt and t");
  const FlowConfig rc = cfg.resolved(surface, false);
  detail::FlowStepper stepper(surface, rc);
  stepper.start(p);
  std::vector<TrajectorySample> out;
  out.push_back({0.0, p, hamiltonian(surface, p)});
  std::size_t k = 1;
  for (;;) {
    const auto [t0, t1] = stepper.step();
    for (;; ++k) {
      const double tk = std::min(static_cast<double>(k) * dt, t_end);
      if (tk > t1) break;
      const auto q = stepper.dense(tk);
      out.push_back({tk, q, hamiltonian(surface, q)});
      if (tk >= t_end) return out;
    }
  }
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectorySample>& samples) {
  os << "# geodesic trajectory samples\n";
  os << "# columns: t,chart,u,v,pu,pv,H\n";
  os << "t,chart,u,v,pu,pv,H\n";
  for (const auto& s : samples) {
    os << format_double(s.t) << ',' << s.phase.chart << ',' << format_double(s.phase.u) << ','
       << format_double(s.phase.v) << ',' << format_double(s.phase.pu) << ',' << format_double(s.phase.pv) << ','
       << format_double(s.h) << '\n';
  }
}

namespace detail {

/// Squared distance to a fixed base point and its time derivative, measured
/// in the base point's chart with the metric frozen at that point.
class ReturnProbe {
 public:
  ReturnProbe(const SurfaceSpec& surface, const ChartPoint& base)
      : surface_(surface), base_(base), gp_(metric_at(surface, base.chart, base.u, base.v).matrix()) {}

  struct Value {
    double d2 = 0.0;
    double rate = 0.0;
  };

  std::optional<Value> operator()(const PhasePoint& q) const {
    const auto local = try_transition(surface_, q, base_.chart);
    if (!local) return std::nullopt;
    const Eigen::Vector2d delta = chart_delta(surface_, local->base(), base_);
    const MetricJet g = surface_.chart(base_.chart).metric(local->u, local->v);
    const Eigen::Vector2d xi = local->covector();
    const Eigen::Vector2d w = g.inverse() * xi;
    const Eigen::Vector2d vel = w / std::sqrt(xi.dot(w));
    return Value{delta.dot(gp_ * delta), 2.0 * delta.dot(gp_ * vel)};
  }

  std::optional<PhasePoint> local(const PhasePoint& q) const { return try_transition(surface_, q, base_.chart); }

 private:
  const SurfaceSpec& surface_;
  ChartPoint base_;
  Eigen::Matrix2d gp_;
};

}  // namespace detail

/// Base-point distance from q to x (metric frozen at x), or +inf when q is
/// not expressible in x's chart.
inline double base_distance(const SurfaceSpec& surface, const ChartPoint& x, const PhasePoint& q) {
  const detail::ReturnProbe probe(surface, x);
  const auto v = probe(q);
  return v ? std::sqrt(v->d2) : std::numeric_limits<double>::infinity();
}

/// All t in (0, t_max] at which the geodesic from (p, theta) passes through
/// p, refined to the closest approach and accepted when the miss distance is
/// below cfg.accept_miss.
inline std::vector<CrossingEvent> detect_fiber_returns(const SurfaceSpec& surface, const ChartPoint& p, double theta,
                                                       const FlowConfig& cfg) {
  const FlowConfig rc = cfg.resolved(surface);
  const ChartPoint base = surface.designate(p);
  const detail::ReturnProbe probe(surface, base);
  const PhasePoint start = angle_to_covector(surface, base, theta);
  const double separation = 10.0 * rc.max_step;

  detail::FlowStepper stepper(surface, rc);
  stepper.start(start);
  std::vector<CrossingEvent> events;
  double last_event = 0.0;
  auto prev = probe(start);
  for (;;) {
    const auto [t0, t1] = stepper.step();
    const auto now = probe(stepper.current());
    if (prev && now && prev->rate < 0.0 && now->rate >= 0.0 && t1 - last_event >= separation &&
        std::sqrt(std::min(prev->d2, now->d2)) <= rc.return_radius + (t1 - t0)) {
      double lo = t0, hi = t1;
      while (hi - lo > rc.refine_tol) {
        const double mid = 0.5 * (lo + hi);
        const auto m = probe(stepper.dense(mid));
        if (!m) break;
        (m->rate < 0.0 ? lo : hi) = mid;
      }
      const double tc = 0.5 * (lo + hi);
      const auto q = probe.local(stepper.dense(tc));
      if (q && tc <= rc.t_max && tc - last_event >= separation) {
        const PhasePoint unit = detail::normalized(surface, *q);
        const double miss = std::sqrt(std::max(0.0, probe(unit)->d2));
        if (miss <= rc.accept_miss) {
          events.push_back({tc, unit, covector_to_angle(surface, unit), miss});
          last_event = tc;
        }
      }
    }
    prev = now;
    if (t1 >= rc.t_max) break;
  }
  return events;
}

}  // namespace focal
