#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "focal/circle_dynamics.hpp"
#include "focal/return_map.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace focal;
using focal::testing::Gen;
namespace oracle = focal::testing;

namespace {

SurfaceSpec ellipsoid() { return SurfaceSpec::triaxial_ellipsoid(std::sqrt(3.0), std::sqrt(2.0), 1.0); }

const ChartPoint kGeneric{0, 1.1, 0.7};

// regression pin: loop fraction of kGeneric over 64 directions, horizon 3 umbilic periods
constexpr double kGenericLoopFraction = 0.0;

}  // namespace

TEST(LoopFraction, SphereIsOne) {
  FlowConfig cfg;
  EXPECT_DOUBLE_EQ(loop_fraction(SurfaceSpec::round_sphere(1.0), {0, 0.9, 1.3}, 32, 7.0, cfg), 1.0);
}

TEST(LoopFraction, GenericEllipsoidPointPinned) {
  const auto s = ellipsoid();
  const double f = loop_fraction(s, kGeneric, 64, 3 * oracle::kUmbilicReturnTime, {});
  EXPECT_LT(f, 0.2);
  EXPECT_DOUBLE_EQ(f, kGenericLoopFraction);
}

TEST(LoopFraction, UmbilicIsOne) {
  const auto s = ellipsoid();
  EXPECT_DOUBLE_EQ(loop_fraction(s, *s.named_point("umbilic1"), 64, 3 * oracle::kUmbilicReturnTime, {}), 1.0);
}

TEST(LoopFraction, ThreadCountIrrelevant) {
  const auto s = ellipsoid();
  const auto p = *s.named_point("umbilic0");
  const double t = 1.5 * oracle::kUmbilicReturnTime;
  EXPECT_EQ(loop_fraction(s, p, 32, t, {}, 1), loop_fraction(s, p, 32, t, {}, 3));
}

TEST(LoopFraction, TooFewDirections) {
  EXPECT_THROW(loop_fraction(SurfaceSpec::round_sphere(1.0), {0, 1.0, 0.0}, 8, 7.0, {}), Error);
}

TEST(Probe, SphereIsSelfFocal) {
  Gen gen(50);
  const auto s = SurfaceSpec::round_sphere(1.0);
  for (int k = 0; k < 3; ++k) {
    const auto r = probe_self_focal(s, gen.interior_point(), 64, 0.0, {});
    ASSERT_TRUE(r.is_self_focal);
    EXPECT_NEAR(*r.T_p, kTwoPi, 1e-6);
    EXPECT_DOUBLE_EQ(r.returning_fraction, 1.0);
  }
}

TEST(Probe, SpheroidPoleMatchesMeridianQuadrature) {
  const auto s = SurfaceSpec::spheroid(1.5, 1.0);
  const auto r = probe_self_focal(s, *s.named_point("north_pole"), 64, 0.0, {});
  ASSERT_TRUE(r.is_self_focal);
  EXPECT_NEAR(*r.T_p, oracle::ellipse_circumference(1.5, 1.0), 1e-5);
  EXPECT_NEAR(*r.T_p, oracle::ellipse_circumference_trapezoid(1.5, 1.0), 1e-5);
}

TEST(Probe, GenericPointIsNotSelfFocal) {
  const auto r = probe_self_focal(ellipsoid(), kGeneric, 64, 0.0, {});
  EXPECT_FALSE(r.is_self_focal);
  EXPECT_LT(r.returning_fraction, 1.0);
  EXPECT_FALSE(r.T_p.has_value());
}

TEST(Probe, UmbilicCommonTime) {
  const auto s = ellipsoid();
  const auto r = probe_self_focal(s, *s.named_point("umbilic2"), 64, 0.0, {});
  ASSERT_TRUE(r.is_self_focal);
  EXPECT_NEAR(*r.T_p, oracle::kUmbilicReturnTime, 1e-6);
  EXPECT_LE(r.return_time_spread, 1e-4);
}

TEST(ReturnMap, SphereIsIdentity) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  const auto g = build_return_map(s, {0, 1.0, 2.0}, kTwoPi, 64, {});
  EXPECT_EQ(g.degree, 1);
  for (std::size_t i = 0; i < g.N; ++i) EXPECT_LE(circle_distance(g.theta_out[i], g.theta_in[i]), 1e-6);
  EXPECT_LE(identity_defect(g.map()), 1e-6);
  EXPECT_LE(reversibility_defect(g.map()), 1e-5);
  const auto sq = compose_square(g.map());
  EXPECT_LE(identity_defect(sq), 2 * identity_defect(g.map()) + 1e-12);
}

TEST(ReturnMap, SpheroidPoleIsIdentity) {
  const auto s = SurfaceSpec::spheroid(1.5, 1.0);
  const auto g = build_return_map(s, *s.named_point("north_pole"), oracle::kSpheroidMeridian, 64, {});
  EXPECT_EQ(g.degree, 1);
  EXPECT_LE(identity_defect(g.map()), 1e-6);
}

TEST(ReturnMap, UmbilicRegressionPin) {
  const auto s = ellipsoid();
  const auto g = build_return_map(s, *s.named_point("umbilic0"), oracle::kUmbilicReturnTime, 256, {});
  EXPECT_EQ(g.degree, 1);
  const auto f = g.map();
  EXPECT_GT(identity_defect(f), 0.1);
  const auto sq = compose_square(f);
  EXPECT_GT(identity_defect(sq), 0.1);
  const auto fps = fixed_points(sq);
  ASSERT_EQ(fps.size(), 2u);
  EXPECT_TRUE(fps.has_hyperbolic());
  // the two multipliers are reciprocal up to sampling error
  EXPECT_NEAR(fps.points[0].multiplier * fps.points[1].multiplier, 1.0, 1e-2);
  for (double t : g.t_event) EXPECT_NEAR(t, oracle::kUmbilicReturnTime, 1e-4);
}

TEST(ReturnMap, StableUnderDoubling) {
  const auto s = ellipsoid();
  const auto p = *s.named_point("umbilic0");
  const auto a = build_return_map(s, p, oracle::kUmbilicReturnTime, 128, {}).map();
  const auto b = build_return_map(s, p, oracle::kUmbilicReturnTime, 256, {}).map();
  double worst = 0.0;
  for (int i = 0; i < 64; ++i) {
    // cell midpoints of the coarse grid, where interpolation error peaks
    const double x = kTwoPi * (i + 0.5) / 64.0;
    worst = std::max(worst, circle_distance(a(x), b(x)));
  }
  EXPECT_LE(worst, 1e-3);
  // at the shared nodes both grids see the same integrations
  for (int i = 0; i < 128; i += 8) {
    const double x = kTwoPi * i / 128.0;
    EXPECT_LE(circle_distance(a(x), b(x)), 1e-5);
  }
}

TEST(ReturnMap, RejectsBadArguments) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  EXPECT_THROW(build_return_map(s, {0, 1.0, 0.0}, -1.0, 64, {}), Error);
  EXPECT_THROW(build_return_map(s, {0, 1.0, 0.0}, kTwoPi, 8, {}), Error);
  try {
    build_return_map(ellipsoid(), kGeneric, oracle::kUmbilicReturnTime, 64, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Inconclusive);
  }
}

TEST(ReturnMap, CsvLayout) {
  const auto g = build_return_map(SurfaceSpec::round_sphere(1.0), {0, 1.0, 0.0}, kTwoPi, 16, {});
  std::ostringstream os;
  write_return_map_csv(os, g);
  std::istringstream is(os.str());
  std::string line;
  int comments = 0, rows = 0;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.rfind("#", 0) == 0) {
      ++comments;
    } else if (!header) {
      EXPECT_EQ(line, "theta_in,theta_out,t_first,miss_distance");
      header = true;
    } else {
      ++rows;
      EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
    }
  }
  EXPECT_GE(comments, 1);
  EXPECT_EQ(rows, 16);
}

TEST(Interpolant, ReproducesNodes) {
  Gen gen(51);
  for (int k = 0; k < 10; ++k) {
    const auto f = gen.trig_lift(gen.uniform(-1.0, 1.0));
    std::vector<double> v(48);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(kTwoPi * static_cast<double>(i) / 48.0);
    const auto interp = make_interpolant(v, 1, 1e-9);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR((*interp)(kTwoPi * i / 48.0), v[i], 1e-12);
    EXPECT_NEAR((*interp)(kTwoPi) - (*interp)(0.0), kTwoPi, 1e-12);
  }
}

TEST(Interpolant, MonotoneBetweenNodes) {
  Gen gen(52);
  for (int k = 0; k < 10; ++k) {
    // steep but monotone data
    const auto f = gen.trig_lift(gen.uniform(-1.0, 1.0), 0.97);
    std::vector<double> v(32);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(kTwoPi * static_cast<double>(i) / 32.0);
    const MonotonePeriodicInterpolant interp(v, 1);
    double prev = interp(-0.5);
    for (double x = -0.5; x < 7.0; x += 1e-3) {
      const double y = interp(x);
      EXPECT_GE(y, prev);
      prev = y;
      EXPECT_GE(interp.derivative(x), 0.0);
    }
  }
}

TEST(Interpolant, ConvergesOnSmoothMaps) {
  const auto lift = [](double x) { return x + 0.4 * std::sin(x); };
  double prev_err = 1e300;
  for (std::size_t n : {32u, 64u, 128u}) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = lift(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
    const MonotonePeriodicInterpolant interp(v, 1);
    double err = 0.0;
    for (double x = 0.0; x < kTwoPi; x += 0.01) err = std::max(err, std::fabs(interp(x) - lift(x)));
    EXPECT_LT(err, prev_err / 3);
    prev_err = err;
  }
}

TEST(Interpolant, RejectsNonMonotoneSamples) {
  std::vector<double> v{0.0, 1.0, 0.5, 3.0};
  try {
    make_interpolant(v, 1, 1e-9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotoneSamples);
  }
}
