#include <cmath>

#include <gtest/gtest.h>

#include "focal/classifier.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace focal;
using focal::testing::Gen;
namespace oracle = focal::testing;

namespace {

SurfaceSpec ellipsoid() { return SurfaceSpec::triaxial_ellipsoid(std::sqrt(3.0), std::sqrt(2.0), 1.0); }

bool has_diagnostic(const std::vector<std::string>& d, const std::string& prefix) {
  return std::any_of(d.begin(), d.end(), [&](const std::string& s) { return s.rfind(prefix, 0) == 0; });
}

// a conservative verdict must come with an identity square
void expect_sound(const Verdict& v, double pole_tol) {
  if (!v.analysis) return;
  EXPECT_FALSE(v.analysis->conservativity.verdict == Conservativity::Conservative &&
               v.analysis->identity_defect_square > pole_tol);
}

Verdict synthetic(const SurfaceSpec& s, const ChartPoint& p, double T_p, const CircleMap& f) {
  Verdict v;
  v.config = ClassifierConfig{}.resolved(s);
  v.point = s.designate(p);
  SelfFocalReport probe;
  probe.is_self_focal = true;
  probe.T_p = T_p;
  v.probe = probe;
  v.analysis = analyze_return_map(f, v.config);
  for (const auto& d : v.analysis->diagnostics) v.diagnostics.push_back(d);
  detail::decide(v, s, v.config);
  return v;
}

}  // namespace

TEST(Classify, SphereIsPole) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  const auto v = classify_point(s, {0, 1.2, 0.3}, {});
  EXPECT_EQ(v.tag, VerdictTag::Pole);
  EXPECT_FALSE(v.inconclusive);
  ASSERT_TRUE(v.T_p());
  EXPECT_NEAR(*v.T_p(), kTwoPi, 1e-6);
  EXPECT_LE(v.analysis->identity_defect, 1e-5);
  ASSERT_TRUE(v.closure);
  EXPECT_LE(v.closure->residual, 1e-5);
  EXPECT_EQ(v.analysis->conservativity.verdict, Conservativity::Conservative);
  expect_sound(v, v.config.pole_tol);
}

TEST(Classify, SpheroidNorthPoleIsPole) {
  const auto s = SurfaceSpec::spheroid(1.5, 1.0);
  const auto v = classify_point(s, *s.named_point("north_pole"), {});
  EXPECT_EQ(v.tag, VerdictTag::Pole);
  EXPECT_FALSE(v.inconclusive);
  EXPECT_NEAR(*v.T_p(), oracle::ellipse_circumference_trapezoid(1.5, 1.0), 1e-5);
  ASSERT_TRUE(v.closure);
  EXPECT_LE(v.closure->residual, 1e-4);
  expect_sound(v, v.config.pole_tol);
}

TEST(Classify, UmbilicIsDissipative) {
  const auto s = ellipsoid();
  const auto v = classify_point(s, *s.named_point("umbilic3"), {});
  EXPECT_EQ(v.tag, VerdictTag::SelfFocalDissipative);
  EXPECT_FALSE(v.inconclusive);
  const auto& a = *v.analysis;
  EXPECT_LE(v.probe->return_time_spread, 1e-4);
  EXPECT_TRUE(a.fixed_points_square.has_hyperbolic());
  EXPECT_EQ(a.fixed_points_square.size(), 2u);
  EXPECT_GE(a.conservativity.atomicity_ratio, 1.6);
  EXPECT_GT(a.identity_defect_square, 0.1);
  EXPECT_EQ(a.orientation, Orientation::Preserving);
  // density sits in at most 4 bins at M = 256
  std::vector<double> mass = a.ulam_coarse.mass;
  std::sort(mass.rbegin(), mass.rend());
  EXPECT_GE(mass[0] + mass[1] + mass[2] + mass[3], 1.0 - 1e-9);
  expect_sound(v, v.config.pole_tol);
}

TEST(Classify, GenericPointIsNotSelfFocal) {
  const auto v = classify_point(ellipsoid(), {0, 1.1, 0.7}, {});
  EXPECT_EQ(v.tag, VerdictTag::NotSelfFocal);
  EXPECT_FALSE(v.analysis.has_value());
  ASSERT_TRUE(v.loop_fraction);
  EXPECT_LT(*v.loop_fraction, 1.0);
}

TEST(Classify, Deterministic) {
  const auto s = ellipsoid();
  const auto p = *s.named_point("umbilic0");
  ClassifierConfig threaded;
  threaded.threads = 3;
  const auto a = classify_point(s, p, {});
  const auto b = classify_point(s, p, threaded);
  EXPECT_EQ(a.tag, b.tag);
  EXPECT_EQ(*a.T_p(), *b.T_p());
  EXPECT_EQ(a.return_map->theta_out, b.return_map->theta_out);
  EXPECT_EQ(a.analysis->ulam_coarse.mass, b.analysis->ulam_coarse.mass);
}

TEST(VerifyPole, SphereClosesAtTwiceThePeriod) {
  const auto r = verify_pole(SurfaceSpec::round_sphere(1.0), {0, 0.6, 1.0}, kTwoPi, 64, {});
  EXPECT_LE(r.residual, 1e-5);
  EXPECT_DOUBLE_EQ(r.period, 2 * kTwoPi);
}

TEST(VerifyPole, UmbilicNegativeControl) {
  const auto s = ellipsoid();
  const auto r = verify_pole(s, *s.named_point("umbilic0"), oracle::kUmbilicReturnTime, 64, {});
  EXPECT_GT(r.residual, 0.1);
}

TEST(Decide, ReversingMapRaisesAnomaly) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  const auto v = synthetic(s, {0, 1.0, 0.0}, kTwoPi, CircleMap::reflection());
  EXPECT_TRUE(has_diagnostic(v.diagnostics, "OrientationReversingAnomaly"));
  EXPECT_FALSE(v.analysis->rotation.has_value());
}

TEST(Decide, ConservativeNonIdentityIsFlagged) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  const auto v = synthetic(s, {0, 1.0, 0.0}, kTwoPi, CircleMap::rotation(1.0));
  EXPECT_TRUE(v.inconclusive);
  EXPECT_TRUE(has_diagnostic(v.diagnostics, "DichotomyViolation"));
  EXPECT_FALSE(v.closure.has_value());
}

TEST(Decide, WrongPeriodFailsClosure) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  const auto v = synthetic(s, {0, 1.0, 0.0}, 1.0, CircleMap::identity());
  EXPECT_EQ(v.tag, VerdictTag::Pole);
  EXPECT_TRUE(v.inconclusive);
  EXPECT_TRUE(has_diagnostic(v.diagnostics, "ClosureFailed"));
}

TEST(Decide, MorseSmaleIsDissipative) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  const auto f = CircleMap::from_lift([](double x) { return x + 0.15 * kTwoPi * std::sin(x); }, 1);
  const auto v = synthetic(s, {0, 1.0, 0.0}, kTwoPi, f);
  EXPECT_EQ(v.tag, VerdictTag::SelfFocalDissipative);
  EXPECT_FALSE(v.inconclusive);
}

TEST(Decide, NeutralFixedPointIsInconclusive) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  // square is x + 0.2 (1 - cos x) + O(0.01): touches the diagonal once
  const auto f = CircleMap::from_lift([](double x) { return x + 0.1 * (1 - std::cos(x)); }, 1);
  const auto v = synthetic(s, {0, 1.0, 0.0}, kTwoPi, f);
  EXPECT_TRUE(v.inconclusive);
}

TEST(DecideProperty, ConservativeImpliesIdentitySquare) {
  // random analytic maps pushed through the decision logic never pair
  // Conservative with a non-trivial square unless flagged
  Gen gen(60);
  const auto s = SurfaceSpec::round_sphere(1.0);
  for (int k = 0; k < 8; ++k) {
    const auto f = gen.diffeo(gen.angle(), 0.5);
    const auto v = synthetic(s, {0, 1.0, 0.0}, kTwoPi, f);
    if (v.analysis->conservativity.verdict == Conservativity::Conservative &&
        v.analysis->identity_defect_square > v.config.pole_tol) {
      EXPECT_TRUE(v.inconclusive);
      EXPECT_TRUE(has_diagnostic(v.diagnostics, "DichotomyViolation"));
    }
    if (!v.inconclusive && v.tag == VerdictTag::Pole) {
      EXPECT_LE(v.analysis->identity_defect_square, v.config.pole_tol);
    }
  }
}

TEST(Sweep, SphereGridAllPoles) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  std::vector<ChartPoint> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0, 0.3 + 0.25 * i, 0.6 * i});
  const auto out = sweep(s, pts, {});
  ASSERT_EQ(out.size(), 10u);
  for (const auto& e : out) {
    ASSERT_TRUE(e.verdict) << *e.error;
    EXPECT_EQ(e.verdict->tag, VerdictTag::Pole);
    EXPECT_FALSE(e.verdict->inconclusive);
    expect_sound(*e.verdict, e.verdict->config.pole_tol);
  }
}

TEST(Sweep, EllipsoidUmbilicsAndGenericPoints) {
  const auto s = ellipsoid();
  std::vector<ChartPoint> pts;
  for (int i = 0; i < 4; ++i) pts.push_back(*s.named_point("umbilic" + std::to_string(i)));
  Gen gen(61);
  for (int i = 0; i < 10; ++i) pts.push_back({0, gen.uniform(0.5, 2.6), gen.angle()});
  ClassifierConfig cfg;
  cfg.threads = 2;
  const auto out = sweep(s, pts, cfg);
  int dissipative = 0, not_focal = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    ASSERT_TRUE(out[i].verdict) << *out[i].error;
    const auto& v = *out[i].verdict;
    EXPECT_FALSE(v.inconclusive) << i;
    if (i < 4) {
      EXPECT_EQ(v.tag, VerdictTag::SelfFocalDissipative) << i;
    } else {
      EXPECT_EQ(v.tag, VerdictTag::NotSelfFocal) << i;
    }
    dissipative += v.tag == VerdictTag::SelfFocalDissipative;
    not_focal += v.tag == VerdictTag::NotSelfFocal;
    expect_sound(v, v.config.pole_tol);
  }
  EXPECT_EQ(dissipative, 4);
  EXPECT_EQ(not_focal, 10);
}

TEST(Sweep, SpheroidPolesAndEquator) {
  const auto s = SurfaceSpec::spheroid(1.5, 1.0);
  std::vector<ChartPoint> pts{*s.named_point("north_pole"), *s.named_point("south_pole")};
  for (int i = 0; i < 3; ++i) pts.push_back(s.designate({0, kPi / 2, 2.0 * i}));
  const auto out = sweep(s, pts, {});
  int poles = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    ASSERT_TRUE(out[i].verdict) << *out[i].error;
    const auto& v = *out[i].verdict;
    if (i < 2) {
      EXPECT_EQ(v.tag, VerdictTag::Pole) << i;
      EXPECT_FALSE(v.inconclusive);
    } else {
      EXPECT_EQ(v.tag, VerdictTag::NotSelfFocal) << i;
    }
    poles += v.tag == VerdictTag::Pole;
  }
  EXPECT_EQ(poles, 2);
}

TEST(Sweep, ErrorsAreRecordedPerPoint) {
  const auto s = SurfaceSpec::round_sphere(1.0);
  // chart 7 does not exist
  const auto out = sweep(s, {{0, 1.0, 0.0}, {7, 1.0, 0.0}}, {});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[0].verdict.has_value());
  EXPECT_FALSE(out[1].verdict.has_value());
  ASSERT_TRUE(out[1].error.has_value());
}

TEST(ClassifierConfigTest, Validation) {
  ClassifierConfig c;
  c.pole_tol = -1.0;
  EXPECT_THROW(c.validate(), Error);
  ClassifierConfig d;
  d.ulam_bins = 16;
  EXPECT_THROW(d.validate(), Error);
  const auto r = ClassifierConfig{}.resolved(SurfaceSpec::round_sphere(2.0));
  EXPECT_DOUBLE_EQ(r.closure_tol, 2e-4);
}
