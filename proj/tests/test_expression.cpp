#include <cmath>
#include <vector>

#include <boost/math/differentiation/autodiff.hpp>
#include <gtest/gtest.h>

#include "focal/expression.hpp"

using focal::Error;
using focal::ErrorCode;
using focal::Expression;

TEST(Expression, Arithmetic) {
  const auto e = Expression::parse("1 + 2*3 - 4/8", {});
  EXPECT_DOUBLE_EQ(e(std::span<const double>{}), 6.5);
}

TEST(Expression, PrecedenceAndUnary) {
  const auto e = Expression::parse("-x^2 + (2 - x)*3", {"x"});
  EXPECT_DOUBLE_EQ(e(1.5), -2.25 + 1.5);
}

TEST(Expression, PowerIsRightAssociative) {
  EXPECT_DOUBLE_EQ(Expression::parse("2^3^2", {})(std::span<const double>{}), 512.0);
}

TEST(Expression, NegativeBaseIntegerPower) {
  EXPECT_DOUBLE_EQ(Expression::parse("x^3", {"x"})(-2.0), -8.0);
  EXPECT_DOUBLE_EQ(Expression::parse("x^-2", {"x"})(-2.0), 0.25);
}

TEST(Expression, Functions) {
  const auto e = Expression::parse("sin(x) + cos(x) + exp(x) + log(x) + sqrt(x)", {"x"});
  const double x = 0.7;
  EXPECT_NEAR(e(x), std::sin(x) + std::cos(x) + std::exp(x) + std::log(x) + std::sqrt(x), 1e-15);
}

TEST(Expression, PiConstant) { EXPECT_DOUBLE_EQ(Expression::parse("2*pi", {})(std::span<const double>{}), 2 * M_PI); }

TEST(Expression, TwoVariables) {
  const auto e = Expression::parse("u*u + 3*v", {"u", "v"});
  const std::vector<double> uv = {2.0, 1.0};
  EXPECT_DOUBLE_EQ(e(std::span<const double>(uv)), 7.0);
}

TEST(Expression, ScientificLiterals) {
  EXPECT_DOUBLE_EQ(Expression::parse("1.5e-3 * 2", {})(std::span<const double>{}), 3e-3);
}

TEST(Expression, DerivativesThroughAutodiff) {
  using namespace boost::math::differentiation;
  const auto e = Expression::parse("sin(s)^2 * exp(s)", {"s"});
  const auto x = make_fvar<double, 2>(0.4);
  const auto y = e.eval1(x);
  const double s = 0.4;
  const double f = std::sin(s) * std::sin(s) * std::exp(s);
  const double df = (2 * std::sin(s) * std::cos(s) + std::sin(s) * std::sin(s)) * std::exp(s);
  EXPECT_NEAR(y.derivative(0), f, 1e-15);
  EXPECT_NEAR(y.derivative(1), df, 1e-14);
}

TEST(Expression, Errors) {
  for (const char* bad : {"1 +", "sin x", "foo(1)", "(1 + 2", "1 2", "x $ 2", "y"}) {
    try {
      Expression::parse(bad, {"x"});
      FAIL() << bad;
    } catch (const Error& err) {
      EXPECT_EQ(err.code(), ErrorCode::ParseError) << bad;
      EXPECT_NE(std::string(err.what()).find("column"), std::string::npos);
    }
  }
}
