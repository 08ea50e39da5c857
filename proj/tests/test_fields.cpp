#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "legfol/fields.hpp"
#include "legfol/parse.hpp"
#include "legfol/random.hpp"

using namespace legfol;

namespace {

Chart xy() { return Chart({"x1", "y1"}); }

double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST(Differentiate, ConstantIsZero) {
  Chart c = xy();
  ExprField f(c, Expr(5.0));
  ExprField d = differentiate(f, "x1");
  EXPECT_TRUE(d.expr().is_zero());
  EXPECT_EQ(d(Vec::Constant(2, 0.7)), 0.0);
}

TEST(Differentiate, ProductOfCoordinates) {
  Chart c = xy();
  ExprField f(c, coordinate(c, "x1") * coordinate(c, "y1"));
  Vec p(2);
  p << 3, 2;
  EXPECT_EQ(differentiate(f, "x1")(p), 2.0);
}

TEST(Differentiate, SinProductMatchesFiniteDifference) {
  Chart c({"x1", "x2"});
  ExprField f = parse_field("sin(x1*x2)", c);
  Vec p(2);
  p << 1.0, std::numbers::pi;
  double sym = differentiate(f, "x1")(p);
  EXPECT_NEAR(sym, -std::numbers::pi, 1e-12);
  EXPECT_NEAR(sym, fd_partial(f, p, "x1", 1e-5), 1e-5);
}

TEST(Differentiate, UnknownVariableIsNamed) {
  Chart c = xy();
  ExprField f(c, Expr::var(0));
  try {
    differentiate(f, "q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'q'"), std::string::npos);
  }
}

TEST(FdPartial, Examples) {
  Chart c({"x1"});
  Vec one = Vec::Constant(1, 1.0), zero = Vec::Zero(1);
  EXPECT_NEAR(fd_partial(ExprField(c, pow(Expr::var(0), 2)), one, "x1", 1e-5), 2.0, 1e-9);
  EXPECT_NEAR(fd_partial(ExprField(c, exp(Expr::var(0))), zero, "x1", 1e-4), 1.0, 1e-7);
  EXPECT_EQ(fd_partial(ExprField(c, Expr(3.5)), one, "x1", 1e-3), 0.0);
}

TEST(FdPartial, RejectsNonFinite) {
  Chart c({"x1"});
  ExprField f(c, Expr(1.0) / Expr::var(0));
  EXPECT_THROW(fd_partial(f, Vec::Constant(1, 1e-5), "x1", 1e-5), Error);
  EXPECT_THROW(fd_partial(f, Vec::Constant(1, 1.0), "x1", 0.0), Error);
}

TEST(LieBracket, CoordinateFramesCommute) {
  Chart c = xy();
  auto b = lie_bracket(VectorFieldExpr::coordinate(c, 0), VectorFieldExpr::coordinate(c, 1));
  for (const auto& e : b.components()) EXPECT_TRUE(e.is_zero());
}

TEST(LieBracket, HandExpansion) {
  // [x1 d/dy1, y1 d/dx1] = x1 d/dx1 - y1 d/dy1
  Chart c = xy();
  VectorFieldExpr v(c, {Expr(0.0), Expr::var(0)});
  VectorFieldExpr w(c, {Expr::var(1), Expr(0.0)});
  Vec p(2);
  p << 2, 3;
  Vec got = lie_bracket(v, w)(p);
  EXPECT_NEAR(got[0], 2.0, 1e-15);
  EXPECT_NEAR(got[1], -3.0, 1e-15);
}

TEST(LieBracket, ChartMismatch) {
  EXPECT_THROW(lie_bracket(VectorFieldExpr::zero(xy()), VectorFieldExpr::zero(Chart({"a", "b"}))), Error);
}

TEST(Pushforward, IdentityMap) {
  Chart c({"a", "b", "c"});
  Rng rng(3);
  auto v = random_vector_field(rng, c);
  Vec p = random_point(rng, 3);
  EXPECT_LE(max_abs(pushforward(SmoothMapExpr::identity(c), v, p) - v(p)), 1e-15);
}

TEST(Pushforward, DimensionMismatch) {
  Chart a({"a"}), b({"b", "c"});
  SmoothMapExpr m(a, b, {Expr::var(0), Expr::var(0)});
  EXPECT_THROW(pushforward(m, VectorFieldExpr::zero(b), Vec::Zero(2)), Error);
}

TEST(Chart, PeriodicReduction) {
  Chart c({"s", "u"}, {1.0, std::nullopt});
  Vec p(2);
  p << 2.25, 7.0;
  Vec q = c.reduce(p);
  EXPECT_NEAR(q[0], 0.25, 1e-15);
  EXPECT_EQ(q[1], 7.0);
  EXPECT_THROW(Chart({"a", "a"}), Error);
  EXPECT_THROW(Chart({"a"}, {-1.0}), Error);
}

TEST(Expr, FoldingAndAbsorption) {
  Expr x = Expr::var(0);
  EXPECT_TRUE((x * Expr(0.0)).is_zero());
  EXPECT_TRUE(same_tree(x * Expr(1.0), x));
  EXPECT_TRUE(same_tree(x + Expr(0.0), x));
  EXPECT_EQ((Expr(2.0) + Expr(3.0)).constant().value(), 5.0);
  EXPECT_TRUE(pow(x, 0).is_one());
}

TEST(Expr, BumpIsCompactlySupportedAndSmooth) {
  Expr u = Expr::var(0);
  Expr b = bump(u);
  EXPECT_EQ(b.eval(Vec::Zero(1)), 1.0);
  EXPECT_EQ(b.eval(Vec::Constant(1, 1.0)), 0.0);
  EXPECT_EQ(b.eval(Vec::Constant(1, -1.5)), 0.0);
  Expr d3 = b.diff(0).diff(0).diff(0);
  for (double x : {-2.0, -1.0, 1.0, 3.0}) EXPECT_EQ(d3.eval(Vec::Constant(1, x)), 0.0);
  Chart c({"u"});
  for (double x : {-0.8, -0.3, 0.1, 0.6}) {
    Vec p = Vec::Constant(1, x);
    EXPECT_NEAR(b.diff(0).eval(p), fd_partial(ExprField(c, b), p, "u"), 1e-6);
  }
}

TEST(Expr, PrintParseRoundTrip) {
  Chart c({"x1", "x2", "y1"});
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Expr e = random_expr(rng, 3, 4);
    std::string s = e.str(c);
    Expr back = parse_expr(s, c);
    Vec p = random_point(rng, 3);
    EXPECT_NEAR(e.eval(p), back.eval(p), 1e-12 * (1 + std::abs(e.eval(p)))) << s;
    EXPECT_EQ(back.str(c), s);
  }
}

// ---------------------------------------------------------------------------
// Properties

TEST(Property, SymbolicMatchesFiniteDifference) {
  Chart c({"x1", "x2", "y1", "z"});
  Rng rng(2024);
  int fields = 0;
  for (int f = 0; f < 60; ++f) {
    ExprField e(c, random_expr(rng, 4, 4));
    ++fields;
    for (int s = 0; s < 50; ++s) {
      Vec p = random_point(rng, 4);
      for (int j = 0; j < 4; ++j) {
        double sym = differentiate(e, c.name(j))(p);
        double fd = fd_partial(e, p, c.name(j));
        EXPECT_LE(std::abs(sym - fd), 1e-5 * (1 + std::abs(sym))) << e.str() << " d/" << c.name(j);
      }
    }
  }
  EXPECT_EQ(fields, 60);
}

TEST(Property, BracketAntisymmetryAndJacobi) {
  Chart c({"a", "b", "c"});
  Rng rng(7);
  for (int t = 0; t < 40; ++t) {
    auto u = random_vector_field(rng, c);
    auto v = random_vector_field(rng, c);
    auto w = random_vector_field(rng, c);
    auto jac = lie_bracket(u, lie_bracket(v, w)) + lie_bracket(v, lie_bracket(w, u)) + lie_bracket(w, lie_bracket(u, v));
    auto anti = lie_bracket(u, v) + lie_bracket(v, u);
    for (int s = 0; s < 5; ++s) {
      Vec p = random_point(rng, 3);
      EXPECT_LE(max_abs(anti(p)), 1e-12);
      EXPECT_LE(max_abs(jac(p)), 1e-9);
    }
  }
}

TEST(Property, ChainRule) {
  Chart a({"a1", "a2"}), b({"b1", "b2", "b3"}), c({"c1", "c2"});
  Rng rng(99);
  for (int t = 0; t < 40; ++t) {
    SmoothMapExpr f(a, b, {random_expr(rng, 2, 3), random_expr(rng, 2, 3), random_expr(rng, 2, 3)});
    SmoothMapExpr g(b, c, {random_expr(rng, 3, 3), random_expr(rng, 3, 3)});
    SmoothMapExpr gf = g.compose(f);
    for (int s = 0; s < 5; ++s) {
      Vec p = random_point(rng, 2);
      Mat lhs = gf.jacobian(p);
      Mat rhs = g.jacobian(f(p)) * f.jacobian(p);
      EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9 * (1 + rhs.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(Property, ConcurrentEvaluation) {
  Chart c({"x", "y"});
  Rng rng(5);
  Expr e = random_expr(rng, 2, 6);
  std::vector<double> serial(512), par(512);
  auto pt = [](std::size_t i) {
    Vec p(2);
    p << std::sin(static_cast<double>(i)), std::cos(0.5 * static_cast<double>(i));
    return p;
  };
  for (std::size_t i = 0; i < serial.size(); ++i) serial[i] = e.diff(0).eval(pt(i));
  setenv("LEGFOL_THREADS", "4", 1);
  Expr d = e.diff(0);
  parallel_for(par.size(), [&](std::size_t i) { par[i] = d.eval(pt(i)); });
  unsetenv("LEGFOL_THREADS");
  EXPECT_EQ(serial, par);
}
