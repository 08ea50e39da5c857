#include <gtest/gtest.h>

#include <numbers>

#include "legfol/bundle.hpp"
#include "legfol/parse.hpp"
#include "legfol/random.hpp"

using namespace legfol;

namespace {

constexpr double kPi = std::numbers::pi;

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec v1(double a) { return Vec::Constant(1, a); }

Mat rotation(double angle) {
  Mat r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

// Torus base; X_j = d/ds_j + c_j (1 + u^2 + v^2)(-v d/du + u d/dv). Flat since
// the vertical parts are multiples of one rotation-invariant field.
FlatDiskBundle twisted_torus(double c1, double c2, double radius = 1.0) {
  Expr u = Expr::var(2), v = Expr::var(3);
  Expr g = Expr(1.0) + u * u + v * v;
  return {{"s1", "s2"},
          {1.0, 1.0},
          radius,
          {{-Expr(c1) * g * v, Expr(c1) * g * u}, {-Expr(c2) * g * v, Expr(c2) * g * u}}};
}

// Closed-form transport for twisted_torus: rotation by (c . ds)(1 + r^2).
Vec twisted_flow(double c1, double c2, const Vec& ds, const Vec& x) {
  return rotation((c1 * ds[0] + c2 * ds[1]) * (1 + x.squaredNorm())) * x;
}

DiffForm fiber(const FlatDiskBundle& e, std::string_view text) { return parse_form(text, e.total()); }

std::vector<Vec> disk_samples(int count, std::uint64_t seed, double r) {
  std::vector<Vec> out;
  Rng rng(seed);
  while (static_cast<int>(out.size()) < count) {
    Vec p = v2(rng.uniform(-r, r), rng.uniform(-r, r));
    if (p.norm() <= r) out.push_back(p);
  }
  return out;
}

GraphSubmanifold paraboloid(int n) {
  Chart src = GraphSubmanifold::source_chart(n, GraphSubmanifold::standard_free(n, n + 1));
  std::string xn = "x" + std::to_string(n), yn = "y" + std::to_string(n);
  return GraphSubmanifold::standard(n, n + 1, {{"z", parse_expr("(" + xn + "^2 + " + yn + "^2)/2", src)}});
}

}  // namespace

// ---------------------------------------------------------------------------
// flatness_check

TEST(Flatness, Examples) {
  auto pts3 = uniform_samples(Box::cube(3, 0.5), 40, 1);
  auto pts4 = uniform_samples(Box::cube(4, 0.5), 40, 2);
  EXPECT_EQ(flatness_check(FlatDiskBundle::trivial(2), pts4), 0.0);
  EXPECT_EQ(flatness_check(FlatDiskBundle::rotation(3.0), pts3), 0.0);
  EXPECT_LE(flatness_check(twisted_torus(0.7, -1.3), pts4), 1e-12);

  Expr u = Expr::var(2), v = Expr::var(3);
  FlatDiskBundle bent({"s1", "s2"}, {1.0, 1.0}, 1.0, {{v, Expr(0.0)}, {Expr(0.0), u}});
  // [d1 + v du, d2 + u dv] = v dv - u du.
  double expected = 0.0;
  for (const auto& p : pts4) expected = std::max({expected, std::abs(p[2]), std::abs(p[3])});
  EXPECT_NEAR(flatness_check(bent, pts4), expected, 1e-15);
  EXPECT_GT(flatness_check(bent, pts4), 0.1);
}

TEST(Bundle, Validation) {
  EXPECT_THROW(FlatDiskBundle({"s"}, {1.0}, -1.0, {{Expr(0.0), Expr(0.0)}}), Error);
  EXPECT_THROW(FlatDiskBundle({"s"}, {1.0}, 1.0, {}), Error);
  EXPECT_THROW(FlatDiskBundle({"s"}, {1.0}, 1.0, {{Expr::var(3), Expr(0.0)}}), Error);
  EXPECT_THROW(FlatDiskBundle({"s"}, {1.0}, 1.0, {{Expr(0.0), Expr(0.0)}}, 0), Error);
  auto e = FlatDiskBundle::rotation(1.0);
  EXPECT_EQ(e.total().names(), (std::vector<std::string>{"s1", "u", "v"}));
  EXPECT_TRUE(e.total().period(0).has_value());
  EXPECT_FALSE(e.total().period(1).has_value());
}

// ---------------------------------------------------------------------------
// parallel_transport

TEST(Transport, TrivialLoopsAreIdentity) {
  auto e = FlatDiskBundle::trivial(2);
  std::vector<Vec> loop{v2(0, 0), v2(1, 0), v2(1, 1), v2(0, 1), v2(0, 0)};
  for (const auto& x : disk_samples(10, 3, 0.9)) {
    auto r = parallel_transport(e, loop, x);
    EXPECT_FALSE(r.escaped);
    EXPECT_EQ((r.end - x).norm(), 0.0);
  }
}

TEST(Transport, RotationQuarterTurn) {
  for (double r : {0.3, 0.8, 1.0}) {
    auto e = FlatDiskBundle::rotation(kPi / 2, 1.0);
    auto res = parallel_transport(e, {v1(0), v1(1)}, v2(r, 0));
    ASSERT_FALSE(res.escaped);
    EXPECT_LE((res.end - v2(0, r)).norm(), 1e-6) << r;
    EXPECT_GT(res.stats.steps, 0);
  }
}

TEST(Transport, MatchesClosedFormNonlinearFlow) {
  auto e = twisted_torus(0.7, -1.3);
  Rng rng(8);
  for (const auto& x : disk_samples(20, 4, 0.8)) {
    Vec a = v2(rng.uniform(-1, 1), rng.uniform(-1, 1)), b = v2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    auto res = parallel_transport(e, {a, b}, x);
    EXPECT_LE((res.end - twisted_flow(0.7, -1.3, b - a, x)).norm(), 1e-7);
  }
}

TEST(Transport, FunctorialityAndInverse) {
  const double tol = 1e-8;
  auto e = twisted_torus(0.9, 0.4);
  std::vector<Vec> g1{v2(0.1, 0.2), v2(0.6, -0.3), v2(1.4, 0.1)};
  std::vector<Vec> g2{v2(1.4, 0.1), v2(0.9, 0.9), v2(-0.2, 1.7)};
  std::vector<Vec> both = g1;
  both.insert(both.end(), g2.begin() + 1, g2.end());
  for (const auto& x : disk_samples(25, 5, 0.7)) {
    auto first = parallel_transport(e, g1, x, {tol});
    auto second = parallel_transport(e, g2, first.end, {tol});
    auto whole = parallel_transport(e, both, x, {tol});
    EXPECT_LE((whole.end - second.end).norm(), 2 * tol);
    auto back = parallel_transport(e, reversed(g1), first.end, {tol});
    EXPECT_LE((back.end - x).norm(), 2 * tol);
  }
}

TEST(Transport, EscapeFlag) {
  Expr u = Expr::var(1), v = Expr::var(2);
  FlatDiskBundle radial({"s"}, {1.0}, 1.0, {{u, v}});
  auto r = parallel_transport(radial, {v1(0), v1(1)}, v2(0.9, 0));
  EXPECT_TRUE(r.escaped);
  EXPECT_EQ(r.escape_segment, 0);
  EXPECT_LE(r.end.norm(), 1.0 + 0.2);
  EXPECT_GT(r.end.norm(), 1.0);
  auto o = parallel_transport(radial, {v1(0), v1(1)}, v2(0, 0));
  EXPECT_FALSE(o.escaped);
  EXPECT_EQ(o.end.norm(), 0.0);
}

TEST(Transport, Errors) {
  auto e = FlatDiskBundle::rotation(1.0);
  EXPECT_THROW(parallel_transport(e, {v1(0)}, v2(0, 0)), Error);
  EXPECT_THROW(parallel_transport(e, {v1(0), v1(1)}, v2(1.5, 0)), Error);
  EXPECT_THROW(parallel_transport(e, {v2(0, 0), v2(1, 0)}, v2(0, 0)), Error);
  // du/ds = 1/(0.5 - u) blows up at u = 0.5 for s = 0.005.
  Expr u = Expr::var(1);
  FlatDiskBundle blowup({"s"}, {1.0}, 1.0, {{Expr(1.0) / (Expr(0.5) - u), Expr(0.0)}});
  EXPECT_THROW(parallel_transport(blowup, {v1(0), v1(1)}, v2(0.4, 0)), Error);
}

// ---------------------------------------------------------------------------
// holonomy

TEST(Holonomy, TrivialIsIdentity) {
  auto e = FlatDiskBundle::trivial(2);
  auto pts = disk_samples(12, 6, 0.9);
  for (int j = 0; j < 2; ++j) {
    auto h = holonomy(e, j, pts);
    EXPECT_EQ(h.origin_drift(), 0.0);
    for (const auto& s : h.samples) {
      EXPECT_EQ((s.image - s.point).norm(), 0.0);
      EXPECT_LE((s.jacobian - Mat::Identity(2, 2)).norm(), 1e-10);
    }
  }
}

TEST(Holonomy, RotationQuarterTurn) {
  auto e = FlatDiskBundle::rotation(kPi / 2);
  auto h = holonomy(e, 0, disk_samples(20, 7, 0.9));
  EXPECT_LE(h.origin_drift(), 1e-8);
  EXPECT_TRUE(h.orientation_preserving());
  for (const auto& s : h.samples) {
    EXPECT_FALSE(s.escaped);
    EXPECT_LE((s.image - rotation(kPi / 2) * s.point).norm(), 1e-6);
    EXPECT_LE((s.jacobian - rotation(kPi / 2)).norm(), 1e-5);
    EXPECT_NEAR(s.det, 1.0, 1e-5);
  }
}

TEST(Holonomy, ContractibleRectangleIsIdentity) {
  const double tol = 1e-8;
  auto e = twisted_torus(1.1, -0.6);
  std::vector<Vec> rect{v2(0.2, 0.1), v2(0.9, 0.1), v2(0.9, 0.6), v2(0.2, 0.6), v2(0.2, 0.1)};
  std::vector<Vec> wide{v2(0, 0), v2(2.5, 0), v2(2.5, -1.5), v2(0, -1.5), v2(0, 0)};
  for (const auto& x : disk_samples(20, 9, 0.8)) {
    EXPECT_LE((parallel_transport(e, rect, x, {tol}).end - x).norm(), 10 * tol);
    EXPECT_LE((parallel_transport(e, wide, x, {tol}).end - x).norm(), 10 * tol);
  }
}

TEST(Holonomy, NonlinearGeneratorsFixOriginAndPreserveOrientation) {
  auto e = twisted_torus(2.0, -3.0);
  auto pts = disk_samples(15, 10, 0.9);
  for (int j = 0; j < 2; ++j) {
    auto h = holonomy(e, j, pts);
    EXPECT_LE(h.origin_drift(), 1e-8);
    EXPECT_TRUE(h.orientation_preserving());
    double c = j == 0 ? 2.0 : -3.0;
    for (const auto& s : h.samples) EXPECT_LE((s.image - twisted_flow(c, 0, v2(1, 0), s.point)).norm(), 1e-7);
  }
}

TEST(Holonomy, EscapingSamplesAreFlagged) {
  Expr u = Expr::var(1), v = Expr::var(2);
  FlatDiskBundle radial({"s"}, {1.0}, 1.0, {{Expr(0.5) * u, Expr(0.5) * v}});
  auto h = holonomy(radial, 0, {v2(0.1, 0), v2(0.95, 0)});
  EXPECT_FALSE(h.samples[0].escaped);
  EXPECT_TRUE(h.samples[1].escaped);
  EXPECT_NEAR(h.samples[0].image[0], 0.1 * std::exp(0.5), 1e-8);
  EXPECT_THROW(holonomy(radial, 1, {}), Error);
}

// ---------------------------------------------------------------------------
// covariant_derivative

namespace {

// (Phi_tau^* beta)_x restricted to the fiber, tau -> 0 by central differences,
// Phi_tau the transport from the fiber over s to the fiber over s + tau e_j.
Vec transport_pullback_derivative(const FlatDiskBundle& e, const DiffForm& beta, int j, const Vec& s, const Vec& x) {
  const double tau = 1e-3, h = 1e-4;
  OdeOptions opt{1e-12};
  auto pulled = [&](double t) {
    Vec s1 = s;
    s1[j] += t;
    std::vector<Vec> path{s, s1};
    Vec image = parallel_transport(e, path, x, opt).end;
    Mat jac(2, 2);
    for (int c = 0; c < 2; ++c) {
      Vec d = h * Vec::Unit(2, c);
      jac.col(c) = (parallel_transport(e, path, x + d, opt).end - parallel_transport(e, path, x - d, opt).end) / (2 * h);
    }
    Vec cov = beta.covector(e.point(s1, image));
    return Vec(jac.transpose() * cov.tail(2));
  };
  return (pulled(tau) - pulled(-tau)) / (2 * tau);
}

}  // namespace

TEST(CovariantDerivative, Examples) {
  auto triv = FlatDiskBundle::trivial(1);
  auto ds = VectorFieldExpr::coordinate(triv.base(), 0);
  EXPECT_TRUE(covariant_derivative(triv, ds, fiber(triv, "u*dv - v*du + u^2*du")).is_zero());

  const double c = 0.8;
  auto rot = FlatDiskBundle::rotation(c);
  // Zero as a function; the symbolic result is not canonically simplified.
  auto inv = covariant_derivative(rot, ds, fiber(rot, "u*dv - v*du"));
  for (const auto& p : uniform_samples(Box::cube(3, 1.0), 50, 11)) EXPECT_LE(inv.max_abs_coeff(p), 1e-15);

  // L_X du = d(-c v).
  auto got = covariant_derivative(rot, ds, fiber(rot, "du"));
  EXPECT_EQ(got.str(), fiber(rot, "-0.8*dv").str());
}

TEST(CovariantDerivative, MatchesTransportPullback) {
  auto rot = FlatDiskBundle::rotation(0.8);
  auto tor = twisted_torus(0.7, -0.4);
  struct Case {
    const FlatDiskBundle* e;
    std::string beta;
    int j;
  };
  std::vector<Case> cases{{&rot, "du", 0},
                          {&rot, "(1 + sin(2*s1)*u)*dv + v^2*du", 0},
                          {&tor, "u*v*du + (cos(s2) + u)*dv", 0},
                          {&tor, "u*v*du + (cos(s2) + u)*dv", 1},
                          {&tor, "exp(u)*dv", 1}};
  Rng rng(12);
  for (const auto& cs : cases) {
    const auto& e = *cs.e;
    DiffForm beta = fiber(e, cs.beta);
    auto x = VectorFieldExpr::coordinate(e.base(), cs.j);
    DiffForm nabla = covariant_derivative(e, x, beta);
    for (int t = 0; t < 6; ++t) {
      Vec s = Vec::Zero(e.base_dim());
      for (int i = 0; i < e.base_dim(); ++i) s[i] = rng.uniform(0, 1);
      Vec p = v2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
      Vec oracle = transport_pullback_derivative(e, beta, cs.j, s, p);
      Vec symbolic = nabla.covector(e.point(s, p)).tail(2);
      EXPECT_LE((oracle - symbolic).cwiseAbs().maxCoeff(), 1e-4) << cs.beta;
    }
  }
  // The du example is nonzero.
  EXPECT_FALSE(covariant_derivative(rot, VectorFieldExpr::coordinate(rot.base(), 0), fiber(rot, "du")).is_zero());
}

TEST(CovariantDerivative, LiftOfBaseField) {
  auto tor = twisted_torus(0.5, 0.25);
  VectorFieldExpr x(tor.base(), {Expr(2.0), Expr::var(0)});
  auto lift = tor.lift(x);
  Vec p(4);
  p << 0.3, 0.1, 0.2, -0.4;
  Vec expected = 2.0 * tor.lift(0)(p) + 0.3 * tor.lift(1)(p);
  EXPECT_LE((lift(p) - expected).norm(), 1e-15);
  EXPECT_THROW(tor.lift(VectorFieldExpr::zero(tor.total())), Error);
}

// ---------------------------------------------------------------------------
// ccl_check

TEST(Ccl, StandardRotationFormPasses) {
  auto e = FlatDiskBundle::trivial(1);
  auto r = ccl_check(e, fiber(e, "u*dv - v*du"));
  EXPECT_TRUE(r.vanishing);
  EXPECT_TRUE(r.positivity);
  EXPECT_TRUE(r.invariance);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.beta_at_origin, 0.0);
  EXPECT_NEAR(r.min_dbeta, 2.0, 1e-12);
  EXPECT_GT(r.min_beta_away, 0.0);
}

TEST(Ccl, ConstantFormFailsVanishingAndPositivity) {
  auto e = FlatDiskBundle::trivial(1);
  auto r = ccl_check(e, fiber(e, "du"));
  EXPECT_FALSE(r.vanishing);
  EXPECT_FALSE(r.positivity);
  EXPECT_TRUE(r.invariance);
  EXPECT_EQ(r.failures(), (std::vector<std::string>{"vanishing", "positivity"}));
}

TEST(Ccl, RotationInvariance) {
  for (double c : {kPi / 2, 1.0, 2.7}) {
    auto e = FlatDiskBundle::rotation(c);
    auto r = ccl_check(e, fiber(e, "u*dv - v*du"));
    EXPECT_LE(r.invariance_residual, 1e-6) << c;
    EXPECT_TRUE(r.passed());
  }
}

TEST(Ccl, NegativeSuiteFailsExactlyOneCondition) {
  auto triv = FlatDiskBundle::trivial(1);
  auto quarter = FlatDiskBundle::rotation(kPi / 2);
  // Twist holonomy theta -> theta + phi(r) pulls h(r) dtheta back to h (dtheta + phi' dr).
  auto twist = twisted_torus(0.6, -0.9);
  struct Case {
    const FlatDiskBundle* e;
    std::string beta, failing;
  };
  std::vector<Case> suite{{&quarter, "2*u*dv - v*du", "invariance"},
                          {&triv, "u*dv - v*du + 0.5*du", "vanishing"},
                          {&triv, "-(u*dv - v*du)", "positivity"},
                          {&twist, "(1 + u^2 + v^2)*(u*dv - v*du)", "invariance"},
                          {&triv, "(u^2 + v^2)*(u*dv - v*du) + 0.1*(u*dv - v*du)", ""}};
  for (const auto& cs : suite) {
    auto r = ccl_check(*cs.e, fiber(*cs.e, cs.beta));
    if (cs.failing.empty()) {
      EXPECT_TRUE(r.passed()) << cs.beta;
    } else {
      EXPECT_EQ(r.failures(), std::vector<std::string>{cs.failing}) << cs.beta;
    }
  }
}

TEST(Ccl, OrientationSign) {
  FlatDiskBundle flipped({"s1"}, {1.0}, 1.0, {{Expr(0.0), Expr(0.0)}}, -1);
  EXPECT_TRUE(ccl_check(flipped, fiber(flipped, "v*du - u*dv")).passed());
  EXPECT_FALSE(ccl_check(flipped, fiber(flipped, "u*dv - v*du")).positivity);
}

TEST(Ccl, PreconditionErrors) {
  auto e = FlatDiskBundle::trivial(1);
  EXPECT_THROW(ccl_check(e, fiber(e, "u*dv - v*du + ds1")), Error);
  EXPECT_THROW(ccl_check(e, fiber(e, "s1*dv")), Error);
  EXPECT_THROW(ccl_check(e, fiber(e, "du^dv")), Error);
}

// ---------------------------------------------------------------------------
// extract_flat_structure

TEST(FlatStructure, ParaboloidN2) {
  auto y = paraboloid(2);
  auto pts = uniform_samples(Box::cube(3, 0.5), 30, 13);
  pts.push_back(Vec::Zero(3));
  auto r = extract_flat_structure(y, pts);
  EXPECT_EQ(r.singular_samples, 1u);
  for (const auto& d : r.distributions) {
    ASSERT_EQ(d.cols(), 1);
    EXPECT_TRUE(LinSubspace(3, d) == LinSubspace(3, Mat(Vec::Unit(3, 0))));
  }
  EXPECT_LE(r.integrability, 1e-8);
  EXPECT_LE(r.covariant_constancy, 1e-8);
}

TEST(FlatStructure, ParaboloidN3) {
  auto y = paraboloid(3);
  auto pts = uniform_samples(Box::cube(4, 0.5), 30, 14);
  pts.push_back(Vec::Zero(4));
  auto r = extract_flat_structure(y, pts);
  Mat expected(4, 2);
  expected << 1, 0, 0, 1, 0, 0, 0, 0;
  for (const auto& d : r.distributions) EXPECT_TRUE(LinSubspace(4, d) == LinSubspace(4, expected));
  EXPECT_LE(r.integrability, 1e-8);
  EXPECT_LE(r.covariant_constancy, 1e-8);
}

TEST(FlatStructure, LegendrianModelRefused) {
  GraphSubmanifold leg(2, {"y1"}, {});
  try {
    extract_flat_structure(leg, {Vec::Zero(3)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "non-generic singular structure");
  }
}
