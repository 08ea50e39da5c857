#ifndef LEGFOL_BUNDLE_HPP_
#define LEGFOL_BUNDLE_HPP_

// Flat disk bundles over periodic boxes: horizontal lifts, parallel transport
// by adaptive Dormand-Prince integration, sampled holonomy, covariant
// derivatives, CCL 1-form validation and the flat structure ker(d lambda)
// near a generic singular component.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "legfol/coiso.hpp"
#include "legfol/forms.hpp"
#include "legfol/sampling.hpp"
#include "legfol/symplin.hpp"

namespace legfol {

/// Total chart (s_1..s_b, u, v) with periodic s; lifts d/ds_j + a_j d/du + b_j d/dv.
class FlatDiskBundle {
 public:
  struct Lift {
    Expr a, b;
  };

  FlatDiskBundle() = default;
  FlatDiskBundle(std::vector<std::string> base_names, std::vector<double> periods, double radius,
                 std::vector<Lift> lifts, int orientation = 1, std::vector<std::string> fiber_names = {"u", "v"})
      : radius_(radius), orientation_(orientation), lifts_(std::move(lifts)) {
    if (base_names.empty()) throw Error("bundle: base needs at least one coordinate");
    if (periods.size() != base_names.size()) throw Error("bundle: one period per base coordinate");
    if (fiber_names.size() != 2) throw Error("bundle: fiber is a 2-disk");
    if (!(radius > 0)) throw Error("bundle: fiber radius must be positive");
    if (orientation != 1 && orientation != -1) throw Error("bundle: orientation must be +1 or -1");
    if (lifts_.size() != base_names.size()) throw Error("bundle: one horizontal lift per base coordinate");
    std::vector<std::optional<double>> per(periods.begin(), periods.end());
    base_ = Chart(base_names, per);
    std::vector<std::string> names = base_names;
    names.insert(names.end(), fiber_names.begin(), fiber_names.end());
    per.resize(names.size());
    total_ = Chart(names, per);
    for (const auto& l : lifts_)
      if (l.a.max_var() >= total_.dim() || l.b.max_var() >= total_.dim())
        throw Error("bundle: lift references a variable outside the total chart");
  }

  static FlatDiskBundle trivial(int base_dim, double radius = 1.0) {
    std::vector<std::string> names;
    for (int j = 1; j <= base_dim; ++j) names.push_back("s" + std::to_string(j));
    return {names, std::vector<double>(static_cast<std::size_t>(base_dim), 1.0), radius,
            std::vector<Lift>(static_cast<std::size_t>(base_dim), Lift{Expr(0.0), Expr(0.0)})};
  }

  /// Circle base of period 1 with lift d/ds + c(-v d/du + u d/dv).
  static FlatDiskBundle rotation(double c, double radius = 1.0) {
    Expr u = Expr::var(1), v = Expr::var(2);
    return {{"s1"}, {1.0}, radius, {Lift{-Expr(c) * v, Expr(c) * u}}};
  }

  int base_dim() const { return base_.dim(); }
  const Chart& base() const { return base_; }
  const Chart& total() const { return total_; }
  double radius() const { return radius_; }
  int orientation() const { return orientation_; }
  double period(int j) const { return *base_.period(j); }
  const std::vector<Lift>& lifts() const { return lifts_; }
  int u_index() const { return base_dim(); }
  int v_index() const { return base_dim() + 1; }

  VectorFieldExpr lift(int j) const {
    std::vector<Expr> c(static_cast<std::size_t>(total_.dim()), Expr(0.0));
    c[static_cast<std::size_t>(j)] = Expr(1.0);
    c[static_cast<std::size_t>(u_index())] = lifts_.at(static_cast<std::size_t>(j)).a;
    c[static_cast<std::size_t>(v_index())] = lifts_.at(static_cast<std::size_t>(j)).b;
    return {total_, std::move(c)};
  }

  /// Horizontal lift of a base field X = sum X_j d/ds_j.
  VectorFieldExpr lift(const VectorFieldExpr& x) const {
    if (x.chart() != base_) throw Error("bundle: base field lives on a different chart");
    VectorFieldExpr out = VectorFieldExpr::zero(total_);
    for (int j = 0; j < base_dim(); ++j)
      if (!x[j].is_zero()) out = out + x[j] * lift(j);
    return out;
  }

  Vec point(const Vec& s, const Vec& x) const {
    Vec p(total_.dim());
    p << s, x;
    return p;
  }

 private:
  Chart base_, total_;
  double radius_ = 1.0;
  int orientation_ = 1;
  std::vector<Lift> lifts_;
};

/// Largest vertical component of [X_i, X_j] over the samples.
inline double flatness_check(const FlatDiskBundle& e, const std::vector<Vec>& samples) {
  double worst = 0.0;
  for (int i = 0; i < e.base_dim(); ++i)
    for (int j = i + 1; j < e.base_dim(); ++j) {
      VectorFieldExpr br = lie_bracket(e.lift(i), e.lift(j));
      for (const auto& p : samples) {
        Vec w = br(p);
        worst = std::max({worst, std::abs(w[e.u_index()]), std::abs(w[e.v_index()])});
      }
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Adaptive integration

struct OdeOptions {
  double tol = 1e-8;
  long max_steps = 1000000;
  double min_step = 1e-14;
};

struct OdeStats {
  long steps = 0;
  long rejected = 0;
  double max_local_error = 0.0;
};

namespace detail {

/// Dormand-Prince 5(4) from t0 to t1. Stops early and returns false when
/// `inside` fails for an accepted state.
template <typename F, typename Inside>
bool dopri5(F&& f, Vec& x, double t0, double t1, const OdeOptions& opt, OdeStats& stats, Inside&& inside) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  const double span = t1 - t0;
  if (span == 0.0) return true;
  double t = t0, h = span / 16.0;
  Vec k1 = f(t, x);
  while ((t1 - t) * (span > 0 ? 1 : -1) > 0) {
    if (stats.steps + stats.rejected >= opt.max_steps) throw Error("transport: step limit exceeded");
    if ((t + h - t1) * (span > 0 ? 1 : -1) > 0) h = t1 - t;
    Vec k2 = f(t + c2 * h, x + h * a21 * k1);
    Vec k3 = f(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
    Vec k4 = f(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    Vec k5 = f(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    Vec k6 = f(t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vec xn = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Vec k7 = f(t + h, xn);
    Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double norm = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double sc = opt.tol + opt.tol * std::max(std::abs(x[i]), std::abs(xn[i]));
      norm = std::max(norm, std::abs(err[i]) / sc);
    }
    if (!std::isfinite(norm)) throw Error("transport: non-finite state");
    if (norm <= 1.0) {
      t += h;
      x = xn;
      k1 = k7;
      ++stats.steps;
      stats.max_local_error = std::max(stats.max_local_error, err.cwiseAbs().maxCoeff());
      if (!inside(x)) return false;
    } else {
      ++stats.rejected;
    }
    double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
    h *= factor;
    if (std::abs(h) < opt.min_step * std::max(1.0, std::abs(span))) throw Error("transport: step size underflow");
  }
  return true;
}

}  // namespace detail

struct TransportResult {
  Vec start, end;
  std::vector<Vec> path;
  bool escaped = false;
  int escape_segment = -1;
  OdeStats stats;
};

/// Horizontal lift of the polyline `path` (base coordinates) starting at the
/// fiber point x0.
inline TransportResult parallel_transport(const FlatDiskBundle& e, const std::vector<Vec>& path, const Vec& x0,
                                          const OdeOptions& opt = {}) {
  if (path.size() < 2) throw Error("transport: path needs at least two vertices");
  for (const auto& v : path)
    if (v.size() != e.base_dim()) throw Error("transport: path vertex has wrong dimension");
  if (x0.size() != 2) throw Error("transport: fiber point must have two coordinates");
  if (x0.norm() > e.radius()) throw Error("transport: start point lies outside the fiber disk");
  TransportResult r;
  r.start = x0;
  r.path = path;
  Vec x = x0;
  const int b = e.base_dim();
  for (std::size_t seg = 0; seg + 1 < path.size(); ++seg) {
    const Vec p = path[seg], dir = path[seg + 1] - path[seg];
    auto rhs = [&](double tau, const Vec& y) {
      Vec q(b + 2);
      q << p + tau * dir, y;
      q = e.total().reduce(q);
      Vec out = Vec::Zero(2);
      for (int j = 0; j < b; ++j) {
        if (dir[j] == 0.0) continue;
        const auto& l = e.lifts()[static_cast<std::size_t>(j)];
        out[0] += dir[j] * l.a.eval(q);
        out[1] += dir[j] * l.b.eval(q);
      }
      return out;
    };
    bool ok = detail::dopri5(rhs, x, 0.0, 1.0, opt, r.stats, [&](const Vec& y) { return y.norm() <= e.radius(); });
    if (!ok) {
      r.escaped = true;
      r.escape_segment = static_cast<int>(seg);
      break;
    }
  }
  r.end = x;
  return r;
}

/// The loop s0 -> s0 + period_j e_j.
inline std::vector<Vec> generator_loop(const FlatDiskBundle& e, int j, const Vec& s0) {
  Vec s1 = s0;
  s1[j] += e.period(j);
  return {s0, s1};
}

inline std::vector<Vec> reversed(std::vector<Vec> path) {
  std::reverse(path.begin(), path.end());
  return path;
}

struct HolonomySample {
  Vec point, image;
  Mat jacobian;
  double det = 0.0;
  bool escaped = false;
};

struct HolonomyResult {
  int generator = 0;
  std::vector<HolonomySample> samples;
  Vec origin_image;

  double origin_drift() const { return origin_image.norm(); }
  bool orientation_preserving() const {
    return std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.escaped || s.det > 0; });
  }
};

/// Transport around generator j for each sample; Jacobians by central
/// differences of width `fd_step`.
inline HolonomyResult holonomy(const FlatDiskBundle& e, int j, const std::vector<Vec>& points,
                               const OdeOptions& opt = {}, double fd_step = 1e-4,
                               std::optional<Vec> base_point = std::nullopt) {
  if (j < 0 || j >= e.base_dim()) throw Error("holonomy: no generator " + std::to_string(j));
  auto loop = generator_loop(e, j, base_point.value_or(Vec::Zero(e.base_dim())));
  HolonomyResult h;
  h.generator = j;
  h.origin_image = parallel_transport(e, loop, Vec::Zero(2), opt).end;
  h.samples.resize(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    HolonomySample& s = h.samples[i];
    s.point = points[i];
    auto r = parallel_transport(e, loop, points[i], opt);
    s.image = r.end;
    s.escaped = r.escaped;
    s.jacobian = Mat::Zero(2, 2);
    if (s.escaped) return;
    for (int c = 0; c < 2; ++c) {
      Vec dp = fd_step * Vec::Unit(2, c);
      if ((points[i] + dp).norm() > e.radius() || (points[i] - dp).norm() > e.radius()) {
        s.escaped = true;
        return;
      }
      auto plus = parallel_transport(e, loop, points[i] + dp, opt);
      auto minus = parallel_transport(e, loop, points[i] - dp, opt);
      if (plus.escaped || minus.escaped) {
        s.escaped = true;
        return;
      }
      s.jacobian.col(c) = (plus.end - minus.end) / (2 * fd_step);
    }
    s.det = s.jacobian.determinant();
  });
  return h;
}

/// L_{X~} beta with X~ the horizontal lift of X.
inline DiffForm covariant_derivative(const FlatDiskBundle& e, const VectorFieldExpr& x, const DiffForm& beta) {
  if (beta.chart() != e.total()) throw Error("covariant derivative: form must live on the total chart");
  return lie_derivative(e.lift(x), beta);
}

// ---------------------------------------------------------------------------
// CCL forms

struct CclOptions {
  int fiber_steps = 20;          // fiber grid step = radius / fiber_steps
  int holonomy_steps = 4;        // invariance samples on a coarser grid
  double vanishing_tol = 1e-9;   // |beta(0)|
  double positivity_tol = 1e-9;  // d beta(u, v) * orientation > this
  double invariance_tol = 1e-6;
  OdeOptions ode{1e-11};
  double fd_step = 1e-4;
};

struct CclReport {
  double beta_at_origin = 0.0;
  std::size_t zero_hits_away = 0;   // scan hits farther than one grid step from 0
  double min_beta_away = 0.0;       // min |beta| over disk grid points other than 0
  bool vanishing = false;
  double min_dbeta = 0.0;           // min of orientation * d beta(d/du, d/dv)
  bool positivity = false;
  double invariance_residual = 0.0;
  bool invariance = false;
  std::size_t holonomy_escapes = 0;

  bool passed() const { return vanishing && positivity && invariance; }
  std::vector<std::string> failures() const {
    std::vector<std::string> f;
    if (!vanishing) f.push_back("vanishing");
    if (!positivity) f.push_back("positivity");
    if (!invariance) f.push_back("invariance");
    return f;
  }
};

/// Restriction of a fiber 1-form to the (u, v) chart. Throws unless beta has
/// only du, dv components with coefficients depending on u, v.
inline DiffForm fiber_form(const FlatDiskBundle& e, const DiffForm& beta, const Chart& fiber) {
  if (beta.chart() != e.total() || beta.degree() != 1) throw Error("ccl_check: beta must be a 1-form on the total chart");
  const int b = e.base_dim();
  DiffForm out(fiber, 1);
  std::vector<Expr> sub;
  for (int i = 0; i < b; ++i) sub.push_back(Expr(0.0));
  sub.push_back(Expr::var(0));
  sub.push_back(Expr::var(1));
  for (const auto& [m, c] : beta.coeffs()) {
    int i = std::countr_zero(m);
    if (i < b) throw Error("ccl_check: beta must be a fiber 1-form (no ds components)");
    for (int j = 0; j < b; ++j)
      if (c.depends_on(j)) throw Error("ccl_check: beta's coefficients must depend on the fiber coordinates only");
    out.set(IndexMask{1} << (i - b), c.substitute(sub));
  }
  return out;
}

inline CclReport ccl_check(const FlatDiskBundle& e, const DiffForm& beta, const CclOptions& opt = {}) {
  Chart fiber({e.total().name(e.u_index()), e.total().name(e.v_index())});
  DiffForm bf = fiber_form(e, beta, fiber);
  CclReport r;
  const double rad = e.radius(), step = rad / opt.fiber_steps;
  Grid grid{Box::cube(2, rad), step};
  auto disk = grid.points();
  disk.erase(std::remove_if(disk.begin(), disk.end(), [&](const Vec& p) { return p.norm() > rad * (1 + 1e-12); }),
             disk.end());

  // (2) beta = 0 exactly at 0.
  r.beta_at_origin = bf.covector(Vec::Zero(2)).norm();
  r.min_beta_away = std::numeric_limits<double>::infinity();
  for (const auto& p : disk)
    if (p.norm() > 0) r.min_beta_away = std::min(r.min_beta_away, bf.covector(p).norm());
  auto scan = scan_zero_locus(bf, grid);
  for (const auto& h : scan.hits)
    if (h.norm() <= rad && h.norm() > step * 1.5) ++r.zero_hits_away;
  r.vanishing = r.beta_at_origin <= opt.vanishing_tol && r.zero_hits_away == 0 && r.min_beta_away > 0;

  // (3) d beta > 0 on D.
  DiffForm db = exterior_d(bf);
  r.min_dbeta = std::numeric_limits<double>::infinity();
  for (const auto& p : disk)
    r.min_dbeta = std::min(r.min_dbeta, e.orientation() * evaluate(db, p, {Vec::Unit(2, 0), Vec::Unit(2, 1)}));
  r.positivity = r.min_dbeta > opt.positivity_tol;

  // (1) Hol_g^* beta = beta at sampled points.
  Grid coarse{Box::cube(2, 0.7 * rad), 0.7 * rad / opt.holonomy_steps};
  std::vector<Vec> pts;
  for (const auto& p : coarse.points())
    if (p.norm() <= 0.7 * rad) pts.push_back(p);
  for (int j = 0; j < e.base_dim(); ++j) {
    auto h = holonomy(e, j, pts, opt.ode, opt.fd_step);
    for (const auto& s : h.samples) {
      if (s.escaped) {
        ++r.holonomy_escapes;
        continue;
      }
      Vec pulled = s.jacobian.transpose() * bf.covector(s.image);
      r.invariance_residual = std::max(r.invariance_residual, (pulled - bf.covector(s.point)).cwiseAbs().maxCoeff());
    }
  }
  r.invariance = r.invariance_residual <= opt.invariance_tol && r.holonomy_escapes == 0;
  return r;
}

// ---------------------------------------------------------------------------
// Flat structure near a generic singular component

struct FlatStructureReport {
  std::vector<Mat> distributions;  // orthonormal basis of ker d lambda per sample
  int rank = 0;                    // rank of d lambda (2 when generic)
  double integrability = 0.0;      // |d lambda([U_i, U_j], .)| for the projected frame
  double covariant_constancy = 0.0;  // |L_U lambda| for the projected frame
  std::size_t singular_samples = 0;
};

namespace detail {

inline Mat kernel_projector(const DiffForm& dl, const Vec& p) {
  Mat k = null_space(dl.bilinear(p));
  return k * k.transpose();
}

}  // namespace detail

/// ker(d lambda) on the samples with its involutivity and the constancy of
/// lambda along it. Frame fields are U_j = P(p) e_j with P the orthogonal
/// projector onto the kernel; their derivatives use central differences.
inline FlatStructureReport extract_flat_structure(const GraphSubmanifold& y, const std::vector<Vec>& samples,
                                                  double fd_step = 1e-5) {
  const DiffForm& lam = y.lambda();
  DiffForm dl = exterior_d(lam);
  const int k = y.k();
  FlatStructureReport r;
  r.rank = 2;
  for (const auto& p : samples) {
    auto nd = singular_normal_data(lam, p);
    if (nd.singular) {
      ++r.singular_samples;
      if (!nd.generic) throw Error("non-generic singular structure");
    }
    Mat m = dl.bilinear(p);
    int rk = k - static_cast<int>(null_space(m).cols());
    if (rk != 2) throw Error("non-generic singular structure");
  }
  for (const auto& p : samples) {
    Mat ker = null_space(dl.bilinear(p));
    r.distributions.push_back(ker);
    Mat m = dl.bilinear(p);
    // Derivatives of the projected frame: dP/dx_c by central differences.
    std::vector<Mat> dp(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
      Vec h = fd_step * Vec::Unit(k, c);
      dp[static_cast<std::size_t>(c)] =
          (detail::kernel_projector(dl, p + h) - detail::kernel_projector(dl, p - h)) / (2 * fd_step);
    }
    auto directional = [&](const Vec& dir) {
      Mat out = Mat::Zero(k, k);
      for (int c = 0; c < k; ++c) out += dir[c] * dp[static_cast<std::size_t>(c)];
      return out;
    };
    for (int i = 0; i < ker.cols(); ++i)
      for (int j = i + 1; j < ker.cols(); ++j) {
        // Frame fields through the kernel basis vectors at p.
        Vec ui = ker.col(i), uj = ker.col(j);
        Vec bracket = directional(ui) * uj - directional(uj) * ui;
        r.integrability = std::max(r.integrability, (m * bracket).cwiseAbs().maxCoeff());
      }
    // L_U lambda = d(lambda(U)) + i_U d lambda, and i_U d lambda = 0 at p.
    for (int i = 0; i < ker.cols(); ++i) {
      Vec u = ker.col(i);
      Vec grad(k);
      for (int c = 0; c < k; ++c) {
        Vec h = fd_step * Vec::Unit(k, c);
        auto g = [&](const Vec& q) {
          return lam.covector(q).dot(detail::kernel_projector(dl, q) * u);
        };
        grad[c] = (g(p + h) - g(p - h)) / (2 * fd_step);
      }
      Vec iu = m.transpose() * u;
      r.covariant_constancy = std::max(r.covariant_constancy, (grad + iu).cwiseAbs().maxCoeff());
    }
  }
  return r;
}

}  // namespace legfol

#endif  // LEGFOL_BUNDLE_HPP_
