#ifndef LEGFOL_GERM_HPP_
#define LEGFOL_GERM_HPP_

// Germs of contact structures along a zero section: the tautological build
// over a nonsingular foliation, the CCL build over a flat disk bundle,
// contactness scans, zero-section checks and the interpolation pencil.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "legfol/bundle.hpp"
#include "legfol/coiso.hpp"
#include "legfol/forms.hpp"
#include "legfol/symplin.hpp"

namespace legfol {

/// Top-form threshold for contactness.
inline constexpr double kContactThreshold = 1e-9;

struct GermForm {
  std::string kind;             // "nonsingular", "singular" or "custom"
  int n = 0;                    // alpha ^ (d alpha)^n is the top form
  DiffForm alpha;
  DiffForm top;
  std::vector<int> frame;       // canonical coordinate frame, as chart indices
  SmoothMapExpr zero_section;   // zero-section chart -> germ chart

  const Chart& chart() const { return alpha.chart(); }
  const Chart& zero_chart() const { return zero_section.source(); }

  double top_value(const Vec& p) const {
    std::vector<Vec> vs;
    for (int i : frame) vs.push_back(Vec::Unit(chart().dim(), i));
    return evaluate(top, p, vs);
  }
  DiffForm restricted() const { return pullback(zero_section, alpha); }
};

inline GermForm make_germ(std::string kind, DiffForm alpha, std::vector<int> frame, SmoothMapExpr zero_section) {
  const int dim = alpha.chart().dim();
  if (alpha.degree() != 1) throw Error("germ: alpha must be a 1-form");
  if (dim % 2 != 1) throw Error("germ: chart dimension must be odd");
  if (static_cast<int>(frame.size()) != dim) throw Error("germ: canonical frame needs one vector per coordinate");
  std::vector<int> sorted = frame;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < dim; ++i)
    if (sorted[static_cast<std::size_t>(i)] != i) throw Error("germ: canonical frame is not a permutation");
  if (zero_section.target() != alpha.chart()) throw Error("germ: zero section does not land in the germ chart");
  GermForm g;
  g.kind = std::move(kind);
  g.n = (dim - 1) / 2;
  g.top = wedge(alpha, wedge_power(exterior_d(alpha), g.n));
  g.alpha = std::move(alpha);
  g.frame = std::move(frame);
  g.zero_section = std::move(zero_section);
  return g;
}

/// dz - sum y_i dx_i with frame (dz, dx1, dy1, ..., dxn, dyn); zero section z = y = 0.
inline GermForm standard_germ(int n) {
  auto sc = standard_contact(n);
  std::vector<int> frame{sc.z()};
  for (int i = 1; i <= n; ++i) {
    frame.push_back(sc.x(i));
    frame.push_back(sc.y(i));
  }
  std::vector<std::string> xs;
  for (int i = 1; i <= n; ++i) xs.push_back("x" + std::to_string(i));
  Chart zc(xs);
  std::vector<Expr> comps(static_cast<std::size_t>(sc.chart.dim()), Expr(0.0));
  for (int i = 1; i <= n; ++i) comps[static_cast<std::size_t>(sc.x(i))] = Expr::var(i - 1);
  return make_germ("custom", sc.alpha, frame, SmoothMapExpr(zc, sc.chart, comps));
}

// ---------------------------------------------------------------------------
// Nonsingular construction

struct FoliatedInput {
  Chart chart;                  // (t, x1..xn)
  DiffForm beta;                // ker beta = F
  VectorFieldExpr line_field;   // L, TY = TF + L

  int n() const { return chart.dim() - 1; }
};

inline Chart foliated_chart(int n) {
  std::vector<std::string> names{"t"};
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  return Chart(names);
}

/// max |beta ^ d beta| over coordinate 3-frames.
inline double frobenius_residual(const DiffForm& beta, const std::vector<Vec>& samples) {
  if (beta.degree() != 1) throw Error("frobenius_residual: beta must be a 1-form");
  if (beta.chart().dim() < 3) return 0.0;
  DiffForm w = wedge(beta, exterior_d(beta));
  double worst = 0.0;
  for (const auto& p : samples) worst = std::max(worst, w.max_abs_coeff(p));
  return worst;
}

struct FoliatedInputReport {
  double frobenius = 0.0;
  double min_beta = 0.0;
  double min_beta_of_l = 0.0;
  bool ok() const { return frobenius <= 1e-8 && min_beta > 0 && min_beta_of_l > 0; }
};

inline FoliatedInputReport check_foliated_input(const FoliatedInput& in, const std::vector<Vec>& samples) {
  if (in.beta.chart() != in.chart || in.line_field.chart() != in.chart)
    throw Error("foliated input: beta and L must live on the input chart");
  FoliatedInputReport r;
  r.frobenius = frobenius_residual(in.beta, samples);
  r.min_beta = r.min_beta_of_l = std::numeric_limits<double>::infinity();
  for (const auto& p : samples) {
    Vec b = in.beta.covector(p);
    r.min_beta = std::min(r.min_beta, b.norm());
    r.min_beta_of_l = std::min(r.min_beta_of_l, b.dot(in.line_field(p)));
  }
  return r;
}

/// alpha = (f + sum R_i y_i) dt - sum y_i dx_i on (t, x1..xn, y1..yn), with
/// f = beta(d/dt) and L rescaled to d/dt + sum R_i d/dx_i.
inline GermForm build_nonsingular_germ(const FoliatedInput& in, const std::vector<Vec>& samples) {
  const int n = in.n();
  if (n < 1) throw Error("nonsingular germ: chart needs t and at least one x");
  auto rep = check_foliated_input(in, samples);
  if (!(rep.min_beta_of_l > 0)) throw Error("line field not positively transverse");
  if (rep.frobenius > 1e-8) throw Error("nonsingular germ: beta is not integrable");
  for (const auto& [m, c] : in.beta.coeffs())
    if (m != 1u) throw Error("nonsingular germ: beta must be f*dt in the foliated chart");
  Expr f = in.beta.coeff(1u);
  Expr lt = in.line_field[0];

  std::vector<std::string> names = in.chart.names();
  std::vector<std::optional<double>> per;
  for (int i = 0; i <= n; ++i) per.push_back(in.chart.period(i));
  for (int i = 1; i <= n; ++i) {
    names.push_back("y" + std::to_string(i));
    per.push_back(std::nullopt);
  }
  Chart c(names, per);
  auto y = [&](int i) { return Expr::var(n + i); };
  Expr dt_coeff = f;
  for (int i = 1; i <= n; ++i) {
    Expr r = lt.is_one() ? in.line_field[i] : in.line_field[i] / lt;
    dt_coeff += r * y(i);
  }
  DiffForm alpha = DiffForm::monomial(c, {0}, dt_coeff);
  for (int i = 1; i <= n; ++i) alpha -= DiffForm::monomial(c, {i}, y(i));

  std::vector<int> frame;
  for (int i = 1; i <= n; ++i) {
    frame.push_back(i);
    frame.push_back(n + i);
  }
  frame.push_back(0);
  std::vector<Expr> comps;
  for (int i = 0; i <= n; ++i) comps.push_back(Expr::var(i));
  for (int i = 1; i <= n; ++i) comps.push_back(Expr(0.0));
  return make_germ("nonsingular", alpha, frame, SmoothMapExpr(in.chart, c, comps));
}

// ---------------------------------------------------------------------------
// Singular construction

/// beta-hat on the total chart: beta composed with the vertical projection
/// along the horizontal lifts.
inline DiffForm horizontal_extension(const FlatDiskBundle& e, const DiffForm& beta) {
  fiber_form(e, beta, Chart({e.total().name(e.u_index()), e.total().name(e.v_index())}));
  const int b = e.base_dim();
  Expr bu = beta.coeff(IndexMask{1} << e.u_index()), bv = beta.coeff(IndexMask{1} << e.v_index());
  DiffForm out = beta;
  for (int j = 0; j < b; ++j) {
    const auto& l = e.lifts()[static_cast<std::size_t>(j)];
    out -= DiffForm::monomial(e.total(), {j}, bu * l.a + bv * l.b);
  }
  return out;
}

namespace detail {

/// Same coefficients on a chart whose leading coordinates are w's chart.
inline DiffForm extend_chart(const DiffForm& w, const Chart& bigger) {
  DiffForm out(bigger, w.degree());
  for (const auto& [m, c] : w.coeffs()) out.set(m, c);
  return out;
}

}  // namespace detail

struct SingularGermOptions {
  CclOptions ccl;
  int check_steps = 4;        // per-axis samples for flatness / invariance gates
  double gate_tol = 1e-8;
};

/// alpha = dz + sigma - sum y_j ds_j on (s1..s_{n-1}, u, v, y1..y_{n-1}, z).
inline GermForm build_singular_germ(const FlatDiskBundle& e, const DiffForm& beta, const SingularGermOptions& opt = {}) {
  auto ccl = ccl_check(e, beta, opt.ccl);
  if (!ccl.passed()) {
    std::string failed;
    for (const auto& f : ccl.failures()) failed += (failed.empty() ? "" : ", ") + f;
    throw Error("not a CCL form: failed " + failed);
  }
  const int b = e.base_dim();
  Grid g{Box{Vec::Zero(b + 2), Vec::Zero(b + 2)}, 0.0};
  for (int j = 0; j < b; ++j) g.box.hi[j] = e.period(j);
  g.box.lo[b] = g.box.lo[b + 1] = -0.7 * e.radius();
  g.box.hi[b] = g.box.hi[b + 1] = 0.7 * e.radius();
  g.step = 1.4 * e.radius() / opt.check_steps;
  auto pts = g.points();
  if (flatness_check(e, pts) > opt.gate_tol) throw Error("singular germ: bundle is not flat");
  DiffForm sigma = horizontal_extension(e, beta);
  double drift = 0.0;
  for (int j = 0; j < b; ++j) {
    DiffForm l = lie_derivative(e.lift(j), sigma);
    for (const auto& p : pts) drift = std::max(drift, l.max_abs_coeff(p));
  }
  if (drift > opt.gate_tol) throw Error("closed-form invariant extension unavailable");

  std::vector<std::string> names = e.total().names();
  std::vector<std::optional<double>> per;
  for (int i = 0; i < b + 2; ++i) per.push_back(e.total().period(i));
  for (int j = 1; j <= b; ++j) {
    names.push_back("y" + std::to_string(j));
    per.push_back(std::nullopt);
  }
  names.push_back("z");
  per.push_back(std::nullopt);
  Chart c(names, per);
  const int z = 2 * b + 2;
  DiffForm alpha = DiffForm::differential(c, z) + detail::extend_chart(sigma, c);
  for (int j = 0; j < b; ++j) alpha -= DiffForm::monomial(c, {j}, Expr::var(b + 2 + j));

  std::vector<int> frame{z};
  for (int j = 0; j < b; ++j) {
    frame.push_back(j);
    frame.push_back(b + 2 + j);
  }
  if (e.orientation() > 0) {
    frame.push_back(e.u_index());
    frame.push_back(e.v_index());
  } else {
    frame.push_back(e.v_index());
    frame.push_back(e.u_index());
  }
  std::vector<Expr> comps;
  for (int i = 0; i < b + 2; ++i) comps.push_back(Expr::var(i));
  for (int j = 0; j <= b; ++j) comps.push_back(Expr(0.0));
  return make_germ("singular", alpha, frame, SmoothMapExpr(e.total(), c, comps));
}

// ---------------------------------------------------------------------------
// Scans

struct ContactnessReport {
  std::size_t samples = 0;
  double min_abs = 0.0;
  double max_abs = 0.0;
  int sign = 0;
  bool sign_consistent = true;
  Vec worst;
  bool passed(double threshold = kContactThreshold) const {
    return samples > 0 && sign_consistent && min_abs > threshold;
  }
};

inline ContactnessReport contactness_scan(const GermForm& g, const std::vector<Vec>& points) {
  ContactnessReport r;
  r.samples = points.size();
  std::vector<double> vals(points.size());
  parallel_for(points.size(), [&](std::size_t i) { vals[i] = g.top_value(points[i]); });
  r.min_abs = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    double a = std::abs(vals[i]);
    if (a < r.min_abs) {
      r.min_abs = a;
      r.worst = points[i];
    }
    r.max_abs = std::max(r.max_abs, a);
    int s = vals[i] > 0 ? 1 : vals[i] < 0 ? -1 : 0;
    if (i == 0) r.sign = s;
    else if (s != r.sign) r.sign_consistent = false;
  }
  if (points.empty()) r.min_abs = 0.0;
  if (r.sign == 0) r.sign_consistent = false;
  return r;
}

/// Points of the germ chart: `base` samples of the zero chart with the
/// remaining coordinates uniform in [-radius, radius].
inline std::vector<Vec> neighborhood_points(const GermForm& g, const std::vector<Vec>& base, double radius,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec> out;
  for (const auto& p : base) {
    Vec q = g.zero_section(p);
    Mat j = g.zero_section.jacobian(p);
    // Fiber directions: complement of the zero section's image.
    Mat comp = null_space(Mat(j.transpose()));
    Vec off = Vec::Zero(comp.cols());
    for (Eigen::Index i = 0; i < off.size(); ++i) off[i] = rng.uniform(-radius, radius);
    out.push_back(q + comp * off);
  }
  return out;
}

struct ZeroSectionReport {
  double restriction_residual = 0.0;
  Vec worst;                       // zero-chart location of the largest residual
  std::size_t kernel_mismatches = 0;
  std::size_t singular_mismatches = 0;
  std::size_t nonsingular_samples = 0;
  std::optional<ZeroScan> scan;    // singular set of the restricted form, when a grid was given
  double tol = 1e-10;

  bool passed() const { return restriction_residual <= tol && kernel_mismatches == 0 && singular_mismatches == 0; }
};

inline ZeroSectionReport zero_section_foliation_check(const GermForm& g, const DiffForm& expected,
                                                      const std::vector<Vec>& samples,
                                                      std::optional<Grid> grid = std::nullopt) {
  if (expected.chart() != g.zero_chart()) throw Error("zero-section check: expected form lives on another chart");
  DiffForm lam = g.restricted();
  ZeroSectionReport r;
  r.worst = samples.empty() ? Vec() : samples.front();
  for (const auto& p : samples) {
    Vec a = lam.covector(p), b = expected.covector(p);
    double d = (a - b).cwiseAbs().maxCoeff();
    if (d > r.restriction_residual) {
      r.restriction_residual = d;
      r.worst = p;
    }
    bool za = a.norm() <= kContactThreshold, zb = b.norm() <= kContactThreshold;
    if (za != zb) {
      ++r.singular_mismatches;
      continue;
    }
    if (za) continue;
    ++r.nonsingular_samples;
    LinSubspace ka(static_cast<int>(a.size()), null_space(Mat(a.transpose())));
    LinSubspace kb(static_cast<int>(b.size()), null_space(Mat(b.transpose())));
    if (!(ka == kb)) ++r.kernel_mismatches;
  }
  if (grid) {
    r.scan = scan_zero_locus(lam, *grid);
    auto want = scan_zero_locus(expected, *grid);
    if (r.scan->hits.size() != want.hits.size()) {
      r.singular_mismatches += 1;
    } else {
      for (std::size_t i = 0; i < want.hits.size(); ++i)
        if ((r.scan->hits[i] - want.hits[i]).norm() > 1e-12) {
          ++r.singular_mismatches;
          break;
        }
    }
  }
  return r;
}

inline ZeroSectionReport zero_section_foliation_check(const GermForm& g, const FoliatedInput& in,
                                                      const std::vector<Vec>& samples,
                                                      std::optional<Grid> grid = std::nullopt) {
  return zero_section_foliation_check(g, in.beta, samples, grid);
}

inline ZeroSectionReport zero_section_foliation_check(const GermForm& g, const FlatDiskBundle& e,
                                                      const DiffForm& beta, const std::vector<Vec>& samples,
                                                      std::optional<Grid> grid = std::nullopt) {
  return zero_section_foliation_check(g, horizontal_extension(e, beta), samples, grid);
}

// ---------------------------------------------------------------------------
// Interpolation

struct InterpolationReport {
  bool refused = false;
  std::string reason;
  std::vector<double> t_values;
  std::vector<double> min_abs;     // per t
  int sign = 0;
  bool sign_consistent = true;

  bool passed() const {
    if (refused || min_abs.empty() || !sign_consistent) return false;
    return *std::min_element(min_abs.begin(), min_abs.end()) > kContactThreshold;
  }
};

/// alpha_t = (1 - t) alpha_0 + t alpha_1 on the zero section (and on any extra
/// germ-chart points). Refuses unless both zero-section foliations agree with
/// the same co-orientation.
inline InterpolationReport interpolation_contactness(const GermForm& g0, const GermForm& g1,
                                                     const std::vector<Vec>& zero_samples,
                                                     const std::vector<Vec>& extra_points = {}, int t_samples = 11) {
  if (g0.chart() != g1.chart() || g0.zero_chart() != g1.zero_chart())
    throw Error("interpolation: germs live on different charts");
  if (t_samples < 2) throw Error("interpolation: need at least two t samples");
  InterpolationReport r;
  DiffForm l0 = g0.restricted(), l1 = g1.restricted();
  auto refuse = [&](std::string why, const Vec& p) {
    r.refused = true;
    std::string at;
    for (Eigen::Index i = 0; i < p.size(); ++i) at += (i ? ", " : "") + std::to_string(p[i]);
    r.reason = std::move(why) + " at (" + at + ")";
    return r;
  };
  for (const auto& p : zero_samples) {
    Vec a = l0.covector(p), b = l1.covector(p);
    bool za = a.norm() <= kContactThreshold, zb = b.norm() <= kContactThreshold;
    if (za != zb) return refuse("zero-section foliations have different singular sets", p);
    if (za) {
      auto s0 = singular_normal_data(l0, p), s1 = singular_normal_data(l1, p);
      if (s0.sign != s1.sign) return refuse("co-orientation mismatch on the singular set", p);
      continue;
    }
    double c = b.dot(a) / a.squaredNorm();
    if ((b - c * a).norm() > 1e-9 * (1 + b.norm())) return refuse("zero-section foliations differ", p);
    if (c < 0) return refuse("co-orientation mismatch", p);
  }
  std::vector<Vec> pts;
  for (const auto& p : zero_samples) pts.push_back(g0.zero_section(p));
  pts.insert(pts.end(), extra_points.begin(), extra_points.end());
  for (int i = 0; i < t_samples; ++i) {
    double t = static_cast<double>(i) / (t_samples - 1);
    DiffForm at = Expr(1 - t) * g0.alpha + Expr(t) * g1.alpha;
    GermForm gt = make_germ("interpolated", at, g0.frame, g0.zero_section);
    auto scan = contactness_scan(gt, pts);
    r.t_values.push_back(t);
    r.min_abs.push_back(scan.min_abs);
    if (i == 0) r.sign = scan.sign;
    if (!scan.sign_consistent || scan.sign != r.sign) r.sign_consistent = false;
  }
  return r;
}

}  // namespace legfol

#endif  // LEGFOL_GERM_HPP_
