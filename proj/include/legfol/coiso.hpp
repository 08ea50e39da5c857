#ifndef LEGFOL_COISO_HPP_
#define LEGFOL_COISO_HPP_

// Graph submanifolds of standard contact R^{2n+1} (alpha = dz - sum y_i dx_i):
// restricted forms, singular loci, the foliation residual equations, the
// commuting isotropic frame V_1..V_{n-1}, characteristic foliations and the
// perturbation that clears a Legendrian singular component.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "legfol/forms.hpp"
#include "legfol/sampling.hpp"
#include "legfol/symplin.hpp"

namespace legfol {

/// Chart (x1..xn, y1..yn, z) with alpha = dz - sum y_i dx_i.
struct StandardContact {
  int n = 1;
  Chart chart;
  DiffForm alpha;

  int x(int i) const { return i - 1; }
  int y(int i) const { return n + i - 1; }
  int z() const { return 2 * n; }
};

inline StandardContact standard_contact(int n) {
  if (n < 1 || n > 4) throw Error("standard_contact: n must be in [1, 4]");
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  for (int i = 1; i <= n; ++i) names.push_back("y" + std::to_string(i));
  names.push_back("z");
  StandardContact sc;
  sc.n = n;
  sc.chart = Chart(names);
  sc.alpha = DiffForm(sc.chart, 1);
  sc.alpha.set(IndexMask{1} << sc.z(), Expr(1.0));
  for (int i = 1; i <= n; ++i) sc.alpha.set(IndexMask{1} << sc.x(i), -Expr::var(sc.y(i)));
  return sc;
}

/// Y = graph of the dependent coordinates over (x1..xn, free coordinates).
class GraphSubmanifold {
 public:
  /// Source chart for the given free coordinates (a subset of y1..yn, z).
  static Chart source_chart(int n, const std::vector<std::string>& free) {
    StandardContact sc = standard_contact(n);
    std::vector<std::string> names;
    for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
    for (int a = n; a <= 2 * n; ++a) {
      const std::string& nm = sc.chart.name(a);
      if (std::find(free.begin(), free.end(), nm) != free.end()) names.push_back(nm);
    }
    for (const auto& f : free) {
      auto idx = sc.chart.find(f);
      if (!idx || *idx < n) throw Error("graph: free coordinate '" + f + "' must be one of y1..yn, z");
    }
    if (names.size() != static_cast<std::size_t>(n) + free.size()) throw Error("graph: duplicate free coordinate");
    return Chart(names);
  }

  /// Free coordinates y_{2n-k+1}..y_n used by the local model of a singular point.
  static std::vector<std::string> standard_free(int n, int k) {
    if (k < n + 1 || k > 2 * n) throw Error("graph: dimension k must satisfy n+1 <= k <= 2n");
    std::vector<std::string> free;
    for (int i = 2 * n - k + 1; i <= n; ++i) free.push_back("y" + std::to_string(i));
    return free;
  }

  GraphSubmanifold(int n, std::vector<std::string> free, const std::map<std::string, Expr>& components)
      : ambient_(standard_contact(n)), free_(std::move(free)) {
    source_ = source_chart(n, free_);
    k_ = source_.dim();
    if (k_ < n + 1 || k_ > 2 * n) throw Error("graph: dimension k must satisfy n+1 <= k <= 2n");
    for (const auto& [name, e] : components) {
      if (source_.find(name)) throw Error("graph: '" + name + "' is a free coordinate, not a component");
      if (!ambient_.chart.find(name)) throw Error("graph: unknown component '" + name + "'");
      if (e.max_var() >= source_.dim()) throw Error("graph: component '" + name + "' uses a variable outside the source chart");
    }
    std::vector<Expr> emb;
    for (int a = 0; a < ambient_.chart.dim(); ++a) {
      const std::string& nm = ambient_.chart.name(a);
      if (auto s = source_.find(nm)) {
        emb.push_back(Expr::var(*s));
      } else {
        auto it = components.find(nm);
        Expr c = it == components.end() ? Expr(0.0) : it->second;
        dependent_.push_back(nm);
        components_[nm] = c;
        emb.push_back(c);
      }
    }
    embedding_ = SmoothMapExpr(source_, ambient_.chart, std::move(emb));
    lambda_ = pullback(embedding_, ambient_.alpha);
  }

  /// Graph in the standard layout for dimension k.
  static GraphSubmanifold standard(int n, int k, const std::map<std::string, Expr>& components) {
    return {n, standard_free(n, k), components};
  }

  int n() const { return ambient_.n; }
  int k() const { return k_; }
  const StandardContact& ambient() const { return ambient_; }
  const Chart& source() const { return source_; }
  const std::vector<std::string>& free() const { return free_; }
  const std::vector<std::string>& dependent() const { return dependent_; }
  const SmoothMapExpr& embedding() const { return embedding_; }
  const DiffForm& lambda() const { return lambda_; }

  Expr component(const std::string& name) const {
    auto it = components_.find(name);
    if (it == components_.end()) throw Error("graph: '" + name + "' is not a dependent coordinate");
    return it->second;
  }

  bool standard_layout() const { return free_ == standard_free(n(), k_); }

  /// f(0) = 0 and df(0) = 0 for every dependent component.
  bool normalized_at_origin(double tol = 1e-12) const {
    Vec o = Vec::Zero(k_);
    for (const auto& [name, c] : components_) {
      if (std::abs(c.eval(o)) > tol) return false;
      for (int j = 0; j < k_; ++j)
        if (std::abs(c.diff(j).eval(o)) > tol) return false;
    }
    return true;
  }

 private:
  StandardContact ambient_;
  std::vector<std::string> free_;
  std::vector<std::string> dependent_;
  std::map<std::string, Expr> components_;
  Chart source_;
  int k_ = 0;
  SmoothMapExpr embedding_;
  DiffForm lambda_;
};

inline DiffForm restricted_form(const GraphSubmanifold& y) { return y.lambda(); }

// ---------------------------------------------------------------------------
// Singular loci

struct ZeroCluster {
  std::size_t size = 0;
  Vec centroid;
  Vec variances;  // PCA eigenvalues, ascending
  int dimension = 0;
};

struct ZeroScan {
  Grid grid;
  double tol = 1e-6;
  std::size_t points_scanned = 0;
  std::vector<Vec> hits;
  std::vector<ZeroCluster> clusters;
};

/// Grid points where every coefficient of the 1-form satisfies
/// |c| <= tol * (1 + |grad of coefficients|), clustered at 3 grid steps and
/// given a PCA dimension with eigenvalue cutoff (2 step)^2.
inline ZeroScan scan_zero_locus(const DiffForm& form, const Grid& grid, double tol = 1e-6) {
  if (form.degree() != 1) throw Error("singular scan needs a 1-form");
  if (grid.box.dim() != form.chart().dim()) throw Error("singular scan: grid dimension does not match chart");
  if (!(tol > 0)) throw Error("singular scan: tolerance must be positive");
  if (!(grid.step > 0)) throw Error("singular scan: step must be positive");
  const std::size_t total = grid.size();
  if (total == 0) throw Error("singular scan: empty grid");
  const int k = form.chart().dim();

  std::vector<Expr> coeffs;
  std::vector<Expr> partials;
  for (const auto& [m, c] : form.coeffs()) {
    coeffs.push_back(c);
    for (int j = 0; j < k; ++j) partials.push_back(c.diff(j));
  }

  std::vector<char> hit(total, 0);
  parallel_for(total, [&](std::size_t i) {
    Vec p = form.chart().reduce(grid.point(grid.unflatten(i)));
    double g2 = 0.0;
    for (const auto& d : partials) {
      double v = d.eval(p);
      g2 += v * v;
    }
    double thresh = tol * (1.0 + std::sqrt(g2));
    bool all = true;
    for (const auto& c : coeffs)
      if (!(std::abs(c.eval(p)) <= thresh)) {
        all = false;
        break;
      }
    hit[i] = all ? 1 : 0;
  });

  ZeroScan out;
  out.grid = grid;
  out.tol = tol;
  out.points_scanned = total;
  auto counts = grid.counts();
  std::vector<std::vector<int>> idx;
  std::unordered_map<std::size_t, std::size_t> where;
  for (std::size_t i = 0; i < total; ++i) {
    if (!hit[i]) continue;
    where[i] = idx.size();
    idx.push_back(grid.unflatten(i));
    out.hits.push_back(grid.point(idx.back()));
  }

  // Union-find over hits closer than 3 grid steps.
  std::vector<std::size_t> parent(idx.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  std::vector<std::vector<int>> offsets;
  {
    std::vector<int> o(static_cast<std::size_t>(k), -3);
    while (true) {
      int r2 = 0;
      for (int v : o) r2 += v * v;
      if (r2 > 0 && r2 <= 9) offsets.push_back(o);
      int d = 0;
      while (d < k && ++o[static_cast<std::size_t>(d)] > 3) o[static_cast<std::size_t>(d++)] = -3;
      if (d == k) break;
    }
  }
  for (std::size_t h = 0; h < idx.size(); ++h) {
    for (const auto& o : offsets) {
      std::size_t lin = 0;
      bool inside = true;
      for (int d = 0; d < k; ++d) {
        int c = idx[h][static_cast<std::size_t>(d)] + o[static_cast<std::size_t>(d)];
        if (c < 0 || c >= counts[static_cast<std::size_t>(d)]) {
          inside = false;
          break;
        }
        lin = lin * static_cast<std::size_t>(counts[static_cast<std::size_t>(d)]) + static_cast<std::size_t>(c);
      }
      if (!inside) continue;
      auto it = where.find(lin);
      if (it == where.end()) continue;
      std::size_t a = find(h), b = find(it->second);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t h = 0; h < idx.size(); ++h) groups[find(h)].push_back(h);
  const double cutoff = 4.0 * grid.step * grid.step;
  for (const auto& [root, members] : groups) {
    ZeroCluster c;
    c.size = members.size();
    c.centroid = Vec::Zero(k);
    for (auto m : members) c.centroid += out.hits[m];
    c.centroid /= static_cast<double>(members.size());
    Mat cov = Mat::Zero(k, k);
    for (auto m : members) {
      Vec d = out.hits[m] - c.centroid;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(members.size());
    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    c.variances = eig.eigenvalues();
    c.dimension = 0;
    for (Eigen::Index i = 0; i < c.variances.size(); ++i)
      if (c.variances[i] > cutoff) ++c.dimension;
    out.clusters.push_back(std::move(c));
  }
  return out;
}

enum class SingularFlag { Generic, PerturbableLegendrian, Other };

inline std::string to_string(SingularFlag f) {
  switch (f) {
    case SingularFlag::Generic: return "generic";
    case SingularFlag::PerturbableLegendrian: return "perturbable-legendrian";
    case SingularFlag::Other: return "other";
  }
  return "other";
}

struct SingularScanResult {
  ZeroScan scan;
  std::vector<SingularFlag> flags;  // one per cluster
};

inline SingularScanResult singular_scan(const GraphSubmanifold& y, const Grid& grid, double tol = 1e-6) {
  SingularScanResult r;
  r.scan = scan_zero_locus(y.lambda(), grid, tol);
  for (const auto& c : r.scan.clusters) {
    if (c.dimension == 2 * y.n() - y.k())
      r.flags.push_back(SingularFlag::Generic);
    else if (c.dimension == y.n() && y.k() == y.n() + 1)
      r.flags.push_back(SingularFlag::PerturbableLegendrian);
    else
      r.flags.push_back(SingularFlag::Other);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Foliation residual equations for k = n+1 in the standard layout.
//
// Source coordinates (x1..xn, yn); dependent y1..y_{n-1}, z. Each equation is
// alpha ^ d alpha evaluated on a triple of the tangent frame
// T_j = d/dx_j + sum_i dy_i/dx_j d/dy_i + dz/dx_j d/dz (and the yn analogue).

struct ResidualEquation {
  enum Family { TripleX, PairXn, PairYn, Single, Lambda } family;
  std::array<int, 3> indices{};  // 1-based a, b, c (unused entries 0)
  Expr expr;
  bool redundant = false;  // the three-x family follows from the others
};

inline std::string to_string(ResidualEquation::Family f) {
  switch (f) {
    case ResidualEquation::TripleX: return "xa-xb-xc";
    case ResidualEquation::PairXn: return "xa-xb-xn";
    case ResidualEquation::PairYn: return "xa-xb-yn";
    case ResidualEquation::Single: return "xa-xn-yn";
    case ResidualEquation::Lambda: return "Lambda_ab";
  }
  return "";
}

class CoisotropyEquations {
 public:
  explicit CoisotropyEquations(const GraphSubmanifold& y) {
    const int n = y.n();
    if (y.k() != n + 1 || !y.standard_layout())
      throw Error("coisotropy residuals need k = n+1 in the standard layout; use pointwise_coisotropy instead");
    const int xn = n - 1, yn = n;
    auto ya = [&](int a) { return y.component("y" + std::to_string(a)); };
    Expr z = y.component("z");
    Expr yn_coord = Expr::var(yn);
    auto x = [](int j) { return j - 1; };
    // A_a = dz/dx_a - y_a, A_n = dz/dx_n - y_n.
    auto A = [&](int a) { return a == n ? z.diff(xn) - yn_coord : z.diff(x(a)) - ya(a); };
    auto C = [&](int a, int b) { return ya(a).diff(x(b)) - ya(b).diff(x(a)); };
    for (int a = 1; a <= n - 1; ++a)
      for (int b = a + 1; b <= n - 1; ++b)
        for (int c = b + 1; c <= n - 1; ++c)
          eqs_.push_back({ResidualEquation::TripleX, {a, b, c}, A(a) * C(b, c) - A(b) * C(a, c) + A(c) * C(a, b), true});
    for (int a = 1; a <= n - 1; ++a)
      for (int b = a + 1; b <= n - 1; ++b)
        eqs_.push_back({ResidualEquation::PairXn, {a, b, 0},
                        A(a) * ya(b).diff(xn) - A(b) * ya(a).diff(xn) + A(n) * C(a, b), false});
    for (int a = 1; a <= n - 1; ++a)
      for (int b = a + 1; b <= n - 1; ++b)
        eqs_.push_back({ResidualEquation::PairYn, {a, b, 0},
                        A(a) * ya(b).diff(yn) - A(b) * ya(a).diff(yn) + z.diff(yn) * C(a, b), false});
    for (int a = 1; a <= n - 1; ++a)
      eqs_.push_back({ResidualEquation::Single, {a, 0, 0},
                      z.diff(x(a)) - A(n) * ya(a).diff(yn) + z.diff(yn) * ya(a).diff(xn) - ya(a), false});
    for (int a = 1; a <= n - 1; ++a)
      for (int b = a + 1; b <= n - 1; ++b)
        lambda_.push_back({ResidualEquation::Lambda, {a, b, 0},
                           ya(a).diff(yn) * ya(b).diff(xn) - ya(b).diff(yn) * ya(a).diff(xn) + C(a, b), false});
  }

  const std::vector<ResidualEquation>& equations() const { return eqs_; }
  const std::vector<ResidualEquation>& lambda_identities() const { return lambda_; }

 private:
  std::vector<ResidualEquation> eqs_;
  std::vector<ResidualEquation> lambda_;
};

struct ResidualValue {
  ResidualEquation::Family family;
  std::array<int, 3> indices;
  double value;
  bool redundant;
};

struct CoisotropyResiduals {
  std::vector<ResidualValue> equations;
  std::vector<ResidualValue> lambda;

  /// Largest |value| over the non-redundant equations.
  double max_residual() const {
    double m = 0.0;
    for (const auto& e : equations)
      if (!e.redundant) m = std::max(m, std::abs(e.value));
    return m;
  }
  double max_lambda() const {
    double m = 0.0;
    for (const auto& e : lambda) m = std::max(m, std::abs(e.value));
    return m;
  }
  std::optional<double> value(ResidualEquation::Family f, std::array<int, 3> idx) const {
    for (const auto& e : f == ResidualEquation::Lambda ? lambda : equations)
      if (e.family == f && e.indices == idx) return e.value;
    return std::nullopt;
  }
};

inline CoisotropyResiduals evaluate_residuals(const CoisotropyEquations& eqs, const Vec& p) {
  CoisotropyResiduals r;
  for (const auto& e : eqs.equations()) r.equations.push_back({e.family, e.indices, e.expr.eval(p), e.redundant});
  for (const auto& e : eqs.lambda_identities()) r.lambda.push_back({e.family, e.indices, e.expr.eval(p), false});
  return r;
}

inline CoisotropyResiduals coisotropy_residuals(const GraphSubmanifold& y, const Vec& p) {
  return evaluate_residuals(CoisotropyEquations(y), p);
}

// ---------------------------------------------------------------------------
// Pointwise linear algebra

struct PointCoisotropy {
  bool singular = false;  // T_pY lies in xi_p
  int y_xi_dim = 0;
  SubspaceClass cls;

  bool coisotropic() const { return singular || cls.coisotropic; }
};

/// Classifies Y_xi(p) = T_pY cap xi_p inside (xi_p, d alpha).
inline PointCoisotropy pointwise_coisotropy(const GraphSubmanifold& y, const Vec& p, double sing_tol = 1e-9) {
  PointCoisotropy out;
  Vec lam = y.lambda().covector(p);
  if (lam.norm() <= sing_tol) {
    out.singular = true;
    out.y_xi_dim = y.k();
    return out;
  }
  Vec q = y.embedding()(p);
  ContactHyperplane h = contact_hyperplane(y.ambient().alpha, q);
  LinSubspace tangent = LinSubspace::span(y.ambient().chart.dim(), y.embedding().jacobian(p));
  LinSubspace yxi = intersection(tangent, h.xi);
  out.y_xi_dim = yxi.dim();
  Mat coords = h.xi.basis().transpose() * yxi.basis();
  out.cls = classify_subspace(LinSubspace(h.xi.dim(), coords), h.omega);
  return out;
}

/// Largest coefficient of (alpha ^ d alpha) pulled back to Y over the samples.
inline double foliation_residual(const GraphSubmanifold& y, const std::vector<Vec>& samples) {
  const auto& a = y.ambient();
  if (y.k() < 3) return 0.0;
  DiffForm ada = pullback(y.embedding(), wedge(a.alpha, exterior_d(a.alpha)));
  double m = 0.0;
  for (const auto& p : samples) m = std::max(m, ada.max_abs_coeff(p));
  return m;
}

// ---------------------------------------------------------------------------
// The frame V_k

struct IsotropicFrame {
  std::vector<VectorFieldExpr> source;          // V~_k on the source chart
  std::vector<std::vector<Expr>> ambient;        // V_k = f_* V~_k, ambient components on the source
};

/// V~_k = d/dx_k - (dy_k/dyn) d/dxn + (dy_k/dxn) d/dyn, k = 1..n-1.
inline IsotropicFrame build_vk(const GraphSubmanifold& y) {
  const int n = y.n();
  if (y.k() != n + 1 || !y.standard_layout()) throw Error("build_vk needs k = n+1 in the standard layout");
  IsotropicFrame f;
  const int xn = n - 1, yn = n;
  for (int k = 1; k <= n - 1; ++k) {
    Expr yk = y.component("y" + std::to_string(k));
    std::vector<Expr> c(static_cast<std::size_t>(y.k()), Expr(0.0));
    c[static_cast<std::size_t>(k - 1)] = Expr(1.0);
    c[static_cast<std::size_t>(xn)] = -yk.diff(yn);
    c[static_cast<std::size_t>(yn)] = yk.diff(xn);
    VectorFieldExpr v(y.source(), std::move(c));
    f.ambient.push_back(pushforward_field(y.embedding(), v));
    f.source.push_back(std::move(v));
  }
  return f;
}

struct ClaimReport {
  bool refused = false;
  std::string reason;
  std::vector<std::pair<Vec, double>> diagnostics;  // offending points and residuals
  std::size_t samples = 0;
  double i_v_alpha = 0.0;
  double i_v_dlambda = 0.0;
  double bracket = 0.0;
  double lie_lambda = 0.0;
  double lambda_identity = 0.0;

  double max_residual() const {
    return std::max({i_v_alpha, i_v_dlambda, bracket, lie_lambda, lambda_identity});
  }
};

/// Checks i_V alpha = 0, i_V d lambda = 0, [V_k, V_l] = 0, L_V lambda = 0 and
/// Lambda_ab = 0 on the samples after confirming the residual equations hold.
inline ClaimReport verify_claim(const GraphSubmanifold& y, const std::vector<Vec>& samples,
                                double coiso_tol = 1e-8) {
  ClaimReport r;
  r.samples = samples.size();
  CoisotropyEquations eqs(y);
  for (const auto& p : samples) {
    double res = evaluate_residuals(eqs, p).max_residual();
    if (!(res <= coiso_tol)) r.diagnostics.emplace_back(p, res);
  }
  if (!r.diagnostics.empty()) {
    r.refused = true;
    std::ostringstream os;
    os << "not coisotropic at p = (";
    const Vec& p = r.diagnostics.front().first;
    for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << "): residual " << r.diagnostics.front().second << " at " << r.diagnostics.size() << " of "
       << samples.size() << " samples";
    r.reason = os.str();
    return r;
  }
  IsotropicFrame frame = build_vk(y);
  const auto& amb = y.ambient();
  DiffForm dl = exterior_d(y.lambda());
  std::vector<DiffForm> i_dl, lie;
  for (const auto& v : frame.source) {
    i_dl.push_back(interior(v, dl));
    lie.push_back(lie_derivative(v, y.lambda()));
  }
  std::vector<VectorFieldExpr> brackets;
  for (std::size_t a = 0; a < frame.source.size(); ++a)
    for (std::size_t b = a + 1; b < frame.source.size(); ++b)
      brackets.push_back(lie_bracket(frame.source[a], frame.source[b]));

  for (const auto& p : samples) {
    Vec q = y.embedding()(p);
    Vec alpha_q = amb.alpha.covector(q);
    for (std::size_t a = 0; a < frame.source.size(); ++a) {
      Vec v(amb.chart.dim());
      for (int i = 0; i < v.size(); ++i) v[i] = frame.ambient[a][static_cast<std::size_t>(i)].eval(p);
      r.i_v_alpha = std::max(r.i_v_alpha, std::abs(alpha_q.dot(v)));
      r.i_v_dlambda = std::max(r.i_v_dlambda, i_dl[a].max_abs_coeff(p));
      r.lie_lambda = std::max(r.lie_lambda, lie[a].max_abs_coeff(p));
    }
    for (const auto& br : brackets) {
      Vec w = pushforward(y.embedding(), br, p);
      r.bracket = std::max(r.bracket, w.cwiseAbs().maxCoeff());
    }
    r.lambda_identity = std::max(r.lambda_identity, evaluate_residuals(eqs, p).max_lambda());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Characteristic foliation in arbitrary codimension

struct CharFoliationReport {
  DiffForm form;         // (alpha ^ (d alpha)^{k-n-1}) pulled back to Y
  DiffForm closure;      // (d alpha)^{k-n} pulled back to Y
  int expected_kernel_dim = 0;
  int min_kernel_dim = 0;
  int max_kernel_dim = 0;
  std::size_t nonsingular_samples = 0;
  std::size_t singular_samples = 0;
  double on_distribution = 0.0;   // (d alpha)^{k-n} on tuples from T_pY cap xi_p
  double involutivity = 0.0;      // |i_v i_u (d alpha)^{k-n}| for u, v in the kernel
  double raw_restriction = 0.0;   // largest coefficient of the pulled-back closure (informational)

  double integrability_residual() const { return std::max(on_distribution, involutivity); }
};

namespace detail {

inline std::vector<std::vector<int>> subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k > n || k < 0) return out;
  std::vector<int> s(static_cast<std::size_t>(k));
  std::iota(s.begin(), s.end(), 0);
  while (true) {
    out.push_back(s);
    int i = k - 1;
    while (i >= 0 && s[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++s[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) s[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

/// Kernel {v : i_v w = 0} of a form with numeric coefficients on R^dim.
inline Mat form_kernel(const std::map<IndexMask, double>& w, int dim) {
  std::map<IndexMask, int> rows;
  std::vector<std::map<IndexMask, double>> cols;
  for (int j = 0; j < dim; ++j) {
    Vec e = Vec::Unit(dim, j);
    cols.push_back(interior_values(e, w));
    for (const auto& [m, c] : cols.back()) rows.emplace(m, 0);
  }
  int r = 0;
  for (auto& [m, idx] : rows) idx = r++;
  Mat a = Mat::Zero(std::max(r, 1), dim);
  for (int j = 0; j < dim; ++j)
    for (const auto& [m, c] : cols[static_cast<std::size_t>(j)]) a(rows[m], j) = c;
  return null_space(a);
}

inline double evaluate_values(const std::map<IndexMask, double>& w, const Mat& vectors) {
  const int k = static_cast<int>(vectors.cols());
  double total = 0.0;
  Mat sub(k, k);
  for (const auto& [m, c] : w) {
    auto idx = mask_indices(m);
    for (int r = 0; r < k; ++r) sub.row(r) = vectors.row(idx[static_cast<std::size_t>(r)]);
    total += c * sub.determinant();
  }
  return total;
}

}  // namespace detail

inline CharFoliationReport char_foliation_form(const GraphSubmanifold& y, const std::vector<Vec>& samples,
                                               double sing_tol = 1e-9) {
  const int n = y.n(), k = y.k();
  const auto& a = y.ambient();
  DiffForm da = exterior_d(a.alpha);
  CharFoliationReport r;
  r.form = pullback(y.embedding(), wedge(a.alpha, wedge_power(da, k - n - 1)));
  r.closure = pullback(y.embedding(), wedge_power(da, k - n));
  r.expected_kernel_dim = 2 * n - k + 1;
  r.min_kernel_dim = k;
  r.max_kernel_dim = 0;
  const int deg = r.closure.degree();
  for (const auto& p : samples) {
    r.raw_restriction = std::max(r.raw_restriction, r.closure.max_abs_coeff(p));
    Vec lam = y.lambda().covector(p);
    auto w = r.form.values(p);
    double wmax = 0.0;
    for (const auto& [m, c] : w) wmax = std::max(wmax, std::abs(c));
    if (lam.norm() <= sing_tol || wmax <= sing_tol) {
      ++r.singular_samples;
      continue;
    }
    ++r.nonsingular_samples;
    Mat ker = detail::form_kernel(w, k);
    int kd = static_cast<int>(ker.cols());
    r.min_kernel_dim = std::min(r.min_kernel_dim, kd);
    r.max_kernel_dim = std::max(r.max_kernel_dim, kd);

    auto theta = r.closure.values(p);
    Mat yxi = null_space(Mat(lam.transpose()));
    for (const auto& s : detail::subsets(static_cast<int>(yxi.cols()), deg)) {
      Mat vecs(k, deg);
      for (int j = 0; j < deg; ++j) vecs.col(j) = yxi.col(s[static_cast<std::size_t>(j)]);
      r.on_distribution = std::max(r.on_distribution, std::abs(detail::evaluate_values(theta, vecs)));
    }
    for (int i = 0; i < kd; ++i)
      for (int j = i + 1; j < kd; ++j) {
        auto c = interior_values(ker.col(j), interior_values(ker.col(i), theta));
        for (const auto& [m, v] : c) r.involutivity = std::max(r.involutivity, std::abs(v));
      }
  }
  if (r.nonsingular_samples == 0) r.min_kernel_dim = 0;
  return r;
}

// ---------------------------------------------------------------------------
// Clearing a Legendrian singular component

struct PerturbResult {
  GraphSubmanifold graph;
  double sup_norm = 0.0;
  double slope_at_origin = 0.0;
  bool unchanged = false;
};

/// Replaces z = 0 by z = z(y1) on the normal form {z = y2 = ... = yn = 0}
/// with coordinates (x1..xn, y1). The result has lambda = z'(y1) dy1 - y1 dx1
/// and is nonsingular along y1 = 0 whenever z'(0) != 0. A bump that is
/// identically zero returns the input.
inline PerturbResult perturb_legendrian(const GraphSubmanifold& y, const Expr& z_of_y1, double delta,
                                        const std::vector<Vec>& samples) {
  const int n = y.n();
  if (y.free() != std::vector<std::string>{"y1"}) throw Error("perturb_legendrian: graph must use coordinates (x1..xn, y1)");
  for (const auto& d : y.dependent())
    if (!y.component(d).is_zero()) throw Error("perturb_legendrian: graph is not in the normal form lambda = -y1 dx1");
  const int y1 = n;
  for (int j = 0; j < y.k(); ++j)
    if (j != y1 && z_of_y1.depends_on(j)) throw Error("perturb_legendrian: perturbation may depend on y1 only");
  PerturbResult r{y, 0.0, 0.0, false};
  if (z_of_y1.is_zero()) {
    r.unchanged = true;
    return r;
  }
  Vec origin = Vec::Zero(y.k());
  r.slope_at_origin = z_of_y1.diff(y1).eval(origin);
  if (std::abs(r.slope_at_origin) <= 1e-12) throw Error("perturbation does not clear singularity at 0");
  for (const auto& p : samples) r.sup_norm = std::max(r.sup_norm, std::abs(z_of_y1.eval(p)));
  if (r.sup_norm > delta) {
    throw Error("perturbation sup-norm " + std::to_string(r.sup_norm) + " exceeds the bound " + std::to_string(delta));
  }
  std::map<std::string, Expr> comps;
  for (const auto& d : y.dependent()) comps[d] = Expr(0.0);
  comps["z"] = z_of_y1;
  r.graph = GraphSubmanifold(n, y.free(), comps);
  return r;
}

// ---------------------------------------------------------------------------
// Normal data at a singular point

struct SingularNormalData {
  bool singular = false;
  int rank = 0;            // rank of d lambda_p on T_pY
  int kernel_dim = 0;
  int zero_set_codim = 0;  // rank of the Jacobian of lambda's coefficients
  int sign = 0;            // orientation of d lambda on the normal plane
  bool generic = false;    // rank 2 and zero set of codimension 2
};

/// Co-orientation defaults to the last two coordinate directions.
inline SingularNormalData singular_normal_data(const DiffForm& lambda, const Vec& p,
                                               std::optional<std::pair<Vec, Vec>> coorientation = std::nullopt,
                                               double tol = 1e-9) {
  SingularNormalData d;
  const int k = lambda.chart().dim();
  if (lambda.covector(p).norm() > tol) return d;
  d.singular = true;
  Mat dl = exterior_d(lambda).bilinear(p);
  Mat ker = null_space(dl);
  d.kernel_dim = static_cast<int>(ker.cols());
  d.rank = k - d.kernel_dim;
  Mat jac = Mat::Zero(k, k);
  for (const auto& [m, c] : lambda.coeffs()) {
    int row = std::countr_zero(m);
    for (int j = 0; j < k; ++j) jac(row, j) = c.diff(j).eval(lambda.chart().reduce(p));
  }
  d.zero_set_codim = static_cast<int>(column_space(jac).cols());
  d.generic = d.rank == 2 && d.zero_set_codim == 2;
  Vec u = coorientation ? coorientation->first : Vec::Unit(k, k - 2);
  Vec v = coorientation ? coorientation->second : Vec::Unit(k, k - 1);
  Mat proj = Mat::Identity(k, k) - ker * ker.transpose();
  double val = (proj * u).dot(dl * (proj * v));
  d.sign = val > 1e-12 ? 1 : (val < -1e-12 ? -1 : 0);
  return d;
}

inline SingularNormalData singular_normal_data(const GraphSubmanifold& y, const Vec& p,
                                               std::optional<std::pair<Vec, Vec>> coorientation = std::nullopt) {
  return singular_normal_data(y.lambda(), p, std::move(coorientation));
}

}  // namespace legfol

#endif  // LEGFOL_COISO_HPP_
