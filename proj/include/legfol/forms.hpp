#ifndef LEGFOL_FORMS_HPP_
#define LEGFOL_FORMS_HPP_

// Differential forms on a chart with expression coefficients.
//
// A k-form is stored sparsely as a map from strictly increasing multi-indices
// (encoded as bit masks) to coefficients. Evaluation follows the determinant
// convention (dx_I)(v_1..v_k) = det[(v_j)_{i_l}], without a 1/k! factor, so
// the standard contact form satisfies alpha ^ (d alpha)^n = n! on the frame
// (d/dz, d/dx1, d/dy1, ..., d/dxn, d/dyn).

#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "legfol/fields.hpp"

namespace legfol {

using IndexMask = std::uint32_t;

inline constexpr int kMaxChartDim = 31;

inline std::vector<int> mask_indices(IndexMask m) {
  std::vector<int> out;
  while (m) {
    int i = std::countr_zero(m);
    out.push_back(i);
    m &= m - 1;
  }
  return out;
}

inline IndexMask indices_mask(std::span<const int> idx) {
  IndexMask m = 0;
  for (int i : idx) {
    if (i < 0 || i >= kMaxChartDim) throw Error("multi-index out of range");
    if (m & (IndexMask{1} << i)) return 0;
    m |= IndexMask{1} << i;
  }
  return m;
}

/// Sign of the permutation sorting the concatenation (I, J) of two disjoint
/// increasing multi-indices.
inline int shuffle_sign(IndexMask a, IndexMask b) {
  int swaps = 0;
  IndexMask rest = b;
  while (rest) {
    int j = std::countr_zero(rest);
    rest &= rest - 1;
    IndexMask above = (j + 1 >= 32) ? 0 : (a & ~((IndexMask{1} << (j + 1)) - 1));
    swaps += std::popcount(above);
  }
  return (swaps % 2) ? -1 : 1;
}

class DiffForm {
 public:
  using Coeffs = std::map<IndexMask, Expr>;

  DiffForm() = default;
  DiffForm(Chart chart, int degree) : chart_(std::move(chart)), degree_(degree) {
    if (chart_.dim() > kMaxChartDim) throw Error("chart too large for form storage");
    if (degree_ < 0) throw Error("negative form degree");
  }

  static DiffForm zero(const Chart& chart, int degree) { return DiffForm(chart, degree); }

  static DiffForm scalar(const Chart& chart, const Expr& f) {
    DiffForm w(chart, 0);
    w.set(0, f);
    return w;
  }

  /// f dx_{i_1} ^ ... ^ dx_{i_k} with indices in any order (sign applied).
  static DiffForm monomial(const Chart& chart, std::vector<int> idx, const Expr& f = Expr(1.0)) {
    DiffForm w(chart, static_cast<int>(idx.size()));
    for (int i : idx)
      if (i < 0 || i >= chart.dim()) throw Error("monomial index outside chart");
    IndexMask m = indices_mask(idx);
    if (m == 0 && !idx.empty()) return w;
    int sign = 1;
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b)
        if (idx[a] > idx[b]) sign = -sign;
    w.set(m, sign > 0 ? f : -f);
    return w;
  }

  static DiffForm differential(const Chart& chart, int i) { return monomial(chart, {i}); }

  const Chart& chart() const { return chart_; }
  int degree() const { return degree_; }
  const Coeffs& coeffs() const { return coeffs_; }

  Expr coeff(IndexMask m) const {
    auto it = coeffs_.find(m);
    return it == coeffs_.end() ? Expr(0.0) : it->second;
  }

  /// For 0-forms: the function itself.
  Expr function() const {
    if (degree_ != 0) throw Error("not a 0-form");
    return coeff(0);
  }

  void set(IndexMask m, const Expr& f) {
    if (std::popcount(m) != degree_) throw Error("multi-index length differs from degree");
    if (f.max_var() >= chart_.dim()) throw Error("form coefficient references a variable outside its chart");
    if (f.is_zero())
      coeffs_.erase(m);
    else
      coeffs_[m] = f;
  }

  void add_to(IndexMask m, const Expr& f) { set(m, coeff(m) + f); }

  bool is_zero() const { return coeffs_.empty(); }

  /// Coefficient values at a point, keyed by multi-index.
  std::map<IndexMask, double> values(const Vec& p) const {
    Vec q = chart_.reduce(p);
    std::map<IndexMask, double> out;
    for (const auto& [m, c] : coeffs_) out[m] = c.eval(q);
    return out;
  }

  double max_abs_coeff(const Vec& p) const {
    Vec q = chart_.reduce(p);
    double mx = 0.0;
    for (const auto& [m, c] : coeffs_) mx = std::max(mx, std::abs(c.eval(q)));
    return mx;
  }

  /// Dense coefficient vector of a 1-form at a point.
  Vec covector(const Vec& p) const {
    if (degree_ != 1) throw Error("covector: not a 1-form");
    Vec q = chart_.reduce(p);
    Vec out = Vec::Zero(chart_.dim());
    for (const auto& [m, c] : coeffs_) out[std::countr_zero(m)] = c.eval(q);
    return out;
  }

  /// Dense antisymmetric matrix of a 2-form at a point: M(i,j) = w(e_i, e_j).
  Mat bilinear(const Vec& p) const {
    if (degree_ != 2) throw Error("bilinear: not a 2-form");
    Vec q = chart_.reduce(p);
    Mat out = Mat::Zero(chart_.dim(), chart_.dim());
    for (const auto& [m, c] : coeffs_) {
      auto idx = mask_indices(m);
      double v = c.eval(q);
      out(idx[0], idx[1]) = v;
      out(idx[1], idx[0]) = -v;
    }
    return out;
  }

  friend DiffForm operator+(const DiffForm& a, const DiffForm& b) {
    check_compatible(a, b);
    DiffForm out = a;
    for (const auto& [m, c] : b.coeffs_) out.add_to(m, c);
    return out;
  }
  friend DiffForm operator-(const DiffForm& a, const DiffForm& b) {
    check_compatible(a, b);
    DiffForm out = a;
    for (const auto& [m, c] : b.coeffs_) out.set(m, out.coeff(m) - c);
    return out;
  }
  DiffForm operator-() const {
    DiffForm out(chart_, degree_);
    for (const auto& [m, c] : coeffs_) out.set(m, -c);
    return out;
  }
  friend DiffForm operator*(const Expr& f, const DiffForm& w) {
    DiffForm out(w.chart_, w.degree_);
    for (const auto& [m, c] : w.coeffs_) out.set(m, f * c);
    return out;
  }
  DiffForm& operator+=(const DiffForm& o) { return *this = *this + o; }
  DiffForm& operator-=(const DiffForm& o) { return *this = *this - o; }

  /// Human-readable sum of coefficient * dx_I terms.
  std::string str() const {
    if (coeffs_.empty()) return "0";
    std::string out;
    bool first = true;
    for (const auto& [m, c] : coeffs_) {
      if (!first) out += " + ";
      first = false;
      std::string basis;
      for (int i : mask_indices(m)) {
        if (!basis.empty()) basis += "^";
        basis += "d" + chart_.name(i);
      }
      if (basis.empty()) {
        out += c.str(chart_);
      } else {
        out += "(" + c.str(chart_) + ")*" + basis;
      }
    }
    return out;
  }

 private:
  static void check_compatible(const DiffForm& a, const DiffForm& b) {
    if (a.chart_ != b.chart_) throw Error("forms live on different charts");
    if (a.degree_ != b.degree_) throw Error("cannot add forms of different degree");
  }

  Chart chart_;
  int degree_ = 0;
  Coeffs coeffs_;
};

inline DiffForm wedge(const DiffForm& a, const DiffForm& b) {
  if (a.chart() != b.chart()) throw Error("wedge: chart mismatch");
  int deg = a.degree() + b.degree();
  if (deg > a.chart().dim()) throw Error("wedge: degree exceeds chart dimension");
  DiffForm out(a.chart(), deg);
  for (const auto& [ma, ca] : a.coeffs()) {
    for (const auto& [mb, cb] : b.coeffs()) {
      if (ma & mb) continue;
      Expr prod = ca * cb;
      out.add_to(ma | mb, shuffle_sign(ma, mb) > 0 ? prod : -prod);
    }
  }
  return out;
}

/// w ^ w ^ ... (k factors); k = 0 gives the constant 0-form 1.
inline DiffForm wedge_power(const DiffForm& w, int k) {
  DiffForm out = DiffForm::scalar(w.chart(), Expr(1.0));
  for (int i = 0; i < k; ++i) out = wedge(out, w);
  return out;
}

/// d(f dx_I) = sum_j (df/dx_j) dx_j ^ dx_I.
inline DiffForm exterior_d(const DiffForm& w) {
  const Chart& chart = w.chart();
  if (w.degree() >= chart.dim()) throw Error("exterior_d: form already has top degree");
  DiffForm out(chart, w.degree() + 1);
  for (const auto& [m, c] : w.coeffs()) {
    for (int j = 0; j < chart.dim(); ++j) {
      IndexMask bit = IndexMask{1} << j;
      if (m & bit) continue;
      Expr dc = c.diff(j);
      if (dc.is_zero()) continue;
      int below = std::popcount(m & (bit - 1));
      out.add_to(m | bit, (below % 2) ? -dc : dc);
    }
  }
  return out;
}

/// (i_V w)(w_2..w_k) = w(V, w_2..w_k).
inline DiffForm interior(const VectorFieldExpr& v, const DiffForm& w) {
  if (v.chart() != w.chart()) throw Error("interior: chart mismatch");
  if (w.degree() == 0) throw Error("interior: degree must be at least 1");
  DiffForm out(w.chart(), w.degree() - 1);
  for (const auto& [m, c] : w.coeffs()) {
    int pos = 0;
    for (int i : mask_indices(m)) {
      if (!v[i].is_zero()) {
        Expr term = v[i] * c;
        out.add_to(m & ~(IndexMask{1} << i), (pos % 2) ? -term : term);
      }
      ++pos;
    }
  }
  return out;
}

/// Numeric interior product at a point, returned as a form with constant coefficients.
inline std::map<IndexMask, double> interior_values(const Vec& v, const std::map<IndexMask, double>& w) {
  std::map<IndexMask, double> out;
  for (const auto& [m, c] : w) {
    int pos = 0;
    for (int i : mask_indices(m)) {
      double term = v[i] * c;
      if (term != 0.0) out[m & ~(IndexMask{1} << i)] += (pos % 2) ? -term : term;
      ++pos;
    }
  }
  return out;
}

/// Cartan's formula L_V w = d(i_V w) + i_V(dw).
inline DiffForm lie_derivative(const VectorFieldExpr& v, const DiffForm& w) {
  if (v.chart() != w.chart()) throw Error("lie_derivative: chart mismatch");
  const int dim = w.chart().dim();
  if (w.degree() == 0) return DiffForm::scalar(w.chart(), v.apply(w.function()));
  DiffForm out = exterior_d(interior(v, w));
  if (w.degree() < dim) out += interior(v, exterior_d(w));
  return out;
}

/// (phi^* w)_p(v_1..v_k) = w_{phi(p)}(Dphi v_1, ..., Dphi v_k).
inline DiffForm pullback(const SmoothMapExpr& phi, const DiffForm& w) {
  if (phi.target() != w.chart()) throw Error("pullback: form does not live on the map's target");
  const Chart& src = phi.source();
  if (w.degree() > src.dim()) return DiffForm(src, w.degree());
  std::vector<DiffForm> dphi;
  for (int i = 0; i < phi.target().dim(); ++i) {
    DiffForm d(src, 1);
    for (int j = 0; j < src.dim(); ++j) d.set(IndexMask{1} << j, phi.partial(i, j));
    dphi.push_back(std::move(d));
  }
  DiffForm out(src, w.degree());
  for (const auto& [m, c] : w.coeffs()) {
    DiffForm term = DiffForm::scalar(src, c.substitute(phi.components()));
    for (int i : mask_indices(m)) {
      term = wedge(term, dphi[static_cast<std::size_t>(i)]);
      if (term.is_zero()) break;
    }
    if (!term.is_zero()) out += term;
  }
  return out;
}

/// Sum over I of coeff_I(p) * det of the I-rows of [v_1 .. v_k].
inline double evaluate(const DiffForm& w, const Vec& p, std::span<const Vec> vectors) {
  const int k = w.degree();
  if (static_cast<int>(vectors.size()) != k) throw Error("evaluate: expected " + std::to_string(k) + " vectors");
  if (k == 0) return w.function().eval(w.chart().reduce(p));
  Mat v(w.chart().dim(), k);
  for (int j = 0; j < k; ++j) {
    if (vectors[static_cast<std::size_t>(j)].size() != w.chart().dim())
      throw Error("evaluate: vector dimension does not match chart");
    v.col(j) = vectors[static_cast<std::size_t>(j)];
  }
  Vec q = w.chart().reduce(p);
  double total = 0.0;
  Mat sub(k, k);
  for (const auto& [m, c] : w.coeffs()) {
    auto idx = mask_indices(m);
    for (int r = 0; r < k; ++r) sub.row(r) = v.row(idx[static_cast<std::size_t>(r)]);
    double det = sub.determinant();
    if (det != 0.0) total += c.eval(q) * det;
  }
  return total;
}

inline double evaluate(const DiffForm& w, const Vec& p, std::initializer_list<Vec> vectors) {
  std::vector<Vec> v(vectors);
  return evaluate(w, p, std::span<const Vec>(v));
}

}  // namespace legfol

#endif  // LEGFOL_FORMS_HPP_
