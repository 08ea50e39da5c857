#ifndef LEGFOL_SYMPLIN_HPP_
#define LEGFOL_SYMPLIN_HPP_

// Pointwise symplectic and contact linear algebra.

#include <string>

#include <Eigen/SVD>

#include "legfol/forms.hpp"

namespace legfol {

struct LinearTolerance {
  double rank = 1e-9;
};

inline LinearTolerance& linear_tolerance() {
  static LinearTolerance tol;
  return tol;
}

/// Numerical rank of the column set after normalizing each column.
inline int numerical_rank(const Mat& cols, double tol = linear_tolerance().rank) {
  if (cols.cols() == 0 || cols.rows() == 0) return 0;
  Mat m = cols;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    double nrm = m.col(j).norm();
    if (nrm > 0) m.col(j) /= nrm;
  }
  Eigen::JacobiSVD<Mat> svd(m);
  int r = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > tol) ++r;
  return r;
}

/// Orthonormal basis of {x : A x = 0}, as columns. The matrix is row-scaled so
/// the tolerance is relative to its largest entry.
inline Mat null_space(const Mat& a, double tol = linear_tolerance().rank) {
  const Eigen::Index n = a.cols();
  if (a.rows() == 0) return Mat::Identity(n, n);
  double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Mat::Identity(n, n);
  Mat s = a / scale;
  Eigen::JacobiSVD<Mat> svd(s, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

/// Orthonormal basis of the column space.
inline Mat column_space(const Mat& a, double tol = linear_tolerance().rank) {
  if (a.cols() == 0) return Mat(a.rows(), 0);
  double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Mat(a.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(a / scale, Eigen::ComputeFullU);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > tol) ++rank;
  return svd.matrixU().leftCols(rank);
}

class LinSubspace {
 public:
  LinSubspace() = default;
  /// Basis vectors as columns; they must be linearly independent.
  LinSubspace(int ambient_dim, Mat basis) : ambient_(ambient_dim), basis_(std::move(basis)) {
    if (basis_.cols() == 0) basis_.resize(ambient_, 0);
    if (basis_.rows() != ambient_) throw Error("subspace basis has wrong ambient dimension");
    if (numerical_rank(basis_) != basis_.cols()) throw Error("subspace basis is linearly dependent");
  }

  /// Span of arbitrary (possibly dependent) columns.
  static LinSubspace span(int ambient_dim, const Mat& cols) {
    return LinSubspace(ambient_dim, column_space(cols));
  }
  static LinSubspace whole(int ambient_dim) { return {ambient_dim, Mat::Identity(ambient_dim, ambient_dim)}; }
  static LinSubspace zero(int ambient_dim) { return {ambient_dim, Mat(ambient_dim, 0)}; }

  int ambient_dim() const { return ambient_; }
  int dim() const { return static_cast<int>(basis_.cols()); }
  const Mat& basis() const { return basis_; }

  bool contains(const Vec& v) const {
    if (v.norm() == 0.0) return true;
    Mat stacked(ambient_, dim() + 1);
    stacked << basis_, v;
    return numerical_rank(stacked) == dim();
  }

  /// other is a subspace of this.
  bool contains(const LinSubspace& other) const {
    if (other.dim() == 0) return true;
    Mat stacked(ambient_, dim() + other.dim());
    stacked << basis_, other.basis_;
    return numerical_rank(stacked) == dim();
  }

  friend bool operator==(const LinSubspace& a, const LinSubspace& b) {
    return a.ambient_ == b.ambient_ && a.dim() == b.dim() && a.contains(b) && b.contains(a);
  }

 private:
  int ambient_ = 0;
  Mat basis_;
};

inline LinSubspace intersection(const LinSubspace& a, const LinSubspace& b) {
  if (a.ambient_dim() != b.ambient_dim()) throw Error("intersection: ambient dimension mismatch");
  if (a.dim() == 0 || b.dim() == 0) return LinSubspace::zero(a.ambient_dim());
  Mat ab(a.ambient_dim(), a.dim() + b.dim());
  ab << a.basis(), -b.basis();
  Mat ns = null_space(ab);
  Mat vecs = a.basis() * ns.topRows(a.dim());
  return LinSubspace::span(a.ambient_dim(), vecs);
}

/// An antisymmetric nondegenerate bilinear form on R^{2n}.
class SympForm {
 public:
  SympForm() = default;
  explicit SympForm(Mat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() % 2 != 0) throw Error("symplectic form must be an even square matrix");
    double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    if ((m_ + m_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw Error("symplectic form is not antisymmetric");
    if (std::abs((m_ / scale).determinant()) <= 1e-9) throw Error("symplectic form is degenerate");
  }

  /// Standard form on (x1..xn, y1..yn): Omega(x_i, y_i) = 1.
  static SympForm standard(int n) {
    Mat m = Mat::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
      m(i, n + i) = 1.0;
      m(n + i, i) = -1.0;
    }
    return SympForm(m);
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Mat& matrix() const { return m_; }
  double operator()(const Vec& a, const Vec& b) const { return a.dot(m_ * b); }

 private:
  Mat m_;
};

struct ContactHyperplane {
  LinSubspace xi;   // ker alpha_p in chart coordinates (orthonormal basis)
  SympForm omega;   // d alpha_p in the coordinates of xi's basis
};

/// Kernel of a 1-form at p and the restriction of its differential.
inline ContactHyperplane contact_hyperplane(const DiffForm& alpha, const Vec& p) {
  if (alpha.degree() != 1) throw Error("contact_hyperplane: need a 1-form");
  Vec a = alpha.covector(p);
  if (a.norm() <= linear_tolerance().rank) throw Error("form vanishes at p");
  Mat row = a.transpose() / a.norm();
  Mat basis = null_space(row);
  Mat d = exterior_d(alpha).bilinear(p);
  Mat restricted = basis.transpose() * d * basis;
  double scale = std::max(1.0, restricted.cwiseAbs().maxCoeff());
  if (restricted.rows() == 0 || std::abs((restricted / scale).determinant()) <= 1e-9)
    throw Error("not contact at p");
  return {LinSubspace(alpha.chart().dim(), basis), SympForm(restricted)};
}

inline LinSubspace symp_complement(const LinSubspace& w, const SympForm& omega) {
  if (w.ambient_dim() != omega.dim()) throw Error("symp_complement: dimension mismatch");
  if (w.dim() == 0) return LinSubspace::whole(omega.dim());
  Mat rows = w.basis().transpose() * omega.matrix();
  return LinSubspace(omega.dim(), null_space(rows));
}

enum class SubspaceKind { Lagrangian, Coisotropic, Isotropic, Symplectic, Generic };

inline std::string to_string(SubspaceKind k) {
  switch (k) {
    case SubspaceKind::Lagrangian: return "lagrangian";
    case SubspaceKind::Coisotropic: return "coisotropic";
    case SubspaceKind::Isotropic: return "isotropic";
    case SubspaceKind::Symplectic: return "symplectic";
    case SubspaceKind::Generic: return "generic";
  }
  return "generic";
}

struct SubspaceClass {
  SubspaceKind kind = SubspaceKind::Generic;
  bool isotropic = false;
  bool coisotropic = false;
  bool lagrangian = false;
  bool symplectic = false;
  int complement_dim = 0;
};

/// Lagrangian iff W = W^perp; isotropic iff W in W^perp; coisotropic iff
/// W^perp in W; symplectic iff W and W^perp meet only in 0.
inline SubspaceClass classify_subspace(const LinSubspace& w, const SympForm& omega) {
  LinSubspace perp = symp_complement(w, omega);
  SubspaceClass c;
  c.complement_dim = perp.dim();
  c.isotropic = perp.contains(w);
  c.coisotropic = w.contains(perp);
  c.lagrangian = c.isotropic && c.coisotropic;
  c.symplectic = intersection(w, perp).dim() == 0;
  if (c.lagrangian)
    c.kind = SubspaceKind::Lagrangian;
  else if (c.coisotropic)
    c.kind = SubspaceKind::Coisotropic;
  else if (c.isotropic)
    c.kind = SubspaceKind::Isotropic;
  else if (c.symplectic)
    c.kind = SubspaceKind::Symplectic;
  return c;
}

/// Given a Lagrangian basis e (columns) and an n-dimensional transverse
/// complement, the unique basis f of the complement with Omega(e_i, f_j) = delta_ij.
inline Mat dual_completion(const Mat& e, const LinSubspace& complement, const SympForm& omega) {
  const int n = static_cast<int>(e.cols());
  if (e.rows() != omega.dim() || 2 * n != omega.dim()) throw Error("dual_completion: e must hold n vectors in R^{2n}");
  if (complement.ambient_dim() != omega.dim() || complement.dim() != n)
    throw Error("dual_completion: complement has the wrong dimension");
  LinSubspace espan(omega.dim(), e);
  if (!classify_subspace(espan, omega).lagrangian) throw Error("dual_completion: e does not span a Lagrangian subspace");
  Mat both(omega.dim(), 2 * n);
  both << e, complement.basis();
  if (numerical_rank(both) != 2 * n) throw Error("dual_completion: complement is not transverse");
  Mat pairing = e.transpose() * omega.matrix() * complement.basis();
  Eigen::FullPivLU<Mat> lu(pairing);
  if (!lu.isInvertible() || std::abs(pairing.determinant()) <= 1e-12)
    throw Error("dual_completion: pairing with the complement is degenerate");
  return complement.basis() * lu.inverse();
}

}  // namespace legfol

#endif  // LEGFOL_SYMPLIN_HPP_
