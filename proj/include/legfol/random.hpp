#ifndef LEGFOL_RANDOM_HPP_
#define LEGFOL_RANDOM_HPP_

// Random expressions, fields and forms for identity testing. Trees avoid
// division so every sample in the unit box evaluates finitely.

#include <algorithm>
#include <cmath>
#include <vector>

#include "legfol/forms.hpp"
#include "legfol/sampling.hpp"

namespace legfol {

inline Expr random_expr(Rng& rng, int dim, int depth) {
  if (depth <= 0 || rng.uniform() < 0.25) {
    if (rng.uniform() < 0.4) return Expr(std::round(rng.uniform(-2.0, 2.0) * 8.0) / 8.0);
    return Expr::var(rng.integer(0, dim - 1));
  }
  switch (rng.integer(0, 7)) {
    case 0:
    case 1: return random_expr(rng, dim, depth - 1) + random_expr(rng, dim, depth - 1);
    case 2: return random_expr(rng, dim, depth - 1) - random_expr(rng, dim, depth - 1);
    case 3:
    case 4: return random_expr(rng, dim, depth - 1) * random_expr(rng, dim, depth - 1);
    case 5: return sin(random_expr(rng, dim, depth - 1));
    case 6: return cos(random_expr(rng, dim, depth - 1));
    default: return exp(Expr(0.3) * random_expr(rng, dim, depth - 1));
  }
}

/// Polynomial of total degree <= deg with coefficients in [-1, 1].
inline Expr random_polynomial(Rng& rng, int dim, int deg, int terms) {
  Expr out(0.0);
  for (int t = 0; t < terms; ++t) {
    Expr m(std::round(rng.uniform(-1.0, 1.0) * 16.0) / 16.0);
    int d = rng.integer(0, deg);
    for (int j = 0; j < d; ++j) m = m * Expr::var(rng.integer(0, dim - 1));
    out = out + m;
  }
  return out;
}

/// A form with up to `terms` nonzero random coefficients.
inline DiffForm random_form(Rng& rng, const Chart& chart, int degree, int terms = 3, int depth = 3) {
  DiffForm w(chart, degree);
  const int dim = chart.dim();
  if (degree == 0) return DiffForm::scalar(chart, random_expr(rng, dim, depth));
  for (int t = 0; t < terms; ++t) {
    std::vector<int> idx;
    while (static_cast<int>(idx.size()) < degree) {
      int i = rng.integer(0, dim - 1);
      if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    w += DiffForm::monomial(chart, idx, random_expr(rng, dim, depth));
  }
  return w;
}

inline VectorFieldExpr random_vector_field(Rng& rng, const Chart& chart, int depth = 2) {
  std::vector<Expr> c;
  for (int i = 0; i < chart.dim(); ++i) c.push_back(random_expr(rng, chart.dim(), depth));
  return {chart, std::move(c)};
}

inline Vec random_point(Rng& rng, int dim, double half = 1.0) {
  Vec p(dim);
  for (int i = 0; i < dim; ++i) p[i] = rng.uniform(-half, half);
  return p;
}

inline std::vector<Vec> random_frame(Rng& rng, int dim, int k) {
  std::vector<Vec> out;
  for (int j = 0; j < k; ++j) out.push_back(random_point(rng, dim));
  return out;
}

}  // namespace legfol

#endif  // LEGFOL_RANDOM_HPP_
