#ifndef LEGFOL_FIELDS_HPP_
#define LEGFOL_FIELDS_HPP_

// Scalar expression trees on a coordinate chart, vector fields and smooth maps
// built from them. Differentiation is symbolic; the only simplifications are
// constant folding and 0/1 absorption.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace legfol {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Ordered coordinate names with optional per-coordinate periods.
class Chart {
 public:
  Chart() : data_(std::make_shared<Data>()) {}

  explicit Chart(std::vector<std::string> names,
                 std::vector<std::optional<double>> periods = {})
      : data_(std::make_shared<Data>()) {
    if (names.empty()) throw Error("chart needs at least one coordinate");
    if (periods.empty()) periods.resize(names.size());
    if (periods.size() != names.size())
      throw Error("chart: period list length differs from coordinate count");
    for (std::size_t i = 0; i < names.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j)
        if (names[i] == names[j]) throw Error("chart: duplicate coordinate '" + names[i] + "'");
      if (periods[i] && !(*periods[i] > 0.0))
        throw Error("chart: period of '" + names[i] + "' must be positive");
    }
    auto d = std::make_shared<Data>();
    d->names = std::move(names);
    d->periods = std::move(periods);
    data_ = std::move(d);
  }

  int dim() const { return static_cast<int>(data_->names.size()); }
  const std::vector<std::string>& names() const { return data_->names; }
  const std::string& name(int i) const { return data_->names.at(static_cast<std::size_t>(i)); }
  std::optional<double> period(int i) const { return data_->periods.at(static_cast<std::size_t>(i)); }
  const std::vector<std::optional<double>>& periods() const { return data_->periods; }

  std::optional<int> find(std::string_view name) const {
    for (int i = 0; i < dim(); ++i)
      if (data_->names[static_cast<std::size_t>(i)] == name) return i;
    return std::nullopt;
  }

  int index(std::string_view name) const {
    auto i = find(name);
    if (!i) throw Error("unknown variable '" + std::string(name) + "'");
    return *i;
  }

  /// Reduces periodic coordinates into [0, period).
  Vec reduce(const Vec& p) const {
    if (p.size() != dim()) throw Error("point dimension does not match chart");
    Vec q = p;
    for (int i = 0; i < dim(); ++i) {
      if (auto per = period(i)) {
        q[i] = std::fmod(q[i], *per);
        if (q[i] < 0) q[i] += *per;
      }
    }
    return q;
  }

  friend bool operator==(const Chart& a, const Chart& b) {
    return a.data_ == b.data_ ||
           (a.data_->names == b.data_->names && a.data_->periods == b.data_->periods);
  }
  friend bool operator!=(const Chart& a, const Chart& b) { return !(a == b); }

 private:
  struct Data {
    std::vector<std::string> names;
    std::vector<std::optional<double>> periods;
  };
  std::shared_ptr<const Data> data_;
};

// ---------------------------------------------------------------------------
// Expression trees

enum class Op : std::uint8_t { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Bump };

/// Smooth compactly supported bump: exp(1 - 1/(1-u^2)) on |u| < 1, zero elsewhere.
inline double bump_value(double u) {
  if (!(std::abs(u) < 1.0)) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

class Expr {
 public:
  Expr() : Expr(0.0) {}
  Expr(double c) : node_(make(Op::Const, c)) {}  // NOLINT(google-explicit-constructor)
  Expr(int c) : Expr(static_cast<double>(c)) {}   // NOLINT(google-explicit-constructor)

  static Expr var(int index) {
    Expr e;
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->var = index;
    e.node_ = std::move(n);
    return e;
  }

  Op op() const { return node_->op; }
  std::optional<double> constant() const {
    if (node_->op == Op::Const) return node_->value;
    return std::nullopt;
  }
  bool is_zero() const { return node_->op == Op::Const && node_->value == 0.0; }
  bool is_one() const { return node_->op == Op::Const && node_->value == 1.0; }
  int var_index() const { return node_->var; }
  int exponent() const { return node_->exponent; }
  Expr lhs() const { return Expr(node_->a); }
  Expr rhs() const { return Expr(node_->b); }

  // Arithmetic with constant folding and 0/1 absorption.
  friend Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.constant() && b.constant()) return Expr(*a.constant() + *b.constant());
    return binary(Op::Add, a, b);
  }
  friend Expr operator-(const Expr& a, const Expr& b) {
    if (b.is_zero()) return a;
    if (a.is_zero()) return -b;
    if (a.constant() && b.constant()) return Expr(*a.constant() - *b.constant());
    return binary(Op::Sub, a, b);
  }
  friend Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.constant() && b.constant()) return Expr(*a.constant() * *b.constant());
    if (a.constant() && *a.constant() == -1.0) return -b;
    if (b.constant() && *b.constant() == -1.0) return -a;
    return binary(Op::Mul, a, b);
  }
  friend Expr operator/(const Expr& a, const Expr& b) {
    if (b.is_zero()) throw Error("division by the zero expression");
    if (a.is_zero()) return Expr(0.0);
    if (b.is_one()) return a;
    if (a.constant() && b.constant()) return Expr(*a.constant() / *b.constant());
    return binary(Op::Div, a, b);
  }
  Expr operator-() const {
    if (auto c = constant()) return Expr(-*c);
    if (op() == Op::Neg) return lhs();
    return unary(Op::Neg, *this);
  }
  Expr& operator+=(const Expr& o) { return *this = *this + o; }
  Expr& operator-=(const Expr& o) { return *this = *this - o; }
  Expr& operator*=(const Expr& o) { return *this = *this * o; }

  friend Expr pow(const Expr& a, int k) {
    if (k == 0) return Expr(1.0);
    if (k == 1) return a;
    if (auto c = a.constant()) return Expr(std::pow(*c, k));
    if (a.is_zero()) return Expr(0.0);
    Expr e = unary(Op::Pow, a);
    auto n = std::make_shared<Node>(*e.node_);
    n->exponent = k;
    e.node_ = std::move(n);
    return e;
  }
  friend Expr sin(const Expr& a) {
    if (auto c = a.constant()) return Expr(std::sin(*c));
    return unary(Op::Sin, a);
  }
  friend Expr cos(const Expr& a) {
    if (auto c = a.constant()) return Expr(std::cos(*c));
    return unary(Op::Cos, a);
  }
  friend Expr exp(const Expr& a) {
    if (auto c = a.constant()) return Expr(std::exp(*c));
    return unary(Op::Exp, a);
  }
  friend Expr bump(const Expr& a) {
    if (auto c = a.constant()) return Expr(bump_value(*c));
    return unary(Op::Bump, a);
  }

  /// Numeric value at a point given in chart coordinates. A product or
  /// quotient whose first factor is exactly zero evaluates to zero, so the
  /// derivatives of bump() stay finite outside their support.
  double eval(const double* p) const { return eval_node(*node_, p); }
  double eval(const Vec& p) const { return eval_node(*node_, p.data()); }

  /// Exact partial derivative with respect to coordinate `v`.
  Expr diff(int v) const {
    const Node& n = *node_;
    switch (n.op) {
      case Op::Const: return Expr(0.0);
      case Op::Var: return Expr(n.var == v ? 1.0 : 0.0);
      case Op::Add: return lhs().diff(v) + rhs().diff(v);
      case Op::Sub: return lhs().diff(v) - rhs().diff(v);
      case Op::Mul: return lhs().diff(v) * rhs() + lhs() * rhs().diff(v);
      case Op::Div: {
        // (a/b)' = a'/b - a b' / b^2
        Expr da = lhs().diff(v), db = rhs().diff(v);
        return da / rhs() - (lhs() * db) / pow(rhs(), 2);
      }
      case Op::Neg: return -lhs().diff(v);
      case Op::Pow: {
        Expr da = lhs().diff(v);
        if (da.is_zero()) return Expr(0.0);
        return Expr(static_cast<double>(n.exponent)) * pow(lhs(), n.exponent - 1) * da;
      }
      case Op::Sin: return cos(lhs()) * lhs().diff(v);
      case Op::Cos: return -(sin(lhs()) * lhs().diff(v));
      case Op::Exp: return *this * lhs().diff(v);
      case Op::Bump: {
        Expr u = lhs();
        Expr du = u.diff(v);
        if (du.is_zero()) return Expr(0.0);
        Expr one_minus = Expr(1.0) - pow(u, 2);
        return *this * (Expr(-2.0) * u / pow(one_minus, 2)) * du;
      }
    }
    return Expr(0.0);
  }

  /// Replaces variable i by repl[i].
  Expr substitute(const std::vector<Expr>& repl) const {
    const Node& n = *node_;
    switch (n.op) {
      case Op::Const: return *this;
      case Op::Var:
        if (n.var < 0 || static_cast<std::size_t>(n.var) >= repl.size())
          throw Error("substitute: variable index out of range");
        return repl[static_cast<std::size_t>(n.var)];
      case Op::Add: return lhs().substitute(repl) + rhs().substitute(repl);
      case Op::Sub: return lhs().substitute(repl) - rhs().substitute(repl);
      case Op::Mul: return lhs().substitute(repl) * rhs().substitute(repl);
      case Op::Div: return lhs().substitute(repl) / rhs().substitute(repl);
      case Op::Neg: return -lhs().substitute(repl);
      case Op::Pow: return pow(lhs().substitute(repl), n.exponent);
      case Op::Sin: return sin(lhs().substitute(repl));
      case Op::Cos: return cos(lhs().substitute(repl));
      case Op::Exp: return exp(lhs().substitute(repl));
      case Op::Bump: return bump(lhs().substitute(repl));
    }
    return *this;
  }

  /// Largest variable index referenced, or -1.
  int max_var() const {
    const Node& n = *node_;
    switch (n.op) {
      case Op::Const: return -1;
      case Op::Var: return n.var;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: return std::max(lhs().max_var(), rhs().max_var());
      default: return lhs().max_var();
    }
  }

  bool depends_on(int v) const {
    const Node& n = *node_;
    switch (n.op) {
      case Op::Const: return false;
      case Op::Var: return n.var == v;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: return lhs().depends_on(v) || rhs().depends_on(v);
      default: return lhs().depends_on(v);
    }
  }

  /// Infix text in the scenario grammar; variables named through `chart`.
  std::string str(const Chart& chart) const {
    std::string out;
    print(*node_, chart, out, 0);
    return out;
  }

  friend bool same_tree(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    const Node &x = *a.node_, &y = *b.node_;
    if (x.op != y.op) return false;
    switch (x.op) {
      case Op::Const: return x.value == y.value;
      case Op::Var: return x.var == y.var;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: return same_tree(a.lhs(), b.lhs()) && same_tree(a.rhs(), b.rhs());
      case Op::Pow: return x.exponent == y.exponent && same_tree(a.lhs(), b.lhs());
      default: return same_tree(a.lhs(), b.lhs());
    }
  }

 private:
  struct Node {
    Op op = Op::Const;
    double value = 0.0;
    int var = -1;
    int exponent = 0;
    std::shared_ptr<const Node> a, b;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static std::shared_ptr<const Node> make(Op op, double value) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = value;
    return n;
  }
  static Expr binary(Op op, const Expr& a, const Expr& b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = a.node_;
    n->b = b.node_;
    return Expr(std::shared_ptr<const Node>(std::move(n)));
  }
  static Expr unary(Op op, const Expr& a) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = a.node_;
    return Expr(std::shared_ptr<const Node>(std::move(n)));
  }

  static double eval_node(const Node& n, const double* p) {
    switch (n.op) {
      case Op::Const: return n.value;
      case Op::Var: return p[n.var];
      case Op::Add: return eval_node(*n.a, p) + eval_node(*n.b, p);
      case Op::Sub: return eval_node(*n.a, p) - eval_node(*n.b, p);
      case Op::Mul: {
        double l = eval_node(*n.a, p);
        if (l == 0.0) return 0.0;
        double r = eval_node(*n.b, p);
        if (r == 0.0) return 0.0;
        return l * r;
      }
      case Op::Div: {
        double l = eval_node(*n.a, p);
        if (l == 0.0) return 0.0;
        return l / eval_node(*n.b, p);
      }
      case Op::Neg: return -eval_node(*n.a, p);
      case Op::Pow: return std::pow(eval_node(*n.a, p), n.exponent);
      case Op::Sin: return std::sin(eval_node(*n.a, p));
      case Op::Cos: return std::cos(eval_node(*n.a, p));
      case Op::Exp: return std::exp(eval_node(*n.a, p));
      case Op::Bump: return bump_value(eval_node(*n.a, p));
    }
    return 0.0;
  }

  static int precedence(const Node& n) {
    switch (n.op) {
      case Op::Add:
      case Op::Sub: return 1;
      case Op::Mul:
      case Op::Div: return 2;
      case Op::Neg: return 3;
      case Op::Pow: return 4;
      case Op::Const: return n.value < 0 ? 3 : 5;
      default: return 5;
    }
  }

  static void print(const Node& n, const Chart& chart, std::string& out, int parent_prec) {
    int prec = precedence(n);
    bool paren = prec < parent_prec;
    if (paren) out += '(';
    switch (n.op) {
      case Op::Const: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", n.value);
        // Prefer the shortest representation that round-trips.
        for (int digits = 1; digits <= 17; ++digits) {
          char shorter[32];
          std::snprintf(shorter, sizeof shorter, "%.*g", digits, n.value);
          if (std::strtod(shorter, nullptr) == n.value) {
            std::snprintf(buf, sizeof buf, "%s", shorter);
            break;
          }
        }
        out += buf;
        break;
      }
      case Op::Var:
        out += (n.var >= 0 && n.var < chart.dim()) ? chart.name(n.var)
                                                   : "v" + std::to_string(n.var);
        break;
      case Op::Add:
        print(*n.a, chart, out, 1);
        out += " + ";
        print(*n.b, chart, out, 2);
        break;
      case Op::Sub:
        print(*n.a, chart, out, 1);
        out += " - ";
        print(*n.b, chart, out, 2);
        break;
      case Op::Mul:
        print(*n.a, chart, out, 2);
        out += "*";
        print(*n.b, chart, out, 3);
        break;
      case Op::Div:
        print(*n.a, chart, out, 2);
        out += "/";
        print(*n.b, chart, out, 3);
        break;
      case Op::Neg:
        out += "-";
        print(*n.a, chart, out, 4);
        break;
      case Op::Pow:
        print(*n.a, chart, out, 5);
        out += "^" + (n.exponent < 0 ? "(" + std::to_string(n.exponent) + ")"
                                     : std::to_string(n.exponent));
        break;
      case Op::Sin:
      case Op::Cos:
      case Op::Exp:
      case Op::Bump:
        out += n.op == Op::Sin ? "sin(" : n.op == Op::Cos ? "cos(" : n.op == Op::Exp ? "exp(" : "bump(";
        print(*n.a, chart, out, 0);
        out += ")";
        break;
    }
    if (paren) out += ')';
  }

  std::shared_ptr<const Node> node_;
};

/// A scalar expression bound to a chart.
class ExprField {
 public:
  ExprField() = default;
  ExprField(Chart chart, Expr expr) : chart_(std::move(chart)), expr_(std::move(expr)) {
    if (expr_.max_var() >= chart_.dim()) throw Error("field references a variable outside its chart");
  }

  const Chart& chart() const { return chart_; }
  const Expr& expr() const { return expr_; }

  double operator()(const Vec& p) const {
    if (p.size() != chart_.dim()) throw Error("point dimension does not match chart");
    return expr_.eval(chart_.reduce(p));
  }

  std::string str() const { return expr_.str(chart_); }

 private:
  Chart chart_;
  Expr expr_;
};

inline Expr coordinate(const Chart& chart, std::string_view name) {
  return Expr::var(chart.index(name));
}

inline ExprField differentiate(const ExprField& field, std::string_view var) {
  int i = field.chart().find(var).value_or(-1);
  if (i < 0) throw Error("differentiate: unknown variable '" + std::string(var) + "'");
  return ExprField(field.chart(), field.expr().diff(i));
}

/// Central-difference oracle. Independent of Expr::diff; used only for checks.
inline double fd_partial(const ExprField& field, const Vec& point, std::string_view var,
                         double step = 1e-5) {
  if (!(step > 0)) throw Error("fd_partial: step must be positive");
  int i = field.chart().find(var).value_or(-1);
  if (i < 0) throw Error("fd_partial: unknown variable '" + std::string(var) + "'");
  Vec plus = point, minus = point;
  plus[i] += step;
  minus[i] -= step;
  double fp = field(plus), fm = field(minus);
  if (!std::isfinite(fp) || !std::isfinite(fm))
    throw Error("fd_partial: non-finite evaluation");
  return (fp - fm) / (2.0 * step);
}

// ---------------------------------------------------------------------------
// Vector fields and maps

class VectorFieldExpr {
 public:
  VectorFieldExpr() = default;
  VectorFieldExpr(Chart chart, std::vector<Expr> components)
      : chart_(std::move(chart)), comps_(std::move(components)) {
    if (static_cast<int>(comps_.size()) != chart_.dim())
      throw Error("vector field needs one component per coordinate");
    for (const auto& c : comps_)
      if (c.max_var() >= chart_.dim()) throw Error("vector field references a variable outside its chart");
  }

  /// The coordinate field d/d(name).
  static VectorFieldExpr coordinate(const Chart& chart, int i) {
    std::vector<Expr> c(static_cast<std::size_t>(chart.dim()), Expr(0.0));
    c.at(static_cast<std::size_t>(i)) = Expr(1.0);
    return {chart, std::move(c)};
  }
  static VectorFieldExpr zero(const Chart& chart) {
    return {chart, std::vector<Expr>(static_cast<std::size_t>(chart.dim()), Expr(0.0))};
  }

  const Chart& chart() const { return chart_; }
  int dim() const { return chart_.dim(); }
  const Expr& operator[](int i) const { return comps_.at(static_cast<std::size_t>(i)); }
  const std::vector<Expr>& components() const { return comps_; }

  Vec operator()(const Vec& p) const {
    Vec q = chart_.reduce(p);
    Vec out(dim());
    for (int i = 0; i < dim(); ++i) out[i] = comps_[static_cast<std::size_t>(i)].eval(q);
    return out;
  }

  /// Directional derivative V(f) = sum_i V^i df/dx_i.
  Expr apply(const Expr& f) const {
    Expr out(0.0);
    for (int i = 0; i < dim(); ++i) {
      const Expr& vi = comps_[static_cast<std::size_t>(i)];
      if (vi.is_zero()) continue;
      out += vi * f.diff(i);
    }
    return out;
  }

  friend VectorFieldExpr operator+(const VectorFieldExpr& a, const VectorFieldExpr& b) {
    check_same(a, b);
    std::vector<Expr> c;
    for (int i = 0; i < a.dim(); ++i) c.push_back(a[i] + b[i]);
    return {a.chart_, std::move(c)};
  }
  friend VectorFieldExpr operator-(const VectorFieldExpr& a, const VectorFieldExpr& b) {
    check_same(a, b);
    std::vector<Expr> c;
    for (int i = 0; i < a.dim(); ++i) c.push_back(a[i] - b[i]);
    return {a.chart_, std::move(c)};
  }
  friend VectorFieldExpr operator*(const Expr& f, const VectorFieldExpr& a) {
    std::vector<Expr> c;
    for (int i = 0; i < a.dim(); ++i) c.push_back(f * a[i]);
    return {a.chart_, std::move(c)};
  }

  static void check_same(const VectorFieldExpr& a, const VectorFieldExpr& b) {
    if (a.chart_ != b.chart_) throw Error("vector fields live on different charts");
  }

 private:
  Chart chart_;
  std::vector<Expr> comps_;
};

/// [V, W] = (V.d)W - (W.d)V, componentwise.
inline VectorFieldExpr lie_bracket(const VectorFieldExpr& v, const VectorFieldExpr& w) {
  if (v.chart() != w.chart()) throw Error("lie_bracket: chart mismatch");
  std::vector<Expr> c;
  c.reserve(static_cast<std::size_t>(v.dim()));
  for (int i = 0; i < v.dim(); ++i) c.push_back(v.apply(w[i]) - w.apply(v[i]));
  return {v.chart(), std::move(c)};
}

class SmoothMapExpr {
 public:
  SmoothMapExpr() = default;
  SmoothMapExpr(Chart source, Chart target, std::vector<Expr> components)
      : source_(std::move(source)), target_(std::move(target)), comps_(std::move(components)) {
    if (static_cast<int>(comps_.size()) != target_.dim())
      throw Error("smooth map needs one component per target coordinate");
    for (const auto& c : comps_)
      if (c.max_var() >= source_.dim()) throw Error("map component references a variable outside the source chart");
    jac_.resize(comps_.size());
    for (std::size_t i = 0; i < comps_.size(); ++i)
      for (int j = 0; j < source_.dim(); ++j) jac_[i].push_back(comps_[i].diff(j));
  }

  static SmoothMapExpr identity(const Chart& c) {
    std::vector<Expr> comps;
    for (int i = 0; i < c.dim(); ++i) comps.push_back(Expr::var(i));
    return {c, c, std::move(comps)};
  }

  const Chart& source() const { return source_; }
  const Chart& target() const { return target_; }
  const std::vector<Expr>& components() const { return comps_; }
  const Expr& component(int i) const { return comps_.at(static_cast<std::size_t>(i)); }
  /// Symbolic partial d(component i)/d(source j).
  const Expr& partial(int i, int j) const {
    return jac_.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j));
  }

  Vec operator()(const Vec& p) const {
    Vec q = source_.reduce(p);
    Vec out(target_.dim());
    for (int i = 0; i < target_.dim(); ++i) out[i] = comps_[static_cast<std::size_t>(i)].eval(q);
    return out;
  }

  Mat jacobian(const Vec& p) const {
    Vec q = source_.reduce(p);
    Mat j(target_.dim(), source_.dim());
    for (int r = 0; r < target_.dim(); ++r)
      for (int c = 0; c < source_.dim(); ++c) j(r, c) = partial(r, c).eval(q);
    return j;
  }

  /// this o inner
  SmoothMapExpr compose(const SmoothMapExpr& inner) const {
    if (inner.target() != source_) throw Error("compose: inner target is not this map's source");
    std::vector<Expr> comps;
    for (const auto& c : comps_) comps.push_back(c.substitute(inner.components()));
    return {inner.source(), target_, std::move(comps)};
  }

 private:
  Chart source_, target_;
  std::vector<Expr> comps_;
  std::vector<std::vector<Expr>> jac_;
};

inline Vec pushforward(const SmoothMapExpr& map, const VectorFieldExpr& v, const Vec& point) {
  if (v.chart() != map.source()) throw Error("pushforward: vector field does not live on the map's source");
  return map.jacobian(point) * v(point);
}

/// Symbolic pushforward: target-coordinate components, as expressions on the source.
inline std::vector<Expr> pushforward_field(const SmoothMapExpr& map, const VectorFieldExpr& v) {
  if (v.chart() != map.source()) throw Error("pushforward: vector field does not live on the map's source");
  std::vector<Expr> out;
  for (int i = 0; i < map.target().dim(); ++i) {
    Expr c(0.0);
    for (int j = 0; j < map.source().dim(); ++j) {
      if (v[j].is_zero()) continue;
      c += map.partial(i, j) * v[j];
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace legfol

#endif  // LEGFOL_FIELDS_HPP_
