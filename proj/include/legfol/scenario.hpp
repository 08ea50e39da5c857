#ifndef LEGFOL_SCENARIO_HPP_
#define LEGFOL_SCENARIO_HPP_

// Scenario files: a line-oriented format of header keys followed by
// [kind name] sections with `key = value` lines. Declarations are resolved in
// order; every problem is reported with its line and column.
//
//   name = claim-identities-n2
//   seed = 0
//
//   [graph Y]
//   n = 2
//   k = 3
//   z = (x2^2 + y2^2)/2
//
//   [check claim]
//   op = claim
//   graph = Y
//   samples = 200

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "legfol/bundle.hpp"
#include "legfol/coiso.hpp"
#include "legfol/parse.hpp"

namespace legfol {

struct Diagnostic {
  int line = 0;
  int column = 0;
  std::string message;

  std::string str() const { return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message; }
};

class ScenarioError : public Error {
 public:
  explicit ScenarioError(std::vector<Diagnostic> d) : Error(join(d)), diagnostics_(std::move(d)) {}
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string join(const std::vector<Diagnostic>& d) {
    std::string out;
    for (const auto& x : d) out += (out.empty() ? "" : "\n") + x.str();
    return out;
  }
  std::vector<Diagnostic> diagnostics_;
};

struct Entry {
  std::string key, value;
  int line = 0;
  int key_column = 1;
  int value_column = 1;

  friend bool operator==(const Entry& a, const Entry& b) { return a.key == b.key && a.value == b.value; }
};

struct Section {
  std::string kind, name;
  int line = 0;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
  friend bool operator==(const Section& a, const Section& b) {
    return a.kind == b.kind && a.name == b.name && a.entries == b.entries;
  }
};

struct GermSpec {
  std::string name, kind;   // nonsingular, singular or standard
  int n = 0;
  std::string form, field, bundle;
  int line = 0;
};

struct CheckSpec {
  std::string label, op;
  int line = 0;
  std::map<std::string, Entry> params;

  const Entry* param(const std::string& key) const {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
  }
};

struct Scenario {
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  std::vector<Entry> header;
  std::vector<Section> sections;

  std::map<std::string, Chart> charts;   // charts, bundle totals and graph sources
  std::map<std::string, VectorFieldExpr> fields;
  std::map<std::string, DiffForm> forms;
  std::map<std::string, GraphSubmanifold> graphs;
  std::map<std::string, FlatDiskBundle> bundles;
  std::map<std::string, GermSpec> germs;
  std::vector<CheckSpec> checks;

  /// Same declarations in the same order; layout and comments are ignored.
  friend bool operator==(const Scenario& a, const Scenario& b) {
    return a.header == b.header && a.sections == b.sections;
  }
};

// ---------------------------------------------------------------------------
// Check table

struct OpSpec {
  std::string name;
  std::string anchor;
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

inline const std::vector<std::string>& common_check_keys() {
  static const std::vector<std::string> keys{"op", "samples", "box", "tol", "expect", "informational", "seed"};
  return keys;
}

inline const std::vector<OpSpec>& check_ops() {
  static const std::vector<OpSpec> ops{
      {"claim", "graph model: isotropic frame V_k with i_V alpha = 0, i_V d lambda = 0, [V_k, V_l] = 0, flow of V_k preserves lambda, Lambda_ab = 0",
       {"graph"}, {}},
      {"residuals", "graph model: alpha ^ d alpha on all tangent triples (foliation residual equations)", {"graph"}, {}},
      {"residual_at", "graph model: single residual equation at a point", {"graph", "family", "indices", "point", "value"}, {}},
      {"oracle_agreement", "coisotropy: residual equations vs (Y_xi)^perp in Y_xi", {"graph"}, {}},
      {"foliation", "graph model: alpha ^ d alpha pulled back to Y", {"graph"}, {}},
      {"singular_scan", "singular set S(Y) = {lambda = 0}: clusters and dimension", {"graph"},
       {"step", "dimension", "flag", "clusters"}},
      {"perturb", "Legendrian singularity: after perturbation the Legendrian foliation becomes nonsingular", {"graph", "perturbation"},
       {"delta", "window", "step"}},
      {"char_foliation", "characteristic foliation ker(alpha ^ (d alpha)^(k-n-1)) and its integrability", {"graph"}, {}},
      {"flat_structure", "near a generic singular component: ker d lambda is a foliation and lambda is covariant constant", {"graph"}, {}},
      {"flatness", "flat bundle: horizontal distribution integrable", {"bundle"}, {}},
      {"transport", "parallel transport: horizontal lift of a path", {"bundle", "path", "start", "end"}, {"ode_tol"}},
      {"functoriality", "parallel transport: composition and inverse", {"bundle"}, {"ode_tol"}},
      {"contractible_loop", "flat bundle: contractible loops have trivial holonomy", {"bundle"}, {"ode_tol"}},
      {"holonomy", "holonomy: pi_1(B) -> Diff+_0(D), fixes 0, orientation preserving", {"bundle", "generator"},
       {"rotation", "ode_tol"}},
      {"covariant_derivative", "covariant derivative: Lie derivative along the horizontal lift", {"bundle", "form", "direction"}, {}},
      {"ccl", "CCL 1-form: invariant under holonomy, zero exactly at 0, d beta > 0", {"bundle", "form"}, {"fails"}},
      {"frobenius", "foliation: beta ^ d beta = 0", {"form"}, {}},
      {"contactness", "contact condition: alpha ^ (d alpha)^n nonzero with constant sign", {"germ"}, {"radius"}},
      {"volume_identity", "tautological germ: alpha ^ (d alpha)^n = n! f dvol", {"germ"}, {"radius"}},
      {"zero_section", "germ: restriction to the zero section defines the given foliation", {"germ"}, {"expected", "step"}},
      {"interpolation", "linear interpolation (1-t) alpha_0 + t alpha_1 is contact near the zero section", {"germ", "other"},
       {"t_samples", "radius", "step"}},
  };
  return ops;
}

inline const OpSpec* find_op(std::string_view name) {
  for (const auto& op : check_ops())
    if (op.name == name) return &op;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Small value parsers

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct Piece {
  std::string text;
  int offset = 0;  // 0-based offset in the value
};

/// Splits on `sep` outside parentheses; pieces are trimmed.
inline std::vector<Piece> split_top(std::string_view s, char sep) {
  std::vector<Piece> out;
  int depth = 0;
  std::size_t start = 0;
  auto push = [&](std::size_t end) {
    std::string_view raw = s.substr(start, end - start);
    std::size_t lead = 0;
    while (lead < raw.size() && std::isspace(static_cast<unsigned char>(raw[lead]))) ++lead;
    out.push_back({std::string(trim(raw)), static_cast<int>(start + lead)});
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (s[i] == sep && depth == 0) {
      push(i);
      start = i + 1;
    }
  }
  push(s.size());
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> to_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  return true;
}

class Resolver {
 public:
  explicit Resolver(Scenario& s) : s_(s) {}

  void error(int line, int col, std::string msg) { diags_.push_back({line, col, std::move(msg)}); }
  void error(const Entry& e, std::string msg, int offset = 0) { error(e.line, e.value_column + offset, std::move(msg)); }
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

  void run() {
    for (const auto& e : s_.header) header(e);
    for (const auto& sec : s_.sections) {
      try {
        if (!sec.name.empty() && sec.kind != "check") {
          if (declared_.count(sec.name)) {
            error(sec.line, 1, "'" + sec.name + "' is already declared");
            continue;
          }
        }
        if (sec.kind == "chart") chart(sec);
        else if (sec.kind == "field") field(sec);
        else if (sec.kind == "form") form(sec);
        else if (sec.kind == "graph") graph(sec);
        else if (sec.kind == "bundle") bundle(sec);
        else if (sec.kind == "germ") germ(sec);
        else if (sec.kind == "check") check(sec);
      } catch (const ParseError& e) {
        error(e.line(), e.column(), e.message());
      } catch (const SectionFailure&) {
      } catch (const Error& e) {
        error(sec.line, 1, e.what());
      }
      if (!sec.name.empty() && sec.kind != "check") declared_.insert(sec.name);
    }
  }

 private:
  struct SectionFailure {};

  [[noreturn]] void fail(const Entry& e, std::string msg, int offset = 0) {
    error(e, std::move(msg), offset);
    throw SectionFailure{};
  }
  [[noreturn]] void fail(const Section& sec, std::string msg) {
    error(sec.line, 1, std::move(msg));
    throw SectionFailure{};
  }

  /// Points at `key` when the section has it, else at the section header.
  [[noreturn]] void fail_at(const Section& sec, std::string_view key, std::string msg) {
    if (const Entry* e = sec.find(key)) fail(*e, std::move(msg));
    fail(sec, std::move(msg));
  }

  void allow(const Section& sec, std::initializer_list<std::string_view> keys) {
    for (const auto& e : sec.entries)
      if (std::find(keys.begin(), keys.end(), e.key) == keys.end())
        error(e.line, e.key_column, "unknown key '" + e.key + "' in [" + sec.kind + "]");
  }
  const Entry& need(const Section& sec, std::string_view key) {
    if (const Entry* e = sec.find(key)) return *e;
    fail(sec, "[" + sec.kind + (sec.name.empty() ? "" : " " + sec.name) + "] needs '" + std::string(key) + "'");
  }
  void require_name(const Section& sec) {
    if (sec.name.empty()) fail(sec, "[" + sec.kind + "] needs a name: [" + sec.kind + " NAME]");
  }

  int integer(const Entry& e) {
    auto v = to_int(e.value);
    if (!v) fail(e, "expected an integer, got '" + e.value + "'");
    return static_cast<int>(*v);
  }
  double number(const Entry& e) {
    auto v = to_double(e.value);
    if (!v) fail(e, "expected a number, got '" + e.value + "'");
    return *v;
  }

  const Chart& chart_ref(const Entry& e) {
    auto it = s_.charts.find(e.value);
    if (it == s_.charts.end()) fail(e, "unknown identifier '" + e.value + "'");
    return it->second;
  }

  FormResolver forms_on(const Chart& c) {
    return [this, c](std::string_view name) -> std::optional<DiffForm> {
      auto it = s_.forms.find(std::string(name));
      if (it == s_.forms.end() || it->second.chart() != c) return std::nullopt;
      return it->second;
    };
  }

  Expr expression(const Entry& e, const Piece& p, const Chart& c) {
    return parse_expr(p.text, c, forms_on(c), e.line, e.value_column - 1 + p.offset);
  }

  void header(const Entry& e) {
    if (e.key == "name") {
      s_.name = e.value;
    } else if (e.key == "description") {
      s_.description = e.value;
    } else if (e.key == "seed") {
      auto v = to_int(e.value);
      if (!v || *v < 0) return error(e, "seed must be a non-negative integer");
      s_.seed = static_cast<std::uint64_t>(*v);
    } else if (e.key == "n" || e.key == "k") {
      auto v = to_int(e.value);
      if (!v) return error(e, "expected an integer, got '" + e.value + "'");
      (e.key == "n" ? header_n_ : header_k_) = static_cast<int>(*v);
      if (header_n_ && header_k_ && (*header_n_ < 1 || *header_n_ > 4 || *header_k_ < *header_n_ + 1 || *header_k_ > 2 * *header_n_))
        error(e, "need 1 <= n <= 4 and n+1 <= k <= 2n");
      else if (header_n_ && (*header_n_ < 1 || *header_n_ > 4))
        error(e, "n must be in 1..4");
    } else {
      error(e.line, e.key_column, "unknown header key '" + e.key + "'");
    }
  }

  void chart(const Section& sec) {
    require_name(sec);
    allow(sec, {"coords", "periods"});
    const Entry& coords = need(sec, "coords");
    std::vector<std::string> names;
    for (const auto& p : split_top(coords.value, ',')) {
      if (!is_identifier(p.text)) fail(coords, "bad coordinate name '" + p.text + "'", p.offset);
      names.push_back(p.text);
    }
    std::vector<std::optional<double>> per(names.size());
    if (const Entry* pe = sec.find("periods")) {
      for (const auto& p : split_top(pe->value, ',')) {
        auto colon = p.text.find(':');
        if (colon == std::string::npos) fail(*pe, "expected 'name: period'", p.offset);
        std::string nm(trim(std::string_view(p.text).substr(0, colon)));
        auto it = std::find(names.begin(), names.end(), nm);
        if (it == names.end()) fail(*pe, "unknown identifier '" + nm + "'", p.offset);
        auto v = to_double(std::string_view(p.text).substr(colon + 1));
        if (!v || *v <= 0) fail(*pe, "period must be a positive number", p.offset);
        per[static_cast<std::size_t>(it - names.begin())] = *v;
      }
    }
    s_.charts.emplace(sec.name, Chart(names, per));
  }

  void field(const Section& sec) {
    require_name(sec);
    allow(sec, {"chart", "components"});
    const Chart& c = chart_ref(need(sec, "chart"));
    const Entry& comps = need(sec, "components");
    auto pieces = split_top(comps.value, ',');
    if (static_cast<int>(pieces.size()) != c.dim())
      fail(comps, "dimension mismatch: " + std::to_string(pieces.size()) + " components for a " +
                      std::to_string(c.dim()) + "-dimensional chart");
    std::vector<Expr> e;
    for (const auto& p : pieces) e.push_back(expression(comps, p, c));
    s_.fields.emplace(sec.name, VectorFieldExpr(c, e));
  }

  void form(const Section& sec) {
    require_name(sec);
    allow(sec, {"chart", "expr"});
    const Chart& c = chart_ref(need(sec, "chart"));
    const Entry& ex = need(sec, "expr");
    s_.forms.emplace(sec.name, parse_form(ex.value, c, forms_on(c), ex.line, ex.value_column - 1));
  }

  void graph(const Section& sec) {
    require_name(sec);
    std::optional<int> n = header_n_, k = header_k_;
    if (const Entry* e = sec.find("n")) n = integer(*e);
    if (const Entry* e = sec.find("k")) k = integer(*e);
    if (!n) fail(sec, "[graph " + sec.name + "] needs 'n'");
    if (*n < 1 || *n > 4) fail_at(sec, "n", "n must be in 1..4");
    std::vector<std::string> free;
    if (const Entry* e = sec.find("free")) {
      for (const auto& p : split_top(e->value, ',')) free.push_back(p.text);
    } else {
      if (!k) fail(sec, "[graph " + sec.name + "] needs 'k' or 'free'");
      if (*k < *n + 1 || *k > 2 * *n) fail_at(sec, "k", "need n+1 <= k <= 2n");
      free = GraphSubmanifold::standard_free(*n, *k);
    }
    Chart src;
    try {
      src = GraphSubmanifold::source_chart(*n, free);
    } catch (const Error& ex) {
      fail(*sec.find("free"), ex.what());
    }
    if (k && sec.find("free") && src.dim() != *k) fail_at(sec, "k", "dimension mismatch: 'free' gives k = " + std::to_string(src.dim()));
    std::vector<std::string> dependent;
    const auto ambient = standard_contact(*n);
    for (const auto& name : ambient.chart.names())
      if (!src.find(name)) dependent.push_back(name);
    std::map<std::string, Expr> comps;
    for (const auto& e : sec.entries) {
      if (e.key == "n" || e.key == "k" || e.key == "free") continue;
      if (std::find(dependent.begin(), dependent.end(), e.key) == dependent.end()) {
        std::string dep;
        for (const auto& d : dependent) dep += (dep.empty() ? "" : ", ") + d;
        error(e.line, e.key_column, "'" + e.key + "' is not a dependent coordinate (" + dep + ")");
        continue;
      }
      comps.emplace(e.key, expression(e, Piece{e.value, 0}, src));
    }
    try {
      s_.graphs.emplace(sec.name, GraphSubmanifold(*n, free, comps));
    } catch (const Error& ex) {
      fail(sec, ex.what());
    }
    s_.charts.emplace(sec.name, src);
  }

  void bundle(const Section& sec) {
    require_name(sec);
    std::vector<std::string> base{"s1"}, fib{"u", "v"};
    if (const Entry* e = sec.find("base")) {
      base.clear();
      for (const auto& p : split_top(e->value, ',')) {
        if (!is_identifier(p.text)) fail(*e, "bad coordinate name '" + p.text + "'", p.offset);
        base.push_back(p.text);
      }
    }
    if (const Entry* e = sec.find("fiber")) {
      fib.clear();
      for (const auto& p : split_top(e->value, ',')) fib.push_back(p.text);
      if (fib.size() != 2) fail(*e, "fiber needs exactly two coordinates");
    }
    std::vector<double> periods(base.size(), 1.0);
    if (const Entry* e = sec.find("periods")) {
      auto ps = split_top(e->value, ',');
      if (ps.size() != base.size()) fail(*e, "dimension mismatch: one period per base coordinate");
      for (std::size_t i = 0; i < ps.size(); ++i) {
        auto v = to_double(ps[i].text);
        if (!v || *v <= 0) fail(*e, "period must be a positive number", ps[i].offset);
        periods[i] = *v;
      }
    }
    double radius = 1.0;
    if (const Entry* e = sec.find("radius")) radius = number(*e);
    int orientation = 1;
    if (const Entry* e = sec.find("orientation")) {
      orientation = integer(*e);
      if (orientation != 1 && orientation != -1) fail(*e, "orientation must be +1 or -1");
    }
    std::vector<std::string> names = base;
    names.insert(names.end(), fib.begin(), fib.end());
    std::vector<std::optional<double>> per(periods.begin(), periods.end());
    per.resize(names.size());
    Chart total(names, per);
    std::vector<FlatDiskBundle::Lift> lifts(base.size(), {Expr(0.0), Expr(0.0)});
    for (const auto& e : sec.entries) {
      if (e.key == "base" || e.key == "fiber" || e.key == "periods" || e.key == "radius" || e.key == "orientation") continue;
      if (e.key.rfind("lift.", 0) != 0) {
        error(e.line, e.key_column, "unknown key '" + e.key + "' in [bundle]");
        continue;
      }
      std::string s = e.key.substr(5);
      auto it = std::find(base.begin(), base.end(), s);
      if (it == base.end()) {
        error(e.line, e.key_column, "unknown identifier '" + s + "'");
        continue;
      }
      auto ps = split_top(e.value, ',');
      if (ps.size() != 2) fail(e, "a lift needs two components: a, b");
      lifts[static_cast<std::size_t>(it - base.begin())] = {expression(e, ps[0], total), expression(e, ps[1], total)};
    }
    FlatDiskBundle b(base, periods, radius, lifts, orientation, fib);
    s_.charts.emplace(sec.name, b.total());
    s_.bundles.emplace(sec.name, std::move(b));
  }

  void germ(const Section& sec) {
    require_name(sec);
    GermSpec g;
    g.name = sec.name;
    g.line = sec.line;
    const Entry& kind = need(sec, "kind");
    g.kind = kind.value;
    if (g.kind == "nonsingular") {
      allow(sec, {"kind", "form", "field"});
      const Entry& f = need(sec, "form");
      const Entry& l = need(sec, "field");
      auto fi = s_.forms.find(f.value);
      if (fi == s_.forms.end()) fail(f, "unknown identifier '" + f.value + "'");
      auto li = s_.fields.find(l.value);
      if (li == s_.fields.end()) fail(l, "unknown identifier '" + l.value + "'");
      if (fi->second.degree() != 1) fail(f, "'" + f.value + "' must be a 1-form");
      if (li->second.chart() != fi->second.chart()) fail(l, "'" + l.value + "' lives on a different chart than '" + f.value + "'");
      g.form = f.value;
      g.field = l.value;
      g.n = fi->second.chart().dim() - 1;
    } else if (g.kind == "singular") {
      allow(sec, {"kind", "form", "bundle"});
      const Entry& b = need(sec, "bundle");
      const Entry& f = need(sec, "form");
      auto bi = s_.bundles.find(b.value);
      if (bi == s_.bundles.end()) fail(b, "unknown identifier '" + b.value + "'");
      auto fi = s_.forms.find(f.value);
      if (fi == s_.forms.end()) fail(f, "unknown identifier '" + f.value + "'");
      if (fi->second.chart() != bi->second.total()) fail(f, "'" + f.value + "' must live on bundle '" + b.value + "'");
      g.bundle = b.value;
      g.form = f.value;
      g.n = bi->second.base_dim() + 1;
    } else if (g.kind == "standard") {
      allow(sec, {"kind", "n"});
      g.n = integer(need(sec, "n"));
      if (g.n < 1 || g.n > 4) fail(*sec.find("n"), "n must be in 1..4");
    } else {
      fail(kind, "unknown germ kind '" + g.kind + "' (nonsingular, singular, standard)");
    }
    s_.germs.emplace(sec.name, g);
  }

  void check(const Section& sec) {
    CheckSpec c;
    c.line = sec.line;
    const Entry& op = need(sec, "op");
    const OpSpec* spec = find_op(op.value);
    if (!spec) fail(op, "unknown check '" + op.value + "'");
    c.op = op.value;
    c.label = sec.name.empty() ? op.value : sec.name;
    for (const auto& e : sec.entries) {
      bool known = std::find(common_check_keys().begin(), common_check_keys().end(), e.key) != common_check_keys().end() ||
                   std::find(spec->required.begin(), spec->required.end(), e.key) != spec->required.end() ||
                   std::find(spec->optional.begin(), spec->optional.end(), e.key) != spec->optional.end();
      if (!known) error(e.line, e.key_column, "unknown key '" + e.key + "' for check '" + c.op + "'");
      c.params.emplace(e.key, e);
    }
    for (const auto& r : spec->required)
      if (!sec.find(r)) error(sec.line, 1, "check '" + c.op + "' needs '" + r + "'");
    auto ref = [&](const char* key, auto& table) {
      if (const Entry* e = sec.find(key))
        if (!table.count(e->value)) error(*e, "unknown identifier '" + e->value + "'");
    };
    ref("graph", s_.graphs);
    ref("bundle", s_.bundles);
    ref("form", s_.forms);
    ref("expected", s_.forms);
    ref("germ", s_.germs);
    ref("other", s_.germs);
    if (const Entry* e = sec.find("expect"))
      if (e->value != "pass" && e->value != "fail") error(*e, "expect must be 'pass' or 'fail'");
    for (const char* key : {"samples", "clusters", "dimension", "t_samples", "seed"})
      if (const Entry* e = sec.find(key))
        if (!to_int(e->value)) error(*e, "expected an integer, got '" + e->value + "'");
    for (const char* key : {"box", "tol", "value", "delta", "window", "step", "ode_tol", "radius", "rotation"})
      if (const Entry* e = sec.find(key))
        if (!to_double(e->value)) error(*e, "expected a number, got '" + e->value + "'");
    if (const Entry* e = sec.find("perturbation")) {
      if (const Entry* g = sec.find("graph")) {
        auto gi = s_.graphs.find(g->value);
        if (gi != s_.graphs.end()) expression(*e, Piece{e->value, 0}, gi->second.source());
      }
    }
    s_.checks.push_back(std::move(c));
  }

  Scenario& s_;
  std::vector<Diagnostic> diags_;
  std::set<std::string> declared_;
  std::optional<int> header_n_, header_k_;
};

}  // namespace detail

inline const std::vector<std::string>& section_kinds() {
  static const std::vector<std::string> k{"chart", "field", "form", "graph", "bundle", "germ", "check"};
  return k;
}

/// Throws ScenarioError listing every problem found.
inline Scenario parse_scenario(std::string_view text) {
  Scenario s;
  std::vector<Diagnostic> diags;
  Section* current = nullptr;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    std::string_view t = detail::trim(raw);
    if (t.empty()) {
      if (end == text.size()) break;
      continue;
    }
    int indent = static_cast<int>(raw.find_first_not_of(" \t"));
    if (t.front() == '[') {
      if (t.back() != ']') {
        diags.push_back({line_no, indent + 1, "expected ']' to close the section header"});
        current = nullptr;
        continue;
      }
      std::string_view inner = detail::trim(t.substr(1, t.size() - 2));
      std::string_view kind = inner.substr(0, inner.find_first_of(" \t"));
      std::string_view name = kind.size() < inner.size() ? detail::trim(inner.substr(kind.size())) : std::string_view{};
      if (std::find(section_kinds().begin(), section_kinds().end(), kind) == section_kinds().end()) {
        diags.push_back({line_no, indent + 2, "unknown section '" + std::string(kind) + "'"});
        current = nullptr;
        continue;
      }
      if (!name.empty() && !detail::is_identifier(name)) {
        diags.push_back({line_no, indent + 2, "bad section name '" + std::string(name) + "'"});
        current = nullptr;
        continue;
      }
      s.sections.push_back({std::string(kind), std::string(name), line_no, {}});
      current = &s.sections.back();
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      diags.push_back({line_no, indent + 1, "expected 'key = value'"});
      continue;
    }
    std::string_view key = detail::trim(t.substr(0, eq));
    std::string_view rest = t.substr(eq + 1);
    std::string_view value = detail::trim(rest);
    int value_col = indent + static_cast<int>(eq) + 2 + static_cast<int>(rest.find_first_not_of(" \t") == std::string_view::npos ? 0 : rest.find_first_not_of(" \t"));
    if (!detail::is_identifier(key)) {
      diags.push_back({line_no, indent + 1, "bad key '" + std::string(key) + "'"});
      continue;
    }
    if (value.empty()) {
      diags.push_back({line_no, value_col, "missing value for '" + std::string(key) + "'"});
      continue;
    }
    Entry e{std::string(key), std::string(value), line_no, indent + 1, value_col};
    auto& list = current ? current->entries : s.header;
    bool dup = false;
    for (const auto& o : list) dup = dup || o.key == e.key;
    if (dup) {
      diags.push_back({line_no, indent + 1, "duplicate key '" + e.key + "'"});
      continue;
    }
    list.push_back(std::move(e));
  }
  if (diags.empty()) {
    detail::Resolver r(s);
    r.run();
    diags = r.diagnostics();
    if (s.name.empty() && diags.empty()) diags.push_back({1, 1, "scenario needs a 'name'"});
  }
  if (!diags.empty()) {
    std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
      return std::pair(a.line, a.column) < std::pair(b.line, b.column);
    });
    throw ScenarioError(std::move(diags));
  }
  return s;
}

/// Canonical text; parse_scenario(serialize(s)) == s.
inline std::string serialize(const Scenario& s) {
  std::string out;
  for (const auto& e : s.header) out += e.key + " = " + e.value + "\n";
  for (const auto& sec : s.sections) {
    out += "\n[" + sec.kind + (sec.name.empty() ? "" : " " + sec.name) + "]\n";
    for (const auto& e : sec.entries) out += e.key + " = " + e.value + "\n";
  }
  return out;
}

}  // namespace legfol

#endif  // LEGFOL_SCENARIO_HPP_
