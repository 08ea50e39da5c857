#ifndef LEGFOL_RUNNER_HPP_
#define LEGFOL_RUNNER_HPP_

// Executes the checks of a Scenario and assembles the JSON report.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "legfol/germ.hpp"
#include "legfol/scenario.hpp"

namespace legfol {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchema = 1;

using Json = nlohmann::ordered_json;

struct RunOptions {
  std::optional<double> tol;
  std::optional<int> samples;
  std::optional<std::uint64_t> seed;
};

struct CheckRecord {
  std::string check, op, anchor, target, measure, comparison = "<=";
  std::optional<double> value;
  double tol = 0.0;
  bool passed = false;
  std::string expected = "pass";
  bool ok = false;
  bool informational = false;
  std::size_t samples = 0;
  double wall_time = 0.0;
  Json details = Json::object();
  std::string error;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<CheckRecord> records;
  bool passed = true;
  double wall_time = 0.0;
};

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json to_json(const CheckRecord& r, bool timing = true) {
  Json j;
  j["check"] = r.check;
  j["op"] = r.op;
  j["anchor"] = r.anchor;
  j["target"] = r.target;
  j["measure"] = r.measure;
  j["value"] = r.value && std::isfinite(*r.value) ? Json(*r.value) : Json(nullptr);
  j["tol"] = r.tol;
  j["comparison"] = r.comparison;
  j["passed"] = r.passed;
  j["expected"] = r.expected;
  j["ok"] = r.ok;
  j["informational"] = r.informational;
  j["samples"] = r.samples;
  if (timing) j["wall_time"] = r.wall_time;
  j["details"] = r.details;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

/// `timing = false` drops the wall-time fields.
inline Json to_json(const Report& r, bool timing = true) {
  Json j;
  j["schema"] = kSchema;
  j["toolkit"] = "legfol";
  j["version"] = kVersion;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["passed"] = r.passed;
  if (timing) j["wall_time"] = r.wall_time;
  Json checks = Json::array();
  for (const auto& c : r.records) checks.push_back(to_json(c, timing));
  j["checks"] = std::move(checks);
  return j;
}

namespace detail {

inline std::vector<double> numbers(std::string_view text, char sep = ',') {
  std::vector<double> out;
  for (const auto& p : split_top(text, sep)) {
    auto v = to_double(p.text);
    if (!v) throw Error("expected a number, got '" + p.text + "'");
    out.push_back(*v);
  }
  return out;
}

inline Vec vec(std::string_view text) {
  auto v = numbers(text);
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Semicolon-separated points.
inline std::vector<Vec> points(std::string_view text) {
  std::vector<Vec> out;
  for (const auto& p : split_top(text, ';')) out.push_back(vec(p.text));
  return out;
}

/// d/dtau of the transported fiber form at tau = 0: the covariant
/// derivative recomputed from parallel transport alone.
inline Vec transport_pullback_derivative(const FlatDiskBundle& e, const DiffForm& beta, int j, const Vec& s,
                                         const Vec& x) {
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

class Runner {
 public:
  Runner(const Scenario& s, const RunOptions& o) : s_(s), o_(o) {}

  Report run() {
    auto t0 = std::chrono::steady_clock::now();
    Report rep;
    rep.scenario = s_.name;
    rep.seed = o_.seed.value_or(s_.seed);
    for (std::size_t i = 0; i < s_.checks.size(); ++i) {
      auto r = run_check(s_.checks[i], rep.seed + 1000 * (i + 1));
      if (!r.informational && !r.ok) rep.passed = false;
      rep.records.push_back(std::move(r));
    }
    rep.wall_time = seconds_since(t0);
    return rep;
  }

 private:
  struct Ctx {
    const CheckSpec& c;
    std::uint64_t seed;
    CheckRecord& r;

    const Entry* get(const std::string& key) const { return c.param(key); }
    std::string str(const std::string& key) const {
      const Entry* e = get(key);
      if (!e) throw Error("missing parameter '" + key + "'");
      return e->value;
    }
    double num(const std::string& key, double fallback) const {
      const Entry* e = get(key);
      return e ? *to_double(e->value) : fallback;
    }
    int integer(const std::string& key, int fallback) const {
      const Entry* e = get(key);
      return e ? static_cast<int>(*to_int(e->value)) : fallback;
    }
  };

  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  int samples(const Ctx& x, int fallback) const {
    if (o_.samples) return *o_.samples;
    return x.integer("samples", fallback);
  }
  double tol(const Ctx& x, double fallback) const {
    if (o_.tol) return *o_.tol;
    return x.num("tol", fallback);
  }
  std::vector<Vec> box_samples(const Ctx& x, int dim, int count, double half = 1.0) const {
    return uniform_samples(Box::cube(dim, x.num("box", half)), count, x.seed);
  }

  const GraphSubmanifold& graph(const Ctx& x) const { return s_.graphs.at(x.str("graph")); }
  const FlatDiskBundle& bundle(const Ctx& x) const { return s_.bundles.at(x.str("bundle")); }
  const DiffForm& form(const std::string& name) const { return s_.forms.at(name); }

  /// Fiber points of the bundle inside 0.7 of the disk.
  std::vector<Vec> disk_points(const FlatDiskBundle& e, int count, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<Vec> out;
    const double r = 0.7 * e.radius();
    while (static_cast<int>(out.size()) < count) {
      Vec p(2);
      p << rng.uniform(-r, r), rng.uniform(-r, r);
      if (p.norm() <= r) out.push_back(p);
    }
    return out;
  }
  std::vector<Vec> total_points(const FlatDiskBundle& e, int count, std::uint64_t seed) const {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    auto fib = disk_points(e, count, seed);
    std::vector<Vec> out;
    for (const auto& f : fib) {
      Vec s(e.base_dim());
      for (int j = 0; j < e.base_dim(); ++j) s[j] = rng.uniform(0.0, e.period(j));
      out.push_back(e.point(s, f));
    }
    return out;
  }

  const GermForm& germ(const std::string& name) {
    auto it = built_.find(name);
    if (it != built_.end()) return it->second;
    const GermSpec& g = s_.germs.at(name);
    GermForm out;
    if (g.kind == "standard") {
      out = standard_germ(g.n);
    } else if (g.kind == "nonsingular") {
      FoliatedInput in = foliated_input(g);
      out = build_nonsingular_germ(in, uniform_samples(Box::cube(in.chart.dim(), 0.5), 100, s_.seed));
    } else {
      out = build_singular_germ(s_.bundles.at(g.bundle), form(g.form));
    }
    return built_.emplace(name, std::move(out)).first->second;
  }
  FoliatedInput foliated_input(const GermSpec& g) const {
    const DiffForm& b = form(g.form);
    return {b.chart(), b, s_.fields.at(g.field)};
  }

  CheckRecord run_check(const CheckSpec& c, std::uint64_t seed) {
    CheckRecord r;
    r.check = c.label;
    r.op = c.op;
    r.anchor = find_op(c.op)->anchor;
    if (const Entry* e = c.param("expect")) r.expected = e->value;
    if (const Entry* e = c.param("informational")) r.informational = e->value == "true" || e->value == "yes";
    if (const Entry* e = c.param("seed")) seed = static_cast<std::uint64_t>(*to_int(e->value));
    for (const char* key : {"graph", "bundle", "form", "germ"})
      if (const Entry* e = c.param(key)) r.target += (r.target.empty() ? "" : ", ") + e->value;
    Ctx x{c, seed, r};
    auto t0 = std::chrono::steady_clock::now();
    try {
      dispatch(x);
    } catch (const std::exception& e) {
      r.passed = false;
      r.value.reset();
      r.error = e.what();
    }
    r.wall_time = seconds_since(t0);
    if (r.value && !std::isfinite(*r.value) && r.error.empty()) {
      r.passed = false;
      r.error = "non-finite residual";
    }
    r.ok = r.passed == (r.expected == "pass");
    if (r.details.contains("expected_failures")) {
      // A designed violation must fail exactly the named conditions.
      std::set<std::string> got(r.details["failed_conditions"].begin(), r.details["failed_conditions"].end());
      std::set<std::string> want(r.details["expected_failures"].begin(), r.details["expected_failures"].end());
      r.ok = r.ok && got == want;
    }
    return r;
  }

  void finish(Ctx& x, std::string measure, double value, double tol, std::string cmp = "<=") {
    x.r.measure = std::move(measure);
    x.r.value = value;
    x.r.tol = tol;
    x.r.comparison = cmp;
    if (cmp == "<=") x.r.passed = value <= tol;
    else if (cmp == ">") x.r.passed = value > tol;
    else x.r.passed = std::abs(value - tol) == 0.0;
  }

  void dispatch(Ctx& x) {
    static const std::map<std::string, void (Runner::*)(Ctx&)> table{
        {"claim", &Runner::claim},
        {"residuals", &Runner::residuals},
        {"residual_at", &Runner::residual_at},
        {"oracle_agreement", &Runner::oracle_agreement},
        {"foliation", &Runner::foliation},
        {"singular_scan", &Runner::singular},
        {"perturb", &Runner::perturb},
        {"char_foliation", &Runner::char_foliation},
        {"flat_structure", &Runner::flat_structure},
        {"flatness", &Runner::flatness},
        {"transport", &Runner::transport},
        {"functoriality", &Runner::functoriality},
        {"contractible_loop", &Runner::contractible_loop},
        {"holonomy", &Runner::holonomy_op},
        {"covariant_derivative", &Runner::covariant},
        {"ccl", &Runner::ccl},
        {"frobenius", &Runner::frobenius},
        {"contactness", &Runner::contactness},
        {"volume_identity", &Runner::volume_identity},
        {"zero_section", &Runner::zero_section},
        {"interpolation", &Runner::interpolation},
    };
    (this->*table.at(x.c.op))(x);
  }

  // -- graph checks ---------------------------------------------------------

  void claim(Ctx& x) {
    const auto& y = graph(x);
    auto pts = box_samples(x, y.k(), samples(x, 200));
    x.r.samples = pts.size();
    auto rep = verify_claim(y, pts);
    if (rep.refused) {
      x.r.details["reason"] = rep.reason;
      x.r.details["offending_points"] = rep.diagnostics.size();
      finish(x, "coisotropy residual", rep.diagnostics.front().second, 1e-8);
      x.r.passed = false;
      return;
    }
    x.r.details["i_V_alpha"] = rep.i_v_alpha;
    x.r.details["i_V_dlambda"] = rep.i_v_dlambda;
    x.r.details["bracket"] = rep.bracket;
    x.r.details["lie_lambda"] = rep.lie_lambda;
    x.r.details["Lambda_ab"] = rep.lambda_identity;
    finish(x, "max claim residual", rep.max_residual(), tol(x, 1e-10));
  }

  void residuals(Ctx& x) {
    const auto& y = graph(x);
    CoisotropyEquations eqs(y);
    auto pts = box_samples(x, y.k(), samples(x, 200));
    x.r.samples = pts.size();
    double m = 0.0, l = 0.0;
    for (const auto& p : pts) {
      auto v = evaluate_residuals(eqs, p);
      m = std::max(m, v.max_residual());
      l = std::max(l, v.max_lambda());
    }
    x.r.details["equations"] = eqs.equations().size();
    x.r.details["max_equation"] = m;
    x.r.details["max_Lambda"] = l;
    finish(x, "max foliation residual", std::max(m, l), tol(x, 1e-10));
  }

  void residual_at(Ctx& x) {
    const auto& y = graph(x);
    std::string fam = x.str("family");
    std::optional<ResidualEquation::Family> family;
    for (auto f : {ResidualEquation::TripleX, ResidualEquation::PairXn, ResidualEquation::PairYn,
                   ResidualEquation::Single, ResidualEquation::Lambda})
      if (to_string(f) == fam) family = f;
    if (!family) throw Error("unknown residual family '" + fam + "'");
    std::array<int, 3> idx{};
    auto iv = numbers(x.str("indices"));
    if (iv.size() > 3) throw Error("at most three indices");
    for (std::size_t i = 0; i < iv.size(); ++i) idx[i] = static_cast<int>(iv[i]);
    Vec p = vec(x.str("point"));
    if (p.size() != y.k()) throw Error("dimension mismatch: point needs " + std::to_string(y.k()) + " coordinates");
    auto v = coisotropy_residuals(y, p).value(*family, idx);
    if (!v) throw Error("no equation " + fam + " with these indices");
    double want = *to_double(x.str("value"));
    x.r.samples = 1;
    x.r.details["residual"] = *v;
    x.r.details["expected"] = want;
    finish(x, "|residual - expected|", std::abs(*v - want), tol(x, 1e-10));
  }

  void oracle_agreement(Ctx& x) {
    const auto& y = graph(x);
    CoisotropyEquations eqs(y);
    auto pts = box_samples(x, y.k(), samples(x, 100));
    x.r.samples = pts.size();
    std::size_t mismatches = 0, positive = 0, singular = 0;
    for (const auto& p : pts) {
      bool by_eqs = evaluate_residuals(eqs, p).max_residual() <= 1e-8;
      auto pc = pointwise_coisotropy(y, p);
      positive += by_eqs;
      singular += pc.singular;
      if (by_eqs != pc.coisotropic()) ++mismatches;
    }
    x.r.details["coisotropic_points"] = positive;
    x.r.details["non_coisotropic_points"] = pts.size() - positive;
    x.r.details["singular_points"] = singular;
    finish(x, "disagreements", static_cast<double>(mismatches), 0.0);
  }

  void foliation(Ctx& x) {
    const auto& y = graph(x);
    auto pts = box_samples(x, y.k(), samples(x, 200));
    x.r.samples = pts.size();
    finish(x, "max alpha^d alpha on Y", foliation_residual(y, pts), tol(x, 1e-10));
  }

  void singular(Ctx& x) {
    const auto& y = graph(x);
    Grid g{Box::cube(y.k(), x.num("box", 1.0)), x.num("step", 0.05)};
    auto res = singular_scan(y, g, tol(x, 1e-6));
    x.r.samples = res.scan.points_scanned;
    Json clusters = Json::array();
    for (std::size_t i = 0; i < res.scan.clusters.size(); ++i) {
      const auto& c = res.scan.clusters[i];
      clusters.push_back({{"size", c.size}, {"dimension", c.dimension}, {"flag", to_string(res.flags[i])},
                          {"centroid", to_json(c.centroid)}});
    }
    x.r.details["hits"] = res.scan.hits.size();
    x.r.details["clusters"] = clusters;
    double mismatches = 0;
    Json expected = Json::object();
    if (x.get("clusters")) {
      int want = x.integer("clusters", 0);
      expected["clusters"] = want;
      mismatches += static_cast<int>(res.scan.clusters.size()) != want;
    }
    if (x.get("dimension")) {
      int want = x.integer("dimension", 0);
      expected["dimension"] = want;
      for (const auto& c : res.scan.clusters) mismatches += c.dimension != want;
    }
    if (x.get("flag")) {
      std::string want = x.str("flag");
      expected["flag"] = want;
      for (auto f : res.flags) mismatches += to_string(f) != want;
    }
    x.r.details["expected"] = expected;
    finish(x, "mismatched expectations", mismatches, 0.0);
  }

  void perturb(Ctx& x) {
    const auto& y = graph(x);
    Expr bump = parse_expr(x.str("perturbation"), y.source());
    double delta = x.num("delta", 1.0);
    auto pts = box_samples(x, y.k(), samples(x, 200));
    x.r.samples = pts.size();
    auto res = perturb_legendrian(y, bump, delta, pts);
    Grid g{Box::cube(y.k(), x.num("window", 0.2)), x.num("step", 0.05)};
    auto scan = singular_scan(res.graph, g);
    auto before = singular_scan(y, g);
    double fol = foliation_residual(res.graph, pts);
    x.r.details["hits_before"] = before.scan.hits.size();
    x.r.details["hits_after"] = scan.scan.hits.size();
    x.r.details["sup_norm"] = res.sup_norm;
    x.r.details["delta"] = delta;
    x.r.details["slope_at_origin"] = res.slope_at_origin;
    x.r.details["foliation_residual"] = fol;
    finish(x, "alpha^d alpha residual after perturbation", fol, tol(x, 1e-10));
    x.r.passed = x.r.passed && scan.scan.hits.empty();
  }

  void char_foliation(Ctx& x) {
    const auto& y = graph(x);
    auto pts = box_samples(x, y.k(), samples(x, 100));
    x.r.samples = pts.size();
    auto rep = char_foliation_form(y, pts);
    x.r.details["expected_kernel_dim"] = rep.expected_kernel_dim;
    x.r.details["min_kernel_dim"] = rep.min_kernel_dim;
    x.r.details["max_kernel_dim"] = rep.max_kernel_dim;
    x.r.details["nonsingular_samples"] = rep.nonsingular_samples;
    x.r.details["singular_samples"] = rep.singular_samples;
    x.r.details["on_distribution"] = rep.on_distribution;
    x.r.details["involutivity"] = rep.involutivity;
    x.r.details["raw_restriction"] = rep.raw_restriction;
    finish(x, "integrability residual", rep.integrability_residual(), tol(x, 1e-8));
    bool dims = rep.nonsingular_samples == 0 ||
                (rep.min_kernel_dim == rep.expected_kernel_dim && rep.max_kernel_dim == rep.expected_kernel_dim);
    x.r.passed = x.r.passed && dims;
  }

  void flat_structure(Ctx& x) {
    const auto& y = graph(x);
    auto pts = box_samples(x, y.k(), samples(x, 30), 0.5);
    pts.push_back(Vec::Zero(y.k()));
    x.r.samples = pts.size();
    auto rep = extract_flat_structure(y, pts);
    x.r.details["rank"] = rep.rank;
    x.r.details["integrability"] = rep.integrability;
    x.r.details["covariant_constancy"] = rep.covariant_constancy;
    x.r.details["singular_samples"] = rep.singular_samples;
    finish(x, "max(integrability, covariant constancy)", std::max(rep.integrability, rep.covariant_constancy),
           tol(x, 1e-8));
    x.r.passed = x.r.passed && rep.rank == 2;
  }

  // -- bundle checks --------------------------------------------------------

  OdeOptions ode(const Ctx& x, double fallback) const { return OdeOptions{x.num("ode_tol", fallback)}; }

  void flatness(Ctx& x) {
    const auto& e = bundle(x);
    auto pts = total_points(e, samples(x, 200), x.seed);
    x.r.samples = pts.size();
    finish(x, "vertical part of [X_i, X_j]", flatness_check(e, pts), tol(x, 1e-10));
  }

  void transport(Ctx& x) {
    const auto& e = bundle(x);
    auto path = points(x.str("path"));
    Vec start = vec(x.str("start")), want = vec(x.str("end"));
    auto res = parallel_transport(e, path, start, ode(x, 1e-10));
    if (want.size() != res.end.size()) throw Error("dimension mismatch: end needs two coordinates");
    x.r.samples = 1;
    x.r.details["end"] = to_json(res.end);
    x.r.details["escaped"] = res.escaped;
    x.r.details["steps"] = res.stats.steps;
    finish(x, "|end - expected|", (res.end - want).norm(), tol(x, 1e-6));
    x.r.passed = x.r.passed && !res.escaped;
  }

  std::vector<Vec> random_path(const FlatDiskBundle& e, Rng& rng, const Vec& from, int segments) const {
    std::vector<Vec> p{from};
    for (int i = 0; i < segments; ++i) {
      Vec d(e.base_dim());
      for (int j = 0; j < e.base_dim(); ++j) d[j] = rng.uniform(-0.5, 0.5) * e.period(j);
      p.push_back(p.back() + d);
    }
    return p;
  }

  void functoriality(Ctx& x) {
    const auto& e = bundle(x);
    auto opt = ode(x, 1e-8);
    int count = samples(x, 20);
    auto fib = disk_points(e, count, x.seed);
    Rng rng(x.seed + 17);
    double comp = 0.0, inv = 0.0;
    std::size_t escaped = 0;
    for (const auto& f : fib) {
      Vec s0(e.base_dim());
      for (int j = 0; j < e.base_dim(); ++j) s0[j] = rng.uniform(0.0, e.period(j));
      auto g1 = random_path(e, rng, s0, 2);
      auto g2 = random_path(e, rng, g1.back(), 2);
      std::vector<Vec> joined = g1;
      joined.insert(joined.end(), g2.begin() + 1, g2.end());
      auto a = parallel_transport(e, g1, f, opt);
      if (a.escaped) {
        ++escaped;
        continue;
      }
      auto b = parallel_transport(e, g2, a.end, opt);
      auto ab = parallel_transport(e, joined, f, opt);
      auto back = parallel_transport(e, reversed(g1), a.end, opt);
      if (b.escaped || ab.escaped || back.escaped) {
        ++escaped;
        continue;
      }
      comp = std::max(comp, (ab.end - b.end).norm());
      inv = std::max(inv, (back.end - f).norm());
    }
    x.r.samples = fib.size();
    x.r.details["composition"] = comp;
    x.r.details["inverse"] = inv;
    x.r.details["escaped"] = escaped;
    x.r.details["ode_tol"] = opt.tol;
    finish(x, "max transport defect", std::max(comp, inv), tol(x, 2 * opt.tol));
  }

  void contractible_loop(Ctx& x) {
    const auto& e = bundle(x);
    auto opt = ode(x, 1e-10);
    auto fib = disk_points(e, samples(x, 20), x.seed);
    Rng rng(x.seed + 29);
    double worst = 0.0;
    std::size_t escaped = 0;
    for (const auto& f : fib) {
      Vec s0(e.base_dim());
      for (int j = 0; j < e.base_dim(); ++j) s0[j] = rng.uniform(0.0, e.period(j));
      // Rectangle in the first two base directions, or out-and-back on a circle.
      std::vector<Vec> loop{s0};
      Vec a = Vec::Zero(e.base_dim()), b = Vec::Zero(e.base_dim());
      a[0] = rng.uniform(0.1, 0.9) * e.period(0);
      if (e.base_dim() > 1) b[1] = rng.uniform(0.1, 0.9) * e.period(1);
      loop.push_back(s0 + a);
      if (e.base_dim() > 1) {
        loop.push_back(s0 + a + b);
        loop.push_back(s0 + b);
      }
      loop.push_back(s0);
      auto res = parallel_transport(e, loop, f, opt);
      if (res.escaped) {
        ++escaped;
        continue;
      }
      worst = std::max(worst, (res.end - f).norm());
    }
    x.r.samples = fib.size();
    x.r.details["escaped"] = escaped;
    finish(x, "max |hol(loop)(x) - x|", worst, tol(x, 1e-7));
  }

  void holonomy_op(Ctx& x) {
    const auto& e = bundle(x);
    int j = x.integer("generator", 1) - 1;
    auto pts = disk_points(e, samples(x, 20), x.seed);
    auto h = holonomy(e, j, pts, ode(x, 1e-10));
    x.r.samples = pts.size();
    double rot = 0.0;
    if (x.get("rotation")) {
      double c = x.num("rotation", 0.0);
      Mat r(2, 2);
      r << std::cos(c), -std::sin(c), std::sin(c), std::cos(c);
      for (const auto& s : h.samples)
        if (!s.escaped) rot = std::max(rot, (s.image - r * s.point).norm());
      x.r.details["rotation_error"] = rot;
    }
    std::size_t escaped = 0;
    double min_det = std::numeric_limits<double>::infinity();
    for (const auto& s : h.samples) {
      escaped += s.escaped;
      if (!s.escaped) min_det = std::min(min_det, s.det);
    }
    x.r.details["origin_drift"] = h.origin_drift();
    x.r.details["orientation_preserving"] = h.orientation_preserving();
    x.r.details["min_det"] = std::isfinite(min_det) ? Json(min_det) : Json(nullptr);
    x.r.details["escaped"] = escaped;
    finish(x, "max(origin drift, rotation error)", std::max(h.origin_drift(), rot), tol(x, 1e-6));
    x.r.passed = x.r.passed && h.orientation_preserving();
  }

  void covariant(Ctx& x) {
    const auto& e = bundle(x);
    const DiffForm& beta = form(x.str("form"));
    int j = x.integer("direction", 1) - 1;
    if (j < 0 || j >= e.base_dim()) throw Error("no base direction " + std::to_string(j + 1));
    DiffForm nabla = lie_derivative(e.lift(j), beta);
    auto pts = total_points(e, samples(x, 10), x.seed);
    double worst = 0.0, size = 0.0;
    for (const auto& p : pts) {
      Vec s = p.head(e.base_dim()), f = p.tail(2);
      Vec oracle = transport_pullback_derivative(e, beta, j, s, f);
      Vec sym = nabla.covector(p).tail(2);
      worst = std::max(worst, (oracle - sym).cwiseAbs().maxCoeff());
      size = std::max(size, sym.cwiseAbs().maxCoeff());
    }
    x.r.samples = pts.size();
    x.r.details["max_covariant_derivative"] = size;
    finish(x, "|symbolic - transport oracle|", worst, tol(x, 1e-4));
  }

  void ccl(Ctx& x) {
    const auto& e = bundle(x);
    CclOptions opt;
    if (o_.tol) opt.invariance_tol = *o_.tol;
    else if (x.get("tol")) opt.invariance_tol = x.num("tol", opt.invariance_tol);
    auto rep = ccl_check(e, form(x.str("form")), opt);
    x.r.samples = static_cast<std::size_t>((opt.fiber_steps + 1) * (opt.fiber_steps + 1));
    x.r.details["beta_at_origin"] = rep.beta_at_origin;
    x.r.details["zero_hits_away"] = rep.zero_hits_away;
    x.r.details["min_beta_away"] = rep.min_beta_away;
    x.r.details["min_dbeta"] = rep.min_dbeta;
    x.r.details["invariance_residual"] = rep.invariance_residual;
    x.r.details["holonomy_escapes"] = rep.holonomy_escapes;
    Json failed = Json::array();
    for (const auto& f : rep.failures()) failed.push_back(f);
    x.r.details["failed_conditions"] = failed;
    x.r.details["invariance_tol"] = opt.invariance_tol;
    finish(x, "failed CCL conditions", static_cast<double>(rep.failures().size()), 0.0);
    if (const Entry* want = x.get("fails")) {
      std::set<std::string> w;
      for (const auto& p : split_top(want->value, ',')) w.insert(p.text);
      x.r.details["expected_failures"] = Json(std::vector<std::string>(w.begin(), w.end()));
    }
  }

  // -- form and germ checks -------------------------------------------------

  void frobenius(Ctx& x) {
    const DiffForm& b = form(x.str("form"));
    auto pts = box_samples(x, b.chart().dim(), samples(x, 200));
    x.r.samples = pts.size();
    finish(x, "max |beta ^ d beta|", frobenius_residual(b, pts), tol(x, 1e-10));
  }

  std::vector<Vec> germ_points(const Ctx& x, const GermForm& g, int count) {
    auto base = uniform_samples(Box::cube(g.zero_chart().dim(), x.num("box", 0.5)), count, x.seed);
    return neighborhood_points(g, base, x.num("radius", 0.3), x.seed + 1);
  }

  void contactness(Ctx& x) {
    const auto& g = germ(x.str("germ"));
    auto pts = germ_points(x, g, samples(x, 200));
    auto rep = contactness_scan(g, pts);
    x.r.samples = rep.samples;
    x.r.details["min_abs"] = rep.min_abs;
    x.r.details["max_abs"] = rep.max_abs;
    x.r.details["sign"] = rep.sign;
    x.r.details["sign_consistent"] = rep.sign_consistent;
    x.r.details["worst"] = to_json(rep.worst);
    finish(x, "min |alpha ^ (d alpha)^n|", rep.min_abs, kContactThreshold, ">");
    x.r.passed = rep.passed();
  }

  void volume_identity(Ctx& x) {
    const GermSpec& spec = s_.germs.at(x.str("germ"));
    if (spec.kind != "nonsingular") throw Error("volume identity needs a nonsingular germ");
    const auto& g = germ(spec.name);
    Expr f = form(spec.form).coeff(1u);
    auto pts = germ_points(x, g, samples(x, 200));
    double fact = std::tgamma(g.n + 1.0), worst = 0.0, min_f = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
      double fv = f.eval(p.head(g.n + 1));
      min_f = std::min(min_f, fv);
      worst = std::max(worst, std::abs(g.top_value(p) - fact * fv) / std::max(1.0, fact * std::abs(fv)));
    }
    x.r.samples = pts.size();
    x.r.details["n_factorial"] = fact;
    x.r.details["min_f"] = min_f;
    finish(x, "|top - n! f| / max(1, n! |f|)", worst, tol(x, 1e-10));
  }

  void zero_section(Ctx& x) {
    const GermSpec& spec = s_.germs.at(x.str("germ"));
    const auto& g = germ(spec.name);
    auto pts = uniform_samples(Box::cube(g.zero_chart().dim(), x.num("box", 0.5)), samples(x, 200), x.seed);
    std::optional<Grid> grid;
    if (x.get("step")) grid = Grid{Box::cube(g.zero_chart().dim(), x.num("box", 0.5)), x.num("step", 0.1)};
    ZeroSectionReport rep;
    if (x.get("expected")) rep = zero_section_foliation_check(g, form(x.str("expected")), pts, grid);
    else if (spec.kind == "nonsingular") rep = zero_section_foliation_check(g, foliated_input(spec), pts, grid);
    else if (spec.kind == "singular")
      rep = zero_section_foliation_check(g, s_.bundles.at(spec.bundle), form(spec.form), pts, grid);
    else throw Error("zero_section needs 'expected' for a standard germ");
    x.r.samples = pts.size();
    x.r.details["kernel_mismatches"] = rep.kernel_mismatches;
    x.r.details["singular_mismatches"] = rep.singular_mismatches;
    x.r.details["nonsingular_samples"] = rep.nonsingular_samples;
    if (rep.scan) x.r.details["singular_hits"] = rep.scan->hits.size();
    finish(x, "restriction residual", rep.restriction_residual, rep.tol);
    x.r.passed = rep.passed();
  }

  void interpolation(Ctx& x) {
    const auto& g0 = germ(x.str("germ"));
    const auto& g1 = germ(x.str("other"));
    // A grid through 0 so that singular points of the zero section are visited.
    auto zero = Grid{Box::cube(g0.zero_chart().dim(), x.num("box", 0.5)), x.num("step", 0.25)}.points();
    auto extra = neighborhood_points(g0, zero, x.num("radius", 0.05), x.seed + 1);
    auto rep = interpolation_contactness(g0, g1, zero, extra, x.integer("t_samples", 11));
    x.r.samples = zero.size() + extra.size();
    x.r.details["refused"] = rep.refused;
    if (rep.refused) {
      x.r.details["reason"] = rep.reason;
      x.r.measure = "min |alpha_t ^ (d alpha_t)^n|";
      x.r.comparison = ">";
      x.r.tol = kContactThreshold;
      x.r.passed = false;
      return;
    }
    double m = *std::min_element(rep.min_abs.begin(), rep.min_abs.end());
    x.r.details["sign"] = rep.sign;
    x.r.details["sign_consistent"] = rep.sign_consistent;
    x.r.details["min_abs_per_t"] = rep.min_abs;
    finish(x, "min |alpha_t ^ (d alpha_t)^n|", m, kContactThreshold, ">");
    x.r.passed = rep.passed();
  }

  const Scenario& s_;
  RunOptions o_;
  std::map<std::string, GermForm> built_;
};

}  // namespace detail

/// Runs every check in order; failures and errors become records.
inline Report run_scenario(const Scenario& s, const RunOptions& opt = {}) {
  return detail::Runner(s, opt).run();
}

}  // namespace legfol

#endif  // LEGFOL_RUNNER_HPP_
