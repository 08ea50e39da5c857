#include <cstdlib>

#include <gtest/gtest.h>

#include "legfol/bundled_scenarios.hpp"
#include "legfol/runner.hpp"

using namespace legfol;

namespace {

std::vector<Diagnostic> diagnostics(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.diagnostics();
  }
  return {};
}

const char* kMinimal = R"(name = minimal

[chart C]
coords = t, x

[form b]
chart = C
expr = dt

[check]
op = frobenius
form = b
)";

struct ThreadsEnv {
  explicit ThreadsEnv(const char* v) { setenv("LEGFOL_THREADS", v, 1); }
  ~ThreadsEnv() { unsetenv("LEGFOL_THREADS"); }
};

}  // namespace

TEST(ScenarioParse, Minimal) {
  auto s = parse_scenario(kMinimal);
  EXPECT_EQ(s.name, "minimal");
  EXPECT_EQ(s.seed, 0u);
  ASSERT_EQ(s.checks.size(), 1u);
  EXPECT_EQ(s.checks[0].label, "frobenius");
  EXPECT_EQ(s.charts.at("C").dim(), 2);
}

TEST(ScenarioParse, TrailingOperator) {
  auto d = diagnostics("name = t\n[chart C]\ncoords = x1, y1\n[form w]\nchart = C\nexpr = y1*dx1 +\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 6);
  EXPECT_EQ(d[0].column, 15);
  EXPECT_NE(d[0].message.find("'+'"), std::string::npos) << d[0].message;
}

TEST(ScenarioParse, UnknownIdentifier) {
  auto d = diagnostics("name = t\n[chart C]\ncoords = x1, y1\n[form w]\nchart = C\nexpr   =  omega + dx1\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 6);
  EXPECT_EQ(d[0].column, 11);
  EXPECT_EQ(d[0].message, "unknown identifier 'omega'");

  d = diagnostics("name = t\n[check]\nop = frobenius\nform = missing\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].message, "unknown identifier 'missing'");
  EXPECT_EQ(d[0].column, 8);
}

TEST(ScenarioParse, FormsReferenceEarlierForms) {
  auto s = parse_scenario("name = t\n[chart C]\ncoords = x, y\n[form a]\nchart = C\nexpr = x*dy\n"
                          "[form b]\nchart = C\nexpr = 2*a + dx\n");
  Vec p(2);
  p << 2.0, 3.0;
  EXPECT_DOUBLE_EQ(evaluate(s.forms.at("b"), p, {Vec::Unit(2, 1)}), 4.0);
  EXPECT_DOUBLE_EQ(evaluate(s.forms.at("b"), p, {Vec::Unit(2, 0)}), 1.0);
}

TEST(ScenarioParse, Diagnostics) {
  struct Case {
    const char* text;
    int line, column;
    const char* message;
  } cases[] = {
      {"name = t\nname = u\n", 2, 1, "duplicate key 'name'"},
      {"name = t\n[surface S]\n", 2, 2, "unknown section 'surface'"},
      {"name = t\n[chart C]\ncoords = x\n[field f]\nchart = C\ncomponents = 1, 2\n", 6, 14,
       "dimension mismatch: 2 components for a 1-dimensional chart"},
      {"name = t\n[check]\nop = integrate\n", 3, 6, "unknown check 'integrate'"},
      {"name = t\nn = 2\nk = 5\n", 3, 5, "need 1 <= n <= 4 and n+1 <= k <= 2n"},
      {"name = t\n[chart C]\ncoords = x\n[chart C]\ncoords = y\n", 4, 1, "'C' is already declared"},
      {"name = t\n[chart C]\ncoords = x\nperiods = x: -1\n", 4, 11, "period must be a positive number"},
      {"name = t\n[graph Y]\nn = 2\nk = 3\nw = x1\n", 5, 1, "'w' is not a dependent coordinate (y1, z)"},
      {"name = t\n[graph Y]\nn = 2\nk = 3\nz = x1 + q\n", 5, 10, "unknown identifier 'q'"},
      {"name = t\n[bundle E]\nlift.s1 = u\n", 3, 11, "a lift needs two components: a, b"},
      {"name = t\nexpr\n", 2, 1, "expected 'key = value'"},
      {"seed = 1\n", 1, 1, "scenario needs a 'name'"},
  };
  for (const auto& c : cases) {
    auto d = diagnostics(c.text);
    ASSERT_FALSE(d.empty()) << c.text;
    EXPECT_EQ(d[0].line, c.line) << c.text;
    EXPECT_EQ(d[0].column, c.column) << c.text;
    EXPECT_EQ(d[0].message, c.message) << c.text;
  }
}

TEST(ScenarioParse, ReportsEveryProblem) {
  auto d = diagnostics("name = t\n[chart C]\ncoords = x\n[form a]\nchart = C\nexpr = q\n[check]\nop = frobenius\n"
                       "form = b\nbogus = 1\n");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].line, 6);
  EXPECT_EQ(d[1].line, 9);
  EXPECT_EQ(d[2].line, 10);
}

TEST(ScenarioParse, CommentsAndLayout) {
  auto a = parse_scenario(kMinimal);
  auto b = parse_scenario("# header\nname=minimal   # trailing\n\n  [chart C]\n\tcoords =t,x\n[form b]\nchart=C\n"
                          "expr = dt\n[check]\nop = frobenius\r\nform = b");
  EXPECT_EQ(b.charts.at("C").names(), a.charts.at("C").names());
  ASSERT_EQ(b.checks.size(), 1u);
}

TEST(ScenarioSerialize, RoundTrip) {
  for (const auto& b : bundled_scenarios()) {
    auto s = parse_scenario(b.text);
    std::string text = serialize(s);
    auto again = parse_scenario(text);
    EXPECT_TRUE(again == s) << b.name;
    EXPECT_EQ(serialize(again), text) << b.name;
    EXPECT_EQ(again.checks.size(), s.checks.size());
    EXPECT_EQ(again.forms.size(), s.forms.size());
  }
  auto m = parse_scenario(kMinimal);
  auto changed = parse_scenario(std::string(kMinimal) + "samples = 3\n");
  EXPECT_FALSE(changed == m);
}

TEST(Runner, EmptyCheckListPasses) {
  auto r = run_scenario(parse_scenario("name = empty\n"));
  EXPECT_TRUE(r.passed);
  EXPECT_TRUE(r.records.empty());
  auto j = to_json(r);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_TRUE(j["checks"].empty());
}

TEST(Runner, ReportShape) {
  auto r = run_scenario(parse_scenario(kMinimal));
  auto j = to_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"schema", "toolkit", "version", "scenario", "seed", "passed", "wall_time",
                                            "checks"}));
  const auto& c = j["checks"][0];
  EXPECT_EQ(c["check"], "frobenius");
  EXPECT_FALSE(c["anchor"].get<std::string>().empty());
  EXPECT_EQ(c["value"], 0.0);
  EXPECT_EQ(c["samples"], 200);
  EXPECT_TRUE(c["ok"]);
  EXPECT_FALSE(to_json(r, false).contains("wall_time"));
}

TEST(Runner, ErrorsBecomeFailedRecords) {
  auto s = parse_scenario(R"(name = errors
[graph Y]
n = 2
k = 3
[check wrong-point]
op = residual_at
graph = Y
family = xa-xn-yn
indices = 1
point = 1, 2
value = 0
[check bad-family]
op = residual_at
graph = Y
family = nonsense
indices = 1
point = 0, 0, 0
value = 0
[check fine]
op = claim
graph = Y
samples = 10
)");
  auto r = run_scenario(s);
  EXPECT_FALSE(r.passed);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_FALSE(r.records[0].passed);
  EXPECT_NE(r.records[0].error.find("dimension mismatch"), std::string::npos);
  EXPECT_EQ(r.records[1].error, "unknown residual family 'nonsense'");
  EXPECT_TRUE(r.records[2].ok);
  EXPECT_TRUE(to_json(r)["checks"][0]["value"].is_null());
}

TEST(Runner, ExpectedFailures) {
  auto s = parse_scenario(R"(name = negatives
[graph Y]
n = 2
k = 3
y1 = x1*x2
[check refused]
op = claim
graph = Y
samples = 20
expect = fail
[check wrongly-expected]
op = foliation
graph = Y
samples = 20
[check informational]
op = foliation
graph = Y
samples = 20
informational = true
)");
  auto r = run_scenario(s);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_FALSE(r.records[0].passed);
  EXPECT_TRUE(r.records[0].ok);
  EXPECT_FALSE(r.records[1].ok);
  EXPECT_FALSE(r.records[2].ok);
  EXPECT_FALSE(r.passed);

  auto only_info = run_scenario(parse_scenario(R"(name = info
[graph Y]
n = 2
k = 3
y1 = x1*x2
[check informational]
op = foliation
graph = Y
informational = true
)"));
  EXPECT_TRUE(only_info.passed);
}

TEST(Runner, CclDesignedViolationMustMatch) {
  auto s = parse_scenario(R"(name = ccl
[bundle E]
base = s1
[form shifted]
chart = E
expr = u*dv - v*du + 0.5*du
[check right]
op = ccl
bundle = E
form = shifted
expect = fail
fails = vanishing
[check wrong]
op = ccl
bundle = E
form = shifted
expect = fail
fails = positivity
)");
  auto r = run_scenario(s);
  EXPECT_TRUE(r.records[0].ok);
  EXPECT_FALSE(r.records[1].ok);
}

TEST(Runner, Overrides) {
  auto s = parse_scenario(kMinimal);
  auto r = run_scenario(s, {1e-3, 7, 42});
  EXPECT_EQ(r.seed, 42u);
  EXPECT_EQ(r.records[0].samples, 7u);
  EXPECT_EQ(r.records[0].tol, 1e-3);
}

TEST(Runner, SeedChangesSamplesOnly) {
  auto s = parse_scenario(R"(name = seeds
[graph Y]
n = 2
k = 3
y1 = x1*x2
[check res]
op = residuals
graph = Y
expect = fail
)");
  auto a = to_json(run_scenario(s, {{}, {}, 1}), false);
  auto b = to_json(run_scenario(s, {{}, {}, 2}), false);
  EXPECT_NE(a["checks"][0]["value"], b["checks"][0]["value"]);
  EXPECT_EQ(a["checks"][0]["ok"], b["checks"][0]["ok"]);
}

TEST(Runner, Deterministic) {
  for (const auto& b : bundled_scenarios()) {
    auto s = parse_scenario(b.text);
    std::string first, second, threaded;
    first = to_json(run_scenario(s), false).dump();
    second = to_json(run_scenario(s), false).dump();
    {
      ThreadsEnv env("4");
      threaded = to_json(run_scenario(s), false).dump();
    }
    EXPECT_EQ(first, second) << b.name;
    EXPECT_EQ(first, threaded) << b.name;
  }
}

TEST(Bundled, AllPass) {
  ASSERT_GE(bundled_scenarios().size(), 10u);
  for (const auto& b : bundled_scenarios()) {
    auto r = run_scenario(parse_scenario(b.text));
    EXPECT_EQ(r.scenario, b.name);
    EXPECT_TRUE(r.passed) << b.name;
    for (const auto& c : r.records) {
      EXPECT_TRUE(c.ok) << b.name << ": " << c.check << " " << c.error;
      if (c.value) {
        EXPECT_TRUE(std::isfinite(*c.value)) << c.check;
      }
    }
  }
}

TEST(Bundled, NegativeSuiteMarksExpectedFailures) {
  auto r = run_scenario(parse_scenario(find_bundled("ccl-negative-suite")->text));
  ASSERT_FALSE(r.records.empty());
  for (const auto& c : r.records) {
    EXPECT_EQ(c.expected, "fail") << c.check;
    EXPECT_FALSE(c.passed) << c.check;
    EXPECT_TRUE(c.ok) << c.check;
  }
}
