// legfol: run verification scenarios.
//
//   legfol check <scenario-file> [--json out.json] [--tol T] [--samples N] [--seed S]
//   legfol demo <name> [--json out.json]
//   legfol list

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "legfol/bundled_scenarios.hpp"
#include "legfol/runner.hpp"

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", *v);
  return buf;
}

void print_summary(const legfol::Report& r, std::ostream& out) {
  std::size_t w = 5;
  for (const auto& c : r.records) w = std::max(w, c.check.size());
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %-10s  %-10s  %-2s  %-8s  %s\n", static_cast<int>(w), "check", "value", "tol",
                "", "expected", "result");
  out << "scenario " << r.scenario << " (seed " << r.seed << ")\n" << line;
  for (const auto& c : r.records) {
    std::string result = c.ok ? "ok" : "FAILED";
    if (c.informational) result += " (informational)";
    if (!c.error.empty()) result += ": " + c.error;
    else if (c.details.contains("reason")) result += ": " + c.details["reason"].get<std::string>();
    std::snprintf(line, sizeof line, "%-*s  %-10s  %-10s  %-2s  %-8s  ", static_cast<int>(w), c.check.c_str(),
                  fmt(c.value).c_str(), fmt(c.tol).c_str(), c.comparison.c_str(), c.expected.c_str());
    out << line << result << "\n";
  }
  std::snprintf(line, sizeof line, "%s in %.2f s\n", r.passed ? "PASS" : "FAIL", r.wall_time);
  out << line;
}

int run(std::string_view text, const std::string& origin, const legfol::RunOptions& opt, const std::string& json_path) {
  legfol::Scenario s;
  try {
    s = legfol::parse_scenario(text);
  } catch (const legfol::ScenarioError& e) {
    for (const auto& d : e.diagnostics()) std::cerr << origin << ":" << d.line << ":" << d.column << ": " << d.message << "\n";
    return 2;
  }
  auto report = legfol::run_scenario(s, opt);
  print_summary(report, std::cout);
  if (!json_path.empty()) {
    std::ofstream f(json_path);
    if (!f) {
      std::cerr << "cannot write " << json_path << "\n";
      return 2;
    }
    f << legfol::to_json(report).dump(2) << "\n";
  }
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-geometry verification toolkit"};
  app.set_version_flag("--version", legfol::kVersion);
  app.require_subcommand(1);

  std::string file, name, json_path;
  std::optional<double> tol;
  std::optional<int> samples;
  std::optional<std::uint64_t> seed;

  auto* check = app.add_subcommand("check", "Run a scenario file");
  check->add_option("scenario", file, "Scenario file")->required()->check(CLI::ExistingFile);
  check->add_option("--json", json_path, "Write the JSON report here");
  check->add_option("--tol", tol, "Override every check tolerance")->check(CLI::PositiveNumber);
  check->add_option("--samples", samples, "Override every sample count")->check(CLI::PositiveNumber);
  check->add_option("--seed", seed, "Override the scenario seed");

  auto* demo = app.add_subcommand("demo", "Run a bundled scenario");
  demo->add_option("name", name, "Bundled scenario name")->required();
  demo->add_option("--json", json_path, "Write the JSON report here");

  auto* list = app.add_subcommand("list", "List bundled scenarios");

  CLI11_PARSE(app, argc, argv);

  legfol::RunOptions opt{tol, samples, seed};
  if (*check) {
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    return run(ss.str(), file, opt, json_path);
  }
  if (*demo) {
    const auto* s = legfol::find_bundled(name);
    if (!s) {
      std::cerr << "unknown demo '" << name << "'; available:";
      for (const auto& b : legfol::bundled_scenarios()) std::cerr << " " << b.name;
      std::cerr << "\n";
      return 2;
    }
    return run(s->text, name + ".scn", {}, json_path);
  }
  if (*list) {
    for (const auto& b : legfol::bundled_scenarios()) std::cout << b.name << "\n";
  }
  return 0;
}
