// focal: command line front end.
//
//   focal classify     --config run.yaml [--out DIR] [--threads N] [--seed K]
//   focal sweep        ...
//   focal circlemap    ...
//   focal trace        ...
//   focal loopfraction ...
//
// Exit status: 0 success, 1 configuration error (nothing written),
// 2 numerical failure (report.json carries the error).

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "focal/circle_dynamics.hpp"
#include "focal/classifier.hpp"
#include "focal/config.hpp"
#include "focal/expression.hpp"
#include "focal/geodesic_flow.hpp"
#include "focal/report.hpp"
#include "focal/return_map.hpp"

namespace fs = std::filesystem;
using namespace focal;

namespace {

struct CliOptions {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
};

void write_json(const fs::path& path, const Json& j) {
  auto os = open_output(path.string());
  os << j.dump(2) << '\n';
  if (!os) throw Error(ErrorCode::IOFailure, "failed writing '" + path.string() + "'");
}

Json surface_json(const RunConfig& rc, const SurfaceSpec& s) {
  Json j = to_json(rc)["surface"];
  j["kind"] = s.kind();
  j["length_scale"] = s.length_scale();
  j["period_hint"] = s.period_hint() ? Json(*s.period_hint()) : Json(nullptr);
  return j;
}

Json run_classify(const RunConfig& rc, const fs::path& out) {
  const SurfaceSpec s = rc.surface.build();
  const ChartPoint p = rc.resolve_points(s).front();
  const Verdict v = classify_point(s, p, rc.classifier);
  if (v.return_map) {
    auto os = open_output((out / "return_map.csv").string());
    write_return_map_csv(os, *v.return_map);
    const CircleMap f = v.return_map->map();
    auto cw = open_output((out / "cobweb.csv").string());
    write_cobweb_csv(cw, f, rc.plot.cobweb_seed, rc.plot.cobweb_steps);
  }
  if (v.analysis) {
    auto os = open_output((out / "density.csv").string());
    write_density_csv(os, v.analysis->ulam_coarse);
  }
  return {{"surface", surface_json(rc, s)}, {"verdict", to_json(v)}};
}

Json run_sweep(const RunConfig& rc) {
  const SurfaceSpec s = rc.surface.build();
  const auto points = rc.resolve_points(s);
  const auto entries = sweep(s, points, rc.classifier);
  Json list = Json::array();
  std::map<std::string, int> counts{{"NotSelfFocal", 0}, {"SelfFocalDissipative", 0}, {"Pole", 0}, {"error", 0}};
  int inconclusive = 0;
  for (const auto& e : entries) {
    list.push_back(to_json(e));
    if (e.verdict) {
      ++counts[to_string(e.verdict->tag)];
      inconclusive += e.verdict->inconclusive ? 1 : 0;
    } else {
      ++counts["error"];
    }
  }
  Json summary(counts);
  summary["inconclusive"] = inconclusive;
  return {{"surface", surface_json(rc, s)}, {"summary", summary}, {"points", list}};
}

Json run_circlemap(const RunConfig& rc, const fs::path& out) {
  const Expression expr = Expression::parse(rc.circlemap.expression, {"x"});
  const CircleMap f = CircleMap::from_circle_function([expr](double x) { return wrap_angle(expr(x)); });
  const MapAnalysis a = analyze_return_map(f, rc.classifier);
  Json fp;
  if (f.degree() != 1) {
    fp = nullptr;
  } else {
    try {
      fp = to_json(fixed_points(f));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooManyFixedPoints) throw;
      fp = "continuum";
    }
  }
  {
    auto os = open_output((out / "density.csv").string());
    write_density_csv(os, a.ulam_coarse);
    auto cw = open_output((out / "cobweb.csv").string());
    write_cobweb_csv(cw, f, rc.plot.cobweb_seed, rc.plot.cobweb_steps);
    auto ms = open_output((out / "return_map.csv").string());
    write_map_samples_csv(ms, f, rc.circlemap.plot_samples);
  }
  Json j;
  j["expression"] = rc.circlemap.expression;
  j["degree"] = f.degree();
  j["rotation"] = a.rotation ? to_json(*a.rotation) : Json(nullptr);
  j["fixed_points"] = fp;
  j["reversibility_defect"] = a.reversibility_defect;
  j["ulam"] = {{"M", a.ulam_coarse.M},
               {"atomicity", a.ulam_coarse.atomicity},
               {"l1_to_uniform", a.ulam_coarse.l1_to_uniform}};
  j["verdict"] = to_string(a.conservativity.verdict);
  j["analysis"] = to_json(a);
  return j;
}

Json run_trace(const RunConfig& rc, const fs::path& out) {
  const SurfaceSpec s = rc.surface.build();
  const ChartPoint x = s.designate(rc.resolve_points(s).front());
  const PhasePoint p = angle_to_covector(s, x, rc.trace.theta);
  const auto samples = trace(s, p, rc.trace.t_end, rc.trace.dt, rc.classifier.flow);
  auto os = open_output((out / "trajectory.csv").string());
  write_trajectory_csv(os, samples);
  double drift = 0.0;
  for (const auto& smp : samples) drift = std::max(drift, std::fabs(smp.h - 1.0));
  const auto& last = samples.back().phase;
  return {{"surface", surface_json(rc, s)},
          {"start", {{"chart", p.chart}, {"u", p.u}, {"v", p.v}, {"pu", p.pu}, {"pv", p.pv}}},
          {"end", {{"chart", last.chart}, {"u", last.u}, {"v", last.v}, {"pu", last.pu}, {"pv", last.pv}}},
          {"samples", samples.size()},
          {"max_energy_drift", drift}};
}

Json run_loopfraction(const RunConfig& rc) {
  const SurfaceSpec s = rc.surface.build();
  const ChartPoint x = rc.resolve_points(s).front();
  const FlowConfig flow = rc.classifier.flow.resolved(s, rc.loopfraction.t_max == 0.0);
  const double t_max = rc.loopfraction.t_max > 0.0 ? rc.loopfraction.t_max : flow.t_max;
  const double frac = loop_fraction(s, x, rc.loopfraction.directions, t_max, flow, rc.threads);
  return {{"surface", surface_json(rc, s)},
          {"point", to_json(s.designate(x))},
          {"directions", rc.loopfraction.directions},
          {"t_max", t_max},
          {"loop_fraction", frac}};
}

int run(const std::string& command, const CliOptions& cli) {
  RunConfig rc;
  try {
    rc = load_run_config(cli.config);
    if (rc.command != command) {
      const YAML::Node raw = YAML::LoadFile(cli.config);
      if (raw["command"]) {
        throw Error(ErrorCode::ConfigError,
                    "config declares command '" + rc.command + "' but '" + command + "' was requested");
      }
      rc.command = command;
    }
    if (cli.out) rc.output = *cli.out;
    if (cli.threads) rc.threads = *cli.threads;
    if (cli.seed) rc.seed = *cli.seed;
    rc.classifier.threads = rc.threads;
    rc.validate();
  } catch (const std::exception& e) {
    std::cerr << "focal: " << e.what() << '\n';
    return 1;
  }

  const fs::path out(rc.output);
  Json report;
  report["command"] = command;
  try {
    fs::create_directories(out);
    write_json(out / "config.json", to_json(rc));
    Json body;
    if (command == "classify") {
      body = run_classify(rc, out);
    } else if (command == "sweep") {
      body = run_sweep(rc);
    } else if (command == "circlemap") {
      body = run_circlemap(rc, out);
    } else if (command == "trace") {
      body = run_trace(rc, out);
    } else {
      body = run_loopfraction(rc);
    }
    report["status"] = "ok";
    for (auto& [k, v] : body.items()) report[k] = v;
    write_json(out / "report.json", report);
  } catch (const std::exception& e) {
    report["status"] = "error";
    if (const auto* fe = dynamic_cast<const Error*>(&e)) {
      report["error"] = {{"code", std::string(to_string(fe->code()))}, {"message", e.what()}};
    } else {
      report["error"] = {{"code", "Internal"}, {"message", e.what()}};
    }
    std::cerr << "focal: " << e.what() << '\n';
    try {
      fs::create_directories(out);
      write_json(out / "report.json", report);
    } catch (const std::exception& w) {
      std::cerr << "focal: could not write report: " << w.what() << '\n';
    }
    return 2;
  }
  std::cout << out.string() << "/report.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-focal point and pole classification for geodesic flows on surfaces"};
  app.require_subcommand(1);
  CliOptions cli;
  const std::map<std::string, std::string> commands{
      {"classify", "classify one point"},
      {"sweep", "classify a list of candidate points"},
      {"circlemap", "analyze a closed-form circle map"},
      {"trace", "dump one geodesic trajectory"},
      {"loopfraction", "estimate the fraction of looping directions at a point"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", cli.config, "run configuration (YAML or JSON)")->required();
    sub->add_option("--out", cli.out, "output directory");
    sub->add_option("--threads", cli.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cli.seed, "random seed for generated points");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (const auto* sub : app.get_subcommands()) return run(sub->get_name(), cli);
  return 1;
}
