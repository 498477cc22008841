#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <gtest/gtest.h>

#include "focal/config.hpp"
#include "focal/report.hpp"

using namespace focal;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::optional<ErrorCode> code_of(const std::string& yaml) {
  try {
    parse_run_config_text(yaml).validate();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("focal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(FOCAL_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string config(const std::string& name) { return (fs::path(FOCAL_CONFIGS) / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST(Config, ParsesSurfacePointAndClassifier) {
  const auto c = parse_run_config_text(R"(
command: classify
surface: {type: triaxial_ellipsoid, a: 3, b: 2, c: 1}
point: umbilic2
flow: {rel_tol: 1e-11, t_max: 40}
classifier: {map_directions: 128, pole_tol: 1e-5}
threads: 2
)");
  EXPECT_EQ(c.command, "classify");
  EXPECT_EQ(c.surface.type, "triaxial_ellipsoid");
  EXPECT_DOUBLE_EQ(c.surface.b, 2.0);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].named, "umbilic2");
  EXPECT_DOUBLE_EQ(c.classifier.flow.rel_tol, 1e-11);
  EXPECT_DOUBLE_EQ(c.classifier.flow.t_max, 40.0);
  EXPECT_EQ(c.classifier.map_directions, 128u);
  EXPECT_DOUBLE_EQ(c.classifier.pole_tol, 1e-5);
  EXPECT_EQ(c.threads, 2u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ExplicitChartPoint) {
  const auto c = parse_run_config_text(R"(
command: trace
surface: {type: round_sphere, radius: 2}
point: {chart: 0, u: 1.0, v: 0.5}
trace: {theta: 0.3, t_end: 2, dt: 0.5}
)");
  const auto s = c.surface.build();
  const auto p = c.resolve_points(s).front();
  EXPECT_EQ(p.chart, 0);
  EXPECT_DOUBLE_EQ(p.u, 1.0);
  EXPECT_DOUBLE_EQ(c.trace.dt, 0.5);
}

TEST(Config, JsonIsAccepted) {
  const auto c = parse_run_config_text(R"({"command": "sweep", "surface": {"type": "spheroid", "a": 1.5, "c": 1.0},
    "points": ["north_pole", "south_pole"]})");
  EXPECT_EQ(c.points.size(), 2u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeyIsReportedWithLocation) {
  try {
    parse_run_config_text("command: classify\nsurface: {type: round_sphere}\npoint: north_pole\nflow:\n  rtol: 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rtol"), std::string::npos);
    EXPECT_NE(msg.find("line"), std::string::npos);
  }
}

TEST(Config, ValidationFailures) {
  const std::string head = "surface: {type: round_sphere}\n";
  EXPECT_EQ(code_of("command: classify\n" + head + "point: north_pole\nflow: {rel_tol: -1}\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: classify\n" + head), ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: classify\n" + head + "point: nowhere\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: classify\n" + head + "points: [north_pole, south_pole]\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: dance\n" + head + "point: north_pole\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: circlemap\ncirclemap: {expression: 'x +'}\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("command: circlemap\n"), ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: classify\nsurface: {type: triaxial_ellipsoid, a: 1, b: 2, c: 3}\npoint: umbilic0\n"),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: classify\n" + head + "point: north_pole\nclassifier: {probe_directions: 8}\n"),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of("command: classify\n" + head + "point: north_pole\nthreads: 0\n"), ErrorCode::ConfigError);
}

TEST(Config, TypeErrorsAreConfigErrors) {
  try {
    parse_run_config_text("command: classify\nsurface: {type: round_sphere, radius: big}\npoint: north_pole\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Config, SeededRandomPointsAreReproducible) {
  const std::string text = R"(
command: sweep
surface: {type: triaxial_ellipsoid, a: 1.7320508075688772, b: 1.4142135623730951, c: 1}
random_points: {count: 5, chart: 0, u_min: 0.5, u_max: 2.6, v_min: 0, v_max: 6.283185307179586}
seed: 11
)";
  const auto c = parse_run_config_text(text);
  const auto s = c.surface.build();
  const auto a = c.resolve_points(s), b = c.resolve_points(s);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_GE(a[i].u, 0.5);
    EXPECT_LE(a[i].u, 2.6);
  }
  auto other = c;
  other.seed = 12;
  EXPECT_NE(other.resolve_points(s)[0].u, a[0].u);
}

TEST(Config, EchoRoundTrips) {
  for (const auto& entry : fs::directory_iterator(FOCAL_CONFIGS)) {
    const auto c = load_run_config(entry.path().string());
    const auto echo = to_json(c).dump();
    const auto again = parse_run_config_text(echo);
    EXPECT_EQ(to_json(again).dump(), echo) << entry.path();
  }
}

TEST(Config, MissingFileIsIOFailure) {
  try {
    load_run_config("/nonexistent/run.yaml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IOFailure);
  }
}

TEST_F(Cli, ClassifySphere) {
  const auto out = dir_ / "out";
  ASSERT_EQ(run("classify --config " + config("sphere_classify.yaml") + " --out " + out.string()), 0);
  const auto report = Json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["status"], "ok");
  EXPECT_EQ(report["verdict"]["tag"], "Pole");
  EXPECT_NEAR(report["verdict"]["T_p"].get<double>(), kTwoPi, 1e-6);
  EXPECT_TRUE(fs::exists(out / "config.json"));
  EXPECT_TRUE(fs::exists(out / "density.csv"));
  EXPECT_TRUE(fs::exists(out / "cobweb.csv"));

  // the return map of the sphere is the diagonal
  std::istringstream csv(slurp(out / "return_map.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 't') continue;
    double in = 0.0, o = 0.0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf", &in, &o), 2);
    EXPECT_LE(circle_distance(in, o), 1e-6);
    ++rows;
  }
  EXPECT_EQ(rows, 256);
}

TEST_F(Cli, CirclemapMorseSmale) {
  const auto out = dir_ / "out";
  ASSERT_EQ(run("circlemap --config " + config("morse_smale_circlemap.yaml") + " --out " + out.string()), 0);
  const auto report = Json::parse(slurp(out / "report.json"));
  const auto& fps = report["fixed_points"];
  ASSERT_EQ(fps.size(), 2u);
  EXPECT_NEAR(fps[0]["theta"].get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(fps[1]["theta"].get<double>(), kPi, 1e-9);
  EXPECT_EQ(report["verdict"], "Dissipative");
}

TEST_F(Cli, CirclemapGoldenRotationDensityNearUniform) {
  const auto out = dir_ / "out";
  ASSERT_EQ(run("circlemap --config " + config("golden_rotation_circlemap.yaml") + " --out " + out.string()), 0);
  std::istringstream csv(slurp(out / "density.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'b') continue;
    double c = 0.0, m = 0.0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf", &c, &m), 2);
    ++rows;
    EXPECT_NEAR(m * 256, 1.0, 0.05);
  }
  EXPECT_EQ(rows, 256);
}

TEST_F(Cli, UmbilicDensityConcentrated) {
  const auto out = dir_ / "out";
  ASSERT_EQ(run("classify --config " + config("umbilic_classify.yaml") + " --out " + out.string()), 0);
  std::istringstream csv(slurp(out / "density.csv"));
  std::string line;
  std::vector<double> mass;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'b') continue;
    double c = 0.0, m = 0.0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf", &c, &m), 2);
    mass.push_back(m);
  }
  ASSERT_EQ(mass.size(), 256u);
  std::sort(mass.rbegin(), mass.rend());
  EXPECT_GE(mass[0] + mass[1] + mass[2] + mass[3], 1.0 - 1e-9);
  const auto report = Json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["verdict"]["tag"], "SelfFocalDissipative");
}

TEST_F(Cli, NegativeToleranceExitsOneWithoutArtifacts) {
  const auto out = dir_ / "bad";
  EXPECT_EQ(run("classify --config " + config("bad_tolerance.yaml") + " --out " + out.string()), 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, CommandMismatchExitsOne) {
  const auto out = dir_ / "out";
  EXPECT_EQ(run("sweep --config " + config("sphere_classify.yaml") + " --out " + out.string()), 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, MissingConfigFlagExitsOne) { EXPECT_EQ(run("classify"), 1); }

TEST_F(Cli, NumericalFailureExitsTwoWithReport) {
  // parses fine but folds the circle over itself
  const auto cfg = dir_ / "fold.yaml";
  std::ofstream(cfg) << "command: circlemap\ncirclemap: {expression: 'x + 2*sin(x)'}\n";
  const auto out = dir_ / "out";
  EXPECT_EQ(run("circlemap --config " + cfg.string() + " --out " + out.string()), 2);
  const auto report = Json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["status"], "error");
  EXPECT_EQ(report["error"]["code"], "NonHomeomorphism");
}

TEST_F(Cli, ThreadsOverrideKeepsResult) {
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("classify --config " + config("umbilic_classify.yaml") + " --out " + a.string()), 0);
  ASSERT_EQ(run("classify --config " + config("umbilic_classify.yaml") + " --threads 3 --out " + b.string()), 0);
  const auto ra = Json::parse(slurp(a / "report.json")), rb = Json::parse(slurp(b / "report.json"));
  EXPECT_EQ(ra["verdict"]["T_p"], rb["verdict"]["T_p"]);
  EXPECT_EQ(slurp(a / "return_map.csv"), slurp(b / "return_map.csv"));
}
