#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "htexit/config.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace htexit;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "htexit_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::string& args) {
  const fs::path o = kTmp / "stdout.txt", e = kTmp / "stderr.txt";
  fs::create_directories(kTmp);
  const std::string cmd = std::string(HTEXIT_CLI_PATH) + " " + args + " > " + o.string() + " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

const std::string kLinear = R"(
[model]
field = linear-contractive
[noise]
alpha = 1.5
[domain]
type = interval
left = -2
right = 2
[experiment]
eta = 0.1, 0.05
b = inf, 1.2
samples = 6
seed = 11
[measure]
n = 4000
)";

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(kLinear);
  const ExperimentConfig c = parse_config(in);
  CHECK(c.field == "linear-contractive");
  CHECK(c.etas == std::vector<double>{0.1, 0.05});
  CHECK(c.bs.size() == 2);
  CHECK(std::isinf(c.bs[0]));
  CHECK(c.seed.value() == 11);

  std::istringstream back(to_manifest(c));
  const ExperimentConfig d = parse_config(back);
  CHECK(to_manifest(d) == to_manifest(c));
  CHECK(d.measure_n == 4000);

  auto fails = [](const std::string& text) {
    std::istringstream s(text);
    CHECK_THROWS_AS(parse_config(s), ConfigError);
  };
  fails("[model]\nfield = quadratic\nfield = quartic\n[experiment]\neta = 0.1\nb = inf\n");
  fails("[model]\ncolour = red\n[experiment]\neta = 0.1\nb = inf\n");
  fails("[nonsense]\n");
  fails("[experiment]\neta = 0.1\nb = inf\nsamples = many\n");
  fails("[experiment]\neta = 1.5\nb = inf\n");
  fails("[experiment]\nb = inf\n");
  fails("field = quadratic\n");

  std::istringstream ok(kLinear);
  ExperimentConfig bad = parse_config(ok);
  bad.field = "mystery";
  CHECK_THROWS_AS(resolve(bad), ResolutionError);
}

TEST_CASE("missing seed is a config error naming the key") {
  std::string text = kLinear;
  text.replace(text.find("seed = 11\n"), 10, "");
  write(kTmp / "noseed.cfg", text);
  const Run r = run("simulate-exit --config " + (kTmp / "noseed.cfg").string() + " --out " + (kTmp / "x").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("experiment.seed") != std::string::npos);
  // --seed supplies it.
  const Run ok = run("simulate-exit --config " + (kTmp / "noseed.cfg").string() + " --seed 3 --out " +
                     (kTmp / "seeded").string());
  CHECK(ok.code == 0);
}

TEST_CASE("exit codes") {
  write(kTmp / "badfield.cfg", std::string(kLinear).replace(kLinear.find("linear-contractive"), 18, "no-such-field"));
  CHECK(run("predict --config " + (kTmp / "badfield.cfg").string()).code == 3);
  write(kTmp / "broken.cfg", "[model\n");
  CHECK(run("predict --config " + (kTmp / "broken.cfg").string()).code == 2);
  CHECK(run("predict --config " + (kTmp / "absent.cfg").string()).code == 2);
  CHECK(run("no-such-command").code == 2);
}

TEST_CASE("simulate-exit outputs, manifest round trip and thread independence") {
  write(kTmp / "lin.cfg", kLinear);
  const fs::path a = kTmp / "a", b = kTmp / "b", c = kTmp / "c";
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
  REQUIRE(run("simulate-exit --config " + (kTmp / "lin.cfg").string() + " --threads 1 --out " + a.string()).code == 0);
  for (const char* f : {"records.csv", "summary.csv", "manifest.cfg", "prediction.csv"}) CHECK(fs::exists(a / f));
  const std::string records = slurp(a / "records.csv");
  CHECK(records.rfind("eta,b,sample_index,steps,scaled_time,exit_x_1,reason,seed_hi,seed_lo\n", 0) == 0);
  CHECK(records.find(",inf,") != std::string::npos);
  CHECK(slurp(a / "summary.csv").rfind("eta,b,n,mean_steps,stderr_steps", 0) == 0);

  REQUIRE(run("simulate-exit --config " + (a / "manifest.cfg").string() + " --out " + b.string()).code == 0);
  for (const char* f : {"records.csv", "summary.csv", "prediction.csv"}) CHECK(slurp(a / f) == slurp(b / f));

  REQUIRE(run("simulate-exit --config " + (kTmp / "lin.cfg").string() + " --threads 3 --out " + c.string()).code == 0);
  CHECK(slurp(a / "records.csv") == slurp(c / "records.csv"));
  CHECK(slurp(a / "prediction.csv") == slurp(c / "prediction.csv"));
}

TEST_CASE("single-sample smoke run on the linear benchmark") {
  const auto t0 = std::chrono::steady_clock::now();
  const Run r = run("simulate-exit --config " + std::string(HTEXIT_CONFIG_DIR) + "/linear-benchmark.cfg --out " +
                    (kTmp / "smoke").string());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(r.code == 0);
  CHECK(secs < 10.0);
}

TEST_CASE("predict on the shipped configs") {
  const Run r = run("predict --config " + std::string(HTEXIT_CONFIG_DIR) + "/paper-fig1.cfg --out " +
                    (kTmp / "pred").string());
  REQUIRE(r.code == 0);
  std::istringstream rows(slurp(kTmp / "pred" / "prediction.csv"));
  std::string line;
  std::getline(rows, line);
  CHECK(line.rfind("b,J,J_method,J_status,C,C_stderr,predicted_slope", 0) == 0);
  const std::vector<std::string> expect = {"inf,1,", "0.7,1,", "0.4,2,", "0.28,3,"};
  const std::vector<double> slopes = {-1.2, -1.2, -1.4, -1.6};
  for (std::size_t i = 0; i < expect.size(); ++i) {
    REQUIRE(std::getline(rows, line));
    CHECK(line.rfind(expect[i], 0) == 0);
    std::istringstream cells(line);
    std::string cell;
    for (int c = 0; c < 7; ++c) std::getline(cells, cell, ',');
    CHECK(std::stod(cell) == doctest::Approx(slopes[i]).epsilon(1e-12));
    CHECK(line.find("Proven") != std::string::npos);
  }
  CHECK(fs::exists(kTmp / "pred" / "gamma.csv"));

  const Run ball = run("predict --config " + std::string(HTEXIT_CONFIG_DIR) + "/contractive-ball.cfg --out " +
                       (kTmp / "ball").string());
  REQUIRE(ball.code == 0);
  const std::string csv = slurp(kTmp / "ball" / "prediction.csv");
  CHECK(csv.find("contractive,Proven") != std::string::npos);
}

TEST_CASE("reproduce-fig1 output format") {
  // A shortened copy of the shipped config: same model, two cheap cells per b.
  std::string text = slurp(std::string(HTEXIT_CONFIG_DIR) + "/paper-fig1.cfg");
  auto set = [&](const std::string& key, const std::string& value) {
    const auto p = text.find("\n" + key + " =");
    REQUIRE(p != std::string::npos);
    const auto e = text.find('\n', p + 1);
    text.replace(p + 1, e - p - 1, key + " = " + value);
  };
  set("eta", "0.1, 0.05, 0.02");
  set("b", "inf, 0.28");
  set("samples", "3");
  set("cap", "2000");
  set("n", "5000");
  write(kTmp / "fig1.cfg", text);
  const Run r = run("reproduce-fig1 --config " + (kTmp / "fig1.cfg").string() + " --out " + (kTmp / "fig1").string());
  REQUIRE(r.code == 0);
  const std::string csv = slurp(kTmp / "fig1" / "fig1.csv");
  CHECK(csv.rfind("eta,b,log_eta,mean_steps,log_mean_steps,n,capped\n", 0) == 0);
  const auto block = csv.find("\n\n\nb,J,C,predicted_intercept,predicted_slope,fitted_slope,fitted_slope_stderr\n");
  REQUIRE(block != std::string::npos);
  // 6 cells, then one row per b.
  std::istringstream cells(csv.substr(0, block));
  std::string line;
  int n = 0, capped = 0;
  std::getline(cells, line);
  while (std::getline(cells, line)) {
    ++n;
    capped += line.size() >= 5 && line.compare(line.size() - 5, 5, ",true") == 0;
  }
  CHECK(n == 6);
  CHECK(capped >= 1);  // b = 0.28 needs far more than 2000 steps
  CHECK(csv.find("\ninf,1,") != std::string::npos);
  CHECK(csv.find("\n0.28,3,") != std::string::npos);
  CHECK(run("reproduce-fig1 --config " + (kTmp / "fig1.cfg").string()).code == 2);
}

TEST_CASE("estimate-measure and atoms-check") {
  write(kTmp / "lin.cfg", kLinear);
  const Run m = run("estimate-measure --config " + (kTmp / "lin.cfg").string() + " --out " + (kTmp / "m").string());
  REQUIRE(m.code == 0);
  CHECK(slurp(kTmp / "m" / "measure.csv").rfind("k,b,delta_bar,t_bar,n,value,std_error\n", 0) == 0);
  CHECK(slurp(kTmp / "m" / "location.csv").find("left") != std::string::npos);

  std::string text = kLinear + "[atoms]\np_exit = 0.01\nn = 200\neta = 0.05\n";
  write(kTmp / "atoms.cfg", text);
  const Run a = run("atoms-check --config " + (kTmp / "atoms.cfg").string() + " --out " + (kTmp / "at").string());
  REQUIRE(a.code == 0);
  CHECK(fs::exists(kTmp / "at" / "atoms.csv"));
  CHECK(slurp(kTmp / "at" / "atoms_ks.csv").rfind("p_exit,n,ks_statistic\n0.01,200,", 0) == 0);
}
