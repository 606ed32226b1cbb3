#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "svcam/dataset.hpp"
#include "svcam/simlab.hpp"

namespace fs = std::filesystem;
using namespace svcam;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(SVCAM_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture(const std::string& name, DgpKind kind, std::size_t n, std::size_t m, double theta) {
  const std::string path = "cli_" + name + ".csv";
  std::ofstream(path) << format_longitudinal(generate({kind, n, m, theta, 17}).data);
  return path;
}

const std::string kFixed = " --h-c 0.2 --h-a 0.6 --knots 1,1";

}  // namespace

TEST_CASE("fit writes four bands and deterministic JSON") {
  const auto data = fixture("fit", DgpKind::Example1, 40, 6, 0.0);
  fs::remove_all("cli_fit_a");
  fs::remove_all("cli_fit_b");
  const auto a = run("fit " + data + kFixed + " --out cli_fit_a");
  REQUIRE_MESSAGE(a.code == 0, a.output);
  for (const char* c : {"alpha00", "alpha01", "alpha1", "beta1"})
    CHECK(fs::exists(fs::path("cli_fit_a") / (std::string("band_") + c + ".csv")));
  CHECK(fs::exists("cli_fit_a/manifest.json"));
  CHECK(fs::exists("cli_fit_a/regime.json"));
  const auto b = run("--threads 3 fit " + data + kFixed + " --out cli_fit_b");
  REQUIRE(b.code == 0);
  CHECK(slurp("cli_fit_a/fit.json") == slurp("cli_fit_b/fit.json"));
  CHECK(slurp("cli_fit_a/band_beta1.csv") == slurp("cli_fit_b/band_beta1.csv"));
  CHECK(slurp("cli_fit_a/manifest.json").find("sha256") != std::string::npos);
}

TEST_CASE("fit with cross-validated bandwidths and BIC knots") {
  const auto data = fixture("auto", DgpKind::Example1, 30, 5, 0.0);
  const auto r = run("fit " + data + " --out cli_fit_auto");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp("cli_fit_auto/fit.json").find("\"h_c\"") != std::string::npos);
}

TEST_CASE("a config file supplies options and flags override it") {
  const auto data = fixture("cfg", DgpKind::Example1, 40, 6, 0.0);
  std::ofstream("cli_fit.ini") << "[fit]\nh-c = 0.25\nh-a = 0.6\nknots = \"1,1\"\nlevel = 0.9\n";
  const auto r = run("--config cli_fit.ini fit " + data + " --level 0.8 --out cli_fit_cfg");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto doc = slurp("cli_fit_cfg/fit.json");
  CHECK(doc.find("\"h_c\": 0.25") != std::string::npos);
  CHECK(doc.find("\"level\": 0.8") != std::string::npos);
}

TEST_CASE("usage and data errors map to exit code 2") {
  std::ofstream("cli_bad.csv") << "subject,y,x1\na,1,2\n";
  const auto bad = run("fit cli_bad.csv --out cli_bad_out");
  CHECK(bad.code == 2);
  CHECK(bad.output.find("time") != std::string::npos);
  CHECK(run("fit").code == 2);
  CHECK(run("frobnicate").code == 2);
  const auto data = fixture("fit", DgpKind::Example1, 40, 6, 0.0);
  CHECK(run("test " + data + kFixed + " --which linearity --B 0 --out cli_b0").code == 2);
  CHECK(run("test " + data + kFixed + " --which sideways --out cli_b0").code == 2);
  CHECK(run("simulate --study table1 --cells 50y5 --Q 2").code == 2);
}

TEST_CASE("missing input is an I/O error") {
  CHECK(run("fit no_such_file.csv --out cli_missing").code == 4);
}

TEST_CASE("vanishing test weights exit with code 3") {
  const auto data = fixture("fit", DgpKind::Example1, 40, 6, 0.0);
  const auto r = run("test " + data + kFixed + " --which linearity --B 99 --test-h-c 1e-7 --test-h-a 1e-7 --out cli_t3");
  CHECK(r.code == 3);
  CHECK(r.output.find("bandwidth") != std::string::npos);
}

TEST_CASE("test command detects a strong alternative") {
  const auto data = fixture("alt", DgpKind::Dgp2, 50, 10, 3.0);
  const auto r = run("test " + data + " --h-c 0.2 --h-a 1.0 --knots 1,1 --which linearity --B 99 --out cli_test");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto doc = slurp("cli_test/test.json");
  CHECK(doc.find("\"p_bootstrap\": 0.01,") != std::string::npos);
  CHECK(fs::exists("cli_test/manifest.json"));
}

TEST_CASE("time-varying test runs end to end") {
  const auto data = fixture("tv", DgpKind::Dgp1, 30, 6, 0.0);
  const auto r = run("test " + data + kFixed + " --which time-varying --B 99 --out cli_tv");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("p_bootstrap") != std::string::npos);
}

TEST_CASE("simulate table1 smoke run is reproducible across threads") {
  const std::string args = "simulate --study table1 --cells 30x5 --Q 3 --h-c 0.2 --h-a 0.6 --knots 1,1";
  const auto a = run(args + " --out cli_sim_a");
  REQUIRE_MESSAGE(a.code == 0, a.output);
  const auto b = run("--threads 2 " + args + " --out cli_sim_b");
  REQUIRE(b.code == 0);
  const auto csv = slurp("cli_sim_a/report.csv");
  CHECK(csv == slurp("cli_sim_b/report.csv"));
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 5);
}

TEST_CASE("simulate power gives one row per theta and level") {
  const auto r = run(
      "simulate --study power --dgp dgp2 --cells 30x6 --thetas 0,0.8 --levels 0.05 --Q 2 --B 99 --h-c 0.3 --h-a 1.5 "
      "--knots 1,1 --out cli_power");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto csv = slurp("cli_power/report.csv");
  CHECK(csv.find("dgp2,30,6,0,0.05,") != std::string::npos);
  CHECK(csv.find("dgp2,30,6,0.8,0.05,") != std::string::npos);
}

TEST_CASE("bench prints timings") {
  const auto r = run("bench --cells 20x5 --reps 1");
  CHECK(r.code == 0);
  CHECK(r.output.find("seconds_per_fit") != std::string::npos);
}
