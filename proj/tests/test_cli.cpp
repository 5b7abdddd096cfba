#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "homlab/config.hpp"
#include "homlab/errors.hpp"

using namespace homlab;

#ifndef HOMLAB_BIN
#error "HOMLAB_BIN must point at the cli binary"
#endif

namespace {

std::string tmp_dir() {
  static int counter = 0;
  const std::string d =
      "/tmp/homlab-cli-test-" + std::to_string(::getpid()) + "-" +
      std::to_string(counter++);
  std::system(("mkdir -p " + d).c_str());
  return d;
}

std::string write_config(const std::string& dir, nlohmann::ordered_json j) {
  const std::string path = dir + "/config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

nlohmann::ordered_json base_config(const std::string& dir) {
  return nlohmann::ordered_json{
      {"schema_version", 1},
      {"geometry",
       {{"hole_half_width", 0.25}, {"n", 8}, {"n_per_cell", 8}}},
      {"coefficient", {{"type", "constant"}, {"value", 1.0}}},
      {"reaction", {{"type", "affine"}, {"lambda", 0.1}}},
      {"expansion", {{"order", 2}, {"r", 0}}},
      {"sweep", {{"eps_denominators", {4, 8, 16}}}},
      {"macro", {{"n", 32}}},
      {"output_dir", dir},
      {"run_name", "t"},
      {"seed", 42}};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HOMLAB_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("sweep runs end to end and writes the report files") {
  const std::string dir = tmp_dir();
  const std::string cfg = write_config(dir, base_config(dir));
  CHECK(run_cli("sweep --config " + cfg + " --force") == 0);
  const std::string csv = slurp(dir + "/run-t/report.csv");
  CHECK(csv.rfind("eps,error,eps_pow_theory\n", 0) == 0);
  const auto summary =
      nlohmann::json::parse(slurp(dir + "/run-t/summary.json"));
  CHECK(summary.contains("slope"));
  CHECK(summary.contains("kappa_p"));
  // existing run dir without --force is refused
  CHECK(run_cli("sweep --config " + cfg) == 2);
}

TEST_CASE("byte-identical artifacts across reruns") {
  const std::string dir = tmp_dir();
  const std::string cfg = write_config(dir, base_config(dir));
  REQUIRE(run_cli("sweep --config " + cfg + " --force --jobs 3") == 0);
  const std::string csv1 = slurp(dir + "/run-t/report.csv");
  const std::string json1 = slurp(dir + "/run-t/summary.json");
  REQUIRE(run_cli("sweep --config " + cfg + " --force") == 0);
  CHECK(slurp(dir + "/run-t/report.csv") == csv1);
  CHECK(slurp(dir + "/run-t/summary.json") == json1);
}

TEST_CASE("config errors exit with code 2") {
  const std::string dir = tmp_dir();
  auto j = base_config(dir);
  j["no_such_key"] = 1;
  const std::string cfg = write_config(dir, j);
  CHECK(run_cli("cell --config " + cfg + " --force") == 2);
  CHECK(run_cli("cell --config /nonexistent.json") == 2);
  CHECK(run_cli("cell") == 2);  // missing required --config

  auto bad = base_config(dir);
  bad["geometry"]["n"] = 6;  // 0.25 * 6 is not an integer
  CHECK(run_cli("cell --config " + write_config(dir, bad) + " --force") == 2);
}

TEST_CASE("constant reaction in nonlinear mode exits with COMPAT code 4") {
  const std::string dir = tmp_dir();
  auto j = base_config(dir);
  j["reaction"] = {{"type", "constant"}, {"lambda", 0.5}};
  j["expansion"] = {{"order", 2}, {"r", 1}};
  const std::string cfg = write_config(dir, j);
  CHECK(run_cli("cell --config " + cfg + " --force") == 4);
}

TEST_CASE("contraction violation exits with KAPPA code 3") {
  const std::string dir = tmp_dir();
  auto j = base_config(dir);
  j["reaction"] = {{"type", "tanh"}, {"lambda", 1.0}, {"lipschitz", 40.0}};
  j["expansion"] = {{"order", 2}, {"r", 1}};
  const std::string cfg = write_config(dir, j);
  CHECK(run_cli("cell --config " + cfg + " --force") == 3);
}

TEST_CASE("degenerate sweep passes the order gate trivially") {
  const std::string dir = tmp_dir();
  auto j = base_config(dir);
  // R(u) = lambda u with zero boundary data: u_eps = u_0 = 0 identically.
  j["reaction"] = {{"type", "linear"}, {"lambda", 0.1}};
  const std::string cfg = write_config(dir, j);
  CHECK(run_cli("sweep --config " + cfg + " --force") == 0);
  const auto sum = nlohmann::json::parse(slurp(dir + "/run-t/summary.json"));
  const auto& flags = sum.at("flags");
  CHECK(std::find(flags.begin(), flags.end(), "DEGENERATE") != flags.end());
}

TEST_CASE("non-converging sweep fails the order gate with code 6") {
  const std::string dir = tmp_dir();
  auto j = base_config(dir);
  // A cell-oscillatory reaction breaks the averaged macro model: errors stay
  // O(1) in eps and the fitted slope falls below the gate.
  j["reaction"] = {{"type", "tanh"}, {"lambda", 0.5}};
  const std::string cfg = write_config(dir, j);
  CHECK(run_cli("sweep --config " + cfg + " --force") == 6);
  const auto sum = nlohmann::json::parse(slurp(dir + "/run-t/summary.json"));
  const auto& flags = sum.at("flags");
  CHECK(std::find(flags.begin(), flags.end(), "ORDER-BELOW-THEORY") !=
        flags.end());
}

TEST_CASE("micro subcommand writes the solution and metadata") {
  const std::string dir = tmp_dir();
  const std::string cfg = write_config(dir, base_config(dir));
  CHECK(run_cli("micro --config " + cfg + " --eps 4 --force") == 0);
  const auto meta = nlohmann::json::parse(slurp(dir + "/run-t/metadata.json"));
  CHECK(meta.at("eps").get<double>() == doctest::Approx(0.25));
  CHECK(slurp(dir + "/run-t/u_eps.field").rfind("FIELD", 0) == 0);
}

TEST_CASE("config json round trip is the identity") {
  const std::string dir = tmp_dir();
  auto j = base_config(dir);
  const std::string cfg = write_config(dir, j);
  const ExperimentConfig a = ExperimentConfig::load(cfg);
  const ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_json().at("reaction").at("type") == "affine");
}

TEST_CASE("verify subcommand passes on the default config") {
  const std::string dir = tmp_dir();
  const std::string cfg = write_config(dir, base_config(dir));
  CHECK(run_cli("verify --config " + cfg) == 0);
}
