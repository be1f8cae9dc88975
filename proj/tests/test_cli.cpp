#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dictcert/cli.hpp"
#include "dictcert/errors.hpp"

using namespace dictcert;
namespace fs = std::filesystem;

namespace {

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "dictcert");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("dictcert_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("exit codes") {
  fs::path dir = scratch("codes");
  CHECK(run_args({"certify", "--n", "8", "--m", "8", "--k", "1", "--p", "200", "--kind", "orthonormal",
                  "--seed", "1", "--out", (dir / "c.json").string()}) == 0);
  CHECK(fs::exists(dir / "c.json"));
  CHECK(fs::exists(dir / "c.csv"));
  CHECK(fs::exists(dir / "c_lambda.mat"));
  // Unknown subcommand, bad flag value and invalid model parameters.
  CHECK(run_args({"frobnicate"}) == 1);
  CHECK(run_args({"certify", "--n", "abc"}) == 1);
  CHECK(run_args({"certify", "--n", "8", "--k", "9", "--out", (dir / "bad.json").string()}) == 1);
  CHECK(run_args({"lemmas", "--which", "nope"}) == 1);
  CHECK(run_args({"solve", "--backend", "simplex", "--n", "4", "--m", "4", "--k", "1", "--p", "20",
                  "--out", (dir / "v.json").string()}) == 1);
  // Route A is expected to fail at this size; the assert flag turns it into exit 3.
  CHECK(run_args({"certify", "--n", "16", "--m", "16", "--k", "2", "--p", "300", "--seed", "2",
                  "--assert", "--out", (dir / "c2.json").string()}) == 3);
  // Singular X X^T: every column uses the same atom.
  CHECK(run_args({"balance", "--n", "4", "--m", "4", "--k", "1", "--p", "1", "--out",
                  (dir / "b.json").string()}) == 2);
}

TEST_CASE("config files") {
  fs::path dir = scratch("config");
  RunConfig c;
  c.command = "phase";
  c.seed = 42;
  c.phase.n_list = {6};
  c.phase.k_list = {1, 2};
  c.phase.trials = 2;
  c.solve.samples = 7;
  nlohmann::ordered_json j = to_json(c);
  RunConfig back = run_config_from_json(j);
  CHECK(to_json(back).dump() == j.dump());

  nlohmann::ordered_json extra = j;
  extra["phase"]["colour"] = "blue";
  CHECK_THROWS_AS(run_config_from_json(extra), ValidationError);
  nlohmann::ordered_json top = j;
  top["bogus"] = 1;
  CHECK_THROWS_AS(run_config_from_json(top), ValidationError);

  {
    std::ofstream f(dir / "grid.json");
    f << to_json(c.phase).dump(2);
  }
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"n_list": [6], "trails": 3})";
  }
  CHECK(run_args({"phase", "--config", (dir / "grid.json").string(), "--out",
                  (dir / "grid.csv").string(), "--svg", (dir / "grid.svg").string()}) == 0);
  CHECK(slurp(dir / "grid.csv").rfind("n,m,k,p,trials,success_frac", 0) == 0);
  CHECK(slurp(dir / "grid.svg").find("<svg") == 0);
  CHECK(run_args({"phase", "--config", (dir / "bad.json").string(), "--out",
                  (dir / "g2.csv").string()}) == 1);
  CHECK(run_args({"phase", "--config", (dir / "missing.json").string()}) == 1);

  // An explicit flag overrides the config value.
  std::ofstream(dir / "lem.json") << R"({"which": "eig", "trials": 5})";
  CHECK(run_args({"lemmas", "--config", (dir / "lem.json").string(), "--trials", "20", "--out",
                  (dir / "lem.csv").string()}) == 0);
  CHECK(slurp(dir / "lem.csv").find("eig,20,") != std::string::npos);
}

TEST_CASE("outputs do not depend on the worker count") {
  fs::path dir = scratch("jobs");
  for (const char* jobs : {"1", "3"}) {
    const std::string tag = std::string("j") + jobs;
    REQUIRE(run_args({"lemmas", "--which", "all", "--trials", "40", "--seed", "9", "--jobs", jobs,
                      "--out", (dir / (tag + "_lem.csv")).string()}) == 0);
    std::ofstream(dir / "grid.json") << R"({"n_list": [5], "k_list": [1, 3], "trials": 2})";
    REQUIRE(run_args({"phase", "--config", (dir / "grid.json").string(), "--seed", "9", "--jobs", jobs,
                      "--out", (dir / (tag + "_grid.csv")).string()}) == 0);
    REQUIRE(run_args({"certify", "--n", "8", "--m", "8", "--k", "1", "--p", "100", "--seed", "9",
                      "--jobs", jobs, "--out", (dir / (tag + "_cert.json")).string()}) == 0);
  }
  for (const char* f : {"_lem.csv", "_lem.json", "_grid.csv", "_cert.json", "_cert.csv", "_cert_lambda.mat"}) {
    CAPTURE(f);
    CHECK(slurp(dir / (std::string("j1") + f)) == slurp(dir / (std::string("j3") + f)));
  }
}

TEST_CASE("installed binary") {
  const char* bin = std::getenv("DICTCERT_BIN");
  if (!bin) return;
  fs::path dir = scratch("bin");
  std::string cmd = std::string(bin) + " gen --n 6 --m 6 --k 2 --p 30 --seed 3 --out " + (dir / "inst").string() +
                    " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "inst" / "A.mat"));
  std::string solve = std::string(bin) + " solve --instance " + (dir / "inst").string() + " --out " +
                      (dir / "v.json").string() + " > /dev/null";
  CHECK(std::system(solve.c_str()) == 0);
  CHECK(slurp(dir / "v.json").find("\"verdict\"") != std::string::npos);
  std::string bad = std::string(bin) + " solve --instance " + (dir / "nothing").string() + " 2> /dev/null";
  CHECK(WEXITSTATUS(std::system(bad.c_str())) == 1);
}
