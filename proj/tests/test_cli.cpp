#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "citysim/task_io.hpp"

namespace fs = std::filesystem;
using citysim::Json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "citysim-cli-test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI with stdout redirected to `out`; returns the exit status.
int cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string("\"") + CITYSIM_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

// Same shape, numbers within tol, everything else equal.
void check_close(const Json& got, const Json& want, const std::string& where) {
  if (want.is_number_float() || (want.is_number() && got.is_number_float())) {
    REQUIRE_MESSAGE(got.is_number(), where);
    CHECK_MESSAGE(std::abs(got.get<double>() - want.get<double>()) <= 1e-12, where);
  } else if (want.is_object()) {
    REQUIRE_MESSAGE(got.is_object(), where);
    CHECK_MESSAGE(got.size() == want.size(), where);
    for (const auto& [k, v] : want.items()) {
      const std::string at = where + "." + k;
      REQUIRE_MESSAGE(got.contains(k), at);
      check_close(got[k], v, at);
    }
  } else if (want.is_array()) {
    REQUIRE_MESSAGE(got.is_array(), where);
    REQUIRE_MESSAGE(got.size() == want.size(), where);
    for (std::size_t i = 0; i < want.size(); ++i) {
      const std::string at = where + "[" + std::to_string(i) + "]";
      check_close(got[i], want[i], at);
    }
  } else {
    CHECK_MESSAGE(got == want, where);
  }
}

}  // namespace

TEST_CASE("generate is byte-identical across runs") {
  const fs::path d = scratch("generate");
  REQUIRE(cli("--seed 11 generate -o " + (d / "a.json").string(), d / "log1") == 0);
  REQUIRE(cli("--seed 11 generate -o " + (d / "b.json").string(), d / "log2") == 0);
  REQUIRE(cli("--seed 12 generate -o " + (d / "c.json").string(), d / "log3") == 0);
  CHECK(slurp(d / "a.json") == slurp(d / "b.json"));
  CHECK(slurp(d / "a.json") != slurp(d / "c.json"));
  CHECK(cli("validate " + (d / "a.json").string(), d / "log4") == 0);
  const Json v = Json::parse(slurp(d / "log4"));
  CHECK(v["regenerates"] == true);
  CHECK(v["ok"] == true);
}

TEST_CASE("usage errors exit nonzero") {
  const fs::path d = scratch("usage");
  CHECK(cli("", d / "log") != 0);
  CHECK(cli("no-such-command", d / "log") != 0);
  CHECK(cli("--difficulty medium generate", d / "log") != 0);
  CHECK(cli("gen-tasks -n 1", d / "log") != 0);  // missing -o
  CHECK(cli("replay " + (d / "missing.json").string(), d / "log") == 2);
  CHECK(slurp(d / "log").find("citysim: ") != std::string::npos);
}

TEST_CASE("hard task generation carries elements and traffic") {
  const fs::path d = scratch("gen-tasks");
  REQUIRE(cli("--seed 3 --difficulty hard gen-tasks -n 2 -o " + d.string(), d / "log") == 0);
  const Json out = Json::parse(slurp(d / "log"));
  REQUIRE(out["tasks"].size() == 2);
  const Json map = Json::parse(slurp(d / "map.json"));
  CHECK(map["spec"]["elements"]["density"].get<double>() > 0.0);
  CHECK(map["spec"]["traffic"]["vehicles"].get<int>() > 0);
  CHECK(map["spec"]["traffic"]["pedestrians"].get<int>() > 0);
  CHECK(!map["elements"].empty());
  CHECK(!map["spawns"].empty());
  for (const Json& p : out["tasks"]) {
    const Json t = Json::parse(slurp(p.get<std::string>()));
    CHECK(t["difficulty"] == "hard");
    CHECK(cli("validate " + p.get<std::string>(), d / "vlog") == 0);
  }
  // An easy map cannot back hard tasks.
  REQUIRE(cli("--seed 3 generate -o " + (d / "easy.json").string(), d / "glog") == 0);
  CHECK(cli("--seed 3 --difficulty hard gen-tasks --map " + (d / "easy.json").string() + " -o " +
                (d / "x").string(),
            d / "xlog") == 2);
}

TEST_CASE("oracle rollout replays through the CLI") {
  const fs::path d = scratch("rollout");
  for (const std::string bench : {"mmnav", "mrs"}) {
    const fs::path tr = d / (bench + ".transcript.json");
    const fs::path res = d / (bench + ".result.json");
    REQUIRE(cli("--seed 5 --benchmark " + bench + " rollout-oracle --transcript " + tr.string() + " --result " +
                    res.string(),
                d / "log") == 0);
    CHECK(cli("replay " + tr.string(), d / "rlog") == 0);
    CHECK(Json::parse(slurp(d / "rlog"))["matches"] == true);
    CHECK(cli("validate " + tr.string(), d / "vlog") == 0);

    // A transcript whose recorded log hash is wrong must not replay clean.
    Json t = Json::parse(slurp(tr));
    t["log_hash"] = "0000000000000000";
    std::ofstream(d / "bad.json") << t.dump();
    CHECK(cli("replay " + (d / "bad.json").string(), d / "blog") != 0);
  }
}

TEST_CASE("eval matches the hand-computed golden report") {
  const fs::path fx = fs::path(CITYSIM_FIXTURES) / "eval";
  const fs::path d = scratch("eval");
  REQUIRE(cli("eval " + (fx / "model_a.jsonl").string() + " " + (fx / "mixed.jsonl").string() + " --json " +
                  (d / "rows.json").string(),
              d / "table.txt") == 0);
  check_close(Json::parse(slurp(d / "rows.json")), Json::parse(slurp(fx / "expected.json")), "report");
  CHECK(slurp(d / "table.txt") == slurp(fx / "expected_table.txt"));
  CHECK(cli("eval " + (d / "nothing-here").string(), d / "elog") == 2);
}
