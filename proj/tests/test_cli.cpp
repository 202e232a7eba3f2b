#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptdelta/cli.hpp"

using namespace ptdelta;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ptdelta");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ptdelta_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round trip") {
  RunConfig c;
  c.trap.b = 1.05;
  c.trap.mode = NonlinearityMode::NormIndependent;
  c.gamma_min = 0.1;
  c.gamma_max = 0.3;
  c.gamma_step = 1.0 / 300.0;
  c.g_values = {-1.0, -0.1, -2.0 / 3.0};
  c.variant = BdgVariant::Modified;
  c.format = OutputFormat::Json;
  c.out_dir = "results";
  c.seed = 42;
  c.jobs = 3;
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(back.gamma_step == c.gamma_step);
  CHECK(back.g_values == c.g_values);
  CHECK(serialize_config(back) == text);
}

TEST_CASE("config parsing errors") {
  CHECK_THROWS_AS(parse_config("nonsense = 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("gamma_max = abc\n"), UsageError);
  CHECK_THROWS_AS(parse_config("variant = other\n"), UsageError);
  CHECK_THROWS_AS(parse_config("just words\n"), UsageError);
  const RunConfig c = parse_config("# comment\n\ngamma_max = 0.2  # trailing\ng = -1, -0.5\n");
  CHECK(c.gamma_max == 0.2);
  CHECK(c.g_values == std::vector<double>{-1.0, -0.5});
}

TEST_CASE("config validation and gamma grid") {
  RunConfig c;
  c.gamma_min = 0.0;
  c.gamma_max = 0.3;
  c.gamma_step = 0.1;
  CHECK(c.gamma_grid().size() == 4);
  CHECK(c.gamma_grid().back() == doctest::Approx(0.3));
  c.gamma_min = 0.4;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.gamma_step = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.g_values.clear();
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.epsilon = 0.01;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("output directory resolution") {
  RunConfig c;
  ::setenv("PTDELTA_OUT", "/tmp/from_env", 1);
  CHECK(c.output_dir() == fs::path("/tmp/from_env"));
  c.out_dir = "explicit";
  CHECK(c.output_dir() == fs::path("explicit"));
  ::unsetenv("PTDELTA_OUT");
  c.out_dir.clear();
  CHECK(c.output_dir() == fs::path("ptdelta_out"));
}

TEST_CASE("tables") {
  Table t{"demo", {"a", "b"}, {}};
  t.add({"1", "x,y"});
  t.add({format_number(1.0 / 3.0), ""});
  CHECK(t.csv() == "a,b\n1,x;y\n0.333333333333,\n");
  const auto j = nlohmann::json::parse(t.json());
  CHECK(j["columns"][1] == "b");
  CHECK(j["rows"][0][0] == 1.0);
  CHECK(j["rows"][0][1] == "x;y");
  CHECK(j["rows"][1][1].is_null());
  CHECK_THROWS(t.add({"1"}));
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("usage errors exit with 64") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"unknown"}).code == kExitUsage);
  CHECK(cli({"spectrum", "--gamma-min", "0.3", "--gamma-max", "0.2"}).code == kExitUsage);
  CHECK(cli({"spectrum", "--gamma-step", "0"}).code == kExitUsage);
  CHECK(cli({"sweep", "--format", "xml"}).code == kExitUsage);
  CHECK(cli({"sweep", "--config", "/nonexistent/config.txt"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("unwritable output exits with 1") {
  const fs::path file = scratch("blocker");
  std::ofstream(file) << "x";
  const auto r = cli({"verify", "--g", "0", "--out", (file / "sub").string()});
  CHECK(r.code == kExitIo);
  fs::remove(file);
}

TEST_CASE("spectrum writes tables and a manifest") {
  const fs::path dir = scratch("spectrum");
  const auto r = cli({"spectrum", "--g", "0", "--gamma-step", "0.1", "--format", "json", "--out",
                      dir.string()});
  REQUIRE(r.code == kExitOk);
  const auto m = nlohmann::json::parse(slurp(dir / "spectrum_manifest.json"));
  CHECK(m["command"] == "spectrum");
  CHECK(m["b"] == 1.1);
  CHECK(m["config"]["gamma_step"] == "0.10000000000000001");
  REQUIRE(m["files"].size() == 3);
  CHECK(parse_config(slurp(dir / "spectrum_config.txt")).g_values == std::vector<double>{0.0});
  for (const auto& f : m["files"]) {
    const std::string content = slurp(dir / f["path"].get<std::string>());
    CHECK(f["sha256"] == sha256_hex(content));
  }
  const auto table = nlohmann::json::parse(slurp(dir / "spectrum_g0_ground.json"));
  CHECK(table["columns"][0] == "gamma");
  CHECK(table["rows"].size() == 5);
  fs::remove_all(dir);
}

TEST_CASE("config file with flag overrides") {
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "g = -1\ngamma_max = 0.2\ngamma_step = 0.1\n";
  const auto r = cli({"spectrum", "--config", (dir / "run.cfg").string(), "--g", "0", "--out",
                      (dir / "out").string()});
  REQUIRE(r.code == kExitOk);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "spectrum_manifest.json"));
  CHECK(m["config"]["g"] == "0");
  CHECK(m["config"]["gamma_max"] == "0.20000000000000001");
  fs::remove_all(dir);
}

TEST_CASE("verify without nonlinearity") {
  const fs::path dir = scratch("verify");
  const auto ok = cli({"verify", "--g", "0", "--out", dir.string()});
  CHECK(ok.code == kExitOk);
  const std::string csv = slurp(dir / "verify.csv");
  CHECK(csv.find(",fail,") == std::string::npos);
  CHECK(csv.find("skipped") != std::string::npos);

  const auto coarse =
      cli({"verify", "--g", "0", "--abs-tol", "1e-3", "--rel-tol", "1e-3", "--out", dir.string()});
  CHECK(coarse.code == kExitVerifyFailed);
  fs::remove_all(dir);
}

TEST_CASE("stability without a transition exits with 3") {
  const fs::path dir = scratch("stability");
  const auto r = cli({"stability", "--g", "0", "--gamma-step", "0.1", "--out", dir.string()});
  CHECK(r.code == kExitNotFound);
  CHECK(fs::exists(dir / "stability_summary_standard.csv"));
  fs::remove_all(dir);
}
