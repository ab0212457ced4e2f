#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "commands.hpp"
#include "idapbc/config.hpp"
#include "idapbc/io.hpp"

using namespace idapbc;
namespace fs = std::filesystem;

namespace {

const fs::path configs = fs::path(IDAPBC_SOURCE_DIR) / "configs";

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("idapbc_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::size_t count() const { return static_cast<std::size_t>(std::distance(fs::directory_iterator(path), {})); }
};

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "idapbc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("simulate writes a CSV and an SVG", "[cli]") {
  TempDir out;
  REQUIRE(invoke({"simulate", (configs / "buck_adaptive.json").string(), "--out", out.path.string()}) == cli::exit_ok);
  const auto csv = io::parse_csv(slurp(out.path / "buck_adaptive.csv"));
  CHECK(csv.header.front() == "t");
  CHECK(std::find(csv.header.begin(), csv.header.end(), "theta_fct_2") != csv.header.end());
  CHECK(csv.rows.size() > 100);
  CHECK(slurp(out.path / "buck_adaptive.svg").rfind("<svg", 0) == 0);
  CHECK(out.count() == 2);
}

TEST_CASE("verify exit codes follow the verdict", "[cli]") {
  TempDir out;
  CHECK(invoke({"verify", (configs / "bb_k1p6523.json").string(), out.path.string()}) == cli::exit_ok);
  CHECK(invoke({"verify", (configs / "bb_k05.json").string(), out.path.string()}) == cli::exit_check_failed);
  const auto rep = json::parse(slurp(out.path / "verify_bb_k05.json"));
  CHECK(rep["all_pass"] == false);
  CHECK(rep["conditions"]["C5"]["pass"] == false);
  CHECK(json::parse(slurp(out.path / "verify_bb_k1p6523.json"))["all_pass"] == true);
}

TEST_CASE("roa writes level curves, probes and a portrait", "[cli]") {
  TempDir out;
  REQUIRE(invoke({"roa", (configs / "buck_roa.json").string(), "-o", out.path.string()}) == cli::exit_ok);
  for (const char* f : {"roa_buck_roa_levels.csv", "roa_buck_roa_probes.csv", "roa_buck_roa.svg"})
    CHECK(fs::exists(out.path / f));
  const auto levels = io::parse_csv(slurp(out.path / "roa_buck_roa_levels.csv"));
  CHECK(levels.header == std::vector<std::string>{"level", "curve", "x1", "x2"});
  CHECK_FALSE(levels.rows.empty());

  CHECK(invoke({"roa", (configs / "boost_k3.json").string(), out.path.string()}) == cli::exit_usage);
}

TEST_CASE("invalid input exits with a usage error and writes nothing", "[cli]") {
  TempDir in, out;
  SECTION("malformed JSON") {
    const auto p = write_config(in.path, "broken.json", "{\"converter\": \"buck\",");
    CHECK(invoke({"simulate", p, out.path.string()}) == cli::exit_usage);
  }
  SECTION("unknown key") {
    const auto p = write_config(in.path, "typo.json",
                                R"({"converter": "buck", "controller": {"k": 0.1, "v_star": 20, "gain": 2}})");
    CHECK(invoke({"simulate", p, out.path.string()}) == cli::exit_usage);
  }
  SECTION("missing file") {
    CHECK(invoke({"verify", (in.path / "nope.json").string(), out.path.string()}) == cli::exit_usage);
  }
  SECTION("unknown experiment kind") {
    CHECK(invoke({"experiments", "flyback", out.path.string()}) == cli::exit_usage);
  }
  SECTION("unknown subcommand") {
    CHECK(invoke({"plot"}) == cli::exit_usage);
  }
  SECTION("conflicting output directories") {
    CHECK(invoke({"simulate", (configs / "buck_adaptive.json").string(), out.path.string(), "--out", in.path.string()}) ==
          cli::exit_usage);
  }
  CHECK(out.count() == 0);
}

TEST_CASE("model errors exit with code 2", "[cli]") {
  TempDir in, out;
  const auto p = write_config(in.path, "low.json", R"({"converter": "boost", "controller": {"k": 1.5, "v_star": 30}})");
  CHECK(invoke({"simulate", p, out.path.string()}) == cli::exit_model);
  CHECK(out.count() == 0);
}

TEST_CASE("config serialization is canonical", "[cli][property]") {
  for (const auto& entry : fs::directory_iterator(configs)) {
    INFO(entry.path().filename().string());
    const auto doc = json::parse(slurp(entry.path()));
    const json once = to_json(parse_config(doc, "x"));
    const json twice = to_json(parse_config(once, "x"));
    CHECK(once == twice);
  }
}

TEST_CASE("unknown keys are rejected at every level", "[cli]") {
  const auto base = json::parse(slurp(configs / "bb_roa.json"));
  CHECK_NOTHROW(parse_config(base, "x"));
  for (const char* ptr : {"/extra", "/physical/extra", "/controller/extra", "/schedule/extra", "/sim/extra",
                          "/verify/extra", "/verify/region/extra", "/roa/extra"}) {
    INFO(ptr);
    json doc = base;
    doc[json::json_pointer(ptr)] = 1;
    CHECK_THROWS_AS(parse_config(doc, "x"), config_error);
  }
}
