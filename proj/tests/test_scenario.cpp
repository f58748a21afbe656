#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gcy/scenario.hpp"

using namespace gcy;
using namespace gcy::scenario;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("gcy_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

json flat_config() {
  return json::parse(R"({"scenario": "flat_kahler", "n": 2, "points_per_axis": 16,
    "forcing": {"modes": [{"amplitude": 0.1, "k": [1, 0, 0, 1]}]}})");
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = parse_config(json::parse(R"({"scenario": "flat_kahler"})"));
  EXPECT_EQ(c.n, 2);
  EXPECT_EQ(c.points_per_axis, 32);
  EXPECT_EQ(c.tolerance("volume"), 1e-8);
  EXPECT_EQ(c.tolerance("ricci"), 1e-6);
}

TEST(Config, Rejections) {
  const char* bad[] = {
      R"([])",
      R"({"scenario": "nope"})",
      R"({"scenario": "flat_kahler", "n": 7})",
      R"({"scenario": "flat_kahler", "points_per_axis": 12})",
      R"({"scenario": "flat_kahler", "n": 2, "points_per_axis": 8, "forcing": {"modes": [{"amplitude": 1, "k": [2, 0, 0, 0]}]}})",
      R"({"scenario": "flat_kahler", "forcing": {"modes": [{"amplitude": 1, "k": [1, 0]}]}})",
      R"({"scenario": "manufactured"})",
      R"({"scenario": "flat_kahler", "coupling": 3})",
      R"({"scenario": "flat_kahler", "solver": {"damping": 2}})",
      R"({"scenario": "flat_kahler", "solver": {"coarse_points": 32}})",
      R"({"scenario": "flat_kahler", "alpha": {"type": "gauduchon_corrected"}})",
      R"({"scenario": "flat_kahler", "tolerances": {"unknown": 1}})",
      R"({"scenario": "flat_kahler", "tolerances": {"volume": -1}})",
  };
  for (const char* text : bad) EXPECT_THROW(parse_config(json::parse(text)), ConfigError) << text;
}

TEST(Config, LoadMissingFile) { EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError); }

TEST(Report, TextAndPassFlag) {
  Report r;
  r.check_le("a", "first", 1e-9, 1e-8);
  EXPECT_TRUE(r.passed());
  r.check_gt("b", "second", 0.0, 0.0);
  EXPECT_FALSE(r.passed());
  const std::string text = r.to_text();
  EXPECT_NE(text.find("PASS a"), std::string::npos);
  EXPECT_NE(text.find("FAIL b"), std::string::npos);
  EXPECT_EQ(r.to_json()["assertions"].size(), 2u);
}

TEST(Execute, FlatSolveWritesOutputs) {
  const auto dir = scratch("flat");
  const auto c = parse_config(flat_config());
  const auto r = execute("run", c, "inline", Output(dir));
  EXPECT_EQ(r.exit_code, 0) << r.report.to_text();
  for (const char* f : {"report.txt", "report.json", "telemetry.jsonl", "u.gfld", "omega.gfld"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream is(dir / "u.gfld", std::ios::binary);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "GFLD1 n=2 N=16 kind=scalar");
}

TEST(Execute, DeterministicForSeed) {
  json j = json::parse(R"({"scenario": "identity_suite", "n": 2, "points_per_axis": 8, "seed": 7,
    "alpha": {"type": "conformal", "modes": [{"amplitude": 0.05, "k": [1, 0, 0, 0]}]}})");
  const auto c = parse_config(j);
  const auto a = execute("verify", c, "inline", Output(scratch("det_a")));
  const auto b = execute("verify", c, "inline", Output(scratch("det_b")));
  EXPECT_EQ(a.report.to_text(), b.report.to_text());
  EXPECT_EQ(a.exit_code, 0) << a.report.to_text();
}

TEST(Execute, CorruptedTorsionFails) {
  json j = json::parse(R"({"scenario": "identity_suite", "n": 3, "points_per_axis": 8, "seed": 3,
    "alpha": {"type": "gauduchon_corrected", "base": {"type": "diagonal_conformal",
      "directions": [[{"amplitude": 0.01, "k": [0, 0, 1, 0, 0, 0]}], [{"amplitude": 0.01, "k": [0, 0, 0, 0, 1, 0]}]]}},
    "verify": {"samples": 20, "corrupt_torsion": true}})");
  const auto r = execute("verify", parse_config(j), "inline", Output(scratch("corrupt")));
  EXPECT_EQ(r.exit_code, 1);
}
