// gcy: run or verify a scenario config.
//
//   gcy run <config> [--seed <u64>] [--out <dir>]
//   gcy verify <config> [--seed <u64>] [--out <dir>]
//
// Exit status: 0 all assertions pass, 1 an assertion or the solver failed,
// 2 bad config or command line. The output directory is --out, else the
// config's "output", else $GCY_OUT, else out/<scenario>.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "gcy/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gauduchon Calabi-Yau solver on complex tori"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  for (const char* name : {"run", "verify"}) {
    auto* sub = app.add_subcommand(name, std::string(name) == "run" ? "solve a scenario and check it"
                                                                    : "check identities without solving");
    sub->add_option("config", config_path, "scenario config (JSON)")->required();
    sub->add_option("--seed", seed, "64-bit seed for random instances");
    sub->add_option("--out", out_dir, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;

  using namespace gcy;
  try {
    scenario::ScenarioConfig cfg = scenario::load_config(config_path);
    if (seed_given) cfg.seed = seed;
    std::string dir = out_dir;
    if (dir.empty()) dir = cfg.output;
    if (dir.empty())
      if (const char* env = std::getenv("GCY_OUT")) dir = env;
    if (dir.empty()) dir = std::string("out/") + scenario::to_string(cfg.scenario);
    const scenario::Output out(dir);
    const auto result = scenario::execute(command, cfg, config_path, out);
    std::cout << result.report.to_text();
    std::cout << "output: " << out.dir().string() << "\n";
    return result.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
