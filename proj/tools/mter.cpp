#include "mter/errors.hpp"
#include "mter/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  mter::apply_thread_cap();
  CLI::App app{"Markovian traffic equilibrium solver for ride-hailing fleets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mter 1.0");

  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir;
  for (const auto& mode : mter::run_modes()) {
    auto* sub = app.add_subcommand(mode, "run the " + mode + " mode");
    sub->add_option("--config", config_file, "key = value configuration file");
    sub->add_option("--set", overrides, "override one key (key=value); repeatable")->take_all();
    sub->add_option("--out", out_dir, "output directory")->required();
  }
  std::string result_a, result_b;
  auto* cmp = app.add_subcommand("compare", "per-link and metric deltas between two result.json files (a minus b)");
  cmp->add_option("result_a", result_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("result_b", result_b)->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mter::kExitInvalid;
  }

  try {
    if (cmp->parsed()) return mter::run_compare(result_a, result_b, out_dir, std::cerr);
    const std::string mode = app.get_subcommands().front()->get_name();
    mter::RunConfig config = config_file.empty() ? mter::RunConfig{} : mter::RunConfig::from_file(config_file);
    for (const auto& kv : overrides) config.set_assignment(kv);
    return mter::run_mode(mode, config, out_dir, std::cerr);
  } catch (const mter::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mter::kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mter::kExitInvalid;
  }
}
