#include "hdsa/app/commands.hpp"
#include "hdsa/error.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace hdsa::app;

int main(int argc, char** argv) {
  CLI::App cli{"Hyper-differential sensitivity analysis with respect to model discrepancy"};
  cli.require_subcommand(1);
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;

  const auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", config_path, "JSON run configuration");
    if (config_required) c->required();
    sub->add_option("--out", out, "output directory (overrides config)");
    sub->add_option("--seed", seed, "GSVD random seed (overrides config)");
    sub->add_option("--threads", threads, "worker threads (overrides HDSA_THREADS)")->check(CLI::PositiveNumber);
  };
  auto* solve = cli.add_subcommand("solve", "solve the optimal control problem");
  auto* hdsa = cli.add_subcommand("hdsa", "randomized GSVD of the discrepancy sensitivity operator");
  auto* predict = cli.add_subcommand("predict", "first-order prediction of the high-fidelity optimum");
  auto* verify = cli.add_subcommand("verify", "run the dense oracle suite");
  add_common(solve, true);
  add_common(hdsa, true);
  add_common(predict, true);
  add_common(verify, false);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? exit_ok : exit_config;
  }

  CommandOptions options;
  const auto* sub = cli.get_subcommands().front();
  if (sub->count("--out")) options.out = out;
  if (sub->count("--seed")) options.seed = seed;
  options.threads = resolve_threads(sub->count("--threads") ? std::optional<int>(threads) : std::nullopt);

  if (sub == verify) return cmd_verify(options, std::cout);

  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const hdsa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  }
  if (sub == solve) return cmd_solve(config, options, std::cout);
  if (sub == hdsa) return cmd_hdsa(config, options, std::cout);
  return cmd_predict(config, options, std::cout);
}
