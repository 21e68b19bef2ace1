#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fpkflow/config.hpp"
#include "fpkflow/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Flows of solutions to linear forward Kolmogorov equations: "
               "candidate generation, iterated-maximization selection, flow "
               "verification and the two-enumeration probe"};
  app.require_subcommand(0, 1);

  bool print_schema = false;
  app.add_flag("--print-schema", print_schema, "print the config schema and exit");

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool have_seed = false;
  bool expect_wellposed = false;
  CLI::App* run = app.add_subcommand("run", "execute the pipeline described by a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory (default: [run].out)");
  run->add_option("--seed", seed, "override [run].seed")->each([&](const std::string&) {
    have_seed = true;
  });
  run->add_flag("--expect-wellposed", expect_wellposed,
                "exit nonzero when the probe reports NotWellPosed");

  std::string trace_path;
  CLI::App* replay = app.add_subcommand("replay", "re-run a stored selection trace");
  replay->add_option("trace", trace_path, "trace.json produced by run")->required();

  CLI11_PARSE(app, argc, argv);

  if (print_schema) {
    std::cout << fpkflow::config_schema();
    return 0;
  }

  try {
    if (run->parsed()) {
      fpkflow::Config cfg = fpkflow::parse_config(config_path);
      if (have_seed) cfg.seed = seed;
      const std::string out = out_dir.empty() ? cfg.out_dir : out_dir;
      fpkflow::RunOutcome outcome = fpkflow::run_pipeline(cfg, out, expect_wellposed);
      if (outcome.exit_code == 0) {
        std::cout << "all stages passed; artifacts in " << out << "\n";
      }
      return outcome.exit_code;
    }
    if (replay->parsed()) {
      return fpkflow::replay_trace(trace_path);
    }
  } catch (const fpkflow::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::cout << app.help();
  return 0;
}
