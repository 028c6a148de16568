// atlas: phase diagrams and Monte Carlo validation for the elastic-manifold
// and soft-spins complexity toolkit.
//
//   atlas phase|thresholds|fit-critical|mc-validate|landscape-demo
//         --config <path> --out <path> [--seed n] [--jobs k]

#include <CLI11.hpp>

#include <optional>
#include <string>

#include "atlas/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"annealed-complexity phase diagrams via free probability and MDE numerics"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_path, "output path (CSV or JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--jobs", jobs, "worker threads (ATLAS_JOBS overrides)");
  };

  add_common(app.add_subcommand("phase", "sweep a parameter and emit the phase diagram CSV"));
  add_common(app.add_subcommand("thresholds", "critical thresholds and near-critical constants"));
  add_common(app.add_subcommand("fit-critical", "fit near-critical exponents and prefactors"));
  add_common(app.add_subcommand("mc-validate", "random-matrix validation of the MDE predictions"));
  add_common(app.add_subcommand("landscape-demo", "2-D landscape minima counts across confinements"));

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  return atlas::cli::run(command, config_path, out_path, seed, jobs);
}
