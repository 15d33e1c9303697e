#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hybwave/hybwave.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hybrid FEM/FDM wave solver and coefficient reconstruction"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, model, coefficient, data;
  std::vector<double> sigmas;
  std::optional<double> omega;
  bool quiet = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file (built-in defaults when omitted)");
    sub->add_option("--seed", seed, "noise seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--model", model, "model problem")->check(CLI::IsMember({"mp1", "mp2"}));
    sub->add_option("--sigma", sigmas, "noise levels in percent (comma separated)")->delimiter(',');
    sub->add_option("--omega", omega, "pulse frequency");
  };
  auto* check = app.add_subcommand("check", "validate a configuration and report CFL and layout sizes");
  auto* make = app.add_subcommand("make-data", "synthesise clean and noisy observations");
  auto* fwd = app.add_subcommand("forward", "run the forward problem and write traces, energy and snapshots");
  auto* inv = app.add_subcommand("invert", "reconstruct the coefficient from observation data");
  for (auto* s : {check, make, fwd, inv}) common(s);
  fwd->add_option("--coefficient", coefficient, "per-cell coefficient CSV (cell,a)");
  inv->add_option("--data", data, "observation CSV (default: <out>/data_sigma<sigma>.csv)");
  inv->add_flag("--quiet", quiet, "no per-iteration lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const auto cfg = config_path.empty() ? hybwave::ExperimentConfig{} : hybwave::load_config(config_path);
    hybwave::CommandOptions o;
    o.seed = seed;
    o.out = out;
    if (model) o.model = hybwave::parse_model(*model);
    if (!sigmas.empty()) o.sigmas = sigmas;
    o.omega = omega;
    o.coefficient_file = coefficient;
    o.data_file = data;
    o.quiet = quiet;
    return hybwave::run_command(app.get_subcommands().front()->get_name(), cfg, o, std::cout, std::cerr);
  } catch (const hybwave::InstabilityError& e) {
    std::cerr << "instability: " << e.what() << "\n";
    return 2;
  } catch (const hybwave::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
