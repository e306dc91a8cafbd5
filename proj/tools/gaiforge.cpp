// Experiment runner: synthetic forgery benchmark construction, coverage
// analysis, guided adversarial interpolation training and evaluation.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gaiforge/config.hpp"
#include "gaiforge/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaiforge: few-shot forgery benchmark and guided adversarial "
               "interpolation lab"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags are accepted after the subcommand too

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_override;
  long threads_override = -1;
  app.add_option("-c,--config", config_path, "TOML config file (defaults when omitted)");
  app.add_option("--set", overrides, "override a config key, e.g. --set gai.tau=0.25");
  app.add_option("-o,--out", out_override, "output directory (overrides run.out)");
  app.add_option("-j,--threads", threads_override,
                 "worker threads (also capped by GAI_FORGE_THREADS)");

  CLI::App* gen = app.add_subcommand("gen-data", "render family datasets to disk");
  CLI::App* cov = app.add_subcommand("coverage", "cross-forgery matrix and taxonomy");
  CLI::App* asm_cmd =
      app.add_subcommand("assemble", "validate the benchmark against the coverage matrix");
  CLI::App* base = app.add_subcommand("train-base", "train the base (unseen) model per seed");
  CLI::App* run = app.add_subcommand("run", "train and evaluate the configured methods");
  std::string sweep;
  std::vector<std::string> sweep_values;
  CLI::App* ablate = app.add_subcommand("ablate", "sweep one knob and tabulate results");
  ablate->add_option("--sweep", sweep, "tau|lambda|alpha0|shots")->required();
  ablate->add_option("--values", sweep_values, "sweep values")->required()->delimiter(',');
  CLI::App* exp =
      app.add_subcommand("export-samples", "dump generation quintuples for inspection");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (threads_override >= 0)
      overrides.push_back("run.threads=" + std::to_string(threads_override));
    if (!out_override.empty()) overrides.push_back("run.out=\"" + out_override + "\"");
    gaiforge::ExperimentConfig cfg = gaiforge::load_config(config_path, overrides);
    gaiforge::ExperimentRunner runner(cfg);
    if (gen->parsed()) runner.cmd_gen_data();
    if (cov->parsed()) runner.cmd_coverage();
    if (asm_cmd->parsed()) runner.cmd_assemble();
    if (base->parsed()) runner.cmd_train_base();
    if (run->parsed()) runner.cmd_run();
    if (ablate->parsed()) runner.cmd_ablate(sweep, sweep_values);
    if (exp->parsed()) runner.cmd_export_samples();
    return kExitOk;
  } catch (const gaiforge::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
