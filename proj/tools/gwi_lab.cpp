#include <fmt/format.h>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gwi/errors.hpp"
#include "gwi/experiment.hpp"

namespace ex = gwi::experiment;

int main(int argc, char** argv) {
  CLI::App app{"Simulation and estimation experiments for branching chains with immigration"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::optional<unsigned> workers;
  std::optional<std::string> out_dir;
  bool check = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "JSON config file, or preset:<name> for a built-in preset")
        ->required();
    sub->add_option("--seed", seed, "master seed")->required();
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--check", check, "exit 4 when an acceptance tolerance fails");
    sub->add_option("--out", out_dir, "output directory");
  };
  const char* kinds[] = {"simulate", "estimate", "estimator-law", "limit-law", "diagnose"};
  for (const char* kind : kinds) add_common(app.add_subcommand(kind, fmt::format("run a {} experiment", kind)));

  auto* list = app.add_subcommand("presets", "list the built-in presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ex::exit_config;
  }

  if (list->parsed()) {
    for (const auto& name : ex::preset_names()) {
      const auto p = ex::preset(name);
      std::cout << name << " (" << p.at("experiment").get<std::string>() << ")\n";
    }
    return ex::exit_ok;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ex::ExperimentConfig config;
    if (config_path.rfind("preset:", 0) == 0) {
      config = ex::parse_config(ex::Json{{"preset", config_path.substr(7)}});
    } else {
      config = ex::load_config(config_path);
    }
    if (ex::kind_name(config.kind) != command) {
      throw gwi::ConfigError(fmt::format("config describes a '{}' experiment, not '{}'",
                                         ex::kind_name(config.kind), command));
    }
    config.run.seed = seed;
    if (workers) config.run.workers = *workers;
    if (out_dir) config.run.out = *out_dir;

    const auto outcome = ex::run(config);
    ex::write_outcome(config, outcome);
    for (const auto& c : outcome.checks) {
      std::cout << fmt::format("{} {} = {:.6g} (bound {:.6g})\n", c.pass ? "PASS" : "FAIL",
                               c.name, c.value, c.bound);
    }
    std::cout << "outputs written to " << config.run.out.string() << "\n";
    if (check && !outcome.pass) return ex::exit_tolerance;
    return ex::exit_ok;
  } catch (const gwi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ex::exit_config;
  } catch (const gwi::InvalidParameter& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ex::exit_config;
  } catch (const gwi::OverflowError& e) {
    std::cerr << "overflow: " << e.what() << "\n";
    return ex::exit_numerical;
  } catch (const gwi::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return ex::exit_numerical;
  } catch (const gwi::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return ex::exit_numerical;
  }
}
