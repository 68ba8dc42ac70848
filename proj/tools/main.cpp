#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "cavqed/errors.hpp"
#include "commands.hpp"
#include "config.hpp"

using namespace cavqed;
using namespace cavqed::cli;

namespace {

struct Flags {
  std::string config;
  std::string out = ".";
  bool plot = false;
  int jobs = 1;
  std::uint64_t seed = 1;
  bool json_errors = false;
  bool timestamp = false;
  bool quiet = false;
};

int report(const Flags& flags, int code, const char* kind, const std::string& message,
           const std::vector<std::string>& details = {}) {
  if (flags.json_errors) {
    nlohmann::json e = {{"error", kind}, {"exit_code", code}, {"message", message}};
    if (!details.empty()) e["details"] = details;
    std::cerr << e.dump() << "\n";
  } else {
    std::cerr << "cavqed: " << kind << ": " << message << "\n";
    for (const auto& d : details) std::cerr << "  " << d << "\n";
  }
  return code;
}

int execute(const Flags& flags, const std::string& command, const std::string& mode, const std::string& figure) {
  try {
    RunContext ctx;
    if (!figure.empty()) {
      ctx.config = parse_config(std::string(bundled_config(figure)), figure);
      ctx.base_name = figure;
    } else {
      if (flags.config.empty()) throw ConfigError("--config is required");
      ctx.config = load_config(flags.config);
      ctx.config_dir = std::filesystem::absolute(flags.config).parent_path().string();
    }
    ctx.out_dir = flags.out;
    ctx.plot = flags.plot || !figure.empty();
    ctx.jobs = flags.jobs;
    ctx.seed = flags.seed;
    if (!figure.empty() && ctx.config.contains("seed")) ctx.seed = ctx.config["seed"].get<std::uint64_t>();
    ctx.timestamp = flags.timestamp;
    const std::string summary = run_command(command, mode, ctx);
    if (!flags.quiet) std::cout << summary << (summary.ends_with('\n') ? "" : "\n");
    return 0;
  } catch (const ConfigValidationError& e) {
    return report(flags, 2, "config", e.what(), e.details());
  } catch (const ConfigError& e) {
    return report(flags, 2, "config", e.what());
  } catch (const nlohmann::json::exception& e) {
    return report(flags, 2, "config", e.what());
  } catch (const std::invalid_argument& e) {
    return report(flags, 2, "config", e.what());
  } catch (const std::domain_error& e) {
    return report(flags, 2, "config", e.what());
  } catch (const SolverError& e) {
    return report(flags, 3, "solver", e.what());
  } catch (const std::exception& e) {
    return report(flags, 1, "internal", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cavity QED simulations of a single 40Ca+ ion in a two-mode optical cavity"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "run configuration (JSON, comments allowed)");
  app.add_option("--out", flags.out, "output directory")->capture_default_str();
  app.add_flag("--plot", flags.plot, "also write an SVG plot");
  app.add_option("--jobs", flags.jobs, "worker threads for scans")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", flags.seed, "seed for synthetic noise")->capture_default_str();
  app.add_flag("--json-errors", flags.json_errors, "print errors as JSON objects on stderr");
  app.add_flag("--timestamp", flags.timestamp, "record the wall-clock time in the JSON report");
  app.add_flag("-q,--quiet", flags.quiet, "no summary on stdout");

  std::string command, mode, figure;
  const std::pair<const char*, const char*> plain[] = {
      {"plan", "Raman path, line and pair tables"},
      {"spectrum", "steady-state Raman spectrum scan"},
      {"sidebands", "spectrum with motional and micromotion sidebands"},
      {"pulse", "single-photon pulse shapes"},
      {"overlap", "pulse-shape overlap optimization"},
      {"entangle", "bichromatic ion-photon entanglement"},
      {"map", "ion-to-photon state mapping"},
      {"rabi", "carrier Rabi oscillations with thermal motion"},
      {"ramsey", "Ramsey contrast decay"}};
  for (const auto& [name, help] : plain)
    app.add_subcommand(name, help)->callback([&command, name = std::string(name)] { command = name; });

  auto* localize = app.add_subcommand("localize", "ion localization relative to the cavity mode");
  localize->add_option("mode", mode, "fit | visibility | coupling")
      ->required()
      ->check(CLI::IsMember({"fit", "visibility", "coupling"}));
  localize->callback([&] { command = "localize"; });
  auto* cavity = app.add_subcommand("cavity", "cavity mode waist and coupling");
  cavity->add_option("mode", mode, "waist | g0")->required()->check(CLI::IsMember({"waist", "g0"}));
  cavity->callback([&] { command = "cavity"; });

  std::vector<std::string> ids;
  for (const auto& f : figures()) ids.push_back(f.id);
  auto* reproduce = app.add_subcommand("reproduce", "run a bundled figure configuration");
  reproduce->add_option("figure", figure, "figure id")->required()->check(CLI::IsMember(ids));
  reproduce->callback([&] { command = "reproduce"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(flags, 2, "usage", e.what());
  }

  if (command == "reproduce") {
    for (const auto& f : figures())
      if (figure == f.id) return execute(flags, f.command, f.mode, figure);
  }
  return execute(flags, command, mode, "");
}
