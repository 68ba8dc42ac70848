#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace cavqed::cli {

struct RunContext {
  nlohmann::json config;
  std::string config_dir = ".";
  std::string hash;
  std::string out_dir = ".";
  std::string base_name;  // file stem of the outputs
  std::uint64_t seed = 1;
  int jobs = 1;
  bool plot = false;
  bool timestamp = false;
  bool quiet = false;
};

/// Runs one subcommand ("plan", "spectrum", ..., "localize", "cavity") with an optional
/// mode ("fit", "waist", ...). Writes <out>/<base>.csv, .json and with plotting .svg.
/// Returns a one-line summary for the terminal.
std::string run_command(const std::string& command, const std::string& mode, RunContext& ctx);

/// Figure ids with bundled configs, and the subcommand/mode each one runs.
struct FigureSpec {
  const char* id;
  const char* command;
  const char* mode;
};
const std::vector<FigureSpec>& figures();
std::string_view bundled_config(const std::string& figure);

}  // namespace cavqed::cli
