#pragma once

// Run configuration: parsing, schema validation and translation into library types.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavqed/errors.hpp"
#include "cavqed/lindblad.hpp"
#include "cavqed/optics.hpp"

namespace cavqed::cli {

/// Config error carrying one message per violation.
class ConfigValidationError : public ConfigError {
 public:
  ConfigValidationError(const std::string& what, std::vector<std::string> details)
      : ConfigError(what), details_(std::move(details)) {}
  const std::vector<std::string>& details() const { return details_; }

 private:
  std::vector<std::string> details_;
};

/// Parses JSON with // and /* */ comments. An empty document reads as {}. Throws ConfigError.
nlohmann::json parse_config(const std::string& text, const std::string& origin);
nlohmann::json load_config(const std::string& path);

/// Schema check plus the blocks the subcommand needs. Throws ConfigValidationError.
void validate_config(const nlohmann::json& config, const std::string& command);

/// FNV-1a of the canonical (sorted, compact) dump.
std::string config_hash(const nlohmann::json& config);

double get_or(const nlohmann::json& block, const char* key, double fallback);
int get_or(const nlohmann::json& block, const char* key, int fallback);
bool get_or(const nlohmann::json& block, const char* key, bool fallback);

std::vector<double> range_values(const nlohmann::json& range);

AtomData atom_from(const nlohmann::json& config, const std::string& base_dir);
CavityGeometry geometry_from(const nlohmann::json& cavity);
MagneticField field_from(const nlohmann::json& config);
DetectionChain detection_from(const nlohmann::json& config);
EvolveOptions evolve_from(const nlohmann::json& config);
int n_max_from(const nlohmann::json& config);
LaserField laser_from(const nlohmann::json& laser);

/// Full model: field, cavity modes, coupling (from geometry and radial spread unless given), lasers.
SystemModel model_from(const nlohmann::json& config, const AtomData& atom);

/// Index of the first 393 nm laser, or of "drive_index" when given. Throws ConfigError.
int drive_index(const SystemModel& model, const nlohmann::json& block);

}  // namespace cavqed::cli
