#pragma once

// Validation of run configurations against the bundled JSON schema. Only the
// schema features the bundled schema uses are understood: type, properties,
// required, additionalProperties (false), items, min/maxItems, enum, minimum,
// maximum, exclusiveMinimum and local $ref.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cavqed {
// Embedded copy of schema/config.schema.json.
std::string_view bundled_schema_text();
}  // namespace cavqed

namespace cavqed::cli {

const nlohmann::json& bundled_schema();

/// One message per violation, each prefixed with the JSON pointer of the offending value.
std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema);

/// Top-level blocks a subcommand needs, from the schema's "commands" table.
std::vector<std::string> required_blocks(const nlohmann::json& schema, const std::string& command);

}  // namespace cavqed::cli
