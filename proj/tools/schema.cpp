#include "schema.hpp"

#include <cmath>

namespace cavqed::cli {

using nlohmann::json;

const json& bundled_schema() {
  static const json schema = json::parse(bundled_schema_text());
  return schema;
}

namespace {

const json& resolve(const json& node, const json& root) {
  if (!node.contains("$ref")) return node;
  const std::string ref = node["$ref"].get<std::string>();
  if (ref.rfind("#/", 0) != 0) throw std::logic_error("schema: only local references are supported: " + ref);
  return resolve(root.at(json::json_pointer(ref.substr(1))), root);
}

bool has_type(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "boolean") return value.is_boolean();
  if (type == "number") return value.is_number();
  if (type == "integer")
    return value.is_number_integer() || (value.is_number_float() && std::floor(value.get<double>()) == value.get<double>());
  return false;
}

std::string where(const std::string& pointer) { return pointer.empty() ? "/" : pointer; }

void check(const json& value, const json& node, const json& root, const std::string& pointer,
           std::vector<std::string>& errors) {
  const json& s = resolve(node, root);

  if (s.contains("type") && !has_type(value, s["type"].get<std::string>())) {
    errors.push_back(where(pointer) + ": expected " + s["type"].get<std::string>() + ", got " + value.type_name());
    return;
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& option : s["enum"]) found = found || option == value;
    if (!found) errors.push_back(where(pointer) + ": " + value.dump() + " is not one of " + s["enum"].dump());
  }
  if (value.is_number()) {
    const double x = value.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>())
      errors.push_back(where(pointer) + ": " + value.dump() + " is below the minimum " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>())
      errors.push_back(where(pointer) + ": " + value.dump() + " is above the maximum " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>()))
      errors.push_back(where(pointer) + ": " + value.dump() + " must exceed " + s["exclusiveMinimum"].dump());
  }
  if (value.is_array()) {
    if (s.contains("minItems") && value.size() < s["minItems"].get<std::size_t>())
      errors.push_back(where(pointer) + ": needs at least " + s["minItems"].dump() + " items");
    if (s.contains("maxItems") && value.size() > s["maxItems"].get<std::size_t>())
      errors.push_back(where(pointer) + ": allows at most " + s["maxItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < value.size(); ++i)
        check(value[i], s["items"], root, pointer + "/" + std::to_string(i), errors);
  }
  if (value.is_object()) {
    std::vector<std::string> missing;
    if (s.contains("required"))
      for (const auto& key : s["required"])
        if (!value.contains(key.get<std::string>())) missing.push_back(key.get<std::string>());
    if (!missing.empty()) {
      std::string list;
      for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
      errors.push_back(where(pointer) + ": missing required keys: " + list);
    }
    const json empty = json::object();
    const json& props = s.contains("properties") ? s["properties"] : empty;
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
    for (const auto& [key, child] : value.items()) {
      if (!key.empty() && key[0] == '$') continue;
      if (props.contains(key))
        check(child, props[key], root, pointer + "/" + key, errors);
      else if (closed)
        errors.push_back(where(pointer) + ": unknown key \"" + key + "\"");
    }
  }
}

}  // namespace

std::vector<std::string> schema_errors(const json& doc, const json& schema) {
  std::vector<std::string> errors;
  check(doc, schema, schema, "", errors);
  return errors;
}

std::vector<std::string> required_blocks(const json& schema, const std::string& command) {
  std::vector<std::string> out;
  if (schema.contains("commands") && schema["commands"].contains(command))
    for (const auto& k : schema["commands"][command]) out.push_back(k.get<std::string>());
  return out;
}

}  // namespace cavqed::cli
