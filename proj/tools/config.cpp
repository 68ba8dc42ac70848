#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cavqed/localization.hpp"
#include "cavqed/setups.hpp"
#include "cavqed/units.hpp"
#include "output.hpp"
#include "schema.hpp"

namespace cavqed::cli {

using nlohmann::json;

json parse_config(const std::string& text, const std::string& origin) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigValidationError(origin + ": not valid JSON", {e.what()});
  }
}

json load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void validate_config(const json& config, const std::string& command) {
  std::vector<std::string> errors = schema_errors(config, bundled_schema());
  if (config.is_object()) {
    std::string missing;
    for (const auto& key : required_blocks(bundled_schema(), command))
      if (!config.contains(key)) missing += (missing.empty() ? "" : ", ") + key;
    if (!missing.empty()) errors.insert(errors.begin(), "/: missing required keys for '" + command + "': " + missing);
  }
  if (!errors.empty()) throw ConfigValidationError("configuration does not match the schema", errors);
}

std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

double get_or(const json& block, const char* key, double fallback) {
  return block.is_object() && block.contains(key) ? block[key].get<double>() : fallback;
}

int get_or(const json& block, const char* key, int fallback) {
  return block.is_object() && block.contains(key) ? block[key].get<int>() : fallback;
}

bool get_or(const json& block, const char* key, bool fallback) {
  return block.is_object() && block.contains(key) ? block[key].get<bool>() : fallback;
}

std::vector<double> range_values(const json& range) {
  const double a = range["start"].get<double>(), b = range["stop"].get<double>();
  const int n = range["points"].get<int>();
  if (!(b > a)) throw ConfigError("range: stop must exceed start");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
  return out;
}

namespace {

Eigen::Vector3d vec3(const json& v) { return Eigen::Vector3d(v[0].get<double>(), v[1].get<double>(), v[2].get<double>()); }

const json& block(const json& config, const char* key) {
  static const json empty = json::object();
  return config.contains(key) ? config[key] : empty;
}

}  // namespace

AtomData atom_from(const json& config, const std::string& base_dir) {
  const json& a = block(config, "atom");
  if (!a.contains("data_file")) return AtomData::ca40();
  std::filesystem::path p = a["data_file"].get<std::string>();
  if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open atom data " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return AtomData::from_json_text(ss.str());
}

CavityGeometry geometry_from(const json& cavity) {
  CavityGeometry g = reference_cavity();
  g.length = mm(cavity["length_mm"].get<double>());
  g.mirror_radius = mm(cavity["mirror_radius_mm"].get<double>());
  g.wavelength = nm(cavity["wavelength_nm"].get<double>());
  g.kappa = khz(get_or(cavity, "kappa_khz", 50.0));
  return g;
}

MagneticField field_from(const json& config) {
  MagneticField f;
  const json& b = block(config, "field");
  f.gauss = get_or(b, "magnitude_gauss", 0.0);
  if (b.contains("direction")) {
    f.direction = vec3(b["direction"]);
    if (f.direction.norm() == 0.0) throw ConfigError("/field/direction: zero vector");
  }
  return f;
}

DetectionChain detection_from(const json& config) {
  DetectionChain d;
  const json& b = block(config, "detection");
  for (int c = 0; c < 2; ++c) {
    if (b.contains("apd_efficiency")) d.apd_efficiency[c] = b["apd_efficiency"][c].get<double>();
    if (b.contains("path_transmission")) d.path_transmission[c] = b["path_transmission"][c].get<double>();
    if (b.contains("dark_count_rate_hz")) d.dark_count_rate[c] = b["dark_count_rate_hz"][c].get<double>();
  }
  d.output_coupling = get_or(b, "output_coupling", d.output_coupling);
  d.fitted_efficiency = get_or(b, "fitted_efficiency", d.fitted_efficiency);
  if (b.contains("analysis_angle_deg")) d.analysis = analysis_rotation(deg(b["analysis_angle_deg"].get<double>()));
  try {
    validate(d);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("/detection: ") + e.what());
  }
  return d;
}

EvolveOptions evolve_from(const json& config) {
  EvolveOptions o;
  const json& s = block(config, "solver");
  o.rtol = get_or(s, "rtol", o.rtol);
  o.atol = get_or(s, "atol", o.atol);
  if (s.contains("max_steps")) o.max_steps = s["max_steps"].get<long>();
  return o;
}

int n_max_from(const json& config) { return get_or(block(config, "solver"), "n_max", 1); }

LaserField laser_from(const json& l) {
  const std::string role = l["role"].get<std::string>();
  const double rabi = mhz(l["rabi_mhz"].get<double>());
  const double detuning = mhz(get_or(l, "detuning_mhz", 0.0));
  const std::string beam = l.contains("beam") ? l["beam"].get<std::string>() : "custom";

  LaserField out;
  if (role == "drive393" && beam == "A") {
    out = beam_a(rabi, detuning);
  } else if (role == "drive393" && beam == "B") {
    out = beam_b(rabi, detuning);
  } else if (beam != "custom") {
    throw ConfigError("lasers: beam " + beam + " is a 393 nm drive geometry");
  } else if (!l.contains("polarization")) {
    if (role == "repump854") out = repump_854(rabi, detuning);
    else if (role == "repump866") out = repump_866(rabi, detuning);
    else throw ConfigError("lasers: a custom 393 nm drive needs propagation and polarization");
  } else {
    out.role = role == "drive393" ? LaserRole::Drive393 : role == "repump854" ? LaserRole::Repump854 : LaserRole::Repump866;
    out.rabi = rabi;
    out.detuning = detuning;
    if (!l.contains("propagation")) throw ConfigError("lasers: polarization given without propagation");
    const Eigen::Vector3d k = vec3(l["propagation"]);
    const json& p = l["polarization"];
    if (p["type"] == "linear") {
      if (!p.contains("direction")) throw ConfigError("lasers: linear polarization needs a direction");
      out.polarization = Polarization::linear(k, vec3(p["direction"]));
    } else {
      if (!p.contains("helicity")) throw ConfigError("lasers: circular polarization needs a helicity");
      out.polarization = Polarization::circular(k, p["helicity"].get<int>());
    }
    if (out.polarization.longitudinal_component() > 1e-9)
      throw ConfigError("lasers: polarization has a component along the propagation direction");
  }
  out.phase = get_or(l, "phase_rad", 0.0);
  return out;
}

SystemModel model_from(const json& config, const AtomData& atom) {
  SystemModel m;
  m.atom = atom;
  m.field = field_from(config);
  const json& c = block(config, "cavity");
  const Eigen::Vector3d axis = c.contains("axis") ? vec3(c["axis"]) : reference_cavity_axis();
  m.modes = linear_modes(axis, m.field.axis());
  const CavityGeometry geom = geometry_from(c);
  m.kappa = geom.kappa;
  m.cavity_detuning = mhz(get_or(c, "detuning_mhz", -400.0));
  if (c.contains("coupling_mhz")) {
    m.g = mhz(c["coupling_mhz"].get<double>());
  } else {
    const double gamma_pd = 0.5 * atom.manifold(Manifold::P32).partial_rate(Manifold::D52);
    m.g = coupling_reduction(um(get_or(c, "radial_spread_um", 4.7)), mode_waist(geom)) * g0(geom, gamma_pd);
  }
  for (const auto& l : block(config, "lasers")) m.lasers.push_back(laser_from(l));
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

int drive_index(const SystemModel& model, const json& b) {
  if (b.is_object() && b.contains("drive_index")) {
    const int i = b["drive_index"].get<int>();
    if (i >= static_cast<int>(model.lasers.size()) || model.lasers[i].role != LaserRole::Drive393)
      throw ConfigError("drive_index does not name a 393 nm laser");
    return i;
  }
  for (std::size_t i = 0; i < model.lasers.size(); ++i)
    if (model.lasers[i].role == LaserRole::Drive393) return static_cast<int>(i);
  throw ConfigError("lasers: no 393 nm drive configured");
}

}  // namespace cavqed::cli
