#include "cavqed/atomkit.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "cavqed/errors.hpp"
#include "cavqed/units.hpp"

namespace cavqed {

namespace {

constexpr std::array<std::string_view, 5> kLabels = {"S1/2", "P1/2", "P3/2", "D3/2", "D5/2"};
constexpr std::array<int, 5> kOrbitalL = {0, 1, 1, 2, 2};
constexpr std::array<int, 5> kTwiceJ = {1, 1, 3, 3, 5};
constexpr std::array<int, 5> kIndexOffset = {0, 2, 4, 8, 12};

double factorial(int n) {
  static const auto table = [] {
    std::array<double, 41> t{};
    t[0] = 1.0;
    for (int i = 1; i < 41; ++i) t[i] = t[i - 1] * i;
    return t;
  }();
  if (n < 0 || n > 40) throw std::out_of_range("factorial argument");
  return table[n];
}

AtomData parse_atom(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("atom data: top level must be an object");
  AtomData atom;
  std::array<bool, 5> seen{};
  for (const auto& [key, entry] : doc.items()) {
    if (!key.empty() && key.front() == '$') continue;
    const auto id = manifold_from_label(key);
    if (!id) throw ConfigError("atom data: unknown manifold '" + key + "'");
    for (const auto& [field, _] : entry.items()) {
      if (field != "L" && field != "J" && field != "decay_rate_hz" && field != "branching")
        throw ConfigError("atom data: unknown key '" + key + "." + field + "'");
    }
    for (const char* required : {"L", "J", "decay_rate_hz", "branching"}) {
      if (!entry.contains(required))
        throw ConfigError("atom data: missing key '" + key + "." + required + "'");
    }
    LevelManifold& lm = atom.manifold(*id);
    lm.id = *id;
    lm.orbital_l = entry.at("L").get<int>();
    lm.two_j = static_cast<int>(std::lround(2.0 * entry.at("J").get<double>()));
    lm.decay_rate = hz(entry.at("decay_rate_hz").get<double>());
    lm.branching.clear();
    for (const auto& [target, fraction] : entry.at("branching").items()) {
      const auto tid = manifold_from_label(target);
      if (!tid) throw ConfigError("atom data: unknown branching target '" + target + "'");
      lm.branching[*tid] = fraction.get<double>();
    }
    seen[static_cast<int>(*id)] = true;
  }
  for (int i = 0; i < 5; ++i) {
    if (!seen[i]) throw ConfigError("atom data: missing manifold '" + std::string(kLabels[i]) + "'");
  }
  atom.validate();
  return atom;
}

}  // namespace

std::string_view label(Manifold m) { return kLabels[static_cast<int>(m)]; }

std::optional<Manifold> manifold_from_label(std::string_view text) {
  for (int i = 0; i < 5; ++i) {
    if (kLabels[i] == text) return static_cast<Manifold>(i);
  }
  return std::nullopt;
}

int orbital_l(Manifold m) { return kOrbitalL[static_cast<int>(m)]; }
int twice_j(Manifold m) { return kTwiceJ[static_cast<int>(m)]; }

double LevelManifold::partial_rate(Manifold target) const {
  const auto it = branching.find(target);
  return it == branching.end() ? 0.0 : decay_rate * it->second;
}

const AtomData& AtomData::ca40() {
  static const AtomData data = from_json_text(bundled_atom_json());
  return data;
}

AtomData AtomData::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("atom data: ") + e.what());
  }
  try {
    return parse_atom(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("atom data: ") + e.what());
  }
}

void AtomData::validate() const {
  for (const auto& lm : manifolds_) {
    const int i = static_cast<int>(lm.id);
    if (lm.orbital_l != kOrbitalL[i] || lm.two_j != kTwiceJ[i])
      throw ConfigError("atom data: L/J of " + std::string(kLabels[i]) + " differ from 40Ca+");
    if (lm.decay_rate < 0.0) throw ConfigError("atom data: negative decay rate");
    if (lm.decay_rate == 0.0) continue;
    double total = 0.0;
    for (const auto& [target, fraction] : lm.branching) {
      if (fraction < 0.0) throw ConfigError("atom data: negative branching fraction");
      // Decays run downhill only: S < D < P in this scheme.
      const bool upper_is_p = lm.id == Manifold::P12 || lm.id == Manifold::P32;
      if (target == lm.id || (!upper_is_p && target != Manifold::S12) ||
          target == Manifold::P12 || target == Manifold::P32)
        throw ConfigError("atom data: invalid branching target from " + std::string(kLabels[i]));
      total += fraction;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ConfigError("atom data: branching of " + std::string(kLabels[i]) + " sums to " +
                        std::to_string(total));
  }
}

ZeemanState make_state(Manifold manifold, double m) {
  const int two_m = static_cast<int>(std::lround(2.0 * m));
  const int two_j = twice_j(manifold);
  if (std::abs(2.0 * m - two_m) > 1e-9 || std::abs(two_m) > two_j || (two_m + two_j) % 2 != 0)
    throw std::invalid_argument("m_J out of range for " + std::string(label(manifold)));
  return {manifold, two_m};
}

std::string to_string(const ZeemanState& s) {
  std::string m = (s.two_m < 0 ? "-" : "+") + std::to_string(std::abs(s.two_m)) + "/2";
  return std::string(label(s.manifold)) + "," + m;
}

const std::vector<ZeemanState>& all_states() {
  static const std::vector<ZeemanState> states = [] {
    std::vector<ZeemanState> out;
    for (Manifold m : kManifolds) {
      const auto sub = sublevels(m);
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }();
  return states;
}

std::vector<ZeemanState> sublevels(Manifold m) {
  std::vector<ZeemanState> out;
  for (int two_m = -twice_j(m); two_m <= twice_j(m); two_m += 2) out.push_back({m, two_m});
  return out;
}

int atom_index(const ZeemanState& s) {
  return kIndexOffset[static_cast<int>(s.manifold)] + (s.two_m + twice_j(s.manifold)) / 2;
}

double lande_g(Manifold m) {
  const double l = orbital_l(m);
  const double j = 0.5 * twice_j(m);
  constexpr double s = 0.5;
  return 1.5 + (s * (s + 1.0) - l * (l + 1.0)) / (2.0 * j * (j + 1.0));
}

double lande_g(const LevelManifold& m) { return lande_g(m.id); }

double zeeman_shift(const ZeemanState& s, double field_gauss) {
  return lande_g(s.manifold) * s.m() * hz(kBohrMagnetonHzPerGauss) * field_gauss;
}

double clebsch_gordan(int two_j1, int two_m1, int two_j2, int two_m2, int two_J, int two_M) {
  if (two_m1 + two_m2 != two_M) return 0.0;
  if (std::abs(two_m1) > two_j1 || std::abs(two_m2) > two_j2 || std::abs(two_M) > two_J) return 0.0;
  if ((two_j1 + two_m1) % 2 || (two_j2 + two_m2) % 2 || (two_J + two_M) % 2) return 0.0;
  if (two_J > two_j1 + two_j2 || two_J < std::abs(two_j1 - two_j2)) return 0.0;
  if ((two_j1 + two_j2 + two_J) % 2) return 0.0;

  const int a = (two_J + two_j1 - two_j2) / 2;
  const int b = (two_J - two_j1 + two_j2) / 2;
  const int c = (two_j1 + two_j2 - two_J) / 2;
  const int d = (two_j1 + two_j2 + two_J) / 2 + 1;
  const double pre = std::sqrt((two_J + 1) * factorial(a) * factorial(b) * factorial(c) / factorial(d));
  const double norm = std::sqrt(
      factorial((two_J + two_M) / 2) * factorial((two_J - two_M) / 2) * factorial((two_j1 - two_m1) / 2) *
      factorial((two_j1 + two_m1) / 2) * factorial((two_j2 - two_m2) / 2) * factorial((two_j2 + two_m2) / 2));

  double sum = 0.0;
  for (int k = 0; k <= c; ++k) {
    const int t1 = c - k;
    const int t2 = (two_j1 - two_m1) / 2 - k;
    const int t3 = (two_j2 + two_m2) / 2 - k;
    const int t4 = (two_J - two_j2 + two_m1) / 2 + k;
    const int t5 = (two_J - two_j1 - two_m2) / 2 + k;
    if (t1 < 0 || t2 < 0 || t3 < 0 || t4 < 0 || t5 < 0) continue;
    const double term = 1.0 / (factorial(k) * factorial(t1) * factorial(t2) * factorial(t3) *
                               factorial(t4) * factorial(t5));
    sum += (k % 2 ? -term : term);
  }
  return pre * norm * sum;
}

double cg_coefficient(const ZeemanState& lower, const ZeemanState& upper, int q) {
  if (lower.manifold == upper.manifold)
    throw std::invalid_argument("cg_coefficient: states belong to the same manifold");
  if (std::abs(q) > 1) throw std::invalid_argument("cg_coefficient: |q| must be <= 1");
  if (std::abs(orbital_l(lower.manifold) - orbital_l(upper.manifold)) != 1) return 0.0;
  return clebsch_gordan(twice_j(lower.manifold), lower.two_m, 2, 2 * q, twice_j(upper.manifold),
                        upper.two_m);
}

Frame frame_from_axis(const Eigen::Vector3d& axis) {
  Frame f;
  f.z = axis.normalized();
  Eigen::Vector3d ref = Eigen::Vector3d::UnitX();
  if (std::abs(f.z.dot(ref)) > 0.9) ref = Eigen::Vector3d::UnitY();
  f.x = (ref - ref.dot(f.z) * f.z).normalized();
  f.y = f.z.cross(f.x);
  return f;
}

Eigen::Vector3cd spherical_unit(int q, const Frame& frame) {
  const double r = 1.0 / std::sqrt(2.0);
  const Eigen::Vector3cd x = frame.x.cast<Complex>();
  const Eigen::Vector3cd y = frame.y.cast<Complex>();
  switch (q) {
    case 1:
      return -r * (x + kI * y);
    case 0:
      return frame.z.cast<Complex>();
    case -1:
      return r * (x - kI * y);
    default:
      throw std::invalid_argument("spherical_unit: |q| must be <= 1");
  }
}

Polarization Polarization::from_vector(const Eigen::Vector3cd& field,
                                       std::optional<Eigen::Vector3d> propagation) {
  const double n = field.norm();
  if (n == 0.0) throw std::invalid_argument("Polarization: zero field vector");
  Polarization p;
  p.field_ = field / n;
  if (propagation) {
    if (propagation->norm() == 0.0) throw std::invalid_argument("Polarization: zero propagation vector");
    p.k_ = propagation->normalized();
  }
  return p;
}

Polarization Polarization::from_spherical(const std::array<Complex, 3>& components,
                                          const Eigen::Vector3d& axis) {
  const Frame f = frame_from_axis(axis);
  Eigen::Vector3cd v = Eigen::Vector3cd::Zero();
  for (int q = -1; q <= 1; ++q) v += components[q + 1] * spherical_unit(q, f);
  return from_vector(v);
}

Polarization Polarization::from_jones(const Eigen::Vector3d& k, Complex a, Complex b) {
  const Frame f = frame_from_axis(k);
  return from_vector(a * f.x.cast<Complex>() + b * f.y.cast<Complex>(), k);
}

Polarization Polarization::linear(const Eigen::Vector3d& k, const Eigen::Vector3d& direction) {
  return from_vector(direction.cast<Complex>(), k);
}

Polarization Polarization::circular(const Eigen::Vector3d& axis, int q) {
  if (q != 1 && q != -1) throw std::invalid_argument("Polarization::circular: q must be +1 or -1");
  return from_vector(spherical_unit(q, frame_from_axis(axis)), axis);
}

std::array<Complex, 3> Polarization::spherical(const Eigen::Vector3d& axis) const {
  const Frame f = frame_from_axis(axis);
  std::array<Complex, 3> out{};
  // Eigen's dot() conjugates its left operand, so this is e_q^* . eps.
  for (int q = -1; q <= 1; ++q) out[q + 1] = spherical_unit(q, f).dot(field_);
  return out;
}

double Polarization::longitudinal_component() const {
  if (!k_) return 0.0;
  return std::abs(k_->cast<Complex>().dot(field_));
}

Complex dipole_projection(const Polarization& pol, int q, const Eigen::Vector3d& quantization_axis) {
  if (std::abs(q) > 1) throw std::invalid_argument("dipole_projection: |q| must be <= 1");
  if (pol.longitudinal_component() > 1e-9)
    throw std::invalid_argument("dipole_projection: polarization has a longitudinal component");
  return pol.spherical(quantization_axis)[q + 1];
}

}  // namespace cavqed
