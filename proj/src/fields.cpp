#include "cavqed/fields.hpp"

#include <cmath>
#include <stdexcept>

#include "cavqed/units.hpp"

namespace cavqed {

std::string_view label(LaserRole role) {
  switch (role) {
    case LaserRole::Drive393:
      return "drive393";
    case LaserRole::Repump854:
      return "repump854";
    case LaserRole::Repump866:
      return "repump866";
  }
  return "?";
}

std::pair<Manifold, Manifold> transition(LaserRole role) {
  switch (role) {
    case LaserRole::Drive393:
      return {Manifold::S12, Manifold::P32};
    case LaserRole::Repump854:
      return {Manifold::D52, Manifold::P32};
    case LaserRole::Repump866:
      return {Manifold::D32, Manifold::P12};
  }
  throw std::invalid_argument("unknown laser role");
}

double Envelope::operator()(double t) const {
  if (t < t_on || t > t_off) return 0.0;
  if (rise <= 0.0) return 1.0;
  const double from_start = t - t_on;
  const double to_end = t_off - t;
  const double edge = std::min(from_start, to_end);
  if (edge >= rise) return 1.0;
  const double s = std::sin(0.5 * kPi * edge / rise);
  return s * s;
}

bool Envelope::is_constant() const { return std::isinf(t_on) && std::isinf(t_off); }

CavityModes linear_modes(const Eigen::Vector3d& cavity_axis, const Eigen::Vector3d& field_axis) {
  const Eigen::Vector3d k = cavity_axis.normalized();
  const Eigen::Vector3d b = field_axis.normalized();
  const Eigen::Vector3d h = k.cross(b);
  if (h.norm() < 1e-9) return circular_modes(k);
  CavityModes m;
  m.axis = k;
  const Eigen::Vector3d hn = h.normalized();
  const Eigen::Vector3d v = hn.cross(k).normalized();
  m.polarization = {hn.cast<Complex>(), v.cast<Complex>()};
  m.names = {"H", "V"};
  return m;
}

CavityModes circular_modes(const Eigen::Vector3d& cavity_axis) {
  CavityModes m;
  m.axis = cavity_axis.normalized();
  const Frame f = frame_from_axis(m.axis);
  m.polarization = {spherical_unit(1, f), spherical_unit(-1, f)};
  m.names = {"sigma+", "sigma-"};
  return m;
}

void validate(const CavityModes& modes) {
  const Eigen::Vector3cd k = modes.axis.normalized().cast<Complex>();
  for (const auto& p : modes.polarization) {
    if (std::abs(p.norm() - 1.0) > 1e-9) throw std::invalid_argument("cavity mode polarization not normalized");
    if (std::abs(k.dot(p)) > 1e-9) throw std::invalid_argument("cavity mode polarization not transverse");
  }
  if (std::abs(modes.polarization[0].dot(modes.polarization[1])) > 1e-9)
    throw std::invalid_argument("cavity modes are not orthogonal");
}

}  // namespace cavqed
