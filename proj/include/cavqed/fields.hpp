#pragma once

// Classical fields and the cavity mode description shared by the analytic
// Raman layer and the master-equation core.

#include <array>
#include <limits>
#include <string>
#include <utility>

#include "cavqed/atomkit.hpp"

namespace cavqed {

enum class LaserRole { Drive393, Repump854, Repump866 };

std::string_view label(LaserRole role);
/// Lower and upper manifold addressed by a laser role.
std::pair<Manifold, Manifold> transition(LaserRole role);

/// Square pulse with optional sin^2 edges of length `rise`.
struct Envelope {
  double t_on = -std::numeric_limits<double>::infinity();
  double t_off = std::numeric_limits<double>::infinity();
  double rise = 0.0;

  double operator()(double t) const;
  bool is_constant() const;
};

struct LaserField {
  LaserRole role = LaserRole::Drive393;
  double detuning = 0.0;  // omega_laser - omega_atom at zero field, rad/s; red is negative
  double rabi = 0.0;      // Rabi frequency for unit alpha, rad/s
  Polarization polarization;
  double phase = 0.0;     // rad
  Envelope envelope;
};

struct MagneticField {
  double gauss = 0.0;
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();

  Eigen::Vector3d axis() const { return direction.normalized(); }
};

/// Two orthogonal transverse polarization modes of the cavity.
struct CavityModes {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  std::array<Eigen::Vector3cd, 2> polarization{Eigen::Vector3cd::UnitY(), Eigen::Vector3cd::UnitZ()};
  std::array<std::string, 2> names{"H", "V"};
};

/// Linear H/V modes for a cavity orthogonal to B: V along B, H along axis x B.
/// Falls back to the circular basis when the cavity is parallel to B.
CavityModes linear_modes(const Eigen::Vector3d& cavity_axis, const Eigen::Vector3d& field_axis);
/// sigma+/sigma- modes about the cavity axis.
CavityModes circular_modes(const Eigen::Vector3d& cavity_axis);

/// Throws std::invalid_argument unless the two modes are orthonormal and transverse.
void validate(const CavityModes& modes);

}  // namespace cavqed
