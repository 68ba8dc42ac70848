#pragma once

// Static atomic structure of 40Ca+: the five fine-structure manifolds, their
// Zeeman sub-states, Lande factors, Clebsch-Gordan coupling and the geometry
// of dipole projections.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cavqed/types.hpp"

namespace cavqed {

enum class Manifold : int { S12 = 0, P12 = 1, P32 = 2, D32 = 3, D52 = 4 };

inline constexpr std::array<Manifold, 5> kManifolds = {Manifold::S12, Manifold::P12, Manifold::P32,
                                                       Manifold::D32, Manifold::D52};
inline constexpr int kAtomDimension = 18;

std::string_view label(Manifold m);
std::optional<Manifold> manifold_from_label(std::string_view text);

/// Orbital L and 2J of each manifold; these fix the Hilbert-space layout.
int orbital_l(Manifold m);
int twice_j(Manifold m);

struct LevelManifold {
  Manifold id = Manifold::S12;
  int orbital_l = 0;
  int two_j = 1;
  // Population decay rate Gamma (rad/s); Gamma/2pi is the natural FWHM.
  double decay_rate = 0.0;
  // Fraction of decays ending in each lower manifold.
  std::map<Manifold, double> branching;

  int multiplicity() const { return two_j + 1; }
  double j() const { return 0.5 * two_j; }
  /// Population rate of the branch into `target` (rad/s).
  double partial_rate(Manifold target) const;
};

/// Atomic constants. Immutable once built; the bundled 40Ca+ table is the default.
class AtomData {
 public:
  static const AtomData& ca40();
  /// Parses the bundled schema: label -> {L, J, decay_rate_hz, branching}.
  /// Keys starting with '$' are annotations. Throws ConfigError.
  static AtomData from_json_text(std::string_view text);

  const LevelManifold& manifold(Manifold m) const { return manifolds_[static_cast<int>(m)]; }
  LevelManifold& manifold(Manifold m) { return manifolds_[static_cast<int>(m)]; }

  /// Throws ConfigError when L/J disagree with 40Ca+ or branching does not sum to one.
  void validate() const;

 private:
  std::array<LevelManifold, 5> manifolds_{};
};

/// Embedded copy of data/ca40.json.
std::string_view bundled_atom_json();

struct ZeemanState {
  Manifold manifold = Manifold::S12;
  int two_m = -1;

  double m() const { return 0.5 * two_m; }
  friend bool operator==(const ZeemanState&, const ZeemanState&) = default;
};

/// Checked constructor; m must be in {-J, ..., J}.
ZeemanState make_state(Manifold manifold, double m);
std::string to_string(const ZeemanState& s);

/// All 18 sub-states: S1/2, P1/2, P3/2, D3/2, D5/2, each in increasing m.
const std::vector<ZeemanState>& all_states();
std::vector<ZeemanState> sublevels(Manifold m);
int atom_index(const ZeemanState& s);

double lande_g(Manifold m);
double lande_g(const LevelManifold& m);

/// Linear Zeeman shift g_J m_J mu_B B as an angular frequency.
double zeeman_shift(const ZeemanState& s, double field_gauss);

/// <j1 m1; j2 m2 | J M> with all arguments doubled. Zero outside the triangle.
double clebsch_gordan(int two_j1, int two_m1, int two_j2, int two_m2, int two_J, int two_M);

/// <J_l m_l; 1 q | J_u m_u>. Zero when the dipole selection rules fail.
/// Throws std::invalid_argument if both states belong to one manifold.
double cg_coefficient(const ZeemanState& lower, const ZeemanState& upper, int q);

// Orthonormal triad with z along the quantization axis. For axis = e_z the
// triad is the lab frame.
struct Frame {
  Eigen::Vector3d x, y, z;
};
Frame frame_from_axis(const Eigen::Vector3d& axis);

/// Spherical basis vector e_q in `frame`: e_{+1} = -(x + iy)/sqrt2, e_0 = z, e_{-1} = (x - iy)/sqrt2.
Eigen::Vector3cd spherical_unit(int q, const Frame& frame);

class Polarization {
 public:
  Polarization() = default;

  /// Normalizes `field`. A propagation direction, when given, is stored normalized.
  static Polarization from_vector(const Eigen::Vector3cd& field,
                                  std::optional<Eigen::Vector3d> propagation = std::nullopt);
  /// Components ordered q = -1, 0, +1 in the frame of `axis`.
  static Polarization from_spherical(const std::array<Complex, 3>& components,
                                     const Eigen::Vector3d& axis);
  /// Jones vector (a, b) on the transverse basis (x', y') of frame_from_axis(k).
  static Polarization from_jones(const Eigen::Vector3d& k, Complex a, Complex b);
  static Polarization linear(const Eigen::Vector3d& k, const Eigen::Vector3d& direction);
  /// Pure e_{q} light travelling along `axis`, q = +1 or -1.
  static Polarization circular(const Eigen::Vector3d& axis, int q);

  const Eigen::Vector3cd& vector() const { return field_; }
  const std::optional<Eigen::Vector3d>& propagation() const { return k_; }

  /// Spherical components c_q = e_q^* . eps, ordered q = -1, 0, +1.
  std::array<Complex, 3> spherical(const Eigen::Vector3d& axis) const;
  /// |k . eps|, zero when no propagation direction is attached.
  double longitudinal_component() const;

 private:
  Eigen::Vector3cd field_{Eigen::Vector3cd::UnitX()};
  std::optional<Eigen::Vector3d> k_;
};

/// Overlap e_q^* . eps of the field with the dipole component q, evaluated in
/// the frame of the quantization axis. Throws std::invalid_argument if the
/// field has a component along its own propagation direction.
Complex dipole_projection(const Polarization& pol, int q, const Eigen::Vector3d& quantization_axis);

}  // namespace cavqed
