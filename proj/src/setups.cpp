#include "cavqed/setups.hpp"

#include <cmath>

#include "cavqed/localization.hpp"
#include "cavqed/optics.hpp"
#include "cavqed/units.hpp"

namespace cavqed {

namespace {

LaserField make(LaserRole role, double rabi, double detuning, const Polarization& pol) {
  LaserField l;
  l.role = role;
  l.rabi = rabi;
  l.detuning = detuning;
  l.polarization = pol;
  return l;
}

}  // namespace

LaserField beam_a(double rabi, double detuning) {
  const Eigen::Vector3d k = Eigen::Vector3d(1.0, 1.0, 0.0).normalized();
  const Eigen::Vector3d e = Eigen::Vector3d(1.0, -1.0, 0.0).normalized();
  return make(LaserRole::Drive393, rabi, detuning, Polarization::linear(k, e));
}

LaserField beam_b(double rabi, double detuning) {
  return make(LaserRole::Drive393, rabi, detuning, Polarization::circular(Eigen::Vector3d::UnitZ(), -1));
}

LaserField repump_854(double rabi, double detuning) {
  return make(LaserRole::Repump854, rabi, detuning,
              Polarization::linear(Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitX()));
}

LaserField repump_866(double rabi, double detuning) {
  return make(LaserRole::Repump866, rabi, detuning,
              Polarization::linear(Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitX()));
}

CavityModes reference_modes() { return linear_modes(reference_cavity_axis(), Eigen::Vector3d::UnitZ()); }

double reference_coupling(const AtomData& atom) {
  const CavityGeometry geom = reference_cavity();
  const double gamma_pd = 0.5 * atom.manifold(Manifold::P32).partial_rate(Manifold::D52);
  return coupling_reduction(um(4.7), mode_waist(geom)) * g0(geom, gamma_pd);
}

SystemModel reference_model(const LaserField& drive, double repump_rabi) {
  SystemModel m;
  m.field.gauss = 4.77;
  m.modes = reference_modes();
  m.g = reference_coupling(m.atom);
  m.kappa = khz(50.0);
  m.cavity_detuning = -mhz(400.0);
  m.lasers = {drive, repump_854(repump_rabi), repump_866(repump_rabi)};
  return m;
}

}  // namespace cavqed
