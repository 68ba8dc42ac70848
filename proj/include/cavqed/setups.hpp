#pragma once

// Beam and cavity geometry of the reference apparatus: B along z, cavity along x.

#include "cavqed/lindblad.hpp"
#include "cavqed/units.hpp"

namespace cavqed {

inline Eigen::Vector3d reference_cavity_axis() { return Eigen::Vector3d::UnitX(); }

/// Beam A: propagates along (x + y)/sqrt2 perpendicular to B, linearly polarized
/// perpendicular to B, so it drives sigma+ and sigma- equally.
LaserField beam_a(double rabi, double detuning);
/// Beam B: propagates along B with sigma- polarization.
LaserField beam_b(double rabi, double detuning);
/// Repumps propagate along y, polarized along x.
LaserField repump_854(double rabi, double detuning = 0.0);
LaserField repump_866(double rabi, double detuning = 0.0);

/// H/V modes of a cavity along x with B along z.
CavityModes reference_modes();

/// Coupling for unit beta at the ion: g0 of the reference cavity reduced by 4.7 um radial motion.
double reference_coupling(const AtomData& atom = AtomData::ca40());

/// 4.77 G, cavity 400 MHz red of P3/2 - D5/2, kappa 2pi x 50 kHz, the given drive and
/// resonant 854/866 repumps.
SystemModel reference_model(const LaserField& drive, double repump_rabi = mhz(10.0));

}  // namespace cavqed
