#include "cavqed/optics.hpp"

#include <cmath>
#include <stdexcept>

#include "cavqed/errors.hpp"
#include "cavqed/units.hpp"

namespace cavqed {

CavityGeometry reference_cavity() {
  CavityGeometry g;
  g.length = mm(19.96);
  g.mirror_radius = mm(10.02);
  g.wavelength = nm(854.0);
  g.transmission1 = 1.3e-6;
  g.transmission2 = 13e-6;
  g.kappa = khz(50.0);
  return g;
}

double mode_waist(const CavityGeometry& geom) {
  const double l = geom.length;
  const double r = geom.mirror_radius;
  if (!(l > 0.0) || !(l < 2.0 * r))
    throw UnstableResonatorError("mode_waist: resonator requires 0 < L < 2R");
  if (!(geom.wavelength > 0.0)) throw std::invalid_argument("mode_waist: wavelength must be positive");
  return std::sqrt(geom.wavelength / kTwoPi * std::sqrt(l * (2.0 * r - l)));
}

double rayleigh_range(const CavityGeometry& geom) {
  const double w0 = mode_waist(geom);
  return kPi * w0 * w0 / geom.wavelength;
}

double g0_for_waist(double length, double wavelength, double waist, double gamma_pd) {
  if (!(gamma_pd > 0.0)) throw std::invalid_argument("g0: decay rate must be positive");
  return std::sqrt(3.0 * kSpeedOfLight * gamma_pd * wavelength * wavelength /
                   (kPi * kPi * length * waist * waist));
}

double g0(const CavityGeometry& geom, double gamma_pd) {
  return g0_for_waist(geom.length, geom.wavelength, mode_waist(geom), gamma_pd);
}

std::array<double, 2> channel_efficiency(const DetectionChain& chain) {
  if (chain.fitted_efficiency >= 0.0) return {chain.fitted_efficiency, chain.fitted_efficiency};
  std::array<double, 2> out{};
  for (int i = 0; i < 2; ++i)
    out[i] = chain.apd_efficiency[i] * chain.path_transmission[i] * chain.output_coupling;
  return out;
}

double detection_probability(const DetectionChain& chain, const Eigen::Vector2cd& mode_amplitudes) {
  const auto eff = channel_efficiency(chain);
  const Eigen::Vector2cd at_detectors = chain.analysis * mode_amplitudes.normalized();
  return eff[0] * std::norm(at_detectors[0]) + eff[1] * std::norm(at_detectors[1]);
}

Eigen::Matrix2cd analysis_rotation(double angle) {
  Eigen::Matrix2cd u;
  u << std::cos(angle), std::sin(angle), -std::sin(angle), std::cos(angle);
  return u;
}

void validate(const DetectionChain& chain) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (int i = 0; i < 2; ++i) {
    if (!unit(chain.apd_efficiency[i]) || !unit(chain.path_transmission[i]))
      throw std::invalid_argument("DetectionChain: efficiencies must lie in [0, 1]");
    if (chain.dark_count_rate[i] < 0.0) throw std::invalid_argument("DetectionChain: negative dark count rate");
  }
  if (!unit(chain.output_coupling)) throw std::invalid_argument("DetectionChain: output coupling must lie in [0, 1]");
  if (chain.fitted_efficiency > 1.0) throw std::invalid_argument("DetectionChain: fitted efficiency above 1");
  const Eigen::Matrix2cd gram = chain.analysis.adjoint() * chain.analysis;
  if ((gram - Eigen::Matrix2cd::Identity()).norm() > 1e-12)
    throw std::invalid_argument("DetectionChain: analysis basis is not unitary");
}

}  // namespace cavqed
