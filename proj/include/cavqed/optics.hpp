#pragma once

// Cavity geometry and the detection chain behind the cavity output mirror.

#include <array>

#include "cavqed/types.hpp"

namespace cavqed {

struct CavityGeometry {
  double length = 0.0;            // m
  double mirror_radius = 0.0;     // m
  double wavelength = 0.0;        // m
  double transmission1 = 0.0;     // mirror power transmissions
  double transmission2 = 0.0;
  double round_trip_loss = 0.0;
  double kappa = 0.0;             // field decay rate, rad/s (measured input)
};

/// Defaults: near-concentric 854 nm cavity around the trap.
CavityGeometry reference_cavity();

/// TEM00 waist sqrt((lambda/2pi) sqrt(L(2R - L))). Throws UnstableResonatorError outside 0 < L < 2R.
double mode_waist(const CavityGeometry& geom);
double rayleigh_range(const CavityGeometry& geom);

/// Maximal ion-cavity coupling sqrt(3 c gamma lambda^2 / (pi^2 L w0^2)) in rad/s, where
/// gamma_pd is the P3/2 -> D5/2 partial amplitude decay rate (half the population rate).
double g0(const CavityGeometry& geom, double gamma_pd);
/// Same expression with an explicitly supplied waist.
double g0_for_waist(double length, double wavelength, double waist, double gamma_pd);

struct DetectionChain {
  std::array<double, 2> apd_efficiency{0.49, 0.46};
  std::array<double, 2> path_transmission{0.87, 0.86};
  double output_coupling = 0.19;
  std::array<double, 2> dark_count_rate{33.1, 33.6};  // counts/s
  // Rows are detectors, columns the cavity modes {H, V}.
  Eigen::Matrix2cd analysis = Eigen::Matrix2cd::Identity();
  // When set, replaces the per-channel products with one fitted scalar.
  double fitted_efficiency = -1.0;
};

/// Overall detection probability per channel: APD x path x output coupling.
std::array<double, 2> channel_efficiency(const DetectionChain& chain);

/// Probability that a cavity photon with Jones vector `mode_amplitudes` on {H, V} is
/// detected on either APD.
double detection_probability(const DetectionChain& chain, const Eigen::Vector2cd& mode_amplitudes);

/// Waveplate-equivalent rotation of the analysis axes by `angle` (rad).
Eigen::Matrix2cd analysis_rotation(double angle);

/// Throws std::invalid_argument if any factor leaves [0, 1] or the basis is not unitary.
void validate(const DetectionChain& chain);

}  // namespace cavqed
