#pragma once

// Ion-cavity relative position: Gaussian wavepacket averaged over the cavity
// standing wave, visibility <-> localization, and waist-scan fits.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cavqed/fit.hpp"

namespace cavqed {

/// Gaussian rms spreads; z along the cavity axis, the trap axis in the xz-plane.
struct WavepacketSpread {
  double sigma_x = 0.0;
  double sigma_y = 0.0;  // not identifiable from the scans, carried for reporting only
  double sigma_z = 0.0;
};

struct ScanDataset {
  std::vector<double> position;  // m, or piezo volts
  std::vector<double> counts;
  std::vector<double> error;     // optional per-point standard errors
  double background = 0.0;
};

/// Reads "position_or_voltage,counts[,stderr]" rows; a non-numeric first row is a header.
/// Throws ConfigError on malformed rows.
ScanDataset read_scan_csv(const std::string& path);

/// exp(-8 pi^2 sigma_z^2 / lambda^2), the fringe contrast left after averaging.
double fringe_contrast(double sigma_z, double wavelength);

/// Averaged intensity along the trap axis, exp(-2x^2/(4 sx^2 + w0^2)) (1 - C cos(4 pi x tan(theta)/lambda)).
double standing_wave_intensity(double x, const WavepacketSpread& spread, double wavelength, double waist,
                               double theta);
std::vector<double> standing_wave_profile(const WavepacketSpread& spread, double wavelength, double waist,
                                          double theta, const std::vector<double>& x);

/// Localization along the cavity axis from a fringe visibility. Throws std::domain_error outside (0, 1].
double visibility_to_sigma(double visibility, double wavelength);
double sigma_to_visibility(double sigma_z, double wavelength);

/// g_obs / g0 = 1 / sqrt(1 + 2 sx^2 / w0^2).
double coupling_reduction(double sigma_x, double waist);

/// Standing-wave scan model: background + A [1 - V cos(2 k z)] / 2, with z = gain x piezo.
double standing_wave_scan(double piezo, double amplitude, double visibility, double background, double gain,
                          double wavelength);

/// Fringe tilt: theta = atan(n (lambda/2) / span).
double fringe_count_to_angle(double n_fringes, double span, double wavelength);
double angle_to_fringe_count(double theta, double span, double wavelength);

/// |g| / g0 of two ions placed symmetrically about `center` along the trap axis.
std::array<double, 2> two_ion_couplings(double center, double spacing, double waist, double theta, double wavelength);

struct WaistFitGuess {
  double sigma_x = 4e-6;
  double sigma_z = 40e-9;
  double amplitude = 1.0;
  double center = 0.0;
  double offset = 0.0;
};

struct WaistFit {
  WavepacketSpread spread;  // sigma_y stays 0: not constrained
  double amplitude = 0.0;
  double center = 0.0;
  double offset = 0.0;
  // Standard errors, same units.
  double sigma_x_error = 0.0;
  double sigma_z_error = 0.0;
  double amplitude_error = 0.0;
  double center_error = 0.0;
  double offset_error = 0.0;
  double cost = 0.0;
  int iterations = 0;
  bool degenerate = false;  // amplitude indistinguishable from zero
};

/// Fits offset + A I(x - x0) with fixed wavelength, waist and tilt. Needs at least 8 points.
/// Throws FitNotConvergedError.
WaistFit fit_waist_scan(const ScanDataset& data, double wavelength, double waist, double theta,
                        const WaistFitGuess& guess = {}, const FitOptions& options = {});

}  // namespace cavqed
