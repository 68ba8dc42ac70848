#include "cavqed/localization.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cavqed/errors.hpp"
#include "cavqed/units.hpp"

namespace cavqed {

namespace {

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.c_str();
  while (*begin == ' ' || *begin == '\t') ++begin;
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

}  // namespace

ScanDataset read_scan_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scan data " + path);
  ScanDataset data;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    std::vector<double> values(cells.size());
    bool numeric = cells.size() >= 2 && cells.size() <= 3;
    for (std::size_t i = 0; numeric && i < cells.size(); ++i) numeric = parse_double(cells[i], values[i]);
    if (!numeric) {
      if (data.position.empty() && row == 1) continue;  // header
      throw ConfigError(path + ":" + std::to_string(row) + ": expected position,counts[,stderr]");
    }
    data.position.push_back(values[0]);
    data.counts.push_back(values[1]);
    if (values.size() == 3) data.error.push_back(values[2]);
  }
  if (!data.error.empty() && data.error.size() != data.position.size())
    throw ConfigError(path + ": stderr column present on some rows only");
  return data;
}

double fringe_contrast(double sigma_z, double wavelength) {
  return std::exp(-8.0 * kPi * kPi * sigma_z * sigma_z / (wavelength * wavelength));
}

double standing_wave_intensity(double x, const WavepacketSpread& spread, double wavelength, double waist,
                               double theta) {
  const double envelope = std::exp(-2.0 * x * x / (4.0 * spread.sigma_x * spread.sigma_x + waist * waist));
  const double fringe = std::cos(4.0 * kPi * x * std::tan(theta) / wavelength);
  return envelope * (1.0 - fringe * fringe_contrast(spread.sigma_z, wavelength));
}

std::vector<double> standing_wave_profile(const WavepacketSpread& spread, double wavelength, double waist,
                                          double theta, const std::vector<double>& x) {
  if (waist <= 0.0) throw std::invalid_argument("standing_wave_profile: waist must be positive");
  std::vector<double> out;
  out.reserve(x.size());
  for (double xi : x) out.push_back(standing_wave_intensity(xi, spread, wavelength, waist, theta));
  return out;
}

double visibility_to_sigma(double visibility, double wavelength) {
  if (!(visibility > 0.0) || visibility > 1.0)
    throw std::domain_error("visibility_to_sigma: visibility must lie in (0, 1]");
  return wavelength / kTwoPi * std::sqrt(-std::log(visibility) / 2.0);
}

double sigma_to_visibility(double sigma_z, double wavelength) { return fringe_contrast(sigma_z, wavelength); }

double coupling_reduction(double sigma_x, double waist) {
  if (sigma_x < 0.0) throw std::domain_error("coupling_reduction: negative spread");
  return 1.0 / std::sqrt(1.0 + 2.0 * sigma_x * sigma_x / (waist * waist));
}

double standing_wave_scan(double piezo, double amplitude, double visibility, double background, double gain,
                          double wavelength) {
  const double k = kTwoPi / wavelength;
  return background + amplitude * (1.0 - visibility * std::cos(2.0 * k * gain * piezo)) / 2.0;
}

double fringe_count_to_angle(double n_fringes, double span, double wavelength) {
  if (span <= 0.0) throw std::domain_error("fringe_count_to_angle: span must be positive");
  return std::atan(n_fringes * wavelength / 2.0 / span);
}

double angle_to_fringe_count(double theta, double span, double wavelength) {
  return span * std::tan(theta) / (wavelength / 2.0);
}

std::array<double, 2> two_ion_couplings(double center, double spacing, double waist, double theta,
                                        double wavelength) {
  std::array<double, 2> g{};
  for (int i = 0; i < 2; ++i) {
    const double x = center + (i == 0 ? -0.5 : 0.5) * spacing;
    const double z = x * std::tan(theta);
    g[i] = std::exp(-x * x / (waist * waist)) * std::abs(std::sin(kTwoPi * z / wavelength));
  }
  return g;
}

WaistFit fit_waist_scan(const ScanDataset& data, double wavelength, double waist, double theta,
                        const WaistFitGuess& guess, const FitOptions& options) {
  const int m = static_cast<int>(data.position.size());
  if (m < 8) throw std::invalid_argument("fit_waist_scan: need at least 8 points");
  if (static_cast<int>(data.counts.size()) != m) throw std::invalid_argument("fit_waist_scan: column lengths differ");
  const bool weighted = !data.error.empty();

  // Parameters in um / nm so the Jacobian columns are of comparable size.
  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const WavepacketSpread s{std::abs(p[0]) * 1e-6, 0.0, std::abs(p[1]) * 1e-9};
    for (int i = 0; i < m; ++i) {
      const double model = p[4] + p[2] * standing_wave_intensity(data.position[i] - p[3] * 1e-6, s, wavelength,
                                                                 waist, theta);
      r[i] = model - data.counts[i];
      if (weighted) r[i] /= data.error[i];
    }
  };
  Eigen::VectorXd start(5);
  start << guess.sigma_x * 1e6, guess.sigma_z * 1e9, guess.amplitude, guess.center * 1e6, guess.offset;
  const FitResult fit = least_squares(residuals, m, start, options);

  WaistFit out;
  out.spread = {std::abs(fit.parameters[0]) * 1e-6, 0.0, std::abs(fit.parameters[1]) * 1e-9};
  out.amplitude = fit.parameters[2];
  out.center = fit.parameters[3] * 1e-6;
  out.offset = fit.parameters[4];
  out.sigma_x_error = fit.standard_error[0] * 1e-6;
  out.sigma_z_error = fit.standard_error[1] * 1e-9;
  out.amplitude_error = fit.standard_error[2];
  out.center_error = fit.standard_error[3] * 1e-6;
  out.offset_error = fit.standard_error[4];
  out.cost = fit.cost;
  out.iterations = fit.iterations;
  out.degenerate = !(std::abs(out.amplitude) > 3.0 * out.amplitude_error) || std::abs(out.amplitude) < 1e-12;
  return out;
}

}  // namespace cavqed
