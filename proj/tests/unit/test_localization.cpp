#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <boost/math/quadrature/gauss.hpp>
#include <gsl/gsl_integration.h>

#include "cavqed/errors.hpp"
#include "cavqed/localization.hpp"
#include "cavqed/units.hpp"

using namespace cavqed;

namespace {

// Gaussian envelope averaged over the wavepacket, integrated on the real line in units of sigma_x.
double quadrature_coupling(double sigma_x, double waist) {
  double r = sigma_x / waist;
  gsl_function f;
  f.function = [](double u, void* v) {
    const double q = *static_cast<double*>(v);
    return std::exp(-u * u * q * q) * std::exp(-u * u / 2.0) / std::sqrt(2.0 * kPi);
  };
  f.params = &r;
  gsl_integration_workspace* ws = gsl_integration_workspace_alloc(1000);
  double result = 0.0, error = 0.0;
  gsl_integration_qagi(&f, 1e-14, 1e-13, 1000, ws, &result, &error);
  gsl_integration_workspace_free(ws);
  return result;
}

double gaussian(double u, double s) { return std::exp(-u * u / (2.0 * s * s)) / (std::sqrt(2.0 * kPi) * s); }

// Cavity intensity at ion position x along the tilted trap axis, averaged over a 3D
// Gaussian wavepacket by direct quadrature (cavity axis z, trap axis in xz).
double convolved_intensity(double x, const WavepacketSpread& s, double lambda, double waist, double theta) {
  using boost::math::quadrature::gauss;
  const double k = kTwoPi / lambda;
  auto field = [&](double u, double w, double v) {
    const double r2 = (x + u) * (x + u) + w * w;
    const double sn = std::sin(k * (x * std::tan(theta) + v));
    return std::exp(-2.0 * r2 / (waist * waist)) * sn * sn;
  };
  return gauss<double, 40>::integrate(
      [&](double u) {
        return gaussian(u, s.sigma_x) * gauss<double, 40>::integrate(
                                            [&](double w) {
                                              return gaussian(w, s.sigma_y) *
                                                     gauss<double, 40>::integrate(
                                                         [&](double v) { return gaussian(v, s.sigma_z) * field(u, w, v); },
                                                         -9.0 * s.sigma_z, 9.0 * s.sigma_z);
                                            },
                                            -9.0 * s.sigma_y, 9.0 * s.sigma_y);
      },
      -9.0 * s.sigma_x, 9.0 * s.sigma_x);
}

ScanDataset synthetic_scan(const WavepacketSpread& s, double lambda, double waist, double theta, double amplitude,
                           double offset, int points = 241) {
  ScanDataset d;
  for (int i = 0; i < points; ++i) {
    const double x = um(-30.0) + um(60.0) * i / (points - 1);
    d.position.push_back(x);
    d.counts.push_back(offset + amplitude * standing_wave_intensity(x, s, lambda, waist, theta));
  }
  return d;
}

}  // namespace

TEST_CASE("coupling reduction closed form against quadrature") {
  for (double sx : {0.5, 2.0, 4.7, 10.0, 30.0}) {
    const double closed = coupling_reduction(um(sx), um(13.2));
    CHECK(std::abs(quadrature_coupling(um(sx), um(13.2)) - closed) < 1e-10);
  }
  CHECK(coupling_reduction(um(4.7), um(13.2)) == doctest::Approx(0.89).epsilon(0.01 / 0.89));
  CHECK(coupling_reduction(0.0, um(13.2)) == 1.0);
  double prev = 1.0;
  for (double sx = 1.0; sx < 1e4; sx *= 2.0) {
    const double c = coupling_reduction(um(sx), um(13.2));
    CHECK(c < prev);
    prev = c;
  }
  CHECK(prev < 0.01);
  CHECK_THROWS_AS(coupling_reduction(-1e-6, um(13.2)), std::domain_error);
}

TEST_CASE("closed-form profile matches a 3D convolution") {
  const double lambda = nm(866), waist = um(13.2), theta = deg(4.0);
  const WavepacketSpread s{um(4.7), um(3.0), nm(48)};
  // The closed form is the convolution up to the constant prefactors of the transverse
  // Gaussians and the 1/2 of sin^2.
  const double norm = 0.5 / std::sqrt(1.0 + 4.0 * s.sigma_x * s.sigma_x / (waist * waist)) /
                      std::sqrt(1.0 + 4.0 * s.sigma_y * s.sigma_y / (waist * waist));
  for (double x : {-12.0, -5.3, -0.4, 0.0, 1.1, 3.7, 8.0, 15.0}) {
    const double numeric = convolved_intensity(um(x), s, lambda, waist, theta);
    const double closed = norm * standing_wave_intensity(um(x), s, lambda, waist, theta);
    CHECK(std::abs(numeric - closed) <= 1e-6 * std::abs(closed));
  }
}

TEST_CASE("point particle gives a fully modulated gaussian") {
  const WavepacketSpread s{};
  const double lambda = nm(866), theta = deg(4.0);
  CHECK(fringe_contrast(0.0, lambda) == 1.0);
  // Nodes of the standing wave reach zero.
  const double node = lambda / (2.0 * std::tan(theta));
  CHECK(standing_wave_intensity(node, s, lambda, um(13.2), theta) == doctest::Approx(0.0));
  CHECK(standing_wave_intensity(0.0, s, lambda, um(13.2), theta) == doctest::Approx(0.0));
  const double x = node / 2;
  CHECK(standing_wave_intensity(x, s, lambda, um(13.2), theta) ==
        doctest::Approx(2.0 * std::exp(-2.0 * x * x / (um(13.2) * um(13.2)))));
  CHECK_THROWS_AS(standing_wave_profile(s, lambda, 0.0, theta, {0.0}), std::invalid_argument);
}

TEST_CASE("no tilt leaves a plain gaussian envelope") {
  const WavepacketSpread s{um(4.7), 0.0, nm(48)};
  const double lambda = nm(866), waist = um(13.2);
  const double w_eff2 = (4.0 * s.sigma_x * s.sigma_x + waist * waist) / 2.0;
  const double c = 1.0 - fringe_contrast(s.sigma_z, lambda);
  for (double x : {0.0, 3.0, 7.5, 20.0})
    CHECK(standing_wave_intensity(um(x), s, lambda, waist, 0.0) ==
          doctest::Approx(c * std::exp(-um(x) * um(x) / w_eff2)).epsilon(1e-12));
}

TEST_CASE("fringe contrast of the fitted axial spread") {
  // Direct evaluation; 48 nm leaves about 0.78 at 854 nm.
  const double c = fringe_contrast(nm(48), nm(854));
  CHECK(c == doctest::Approx(std::exp(-8.0 * kPi * kPi * 48.0 * 48.0 / (854.0 * 854.0))));
  CHECK(c > 0.7);
  CHECK(c < 0.8);
}

TEST_CASE("visibility and localization") {
  const double s = visibility_to_sigma(0.98, nm(854));
  CHECK(s > nm(13.0));
  CHECK(s < nm(14.0));
  CHECK(std::abs(s - nm(13.0)) <= nm(7.0));
  CHECK(visibility_to_sigma(1.0, nm(854)) == 0.0);
  for (double v : {1e-6, 0.01, 0.3, 0.76, 0.98, 1.0})
    CHECK(std::abs(sigma_to_visibility(visibility_to_sigma(v, nm(854)), nm(854)) - v) < 1e-12);
  CHECK_THROWS_AS(visibility_to_sigma(1.01, nm(854)), std::domain_error);
  CHECK_THROWS_AS(visibility_to_sigma(0.0, nm(854)), std::domain_error);
  CHECK_THROWS_AS(visibility_to_sigma(-0.5, nm(854)), std::domain_error);
}

TEST_CASE("fringe count and tilt angle") {
  const double n = angle_to_fringe_count(deg(4.0), um(60), nm(866));
  CHECK(n == doctest::Approx(9.7).epsilon(0.01));
  CHECK(fringe_count_to_angle(n, um(60), nm(866)) == doctest::Approx(deg(4.0)).epsilon(1e-12));
  CHECK(fringe_count_to_angle(0.0, um(60), nm(866)) == 0.0);
  double prev = -1.0;
  for (double k = 0.0; k < 50.0; k += 0.5) {
    const double a = fringe_count_to_angle(k, um(60), nm(866));
    CHECK(a > prev);
    prev = a;
  }
  CHECK_THROWS_AS(fringe_count_to_angle(1.0, 0.0, nm(866)), std::domain_error);
}

TEST_CASE("standing-wave scan model") {
  const double lambda = nm(854), gain = nm(50);  // 50 nm per volt
  CHECK(standing_wave_scan(0.0, 100.0, 0.98, 5.0, gain, lambda) == doctest::Approx(5.0 + 1.0));
  const double half = lambda / 4.0 / gain;  // quarter wave moves a node onto an antinode
  CHECK(standing_wave_scan(half, 100.0, 0.98, 5.0, gain, lambda) == doctest::Approx(5.0 + 99.0));
}

TEST_CASE("two ions on the standing wave") {
  const double lambda = nm(866), theta = deg(4.0), waist = um(13.2);
  const double node = lambda / (2.0 * std::tan(theta));
  const auto g = two_ion_couplings(0.0, node, waist, theta, lambda);
  CHECK(g[0] == doctest::Approx(g[1]));
  const auto h = two_ion_couplings(node / 2.0, node, waist, theta, lambda);
  CHECK(h[0] < 1e-12);
  CHECK(h[1] < 1e-12);
}

TEST_CASE("waist scan fit round trip") {
  const double lambda = nm(866), waist = um(13.2), theta = deg(4.0);
  const WavepacketSpread truth{um(4.7), 0.0, nm(48)};
  const ScanDataset d = synthetic_scan(truth, lambda, waist, theta, 1000.0, 20.0);
  WaistFitGuess g;
  g.sigma_x = um(3.5);
  g.sigma_z = nm(30);
  g.amplitude = 800.0;
  g.center = um(0.02);
  g.offset = 10.0;
  const WaistFit fit = fit_waist_scan(d, lambda, waist, theta, g);
  CHECK(fit.spread.sigma_x == doctest::Approx(truth.sigma_x).epsilon(1e-6));
  CHECK(fit.spread.sigma_z == doctest::Approx(truth.sigma_z).epsilon(1e-6));
  CHECK(fit.amplitude == doctest::Approx(1000.0).epsilon(1e-6));
  CHECK(std::abs(fit.center) < 1e-12);
  CHECK(fit.offset == doctest::Approx(20.0).epsilon(1e-6));
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.spread.sigma_y == 0.0);
}

TEST_CASE("waist scan fit error bars are calibrated") {
  const double lambda = nm(866), waist = um(13.2), theta = deg(4.0);
  const WavepacketSpread truth{um(4.7), 0.0, nm(48)};
  const ScanDataset clean = synthetic_scan(truth, lambda, waist, theta, 1000.0, 20.0, 121);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 1.0);
  int inside = 0, trials = 100;
  for (int t = 0; t < trials; ++t) {
    ScanDataset d = clean;
    for (std::size_t i = 0; i < d.counts.size(); ++i) {
      d.error.push_back(0.05 * clean.counts[i]);
      d.counts[i] = clean.counts[i] * (1.0 + 0.05 * noise(rng));
    }
    WaistFitGuess g;
    g.sigma_x = um(4.0);
    g.amplitude = 900.0;
    g.offset = 20.0;
    const WaistFit fit = fit_waist_scan(d, lambda, waist, theta, g);
    if (std::abs(fit.spread.sigma_x - truth.sigma_x) <= 3.0 * fit.sigma_x_error) ++inside;
  }
  // 3 sigma covers 99.7%; allow the binomial spread of 100 trials.
  CHECK(inside >= 95);
}

TEST_CASE("flat data is flagged") {
  ScanDataset d;
  for (int i = 0; i < 40; ++i) {
    d.position.push_back(um(-20.0 + i));
    d.counts.push_back(50.0 + (i % 2 ? 0.5 : -0.5));
  }
  bool flagged = false;
  try {
    const WaistFit fit = fit_waist_scan(d, nm(866), um(13.2), deg(4.0));
    flagged = fit.degenerate;
  } catch (const FitNotConvergedError&) {
    flagged = true;
  }
  CHECK(flagged);
  ScanDataset small;
  small.position = {0, 1, 2};
  small.counts = {1, 2, 3};
  CHECK_THROWS_AS(fit_waist_scan(small, nm(866), um(13.2), deg(4.0)), std::invalid_argument);
}

TEST_CASE("scan csv ingestion") {
  const auto path = std::filesystem::temp_directory_path() / "cavqed_scan_test.csv";
  {
    std::ofstream out(path);
    out << "position_m,counts,stderr\n1e-6,10,1\n2e-6,12,1.5\n";
  }
  const ScanDataset d = read_scan_csv(path.string());
  CHECK(d.position.size() == 2);
  CHECK(d.counts[1] == 12.0);
  CHECK(d.error[1] == 1.5);
  {
    std::ofstream out(path);
    out << "position_m,counts\n1e-6,10\nnot,a number\n";
  }
  CHECK_THROWS_AS(read_scan_csv(path.string()), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_scan_csv(path.string()), ConfigError);
}
