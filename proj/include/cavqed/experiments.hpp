#pragma once

// Simulated counterparts of the lab measurements: Raman spectrum scans with
// motional satellites, single-photon pulses, bichromatic entanglement and state
// mapping, and the qubit Rabi/Ramsey dynamics.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cavqed/lindblad.hpp"
#include "cavqed/raman.hpp"

namespace cavqed {

// ---------------------------------------------------------------- spectra

struct ScanPoint {
  double detuning = 0.0;           // drive detuning, rad/s
  std::array<double, 2> rate{};    // detector count rates incl. dark counts, 1/s
  bool converged = false;
  double residual = 0.0;
  std::array<double, 2> s_population{};  // |S,-1/2>, |S,+1/2>
  std::string error;

  double total() const { return rate[0] + rate[1]; }
};

struct SpectrumPeak {
  double detuning = 0.0;  // refined position, rad/s
  double height = 0.0;    // total rate at the maximum, dark counts included
  std::array<double, 2> rate{};
  int channel = 0;
  double width = 0.0;     // FWHM above the dark floor, rad/s; NaN when a side is not resolved
  std::vector<int> lines;  // matched entries of ScanResult::lines
  double predicted = 0.0;
  int expected_channel = -1;

  bool matched() const { return !lines.empty(); }
  bool channel_matches() const { return expected_channel == channel; }
};

struct ScanResult {
  std::vector<ScanPoint> points;
  std::array<double, 2> dark{};
  double dwell = 0.0;  // s of detection per grid point
  std::vector<RamanLine> lines;
  std::vector<SpectrumPeak> peaks;

  double dark_total() const { return dark[0] + dark[1]; }
  std::vector<double> detunings() const;
  /// Peaks whose height above the dark floor is at least `fraction` of the tallest.
  std::vector<SpectrumPeak> dominant_peaks(double fraction = 0.1) const;
  int failed_points() const;
};

struct SpectrumOptions {
  int drive = 0;       // index of the scanned laser in the model
  int n_max = 1;
  int jobs = 1;
  double dwell = 75e-3;  // 250 repetitions of 300 us
  double peak_threshold = 3.0;  // multiples of the dark floor
};

/// Steady-state count rates over a grid of drive detunings. Per-point solver
/// failures are recorded in the point and do not abort the scan.
ScanResult raman_spectrum(const SystemModel& model, const std::vector<double>& detunings,
                          const DetectionChain& chain, const SpectrumOptions& options = {});

/// Local maxima of the summed rate above threshold x dark floor, refined by a parabola
/// through the three highest samples.
std::vector<SpectrumPeak> find_peaks(const std::vector<ScanPoint>& points, const std::array<double, 2>& dark,
                                     double threshold = 3.0);

/// Labels each peak with the predicted lines closest to it (within max(width, grid step)).
void match_lines(std::vector<SpectrumPeak>& peaks, const std::vector<RamanLine>& lines, double grid_step);

/// Raman lines of the scanned drive, with light shifts from the other drive lasers.
std::vector<RamanLine> predicted_lines(const SystemModel& model, int drive);

struct MotionalMode {
  std::string name;
  double frequency = 0.0;  // rad/s
  double eta = 0.0;        // Lamb-Dicke parameter
  double nbar = 0.0;
};

struct TrapModel {
  std::vector<MotionalMode> modes;
  double rf_frequency = 0.0;
  double micromotion_index = 0.0;
};

/// Axial 1.1 MHz and radial 3.00/3.05 MHz modes, eta 0.12/0.05/0.05, 23.4 MHz RF.
TrapModel reference_trap(double nbar_axial, double nbar_radial1, double nbar_radial2, double micromotion_index = 0.0);

/// Adds secular sidebands (red eta^2 nbar, blue eta^2 (nbar + 1)) and micromotion
/// sidebands (index^2) to a carrier scan. The carrier is shifted copies of the
/// dark-subtracted base rates, linearly interpolated and zero outside the grid.
ScanResult sideband_overlay(const ScanResult& carrier, const TrapModel& trap);

// ---------------------------------------------------------------- pulses

struct PulseShape {
  double bin_width = 200e-9;
  std::vector<double> bin_start;
  std::array<std::vector<double>, 2> probability;  // per detector channel and bin
  std::array<double, 2> efficiency{};
  int designated_channel = 0;

  double total_efficiency() const { return efficiency[0] + efficiency[1]; }
  /// Fraction of detected photons outside the designated channel.
  double leakage() const;
  /// Per-bin total over both channels.
  std::vector<double> combined() const;
};

struct PulseOptions {
  double duration = 80e-6;
  double bin_width = 200e-9;
  int n_max = 1;
  int designated_channel = -1;  // -1: the channel with more counts
  EvolveOptions evolve;
};

/// Evolves from `initial` with the model's lasers and bins the detected photon
/// probability (dark counts excluded). The metastable D decay is switched off.
PulseShape photon_pulse(const SystemModel& model, const DetectionChain& chain, const ZeemanState& initial,
                        const PulseOptions& options = {});

/// Bhattacharyya overlap of the two normalized temporal distributions, summed over
/// channels. Throws std::invalid_argument for mismatched binning.
double pulse_overlap(const PulseShape& a, const PulseShape& b);

/// Analysis-axis rotation under which a pure mode leaks the given fraction into the other detector.
double misalignment_for_leakage(double fraction);

struct OverlapScan {
  std::vector<double> rabi;
  std::vector<double> detuning_offset;
  std::vector<std::vector<double>> overlap;  // [rabi][detuning]
  double best_overlap = 0.0;
  double best_rabi = 0.0;
  double best_detuning_offset = 0.0;
};

/// Grid search over the drive parameters of `tuned` for the best overlap with `reference`.
OverlapScan maximize_overlap(const PulseShape& reference, const SystemModel& tuned, const DetectionChain& chain,
                             const ZeemanState& initial, const std::vector<double>& rabi,
                             const std::vector<double>& detuning_offset, const PulseOptions& options = {});

// ---------------------------------------------------------------- entanglement

struct JointStateReport {
  Eigen::MatrixXcd rho;  // normalized conditional state
  std::vector<std::string> basis;
  Eigen::VectorXcd target;  // target state at the reported phase
  int reference_component = 0;  // the coherence phase is that of phase_component relative to this one
  int phase_component = 1;
  double fidelity = 0.0;
  double phase = 0.0;       // phase of the coherence between the two branches
  double emission_probability = 0.0;    // photon leaves the cavity (before detection losses)
  std::array<double, 2> channel_probability{};  // split of the emission over the H/V modes
  double shape_overlap = 1.0;  // overlap of the two channels' temporal shapes
  PulseShape shape;

  /// Fidelity against the target with its relative phase set to `phi`.
  double fidelity_at(double phi) const;
};

struct BichromaticOptions {
  double duration = 60e-6;
  // Rabi frequency of the stronger tone. The tones' beat modulates the light shift with
  // index ~ Omega^2 / (2 |delta| Delta), which must stay small.
  double rabi = mhz(20.0);
  double mixing = kPi / 4;   // cos : sin weighting of the two effective couplings
  double relative_phase = 0.0;
  double global_phase = 0.0;
  double overlap_warning = 0.95;
  // Treat spontaneous decay back into S1/2 as a failed attempt instead of letting the
  // re-prepared ion emit again; models heralding on the absence of scattered light.
  bool discard_scattered = false;
  PulseOptions pulse;
};

/// Two tones on the optimal pair from |S,-1/2>, balanced in effective coupling. Reports the
/// emission-conditioned D5/2 qubit x {H, V} state and its fidelity with
/// cos|D,a>|H> + e^{i phi} sin|D,b>|V>.
JointStateReport entangle_bichromatic(const SystemModel& model, const DetectionChain& chain,
                                      const BichromaticOptions& options = {});

/// Maps cos a |S,-1/2> + e^{i phi} sin a |S,+1/2> onto the photon through two tones
/// ending in |D,-3/2>; reports the photon polarization state.
JointStateReport map_state(double alpha, double phi, const SystemModel& model, const DetectionChain& chain,
                           const BichromaticOptions& options = {});

/// Tones of a bichromatic drive on the given lines. Amplitudes make the effective couplings
/// proportional to `weights`, including the contribution of the light-shift beat between the
/// tones; the stronger tone gets `max_rabi`. Detunings are solved jointly with the light shifts.
std::array<LaserField, 2> bichromatic_tones(const SystemModel& model, const LaserField& beam,
                                            const std::array<RamanLine, 2>& lines, double max_rabi,
                                            const std::array<double, 2>& weights);

// ---------------------------------------------------------------- qubit dynamics

struct ThermalMode {
  double eta = 0.0;
  double nbar = 0.0;
};

/// Carrier excitation probability averaged over thermal phonon distributions,
/// Omega_n = Omega0 prod (1 - eta^2 n). Warns when eta^2 (nbar + 1) > 0.1 for a mode.
std::vector<double> rabi_thermal(double omega0, const std::vector<ThermalMode>& modes, const std::vector<double>& t);

/// Max - min of the curve within each Rabi period 2 pi / omega0, for the first `periods` periods.
std::vector<double> oscillation_contrast(double omega0, const std::vector<double>& t, const std::vector<double>& p,
                                         int periods);

struct RamseyModel {
  double amplitude0 = 0.97;
  double tau = 250e-6;   // coherence time; 0 or infinity means no dephasing
  double phase0 = 0.0;

  /// A0 exp(-(t/tau)^2 / 2).
  double amplitude(double t_wait) const;
  double fringe(double t_wait, double phase) const;
};

struct RamseyOptions {
  int shots = 0;  // 0: exact average over the noise; otherwise Monte Carlo shots per point
  std::uint64_t seed = 1;
};

struct DecayFit {
  double amplitude0 = 0.0;
  double tau = 0.0;
  double amplitude0_error = 0.0;
  double tau_error = 0.0;
  double cost = 0.0;  // sum of squared residuals
};

struct RamseyResult {
  std::vector<double> t_wait;
  std::vector<double> phases;
  std::vector<std::vector<double>> fringes;  // [t_wait][phase]
  std::vector<double> amplitude;
  DecayFit gaussian;
  DecayFit exponential;
};

/// Synthetic Ramsey fringes under quasi-static Gaussian detuning noise of rms 1/tau,
/// per-wait amplitude extraction and Gaussian/exponential decay fits.
RamseyResult ramsey_coherence(const std::vector<double>& t_wait, const std::vector<double>& phases,
                              const RamseyModel& model, const RamseyOptions& options = {});

/// Fits A0 exp(-(t/tau)^2/2) (gaussian) or A0 exp(-t/tau) to amplitudes. Throws FitNotConvergedError.
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& amplitude, bool gaussian);

}  // namespace cavqed
