#pragma once

// Analytic layer for cavity-assisted S1/2 -> P3/2 -> D5/2 Raman transitions:
// path enumeration, alpha.beta strengths, adiabatically eliminated couplings,
// and two-photon resonance conditions including Zeeman and light shifts.

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "cavqed/fields.hpp"
#include "cavqed/units.hpp"

namespace cavqed {

struct RamanSetting {
  MagneticField field;
  LaserField drive;
  double cavity_detuning = 0.0;  // omega_cav - omega_PD, rad/s
  CavityModes cavity;
};

struct RamanPath {
  ZeemanState initial;       // S1/2
  ZeemanState intermediate;  // P3/2
  ZeemanState final;         // D5/2
  int q_drive = 0;
  int q_emit = 0;
  // Complex leg amplitudes; |alpha| = |projection| |cg|, likewise for beta.
  Complex alpha;
  Complex beta;
  int channel = 0;  // index into CavityModes

  double strength() const { return std::abs(alpha) * std::abs(beta); }
  Complex amplitude() const { return alpha * beta; }
};

/// Paths sharing initial and final state, which resonate at one drive frequency.
struct RamanLine {
  ZeemanState initial;
  ZeemanState final;
  std::array<Complex, 2> amplitude{};  // summed alpha.beta per cavity channel
  std::vector<int> paths;               // indices into the enumerated path list
  double resonance = 0.0;               // drive detuning at two-photon resonance, rad/s

  double strength(int channel) const { return std::abs(amplitude[channel]); }
  int dominant_channel() const { return strength(1) > strength(0) ? 1 : 0; }
};

/// All paths with nonzero alpha.beta. Throws std::invalid_argument for a drive
/// polarization with a longitudinal component.
std::vector<RamanPath> enumerate_paths(const RamanSetting& setting);

/// Groups paths by (initial, final) and evaluates each line's resonance.
std::vector<RamanLine> merge_lines(const std::vector<RamanPath>& paths, const RamanSetting& setting);

/// Number of distinct resonance positions, lines closer than `tolerance` (rad/s) merged.
int count_distinct_resonances(const std::vector<RamanLine>& lines, double tolerance = khz(1.0));

/// (alpha.beta, alpha.beta) of two paths leaving one initial state.
std::pair<double, double> pair_strengths(const RamanPath& a, const RamanPath& b);

struct RankedPair {
  RamanLine first;
  RamanLine second;
  int first_channel = 0;
  int second_channel = 1;
  double min_strength = 0.0;
  double product = 0.0;
};

/// Pairs of lines from a common initial state emitting into orthogonal cavity
/// channels, ranked by the weaker strength and then by the product.
std::vector<RankedPair> select_optimal_pair(const RamanSetting& setting);

/// Effective two-photon Rabi frequency alpha Omega beta 2g0 / (2|delta|).
/// Throws std::domain_error at delta = 0.
double effective_coupling(double alpha, double beta, double rabi, double detuning, double g0);

/// Off-resonant scattering rate gamma (Omega / 2|delta|)^2, with gamma the population rate.
double effective_decay(double rabi, double detuning, double population_decay_rate);

/// True when |delta| exceeds `ratio` times the Rabi frequency.
bool adiabatic_elimination_valid(double rabi, double detuning, double ratio = 5.0);

/// Second-order light shift of an S1/2 sub-state from the listed 393 nm fields:
/// sum over P3/2 paths of (alpha Omega)^2 / (4 delta_i).
double stark_shift(const ZeemanState& s, std::span<const LaserField> drives, const MagneticField& field);

/// Drive detuning at two-photon resonance: delta_cav + Z(final) - Z(initial) - light shift of
/// the initial state. `extra_drives` adds light shifts of further tones.
double resonance_detuning(const RamanPath& path, const RamanSetting& setting,
                          std::span<const LaserField> extra_drives = {});
double resonance_detuning(const ZeemanState& initial, const ZeemanState& final, const RamanSetting& setting,
                          std::span<const LaserField> extra_drives = {});

}  // namespace cavqed
