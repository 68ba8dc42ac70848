#pragma once

#include <numbers>

namespace cavqed {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
// Bohr magneton over h, in Hz per gauss.
inline constexpr double kBohrMagnetonHzPerGauss = 1.3996245e6;

// Angular frequencies are carried in rad/s throughout. These helpers convert
// cyclic values (the units quoted in lab notebooks and config files).
constexpr double hz(double f) { return kTwoPi * f; }
constexpr double khz(double f) { return kTwoPi * f * 1e3; }
constexpr double mhz(double f) { return kTwoPi * f * 1e6; }
constexpr double to_mhz(double omega) { return omega / (kTwoPi * 1e6); }

constexpr double um(double x) { return x * 1e-6; }
constexpr double nm(double x) { return x * 1e-9; }
constexpr double mm(double x) { return x * 1e-3; }
constexpr double us(double t) { return t * 1e-6; }

constexpr double deg(double a) { return a * std::numbers::pi / 180.0; }

}  // namespace cavqed
