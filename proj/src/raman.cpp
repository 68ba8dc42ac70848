#include "cavqed/raman.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cavqed/units.hpp"

namespace cavqed {

namespace {

constexpr double kAmplitudeCutoff = 1e-12;

}  // namespace

std::vector<RamanPath> enumerate_paths(const RamanSetting& setting) {
  const Eigen::Vector3d axis = setting.field.axis();
  const auto& pol = setting.drive.polarization;
  if (pol.longitudinal_component() > 1e-9)
    throw std::invalid_argument("enumerate_paths: drive polarization has a longitudinal component");
  const auto drive = pol.spherical(axis);

  std::array<std::array<Complex, 3>, 2> mode{};
  for (int k = 0; k < 2; ++k)
    mode[k] = Polarization::from_vector(setting.cavity.polarization[k]).spherical(axis);

  std::vector<RamanPath> paths;
  for (const ZeemanState& s : sublevels(Manifold::S12)) {
    for (int qd = -1; qd <= 1; ++qd) {
      if (std::abs(drive[qd + 1]) < kAmplitudeCutoff) continue;
      const int two_mp = s.two_m + 2 * qd;
      if (std::abs(two_mp) > twice_j(Manifold::P32)) continue;
      const ZeemanState p{Manifold::P32, two_mp};
      const Complex alpha = drive[qd + 1] * cg_coefficient(s, p, qd);
      if (std::abs(alpha) < kAmplitudeCutoff) continue;
      for (const ZeemanState& d : sublevels(Manifold::D52)) {
        const int qe = (p.two_m - d.two_m) / 2;
        if (std::abs(qe) > 1) continue;
        const double cg = cg_coefficient(d, p, qe);
        if (std::abs(cg) < kAmplitudeCutoff) continue;
        for (int k = 0; k < 2; ++k) {
          const Complex beta = std::conj(mode[k][qe + 1]) * cg;
          if (std::abs(beta) < kAmplitudeCutoff) continue;
          paths.push_back({s, p, d, qd, qe, alpha, beta, k});
        }
      }
    }
  }
  return paths;
}

std::vector<RamanLine> merge_lines(const std::vector<RamanPath>& paths, const RamanSetting& setting) {
  std::vector<RamanLine> lines;
  for (int i = 0; i < static_cast<int>(paths.size()); ++i) {
    const RamanPath& p = paths[i];
    auto it = std::find_if(lines.begin(), lines.end(), [&](const RamanLine& l) {
      return l.initial == p.initial && l.final == p.final;
    });
    if (it == lines.end()) {
      lines.push_back({p.initial, p.final, {}, {}, 0.0});
      it = std::prev(lines.end());
    }
    it->amplitude[p.channel] += p.amplitude();
    it->paths.push_back(i);
  }
  for (auto& l : lines) l.resonance = resonance_detuning(l.initial, l.final, setting);
  std::sort(lines.begin(), lines.end(), [](const RamanLine& a, const RamanLine& b) {
    return a.resonance < b.resonance;
  });
  return lines;
}

int count_distinct_resonances(const std::vector<RamanLine>& lines, double tolerance) {
  std::vector<double> r;
  for (const auto& l : lines) r.push_back(l.resonance);
  std::sort(r.begin(), r.end());
  int count = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i == 0 || r[i] - r[i - 1] > tolerance) ++count;
  }
  return count;
}

std::pair<double, double> pair_strengths(const RamanPath& a, const RamanPath& b) {
  if (!(a.initial == b.initial)) throw std::invalid_argument("pair_strengths: paths share no initial state");
  return {a.strength(), b.strength()};
}

std::vector<RankedPair> select_optimal_pair(const RamanSetting& setting) {
  const auto lines = merge_lines(enumerate_paths(setting), setting);
  std::vector<RankedPair> ranked;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = 0; j < lines.size(); ++j) {
      if (i == j || !(lines[i].initial == lines[j].initial) || lines[i].final == lines[j].final) continue;
      // Each line emits into its own channel; the pair needs both channels.
      const double a = lines[i].strength(0);
      const double b = lines[j].strength(1);
      if (a < kAmplitudeCutoff || b < kAmplitudeCutoff) continue;
      ranked.push_back({lines[i], lines[j], 0, 1, std::min(a, b), a * b});
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedPair& x, const RankedPair& y) {
    if (std::abs(x.min_strength - y.min_strength) > 1e-12) return x.min_strength > y.min_strength;
    return x.product > y.product;
  });
  return ranked;
}

double effective_coupling(double alpha, double beta, double rabi, double detuning, double g0) {
  if (detuning == 0.0) throw std::domain_error("effective_coupling: zero drive detuning");
  return alpha * rabi * beta * 2.0 * g0 / (2.0 * std::abs(detuning));
}

double effective_decay(double rabi, double detuning, double population_decay_rate) {
  if (detuning == 0.0) throw std::domain_error("effective_decay: zero drive detuning");
  const double x = rabi / (2.0 * std::abs(detuning));
  return population_decay_rate * x * x;
}

bool adiabatic_elimination_valid(double rabi, double detuning, double ratio) {
  return std::abs(detuning) > ratio * std::abs(rabi);
}

double stark_shift(const ZeemanState& s, std::span<const LaserField> drives, const MagneticField& field) {
  double shift = 0.0;
  for (const LaserField& laser : drives) {
    if (laser.role != LaserRole::Drive393) continue;
    const auto c = laser.polarization.spherical(field.axis());
    for (int q = -1; q <= 1; ++q) {
      const int two_mp = s.two_m + 2 * q;
      if (std::abs(two_mp) > twice_j(Manifold::P32)) continue;
      const ZeemanState p{Manifold::P32, two_mp};
      const double a = std::abs(c[q + 1] * cg_coefficient(s, p, q)) * laser.rabi;
      const double delta = laser.detuning - (zeeman_shift(p, field.gauss) - zeeman_shift(s, field.gauss));
      if (a == 0.0) continue;
      if (delta == 0.0) throw std::domain_error("stark_shift: drive resonant with an S-P transition");
      shift += a * a / (4.0 * delta);
    }
  }
  return shift;
}

double resonance_detuning(const ZeemanState& initial, const ZeemanState& final, const RamanSetting& setting,
                          std::span<const LaserField> extra_drives) {
  const double zeeman = zeeman_shift(final, setting.field.gauss) - zeeman_shift(initial, setting.field.gauss);
  const double bare = setting.cavity_detuning + zeeman;
  std::vector<LaserField> drives(extra_drives.begin(), extra_drives.end());
  drives.push_back(setting.drive);
  double delta = bare;
  // The light shift depends weakly on the drive detuning itself; a fixed point converges in a few passes.
  for (int iter = 0; iter < 100; ++iter) {
    drives.back().detuning = delta;
    const double next = bare - stark_shift(initial, drives, setting.field);
    const bool done = std::abs(next - delta) < 1e-9 * std::max(1.0, std::abs(delta));
    delta = next;
    if (done) break;
  }
  return delta;
}

double resonance_detuning(const RamanPath& path, const RamanSetting& setting,
                          std::span<const LaserField> extra_drives) {
  return resonance_detuning(path.initial, path.final, setting, extra_drives);
}

}  // namespace cavqed
