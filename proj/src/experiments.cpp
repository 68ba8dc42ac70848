#include "cavqed/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "cavqed/errors.hpp"
#include "cavqed/fit.hpp"

namespace cavqed {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename F>
void parallel_for(int count, int jobs, F&& body) {
  jobs = std::clamp(jobs, 1, std::max(count, 1));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

DensityMatrix s_manifold_mixture(const HilbertLayout& layout) {
  DensityMatrix rho;
  rho.rho = Eigen::MatrixXcd::Zero(layout.dim(), layout.dim());
  for (const ZeemanState& s : sublevels(Manifold::S12)) {
    const int i = layout.index(s, 0, 0);
    rho.rho(i, i) = 0.5;
  }
  return rho;
}

int first_drive(const SystemModel& model) {
  for (std::size_t i = 0; i < model.lasers.size(); ++i)
    if (model.lasers[i].role == LaserRole::Drive393) return static_cast<int>(i);
  throw std::invalid_argument("model has no 393 nm drive laser");
}

RamanSetting setting_for(const SystemModel& model, const LaserField& drive) {
  RamanSetting s;
  s.field = model.field;
  s.drive = drive;
  s.cavity_detuning = model.cavity_detuning;
  s.cavity = model.modes;
  return s;
}

// Linear interpolation of a tabulated curve, zero outside the table.
double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
  if (x.empty() || at < x.front() || at > x.back()) return 0.0;
  const auto it = std::upper_bound(x.begin(), x.end(), at);
  if (it == x.end()) return y.back();
  const std::size_t j = static_cast<std::size_t>(it - x.begin());
  if (j == 0) return y.front();
  const double f = (at - x[j - 1]) / (x[j] - x[j - 1]);
  return y[j - 1] + f * (y[j] - y[j - 1]);
}

void check_grid(const std::vector<double>& grid, const char* what) {
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument(std::string(what) + ": grid must be strictly increasing");
}

std::vector<double> bin_edges(double duration, double bin_width, int& bins) {
  if (!(duration > 0.0) || !(bin_width > 0.0)) throw std::invalid_argument("pulse: duration and bin width must be positive");
  bins = static_cast<int>(std::llround(duration / bin_width));
  if (bins < 1 || std::abs(bins * bin_width - duration) > 1e-9 * duration)
    throw std::invalid_argument("pulse: duration must be a whole number of bins");
  std::vector<double> edges(bins + 1);
  for (int b = 0; b <= bins; ++b) edges[b] = b * bin_width;
  return edges;
}

// Trapezoidal accumulation of a per-step quantity into fixed bins. evolve lands
// exactly on every bin edge, so no step straddles two bins.
class BinAccumulator {
 public:
  BinAccumulator(double bin_width, int bins) : width_(bin_width), bins_(bins) {}

  template <typename Sample, typename Add>
  void step(double t, Sample&& sample, Add&& add) {
    auto now = sample();
    if (has_previous_) {
      const double dt = t - t_prev_;
      const int b = std::clamp(static_cast<int>(std::floor(0.5 * (t + t_prev_) / width_)), 0, bins_ - 1);
      add(b, previous_, now, dt);
    }
    previous_ = std::move(now);
    t_prev_ = t;
    has_previous_ = true;
  }

 private:
  double width_;
  int bins_;
  bool has_previous_ = false;
  double t_prev_ = 0.0;
  std::vector<double> previous_;
};

}  // namespace

// ---------------------------------------------------------------- spectra

std::vector<double> ScanResult::detunings() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.detuning);
  return out;
}

std::vector<SpectrumPeak> ScanResult::dominant_peaks(double fraction) const {
  double tallest = 0.0;
  for (const auto& p : peaks) tallest = std::max(tallest, p.height - dark_total());
  std::vector<SpectrumPeak> out;
  for (const auto& p : peaks)
    if (p.height - dark_total() >= fraction * tallest) out.push_back(p);
  return out;
}

int ScanResult::failed_points() const {
  return static_cast<int>(std::count_if(points.begin(), points.end(), [](const ScanPoint& p) { return !p.converged; }));
}

std::vector<RamanLine> predicted_lines(const SystemModel& model, int drive) {
  if (drive < 0 || drive >= static_cast<int>(model.lasers.size()) ||
      model.lasers[drive].role != LaserRole::Drive393)
    throw std::invalid_argument("predicted_lines: laser index is not a 393 nm drive");
  const RamanSetting setting = setting_for(model, model.lasers[drive]);
  std::vector<LaserField> others;
  for (std::size_t i = 0; i < model.lasers.size(); ++i)
    if (static_cast<int>(i) != drive && model.lasers[i].role == LaserRole::Drive393) others.push_back(model.lasers[i]);
  auto lines = merge_lines(enumerate_paths(setting), setting);
  if (!others.empty()) {
    for (auto& l : lines) l.resonance = resonance_detuning(l.initial, l.final, setting, others);
    std::sort(lines.begin(), lines.end(), [](const RamanLine& a, const RamanLine& b) { return a.resonance < b.resonance; });
  }
  return lines;
}

ScanResult raman_spectrum(const SystemModel& model, const std::vector<double>& detunings, const DetectionChain& chain,
                          const SpectrumOptions& options) {
  check_grid(detunings, "raman_spectrum");
  if (options.drive < 0 || options.drive >= static_cast<int>(model.lasers.size()))
    throw std::invalid_argument("raman_spectrum: drive index out of range");
  model.validate();
  validate(chain);

  ScanResult out;
  out.dark = chain.dark_count_rate;
  out.dwell = options.dwell;
  out.lines = predicted_lines(model, options.drive);
  out.points.resize(detunings.size());

  const HilbertLayout layout(options.n_max);
  SteadyStateOptions ss_options;
  ss_options.initial = s_manifold_mixture(layout);
  const int s_minus = layout.index(make_state(Manifold::S12, -0.5), 0, 0);
  const int s_plus = layout.index(make_state(Manifold::S12, 0.5), 0, 0);

  parallel_for(static_cast<int>(detunings.size()), options.jobs, [&](int i) {
    ScanPoint& p = out.points[i];
    p.detuning = detunings[i];
    p.rate = chain.dark_count_rate;
    try {
      SystemModel m = model;
      m.lasers[options.drive].detuning = detunings[i];
      const OpenSystem sys = build_open_system(m, layout);
      const SteadyState ss = steady_state(build_liouvillian(sys), ss_options);
      p.rate = photon_flux(ss.state, sys, chain);
      p.residual = ss.residual;
      // Populations summed over photon numbers.
      for (int n = 0; n < layout.dim(); ++n) {
        const auto e = layout.decode(n);
        const double pop = ss.state.rho(n, n).real();
        if (e.atom == layout.decode(s_minus).atom) p.s_population[0] += pop;
        if (e.atom == layout.decode(s_plus).atom) p.s_population[1] += pop;
      }
      for (double& r : p.rate) r = std::max(r, 0.0);
      p.converged = true;
    } catch (const std::exception& e) {
      p.converged = false;
      p.error = e.what();
    }
  });

  out.peaks = find_peaks(out.points, out.dark, options.peak_threshold);
  const double step = detunings.size() > 1 ? (detunings.back() - detunings.front()) / (detunings.size() - 1) : 0.0;
  match_lines(out.peaks, out.lines, step);
  return out;
}

std::vector<SpectrumPeak> find_peaks(const std::vector<ScanPoint>& points, const std::array<double, 2>& dark,
                                     double threshold) {
  std::vector<SpectrumPeak> peaks;
  const int n = static_cast<int>(points.size());
  const double floor = dark[0] + dark[1];
  auto total = [&](int i) { return points[i].converged ? points[i].total() : 0.0; };
  for (int i = 1; i + 1 < n; ++i) {
    const double y = total(i);
    if (!(y > threshold * floor) || !(y > total(i - 1))) continue;
    // Walk across a flat top to its right end.
    int j = i;
    while (j + 1 < n && total(j + 1) == y) ++j;
    if (j + 1 >= n || !(total(j + 1) < y)) continue;

    SpectrumPeak pk;
    const double x0 = points[i - 1].detuning, x1 = points[i].detuning, x2 = points[i + 1].detuning;
    const double y0 = total(i - 1), y1 = y, y2 = total(i + 1);
    const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
    const double curvature = (d12 - d01) / (x2 - x0);
    pk.detuning = x1;
    pk.height = y1;
    if (curvature < 0.0 && j == i) {
      // Vertex of the parabola through the three samples.
      const double b = d01 - curvature * (x0 + x1);
      const double xv = std::clamp(-b / (2.0 * curvature), x0, x2);
      pk.detuning = xv;
      pk.height = y1 + d01 * (xv - x1) + curvature * (xv - x0) * (xv - x1);
    } else if (j > i) {
      pk.detuning = 0.5 * (points[i].detuning + points[j].detuning);
    }
    pk.rate = points[i].rate;
    pk.channel = (pk.rate[1] - dark[1]) > (pk.rate[0] - dark[0]) ? 1 : 0;

    const double half = floor + 0.5 * (pk.height - floor);
    double left = kNaN, right = kNaN;
    for (int k = i; k > 0; --k)
      if (total(k - 1) < half) {
        const double f = (half - total(k - 1)) / (total(k) - total(k - 1));
        left = points[k - 1].detuning + f * (points[k].detuning - points[k - 1].detuning);
        break;
      }
    for (int k = j; k + 1 < n; ++k)
      if (total(k + 1) < half) {
        const double f = (total(k) - half) / (total(k) - total(k + 1));
        right = points[k].detuning + f * (points[k + 1].detuning - points[k].detuning);
        break;
      }
    pk.width = right - left;
    peaks.push_back(std::move(pk));
    i = j;
  }
  return peaks;
}

void match_lines(std::vector<SpectrumPeak>& peaks, const std::vector<RamanLine>& lines, double grid_step) {
  for (auto& pk : peaks) {
    pk.lines.clear();
    pk.expected_channel = -1;
    if (lines.empty()) continue;
    int best = 0;
    for (int l = 1; l < static_cast<int>(lines.size()); ++l)
      if (std::abs(lines[l].resonance - pk.detuning) < std::abs(lines[best].resonance - pk.detuning)) best = l;
    const double tolerance = std::max(std::isfinite(pk.width) ? pk.width : 0.0, 2.0 * grid_step);
    if (std::abs(lines[best].resonance - pk.detuning) > tolerance) continue;
    pk.predicted = lines[best].resonance;
    std::array<double, 2> weight{};
    for (int l = 0; l < static_cast<int>(lines.size()); ++l) {
      if (std::abs(lines[l].resonance - pk.predicted) > khz(1.0)) continue;
      pk.lines.push_back(l);
      for (int c = 0; c < 2; ++c) weight[c] += std::norm(lines[l].amplitude[c]);
    }
    pk.expected_channel = weight[1] > weight[0] ? 1 : 0;
  }
}

TrapModel reference_trap(double nbar_axial, double nbar_radial1, double nbar_radial2, double micromotion_index) {
  TrapModel trap;
  trap.modes = {{"axial", mhz(1.1), 0.12, nbar_axial},
                {"radial1", mhz(3.00), 0.05, nbar_radial1},
                {"radial2", mhz(3.05), 0.05, nbar_radial2}};
  trap.rf_frequency = mhz(23.4);
  trap.micromotion_index = micromotion_index;
  return trap;
}

ScanResult sideband_overlay(const ScanResult& carrier, const TrapModel& trap) {
  ScanResult out = carrier;
  const std::vector<double> x = carrier.detunings();
  for (int c = 0; c < 2; ++c) {
    std::vector<double> signal;
    signal.reserve(x.size());
    for (const auto& p : carrier.points) signal.push_back(std::max(p.rate[c] - carrier.dark[c], 0.0));
    auto at = [&](double d) { return interpolate(x, signal, d); };
    for (std::size_t i = 0; i < x.size(); ++i) {
      double extra = 0.0;
      for (const auto& mode : trap.modes) {
        const double e2 = mode.eta * mode.eta;
        extra += e2 * (mode.nbar + 1.0) * at(x[i] - mode.frequency);  // blue: drive above the carrier
        extra += e2 * mode.nbar * at(x[i] + mode.frequency);
      }
      const double b2 = trap.micromotion_index * trap.micromotion_index;
      if (b2 > 0.0) extra += b2 * (at(x[i] - trap.rf_frequency) + at(x[i] + trap.rf_frequency));
      out.points[i].rate[c] += extra;
    }
  }
  const double step = x.size() > 1 ? (x.back() - x.front()) / (x.size() - 1) : 0.0;
  out.peaks = find_peaks(out.points, out.dark);
  match_lines(out.peaks, out.lines, step);
  return out;
}

// ---------------------------------------------------------------- pulses

double PulseShape::leakage() const {
  const double total = total_efficiency();
  if (total <= 0.0) return 0.0;
  return efficiency[1 - designated_channel] / total;
}

std::vector<double> PulseShape::combined() const {
  std::vector<double> out(bin_start.size(), 0.0);
  for (int c = 0; c < 2; ++c)
    for (std::size_t b = 0; b < out.size() && b < probability[c].size(); ++b) out[b] += probability[c][b];
  return out;
}

namespace {

struct PulseRun {
  OpenSystem system;
  Liouvillian liouvillian;
  DensityMatrix rho0;
};

PulseRun prepare_pulse(SystemModel model, const Eigen::VectorXcd& initial_amplitudes,
                       const std::vector<int>& initial_full, int n_max, bool discard_scattered = false) {
  model.metastable_decay = false;
  const HilbertLayout layout(n_max);
  OpenSystem sys = build_open_system(model, layout, initial_full);
  std::vector<bool> discard(sys.collapse.size(), false);
  if (discard_scattered)
    for (std::size_t i = 0; i < discard.size(); ++i)
      discard[i] = sys.collapse_labels[i].find("->" + std::string(label(Manifold::S12))) != std::string::npos;
  Liouvillian l = build_liouvillian(sys, discard);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(sys.dim());
  for (std::size_t k = 0; k < initial_full.size(); ++k) psi[sys.local_index(initial_full[k])] = initial_amplitudes[k];
  psi.normalize();
  DensityMatrix rho0;
  rho0.rho = psi * psi.adjoint();
  return {std::move(sys), std::move(l), std::move(rho0)};
}

PulseShape empty_shape(double bin_width, int bins) {
  PulseShape shape;
  shape.bin_width = bin_width;
  shape.bin_start.resize(bins);
  for (int b = 0; b < bins; ++b) shape.bin_start[b] = b * bin_width;
  for (auto& p : shape.probability) p.assign(bins, 0.0);
  return shape;
}

void finish_shape(PulseShape& shape, int designated) {
  for (int c = 0; c < 2; ++c) {
    shape.efficiency[c] = 0.0;
    for (double v : shape.probability[c]) shape.efficiency[c] += v;
  }
  shape.designated_channel = designated >= 0 ? designated : (shape.efficiency[1] > shape.efficiency[0] ? 1 : 0);
}

}  // namespace

PulseShape photon_pulse(const SystemModel& model, const DetectionChain& chain, const ZeemanState& initial,
                        const PulseOptions& options) {
  validate(chain);
  int bins = 0;
  const std::vector<double> edges = bin_edges(options.duration, options.bin_width, bins);
  const HilbertLayout layout(options.n_max);
  const PulseRun run = prepare_pulse(model, Eigen::VectorXcd::Ones(1), {layout.index(initial, 0, 0)}, options.n_max);

  PulseShape shape = empty_shape(options.bin_width, bins);
  const auto ops = detector_number_operators(run.system, chain);
  const auto eff = channel_efficiency(chain);
  BinAccumulator acc(options.bin_width, bins);
  auto observer = [&](double t, const Eigen::VectorXcd& x) {
    acc.step(
        t,
        [&] {
          std::vector<double> f(2);
          for (int c = 0; c < 2; ++c) f[c] = 2.0 * run.system.kappa * expectation(x, ops[c]).real() * eff[c];
          return f;
        },
        [&](int b, const std::vector<double>& a, const std::vector<double>& z, double dt) {
          for (int c = 0; c < 2; ++c) shape.probability[c][b] += 0.5 * (a[c] + z[c]) * dt;
        });
  };
  evolve(run.liouvillian, run.rho0, edges, options.evolve, observer);
  for (auto& p : shape.probability)
    for (double& v : p) v = std::max(v, 0.0);
  finish_shape(shape, options.designated_channel);
  return shape;
}

double pulse_overlap(const PulseShape& a, const PulseShape& b) {
  if (a.bin_start.size() != b.bin_start.size() ||
      std::abs(a.bin_width - b.bin_width) > 1e-12 * std::max(a.bin_width, b.bin_width))
    throw std::invalid_argument("pulse_overlap: pulse shapes use different binning");
  const auto pa = a.combined();
  const auto pb = b.combined();
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    sa += pa[i];
    sb += pb[i];
  }
  if (sa <= 0.0 || sb <= 0.0) return 0.0;
  double overlap = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) overlap += std::sqrt(std::max(pa[i], 0.0) / sa * std::max(pb[i], 0.0) / sb);
  return std::min(overlap, 1.0);
}

double misalignment_for_leakage(double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw std::domain_error("misalignment_for_leakage: fraction outside [0, 1]");
  return std::asin(std::sqrt(fraction));
}

OverlapScan maximize_overlap(const PulseShape& reference, const SystemModel& tuned, const DetectionChain& chain,
                             const ZeemanState& initial, const std::vector<double>& rabi,
                             const std::vector<double>& detuning_offset, const PulseOptions& options) {
  const int drive = first_drive(tuned);
  OverlapScan scan;
  scan.rabi = rabi;
  scan.detuning_offset = detuning_offset;
  scan.overlap.assign(rabi.size(), std::vector<double>(detuning_offset.size(), 0.0));
  scan.best_overlap = -1.0;
  for (std::size_t i = 0; i < rabi.size(); ++i)
    for (std::size_t j = 0; j < detuning_offset.size(); ++j) {
      SystemModel m = tuned;
      m.lasers[drive].rabi = rabi[i];
      m.lasers[drive].detuning += detuning_offset[j];
      const double o = pulse_overlap(reference, photon_pulse(m, chain, initial, options));
      scan.overlap[i][j] = o;
      if (o > scan.best_overlap) {
        scan.best_overlap = o;
        scan.best_rabi = rabi[i];
        scan.best_detuning_offset = detuning_offset[j];
      }
    }
  return scan;
}

// ---------------------------------------------------------------- entanglement

double JointStateReport::fidelity_at(double phi) const {
  Eigen::VectorXcd psi = target.cwiseAbs().cast<Complex>();
  psi[phase_component] *= std::polar(1.0, phi);
  return std::clamp((psi.adjoint() * rho * psi)(0, 0).real(), 0.0, 1.0);
}

namespace {

// sum over paths of alpha beta / Delta_P for one line, with the drive at `detuning`.
Complex path_sum(const RamanLine& line, const RamanSetting& setting, double detuning) {
  Complex sum = 0.0;
  for (const RamanPath& p : enumerate_paths(setting)) {
    if (!(p.initial == line.initial) || !(p.final == line.final)) continue;
    const double delta = detuning - (zeeman_shift(p.intermediate, setting.field.gauss) -
                                     zeeman_shift(p.initial, setting.field.gauss));
    sum += p.amplitude() / delta;
  }
  return sum;
}

// Effective coupling of line k (up to the common factor g/2) under both tones. Besides
// its own tone, the line is reached through the other tone combined with the beat
// of the two tones in the light shift of the initial state.
double bichromatic_coupling(const RamanLine& line, const SystemModel& model, const LaserField& own,
                            const LaserField& other) {
  const RamanSetting setting = setting_for(model, own);
  Complex a = own.rabi * path_sum(line, setting, own.detuning);
  if (other.rabi > 0.0 && own.rabi > 0.0) {
    LaserField unit = own;
    unit.rabi = 1.0;
    unit.detuning = 0.5 * (own.detuning + other.detuning);
    const double cross = own.rabi * other.rabi * stark_shift(line.initial, std::span<const LaserField>(&unit, 1), model.field);
    a += other.rabi * path_sum(line, setting, other.detuning) * cross / (own.detuning - other.detuning);
  }
  return std::abs(a);
}

}  // namespace

std::array<LaserField, 2> bichromatic_tones(const SystemModel& model, const LaserField& beam,
                                            const std::array<RamanLine, 2>& lines, double max_rabi,
                                            const std::array<double, 2>& weights) {
  const std::array<double, 2> w{std::abs(weights[0]), std::abs(weights[1])};
  if (w[0] + w[1] <= 0.0) throw std::invalid_argument("bichromatic_tones: both weights vanish");
  std::array<LaserField, 2> tones{beam, beam};
  for (int k = 0; k < 2; ++k) {
    tones[k].detuning = lines[k].resonance;
    tones[k].rabi = w[k] > 0.0 ? max_rabi : 0.0;
  }
  // Amplitudes and detunings depend on each other through the light shifts; iterate to consistency.
  for (int iter = 0; iter < 100; ++iter) {
    std::array<double, 2> rabi{};
    for (int k = 0; k < 2; ++k) {
      if (w[k] == 0.0) continue;
      const double c = bichromatic_coupling(lines[k], model, tones[k], tones[1 - k]);
      if (c <= 0.0) throw std::invalid_argument("bichromatic_tones: line without cavity coupling");
      rabi[k] = tones[k].rabi * w[k] / c;
    }
    const double scale = max_rabi / std::max(rabi[0], rabi[1]);
    double change = 0.0;
    for (int k = 0; k < 2; ++k) {
      change = std::max(change, std::abs(rabi[k] * scale - tones[k].rabi));
      tones[k].rabi = rabi[k] * scale;
    }
    for (int k = 0; k < 2; ++k) {
      const LaserField other = tones[1 - k];
      const double d = resonance_detuning(lines[k].initial, lines[k].final, setting_for(model, tones[k]),
                                          std::span<const LaserField>(&other, 1));
      change = std::max(change, std::abs(d - tones[k].detuning));
      tones[k].detuning = d;
    }
    if (change < 1e-6) break;
  }
  return tones;
}

namespace {

struct ConditionalRun {
  Eigen::MatrixXcd joint;  // accumulated source terms on the requested (atom, mode) basis
  double emission = 0.0;
  std::array<double, 2> mode_emission{};
  PulseShape shape;
};

// Drives `tones` from the given initial superposition and integrates the emission
// source terms 2 kappa a_p rho a_p'^dagger, projected onto one-photon states (atom, p),
// in the interaction picture of the bare Hamiltonian.
ConditionalRun run_conditional(const SystemModel& model, const std::array<LaserField, 2>& tones,
                               const std::vector<ZeemanState>& initial_states, const Eigen::VectorXcd& amplitudes,
                               const std::vector<std::pair<ZeemanState, int>>& targets, const DetectionChain& chain,
                               const BichromaticOptions& options) {
  SystemModel m = model;
  // Photon generation runs with the drive alone; the repumps act only between attempts.
  m.lasers.clear();
  for (const auto& t : tones)
    if (t.rabi > 0.0) m.lasers.push_back(t);

  const int n_max = options.pulse.n_max;
  const HilbertLayout layout(n_max);
  std::vector<int> support;
  for (const auto& s : initial_states) support.push_back(layout.index(s, 0, 0));
  const PulseRun run = prepare_pulse(m, amplitudes, support, n_max, options.discard_scattered);
  const OpenSystem& sys = run.system;
  const int dim = sys.dim();

  int bins = 0;
  const std::vector<double> edges = bin_edges(options.duration, options.pulse.bin_width, bins);

  std::vector<int> local;
  for (const auto& [atom, mode] : targets)
    local.push_back(sys.local_index(layout.index(atom, mode == 0 ? 1 : 0, mode == 1 ? 1 : 0)));
  const int nt = static_cast<int>(targets.size());

  // Residual energies of the frame; their differences carry the bare phases.
  Eigen::VectorXd residual(dim);
  for (int i = 0; i < dim; ++i) residual[i] = sys.hamiltonian.coeff(i, i).real();

  std::array<SparseMatrixXcd, 2> number{};
  for (int p = 0; p < 2; ++p) {
    const SparseMatrixXcd a = sys.restrict(annihilation(layout, p));
    number[p] = SparseMatrixXcd(a.adjoint() * a);
  }
  const auto det_ops = detector_number_operators(sys, chain);
  const auto eff = channel_efficiency(chain);
  const double two_kappa = 2.0 * sys.kappa;

  ConditionalRun out;
  out.joint = Eigen::MatrixXcd::Zero(nt, nt);
  out.shape = empty_shape(options.pulse.bin_width, bins);
  BinAccumulator acc(options.pulse.bin_width, bins);

  // Sample layout: [det0, det1, mode0, mode1, re/im of joint entries].
  auto sample = [&](double t, const Eigen::VectorXcd& x) {
    std::vector<double> s(4 + 2 * nt * nt, 0.0);
    for (int c = 0; c < 2; ++c) s[c] = two_kappa * expectation(x, det_ops[c]).real() * eff[c];
    for (int p = 0; p < 2; ++p) s[2 + p] = two_kappa * expectation(x, number[p]).real();
    for (int r = 0; r < nt; ++r)
      for (int c = 0; c < nt; ++c) {
        if (local[r] < 0 || local[c] < 0) continue;
        const Complex v = two_kappa * x[static_cast<Eigen::Index>(local[c]) * dim + local[r]] *
                          std::polar(1.0, (residual[local[r]] - residual[local[c]]) * t);
        s[4 + 2 * (r * nt + c)] = v.real();
        s[5 + 2 * (r * nt + c)] = v.imag();
      }
    return s;
  };
  auto observer = [&](double t, const Eigen::VectorXcd& x) {
    acc.step(t, [&] { return sample(t, x); },
             [&](int b, const std::vector<double>& a, const std::vector<double>& z, double dt) {
               auto trap = [&](int k) { return 0.5 * (a[k] + z[k]) * dt; };
               for (int c = 0; c < 2; ++c) out.shape.probability[c][b] += trap(c);
               for (int p = 0; p < 2; ++p) out.mode_emission[p] += trap(2 + p);
               for (int r = 0; r < nt; ++r)
                 for (int c = 0; c < nt; ++c)
                   out.joint(r, c) += Complex(trap(4 + 2 * (r * nt + c)), trap(5 + 2 * (r * nt + c)));
             });
  };
  evolve(run.liouvillian, run.rho0, edges, options.pulse.evolve, observer);
  for (auto& p : out.shape.probability)
    for (double& v : p) v = std::max(v, 0.0);
  finish_shape(out.shape, -1);
  out.emission = out.mode_emission[0] + out.mode_emission[1];
  return out;
}

PulseShape single_channel(const PulseShape& shape, int channel) {
  PulseShape s = shape;
  s.probability[1 - channel].assign(s.probability[1 - channel].size(), 0.0);
  finish_shape(s, channel);
  return s;
}

JointStateReport make_report(const ConditionalRun& run, std::vector<std::string> basis, Eigen::VectorXcd target,
                             int second, int first, double overlap_warning) {
  JointStateReport rep;
  const double tr = run.joint.trace().real();
  rep.rho = tr > 0.0 ? Eigen::MatrixXcd(run.joint / tr) : run.joint;
  rep.rho = 0.5 * (rep.rho + rep.rho.adjoint()).eval();
  rep.basis = std::move(basis);
  rep.phase = std::arg(rep.rho(second, first));
  rep.reference_component = first;
  rep.phase_component = second;
  rep.target = std::move(target);
  rep.fidelity = rep.fidelity_at(rep.phase);
  rep.target[second] = std::abs(rep.target[second]) * std::polar(1.0, rep.phase);
  rep.emission_probability = run.emission;
  for (int p = 0; p < 2; ++p) rep.channel_probability[p] = run.emission > 0.0 ? run.mode_emission[p] / run.emission : 0.0;
  rep.shape = run.shape;
  const double eh = run.shape.efficiency[0], ev = run.shape.efficiency[1];
  if (eh > 0.0 && ev > 0.0) {
    rep.shape_overlap = pulse_overlap(single_channel(run.shape, 0), single_channel(run.shape, 1));
    if (rep.shape_overlap < overlap_warning)
      warn("temporal overlap of the H and V photon shapes is " + std::to_string(rep.shape_overlap) +
           "; the polarization-only state ignores time-bin entanglement");
  }
  return rep;
}

const RamanLine& find_line(const std::vector<RamanLine>& lines, const ZeemanState& initial, const ZeemanState& final) {
  for (const auto& l : lines)
    if (l.initial == initial && l.final == final) return l;
  throw std::invalid_argument("no Raman line " + to_string(initial) + " -> " + to_string(final) + " for this drive");
}

}  // namespace

JointStateReport entangle_bichromatic(const SystemModel& model, const DetectionChain& chain,
                                      const BichromaticOptions& options) {
  const LaserField beam = model.lasers.at(first_drive(model));
  const auto ranked = select_optimal_pair(setting_for(model, beam));
  // The first pair that starts from |S,-1/2>, where optical pumping leaves the ion.
  const ZeemanState start = make_state(Manifold::S12, -0.5);
  const RankedPair* pair = nullptr;
  for (const auto& r : ranked)
    if (r.first.initial == start) {
      pair = &r;
      break;
    }
  if (!pair) throw std::invalid_argument("entangle_bichromatic: drive offers no orthogonal pair from |S,-1/2>");

  const std::array<double, 2> weights{std::cos(options.mixing), std::sin(options.mixing)};
  auto tones = bichromatic_tones(model, beam, {pair->first, pair->second}, options.rabi, weights);
  tones[0].phase = options.global_phase;
  tones[1].phase = options.global_phase + options.relative_phase;

  const ZeemanState da = pair->first.final, db = pair->second.final;
  const std::vector<std::pair<ZeemanState, int>> targets{{da, 0}, {da, 1}, {db, 0}, {db, 1}};
  const ConditionalRun run = run_conditional(model, tones, {start}, Eigen::VectorXcd::Ones(1), targets, chain, options);

  Eigen::VectorXcd target = Eigen::VectorXcd::Zero(4);
  target[0] = weights[0];
  target[3] = weights[1];
  const std::string a = to_string(da), b = to_string(db);
  return make_report(run, {a + " H", a + " V", b + " H", b + " V"}, target, 3, 0, options.overlap_warning);
}

JointStateReport map_state(double alpha, double phi, const SystemModel& model, const DetectionChain& chain,
                           const BichromaticOptions& options) {
  const LaserField beam = model.lasers.at(first_drive(model));
  const auto lines = predicted_lines([&] {
    SystemModel m = model;
    m.lasers = {beam};
    return m;
  }(), 0);
  const ZeemanState s_minus = make_state(Manifold::S12, -0.5), s_plus = make_state(Manifold::S12, 0.5);
  const ZeemanState shared = make_state(Manifold::D52, -1.5);
  const std::array<RamanLine, 2> pair{find_line(lines, s_minus, shared), find_line(lines, s_plus, shared)};
  auto tones = bichromatic_tones(model, beam, pair, options.rabi, {1.0, 1.0});
  tones[0].phase = options.global_phase;
  tones[1].phase = options.global_phase + options.relative_phase;

  Eigen::VectorXcd amplitudes(2);
  amplitudes << std::cos(alpha), std::polar(std::sin(alpha), phi);
  const ConditionalRun run =
      run_conditional(model, tones, {s_minus, s_plus}, amplitudes, {{shared, 0}, {shared, 1}}, chain, options);

  // Basis {H, V}; the |S,-1/2> branch emits V, the |S,+1/2> branch H.
  Eigen::VectorXcd target(2);
  target << std::sin(alpha), std::cos(alpha);
  return make_report(run, {"H", "V"}, target, 0, 1, options.overlap_warning);
}

// ---------------------------------------------------------------- qubit dynamics

std::vector<double> rabi_thermal(double omega0, const std::vector<ThermalMode>& modes, const std::vector<double>& t) {
  constexpr double kWeightCut = 1e-13;
  // Joint distribution of the Rabi-frequency factor as (weight, factor) pairs.
  std::vector<std::pair<double, double>> dist{{1.0, 1.0}};
  for (const auto& mode : modes) {
    if (mode.nbar < 0.0 || mode.eta < 0.0) throw std::invalid_argument("rabi_thermal: negative eta or nbar");
    if (mode.eta * mode.eta * (mode.nbar + 1.0) > 0.1)
      warn("rabi_thermal: eta^2 (nbar + 1) = " + std::to_string(mode.eta * mode.eta * (mode.nbar + 1.0)) +
           " is outside the Lamb-Dicke regime");
    std::vector<std::pair<double, double>> single;
    const double ratio = mode.nbar / (mode.nbar + 1.0);
    double p = 1.0 / (mode.nbar + 1.0), kept = 0.0;
    for (int n = 0; kept < 1.0 - kWeightCut && n < 100000; ++n, p *= ratio) {
      single.emplace_back(p, 1.0 - mode.eta * mode.eta * n);
      kept += p;
      if (ratio == 0.0) break;
    }
    std::vector<std::pair<double, double>> next;
    next.reserve(dist.size() * single.size());
    for (const auto& [w1, f1] : dist)
      for (const auto& [w2, f2] : single)
        if (w1 * w2 > kWeightCut) next.emplace_back(w1 * w2, f1 * f2);
    dist.swap(next);
  }
  double norm = 0.0;
  for (const auto& [w, f] : dist) norm += w;

  std::vector<double> out(t.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double sum = 0.0;
    for (const auto& [w, f] : dist) {
      const double s = std::sin(0.5 * omega0 * f * t[i]);
      sum += w * s * s;
    }
    out[i] = sum / norm;
  }
  return out;
}

std::vector<double> oscillation_contrast(double omega0, const std::vector<double>& t, const std::vector<double>& p,
                                         int periods) {
  if (t.size() != p.size()) throw std::invalid_argument("oscillation_contrast: length mismatch");
  const double period = kTwoPi / omega0;
  std::vector<double> lo(periods, std::numeric_limits<double>::infinity());
  std::vector<double> hi(periods, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int k = static_cast<int>(std::floor(t[i] / period));
    if (k < 0 || k >= periods) continue;
    lo[k] = std::min(lo[k], p[i]);
    hi[k] = std::max(hi[k], p[i]);
  }
  std::vector<double> out(periods);
  for (int k = 0; k < periods; ++k) out[k] = std::isfinite(lo[k]) ? hi[k] - lo[k] : kNaN;
  return out;
}

double RamseyModel::amplitude(double t_wait) const {
  if (!(tau > 0.0) || std::isinf(tau)) return amplitude0;
  const double x = t_wait / tau;
  return amplitude0 * std::exp(-0.5 * x * x);
}

double RamseyModel::fringe(double t_wait, double phase) const {
  return 0.5 * (1.0 + amplitude(t_wait) * std::cos(phase + phase0));
}

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& amplitude, bool gaussian) {
  const int m = static_cast<int>(t.size());
  if (m < 3 || static_cast<int>(amplitude.size()) != m) throw std::invalid_argument("fit_decay: need >= 3 points");
  // Fit the decay rate k = 1/tau (per 100 us) so that "no decay" is the finite point k = 0.
  constexpr double unit = 100e-6;
  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int i = 0; i < m; ++i) {
      const double x = p[1] * t[i] / unit;
      r[i] = p[0] * (gaussian ? std::exp(-0.5 * x * x) : std::exp(-std::abs(x))) - amplitude[i];
    }
  };
  // Start from the two-point estimate through the first and last samples.
  const double a0 = std::max(amplitude.front(), 1e-3);
  const double ratio = std::clamp(amplitude.back() / a0, 1e-6, 0.999);
  const double span = std::max(t.back() / unit, 1e-9);
  const double k0 = gaussian ? std::sqrt(-2.0 * std::log(ratio)) / span : -std::log(ratio) / span;
  Eigen::VectorXd start(2);
  start << a0, k0;
  const FitResult fit = least_squares(residuals, m, start);

  DecayFit out;
  out.amplitude0 = fit.parameters[0];
  out.amplitude0_error = fit.standard_error[0];
  const double k = std::abs(fit.parameters[1]);
  out.tau = k > 0.0 ? unit / k : std::numeric_limits<double>::infinity();
  out.tau_error = k > 0.0 ? unit * fit.standard_error[1] / (k * k) : std::numeric_limits<double>::infinity();
  out.cost = fit.cost;
  return out;
}

RamseyResult ramsey_coherence(const std::vector<double>& t_wait, const std::vector<double>& phases,
                              const RamseyModel& model, const RamseyOptions& options) {
  check_grid(t_wait, "ramsey_coherence");
  if (phases.size() < 3) throw std::invalid_argument("ramsey_coherence: need at least 3 phases");
  RamseyResult out;
  out.t_wait = t_wait;
  out.phases = phases;

  std::mt19937_64 rng(options.seed);
  const bool noisy = std::isfinite(model.tau) && model.tau > 0.0;
  std::normal_distribution<double> detuning(0.0, noisy ? 1.0 / model.tau : 0.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  Eigen::MatrixXd design(phases.size(), 3);
  for (std::size_t j = 0; j < phases.size(); ++j) design.row(j) << 1.0, std::cos(phases[j]), std::sin(phases[j]);
  const auto qr = design.colPivHouseholderQr();

  for (double t : t_wait) {
    std::vector<double> fringe(phases.size());
    for (std::size_t j = 0; j < phases.size(); ++j) {
      if (options.shots <= 0) {
        fringe[j] = model.fringe(t, phases[j]);
        continue;
      }
      int bright = 0;
      for (int s = 0; s < options.shots; ++s) {
        const double d = noisy ? detuning(rng) : 0.0;
        const double p = 0.5 * (1.0 + model.amplitude0 * std::cos(phases[j] + model.phase0 + d * t));
        if (coin(rng) < p) ++bright;
      }
      fringe[j] = static_cast<double>(bright) / options.shots;
    }
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(fringe.data(), static_cast<Eigen::Index>(fringe.size()));
    const Eigen::Vector3d c = qr.solve(y);
    out.amplitude.push_back(2.0 * std::hypot(c[1], c[2]));
    out.fringes.push_back(std::move(fringe));
  }
  out.gaussian = fit_decay(t_wait, out.amplitude, true);
  out.exponential = fit_decay(t_wait, out.amplitude, false);
  return out;
}

}  // namespace cavqed
