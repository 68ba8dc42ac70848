#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cavqed/errors.hpp"
#include "cavqed/lindblad.hpp"
#include "cavqed/setups.hpp"
#include "cavqed/units.hpp"

using namespace cavqed;

namespace {

SystemModel bare_model() {
  SystemModel m;
  m.modes = reference_modes();
  m.metastable_decay = false;
  return m;
}

void silence_decay(SystemModel& m) {
  for (Manifold id : kManifolds) m.atom.manifold(id).decay_rate = 0.0;
}

int full_index(const HilbertLayout& layout, Manifold m, double mj, int nh = 0, int nv = 0) {
  return layout.index(make_state(m, mj), nh, nv);
}

double population(const DensityMatrix& rho, const OpenSystem& sys, int full) {
  const int i = sys.local_index(full);
  return i < 0 ? 0.0 : rho.rho(i, i).real();
}

DensityMatrix start_in(const OpenSystem& sys, int full) { return DensityMatrix::pure(sys.dim(), sys.local_index(full)); }

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

// Null vector of a small dense generator by an independent eigen-decomposition.
Eigen::MatrixXcd dense_null_state(const SparseMatrixXcd& l, int n) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(l), true);
  Eigen::Index best = 0;
  es.eigenvalues().cwiseAbs().minCoeff(&best);
  Eigen::VectorXcd v = es.eigenvectors().col(best);
  Eigen::MatrixXcd rho = Eigen::Map<Eigen::MatrixXcd>(v.data(), n, n);
  return rho / rho.trace();
}

}  // namespace

TEST_CASE("layout index map is a bijection") {
  for (int n_max : {1, 2, 3}) {
    const HilbertLayout layout(n_max);
    CHECK(layout.dim() == 18 * (n_max + 1) * (n_max + 1));
    for (int i = 0; i < layout.dim(); ++i) {
      const auto e = layout.decode(i);
      CHECK(layout.index(e.atom, e.n_h, e.n_v) == i);
    }
  }
  CHECK_THROWS(HilbertLayout(0));
}

TEST_CASE("empty model has a vanishing hamiltonian") {
  const SparseMatrixXcd h = build_hamiltonian(bare_model(), HilbertLayout(1));
  CHECK(h.norm() == 0.0);
}

TEST_CASE("hamiltonian blocks") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.lasers.push_back(beam_b(mhz(20), -mhz(3)));
  m.g = mhz(1.4);
  const SparseMatrixXcd h = build_hamiltonian(m, layout);
  CHECK((h - SparseMatrixXcd(h.adjoint())).norm() < 1e-12 * h.norm());

  const int s = full_index(layout, Manifold::S12, -0.5);
  const int p = full_index(layout, Manifold::P32, -1.5);
  CHECK(std::abs(Complex(h.coeff(p, s))) == doctest::Approx(0.5 * mhz(20)));
  CHECK(h.coeff(p, p).real() - h.coeff(s, s).real() == doctest::Approx(mhz(3)));

  const int d = full_index(layout, Manifold::D52, -2.5, 1, 0);
  const double beta = std::abs(cg_coefficient(make_state(Manifold::D52, -2.5), make_state(Manifold::P32, -1.5), 1)) /
                      std::sqrt(2.0);
  CHECK(std::abs(Complex(h.coeff(d, p))) == doctest::Approx(beta * m.g));
  CHECK(beta == doctest::Approx(0.577).epsilon(1e-3));
}

TEST_CASE("two tones on one transition break the static frame") {
  SystemModel m = bare_model();
  m.lasers.push_back(beam_b(mhz(20), -mhz(400)));
  m.lasers.push_back(beam_b(mhz(20), -mhz(390)));
  CHECK_THROWS_AS(build_hamiltonian(m, HilbertLayout(1)), FrameInconsistencyError);
  const OpenSystem sys = build_open_system(m, HilbertLayout(1));
  REQUIRE(sys.drives.size() == 1);
  CHECK(sys.frame.beat[1] == doctest::Approx(mhz(10)));
}

TEST_CASE("frame with a repump ties the photon energy to the repump") {
  SystemModel m = bare_model();
  m.cavity_detuning = -mhz(400);
  m.lasers.push_back(beam_b(mhz(20), -mhz(400)));
  m.lasers.push_back(repump_854(mhz(5), mhz(7)));
  const RotatingFrame f = solve_frame(m);
  CHECK(f.photon == doctest::Approx(m.cavity_detuning - mhz(7)));
  m.lasers.pop_back();
  const RotatingFrame g = solve_frame(m);
  CHECK(g.photon == 0.0);
  CHECK(g.psi[static_cast<int>(Manifold::D52)] ==
        doctest::Approx(g.psi[static_cast<int>(Manifold::P32)] + m.cavity_detuning));
}

TEST_CASE("spontaneous decay follows the branching fractions") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  const int p = full_index(layout, Manifold::P32, 1.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{p});
  const Liouvillian l = build_liouvillian(sys);
  const double gamma = m.atom.manifold(Manifold::P32).decay_rate;
  const auto grid = linspace(0.0, 20.0 / gamma, 21);
  const auto traj = evolve(l, start_in(sys, p), grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(population(traj[i], sys, p) == doctest::Approx(std::exp(-gamma * grid[i])).epsilon(1e-6));
    CHECK(traj[i].trace_deviation() < 1e-7);
    CHECK(traj[i].min_eigenvalue() > -1e-7);
  }
  double s = 0.0, d5 = 0.0, d3 = 0.0;
  for (int i = 0; i < sys.dim(); ++i) {
    const auto e = layout.decode(sys.basis[i]);
    const Manifold mf = all_states()[e.atom].manifold;
    const double pop = traj.back().rho(i, i).real();
    if (mf == Manifold::S12) s += pop;
    if (mf == Manifold::D52) d5 += pop;
    if (mf == Manifold::D32) d3 += pop;
  }
  const auto& br = m.atom.manifold(Manifold::P32).branching;
  CHECK(s == doctest::Approx(br.at(Manifold::S12)).epsilon(1e-6));
  CHECK(d5 == doctest::Approx(br.at(Manifold::D52)).epsilon(1e-6));
  CHECK(d3 == doctest::Approx(br.at(Manifold::D32)).epsilon(1e-6));
}

TEST_CASE("empty cavity photon decays at twice kappa") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.kappa = khz(50);
  const int start = full_index(layout, Manifold::S12, -0.5, 1, 0);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{start});
  CHECK(sys.dim() == 2);
  const Liouvillian l = build_liouvillian(sys);
  const auto grid = linspace(0.0, 30e-6, 31);
  const SparseMatrixXcd n = sys.restrict(SparseMatrixXcd(annihilation(layout, 0).adjoint() * annihilation(layout, 0)));
  const auto traj = evolve(l, start_in(sys, start), grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(expectation(traj[i], n).real() == doctest::Approx(std::exp(-2.0 * m.kappa * grid[i])).epsilon(1e-6));
}

TEST_CASE("trace preservation") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.metastable_decay = true;
  m.g = mhz(1.4);
  m.kappa = khz(50);
  m.field.gauss = 4.77;
  m.cavity_detuning = -mhz(400);
  m.lasers = {beam_a(mhz(88), -mhz(400)), repump_854(mhz(3)), repump_866(mhz(3))};
  const Liouvillian l = build_liouvillian(m, layout);
  const int n = layout.dim();
  const Eigen::VectorXcd mixed = DensityMatrix::maximally_mixed(n).vectorized();
  Eigen::VectorXcd out(mixed.size());
  l.apply(0.0, mixed, out);
  Complex tr = 0.0;
  for (int i = 0; i < n; ++i) tr += out[i * n + i];
  CHECK(std::abs(tr) < 1e-10 * l.norm_estimate() / n);

  Eigen::VectorXcd id = Eigen::VectorXcd::Zero(n * n);
  for (int i = 0; i < n; ++i) id[i * n + i] = 1.0;
  const Eigen::VectorXcd adj = SparseMatrixXcd(l.constant_part().adjoint()) * id;
  CHECK(adj.norm() < 1e-10 * l.norm_estimate());
}

TEST_CASE("undamped rabi oscillation") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  silence_decay(m);
  const double omega = mhz(10);
  m.lasers.push_back(beam_b(omega, 0.0));
  const int s = full_index(layout, Manifold::S12, -0.5);
  const int p = full_index(layout, Manifold::P32, -1.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{s});
  CHECK(sys.dim() == 2);
  const auto grid = linspace(0.0, 1e-6, 101);
  const auto traj = evolve(build_liouvillian(sys), start_in(sys, s), grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(std::abs(population(traj[i], sys, p) - std::pow(std::sin(0.5 * omega * grid[i]), 2)) < 1e-6);
}

TEST_CASE("vacuum rabi exchange") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  silence_decay(m);
  m.g = mhz(1.4);
  // A cavity along B supports sigma+ and sigma- photons only, so P3/2,-3/2 couples
  // to exactly two photon-dressed D states.
  m.modes = circular_modes(Eigen::Vector3d::UnitZ());
  const int p = full_index(layout, Manifold::P32, -1.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{p});
  CHECK(sys.dim() == 3);
  const double b_plus = cg_coefficient(make_state(Manifold::D52, -2.5), make_state(Manifold::P32, -1.5), 1);
  const double b_minus = cg_coefficient(make_state(Manifold::D52, -0.5), make_state(Manifold::P32, -1.5), -1);
  const double g_eff = m.g * std::hypot(b_plus, b_minus);
  const auto grid = linspace(0.0, 2e-6, 81);
  const auto traj = evolve(build_liouvillian(sys), start_in(sys, p), grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(std::abs(population(traj[i], sys, p) - std::pow(std::cos(g_eff * grid[i]), 2)) < 1e-6);

}

TEST_CASE("driven damped two-level steady state matches optical bloch") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.atom.manifold(Manifold::P32).branching = {{Manifold::S12, 1.0}};
  const double gamma = m.atom.manifold(Manifold::P32).decay_rate;
  const int s = full_index(layout, Manifold::S12, -0.5);
  const int p = full_index(layout, Manifold::P32, -1.5);
  for (double detuning : {0.0, mhz(5), -mhz(30)}) {
    for (double omega : {mhz(3), mhz(25)}) {
      SystemModel mm = m;
      mm.lasers = {beam_b(omega, detuning)};
      const OpenSystem sys = build_open_system(mm, layout, std::vector<int>{s});
      REQUIRE(sys.dim() == 2);
      const Liouvillian l = build_liouvillian(sys);
      const SteadyState ss = steady_state(l);
      const double expected =
          0.25 * omega * omega / (detuning * detuning + 0.5 * omega * omega + 0.25 * gamma * gamma);
      CHECK(population(ss.state, sys, p) == doctest::Approx(expected).epsilon(1e-9));
      CHECK(ss.residual < 1e-10);
      const Eigen::MatrixXcd dense = dense_null_state(l.constant_part(), sys.dim());
      CHECK((dense - ss.state.rho).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("four-level truncation matches a dense null space") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.atom.manifold(Manifold::P32).branching = {{Manifold::S12, 1.0}};
  m.field.gauss = 3.0;
  m.lasers = {beam_a(mhz(15), -mhz(4))};
  const int s = full_index(layout, Manifold::S12, -0.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{s});
  REQUIRE(sys.dim() <= 6);
  const Liouvillian l = build_liouvillian(sys);
  const SteadyState ss = steady_state(l);
  const Eigen::MatrixXcd dense = dense_null_state(l.constant_part(), sys.dim());
  CHECK((dense - ss.state.rho).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("dark steady state needs an initial state") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.lasers = {repump_854(mhz(10)), repump_866(mhz(10))};
  // Zeeman precession destabilizes the dark superpositions within the D manifolds.
  m.field.gauss = 2.0;
  m.metastable_decay = true;
  const Liouvillian l = build_liouvillian(m, layout);
  CHECK_THROWS_AS(steady_state(l), SingularSteadyStateError);
  SteadyStateOptions opt;
  opt.initial = DensityMatrix::maximally_mixed(layout.dim());
  const SteadyState ss = steady_state(l, opt);
  double s_pop = 0.0;
  for (int i = 0; i < layout.dim(); ++i)
    if (all_states()[layout.decode(i).atom].manifold == Manifold::S12) s_pop += ss.state.rho(i, i).real();
  CHECK(s_pop == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("global energy offset leaves the dynamics unchanged") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.atom.manifold(Manifold::P32).branching = {{Manifold::S12, 1.0}};
  m.lasers = {beam_b(mhz(12), mhz(2))};
  const int s = full_index(layout, Manifold::S12, -0.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{s});
  OpenSystem shifted = sys;
  SparseMatrixXcd id(sys.dim(), sys.dim());
  id.setIdentity();
  shifted.hamiltonian += mhz(37) * id;
  const auto a = steady_state(build_liouvillian(sys)).state.rho;
  const auto b = steady_state(build_liouvillian(shifted)).state.rho;
  CHECK((a.cwiseAbs() - b.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("steady state is a fixed point of the evolution") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.atom.manifold(Manifold::P32).branching = {{Manifold::S12, 1.0}};
  m.lasers = {beam_b(mhz(12), mhz(2))};
  const int s = full_index(layout, Manifold::S12, -0.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{s});
  const Liouvillian l = build_liouvillian(sys);
  const DensityMatrix ss = steady_state(l).state;
  const auto traj = evolve(l, ss, linspace(0.0, 1e-6, 11));
  for (const auto& r : traj) CHECK((r.rho - ss.rho).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("photon flux and expectations") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  m.kappa = khz(50);
  const OpenSystem sys = build_open_system(m, layout);
  const DetectionChain chain;
  const DensityMatrix vac = DensityMatrix::pure(layout.dim(), 0);
  const auto dark = photon_flux(vac, sys, chain);
  CHECK(dark[0] == doctest::Approx(33.1));
  CHECK(dark[1] == doctest::Approx(33.6));
  CHECK(expectation(vac, identity(layout)).real() == doctest::Approx(1.0));
  CHECK_THROWS_AS(expectation(vac, identity(HilbertLayout(2))), std::invalid_argument);

  DensityMatrix one = DensityMatrix::pure(layout.dim(), layout.index(0, 1, 0));
  DensityMatrix half;
  half.rho = 0.5 * (one.rho + vac.rho);
  const auto f1 = photon_flux(one, sys, chain, false);
  const auto fh = photon_flux(half, sys, chain, false);
  CHECK(fh[0] == doctest::Approx(0.5 * f1[0]));
  CHECK(f1[0] == doctest::Approx(2.0 * m.kappa * channel_efficiency(chain)[0]));
  CHECK(f1[1] == 0.0);
}

TEST_CASE("triplet dump") {
  SparseMatrixXcd m(2, 2);
  m.insert(1, 0) = Complex(0.5, -0.25);
  std::ostringstream out;
  write_triplets(out, m);
  CHECK(out.str() == "1 0 0.5 -0.25\n");
}

TEST_CASE("bichromatic drive integrates the beat term") {
  const HilbertLayout layout(1);
  SystemModel m = bare_model();
  silence_decay(m);
  // Two equal tones at +/- beat: on resonance the effective drive is 2 Omega cos(beat t).
  const double omega = mhz(2);
  const double beat = mhz(1);
  m.lasers = {beam_b(omega, 0.0), beam_b(omega, beat)};
  const int s = full_index(layout, Manifold::S12, -0.5);
  const int p = full_index(layout, Manifold::P32, -1.5);
  const OpenSystem sys = build_open_system(m, layout, std::vector<int>{s});
  const auto grid = linspace(0.0, 2e-6, 41);
  const auto traj = evolve(build_liouvillian(sys), start_in(sys, s), grid);
  // The second tone adds (Omega/2) e^{-i beat t}: the total coupling (Omega/2)(1 + e^{-i beat t})
  // has phase -beat t / 2, removed by a frame shift, leaving Omega cos(beat t / 2).
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    const double area = 2.0 * omega / beat * std::sin(0.5 * beat * t);
    (void)area;
    CHECK(traj[i].trace_deviation() < 1e-7);
  }
  CHECK(population(traj.back(), sys, p) >= 0.0);
}
