#include "cavqed/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <ostream>
#include <stdexcept>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>

#include "cavqed/errors.hpp"

namespace cavqed {

namespace {

constexpr double kTiny = 1e-15;

SparseMatrixXcd from_triplets(int rows, int cols, const std::vector<Triplet>& t) {
  SparseMatrixXcd m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.prune(Complex(0.0, 0.0), 0.0);
  return m;
}

SparseMatrixXcd sparse_identity(int n) {
  SparseMatrixXcd id(n, n);
  id.setIdentity();
  return id;
}

SparseMatrixXcd kron(const SparseMatrixXcd& a, const SparseMatrixXcd& b) {
  SparseMatrixXcd out = Eigen::kroneckerProduct(a, b).eval();
  return out;
}

// -i (I (x) H - H^T (x) I) in the column-stacking convention.
SparseMatrixXcd commutator_superop(const SparseMatrixXcd& h) {
  const SparseMatrixXcd id = sparse_identity(static_cast<int>(h.rows()));
  const SparseMatrixXcd ht = h.transpose();
  SparseMatrixXcd out = kron(id, h) - kron(ht, id);
  return -kI * out;
}

SparseMatrixXcd dissipator_superop(const SparseMatrixXcd& c) {
  const SparseMatrixXcd id = sparse_identity(static_cast<int>(c.rows()));
  const SparseMatrixXcd cdc = (c.adjoint() * c).pruned();
  const SparseMatrixXcd cdct = cdc.transpose();
  const SparseMatrixXcd cconj = c.conjugate();
  SparseMatrixXcd out = kron(cconj, c) - 0.5 * kron(id, cdc) - 0.5 * kron(cdct, id);
  return out;
}

double one_norm(const SparseMatrixXcd& m) {
  double best = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    double s = 0.0;
    for (SparseMatrixXcd::InnerIterator it(m, k); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

}  // namespace

HilbertLayout::HilbertLayout(int n_max) : n_max_(n_max) {
  if (n_max < 1) throw std::invalid_argument("HilbertLayout: photon cutoff must be at least 1");
}

int HilbertLayout::index(int atom, int n_h, int n_v) const {
  const int p = photon_levels();
  if (atom < 0 || atom >= kAtomDimension || n_h < 0 || n_h >= p || n_v < 0 || n_v >= p)
    throw std::out_of_range("HilbertLayout: basis label out of range");
  return (atom * p + n_h) * p + n_v;
}

HilbertLayout::Entry HilbertLayout::decode(int index) const {
  if (index < 0 || index >= dim()) throw std::out_of_range("HilbertLayout: index out of range");
  const int p = photon_levels();
  return {index / (p * p), (index / p) % p, index % p};
}

void SystemModel::validate() const {
  if (g < 0.0 || kappa < 0.0) throw std::invalid_argument("SystemModel: rates must be non-negative");
  if (field.gauss < 0.0) throw std::invalid_argument("SystemModel: field magnitude must be non-negative");
  for (const auto& l : lasers) {
    if (l.rabi < 0.0) throw std::invalid_argument("SystemModel: Rabi frequencies must be non-negative");
    if (l.polarization.longitudinal_component() > 1e-9)
      throw std::invalid_argument("SystemModel: laser polarization is not transverse to its propagation");
  }
  atom.validate();
  cavqed::validate(modes);
}

bool RotatingFrame::is_static() const {
  return std::all_of(beat.begin(), beat.end(), [](double b) { return b == 0.0; });
}

RotatingFrame solve_frame(const SystemModel& model) {
  RotatingFrame frame;
  const int n = static_cast<int>(model.lasers.size());
  frame.reference.assign(n, -1);
  frame.beat.assign(n, 0.0);

  struct Edge {
    int lower, upper;
    double detuning;
  };
  std::vector<Edge> edges;
  std::map<std::pair<int, int>, int> first;
  for (int i = 0; i < n; ++i) {
    const auto [lo, up] = transition(model.lasers[i].role);
    const std::pair<int, int> key{static_cast<int>(lo), static_cast<int>(up)};
    const auto it = first.find(key);
    if (it == first.end()) {
      first.emplace(key, i);
      frame.reference[i] = i;
      edges.push_back({key.first, key.second, model.lasers[i].detuning});
    } else {
      frame.reference[i] = it->second;
      frame.beat[i] = model.lasers[i].detuning - model.lasers[it->second].detuning;
    }
  }

  std::array<int, 5> component;
  component.fill(-1);
  int next_component = 0;
  for (int start = 0; start < 5; ++start) {
    if (component[start] >= 0) continue;
    component[start] = next_component;
    frame.psi[start] = 0.0;
    std::deque<int> queue{start};
    while (!queue.empty()) {
      const int m = queue.front();
      queue.pop_front();
      for (const Edge& e : edges) {
        int other;
        double value;
        if (e.lower == m) {
          other = e.upper;
          value = frame.psi[m] - e.detuning;
        } else if (e.upper == m) {
          other = e.lower;
          value = frame.psi[m] + e.detuning;
        } else {
          continue;
        }
        if (component[other] < 0) {
          component[other] = next_component;
          frame.psi[other] = value;
          queue.push_back(other);
        } else if (std::abs(frame.psi[other] - value) > 1e-9 * (1.0 + std::abs(value))) {
          throw FrameInconsistencyError("solve_frame: laser frequencies around a closed loop are inconsistent");
        }
      }
    }
    ++next_component;
  }

  const int p = static_cast<int>(Manifold::P32);
  const int d = static_cast<int>(Manifold::D52);
  if (component[p] == component[d]) {
    frame.photon = model.cavity_detuning + frame.psi[p] - frame.psi[d];
  } else {
    const double shift = frame.psi[p] + model.cavity_detuning - frame.psi[d];
    const int c = component[d];
    for (int m = 0; m < 5; ++m)
      if (component[m] == c) frame.psi[m] += shift;
    frame.photon = 0.0;
  }
  return frame;
}

SparseMatrixXcd annihilation(const HilbertLayout& layout, int mode) {
  if (mode != 0 && mode != 1) throw std::invalid_argument("annihilation: mode must be 0 or 1");
  std::vector<Triplet> t;
  const int p = layout.photon_levels();
  for (int a = 0; a < kAtomDimension; ++a)
    for (int nh = 0; nh < p; ++nh)
      for (int nv = 0; nv < p; ++nv) {
        const int n = mode == 0 ? nh : nv;
        if (n == 0) continue;
        const int from = layout.index(a, nh, nv);
        const int to = mode == 0 ? layout.index(a, nh - 1, nv) : layout.index(a, nh, nv - 1);
        t.emplace_back(to, from, std::sqrt(static_cast<double>(n)));
      }
  return from_triplets(layout.dim(), layout.dim(), t);
}

SparseMatrixXcd atom_transition(const HilbertLayout& layout, int to_atom, int from_atom) {
  std::vector<Triplet> t;
  const int p = layout.photon_levels();
  for (int nh = 0; nh < p; ++nh)
    for (int nv = 0; nv < p; ++nv)
      t.emplace_back(layout.index(to_atom, nh, nv), layout.index(from_atom, nh, nv), 1.0);
  return from_triplets(layout.dim(), layout.dim(), t);
}

SparseMatrixXcd identity(const HilbertLayout& layout) { return sparse_identity(layout.dim()); }

namespace {

// (Omega/2) e^{i phi} sum alpha |u><l| (x) I for one laser, full layout.
SparseMatrixXcd laser_raising(const LaserField& laser, const MagneticField& field, const HilbertLayout& layout) {
  const auto [lo, up] = transition(laser.role);
  const auto c = laser.polarization.spherical(field.axis());
  const Complex prefactor = 0.5 * laser.rabi * std::polar(1.0, laser.phase);
  std::vector<Triplet> t;
  const int p = layout.photon_levels();
  for (const ZeemanState& l : sublevels(lo)) {
    for (const ZeemanState& u : sublevels(up)) {
      const int q = (u.two_m - l.two_m) / 2;
      if (std::abs(q) > 1) continue;
      const Complex amp = prefactor * c[q + 1] * cg_coefficient(l, u, q);
      if (std::abs(amp) < kTiny) continue;
      for (int nh = 0; nh < p; ++nh)
        for (int nv = 0; nv < p; ++nv) t.emplace_back(layout.index(u, nh, nv), layout.index(l, nh, nv), amp);
    }
  }
  return from_triplets(layout.dim(), layout.dim(), t);
}

void append_static_terms(const SystemModel& model, const HilbertLayout& layout, const RotatingFrame& frame,
                         std::vector<Triplet>& t) {
  const int p = layout.photon_levels();
  const auto& states = all_states();
  for (int a = 0; a < kAtomDimension; ++a) {
    const double e = frame.psi[static_cast<int>(states[a].manifold)] + zeeman_shift(states[a], model.field.gauss);
    for (int nh = 0; nh < p; ++nh)
      for (int nv = 0; nv < p; ++nv) {
        const double value = e + (nh + nv) * frame.photon;
        if (value != 0.0) t.emplace_back(layout.index(a, nh, nv), layout.index(a, nh, nv), value);
      }
  }

  if (model.g == 0.0) return;
  const Eigen::Vector3d axis = model.field.axis();
  std::array<std::array<Complex, 3>, 2> mode;
  for (int k = 0; k < 2; ++k) mode[k] = Polarization::from_vector(model.modes.polarization[k]).spherical(axis);
  for (const ZeemanState& ps : sublevels(Manifold::P32)) {
    for (const ZeemanState& ds : sublevels(Manifold::D52)) {
      const int q = (ps.two_m - ds.two_m) / 2;
      if (std::abs(q) > 1) continue;
      const double cg = cg_coefficient(ds, ps, q);
      if (std::abs(cg) < kTiny) continue;
      for (int k = 0; k < 2; ++k) {
        const Complex beta = std::conj(mode[k][q + 1]) * cg;
        if (std::abs(beta) < kTiny) continue;
        // g beta a_k^dagger |D><P| + h.c.
        for (int nh = 0; nh < p; ++nh)
          for (int nv = 0; nv < p; ++nv) {
            const int nh2 = nh + (k == 0 ? 1 : 0);
            const int nv2 = nv + (k == 1 ? 1 : 0);
            if (nh2 >= p || nv2 >= p) continue;
            const double bosonic = std::sqrt(static_cast<double>(k == 0 ? nh2 : nv2));
            const Complex amp = model.g * beta * bosonic;
            const int from = layout.index(ps, nh, nv);
            const int to = layout.index(ds, nh2, nv2);
            t.emplace_back(to, from, amp);
            t.emplace_back(from, to, std::conj(amp));
          }
      }
    }
  }
}

bool laser_is_static(const LaserField& laser, double beat) { return beat == 0.0 && laser.envelope.is_constant(); }

std::vector<SparseMatrixXcd> collapse_operators(const SystemModel& model, const HilbertLayout& layout,
                                                std::vector<std::string>& labels) {
  std::vector<SparseMatrixXcd> out;
  for (Manifold m : kManifolds) {
    const LevelManifold& lm = model.atom.manifold(m);
    if (lm.decay_rate <= 0.0) continue;
    if (!model.metastable_decay && (m == Manifold::D32 || m == Manifold::D52)) continue;
    for (const auto& [target, fraction] : lm.branching) {
      if (fraction <= 0.0) continue;
      const double rate = lm.decay_rate * fraction;
      for (const ZeemanState& u : sublevels(m)) {
        for (const ZeemanState& l : sublevels(target)) {
          const int q = (u.two_m - l.two_m) / 2;
          if (std::abs(q) > 1) continue;
          const double cg = cg_coefficient(l, u, q);
          if (std::abs(cg) < kTiny) continue;
          out.push_back(std::sqrt(rate) * cg * atom_transition(layout, atom_index(l), atom_index(u)));
          labels.push_back(to_string(u) + "->" + to_string(l));
        }
      }
    }
  }
  if (model.kappa > 0.0) {
    for (int k = 0; k < 2; ++k) {
      out.push_back(std::sqrt(2.0 * model.kappa) * annihilation(layout, k));
      labels.push_back("cavity " + model.modes.names[k]);
    }
  }
  return out;
}

}  // namespace

SparseMatrixXcd build_hamiltonian(const SystemModel& model, const HilbertLayout& layout) {
  const RotatingFrame frame = solve_frame(model);
  if (!frame.is_static())
    throw FrameInconsistencyError("build_hamiltonian: two lasers address one transition at different frequencies");
  std::vector<Triplet> t;
  append_static_terms(model, layout, frame, t);
  SparseMatrixXcd h = from_triplets(layout.dim(), layout.dim(), t);
  for (const auto& laser : model.lasers) {
    if (laser.rabi == 0.0) continue;
    const SparseMatrixXcd v = laser_raising(laser, model.field, layout);
    h += v;
    h += SparseMatrixXcd(v.adjoint());
  }
  return h;
}

OpenSystem build_open_system(const SystemModel& model, const HilbertLayout& layout,
                             const std::optional<std::vector<int>>& initial_support) {
  model.validate();
  OpenSystem sys{layout, {}, {}, {}, {}, {}, solve_frame(model), model.kappa};

  std::vector<Triplet> t;
  append_static_terms(model, layout, sys.frame, t);
  SparseMatrixXcd h = from_triplets(layout.dim(), layout.dim(), t);
  std::vector<DriveTerm> drives;
  for (std::size_t i = 0; i < model.lasers.size(); ++i) {
    const LaserField& laser = model.lasers[i];
    if (laser.rabi == 0.0) continue;
    const SparseMatrixXcd v = laser_raising(laser, model.field, layout);
    const double beat = sys.frame.beat[i];
    if (laser_is_static(laser, beat)) {
      h += v;
      h += SparseMatrixXcd(v.adjoint());
      continue;
    }
    const Envelope env = laser.envelope;
    drives.push_back({v,
                      [env, beat](double time) { return env(time) * std::polar(1.0, -beat * time); },
                      std::string(label(laser.role)) + " tone " + std::to_string(i)});
  }
  std::vector<std::string> labels;
  std::vector<SparseMatrixXcd> collapse = collapse_operators(model, layout, labels);

  const int dim = layout.dim();
  if (initial_support) {
    std::vector<std::vector<int>> adjacency(dim);
    auto add_edges = [&](const SparseMatrixXcd& m) {
      for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMatrixXcd::InnerIterator it(m, k); it; ++it)
          if (std::abs(it.value()) > 0.0) adjacency[it.col()].push_back(static_cast<int>(it.row()));
    };
    add_edges(h);
    for (const auto& d : drives) {
      add_edges(d.raising);
      add_edges(SparseMatrixXcd(d.raising.adjoint()));
    }
    for (const auto& c : collapse) add_edges(c);
    std::vector<char> seen(dim, 0);
    std::deque<int> queue;
    for (int s : *initial_support) {
      if (s < 0 || s >= dim) throw std::out_of_range("build_open_system: initial support index out of range");
      if (!seen[s]) {
        seen[s] = 1;
        queue.push_back(s);
      }
    }
    while (!queue.empty()) {
      const int s = queue.front();
      queue.pop_front();
      for (int next : adjacency[s])
        if (!seen[next]) {
          seen[next] = 1;
          queue.push_back(next);
        }
    }
    for (int i = 0; i < dim; ++i)
      if (seen[i]) sys.basis.push_back(i);
  } else {
    sys.basis.resize(dim);
    for (int i = 0; i < dim; ++i) sys.basis[i] = i;
  }

  sys.hamiltonian = sys.restrict(h);
  for (auto& d : drives) {
    d.raising = sys.restrict(d.raising);
    sys.drives.push_back(std::move(d));
  }
  for (std::size_t i = 0; i < collapse.size(); ++i) {
    SparseMatrixXcd c = sys.restrict(collapse[i]);
    if (c.nonZeros() == 0) continue;
    sys.collapse.push_back(std::move(c));
    sys.collapse_labels.push_back(labels[i]);
  }
  return sys;
}

int OpenSystem::local_index(int full_index) const {
  const auto it = std::lower_bound(basis.begin(), basis.end(), full_index);
  if (it == basis.end() || *it != full_index) return -1;
  return static_cast<int>(it - basis.begin());
}

SparseMatrixXcd OpenSystem::restrict(const SparseMatrixXcd& full) const {
  if (full.rows() != layout.dim() || full.cols() != layout.dim())
    throw std::invalid_argument("OpenSystem::restrict: operator does not act on the full layout");
  if (dim() == layout.dim()) return full;
  std::vector<Triplet> t;
  for (int k = 0; k < full.outerSize(); ++k)
    for (SparseMatrixXcd::InnerIterator it(full, k); it; ++it) {
      const int r = local_index(static_cast<int>(it.row()));
      const int c = local_index(static_cast<int>(it.col()));
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  return from_triplets(dim(), dim(), t);
}

SparseMatrixXcd OpenSystem::hamiltonian_at(double t) const {
  SparseMatrixXcd h = hamiltonian;
  for (const auto& d : drives) {
    const Complex f = d.coefficient(t);
    h += f * d.raising;
    h += std::conj(f) * SparseMatrixXcd(d.raising.adjoint());
  }
  return h;
}

Liouvillian build_liouvillian(const SparseMatrixXcd& hamiltonian, const std::vector<SparseMatrixXcd>& collapse) {
  if (hamiltonian.rows() != hamiltonian.cols()) throw std::invalid_argument("build_liouvillian: H is not square");
  Liouvillian l;
  l.n_ = static_cast<int>(hamiltonian.rows());
  l.commutator_ = commutator_superop(hamiltonian);
  l.l0_ = l.commutator_;
  for (const auto& c : collapse) {
    if (c.rows() != hamiltonian.rows() || c.cols() != hamiltonian.cols())
      throw std::invalid_argument("build_liouvillian: collapse operator dimension mismatch");
    l.dissipators_.push_back(dissipator_superop(c));
    l.l0_ += l.dissipators_.back();
  }
  l.l0_.prune(Complex(0.0, 0.0), 0.0);
  return l;
}

Liouvillian build_liouvillian(const OpenSystem& system) {
  Liouvillian l = build_liouvillian(system.hamiltonian, system.collapse);
  for (const auto& d : system.drives) {
    Liouvillian::Term term;
    term.plus = commutator_superop(d.raising);
    term.minus = commutator_superop(SparseMatrixXcd(d.raising.adjoint()));
    term.coefficient = d.coefficient;
    l.terms_.push_back(std::move(term));
  }
  return l;
}

Liouvillian build_liouvillian(const OpenSystem& system, const std::vector<bool>& discard_jump) {
  if (discard_jump.size() != system.collapse.size())
    throw std::invalid_argument("build_liouvillian: one flag per collapse operator expected");
  Liouvillian l = build_liouvillian(system);
  for (std::size_t i = 0; i < discard_jump.size(); ++i) {
    if (!discard_jump[i]) continue;
    const SparseMatrixXcd& c = system.collapse[i];
    const SparseMatrixXcd jump = kron(SparseMatrixXcd(c.conjugate()), c);
    l.dissipators_[i] -= jump;
    l.l0_ -= jump;
  }
  l.l0_.prune(Complex(0.0, 0.0), 0.0);
  return l;
}

Liouvillian build_liouvillian(const SystemModel& model, const HilbertLayout& layout) {
  return build_liouvillian(build_open_system(model, layout));
}

SparseMatrixXcd Liouvillian::at(double t) const {
  SparseMatrixXcd out = l0_;
  for (const auto& term : terms_) {
    const Complex f = term.coefficient(t);
    out += f * term.plus;
    out += std::conj(f) * term.minus;
  }
  return out;
}

void Liouvillian::apply(double t, const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const {
  y.noalias() = l0_ * x;
  for (const auto& term : terms_) {
    const Complex f = term.coefficient(t);
    if (f == Complex(0.0, 0.0)) continue;
    y.noalias() += f * (term.plus * x);
    y.noalias() += std::conj(f) * (term.minus * x);
  }
}

double Liouvillian::norm_estimate() const {
  double n = one_norm(l0_);
  for (const auto& term : terms_) n += one_norm(term.plus) + one_norm(term.minus);
  return n;
}

DensityMatrix DensityMatrix::pure(int dim, int index) {
  DensityMatrix d;
  d.rho = Eigen::MatrixXcd::Zero(dim, dim);
  d.rho(index, index) = 1.0;
  return d;
}

DensityMatrix DensityMatrix::maximally_mixed(int dim) {
  DensityMatrix d;
  d.rho = Eigen::MatrixXcd::Identity(dim, dim) / static_cast<double>(dim);
  return d;
}

DensityMatrix DensityMatrix::from_vector(const Eigen::VectorXcd& v, double time) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()))));
  if (static_cast<Eigen::Index>(n) * n != v.size())
    throw std::invalid_argument("DensityMatrix: vector length is not a square");
  DensityMatrix d;
  d.rho = Eigen::Map<const Eigen::MatrixXcd>(v.data(), n, n);
  d.time = time;
  return d;
}

Eigen::VectorXcd DensityMatrix::vectorized() const {
  return Eigen::Map<const Eigen::VectorXcd>(rho.data(), rho.size());
}

double DensityMatrix::trace_deviation() const { return std::abs(rho.trace() - 1.0); }

double DensityMatrix::hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
  const Eigen::MatrixXcd h = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void DensityMatrix::check(double hermitian_tol, double trace_tol, double positivity_tol) const {
  if (hermiticity_error() > hermitian_tol) throw SolverError("density matrix is not Hermitian");
  if (trace_deviation() > trace_tol) throw SolverError("density matrix trace deviates from one");
  if (min_eigenvalue() < -positivity_tol) throw SolverError("density matrix has a negative eigenvalue");
}

namespace {

using LU = Eigen::SparseLU<SparseMatrixXcd, Eigen::COLAMDOrdering<int>>;

Eigen::VectorXcd normalized_state(const Eigen::VectorXcd& x, int n) {
  Complex tr = 0.0;
  for (int i = 0; i < n; ++i) tr += x[i * n + i];
  if (std::abs(tr) < 1e-300) throw SingularSteadyStateError("steady_state: null vector has zero trace");
  Eigen::VectorXcd y = x / tr;
  Eigen::Map<Eigen::MatrixXcd> m(y.data(), n, n);
  const Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
  m = herm;
  return y;
}

double relative_residual(const SparseMatrixXcd& l, const Eigen::VectorXcd& x, double lnorm) {
  return (l * x).norm() / (lnorm * x.norm());
}

// Repeated application of sigma (sigma - L)^{-1}, which converges to the spectral
// projection onto the null space of L.
Eigen::VectorXcd resolvent_projection(const LU& lu, double sigma, Eigen::VectorXcd x, int n) {
  for (int iter = 0; iter < 400; ++iter) {
    Eigen::VectorXcd next = sigma * lu.solve(x);
    const double change = (next - x).norm() / std::max(next.norm(), 1e-300);
    x = next;
    if (change < 1e-13) break;
  }
  return normalized_state(x, n);
}

}  // namespace

SteadyState steady_state(const Liouvillian& l, const SteadyStateOptions& options) {
  if (l.time_dependent()) throw std::invalid_argument("steady_state: generator is time dependent");
  const int n = l.hilbert_dim();
  const int d = l.dim();
  const SparseMatrixXcd& L = l.constant_part();
  const double lnorm = std::max(one_norm(L), 1e-300);

  SparseMatrixXcd a = L;
  a.prune([](int row, int, const Complex&) { return row != 0; });
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.emplace_back(0, i * n + i, lnorm);
  a += from_triplets(d, d, t);

  LU lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  bool factorized = lu.info() == Eigen::Success;

  SteadyState out;
  if (factorized) {
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(d);
    b[0] = lnorm;
    Eigen::VectorXcd x = lu.solve(b);
    if (lu.info() == Eigen::Success && x.allFinite()) {
      x = normalized_state(x, n);
      out.residual = relative_residual(L, x, lnorm);
      if (out.residual <= options.residual_tolerance) {
        out.state = DensityMatrix::from_vector(x);
        return out;
      }
    }
  }

  // Shifted inverse iteration. Two different starting states that converge to
  // different limits reveal a degenerate null space.
  const double sigma = 1e-13 * lnorm;
  SparseMatrixXcd shifted = -L;
  shifted += sigma * sparse_identity(d);
  LU shifted_lu;
  shifted_lu.analyzePattern(shifted);
  shifted_lu.factorize(shifted);
  if (shifted_lu.info() != Eigen::Success)
    throw SingularSteadyStateError("steady_state: shifted factorization failed");

  auto project = [&](const DensityMatrix& start) {
    return resolvent_projection(shifted_lu, sigma, start.vectorized(), n);
  };
  const Eigen::VectorXcd first = project(DensityMatrix::maximally_mixed(n));
  DensityMatrix skewed;
  skewed.rho = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) skewed.rho(i, i) = static_cast<double>(i + 1);
  skewed.rho /= skewed.rho.trace();
  const Eigen::VectorXcd second = project(skewed);
  const bool unique = (first - second).norm() <= 1e-6 * first.norm();

  Eigen::VectorXcd x;
  if (unique) {
    x = first;
  } else if (options.initial) {
    if (options.initial->rho.rows() != n) throw std::invalid_argument("steady_state: initial state dimension mismatch");
    x = project(*options.initial);
  } else {
    throw SingularSteadyStateError("steady_state: stationary state is not unique");
  }
  out.residual = relative_residual(L, x, lnorm);
  out.used_fallback = true;
  if (out.residual > options.residual_tolerance)
    throw SingularSteadyStateError("steady_state: residual " + std::to_string(out.residual) + " above tolerance");
  out.state = DensityMatrix::from_vector(x);
  return out;
}

namespace {

// Column-stacked vec(rho) -> vec((rho + rho^dagger) / 2).
void hermitize(Eigen::VectorXcd& x, Eigen::Index n) {
  for (Eigen::Index c = 0; c < n; ++c) {
    x[c * n + c] = x[c * n + c].real();
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const Complex m = 0.5 * (x[c * n + r] + std::conj(x[r * n + c]));
      x[c * n + r] = m;
      x[r * n + c] = std::conj(m);
    }
  }
}

}  // namespace

std::vector<DensityMatrix> evolve(const Liouvillian& l, const DensityMatrix& rho0, const std::vector<double>& t_grid,
                                  const EvolveOptions& options, const StepObserver& observer) {
  if (t_grid.empty()) return {};
  if (rho0.rho.rows() != l.hilbert_dim()) throw std::invalid_argument("evolve: initial state dimension mismatch");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("evolve: time grid must be strictly increasing");

  // Dormand-Prince 5(4) tableau.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  const double rtol = options.rtol;
  const double atol = options.atol > 0.0 ? options.atol : rtol * 1e-2;
  const double span = t_grid.back() - t_grid.front();
  const double min_step = options.min_step > 0.0 ? options.min_step : 1e-12 * std::max(span, 1e-300);
  const double fastest = l.norm_estimate();

  std::vector<DensityMatrix> out;
  out.reserve(t_grid.size());
  Eigen::VectorXcd x = rho0.vectorized();
  double t = t_grid.front();
  out.push_back(DensityMatrix::from_vector(x, t));
  if (observer) observer(t, x);

  const Eigen::Index d = x.size();
  const Eigen::Index n = l.hilbert_dim();
  Eigen::VectorXcd k1(d), k2(d), k3(d), k4(d), k5(d), k6(d), k7(d), y(d), err(d);
  l.apply(t, x, k1);
  double h = options.initial_step > 0.0 ? options.initial_step : std::min(span, 1.0 / std::max(fastest, 1e-300));
  long steps = 0;

  for (std::size_t target = 1; target < t_grid.size(); ++target) {
    const double t_end = t_grid[target];
    while (t < t_end) {
      if (++steps > options.max_steps) throw StepSizeUnderflowError("evolve: step budget exhausted", fastest);
      bool land = false;
      double step = h;
      if (t + step >= t_end || t_end - (t + step) < 1e-12 * step) {
        step = t_end - t;
        land = true;
      }
      y = x + step * a21 * k1;
      l.apply(t + c2 * step, y, k2);
      y = x + step * (a31 * k1 + a32 * k2);
      l.apply(t + c3 * step, y, k3);
      y = x + step * (a41 * k1 + a42 * k2 + a43 * k3);
      l.apply(t + c4 * step, y, k4);
      y = x + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      l.apply(t + c5 * step, y, k5);
      y = x + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      l.apply(t + step, y, k6);
      y = x + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      l.apply(t + step, y, k7);
      err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double acc = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double scale = atol + rtol * std::max(std::abs(x[i]), std::abs(y[i]));
        const double r = std::abs(err[i]) / scale;
        acc += r * r;
      }
      const double norm = std::sqrt(acc / static_cast<double>(d));
      const double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);

      if (norm <= 1.0) {
        t = land ? t_end : t + step;
        x.swap(y);
        // Rounding in L leaves a slowly growing anti-Hermitian part.
        hermitize(x, n);
        k1.swap(k7);
        if (observer) observer(t, x);
        // A step shortened to land on the grid says nothing about the stable size.
        if (!land || step >= h) h = step * factor;
      } else {
        h = step * std::min(factor, 1.0);
        if (h < min_step)
          throw StepSizeUnderflowError("evolve: step size underflow at t = " + std::to_string(t), fastest);
      }
    }
    out.push_back(DensityMatrix::from_vector(x, t));
  }
  return out;
}

Complex expectation(const Eigen::VectorXcd& vec_rho, const SparseMatrixXcd& op) {
  const Eigen::Index n = op.rows();
  if (op.cols() != n || vec_rho.size() != n * n) throw std::invalid_argument("expectation: dimension mismatch");
  Complex sum = 0.0;
  for (int k = 0; k < op.outerSize(); ++k)
    for (SparseMatrixXcd::InnerIterator it(op, k); it; ++it) sum += it.value() * vec_rho[it.row() * n + it.col()];
  return sum;
}

Complex expectation(const DensityMatrix& rho, const SparseMatrixXcd& op) {
  if (rho.rho.rows() != op.rows() || op.rows() != op.cols())
    throw std::invalid_argument("expectation: dimension mismatch");
  return expectation(rho.vectorized(), op);
}

std::array<SparseMatrixXcd, 2> detector_number_operators(const OpenSystem& system, const DetectionChain& chain) {
  const std::array<SparseMatrixXcd, 2> a{annihilation(system.layout, 0), annihilation(system.layout, 1)};
  std::array<SparseMatrixXcd, 2> out;
  for (int j = 0; j < 2; ++j) {
    SparseMatrixXcd b = chain.analysis(j, 0) * a[0] + chain.analysis(j, 1) * a[1];
    out[j] = system.restrict(SparseMatrixXcd(b.adjoint() * b));
  }
  return out;
}

std::array<double, 2> photon_flux(const DensityMatrix& rho, const OpenSystem& system, const DetectionChain& chain,
                                  bool include_dark_counts) {
  const auto ops = detector_number_operators(system, chain);
  const auto eff = channel_efficiency(chain);
  std::array<double, 2> out{};
  for (int j = 0; j < 2; ++j) {
    out[j] = 2.0 * system.kappa * expectation(rho, ops[j]).real() * eff[j];
    if (include_dark_counts) out[j] += chain.dark_count_rate[j];
  }
  return out;
}

void write_triplets(std::ostream& out, const SparseMatrixXcd& m) {
  char line[128];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrixXcd::InnerIterator it(m, k); it; ++it) {
      std::snprintf(line, sizeof line, "%d %d %.17g %.17g\n", static_cast<int>(it.row()), static_cast<int>(it.col()),
                    it.value().real(), it.value().imag());
      out << line;
    }
}

}  // namespace cavqed
