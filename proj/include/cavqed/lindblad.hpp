#pragma once

// Master-equation core: the 18-level atom coupled to two cavity polarization
// modes and a set of classical lasers, in a rotating frame where single-tone
// CW driving is time independent.
//
// Density matrices are vectorized by column stacking, vec(rho)[c * N + r] = rho(r, c),
// so that vec(A rho B) = (B^T (x) A) vec(rho).

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cavqed/fields.hpp"
#include "cavqed/optics.hpp"

namespace cavqed {

/// atom (x) mode_H (x) mode_V with a common photon cutoff. The atom index is the
/// slowest, mode_V the fastest.
class HilbertLayout {
 public:
  explicit HilbertLayout(int n_max = 1);

  int n_max() const { return n_max_; }
  int photon_levels() const { return n_max_ + 1; }
  int dim() const { return kAtomDimension * photon_levels() * photon_levels(); }

  int index(int atom, int n_h, int n_v) const;
  int index(const ZeemanState& s, int n_h, int n_v) const { return index(atom_index(s), n_h, n_v); }

  struct Entry {
    int atom;
    int n_h;
    int n_v;
  };
  Entry decode(int index) const;

 private:
  int n_max_;
};

struct SystemModel {
  AtomData atom = AtomData::ca40();
  MagneticField field;
  CavityModes modes;
  double g = 0.0;                // coupling for unit beta, rad/s
  double kappa = 0.0;            // cavity field decay rate, rad/s
  double cavity_detuning = 0.0;  // omega_cav - omega(P3/2 - D5/2), rad/s
  std::vector<LaserField> lasers;
  // The D manifolds live for about a second; switching their decay off keeps
  // pulsed simulations inside the states the pulse can reach.
  bool metastable_decay = true;

  /// Throws std::invalid_argument for negative rates or longitudinal laser polarizations.
  void validate() const;
};

/// Residual energies of the rotating frame. Diagonal entries of H are
/// psi[manifold] + Zeeman shift + (n_H + n_V) psi_photon.
struct RotatingFrame {
  std::array<double, 5> psi{};
  double photon = 0.0;
  // For each laser: the frame-defining tone on its transition (its own index when
  // it defines the frame) and its beat frequency against that tone, rad/s.
  std::vector<int> reference;
  std::vector<double> beat;

  bool is_static() const;
};

/// Solves the frame constraints psi(upper) - psi(lower) = -detuning for every laser and
/// the cavity resonance condition. The first laser on each transition fixes the frame;
/// later tones on the same transition become beat terms.
RotatingFrame solve_frame(const SystemModel& model);

/// Static Hamiltonian for single-tone CW driving (envelopes ignored).
/// Throws FrameInconsistencyError when two lasers address one transition.
SparseMatrixXcd build_hamiltonian(const SystemModel& model, const HilbertLayout& layout);

// Explicit time dependence: H(t) = H0 + sum_k [f_k(t) V_k + conj(f_k(t)) V_k^dagger].
struct DriveTerm {
  SparseMatrixXcd raising;
  std::function<Complex(double)> coefficient;
  std::string label;
};

/// Everything the master equation needs, optionally restricted to the basis states
/// reachable from an initial support.
struct OpenSystem {
  HilbertLayout layout;
  std::vector<int> basis;  // full-layout indices of the retained states, ascending
  SparseMatrixXcd hamiltonian;
  std::vector<DriveTerm> drives;
  std::vector<SparseMatrixXcd> collapse;
  std::vector<std::string> collapse_labels;
  RotatingFrame frame;
  double kappa = 0.0;

  int dim() const { return static_cast<int>(basis.size()); }
  /// P^T op P for an operator on the full layout.
  SparseMatrixXcd restrict(const SparseMatrixXcd& full) const;
  /// Position of a full-layout index in `basis`, or -1.
  int local_index(int full_index) const;
  /// Hamiltonian at time t including drive terms.
  SparseMatrixXcd hamiltonian_at(double t) const;
};

/// Builds H, drive terms and collapse operators. Lasers with a non-constant envelope or
/// a beat against the frame become drive terms; everything else is folded into H.
/// With `initial_support`, the basis is pruned to the states reachable through H,
/// the drive terms and the collapse operators.
OpenSystem build_open_system(const SystemModel& model, const HilbertLayout& layout,
                             const std::optional<std::vector<int>>& initial_support = std::nullopt);

// Operators on the full layout.
SparseMatrixXcd annihilation(const HilbertLayout& layout, int mode);
SparseMatrixXcd atom_transition(const HilbertLayout& layout, int to_atom, int from_atom);
SparseMatrixXcd identity(const HilbertLayout& layout);

/// Superoperator generator, possibly time dependent.
class Liouvillian {
 public:
  int hilbert_dim() const { return n_; }
  int dim() const { return n_ * n_; }
  bool time_dependent() const { return !terms_.empty(); }

  const SparseMatrixXcd& constant_part() const { return l0_; }
  /// Dense sum of all parts with the drive coefficients evaluated at t.
  SparseMatrixXcd at(double t) const;
  void apply(double t, const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const;

  // Diagnostics: the commutator part and each dissipator separately.
  const SparseMatrixXcd& commutator_part() const { return commutator_; }
  const std::vector<SparseMatrixXcd>& dissipators() const { return dissipators_; }

  /// Upper bound on the generator's spectral radius (rad/s), 1-norm of the constant part.
  double norm_estimate() const;

  friend Liouvillian build_liouvillian(const OpenSystem& system);
  friend Liouvillian build_liouvillian(const OpenSystem& system, const std::vector<bool>& discard_jump);
  friend Liouvillian build_liouvillian(const SparseMatrixXcd& hamiltonian,
                                       const std::vector<SparseMatrixXcd>& collapse);

 private:
  struct Term {
    SparseMatrixXcd plus;   // -i [V, .]
    SparseMatrixXcd minus;  // -i [V^dagger, .]
    std::function<Complex(double)> coefficient;
  };
  int n_ = 0;
  SparseMatrixXcd l0_;
  SparseMatrixXcd commutator_;
  std::vector<SparseMatrixXcd> dissipators_;
  std::vector<Term> terms_;
};

Liouvillian build_liouvillian(const OpenSystem& system);
/// Generator in which the flagged collapse channels only drain population: their jump term
/// is dropped, so the trace decays by the probability that such a jump happened.
Liouvillian build_liouvillian(const OpenSystem& system, const std::vector<bool>& discard_jump);
Liouvillian build_liouvillian(const SparseMatrixXcd& hamiltonian, const std::vector<SparseMatrixXcd>& collapse);
Liouvillian build_liouvillian(const SystemModel& model, const HilbertLayout& layout);

struct DensityMatrix {
  Eigen::MatrixXcd rho;
  double time = 0.0;

  static DensityMatrix pure(int dim, int index);
  static DensityMatrix maximally_mixed(int dim);
  static DensityMatrix from_vector(const Eigen::VectorXcd& v, double time = 0.0);
  Eigen::VectorXcd vectorized() const;

  double trace_deviation() const;
  double hermiticity_error() const;
  double min_eigenvalue() const;
  /// Throws SolverError when Hermiticity, trace or positivity fail the given tolerances.
  void check(double hermitian_tol = 1e-10, double trace_tol = 1e-8, double positivity_tol = 1e-8) const;
};

struct SteadyStateOptions {
  double residual_tolerance = 1e-10;
  // When set, a degenerate null space is resolved by projecting this state onto it
  // (the infinite-time limit of the dynamics) instead of raising an error.
  std::optional<DensityMatrix> initial;
};

struct SteadyState {
  DensityMatrix state;
  double residual = 0.0;  // ||L x|| / (||L||_1 ||x||)
  bool used_fallback = false;
};

/// Null vector of L by a sparse LU solve with one equation replaced by the trace
/// condition, falling back to shifted inverse iteration. Throws SingularSteadyStateError
/// when the stationary state is not unique and no initial state was supplied.
SteadyState steady_state(const Liouvillian& l, const SteadyStateOptions& options = {});

struct EvolveOptions {
  double rtol = 1e-8;
  double atol = 0.0;  // 0 selects rtol * 1e-2
  double initial_step = 0.0;
  double min_step = 0.0;  // 0 selects 1e-12 of the span
  long max_steps = 200'000'000;
};

/// Called after every accepted step with the vectorized state.
using StepObserver = std::function<void(double t, const Eigen::VectorXcd& x)>;

/// Dormand-Prince 5(4) integration of d vec(rho)/dt = L(t) vec(rho). Steps land
/// exactly on every t_grid point; the returned trajectory holds one state per point.
/// Throws StepSizeUnderflowError when the step collapses below min_step.
std::vector<DensityMatrix> evolve(const Liouvillian& l, const DensityMatrix& rho0, const std::vector<double>& t_grid,
                                  const EvolveOptions& options = {}, const StepObserver& observer = {});

/// Tr(rho O). Throws std::invalid_argument on a dimension mismatch.
Complex expectation(const DensityMatrix& rho, const SparseMatrixXcd& op);
Complex expectation(const Eigen::VectorXcd& vec_rho, const SparseMatrixXcd& op);

/// Photon number operators b_j^dagger b_j of the detector modes b = U a, restricted to the system basis.
std::array<SparseMatrixXcd, 2> detector_number_operators(const OpenSystem& system, const DetectionChain& chain);

/// Count rates 2 kappa <b_j^dagger b_j> x channel efficiency, plus dark counts when requested.
std::array<double, 2> photon_flux(const DensityMatrix& rho, const OpenSystem& system, const DetectionChain& chain,
                                  bool include_dark_counts = true);

/// Sparse triplet text dump, one "row col re im" line per stored entry.
void write_triplets(std::ostream& out, const SparseMatrixXcd& m);

}  // namespace cavqed
