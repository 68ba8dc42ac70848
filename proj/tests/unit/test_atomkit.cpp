#include <doctest.h>

#include <cmath>

#include <gsl/gsl_sf_coupling.h>

#include "cavqed/atomkit.hpp"
#include "cavqed/errors.hpp"
#include "cavqed/units.hpp"

using namespace cavqed;

namespace {

// Independent Clebsch-Gordan oracle through the Wigner 3j symbol.
double cg_oracle(int two_j1, int two_m1, int two_j2, int two_m2, int two_J, int two_M) {
  const int phase2 = two_j1 - two_j2 + two_M;
  const double sign = (phase2 / 2) % 2 == 0 ? 1.0 : -1.0;
  return sign * std::sqrt(two_J + 1.0) * gsl_sf_coupling_3j(two_j1, two_j2, two_J, two_m1, two_m2, -two_M);
}

}  // namespace

TEST_CASE("manifolds hold eighteen sub-states") {
  const AtomData& atom = AtomData::ca40();
  int total = 0;
  for (Manifold m : kManifolds) {
    const LevelManifold& lm = atom.manifold(m);
    CHECK(lm.multiplicity() == lm.two_j + 1);
    total += lm.multiplicity();
    if (!lm.branching.empty()) {
      double sum = 0.0;
      for (const auto& [_, f] : lm.branching) sum += f;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  CHECK(total == kAtomDimension);
  CHECK(all_states().size() == 18);
  for (int i = 0; i < kAtomDimension; ++i) CHECK(atom_index(all_states()[i]) == i);
}

TEST_CASE("bundled atom data rejects malformed input") {
  CHECK_THROWS_AS(AtomData::from_json_text("{}"), ConfigError);
  CHECK_THROWS_AS(AtomData::from_json_text("[1, 2]"), ConfigError);
  CHECK_NOTHROW(AtomData::from_json_text(bundled_atom_json()));
}

TEST_CASE("lande factors") {
  CHECK(lande_g(Manifold::S12) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(lande_g(Manifold::D52) == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(lande_g(Manifold::P32) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(lande_g(Manifold::P12) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(lande_g(Manifold::D32) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("zeeman shifts") {
  CHECK(zeeman_shift(make_state(Manifold::S12, 0.5), 0.0) == 0.0);
  const double b = 4.77;
  const double d_split = zeeman_shift(make_state(Manifold::D52, 0.5), b) - zeeman_shift(make_state(Manifold::D52, -0.5), b);
  CHECK(to_mhz(d_split) == doctest::Approx(8.01).epsilon(1e-3));
  const double s_split = zeeman_shift(make_state(Manifold::S12, 0.5), b) - zeeman_shift(make_state(Manifold::S12, -0.5), b);
  CHECK(to_mhz(s_split) == doctest::Approx(13.35).epsilon(1e-3));
  for (const ZeemanState& s : all_states()) {
    ZeemanState mirror = s;
    mirror.two_m = -s.two_m;
    CHECK(zeeman_shift(s, 3.0) == doctest::Approx(-zeeman_shift(mirror, 3.0)));
    CHECK(zeeman_shift(s, 6.0) == doctest::Approx(2.0 * zeeman_shift(s, 3.0)));
  }
}

TEST_CASE("clebsch-gordan coefficients match the 3j oracle") {
  CHECK(cg_coefficient(make_state(Manifold::S12, -0.5), make_state(Manifold::P32, -1.5), -1) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cg_coefficient(make_state(Manifold::S12, -0.5), make_state(Manifold::P32, 1.5), -1) == 0.0);
  CHECK_THROWS_AS(cg_coefficient(make_state(Manifold::S12, -0.5), make_state(Manifold::S12, 0.5), 1),
                  std::invalid_argument);

  const std::pair<Manifold, Manifold> pairs[] = {{Manifold::S12, Manifold::P32},
                                                 {Manifold::D52, Manifold::P32},
                                                 {Manifold::S12, Manifold::P12},
                                                 {Manifold::D32, Manifold::P32},
                                                 {Manifold::D32, Manifold::P12}};
  for (const auto& [lo, up] : pairs) {
    for (const ZeemanState& l : sublevels(lo))
      for (const ZeemanState& u : sublevels(up))
        for (int q = -1; q <= 1; ++q) {
          const double expected =
              (u.two_m == l.two_m + 2 * q) ? cg_oracle(twice_j(lo), l.two_m, 2, 2 * q, twice_j(up), u.two_m) : 0.0;
          CHECK(cg_coefficient(l, u, q) == doctest::Approx(expected).epsilon(1e-12));
        }
  }
}

TEST_CASE("cg sum rule is independent of the lower m") {
  for (Manifold lo : {Manifold::S12, Manifold::D52, Manifold::D32}) {
    for (Manifold up : {Manifold::P12, Manifold::P32}) {
      if (lo == Manifold::D52 && up == Manifold::P12) continue;
      double reference = -1.0;
      for (const ZeemanState& l : sublevels(lo)) {
        double sum = 0.0;
        for (const ZeemanState& u : sublevels(up))
          for (int q = -1; q <= 1; ++q) sum += std::pow(cg_coefficient(l, u, q), 2);
        if (reference < 0.0) reference = sum;
        CHECK(std::abs(sum - reference) < 1e-12);
      }
    }
  }
}

TEST_CASE("dipole projections") {
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  const Polarization sigma_minus = Polarization::circular(z, -1);
  CHECK(std::abs(dipole_projection(sigma_minus, -1, z)) == doctest::Approx(1.0));
  CHECK(std::abs(dipole_projection(sigma_minus, 1, z)) < 1e-14);

  const Polarization lin = Polarization::linear(Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitX());
  CHECK(std::abs(dipole_projection(lin, 1, z)) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(dipole_projection(lin, -1, z)) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(dipole_projection(lin, 0, z)) < 1e-14);

  // A pi photon has its field along B; a cavity along B supports no such field.
  const Polarization along_b = Polarization::from_vector(z.cast<Complex>(), z);
  CHECK_THROWS_AS(dipole_projection(along_b, 0, z), std::invalid_argument);

  const Eigen::Vector3d axes[] = {z, Eigen::Vector3d(1, 1, 0).normalized(), Eigen::Vector3d(0.3, -0.4, 0.87).normalized()};
  const Eigen::Vector3cd field = Eigen::Vector3cd(Complex(0.2, 0.1), Complex(-0.5, 0.3), Complex(0.1, -0.7)).normalized();
  const Polarization p = Polarization::from_vector(field);
  for (const auto& axis : axes) {
    double total = 0.0;
    for (int q = -1; q <= 1; ++q) total += std::norm(dipole_projection(p, q, axis));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}
