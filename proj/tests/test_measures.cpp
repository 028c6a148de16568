#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "atlas/measures.hpp"
#include "atlas/rng.hpp"

using namespace atlas;
using Catch::Approx;

namespace {

// Oracle: build -t0*Delta explicitly from the lattice definition (neighbor
// steps with wrap multiplicity) and diagonalize it densely.
Eigen::MatrixXd explicit_minus_laplacian(int L, int d, double t0) {
  int n = 1;
  for (int j = 0; j < d; ++j) n *= L;
  std::vector<int> strides(d, 1);
  for (int j = 1; j < d; ++j) strides[j] = strides[j - 1] * L;
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (int site = 0; site < n; ++site) {
    for (int j = 0; j < d; ++j) {
      const int coord = (site / strides[j]) % L;
      for (int dir : {+1, -1}) {
        const int ncoord = (coord + dir + L) % L;
        lap(site, site + (ncoord - coord) * strides[j]) -= t0;
      }
      lap(site, site) += 2.0 * t0;
    }
  }
  return lap;
}

DiscreteMeasure random_measure(CounterRng& rng, int max_atoms = 5) {
  const int n = 1 + static_cast<int>(rng.next_unit() * max_atoms);
  std::vector<double> atoms(n), w(n);
  double tot = 0.0;
  for (int i = 0; i < n; ++i) {
    atoms[i] = 4.0 * rng.next_symmetric();
    w[i] = rng.next_unit();
    tot += w[i];
  }
  for (double& x : w) x /= tot;
  return DiscreteMeasure(atoms, w);
}

}  // namespace

TEST_CASE("DiscreteMeasure construction invariants") {
  SECTION("sorts and merges duplicates by weight addition") {
    DiscreteMeasure mu({2.0, 1.0, 2.0 + 1e-12}, {0.25, 0.5, 0.25});
    REQUIRE(mu.size() == 2);
    REQUIRE(mu.atoms()[0] == Approx(1.0));
    REQUIRE(mu.weights()[1] == Approx(0.5));
  }
  SECTION("rejects bad weights") {
    REQUIRE_THROWS_AS(DiscreteMeasure({0.0}, {0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(DiscreteMeasure({0.0, 1.0}, {1.5, -0.5}), std::invalid_argument);
  }
  SECTION("weight sum accepted within 1e-12 only") {
    REQUIRE_THROWS_AS(DiscreteMeasure({0.0, 1.0}, {0.5, 0.5 + 1e-9}), std::invalid_argument);
    REQUIRE_NOTHROW(DiscreteMeasure({0.0, 1.0}, {0.5, 0.5 + 1e-13}));
  }
}

TEST_CASE("laplacian_spectrum matches a dense eigensolver") {
  SECTION("L=2, d=1, t0=1: atoms {0,4} with equal weight") {
    const DiscreteMeasure mu = laplacian_spectrum(LatticeSpec(2, 1, 1.0, 0.0), false);
    REQUIRE(mu.size() == 2);
    REQUIRE(mu.atoms()[0] == Approx(0.0).margin(1e-12));
    REQUIRE(mu.atoms()[1] == Approx(4.0));
    REQUIRE(mu.weights()[0] == Approx(0.5));
  }
  SECTION("L=3, d=1, t0=1: atoms {0,3} with weights {1/3, 2/3}") {
    const DiscreteMeasure mu = laplacian_spectrum(LatticeSpec(3, 1, 1.0, 0.0), false);
    REQUIRE(mu.size() == 2);
    REQUIRE(mu.atoms()[0] == Approx(0.0).margin(1e-12));
    REQUIRE(mu.atoms()[1] == Approx(3.0));
    REQUIRE(mu.weights()[1] == Approx(2.0 / 3.0));
  }
  SECTION("L=2, d=1, t0=0.5, mu0=1 with mass: atoms {1,3}") {
    const DiscreteMeasure mu = laplacian_spectrum(LatticeSpec(2, 1, 0.5, 1.0), true);
    REQUIRE(mu.atoms()[0] == Approx(1.0));
    REQUIRE(mu.atoms()[1] == Approx(3.0));
  }
  SECTION("generic lattices agree with the explicit matrix") {
    for (auto [L, d, t0] : {std::tuple{4, 1, 0.7}, {3, 2, 1.3}, {2, 3, 0.5}}) {
      const auto ev_formula = laplacian_eigenvalues(LatticeSpec(L, d, t0, 0.0));
      const Eigen::MatrixXd lap = explicit_minus_laplacian(L, d, t0);
      Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(lap).eigenvalues();
      auto sorted = ev_formula;
      std::sort(sorted.begin(), sorted.end());
      REQUIRE(sorted.size() == static_cast<std::size_t>(ev.size()));
      for (std::size_t i = 0; i < sorted.size(); ++i)
        REQUIRE(sorted[i] == Approx(ev(static_cast<int>(i))).margin(1e-10));
    }
  }
  SECTION("atom count before merging equals L^d; min atom is mu0 with mass") {
    const LatticeSpec spec(3, 2, 1.1, 0.4);
    REQUIRE(laplacian_eigenvalues(spec).size() == 9);
    const DiscreteMeasure mu = laplacian_spectrum(spec, true);
    REQUIRE(mu.min_atom() == Approx(0.4));
    double tot = 0.0;
    for (double w : mu.weights()) tot += w;
    REQUIRE(tot == Approx(1.0).margin(1e-14));
  }
  SECTION("rejects L < 2") { REQUIRE_THROWS_AS(LatticeSpec(1, 1, 1.0, 1.0), std::invalid_argument); }
}

TEST_CASE("power_moment") {
  REQUIRE(power_moment(DiscreteMeasure::delta(2.0), -2) == Approx(0.25));
  REQUIRE(power_moment(DiscreteMeasure({1.0, 2.0}, {0.5, 0.5}), -2) == Approx(0.625));
  CounterRng rng(17);
  for (int k = 0; k < 10; ++k) REQUIRE(power_moment(random_measure(rng), 0) == Approx(1.0));
  REQUIRE_THROWS_AS(power_moment(DiscreteMeasure({0.0, 1.0}, {0.5, 0.5}), -1),
                    std::invalid_argument);

  SECTION("negative second moment strictly decreases under positive shifts") {
    CounterRng prng(23);
    for (int k = 0; k < 20; ++k) {
      DiscreteMeasure mu = random_measure(prng).shifted(6.0);  // force positivity
      const double shift = 0.1 + prng.next_unit();
      REQUIRE(power_moment(mu.shifted(shift), -2) < power_moment(mu, -2));
    }
  }
}

TEST_CASE("log_moment") {
  REQUIRE(log_moment(DiscreteMeasure::delta(1.0)) == Approx(0.0).margin(1e-15));
  REQUIRE(log_moment(DiscreteMeasure::delta(std::exp(1.0))) == Approx(1.0));
  REQUIRE(log_moment(DiscreteMeasure({1.0, 2.0}, {0.5, 0.5})) == Approx(0.3465736).margin(1e-7));
  REQUIRE_THROWS_AS(log_moment(DiscreteMeasure({-1.0, 1.0}, {0.5, 0.5})), std::invalid_argument);
}

TEST_CASE("wasserstein1") {
  const DiscreteMeasure d0 = DiscreteMeasure::delta(0.0);
  const DiscreteMeasure d1 = DiscreteMeasure::delta(1.0);
  REQUIRE(wasserstein1(d0, d0) == Approx(0.0).margin(1e-15));
  REQUIRE(wasserstein1(d0, d1) == Approx(1.0));
  REQUIRE(wasserstein1(DiscreteMeasure({0.0, 1.0}, {0.5, 0.5}), d0) == Approx(0.5));

  SECTION("symmetry and triangle inequality on random triples") {
    CounterRng rng(41);
    for (int k = 0; k < 40; ++k) {
      const DiscreteMeasure a = random_measure(rng), b = random_measure(rng),
                            c = random_measure(rng);
      const double ab = wasserstein1(a, b), ba = wasserstein1(b, a);
      REQUIRE(ab == Approx(ba).margin(1e-12));
      REQUIRE(ab <= wasserstein1(a, c) + wasserstein1(c, b) + 1e-12);
    }
  }

  SECTION("gridded vs discrete: uniform density against its midpoint") {
    GriddedDensity g;
    g.grid_min = 0.0;
    g.grid_max = 1.0;
    g.left_edge = 0.0;
    g.right_edge = 1.0;
    g.values.assign(101, 1.0);
    // W1(uniform[0,1], delta_{1/2}) = 1/4
    REQUIRE(wasserstein1(g, DiscreteMeasure::delta(0.5)) == Approx(0.25).margin(1e-6));
    REQUIRE(wasserstein1(g, g) == Approx(0.0).margin(1e-15));
  }
}

TEST_CASE("semicircle quantile discretization") {
  const DiscreteMeasure sc = DiscreteMeasure::semicircle(5.0, 1.0);
  REQUIRE(sc.size() == 512);
  REQUIRE(sc.min_atom() > 3.0);
  REQUIRE(sc.max_atom() < 7.0);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < sc.size(); ++i) mean += sc.weights()[i] * sc.atoms()[i];
  for (std::size_t i = 0; i < sc.size(); ++i)
    var += sc.weights()[i] * (sc.atoms()[i] - mean) * (sc.atoms()[i] - mean);
  REQUIRE(mean == Approx(5.0).margin(1e-9));
  REQUIRE(var == Approx(1.0).margin(1e-3));
}
