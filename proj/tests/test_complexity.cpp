#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "atlas/complexity.hpp"
#include "atlas/measures.hpp"

using namespace atlas;
using Catch::Approx;

namespace {

// delta-mass closed forms (Fyodorov / Fyodorov-Williams specialization)
double sigma_tot_delta(double mu, double B) {
  if (mu >= std::sqrt(B)) return 0.0;
  return 0.5 * (mu * mu / B - 1.0) - std::log(mu / std::sqrt(B));
}
double sigma_min_delta(double mu, double B) {
  if (mu >= std::sqrt(B)) return 0.0;
  return 0.5 * (-3.0 - std::log(mu * mu / B) + 4.0 * mu / std::sqrt(B) - mu * mu / B);
}

// semicircle-environment closed forms (mean m, variance s2, noise B)
double neg2_moment_semicircle(double m, double s2) {
  return (-1.0 + m / std::sqrt(m * m - 4.0 * s2)) / (2.0 * s2);
}
double sigma_tot_semicircle(double m, double s2, double B) {
  if (neg2_moment_semicircle(m, s2) < 1.0 / B) return 0.0;
  const double root = std::sqrt(m * m - 4.0 * s2);
  return m / (4.0 * s2) * (root - m / (1.0 + 2.0 * s2 / B)) -
         std::log((m + root) / (2.0 * std::sqrt(B + s2)));
}
double sigma_min_semicircle(double m, double s2, double B) {
  if (neg2_moment_semicircle(m, s2) < 1.0 / B) return 0.0;
  const double root = std::sqrt(m * m - 4.0 * s2);
  return -1.0 + m * (-m + root) / (4.0 * s2) -
         (m * m + 4.0 * s2 - 4.0 * m * std::sqrt(B + s2)) / (2.0 * B) -
         std::log((m + root) / (2.0 * std::sqrt(B + s2)));
}

const DiscreteMeasure kTwoAtom({1.0, 2.0}, {0.5, 0.5});

}  // namespace

TEST_CASE("t_critical") {
  REQUIRE(t_critical(DiscreteMeasure::delta(2.0)) == Approx(4.0));
  REQUIRE(t_critical(kTwoAtom) == Approx(1.6));
  SECTION("scaling: t_c(s mu_D) = s^2 t_c(mu_D)") {
    REQUIRE(t_critical(kTwoAtom.scaled(3.0)) == Approx(9.0 * 1.6));
  }
  REQUIRE_THROWS_AS(t_critical(DiscreteMeasure({-1.0, 1.0}, {0.5, 0.5})), std::invalid_argument);
}

TEST_CASE("larkin_mass") {
  SECTION("t0 = 0 degenerates to sqrt(b)") {
    REQUIRE(larkin_mass(LatticeSpec(2, 1, 0.0, 0.0), 4.0) == Approx(2.0).margin(1e-10));
  }
  SECTION("L=2, d=1, t0=1, b=4 solves the two-atom equation") {
    const double mu = larkin_mass(LatticeSpec(2, 1, 1.0, 0.0), 4.0);
    const double res = 0.5 * (1.0 / (mu * mu) + 1.0 / ((mu + 4.0) * (mu + 4.0)));
    REQUIRE(res == Approx(0.25).margin(1e-12));
  }
  SECTION("monotone in b") {
    const LatticeSpec spec(3, 1, 0.8, 0.0);
    REQUIRE(larkin_mass(spec, 4.0) > larkin_mass(spec, 2.0));
  }
  SECTION("b_critical inverts larkin_mass") {
    const LatticeSpec spec(2, 1, 1.0, 0.0);
    const double b = 4.0;
    const double mu_c = larkin_mass(spec, b);
    const LatticeSpec at_mu(2, 1, 1.0, mu_c);
    REQUIRE(b_critical(at_mu) == Approx(b).margin(1e-9));
  }
}

TEST_CASE("c_and_v") {
  SECTION("delta_1 at t = 4: c = 3/16, v = -1") {
    const auto [c, v] = c_and_v(DiscreteMeasure::delta(1.0), 4.0);
    REQUIRE(c == Approx(3.0 / 16.0).margin(1e-13));
    REQUIRE(v == Approx(-1.0).margin(1e-12));
  }
  SECTION("t -> t_c+: c -> 0 and v -> left edge at t_c") {
    const double t_c = t_critical(kTwoAtom);
    const auto [c, v] = c_and_v(kTwoAtom, t_c * (1.0 + 1e-7));
    REQUIRE(c < 1e-5);
    REQUIRE(v == Approx(left_edge(kTwoAtom, t_c).edge).margin(1e-3));
  }
  SECTION("residuals of both defining equations") {
    const double t = 2.0 * t_critical(kTwoAtom);
    const auto [c, v] = c_and_v(kTwoAtom, t);
    double r1 = -1.0 / t, r2 = v / t;
    for (std::size_t i = 0; i < kTwoAtom.size(); ++i) {
      const double lam = kTwoAtom.atoms()[i];
      r1 += kTwoAtom.weights()[i] / (lam * lam + t * t * c);
      r2 += kTwoAtom.weights()[i] * lam / (lam * lam + t * t * c);
    }
    REQUIRE(std::abs(r1) < 1e-12);
    REQUIRE(std::abs(r2) < 1e-12);
  }
  REQUIRE_THROWS_AS(c_and_v(DiscreteMeasure::delta(1.0), 0.9), std::invalid_argument);
}

TEST_CASE("sigma_soft_spins closed forms") {
  SECTION("delta_1 at t = 4 reproduces the frozen values") {
    const auto r = sigma_soft_spins(SoftSpinModel(DiscreteMeasure::delta(1.0), 4.0));
    REQUIRE(r.sigma_tot == Approx(0.3181472).margin(1e-7));
    REQUIRE(r.sigma_min == Approx(0.0681472).margin(1e-7));
    REQUIRE(r.phase == Phase::glassy);
    REQUIRE(r.aux.has_value());
    REQUIRE(r.aux->c == Approx(3.0 / 16.0).margin(1e-12));
    REQUIRE(r.aux->y_t == Approx(std::sqrt(3.0 / 16.0)).margin(1e-12));
  }
  SECTION("boundary t = t_c gives exactly zero") {
    const auto r = sigma_soft_spins(SoftSpinModel(DiscreteMeasure::delta(1.0), 1.0));
    REQUIRE(r.sigma_tot == 0.0);
    REQUIRE(r.sigma_min == 0.0);
    REQUIRE(r.phase == Phase::simple);
  }
  SECTION("delta closed forms across the phase diagram") {
    for (double t : {0.3, 0.9, 1.5, 2.0, 4.0, 9.0}) {
      const auto r = sigma_soft_spins(SoftSpinModel(DiscreteMeasure::delta(1.0), t));
      REQUIRE(r.sigma_tot == Approx(sigma_tot_delta(1.0, t)).margin(1e-10));
      REQUIRE(r.sigma_min == Approx(sigma_min_delta(1.0, t)).margin(1e-10));
    }
  }
  SECTION("semicircle environment matches the explicit example") {
    const DiscreteMeasure sc = DiscreteMeasure::semicircle(5.0, 1.0);
    for (double t : {2.0, 4.0}) {  // subcritical here: t_c ~ 21.96
      const auto r = sigma_soft_spins(SoftSpinModel(sc, t));
      REQUIRE(r.sigma_tot == Approx(sigma_tot_semicircle(5.0, 1.0, t)).margin(1e-3));
      REQUIRE(r.sigma_min == Approx(sigma_min_semicircle(5.0, 1.0, t)).margin(1e-3));
      REQUIRE(r.phase == Phase::simple);
    }
    for (double t : {25.0, 30.0}) {  // glassy side
      const auto r = sigma_soft_spins(SoftSpinModel(sc, t));
      REQUIRE(r.sigma_tot == Approx(sigma_tot_semicircle(5.0, 1.0, t)).margin(1e-3));
      REQUIRE(r.sigma_min == Approx(sigma_min_semicircle(5.0, 1.0, t)).margin(1e-3));
      REQUIRE(r.sigma_tot > r.sigma_min);
      REQUIRE(r.sigma_min > 0.0);
    }
  }
  SECTION("sigma -> delta formulas as the semicircle width vanishes") {
    for (double t : {0.5, 4.0}) {
      const double sig = 0.02;
      const auto r =
          sigma_soft_spins(SoftSpinModel(DiscreteMeasure::semicircle(1.0, sig * sig), t));
      REQUIRE(r.sigma_tot == Approx(sigma_tot_delta(1.0, t)).margin(1e-3));
      REQUIRE(r.sigma_min == Approx(sigma_min_delta(1.0, t)).margin(1e-3));
    }
  }
}

TEST_CASE("sigma_soft_spins variational path") {
  SECTION("agrees with closed form on a scan of both test measures") {
    for (const DiscreteMeasure& mu : {DiscreteMeasure::delta(1.0), kTwoAtom}) {
      const double t_c = t_critical(mu);
      for (double f : {0.5, 0.9, 1.0, 1.1, 1.6, 2.0}) {
        const SoftSpinModel model(mu, f * t_c);
        const auto cf = sigma_soft_spins(model, SigmaMethod::closed_form);
        const auto va = sigma_soft_spins(model, SigmaMethod::variational);
        REQUIRE(std::abs(cf.sigma_tot - va.sigma_tot) < 1e-5);
        REQUIRE(std::abs(cf.sigma_min - va.sigma_min) < 1e-5);
      }
    }
  }
  SECTION("optimizer placement in the glassy phase") {
    const double t = 2.0 * t_critical(kTwoAtom);
    const auto va = sigma_soft_spins(SoftSpinModel(kTwoAtom, t), SigmaMethod::variational);
    const double ell = left_edge(kTwoAtom, t).edge;
    REQUIRE(va.u_star_tot >= ell - 1e-6);       // unconstrained optimizer right of the edge
    REQUIRE(va.u_star_min == Approx(ell).margin(1e-6));  // constrained one at the clamp
  }
  SECTION("subcritical stationarity at u_t") {
    for (const DiscreteMeasure& mu : {DiscreteMeasure::delta(1.0), kTwoAtom}) {
      const double t = 0.7 * t_critical(mu);
      const double u_t = -t * power_moment(mu, -1);
      FreeConvolution fc(mu, t);
      const double logm = log_moment(mu);
      const double F = -logm + fc.log_potential(u_t) - u_t * u_t / (2.0 * t);
      REQUIRE(std::abs(F) < 1e-8);
      const double deriv = -u_t / t - fc.stieltjes_real(u_t).real();
      REQUIRE(std::abs(deriv) < 1e-8);
    }
  }
  SECTION("F(l_t, t) increases strictly through the supercritical window") {
    const double t_c = t_critical(kTwoAtom);
    const double logm = log_moment(kTwoAtom);
    double prev = -1e300;
    for (double f : {1.05, 1.2, 1.5, 2.0, 3.0}) {
      const double t = f * t_c;
      const EdgeReport le = left_edge(kTwoAtom, t);
      FreeConvolution fc(kTwoAtom, t);
      const double F = -logm + fc.log_potential(le.edge) - le.edge * le.edge / (2.0 * t);
      REQUIRE(F > prev);
      prev = F;
    }
  }
}

TEST_CASE("phase dichotomy scan") {
  for (const DiscreteMeasure& mu : {DiscreteMeasure::delta(1.0), kTwoAtom}) {
    const double t_c = t_critical(mu);
    for (int i = 0; i < 20; ++i) {
      const double t = t_c * (0.5 + 1.5 * i / 19.0);
      const auto r = sigma_soft_spins(SoftSpinModel(mu, t));
      if (t <= t_c) {
        REQUIRE(std::abs(r.sigma_tot) < 1e-8);
        REQUIRE(std::abs(r.sigma_min) < 1e-8);
      } else {
        REQUIRE(r.sigma_tot > r.sigma_min);
        REQUIRE(r.sigma_min > 0.0);
      }
    }
  }
}

TEST_CASE("sigma_elastic") {
  const LatticeSpec spec(2, 1, 1.0, 1.0);

  SECTION("subcritical b gives zeros") {
    const double b_c = b_critical(spec);
    const auto r = sigma_elastic(ElasticManifoldModel(spec, 0.9 * b_c));
    REQUIRE(r.sigma_tot == 0.0);
    REQUIRE(r.sigma_min == 0.0);
    REQUIRE(r.phase == Phase::simple);
  }

  SECTION("mu0 at the Larkin mass sits on the boundary") {
    const double b = 4.0;
    const double mu_c = larkin_mass(LatticeSpec(2, 1, 1.0, 0.0), b);
    const auto r = sigma_elastic(ElasticManifoldModel(LatticeSpec(2, 1, 1.0, mu_c), b));
    REQUIRE(std::abs(r.sigma_tot) < 1e-8);
    REQUIRE(std::abs(r.sigma_min) < 1e-8);
  }

  SECTION("delegates exactly to the two-atom soft-spins problem") {
    const auto er = sigma_elastic(ElasticManifoldModel(spec, 16.0));
    const auto ss =
        sigma_soft_spins(SoftSpinModel(DiscreteMeasure({1.0, 5.0}, {0.5, 0.5}), 16.0));
    REQUIRE(er.sigma_tot == Approx(ss.sigma_tot).margin(1e-14));
    REQUIRE(er.sigma_min == Approx(ss.sigma_min).margin(1e-14));
    REQUIRE(er.sigma_tot > er.sigma_min);
    REQUIRE(er.sigma_min > 0.0);
    REQUIRE(er.threshold == Approx(larkin_mass(spec, 16.0)));
  }
}

TEST_CASE("near_critical_constants") {
  SECTION("delta masses") {
    for (double mu : {1.0, 1.7}) {
      const auto [c_tot, c_min] = near_critical_constants(DiscreteMeasure::delta(mu));
      REQUIRE(c_tot == Approx(1.0 / (4.0 * std::pow(mu, 4))));
      REQUIRE(c_min == Approx(1.0 / (24.0 * std::pow(mu, 6))));
    }
    const auto [c_tot, c_min] = near_critical_constants(DiscreteMeasure::delta(1.0));
    REQUIRE(c_tot == Approx(0.25));
    REQUIRE(c_min == Approx(0.0416667).margin(1e-7));
  }
  SECTION("two-atom measure against direct moment arithmetic") {
    const auto [c_tot, c_min] = near_critical_constants(kTwoAtom);
    const double m2 = 0.5 * (1.0 + 0.25), m3 = 0.5 * (1.0 + 0.125), m4 = 0.5 * (1.0 + 0.0625);
    REQUIRE(c_tot == Approx(std::pow(m2, 4) / (4.0 * m4)));
    REQUIRE(c_min == Approx(std::pow(m2, 6) / (24.0 * m3 * m3)));
  }
}

TEST_CASE("near_critical_fit") {
  SECTION("delta_1: quadratic and cubic branches with the right prefactors") {
    const auto fit = near_critical_fit(DiscreteMeasure::delta(1.0));
    REQUIRE(fit.exponent_tot >= 1.9);
    REQUIRE(fit.exponent_tot <= 2.1);
    REQUIRE(fit.exponent_min >= 2.8);
    REQUIRE(fit.exponent_min <= 3.2);
    REQUIRE(std::abs(fit.prefactor_tot - 0.25) / 0.25 < 0.15);
    REQUIRE(std::abs(fit.prefactor_min - 1.0 / 24.0) / (1.0 / 24.0) < 0.20);
  }
  SECTION("two-atom measure: universality of the exponents") {
    const auto fit = near_critical_fit(kTwoAtom);
    const auto [c_tot, c_min] = near_critical_constants(kTwoAtom);
    REQUIRE(fit.exponent_tot == Approx(2.0).margin(0.1));
    REQUIRE(fit.exponent_min == Approx(3.0).margin(0.15));
    REQUIRE(std::abs(fit.prefactor_tot - c_tot) / c_tot < 0.20);
    REQUIRE(std::abs(fit.prefactor_min - c_min) / c_min < 0.20);
  }
}
