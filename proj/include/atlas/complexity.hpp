#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "atlas/freeconv.hpp"
#include "atlas/measures.hpp"

namespace atlas {

struct SoftSpinModel {
  DiscreteMeasure mu_D;
  double t;  // plays B''(0)

  SoftSpinModel(DiscreteMeasure mu, double t_) : mu_D(std::move(mu)), t(t_) {
    if (mu_D.min_atom() <= 0.0)
      throw std::invalid_argument("SoftSpinModel: mu_D must be supported in (0,inf)");
    if (!(t > 0.0)) throw std::invalid_argument("SoftSpinModel: t must be positive");
  }
};

struct ElasticManifoldModel {
  LatticeSpec lattice;
  double b;  // b = 4 B''(0)

  ElasticManifoldModel(LatticeSpec spec, double b_) : lattice(spec), b(b_) {
    if (!(lattice.mu0 > 0.0))
      throw std::invalid_argument("ElasticManifoldModel: mu0 must be positive");
    if (!(b > 0.0)) throw std::invalid_argument("ElasticManifoldModel: b must be positive");
  }
};

enum class Phase { simple, glassy };
enum class SigmaMethod { closed_form, variational };

struct ComplexityResult {
  double sigma_tot = 0.0;
  double sigma_min = 0.0;
  double u_star_tot = 0.0;
  double u_star_min = 0.0;
  Phase phase = Phase::simple;
  double threshold = 0.0;  // t_c for soft spins, mu_c for the elastic manifold
  struct Aux {
    double c = 0.0;
    double v = 0.0;
    double y_t = 0.0;
  };
  std::optional<Aux> aux;
};

// t_c = (int lambda^{-2} mu_D)^{-1}
inline double t_critical(const DiscreteMeasure& mu) {
  if (mu.min_atom() <= 0.0)
    throw std::invalid_argument("t_critical: mu_D must be supported in (0,inf)");
  return 1.0 / power_moment(mu, -2);
}

// Larkin mass: unique mu with int mu_hat_{-t0 Delta}(dl)/(mu+l)^2 = 1/b.
// The left-hand side decreases strictly from +inf to 0 in mu.
inline double larkin_mass(const LatticeSpec& lattice, double b) {
  if (!(b > 0.0)) throw std::invalid_argument("larkin_mass: b must be positive");
  const DiscreteMeasure lap = laplacian_spectrum(lattice, /*include_mass=*/false);
  const double target = 1.0 / b;
  const auto f = [&](double mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < lap.size(); ++i) {
      const double d = mu + lap.atoms()[i];
      s += lap.weights()[i] / (d * d);
    }
    return s;
  };
  double lo = std::sqrt(b) * 1e-8, hi = std::sqrt(b);
  while (f(lo) < target) lo *= 0.5;
  while (f(hi) > target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > target ? lo : hi) = mid;
  }
  const double mu_c = 0.5 * (lo + hi);
  const double res = std::abs(f(mu_c) - target);
  if (res > 1e-12 * std::max(1.0, target))
    throw SolverError("larkin_mass: bisection residual too large", res);
  return mu_c;
}

// Critical noise strength at fixed mass: b_c = (int mu_hat_{-t0 Delta}/(mu0+l)^2)^{-1}.
inline double b_critical(const LatticeSpec& lattice) {
  if (!(lattice.mu0 > 0.0)) throw std::invalid_argument("b_critical: mu0 must be positive");
  const DiscreteMeasure lap = laplacian_spectrum(lattice, /*include_mass=*/false);
  double s = 0.0;
  for (std::size_t i = 0; i < lap.size(); ++i) {
    const double d = lattice.mu0 + lap.atoms()[i];
    s += lap.weights()[i] / (d * d);
  }
  return 1.0 / s;
}

// Supercritical optimizer data: c > 0 solves 1/t = int mu_D(dl)/(l^2 + t^2 c),
// then v = -t int l/(l^2 + t^2 c) mu_D(dl). The right-hand side of the c
// equation decreases strictly from 1/t_c to 0.
inline std::pair<double, double> c_and_v(const DiscreteMeasure& mu, double t) {
  const double t_c = t_critical(mu);
  if (!(t > t_c)) throw std::invalid_argument("c_and_v: requires t > t_c");
  const double target = 1.0 / t;
  const auto rhs = [&](double c) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double lam = mu.atoms()[i];
      s += mu.weights()[i] / (lam * lam + t * t * c);
    }
    return s;
  };
  double lo = 0.0, hi = 1.0 / (t * t);  // at c = 1/t^2: rhs <= 1/(t^2 c) = 1 -> widen as needed
  while (rhs(hi) > target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-18 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (rhs(mid) > target ? lo : hi) = mid;
  }
  const double c = 0.5 * (lo + hi);
  const double res = std::abs(rhs(c) - target);
  if (res > 1e-12) throw SolverError("c_and_v: residual too large", res);
  double v = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double lam = mu.atoms()[i];
    v += mu.weights()[i] * lam / (lam * lam + t * t * c);
  }
  v *= -t;
  return {c, v};
}

// Near-critical prefactors from Thm-style moment formulas:
//   c_tot = (m_{-2})^4 / (4 m_{-4}),  c_min = (m_{-2})^6 / (24 m_{-3}^2).
inline std::pair<double, double> near_critical_constants(const DiscreteMeasure& mu) {
  const double m2 = power_moment(mu, -2);
  const double m3 = power_moment(mu, -3);
  const double m4 = power_moment(mu, -4);
  const double c_tot = std::pow(m2, 4) / (4.0 * m4);
  const double c_min = std::pow(m2, 6) / (24.0 * m3 * m3);
  return {c_tot, c_min};
}

namespace detail {

// golden-section maximization of a unimodal function on [a,b]
template <class F>
inline std::pair<double, double> golden_max(F&& f, double a, double b, double tol) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace detail

// Annealed complexity of the soft-spins model. The closed-form path uses the
// supercritical optimizer algebra; the variational path maximizes
// F(u,t) = -int log(l) mu_D + Phi_t(u) - u^2/(2t) directly (F is concave in
// u). The variational path cross-checks itself against the closed form and
// reports a solver misconfiguration if they disagree by more than 1e-4.
inline ComplexityResult sigma_soft_spins(const SoftSpinModel& model,
                                         SigmaMethod method = SigmaMethod::closed_form) {
  const DiscreteMeasure& mu = model.mu_D;
  const double t = model.t;
  const double t_c = t_critical(mu);
  const double logm = log_moment(mu);

  ComplexityResult out;
  out.threshold = t_c;

  const auto closed_form = [&]() {
    ComplexityResult r;
    r.threshold = t_c;
    if (t <= t_c) {
      r.phase = Phase::simple;
      const double u_t = -t * power_moment(mu, -1);
      r.u_star_tot = r.u_star_min = u_t;
      return r;
    }
    r.phase = Phase::glassy;
    const auto [c, v] = c_and_v(mu, t);
    // At the optimizer, omega = v + t m_t(v) = i t sqrt(c), so the
    // subordination identity collapses to atom sums.
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double lam = mu.atoms()[i];
      s += mu.weights()[i] * std::log1p(t * t * c / (lam * lam));
    }
    r.sigma_tot = 0.5 * s - 0.5 * t * c;
    const EdgeReport le = left_edge(mu, t);
    double phi_edge = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
      phi_edge += mu.weights()[i] * std::log(mu.atoms()[i] - le.w);
    phi_edge += 0.5 * t * le.m_edge * le.m_edge;
    r.sigma_min = -logm + phi_edge - le.edge * le.edge / (2.0 * t);
    r.u_star_tot = v;
    r.u_star_min = le.edge;
    r.aux = ComplexityResult::Aux{c, v, std::sqrt(c)};
    return r;
  };

  const ComplexityResult cf = closed_form();
  if (method == SigmaMethod::closed_form) return cf;

  // variational path
  FreeConvolution fc(mu, t);
  const double ell = fc.left().edge, r_edge = fc.right().edge;
  const double diam = r_edge - ell + 2.0 * std::sqrt(t);
  // the subcritical stationary point u_t can sit far left of the support at
  // small t; the bracket must cover it
  const double u_t = -t * power_moment(mu, -1);
  const double lo = std::min(u_t, ell) - 4.0 * diam;
  const auto F = [&](double u) { return -logm + fc.log_potential(u) - u * u / (2.0 * t); };
  const auto [u_tot, f_tot] = detail::golden_max(F, lo, r_edge, 1e-9);
  const auto [u_min, f_min] = detail::golden_max(F, lo, ell, 1e-9);

  out = cf;
  out.sigma_tot = std::max(0.0, f_tot);
  out.sigma_min = std::max(0.0, f_min);
  out.u_star_tot = u_tot;
  out.u_star_min = u_min;
  if (f_tot < -1e-8 || f_min < -1e-8)
    throw SolverError("sigma_soft_spins: variational maximum is negative", std::min(f_tot, f_min));
  const double gap =
      std::max(std::abs(out.sigma_tot - cf.sigma_tot), std::abs(out.sigma_min - cf.sigma_min));
  if (gap > 1e-4)
    throw SolverError("sigma_soft_spins: closed-form and variational paths disagree", gap);
  return out;
}

// Elastic manifold reduces to soft spins with mu_D = spectrum of
// -t0 Delta + mu0 Id and t = b; the -L^{-d} log det term equals the
// -int log(l) mu_D term already included there.
inline ComplexityResult sigma_elastic(const ElasticManifoldModel& model,
                                      SigmaMethod method = SigmaMethod::closed_form) {
  const DiscreteMeasure mu = laplacian_spectrum(model.lattice, /*include_mass=*/true);
  SoftSpinModel ss(mu, model.b);
  ComplexityResult r = sigma_soft_spins(ss, method);
  r.threshold = larkin_mass(model.lattice, model.b);
  return r;
}

struct NearCriticalFit {
  double exponent_tot = 0.0;
  double prefactor_tot = 0.0;
  double exponent_min = 0.0;
  double prefactor_min = 0.0;
};

inline const std::array<double, 4>& default_fit_epsilons() {
  static const std::array<double, 4> eps{0.02, 0.04, 0.08, 0.16};
  return eps;
}

// Evaluates Sigma at t = t_c (1+eps) and fits log Sigma against log(t - t_c).
// Slopes come from the free two-parameter fit; prefactors from refitting the
// intercept at the nominal exponents (2 for tot, 3 for min), which is what
// the limiting constants multiply.
inline NearCriticalFit near_critical_fit(const DiscreteMeasure& mu,
                                         std::span<const double> epsilons = default_fit_epsilons()) {
  if (epsilons.empty()) throw std::invalid_argument("near_critical_fit: no epsilons");
  const double t_c = t_critical(mu);
  std::vector<double> x, y_tot, y_min;
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw std::invalid_argument("near_critical_fit: epsilons must be positive");
    const double t = t_c * (1.0 + eps);
    const ComplexityResult r = sigma_soft_spins(SoftSpinModel(mu, t), SigmaMethod::closed_form);
    if (!(r.sigma_tot > 0.0) || !(r.sigma_min > 0.0))
      throw SolverError("near_critical_fit: nonpositive Sigma in supercritical window",
                        std::min(r.sigma_tot, r.sigma_min));
    x.push_back(std::log(t - t_c));
    y_tot.push_back(std::log(r.sigma_tot));
    y_min.push_back(std::log(r.sigma_min));
  }
  const auto slope = [&](const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      sxy += x[i] * y[i];
    }
    if (x.size() == 1) return 0.0;
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  const auto prefactor_at = [&](const std::vector<double>& y, double p) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += y[i] - p * x[i];
    return std::exp(s / static_cast<double>(x.size()));
  };
  NearCriticalFit fit;
  fit.exponent_tot = slope(y_tot);
  fit.exponent_min = slope(y_min);
  fit.prefactor_tot = prefactor_at(y_tot, 2.0);
  fit.prefactor_min = prefactor_at(y_min, 3.0);
  return fit;
}

}  // namespace atlas
