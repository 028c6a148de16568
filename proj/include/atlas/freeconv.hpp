#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "atlas/measures.hpp"

namespace atlas {

using Complex = std::complex<double>;

struct GridSpec {
  double min = 0.0;
  double max = 0.0;
  int n = 4096;
};

// Edge of mu_t = sc_t (+)boxplus mu_D together with its subordination data:
// w = edge + t*m_t(edge) solves the constrained problem
//   int mu_D(dl)/(l-w)^2 = 1/t,   w outside conv supp(mu_D).
struct EdgeReport {
  double edge = 0.0;
  double w = 0.0;
  double m_edge = 0.0;
  double exponent_fit = std::numeric_limits<double>::quiet_NaN();
  std::pair<double, double> fit_window{std::numeric_limits<double>::quiet_NaN(),
                                       std::numeric_limits<double>::quiet_NaN()};
};

enum class EdgeSide { left, right };

namespace detail {

inline Complex pastur_map(const DiscreteMeasure& mu, double t, Complex z, Complex m) {
  Complex s{0.0, 0.0};
  const Complex shift = z + t * m;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s += mu.weights()[i] / (mu.atoms()[i] - shift);
  return s;
}

inline Complex pastur_map_deriv(const DiscreteMeasure& mu, double t, Complex z, Complex m) {
  Complex s{0.0, 0.0};
  const Complex shift = z + t * m;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const Complex d = mu.atoms()[i] - shift;
    s += mu.weights()[i] / (d * d);
  }
  return t * s;
}

// Damped fixed-point iteration (omega = 0.5) with a Newton step attempted
// whenever it keeps Im m > 0 and reduces the residual. Throws SolverError
// when the iteration budget is exhausted.
inline Complex pastur_solve_at(const DiscreteMeasure& mu, double t, Complex z, Complex m,
                               double tol, int budget = 20000) {
  const double omega = 0.5;
  double res = std::abs(pastur_map(mu, t, z, m) - m);
  for (int it = 0; it < budget && res > tol; ++it) {
    const Complex s = pastur_map(mu, t, z, m);
    bool stepped = false;
    if (it >= 2) {
      const Complex dp = pastur_map_deriv(mu, t, z, m);
      const Complex denom = 1.0 - dp;
      if (std::abs(denom) > 1e-14) {
        const Complex mn = m + (s - m) / denom;
        if (mn.imag() > 0.0) {
          const double rn = std::abs(pastur_map(mu, t, z, mn) - mn);
          if (rn < res) {
            m = mn;
            res = rn;
            stepped = true;
          }
        }
      }
    }
    if (!stepped) {
      Complex mn = (1.0 - omega) * m + omega * s;
      double w = omega;
      while (mn.imag() <= 0.0 && w > 1e-6) {
        w *= 0.5;
        mn = (1.0 - w) * m + w * s;
      }
      m = mn;
      res = std::abs(pastur_map(mu, t, z, m) - m);
    }
  }
  if (!(res <= tol * 10.0) || !(m.imag() > 0.0))
    throw SolverError("pastur_stieltjes: fixed point did not converge", res);
  return m;
}

inline double spectral_diameter(const DiscreteMeasure& mu, double t) {
  return mu.max_atom() - mu.min_atom() + 4.0 * std::sqrt(t);
}

// eta-homotopy: solve at Im z = eta0 first, then continue down a geometric
// ladder reusing the previous solution as warm start.
inline Complex pastur_ladder(const DiscreteMeasure& mu, double t, double x, double eta_target,
                             double tol) {
  const double eta0 = std::max(1.0, spectral_diameter(mu, t));
  double eta = eta0;
  Complex m{0.0, 0.5 / eta0};
  m = pastur_solve_at(mu, t, Complex{x, eta}, m, tol);
  while (eta > eta_target) {
    eta = std::max(eta * 0.5, eta_target);
    m = pastur_solve_at(mu, t, Complex{x, eta}, m, tol);
  }
  return m;
}

inline double edge_equation(const DiscreteMeasure& mu, double w) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double d = mu.atoms()[i] - w;
    s += mu.weights()[i] / (d * d);
  }
  return s;
}

inline double stieltjes_atoms(const DiscreteMeasure& mu, double w) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weights()[i] / (mu.atoms()[i] - w);
  return s;
}

// Unique w with edge_equation(w) = 1/t on the ray outside conv supp(mu_D).
// The equation is strictly monotone on each ray, diverging at the nearest
// atom and vanishing at infinity.
inline double solve_edge_w(const DiscreteMeasure& mu, double t, EdgeSide side) {
  const double target = 1.0 / t;
  const double scale = std::max(1.0, mu.max_atom() - mu.min_atom()) + std::sqrt(t);
  double lo, hi;
  if (side == EdgeSide::left) {
    double near_off = scale;
    while (edge_equation(mu, mu.min_atom() - near_off) < target) near_off *= 0.5;
    double far_off = std::max(scale, 2.0 * near_off);
    while (edge_equation(mu, mu.min_atom() - far_off) > target) far_off *= 2.0;
    lo = mu.min_atom() - far_off;
    hi = mu.min_atom() - near_off;
  } else {
    double near_off = scale;
    while (edge_equation(mu, mu.max_atom() + near_off) < target) near_off *= 0.5;
    double far_off = std::max(scale, 2.0 * near_off);
    while (edge_equation(mu, mu.max_atom() + far_off) > target) far_off *= 2.0;
    lo = mu.max_atom() + near_off;
    hi = mu.max_atom() + far_off;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(lo) + std::abs(hi));
       ++it) {
    const double mid = 0.5 * (lo + hi);
    const bool above = edge_equation(mu, mid) > target;
    if (side == EdgeSide::left) {
      (above ? hi : lo) = mid;  // increasing toward the atoms
    } else {
      (above ? lo : hi) = mid;  // decreasing away from the atoms
    }
  }
  return 0.5 * (lo + hi);
}

inline EdgeReport solve_edge(const DiscreteMeasure& mu, double t, EdgeSide side) {
  EdgeReport rep;
  rep.w = solve_edge_w(mu, t, side);
  rep.m_edge = stieltjes_atoms(mu, rep.w);
  rep.edge = rep.w - t * rep.m_edge;
  const double res = std::abs(edge_equation(mu, rep.w) - 1.0 / t);
  if (res > 1e-10 * std::max(1.0, 1.0 / t))
    throw SolverError("edge solve: residual of the w-equation too large", res);
  return rep;
}

// Inverse subordination on the real line: for u outside supp(mu_t), find w
// outside conv supp(mu_D) with w - t*m_D(w) = u. The map is strictly
// increasing on each ray, with value edge at w_edge.
inline double solve_subordination_real(const DiscreteMeasure& mu, double t, double u,
                                       const EdgeReport& edge, EdgeSide side) {
  const auto g = [&](double w) { return w - t * stieltjes_atoms(mu, w); };
  double lo, hi;
  if (side == EdgeSide::left) {
    hi = edge.w;
    if (u >= edge.edge) return edge.w;
    double step = std::max(1.0, edge.edge - u);
    lo = hi - step;
    while (g(lo) > u) {
      step *= 2.0;
      lo = hi - step;
    }
  } else {
    lo = edge.w;
    if (u <= edge.edge) return edge.w;
    double step = std::max(1.0, u - edge.edge);
    hi = lo + step;
    while (g(hi) < u) {
      step *= 2.0;
      hi = lo + step;
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(lo) + std::abs(hi));
       ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Stieltjes transform m_t(z) of sc_t boxplus mu_D on the open upper
// half-plane, from Pastur's relation m = int mu_D(dl) / (l - z - t*m).
// Residual certified below 1e-12; deterministic for fixed inputs.
inline Complex pastur_stieltjes(const DiscreteMeasure& mu, double t, Complex z) {
  if (!(t > 0.0)) throw std::invalid_argument("pastur_stieltjes: t must be positive");
  if (!(z.imag() > 0.0)) throw std::invalid_argument("pastur_stieltjes: Im z must be positive");
  const double tol = 1e-13 * std::max(1.0, 1.0 / std::sqrt(t));
  const double eta0 = std::max(1.0, detail::spectral_diameter(mu, t));
  Complex m;
  if (z.imag() >= eta0) {
    m = detail::pastur_solve_at(mu, t, z, Complex{0.0, 0.5 / z.imag()}, tol);
  } else {
    m = detail::pastur_ladder(mu, t, z.real(), z.imag(), tol);
  }
  const double res = std::abs(detail::pastur_map(mu, t, z, m) - m);
  if (res > 1e-12) throw SolverError("pastur_stieltjes: residual above 1e-12", res);
  return m;
}

inline EdgeReport left_edge(const DiscreteMeasure& mu, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("left_edge: t must be positive");
  return detail::solve_edge(mu, t, EdgeSide::left);
}

inline EdgeReport right_edge(const DiscreteMeasure& mu, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("right_edge: t must be positive");
  return detail::solve_edge(mu, t, EdgeSide::right);
}

// Solved free-convolution object: caches the Stieltjes transform, knows its
// exact extremal edges, evaluates the log-potential, and lazily produces a
// gridded density. Safe to share across threads.
class FreeConvolution {
 public:
  FreeConvolution(DiscreteMeasure base, double t, int grid_n = 4096)
      : base_(std::move(base)), t_(t), grid_n_(grid_n) {
    if (!(t_ > 0.0)) throw std::invalid_argument("FreeConvolution: t must be positive");
    left_ = detail::solve_edge(base_, t_, EdgeSide::left);
    right_ = detail::solve_edge(base_, t_, EdgeSide::right);
  }

  const DiscreteMeasure& base() const { return base_; }
  double variance() const { return t_; }
  const EdgeReport& left() const { return left_; }
  const EdgeReport& right() const { return right_; }
  double spectral_diameter() const { return detail::spectral_diameter(base_, t_); }

  Complex stieltjes(Complex z) const {
    {
      std::scoped_lock lock(mutex_);
      auto it = cache_.find(key(z));
      if (it != cache_.end()) return it->second;
    }
    const Complex m = pastur_stieltjes(base_, t_, z);
    std::scoped_lock lock(mutex_);
    cache_.emplace(key(z), m);
    return m;
  }

  std::size_t cache_size() const {
    std::scoped_lock lock(mutex_);
    return cache_.size();
  }

  // Boundary value m_t(x + i0+). Outside the support this is exact (real
  // subordination route); inside it is Richardson-extrapolated from
  // eta in {2h, h}, h = 1e-4 * spectral diameter.
  Complex stieltjes_real(double x) const {
    if (x <= left_.edge) {
      const double w = detail::solve_subordination_real(base_, t_, x, left_, EdgeSide::left);
      return Complex{detail::stieltjes_atoms(base_, w), 0.0};
    }
    if (x >= right_.edge) {
      const double w = detail::solve_subordination_real(base_, t_, x, right_, EdgeSide::right);
      return Complex{detail::stieltjes_atoms(base_, w), 0.0};
    }
    const double h = 1e-4 * spectral_diameter();
    const Complex m2 = stieltjes(Complex{x, 2.0 * h});
    const Complex m1 = stieltjes(Complex{x, h});
    return 2.0 * m1 - m2;
  }

  // Phi(u) = int log|l - u| mu_t(l) dl, evaluated through the subordination
  // identity Phi(u) = sum_i w_i log|l_i - omega| + (t/2) Re(m^2) with
  // omega = u + t*m_t(u). Exact outside the support, eta-extrapolated inside.
  double log_potential(double u) const {
    const Complex m = stieltjes_real(u);
    const Complex omega = u + t_ * m;
    double s = 0.0;
    for (std::size_t i = 0; i < base_.size(); ++i)
      s += base_.weights()[i] * std::log(std::abs(base_.atoms()[i] - omega));
    return s + 0.5 * t_ * (m * m).real();
  }

  GridSpec default_grid() const {
    const double lo = base_.min_atom() - 2.0 * std::sqrt(t_);
    const double hi = base_.max_atom() + 2.0 * std::sqrt(t_);
    const double margin = 0.1 * (hi - lo);
    return GridSpec{lo - margin, hi + margin, grid_n_};
  }

  const GriddedDensity& density() const {
    std::scoped_lock lock(density_mutex_);
    if (!density_) density_ = compute_density(default_grid());
    return *density_;
  }

  GriddedDensity compute_density(const GridSpec& grid) const {
    if (grid.n < 2) throw std::invalid_argument("density: grid needs at least 2 nodes");
    if (grid.min > left_.edge || grid.max < right_.edge)
      throw std::invalid_argument("density: grid does not cover the support");
    const double tol = 1e-13 * std::max(1.0, 1.0 / std::sqrt(t_));
    const double h = 1e-4 * spectral_diameter();
    GriddedDensity out;
    out.grid_min = grid.min;
    out.grid_max = grid.max;
    out.left_edge = left_.edge;
    out.right_edge = right_.edge;
    out.values.resize(static_cast<std::size_t>(grid.n));
    const double step = (grid.max - grid.min) / static_cast<double>(grid.n - 1);
    Complex warm2h{0.0, 0.0};
    bool have_warm = false;
    for (int j = 0; j < grid.n; ++j) {
      const double x = grid.min + step * j;
      Complex m2;
      if (have_warm) {
        try {
          m2 = detail::pastur_solve_at(base_, t_, Complex{x, 2.0 * h}, warm2h, tol, 4000);
        } catch (const SolverError&) {
          m2 = detail::pastur_ladder(base_, t_, x, 2.0 * h, tol);
        }
      } else {
        m2 = detail::pastur_ladder(base_, t_, x, 2.0 * h, tol);
      }
      warm2h = m2;
      have_warm = true;
      const Complex m1 = detail::pastur_solve_at(base_, t_, Complex{x, h}, m2, tol);
      double rho = (2.0 * m1 - m2).imag() / M_PI;
      if (x < left_.edge || x > right_.edge || rho < 0.0) rho = 0.0;
      out.values[static_cast<std::size_t>(j)] = rho;
    }
    const double mass = out.mass();
    if (std::abs(mass - 1.0) > 1e-3)
      throw SolverError("density: trapezoid mass off by more than 1e-3", std::abs(mass - 1.0));
    return out;
  }

 private:
  static std::pair<double, double> key(Complex z) { return {z.real(), z.imag()}; }

  DiscreteMeasure base_;
  double t_;
  int grid_n_;
  EdgeReport left_, right_;
  mutable std::map<std::pair<double, double>, Complex> cache_;
  mutable std::mutex mutex_;
  mutable std::optional<GriddedDensity> density_;
  mutable std::mutex density_mutex_;
};

inline GriddedDensity density(const DiscreteMeasure& mu, double t, const GridSpec& grid) {
  return FreeConvolution(mu, t).compute_density(grid);
}

inline GriddedDensity density(const DiscreteMeasure& mu, double t) {
  FreeConvolution fc(mu, t);
  return fc.compute_density(fc.default_grid());
}

inline double log_potential(const DiscreteMeasure& mu, double t, double u) {
  return FreeConvolution(mu, t).log_potential(u);
}

// Least-squares slope of log density against log distance-to-edge over the
// window [10*grid_step, 0.05*(r_t - l_t)], sampled at log-spaced points by
// direct boundary solves.
inline double edge_exponent(const DiscreteMeasure& mu, double t, EdgeSide side,
                            int grid_n = 4096, EdgeReport* report = nullptr) {
  FreeConvolution fc(mu, t, grid_n);
  const GridSpec grid = fc.default_grid();
  const double grid_step = (grid.max - grid.min) / static_cast<double>(grid.n - 1);
  const double s_lo = 10.0 * grid_step;
  const double s_hi = 0.05 * (fc.right().edge - fc.left().edge);
  if (!(s_hi > s_lo))
    throw SolverError("edge_exponent: fit window is empty at this resolution", s_hi - s_lo);
  const int n_pts = 24;
  std::vector<double> xs, ys;
  for (int k = 0; k < n_pts; ++k) {
    const double f = static_cast<double>(k) / (n_pts - 1);
    const double s = s_lo * std::pow(s_hi / s_lo, f);
    const double x = side == EdgeSide::left ? fc.left().edge + s : fc.right().edge - s;
    const double rho = fc.stieltjes_real(x).imag() / M_PI;
    if (rho > 0.0 && std::isfinite(rho)) {
      xs.push_back(std::log(s));
      ys.push_back(std::log(rho));
    }
  }
  if (xs.size() < 8)
    throw SolverError("edge_exponent: fewer than 8 usable points in fit window",
                      static_cast<double>(xs.size()));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double n = static_cast<double>(xs.size());
  const double alpha = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (report) {
    *report = side == EdgeSide::left ? fc.left() : fc.right();
    report->exponent_fit = alpha;
    report->fit_window = {s_lo, s_hi};
  }
  return alpha;
}

struct CharacteristicCheck {
  double u_t = 0.0;
  double defect = 0.0;
};

// Conserved quantity along the Burgers characteristic: u_t = -t int mu_D/l
// stays outside supp(mu_t) for t < t_c and satisfies m_t(u_t) = -u_t/t.
inline CharacteristicCheck characteristic_check(const DiscreteMeasure& mu, double t) {
  if (mu.min_atom() <= 0.0)
    throw std::invalid_argument("characteristic_check: mu_D must be supported in (0,inf)");
  const double t_c = 1.0 / power_moment(mu, -2);
  if (!(t < t_c))
    throw std::invalid_argument("characteristic_check: requires t < t_c");
  CharacteristicCheck out;
  out.u_t = -t * power_moment(mu, -1);
  FreeConvolution fc(mu, t);
  const Complex m = fc.stieltjes_real(out.u_t);
  out.defect = std::abs(m + out.u_t / t);
  return out;
}

}  // namespace atlas
