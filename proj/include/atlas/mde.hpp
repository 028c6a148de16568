#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "atlas/freeconv.hpp"
#include "atlas/measures.hpp"
#include "atlas/rng.hpp"

namespace atlas {

// Block model for the elastic-manifold Hessian: a(u) = -t0 Delta + diag(u)
// + mu0 Id on the periodic lattice, with noise scale J per site block. Any
// symmetric base matrix is accepted in place of the lattice one.
class MdeModel {
 public:
  MdeModel(const LatticeSpec& lattice, double J)
      : base_(lattice_matrix(lattice)), J_(J), lattice_(lattice) {
    if (!(J >= 0.0)) throw std::invalid_argument("MdeModel: J must be nonnegative");
  }

  MdeModel(Eigen::MatrixXd base, double J) : base_(std::move(base)), J_(J) {
    if (base_.rows() != base_.cols() || base_.rows() < 1)
      throw std::invalid_argument("MdeModel: base must be square and nonempty");
    if (!base_.isApprox(base_.transpose(), 1e-12))
      throw std::invalid_argument("MdeModel: base must be symmetric");
    if (!(J >= 0.0)) throw std::invalid_argument("MdeModel: J must be nonnegative");
  }

  int dim() const { return static_cast<int>(base_.rows()); }
  double J() const { return J_; }
  const Eigen::MatrixXd& base() const { return base_; }

  Eigen::MatrixXd a(const Eigen::VectorXd& u) const {
    if (u.size() != base_.rows()) throw std::invalid_argument("MdeModel: u has wrong length");
    Eigen::MatrixXd m = base_;
    m.diagonal() += u;
    return m;
  }

  // span covering the spectrum of a(u) + noise, used for grids and ladders
  double spectral_scale(const Eigen::VectorXd& u) const {
    const Eigen::MatrixXd au = a(u);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(au).eigenvalues();
    return ev(ev.size() - 1) - ev(0) + 4.0 * J_ + 1.0;
  }

  static Eigen::MatrixXd lattice_matrix(const LatticeSpec& spec) {
    const int n = static_cast<int>(spec.sites());
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
    // neighbor counting with wrap multiplicity (L = 2 doubles up)
    std::vector<int> strides(spec.d, 1);
    for (int j = 1; j < spec.d; ++j) strides[j] = strides[j - 1] * spec.L;
    for (int site = 0; site < n; ++site) {
      for (int j = 0; j < spec.d; ++j) {
        const int coord = (site / strides[j]) % spec.L;
        for (int dir : {+1, -1}) {
          const int ncoord = (coord + dir + spec.L) % spec.L;
          const int nsite = site + (ncoord - coord) * strides[j];
          lap(site, nsite) -= spec.t0;
        }
        lap(site, site) += 2.0 * spec.t0;
      }
    }
    lap.diagonal().array() += spec.mu0;
    return lap;
  }

 private:
  Eigen::MatrixXd base_;
  double J_;
  std::optional<LatticeSpec> lattice_;
};

struct MdeSolution {
  Eigen::VectorXd u;
  std::vector<Complex> z_grid;
  std::vector<Eigen::VectorXcd> m;
  std::vector<double> residuals;
};

namespace detail {

inline Eigen::MatrixXcd mde_resolvent(const Eigen::MatrixXd& a, double J,
                                      const Eigen::VectorXcd& m, Complex z) {
  Eigen::MatrixXcd A = a.cast<Complex>();
  A.diagonal() -= (J * J) * m;
  A.diagonal().array() -= z;
  return A.partialPivLu().inverse();
}

inline double mde_residual(const Eigen::MatrixXd& a, double J, const Eigen::VectorXcd& m,
                           Complex z) {
  const Eigen::MatrixXcd M = mde_resolvent(a, J, m, z);
  return (m - M.diagonal()).cwiseAbs().maxCoeff();
}

// Damped iteration m <- (1-w) m + w diag[(a - J^2 diag(m) - z)^{-1}] with a
// Newton step (Jacobian Id - J^2 R, R_jk = M_jk^2) attempted whenever it
// keeps Im m > 0 componentwise and reduces the residual.
inline Eigen::VectorXcd mde_solve_at(const Eigen::MatrixXd& a, double J, Complex z,
                                     Eigen::VectorXcd m, double tol, int budget = 5000) {
  const int n = static_cast<int>(a.rows());
  const double omega = 0.5;
  double res = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  for (int it = 0; it < budget; ++it) {
    const Eigen::MatrixXcd M = mde_resolvent(a, J, m, z);
    const Eigen::VectorXcd s = M.diagonal();
    res = (m - s).cwiseAbs().maxCoeff();
    if ((it & 0x3f) == 0) history.push_back(res);
    if (res <= tol) return m;
    bool stepped = false;
    if (it >= 1 && J > 0.0) {
      const Eigen::MatrixXcd R = M.array().square().matrix();
      const Eigen::MatrixXcd Jac =
          Eigen::MatrixXcd::Identity(n, n) - (J * J) * R;
      const Eigen::VectorXcd delta = Jac.partialPivLu().solve(s - m);
      const Eigen::VectorXcd mn = m + delta;
      if ((mn.imag().array() > 0.0).all()) {
        const double rn = mde_residual(a, J, mn, z);
        if (rn < res) {
          m = mn;
          stepped = true;
        }
      }
    }
    if (!stepped) {
      Eigen::VectorXcd mn = (1.0 - omega) * m + omega * s;
      double w = omega;
      while (!(mn.imag().array() > 0.0).all() && w > 1e-6) {
        w *= 0.5;
        mn = (1.0 - w) * m + w * s;
      }
      m = mn;
    }
  }
  res = mde_residual(a, J, m, z);
  if (res > tol) {
    std::string msg = "solve_mde: iteration budget exhausted; residual history:";
    const std::size_t from = history.size() > 8 ? history.size() - 8 : 0;
    for (std::size_t i = from; i < history.size(); ++i)
      msg += " " + std::to_string(history[i]);
    throw SolverError(msg, res);
  }
  return m;
}

inline Eigen::VectorXcd mde_ladder(const Eigen::MatrixXd& a, double J, double x,
                                   double eta_target, double eta0, double tol) {
  const int n = static_cast<int>(a.rows());
  Eigen::VectorXcd m = Eigen::VectorXcd::Constant(n, Complex{0.0, 0.5 / eta0});
  double eta = eta0;
  m = mde_solve_at(a, J, Complex{x, eta}, m, tol);
  while (eta > eta_target) {
    eta = std::max(eta * 0.5, eta_target);
    m = mde_solve_at(a, J, Complex{x, eta}, m, tol);
  }
  return m;
}

}  // namespace detail

// Vector MDE solution m(u,z) = diag[(a(u) - J^2 diag(m) - z)^{-1}] with
// Im m > 0 componentwise; residual certified below 1e-10.
inline Eigen::VectorXcd solve_mde(const MdeModel& model, const Eigen::VectorXd& u, Complex z) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("solve_mde: Im z must be positive");
  const Eigen::MatrixXd a = model.a(u);
  if (model.J() == 0.0) {
    Eigen::MatrixXcd A = a.cast<Complex>();
    A.diagonal().array() -= z;
    return A.partialPivLu().inverse().diagonal();
  }
  const double eta0 = std::max(1.0, model.spectral_scale(u));
  Eigen::VectorXcd m;
  if (z.imag() >= eta0) {
    m = detail::mde_solve_at(a, model.J(), z,
                             Eigen::VectorXcd::Constant(model.dim(), Complex{0.0, 0.5 / z.imag()}),
                             1e-13);
  } else {
    m = detail::mde_ladder(a, model.J(), z.real(), z.imag(), eta0, 1e-13);
  }
  const double res = detail::mde_residual(a, model.J(), m, z);
  if (res > 1e-10) throw SolverError("solve_mde: residual above 1e-10", res);
  return m;
}

inline MdeSolution solve_mde_grid(const MdeModel& model, const Eigen::VectorXd& u,
                                  const std::vector<Complex>& z_grid) {
  MdeSolution sol;
  sol.u = u;
  sol.z_grid = z_grid;
  const Eigen::MatrixXd a = model.a(u);
  for (const Complex& z : z_grid) {
    sol.m.push_back(solve_mde(model, u, z));
    sol.residuals.push_back(detail::mde_residual(a, model.J(), sol.m.back(), z));
  }
  return sol;
}

namespace detail {

// m(u, E + i0+) by eta-homotopy down to a negligible eta and Richardson
// extrapolation of the last two rungs; smooth in u, suitable for
// finite-difference work.
inline Eigen::VectorXcd mde_boundary_value(const MdeModel& model, const Eigen::MatrixXd& a,
                                           double scale, double E, double eta_rel = 1e-9) {
  const double eta0 = std::max(1.0, scale);
  const double eta = eta_rel * scale;
  const double tol = 1e-13;
  Eigen::VectorXcd m2 = mde_ladder(a, model.J(), E, 2.0 * eta, eta0, tol);
  Eigen::VectorXcd m1 = mde_solve_at(a, model.J(), Complex{E, eta}, m2, tol);
  return 2.0 * m1 - m2;
}

}  // namespace detail

// int log|l| mu_infty(u, dl) through the determinant identity
//   (1/n) [ log|det(a(u) - J^2 diag m)| + (J^2/2) Re sum m_i^2 ],
// with m the boundary value of the MDE solution at z = 0.
inline double log_abs_moment(const MdeModel& model, const Eigen::VectorXd& u) {
  if (!(model.J() > 0.0)) throw std::invalid_argument("log_abs_moment: J must be positive");
  const Eigen::MatrixXd a = model.a(u);
  const double scale = model.spectral_scale(u);
  const Eigen::VectorXcd m = detail::mde_boundary_value(model, a, scale, 0.0);
  Eigen::MatrixXcd A = a.cast<Complex>();
  A.diagonal() -= (model.J() * model.J()) * m;
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  double logdet = 0.0;
  for (int i = 0; i < model.dim(); ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
  const double msq = m.array().square().real().sum();
  const double n = static_cast<double>(model.dim());
  return (logdet + 0.5 * model.J() * model.J() * msq) / n;
}

// S[u] = int log|l| mu_infty(u, dl) - ||u||^2 / (2 J^2 L^d); concave in u.
inline double surface_value(const MdeModel& model, const Eigen::VectorXd& u) {
  const double n = static_cast<double>(model.dim());
  return log_abs_moment(model, u) - u.squaredNorm() / (2.0 * model.J() * model.J() * n);
}

// Density of mu_infty(u): Im of the averaged MDE solution on a grid, with
// eta-extrapolation. Support endpoints detected from the grid; extrapolation
// tails outside them are clamped to zero.
inline GriddedDensity mu_infinity(const MdeModel& model, const Eigen::VectorXd& u,
                                  int grid_n = 4096) {
  if (!(model.J() > 0.0)) throw std::invalid_argument("mu_infinity: J must be positive");
  const Eigen::MatrixXd a = model.a(u);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues();
  const double lo0 = ev(0) - 2.0 * model.J(), hi0 = ev(ev.size() - 1) + 2.0 * model.J();
  const double margin = 0.1 * (hi0 - lo0);
  const double lo = lo0 - margin, hi = hi0 + margin;
  const double span = hi - lo;
  const double h = 1e-4 * span;
  const double tol = 1e-13;
  const double eta0 = std::max(1.0, span);

  GriddedDensity out;
  out.grid_min = lo;
  out.grid_max = hi;
  out.values.resize(static_cast<std::size_t>(grid_n));
  const double step = span / static_cast<double>(grid_n - 1);
  Eigen::VectorXcd warm;
  const double nrm = static_cast<double>(model.dim());
  for (int j = 0; j < grid_n; ++j) {
    const double x = lo + step * j;
    Eigen::VectorXcd m2;
    if (warm.size() > 0) {
      try {
        m2 = detail::mde_solve_at(a, model.J(), Complex{x, 2.0 * h}, warm, tol, 2000);
      } catch (const SolverError&) {
        m2 = detail::mde_ladder(a, model.J(), x, 2.0 * h, eta0, tol);
      }
    } else {
      m2 = detail::mde_ladder(a, model.J(), x, 2.0 * h, eta0, tol);
    }
    warm = m2;
    const Eigen::VectorXcd m1 = detail::mde_solve_at(a, model.J(), Complex{x, h}, m2, tol);
    const Complex mbar = (2.0 * m1 - m2).sum() / nrm;
    out.values[static_cast<std::size_t>(j)] = std::max(0.0, mbar.imag() / M_PI);
  }

  double peak = 0.0;
  for (double v : out.values) peak = std::max(peak, v);
  const double tau = std::max(1e-8, 1e-6 * peak);
  std::size_t first = 0, last = out.values.size() - 1;
  while (first < out.values.size() && out.values[first] < tau) ++first;
  while (last > first && out.values[last] < tau) --last;
  if (first >= last) throw SolverError("mu_infinity: no support detected", peak);
  out.left_edge = out.node(first);
  out.right_edge = out.node(last);
  for (std::size_t j = 0; j < first; ++j) out.values[j] = 0.0;
  for (std::size_t j = last + 1; j < out.values.size(); ++j) out.values[j] = 0.0;

  const double mass = out.mass();
  if (std::abs(mass - 1.0) > 1e-3)
    throw SolverError("mu_infinity: trapezoid mass off by more than 1e-3", std::abs(mass - 1.0));
  // operator-norm proxy: the density is bounded by sqrt(L^d)/(J pi)
  const double bound = std::sqrt(nrm) / (model.J() * M_PI) * (1.0 + 1e-3);
  if (peak > bound)
    throw SolverError("mu_infinity: density exceeds the sqrt(L^d)/(J pi) bound", peak - bound);
  return out;
}

// min over random complex unit vectors v of Re<v, (Id - J^2 R(u,z)) v>,
// where R_jk = (M_jk)^2 is built from the reconstructed matrix solution.
inline double stability_form_min(const MdeModel& model, const Eigen::VectorXd& u, Complex z,
                                 int trials, std::uint64_t seed = 0) {
  if (!(z.imag() > 0.0))
    throw std::invalid_argument("stability_form_min: Im z must be positive");
  if (trials < 1) throw std::invalid_argument("stability_form_min: trials must be >= 1");
  const Eigen::VectorXcd m = solve_mde(model, u, z);
  const Eigen::MatrixXcd M = detail::mde_resolvent(model.a(u), model.J(), m, z);
  const Eigen::MatrixXcd R = M.array().square().matrix();
  const double J2 = model.J() * model.J();
  const int n = model.dim();
  double best = std::numeric_limits<double>::infinity();
  CounterRng rng(seed, 0x5f02f3ull);
  for (int tr = 0; tr < trials; ++tr) {
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v(i) = Complex{rng.next_gaussian(), rng.next_gaussian()};
    v /= v.norm();
    const Complex q = v.dot(v - J2 * (R * v));  // Eigen dot conjugates the first argument
    best = std::min(best, q.real());
  }
  return best;
}

struct DiagonalMaximizerReport {
  Eigen::VectorXd best_u;
  double max_offdiagonal_spread = 0.0;
  double value = 0.0;
};

// Derivative-free coordinate search of S[u] from random starts; the maximizer
// is expected on the diagonal (lattice translation symmetry).
inline DiagonalMaximizerReport diagonal_maximizer_check(const MdeModel& model, int starts,
                                                        std::uint64_t rng_seed) {
  const int n = model.dim();
  if (n > 8) throw std::invalid_argument("diagonal_maximizer_check: desk scale is L^d <= 8");
  if (starts < 1) throw std::invalid_argument("diagonal_maximizer_check: starts must be >= 1");

  DiagonalMaximizerReport rep;
  rep.value = -std::numeric_limits<double>::infinity();
  const double box = 2.0 * model.J() + 1.0;
  for (int s = 0; s < starts; ++s) {
    CounterRng rng(rng_seed, static_cast<std::uint64_t>(s));
    Eigen::VectorXd u(n);
    for (int i = 0; i < n; ++i) u(i) = box * rng.next_symmetric();
    double val = surface_value(model, u);
    double step = 0.25 * box;
    int evals = 0;
    while (step > 1e-7 && evals < 20000) {
      bool improved = false;
      for (int k = 0; k < n; ++k) {
        for (double dir : {+1.0, -1.0}) {
          Eigen::VectorXd cand = u;
          cand(k) += dir * step;
          const double cv = surface_value(model, cand);
          ++evals;
          if (cv > val) {
            u = cand;
            val = cv;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (step > 1e-7) {
      std::string msg = "diagonal_maximizer_check: optimizer stalled at iterate (";
      for (int i = 0; i < n; ++i) msg += (i ? ", " : "") + std::to_string(u(i));
      msg += ")";
      throw SolverError(msg, step);
    }
    if (val > rep.value) {
      rep.value = val;
      rep.best_u = u;
    }
  }
  const double mean = rep.best_u.mean();
  rep.max_offdiagonal_spread = (rep.best_u.array() - mean).abs().maxCoeff();
  return rep;
}

}  // namespace atlas
