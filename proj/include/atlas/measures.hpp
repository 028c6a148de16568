#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace atlas {

// Error type for iterative solvers that fail to certify their residual.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Atomic probability measure on the real line. Atoms are kept sorted;
// locations within 1e-9 relative tolerance are merged by weight addition
// (lattice symmetries create exact multiplicities that floating point splits).
// Immutable after construction.
class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.size() != weights.size() || atoms.empty())
      throw std::invalid_argument("DiscreteMeasure: atoms/weights size mismatch or empty");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (!std::isfinite(atoms[i]) || !std::isfinite(weights[i]))
        throw std::invalid_argument("DiscreteMeasure: non-finite entry");
      if (weights[i] < 0.0) throw std::invalid_argument("DiscreteMeasure: negative weight");
      total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("DiscreteMeasure: weights sum to " + std::to_string(total));

    std::vector<std::size_t> order(atoms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });

    const double scale = std::max({1.0, std::abs(atoms[order.front()]), std::abs(atoms[order.back()])});
    for (std::size_t idx : order) {
      if (!atoms_.empty() && atoms[idx] - atoms_.back() <= 1e-9 * scale) {
        weights_.back() += weights[idx];
      } else {
        atoms_.push_back(atoms[idx]);
        weights_.push_back(weights[idx]);
      }
    }
    // renormalize the <=1e-12 rounding slack away
    for (double& w : weights_) w /= total;
  }

  static DiscreteMeasure delta(double mu) { return DiscreteMeasure({mu}, {1.0}); }

  // Equal-mass quantile discretization of the semicircle law with the given
  // mean and variance; the standard semicircle of variance 1 lives on [-2,2].
  static DiscreteMeasure semicircle(double mean, double variance, std::size_t nodes = 512) {
    if (variance <= 0.0) throw std::invalid_argument("semicircle: variance must be positive");
    const double sigma = std::sqrt(variance);
    std::vector<double> atoms(nodes), weights(nodes, 1.0 / static_cast<double>(nodes));
    for (std::size_t i = 0; i < nodes; ++i) {
      const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(nodes);
      atoms[i] = mean + sigma * semicircle_quantile(p);
    }
    return DiscreteMeasure(std::move(atoms), std::move(weights));
  }

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return atoms_.size(); }
  double min_atom() const { return atoms_.front(); }
  double max_atom() const { return atoms_.back(); }

  DiscreteMeasure shifted(double c) const {
    std::vector<double> a = atoms_;
    for (double& x : a) x += c;
    return DiscreteMeasure(std::move(a), weights_);
  }

  DiscreteMeasure scaled(double s) const {
    if (s == 0.0) throw std::invalid_argument("DiscreteMeasure::scaled: zero scale");
    std::vector<double> a = atoms_;
    for (double& x : a) x *= s;
    return DiscreteMeasure(std::move(a), weights_);
  }

  // pushforward under x -> -x
  DiscreteMeasure reflected() const { return scaled(-1.0); }

 private:
  // CDF of the standard semicircle on [-2,2], inverted by bisection.
  static double semicircle_quantile(double p) {
    double lo = -2.0, hi = 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double cdf = 0.5 + (mid * std::sqrt(4.0 - mid * mid)) / (4.0 * M_PI) +
                         std::asin(0.5 * mid) / M_PI;
      (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  std::vector<double> atoms_;
  std::vector<double> weights_;
};

// Density sampled on a uniform grid, with the support endpoints recorded.
struct GriddedDensity {
  double grid_min = 0.0;
  double grid_max = 0.0;
  std::vector<double> values;
  double left_edge = 0.0;
  double right_edge = 0.0;

  double step() const {
    return (grid_max - grid_min) / static_cast<double>(values.size() - 1);
  }
  double node(std::size_t j) const { return grid_min + step() * static_cast<double>(j); }
  std::size_t size() const { return values.size(); }

  double mass() const {
    const double h = step();
    double m = 0.0;
    for (std::size_t j = 0; j + 1 < values.size(); ++j) m += 0.5 * h * (values[j] + values[j + 1]);
    return m;
  }

  GriddedDensity shifted(double c) const {
    GriddedDensity out = *this;
    out.grid_min += c;
    out.grid_max += c;
    out.left_edge += c;
    out.right_edge += c;
    return out;
  }
};

// Periodic lattice of side L in internal dimension d, with interaction
// strength t0 and mass mu0. The CLI exposes degenerate t0 = 0 / mu0 = 0
// threshold queries, so only nonnegativity is enforced here; the models
// that need strict positivity check it themselves.
struct LatticeSpec {
  int L = 2;
  int d = 1;
  double t0 = 1.0;
  double mu0 = 1.0;

  LatticeSpec(int L_, int d_, double t0_, double mu0_) : L(L_), d(d_), t0(t0_), mu0(mu0_) {
    if (L < 2) throw std::invalid_argument("LatticeSpec: L must be >= 2");
    if (d < 1) throw std::invalid_argument("LatticeSpec: d must be >= 1");
    if (!(t0 >= 0.0)) throw std::invalid_argument("LatticeSpec: t0 must be >= 0");
    if (!(mu0 >= 0.0)) throw std::invalid_argument("LatticeSpec: mu0 must be >= 0");
  }

  std::size_t sites() const {
    std::size_t n = 1;
    for (int j = 0; j < d; ++j) n *= static_cast<std::size_t>(L);
    return n;
  }
};

// Raw eigenvalues of -t0*Delta on the periodic lattice, one per momentum
// vector k in {0..L-1}^d: 2*t0*sum_j (1 - cos(2 pi k_j / L)).
inline std::vector<double> laplacian_eigenvalues(const LatticeSpec& spec) {
  const std::size_t n = spec.sites();
  std::vector<double> eig(n, 0.0);
  std::vector<int> k(spec.d, 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    double v = 0.0;
    for (int j = 0; j < spec.d; ++j)
      v += 2.0 * spec.t0 * (1.0 - std::cos(2.0 * M_PI * k[j] / spec.L));
    eig[idx] = v;
    for (int j = 0; j < spec.d; ++j) {
      if (++k[j] < spec.L) break;
      k[j] = 0;
    }
  }
  return eig;
}

// Empirical spectral measure of -t0*Delta (+ mu0*Id when include_mass).
inline DiscreteMeasure laplacian_spectrum(const LatticeSpec& spec, bool include_mass) {
  std::vector<double> eig = laplacian_eigenvalues(spec);
  if (include_mass)
    for (double& v : eig) v += spec.mu0;
  std::vector<double> w(eig.size(), 1.0 / static_cast<double>(eig.size()));
  return DiscreteMeasure(std::move(eig), std::move(w));
}

// sum_i w_i lambda_i^p for integer p; negative powers require all atoms > 0.
inline double power_moment(const DiscreteMeasure& mu, int p) {
  if (p < 0 && mu.min_atom() <= 0.0)
    throw std::invalid_argument("power_moment: negative power needs strictly positive atoms");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double x = 1.0;
    const double lam = mu.atoms()[i];
    const int q = p >= 0 ? p : -p;
    for (int j = 0; j < q; ++j) x *= lam;
    if (p < 0) x = 1.0 / x;
    s += mu.weights()[i] * x;
  }
  return s;
}

// sum_i w_i log(lambda_i); atoms <= 0 signal a misconfigured model
// (confinement not positive definite).
inline double log_moment(const DiscreteMeasure& mu) {
  if (mu.min_atom() <= 0.0)
    throw std::invalid_argument("log_moment: needs strictly positive atoms");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weights()[i] * std::log(mu.atoms()[i]);
  return s;
}

namespace detail {

// One measure reduced to a piecewise-linear CDF: breakpoints plus the CDF
// value just left and just right of each breakpoint (steps jump, gridded
// CDFs are continuous). In between breakpoints each CDF is affine.
struct PiecewiseCdf {
  std::vector<double> x;
  std::vector<double> f_left;
  std::vector<double> f_right;
};

inline PiecewiseCdf cdf_of(const DiscreteMeasure& mu) {
  PiecewiseCdf c;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    c.x.push_back(mu.atoms()[i]);
    c.f_left.push_back(acc);
    acc += mu.weights()[i];
    c.f_right.push_back(acc);
  }
  // exact unit mass at the right end
  if (!c.f_right.empty()) c.f_right.back() = 1.0;
  return c;
}

// Trapezoid-accumulated CDF at the grid nodes, normalized so it ends at 1
// (the density mass is only accurate to ~1e-3; W1 needs matched totals).
inline PiecewiseCdf cdf_of(const GriddedDensity& g) {
  PiecewiseCdf c;
  const double h = g.step();
  double acc = 0.0;
  c.x.push_back(g.grid_min);
  c.f_left.push_back(0.0);
  c.f_right.push_back(0.0);
  for (std::size_t j = 1; j < g.size(); ++j) {
    acc += 0.5 * h * (g.values[j - 1] + g.values[j]);
    c.x.push_back(g.node(j));
    c.f_left.push_back(acc);
    c.f_right.push_back(acc);
  }
  const double total = acc;
  if (total <= 0.0) throw std::invalid_argument("wasserstein1: gridded density has no mass");
  for (auto& v : c.f_left) v /= total;
  for (auto& v : c.f_right) v /= total;
  return c;
}

// CDF value immediately right of x (affine interpolation between breakpoints,
// constant outside).
inline double eval_right(const PiecewiseCdf& c, double x) {
  if (x < c.x.front()) return 0.0;
  if (x >= c.x.back()) return 1.0;
  const auto it = std::upper_bound(c.x.begin(), c.x.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - c.x.begin());  // x < c.x[j]
  const double x0 = c.x[j - 1], x1 = c.x[j];
  const double f0 = c.f_right[j - 1], f1 = c.f_left[j];
  if (x1 == x0) return f1;
  return f0 + (f1 - f0) * (x - x0) / (x1 - x0);
}

inline double integrate_abs_cdf_diff(const PiecewiseCdf& a, const PiecewiseCdf& b) {
  std::vector<double> grid;
  grid.reserve(a.x.size() + b.x.size());
  grid.insert(grid.end(), a.x.begin(), a.x.end());
  grid.insert(grid.end(), b.x.begin(), b.x.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double total = 0.0;
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const double x0 = grid[j], x1 = grid[j + 1];
    const double w = x1 - x0;
    if (w <= 0.0) continue;
    // both CDFs affine on the open interval; sample the one-sided limits
    const double d0 = eval_right(a, x0) - eval_right(b, x0);
    double d1;
    {
      // left limit at x1 = affine extension from inside the interval
      const double am = eval_right(a, x0 + 0.5 * w) - eval_right(b, x0 + 0.5 * w);
      d1 = 2.0 * am - d0;
    }
    if (d0 * d1 >= 0.0) {
      total += 0.5 * w * (std::abs(d0) + std::abs(d1));
    } else {
      const double s = d0 / (d0 - d1);  // crossing point in [0,1]
      total += 0.5 * w * (std::abs(d0) * s + std::abs(d1) * (1.0 - s));
    }
  }
  return total;
}

}  // namespace detail

// Wasserstein-1 distance as the area between CDFs on a merged grid.
inline double wasserstein1(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  return detail::integrate_abs_cdf_diff(detail::cdf_of(a), detail::cdf_of(b));
}
inline double wasserstein1(const DiscreteMeasure& a, const GriddedDensity& b) {
  return detail::integrate_abs_cdf_diff(detail::cdf_of(a), detail::cdf_of(b));
}
inline double wasserstein1(const GriddedDensity& a, const DiscreteMeasure& b) {
  return detail::integrate_abs_cdf_diff(detail::cdf_of(a), detail::cdf_of(b));
}
inline double wasserstein1(const GriddedDensity& a, const GriddedDensity& b) {
  return detail::integrate_abs_cdf_diff(detail::cdf_of(a), detail::cdf_of(b));
}

}  // namespace atlas
