#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "atlas/mde.hpp"
#include "atlas/measures.hpp"
#include "atlas/rng.hpp"

namespace atlas {

struct SamplerConfig {
  int N = 400;
  int samples = 1;
  std::uint64_t seed = 0;
  double J = 1.0;  // noise scale; B''(0) in the soft-spins Hessian variant

  void validate() const {
    if (N < 2) throw std::invalid_argument("SamplerConfig: N must be >= 2");
    if (samples < 1) throw std::invalid_argument("SamplerConfig: samples must be >= 1");
    if (!(J >= 0.0)) throw std::invalid_argument("SamplerConfig: J must be nonnegative");
  }
};

namespace detail {

// One N x N matrix distributed as J times a GOE matrix, normalized so that
// E[X_jk^2] = J^2 (1 + delta_jk) / N. Fill order is fixed (upper triangle,
// row-major) so draws are bit-reproducible.
inline Eigen::MatrixXd sample_goe(int N, double J, CounterRng& rng) {
  Eigen::MatrixXd X(N, N);
  const double off = J / std::sqrt(static_cast<double>(N));
  const double dia = J * std::sqrt(2.0 / static_cast<double>(N));
  for (int j = 0; j < N; ++j) {
    X(j, j) = dia * rng.next_gaussian();
    for (int k = j + 1; k < N; ++k) {
      const double v = off * rng.next_gaussian();
      X(j, k) = v;
      X(k, j) = v;
    }
  }
  return X;
}

// H_N(u) = a(u) (x) Id_N + blockdiag(X_1, ..., X_{L^d})
inline Eigen::MatrixXd sample_block_matrix(const MdeModel& model, const Eigen::VectorXd& u,
                                           int N, std::uint64_t seed, std::uint64_t stream) {
  const int n = model.dim();
  const Eigen::MatrixXd a = model.a(u);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n * N, n * N);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (a(x, y) != 0.0)
        H.block(x * N, y * N, N, N).diagonal().array() += a(x, y);
  CounterRng rng(seed, stream);
  for (int x = 0; x < n; ++x) H.block(x * N, x * N, N, N) += sample_goe(N, model.J(), rng);
  return H;
}

inline Eigen::VectorXd eigenvalues_of(const Eigen::MatrixXd& H) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly).eigenvalues();
}

inline DiscreteMeasure esd_from(const Eigen::VectorXd& ev) {
  std::vector<double> atoms(ev.data(), ev.data() + ev.size());
  std::vector<double> w(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  return DiscreteMeasure(std::move(atoms), std::move(w));
}

}  // namespace detail

// ESD of one sampled N L^d x N L^d matrix H_N(u); deterministic given seed.
inline DiscreteMeasure sample_block_spectrum(const MdeModel& model, const Eigen::VectorXd& u,
                                             const SamplerConfig& cfg, int sample_index = 0) {
  cfg.validate();
  return detail::esd_from(detail::eigenvalues_of(detail::sample_block_matrix(
      model, u, cfg.N, cfg.seed, static_cast<std::uint64_t>(sample_index))));
}

struct LogdetReport {
  double rate = 0.0;           // mean of (1/(N L^d)) log|det H_N(u)|
  double reference = 0.0;      // int log|l| mu_infty(u, dl)
  double gap = 0.0;            // |rate - reference|
  int resampled = 0;           // exactly-singular samples that were redrawn
  double fraction_positive = 0.0;
  double restricted_rate = 0.0;  // mean over samples with lambda_min > 0
};

inline LogdetReport logdet_rate(const MdeModel& model, const Eigen::VectorXd& u,
                                const SamplerConfig& cfg) {
  cfg.validate();
  if (cfg.samples < 20) throw std::invalid_argument("logdet_rate: needs samples >= 20");
  LogdetReport rep;
  double acc = 0.0, acc_pos = 0.0;
  int n_pos = 0;
  for (int s = 0; s < cfg.samples; ++s) {
    std::uint64_t stream = static_cast<std::uint64_t>(s);
    Eigen::VectorXd ev;
    for (int retry = 0;; ++retry) {
      ev = detail::eigenvalues_of(
          detail::sample_block_matrix(model, u, cfg.N, cfg.seed, stream));
      if ((ev.array() != 0.0).all()) break;
      ++rep.resampled;
      stream = static_cast<std::uint64_t>(s) | (static_cast<std::uint64_t>(retry + 1) << 32);
      if (retry > 16) throw SolverError("logdet_rate: persistent singular samples", 0.0);
    }
    const double rate = ev.array().abs().log().sum() / static_cast<double>(ev.size());
    acc += rate;
    if (ev(0) > 0.0) {
      acc_pos += rate;
      ++n_pos;
    }
  }
  rep.rate = acc / cfg.samples;
  rep.fraction_positive = static_cast<double>(n_pos) / cfg.samples;
  rep.restricted_rate = n_pos > 0 ? acc_pos / n_pos : std::numeric_limits<double>::quiet_NaN();
  rep.reference = model.J() > 0.0
                      ? log_abs_moment(model, u)
                      : [&] {
                          const Eigen::VectorXd ea =
                              Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(model.a(u))
                                  .eigenvalues();
                          return ea.array().abs().log().sum() / ea.size();
                        }();
  rep.gap = std::abs(rep.rate - rep.reference);
  return rep;
}

struct OutlierReport {
  double max_exceed_right = 0.0;  // max over samples of lambda_max - r(mu_infty(u))
  double max_exceed_left = 0.0;   // max over samples of l(mu_infty(u)) - lambda_min
};

inline OutlierReport outlier_check(const MdeModel& model, const Eigen::VectorXd& u,
                                   const SamplerConfig& cfg) {
  cfg.validate();
  double l_edge, r_edge;
  if (model.J() > 0.0) {
    const GriddedDensity rho = mu_infinity(model, u);
    l_edge = rho.left_edge;
    r_edge = rho.right_edge;
  } else {
    const Eigen::VectorXd ea =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(model.a(u)).eigenvalues();
    l_edge = ea(0);
    r_edge = ea(ea.size() - 1);
  }
  OutlierReport rep;
  rep.max_exceed_right = -std::numeric_limits<double>::infinity();
  rep.max_exceed_left = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < cfg.samples; ++s) {
    const Eigen::VectorXd ev = detail::eigenvalues_of(
        detail::sample_block_matrix(model, u, cfg.N, cfg.seed, static_cast<std::uint64_t>(s)));
    rep.max_exceed_right = std::max(rep.max_exceed_right, ev(ev.size() - 1) - r_edge);
    rep.max_exceed_left = std::max(rep.max_exceed_left, l_edge - ev(0));
  }
  return rep;
}

// Diagonal entries drawn i.i.d. from mu_D (inverse-CDF on the atom weights).
inline std::vector<double> draw_diagonal(const DiscreteMeasure& mu, int N, std::uint64_t seed) {
  std::vector<double> cum(mu.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += mu.weights()[i];
    cum[i] = acc;
  }
  CounterRng rng(seed, 0xd1a6ull);
  std::vector<double> out(static_cast<std::size_t>(N));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = rng.next_unit();
    const auto it = std::lower_bound(cum.begin(), cum.end(), p);
    const std::size_t idx =
        std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), mu.size() - 1);
    out[i] = mu.atoms()[idx];
  }
  return out;
}

// ESD of W_N + u Id + D_N with W_N ~ sqrt(t) GOE (the soft-spins Hessian at
// a fixed shift u; the xi-integral is replaced by the u-grid of the Laplace
// method).
inline DiscreteMeasure sample_softspin_hessian(const std::vector<double>& D_diag, double t,
                                               double u, const SamplerConfig& cfg,
                                               int sample_index = 0) {
  cfg.validate();
  if (!(t >= 0.0)) throw std::invalid_argument("sample_softspin_hessian: t must be >= 0");
  const int N = static_cast<int>(D_diag.size());
  if (N < 2) throw std::invalid_argument("sample_softspin_hessian: needs N >= 2 diagonal entries");
  CounterRng rng(cfg.seed, static_cast<std::uint64_t>(sample_index));
  Eigen::MatrixXd H = detail::sample_goe(N, std::sqrt(t), rng);
  for (int i = 0; i < N; ++i) H(i, i) += D_diag[static_cast<std::size_t>(i)] + u;
  return detail::esd_from(detail::eigenvalues_of(H));
}

// Schoenberg-family correlator B(x) = c0 + sum_j a_j exp(-s_j^2 x).
struct CorrelatorSpec {
  struct Term {
    double amplitude = 0.0;  // a_j >= 0
    double rate = 0.0;       // s_j > 0
  };
  double c0 = 0.0;
  std::vector<Term> terms;

  void validate() const {
    if (c0 < 0.0) throw std::invalid_argument("CorrelatorSpec: c0 must be >= 0");
    for (const Term& t : terms) {
      if (t.amplitude < 0.0) throw std::invalid_argument("CorrelatorSpec: amplitudes must be >= 0");
      if (!(t.rate > 0.0)) throw std::invalid_argument("CorrelatorSpec: rates must be > 0");
    }
    if (!(B(0.0) > 0.0) || !(Bp0() < 0.0) || !(Bpp0() > 0.0))
      throw std::invalid_argument("CorrelatorSpec: nondegeneracy needs B(0)>0, B'(0)<0, B''(0)>0");
  }

  double B(double x) const {
    double s = c0;
    for (const Term& t : terms) s += t.amplitude * std::exp(-t.rate * t.rate * x);
    return s;
  }
  double Bp0() const {
    double s = 0.0;
    for (const Term& t : terms) s -= t.amplitude * t.rate * t.rate;
    return s;
  }
  double Bpp0() const {
    double s = 0.0;
    for (const Term& t : terms) s += t.amplitude * std::pow(t.rate, 4);
    return s;
  }
};

// Gaussian landscape H(x) = V(x) + <x, D x>/2 on a grid_n x grid_n grid over
// [-box, box]^2, with E[V(x)V(y)] = N B(||x-y||^2 / (2N)) at N = 2. The
// covariance is factorized once; samples and minima counts are cheap.
class LandscapeSampler {
 public:
  LandscapeSampler(const CorrelatorSpec& B, double box, int grid_n)
      : box_(box), grid_n_(grid_n) {
    B.validate();
    if (grid_n_ < 3 || grid_n_ > 64)
      throw std::invalid_argument("LandscapeSampler: grid_n must be in [3, 64]");
    if (!(box_ > 0.0)) throw std::invalid_argument("LandscapeSampler: box must be positive");
    const int M = grid_n_ * grid_n_;
    coords_.resize(static_cast<std::size_t>(M));
    const double h = 2.0 * box_ / (grid_n_ - 1);
    for (int iy = 0; iy < grid_n_; ++iy)
      for (int ix = 0; ix < grid_n_; ++ix)
        coords_[static_cast<std::size_t>(iy * grid_n_ + ix)] = {-box_ + h * ix, -box_ + h * iy};

    constexpr double N = 2.0;
    Eigen::MatrixXd cov(M, M);
    for (int p = 0; p < M; ++p)
      for (int q = p; q < M; ++q) {
        const double dx = coords_[p].first - coords_[q].first;
        const double dy = coords_[p].second - coords_[q].second;
        const double val = N * B.B((dx * dx + dy * dy) / (2.0 * N));
        cov(p, q) = val;
        cov(q, p) = val;
      }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      cov.diagonal().array() += 1e-10;
      jitter_applied_ = true;
      llt.compute(cov);
      if (llt.info() != Eigen::Success)
        throw SolverError("LandscapeSampler: covariance not factorizable", 1e-10);
    }
    chol_ = llt.matrixL();
  }

  bool jitter_applied() const { return jitter_applied_; }
  int grid_n() const { return grid_n_; }
  const std::vector<std::pair<double, double>>& coords() const { return coords_; }

  Eigen::VectorXd sample_field(std::uint64_t seed, int sample_index = 0) const {
    const int M = grid_n_ * grid_n_;
    CounterRng rng(seed, static_cast<std::uint64_t>(sample_index));
    Eigen::VectorXd xi(M);
    for (int i = 0; i < M; ++i) xi(i) = rng.next_gaussian();
    return chol_ * xi;
  }

  // strict 8-neighbor local minima of V + <x,Dx>/2, interior nodes only
  int count_minima(const Eigen::Matrix2d& D, std::uint64_t seed, int sample_index = 0) const {
    const Eigen::VectorXd field = sample_field(seed, sample_index);
    Eigen::VectorXd energy(field.size());
    for (int p = 0; p < field.size(); ++p) {
      const auto [x, y] = coords_[static_cast<std::size_t>(p)];
      const Eigen::Vector2d v(x, y);
      energy(p) = field(p) + 0.5 * v.dot(D * v);
    }
    int count = 0;
    for (int iy = 1; iy + 1 < grid_n_; ++iy)
      for (int ix = 1; ix + 1 < grid_n_; ++ix) {
        const double e = energy(iy * grid_n_ + ix);
        bool is_min = true;
        for (int dy = -1; dy <= 1 && is_min; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (!(e < energy((iy + dy) * grid_n_ + (ix + dx)))) {
              is_min = false;
              break;
            }
          }
        if (is_min) ++count;
      }
    return count;
  }

 private:
  double box_;
  int grid_n_;
  std::vector<std::pair<double, double>> coords_;
  Eigen::MatrixXd chol_;
  bool jitter_applied_ = false;
};

inline int landscape_minima_count(const CorrelatorSpec& B, const Eigen::Matrix2d& D, double box,
                                  int grid_n, const SamplerConfig& cfg,
                                  bool* jitter_flag = nullptr) {
  LandscapeSampler sampler(B, box, grid_n);
  if (jitter_flag) *jitter_flag = sampler.jitter_applied();
  return sampler.count_minima(D, cfg.seed);
}

}  // namespace atlas
