#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "atlas/complexity.hpp"
#include "atlas/io.hpp"
#include "atlas/mde.hpp"
#include "atlas/montecarlo.hpp"

namespace atlas::cli {

using io::ConfigError;
using io::json;

// exit codes: 0 ok, 1 numerical failure, 2 config error, 3 threshold violation
enum ExitCode : int { kOk = 0, kNumerical = 1, kConfig = 2, kViolation = 3 };

struct RunConfig {
  json raw;
  std::string out_path;
  std::uint64_t seed = 0;
  int jobs = 1;
};

namespace detail {

inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lock(err_mutex);
          if (!err) err = std::current_exception();
          failed = true;
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct ModelConfig {
  bool elastic = false;
  std::optional<SoftSpinModel> soft;
  std::optional<ElasticManifoldModel> manifold;
};

inline ModelConfig parse_model(const json& cfg) {
  if (!cfg.contains("model")) throw ConfigError("config is missing \"model\"");
  const json& m = cfg.at("model");
  ModelConfig out;
  try {
    const std::string type = m.at("type").get<std::string>();
    if (type == "soft_spins") {
      out.soft.emplace(io::measure_from_json(m.at("mu_D")), m.at("t").get<double>());
    } else if (type == "elastic_manifold") {
      out.elastic = true;
      out.manifold.emplace(LatticeSpec(m.at("L").get<int>(), m.at("d").get<int>(),
                                       m.at("t0").get<double>(), m.at("mu0").get<double>()),
                           m.at("b").get<double>());
    } else {
      throw ConfigError("unknown model type: " + type);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
  return out;
}

struct Sweep {
  std::string param;
  double min = 0.0, max = 0.0;
  int steps = 1;
};

inline Sweep parse_sweep(const json& cfg) {
  if (!cfg.contains("sweep")) throw ConfigError("phase command needs a \"sweep\" section");
  const json& s = cfg.at("sweep");
  Sweep out;
  try {
    out.param = s.at("param").get<std::string>();
    out.min = s.at("min").get<double>();
    out.max = s.at("max").get<double>();
    out.steps = s.at("steps").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sweep: ") + e.what());
  }
  if (out.steps < 1) throw ConfigError("sweep steps must be >= 1");
  if (!std::isfinite(out.min) || !std::isfinite(out.max))
    throw ConfigError("sweep bounds must be finite");
  return out;
}

inline double sweep_value(const Sweep& s, int i) {
  if (s.steps == 1) return s.min;
  return s.min + (s.max - s.min) * static_cast<double>(i) / static_cast<double>(s.steps - 1);
}

}  // namespace detail

inline int cmd_phase(const RunConfig& rc) {
  const detail::ModelConfig mc = detail::parse_model(rc.raw);
  const detail::Sweep sweep = detail::parse_sweep(rc.raw);
  std::vector<ComplexityResult> results(static_cast<std::size_t>(sweep.steps));
  std::vector<double> values(static_cast<std::size_t>(sweep.steps));

  detail::parallel_for(sweep.steps, rc.jobs, [&](int i) {
    const double v = detail::sweep_value(sweep, i);
    values[static_cast<std::size_t>(i)] = v;
    if (mc.elastic) {
      const ElasticManifoldModel& base = *mc.manifold;
      if (sweep.param == "b") {
        results[i] = sigma_elastic(ElasticManifoldModel(base.lattice, v));
      } else if (sweep.param == "mu0") {
        LatticeSpec spec(base.lattice.L, base.lattice.d, base.lattice.t0, v);
        results[i] = sigma_elastic(ElasticManifoldModel(spec, base.b));
      } else {
        throw ConfigError("elastic sweep param must be \"b\" or \"mu0\"");
      }
    } else {
      if (sweep.param != "t") throw ConfigError("soft-spins sweep param must be \"t\"");
      results[i] = sigma_soft_spins(SoftSpinModel(mc.soft->mu_D, v));
    }
  });

  io::CsvWriter csv({"t_or_b", "sigma_tot", "sigma_min", "phase", "u_star_tot", "u_star_min"});
  for (int i = 0; i < sweep.steps; ++i) {
    const ComplexityResult& r = results[static_cast<std::size_t>(i)];
    csv.add_row({io::format_double(values[static_cast<std::size_t>(i)]),
                 io::format_double(r.sigma_tot), io::format_double(r.sigma_min),
                 r.phase == Phase::simple ? "simple" : "glassy",
                 io::format_double(r.u_star_tot), io::format_double(r.u_star_min)});
  }
  csv.write_file(rc.out_path);
  return kOk;
}

inline int cmd_thresholds(const RunConfig& rc) {
  const detail::ModelConfig mc = detail::parse_model(rc.raw);
  json out;
  if (mc.elastic) {
    const ElasticManifoldModel& m = *mc.manifold;
    const DiscreteMeasure mass_measure = laplacian_spectrum(m.lattice, /*include_mass=*/true);
    const auto [c_tot, c_min] = near_critical_constants(mass_measure);
    out = json{{"mu_c", larkin_mass(m.lattice, m.b)},
               {"b_c", b_critical(m.lattice)},
               {"c_tot", c_tot},
               {"c_min", c_min},
               {"result", io::complexity_result_to_json(sigma_elastic(m))}};
    if (rc.raw.contains("export_density"))
      io::density_to_csv(density(mass_measure, m.b))
          .write_file(rc.raw.at("export_density").get<std::string>());
  } else {
    const auto [c_tot, c_min] = near_critical_constants(mc.soft->mu_D);
    out = json{{"t_c", t_critical(mc.soft->mu_D)},
               {"c_tot", c_tot},
               {"c_min", c_min},
               {"result", io::complexity_result_to_json(sigma_soft_spins(*mc.soft))}};
    if (rc.raw.contains("export_density"))
      io::density_to_csv(density(mc.soft->mu_D, mc.soft->t))
          .write_file(rc.raw.at("export_density").get<std::string>());
  }
  io::write_json_file(rc.out_path, out);
  return kOk;
}

inline int cmd_fit_critical(const RunConfig& rc) {
  const detail::ModelConfig mc = detail::parse_model(rc.raw);
  const DiscreteMeasure mu =
      mc.elastic ? laplacian_spectrum(mc.manifold->lattice, /*include_mass=*/true)
                 : mc.soft->mu_D;
  std::vector<double> eps(default_fit_epsilons().begin(), default_fit_epsilons().end());
  if (rc.raw.contains("epsilons")) {
    try {
      eps = rc.raw.at("epsilons").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed epsilons: ") + e.what());
    }
  }
  const NearCriticalFit fit = near_critical_fit(mu, eps);
  const auto [c_tot, c_min] = near_critical_constants(mu);
  const bool ok = fit.exponent_tot >= 1.8 && fit.exponent_tot <= 2.2 &&
                  fit.exponent_min >= 2.7 && fit.exponent_min <= 3.3;
  io::write_json_file(rc.out_path, json{{"exponent_tot", fit.exponent_tot},
                                        {"prefactor_tot", fit.prefactor_tot},
                                        {"exponent_min", fit.exponent_min},
                                        {"prefactor_min", fit.prefactor_min},
                                        {"c_tot", c_tot},
                                        {"c_min", c_min},
                                        {"t_c", t_critical(mu)},
                                        {"pass", ok}});
  return ok ? kOk : kViolation;
}

inline int cmd_mc_validate(const RunConfig& rc) {
  const detail::ModelConfig mc = detail::parse_model(rc.raw);
  if (!mc.elastic)
    throw ConfigError("mc-validate needs an elastic_manifold model (block sampler)");
  const ElasticManifoldModel& m = *mc.manifold;
  const MdeModel model(m.lattice, std::sqrt(m.b));  // J^2 = b
  const int n = model.dim();

  json mcfg = rc.raw.value("mc", json::object());
  const int N = mcfg.value("N", 400);
  const int samples = mcfg.value("samples", 50);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  if (mcfg.contains("u")) {
    const auto uv = mcfg.at("u").get<std::vector<double>>();
    if (static_cast<int>(uv.size()) != n) throw ConfigError("mc.u has wrong length");
    for (int i = 0; i < n; ++i) u(i) = uv[static_cast<std::size_t>(i)];
  }
  const json thr = mcfg.value("thresholds", json::object());
  const double thr_w1 = thr.value("w1", 0.05);
  const double thr_logdet = thr.value("logdet_gap", 0.02);
  const double thr_outlier = thr.value("outlier", 0.15);

  SamplerConfig scfg;
  scfg.N = N;
  scfg.samples = samples;
  scfg.seed = rc.seed;
  scfg.J = model.J();
  scfg.validate();

  const GriddedDensity rho = mu_infinity(model, u);
  const double reference = log_abs_moment(model, u);
  if (rc.raw.contains("export_density"))
    io::density_to_csv(rho).write_file(rc.raw.at("export_density").get<std::string>());
  if (rc.raw.contains("export_esd"))
    io::esd_to_csv(sample_block_spectrum(model, u, scfg, 0))
        .write_file(rc.raw.at("export_esd").get<std::string>());

  std::vector<double> w1s(static_cast<std::size_t>(samples));
  std::vector<double> rates(static_cast<std::size_t>(samples));
  std::vector<double> ex_right(static_cast<std::size_t>(samples));
  std::vector<double> ex_left(static_cast<std::size_t>(samples));
  detail::parallel_for(samples, rc.jobs, [&](int s) {
    const DiscreteMeasure esd = sample_block_spectrum(model, u, scfg, s);
    w1s[s] = wasserstein1(esd, rho);
    double rate = 0.0;
    for (std::size_t i = 0; i < esd.size(); ++i)
      rate += esd.weights()[i] * std::log(std::abs(esd.atoms()[i]));
    rates[s] = rate;
    ex_right[s] = esd.max_atom() - rho.right_edge;
    ex_left[s] = rho.left_edge - esd.min_atom();
  });

  double w1_max = 0.0, rate_mean = 0.0, exr = -1e300, exl = -1e300;
  for (int s = 0; s < samples; ++s) {
    w1_max = std::max(w1_max, w1s[s]);
    rate_mean += rates[s];
    exr = std::max(exr, ex_right[s]);
    exl = std::max(exl, ex_left[s]);
  }
  rate_mean /= samples;
  const double logdet_gap = std::abs(rate_mean - reference);
  const bool ok = w1_max < thr_w1 && logdet_gap < thr_logdet && exr < thr_outlier &&
                  exl < thr_outlier;

  io::write_json_file(rc.out_path,
                      json{{"w1_distance", w1_max},
                           {"logdet_gap", logdet_gap},
                           {"outlier_exceedances", json{{"right", exr}, {"left", exl}}},
                           {"seeds", samples},
                           {"thresholds",
                            json{{"w1", thr_w1}, {"logdet_gap", thr_logdet}, {"outlier", thr_outlier}}},
                           {"pass", ok}});
  return ok ? kOk : kViolation;
}

inline int cmd_landscape_demo(const RunConfig& rc) {
  json lcfg = rc.raw.value("landscape", json::object());
  CorrelatorSpec B;
  if (lcfg.contains("correlator")) {
    try {
      const json& bc = lcfg.at("correlator");
      B.c0 = bc.value("c0", 0.0);
      for (const json& term : bc.at("terms"))
        B.terms.push_back({term.at("amplitude").get<double>(), term.at("rate").get<double>()});
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed correlator: ") + e.what());
    }
  } else {
    B.c0 = 0.0;
    B.terms.push_back({1.0, std::sqrt(80.0)});  // B(r) = exp(-80 r)
  }
  B.validate();

  Eigen::Matrix2d D_base;
  D_base << 6.0, 0.0, 0.0, 1.0;
  if (lcfg.contains("D_base")) {
    const auto rows = lcfg.at("D_base").get<std::vector<std::vector<double>>>();
    if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2)
      throw ConfigError("D_base must be a 2x2 matrix");
    D_base << rows[0][0], rows[0][1], rows[1][0], rows[1][1];
  }
  std::vector<double> scales = lcfg.value("scales", std::vector<double>{0.0, 3.0, 6.0, 10.0});
  const double box = lcfg.value("box", 1.0);
  const int grid_n = lcfg.value("grid_n", 41);
  const int seeds = lcfg.value("seeds", 20);

  const LandscapeSampler sampler(B, box, grid_n);
  if (rc.raw.contains("export_field")) {
    const Eigen::VectorXd field = sampler.sample_field(rc.seed, 0);
    io::CsvWriter fcsv({"x", "y", "value"});
    for (int p = 0; p < field.size(); ++p) {
      const auto [x, y] = sampler.coords()[static_cast<std::size_t>(p)];
      fcsv.add_row({io::format_double(x), io::format_double(y), io::format_double(field(p))});
    }
    fcsv.write_file(rc.raw.at("export_field").get<std::string>());
  }
  io::CsvWriter csv({"scale", "seed", "minima"});
  std::vector<double> means;
  for (double scale : scales) {
    const Eigen::Matrix2d D = scale * D_base;
    double mean = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const int count = sampler.count_minima(D, rc.seed, s);
      mean += count;
      csv.add_row({io::format_double(scale), std::to_string(s), std::to_string(count)});
    }
    means.push_back(mean / seeds);
  }
  csv.write_file(rc.out_path);

  bool monotone = true;
  for (std::size_t i = 0; i + 1 < means.size(); ++i)
    if (means[i + 1] > means[i] + 1e-12) monotone = false;
  json verdict{{"means", means},
               {"monotone_non_increasing", monotone},
               {"jitter_applied", sampler.jitter_applied()}};
  std::cout << verdict.dump() << std::endl;
  return monotone ? kOk : kViolation;
}

inline int dispatch(const std::string& command, const RunConfig& rc) {
  if (command == "phase") return cmd_phase(rc);
  if (command == "thresholds") return cmd_thresholds(rc);
  if (command == "fit-critical") return cmd_fit_critical(rc);
  if (command == "mc-validate") return cmd_mc_validate(rc);
  if (command == "landscape-demo") return cmd_landscape_demo(rc);
  throw ConfigError("unknown command: " + command);
}

// Shared entry point for the binary and the tests. Maps exceptions onto the
// documented exit codes and emits a machine-readable error JSON on stderr.
inline int run(const std::string& command, const std::string& config_path,
               const std::string& out_path, std::optional<std::uint64_t> seed_override,
               int jobs) {
  try {
    RunConfig rc;
    rc.raw = io::read_json_file(config_path);
    rc.out_path = out_path;
    rc.seed = seed_override ? *seed_override : rc.raw.value("seed", 0ull);
    if (const char* env = std::getenv("ATLAS_JOBS")) {
      try {
        jobs = std::stoi(env);
      } catch (...) {
        throw ConfigError("ATLAS_JOBS is not an integer");
      }
    } else if (jobs <= 0) {
      jobs = rc.raw.value("jobs", 1);
    }
    rc.jobs = std::max(1, jobs);
    return dispatch(command, rc);
  } catch (const ConfigError& e) {
    std::cerr << json{{"error", {{"type", "config"}, {"message", e.what()}}}}.dump()
              << std::endl;
    return kConfig;
  } catch (const SolverError& e) {
    std::cerr << json{{"error",
                       {{"type", "numerical"}, {"message", e.what()}, {"residual", e.residual()}}}}
                     .dump()
              << std::endl;
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", {{"type", "config"}, {"message", e.what()}}}}.dump()
              << std::endl;
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"type", "numerical"}, {"message", e.what()}}}}.dump()
              << std::endl;
    return kNumerical;
  }
}

}  // namespace atlas::cli
