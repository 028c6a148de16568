#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "atlas/complexity.hpp"
#include "atlas/measures.hpp"
#include "atlas/montecarlo.hpp"

namespace atlas::io {

using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// shortest round-trip decimal representation
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Measure schema:
//   {"type":"discrete","atoms":[...],"weights":[...]}
//   {"type":"delta","mu":x}
//   {"type":"semicircle","mean":m,"variance":v}   (512 quantile atoms)
//   {"type":"lattice","L":..,"d":..,"t0":..,"mu0":..}
inline DiscreteMeasure measure_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "discrete") {
      return DiscreteMeasure(j.at("atoms").get<std::vector<double>>(),
                             j.at("weights").get<std::vector<double>>());
    }
    if (type == "delta") return DiscreteMeasure::delta(j.at("mu").get<double>());
    if (type == "semicircle")
      return DiscreteMeasure::semicircle(j.at("mean").get<double>(),
                                         j.at("variance").get<double>());
    if (type == "lattice") {
      const LatticeSpec spec(j.at("L").get<int>(), j.at("d").get<int>(),
                             j.at("t0").get<double>(), j.at("mu0").get<double>());
      return laplacian_spectrum(spec, /*include_mass=*/true);
    }
    throw ConfigError("unknown measure type: " + type);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed measure JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid measure: ") + e.what());
  }
}

inline json measure_to_json(const DiscreteMeasure& mu) {
  return json{{"type", "discrete"}, {"atoms", mu.atoms()}, {"weights", mu.weights()}};
}

inline json complexity_result_to_json(const ComplexityResult& r) {
  json j{{"sigma_tot", r.sigma_tot},
         {"sigma_min", r.sigma_min},
         {"u_star_tot", r.u_star_tot},
         {"u_star_min", r.u_star_min},
         {"phase", r.phase == Phase::simple ? "simple" : "glassy"},
         {"threshold", r.threshold}};
  if (r.aux) j["aux"] = json{{"c", r.aux->c}, {"v", r.aux->v}, {"y_t", r.aux->y_t}};
  return j;
}

// CSV helpers: comma-separated, header row, LF endings, full precision.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size())
      throw std::invalid_argument("CsvWriter: row width mismatch");
    rows_.push_back(cells);
  }

  std::string str() const {
    std::ostringstream os;
    write_line(os, header_);
    for (const auto& r : rows_) write_line(os, r);
    return os.str();
  }

  void write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open output path: " + path);
    f << str();
  }

 private:
  static void write_line(std::ostringstream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      os << cells[i];
    }
    os << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output path: " + path);
  f << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

inline CsvWriter density_to_csv(const GriddedDensity& g) {
  CsvWriter csv({"x", "rho"});
  for (std::size_t j = 0; j < g.size(); ++j)
    csv.add_row({format_double(g.node(j)), format_double(g.values[j])});
  return csv;
}

inline CsvWriter esd_to_csv(const DiscreteMeasure& mu) {
  CsvWriter csv({"eigenvalue", "weight"});
  for (std::size_t i = 0; i < mu.size(); ++i)
    csv.add_row({format_double(mu.atoms()[i]), format_double(mu.weights()[i])});
  return csv;
}

}  // namespace atlas::io
