// Sweeps the elastic-manifold phase diagram in (mu0, b) and prints a CSV of
// complexity values to stdout, with the Larkin-mass boundary in the last
// column. Pipe into your plotting tool of choice.

#include <cstdio>

#include "atlas/complexity.hpp"

int main() {
  using namespace atlas;
  const int L = 2, d = 1;
  const double t0 = 1.0;

  std::printf("mu0,b,sigma_tot,sigma_min,phase,mu_c\n");
  for (int i = 1; i <= 24; ++i) {
    const double mu0 = 0.25 * i;
    for (int j = 1; j <= 24; ++j) {
      const double b = 0.5 * j;
      const ElasticManifoldModel model(LatticeSpec(L, d, t0, mu0), b);
      const ComplexityResult r = sigma_elastic(model);
      std::printf("%.6g,%.6g,%.10g,%.10g,%s,%.10g\n", mu0, b, r.sigma_tot, r.sigma_min,
                  r.phase == Phase::simple ? "simple" : "glassy", r.threshold);
    }
  }
  return 0;
}
