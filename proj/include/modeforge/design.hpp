#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "modeforge/fdfd.hpp"
#include "modeforge/grid.hpp"

namespace modeforge {

// Rectangular block of optimizable cells inside a grid.  Densities are
// row-major over the block, d in [0, 1]; frozen cells keep their density
// through every optimizer stage.
struct DesignRegion {
  int i0 = 0, j0 = 0;
  int ni = 0, nj = 0;
  std::vector<double> p;
  std::vector<std::uint8_t> frozen;
  double eps_lo = 1.0;

  [[nodiscard]] std::size_t cell_count() const {
    return static_cast<std::size_t>(ni) * static_cast<std::size_t>(nj);
  }
  [[nodiscard]] std::size_t local_idx(int li, int lj) const {
    return static_cast<std::size_t>(lj) * ni + li;
  }
  void validate(const Grid2D& grid) const;
};

// Every listed entry contributes (target - |S_entry|)^2 to the objective at
// each wavelength; wavelengths are summed.
struct TargetSet {
  struct Entry {
    int monitor = 0;
    int source = 0;
    double target = 0.0;
  };
  std::vector<Entry> entries;
  void validate() const;
};

double objective_general(const std::vector<ScatteringMatrix>& smatrices,
                         const TargetSet& targets);

// Device-specific figures of merit over the canonical port numbering.
double objective_mbs(const ScatteringMatrix& s);
double objective_mdm(const ScatteringMatrix& s);
double objective_tritter(const ScatteringMatrix& s);
TargetSet targets_mbs();
TargetSet targets_mdm();
TargetSet targets_tritter();

// Everything the optimizer needs: per-wavelength backgrounds (identical
// occupancy, dispersive core permittivity), ports resolved against those
// backgrounds, and the design block with its starting densities.
struct DesignProblem {
  std::vector<double> wavelengths;
  std::vector<PermittivityMap> backgrounds;
  std::vector<Port> ports;
  PmlSpec pml;
  DesignRegion region;
  TargetSet targets;
  void validate() const;
};

struct TraceEntry {
  int iter = 0;
  std::string stage;
  double f = 0.0;
  double max_residual = 0.0;
  double wall_ms = 0.0;
  double beta = 0.0;  // projection sharpness in effect, not serialized
};
using OptimizationTrace = std::vector<TraceEntry>;

struct FeatureReport {
  bool pass = true;
  double min_feature = 0.0;
  int solid_violations = 0;
  int void_violations = 0;
  std::vector<int> cells;  // one representative grid cell per violation
};

struct OptimizationConfig {
  int continuous_iterations = 60;
  int levelset_iterations = 20;
  double min_feature = 120e-9;
  double filter_radius = 0.0;  // 0 selects min_feature / 2
  std::array<double, 3> beta_schedule{8.0, 16.0, 32.0};
  double step = 0.1;
  double divergence_factor = 10.0;
  int threads = 0;
  void validate() const;
};

struct OptimizationResult {
  DesignRegion region;  // final densities; binary unless zero iterations ran
  PermittivityMap eps;  // materialized at wavelengths[0]
  OptimizationTrace trace;
  double f_initial = 0.0;
  double f_final = 0.0;
  FeatureReport feature;
};

// Filter + projection materialization of `densities` onto background w.
// beta below 1e-8 means the projection is the identity.
PermittivityMap materialize(const DesignProblem& problem, std::size_t w,
                            const std::vector<double>& densities,
                            double filter_radius, double beta);

// Binary materialization of an occupancy mask over the region.
PermittivityMap materialize_binary(const DesignProblem& problem, std::size_t w,
                                   const std::vector<std::uint8_t>& solid);

struct GradientResult {
  double f = 0.0;
  std::vector<double> grad;  // df/d(density), frozen entries zeroed
  double max_residual = 0.0;
};

// Objective and its adjoint gradient in one pass: per wavelength one
// factorization, one forward solve per source, one adjoint solve per source.
GradientResult objective_and_gradient(const DesignProblem& problem,
                                      const std::vector<double>& densities,
                                      double filter_radius, double beta,
                                      int threads);

// Two-stage inverse design: density stage (cone filter, tanh projection with
// scheduled sharpness, projected Barzilai-Borwein steps with Armijo
// backtracking) followed by a signed-distance levelset stage, then
// morphological open-close regularization and a hard threshold.  Aborts with
// a solver error when the objective exceeds divergence_factor times its
// starting value.  With zero iterations in both stages the input densities
// come back untouched and the trace is empty.
OptimizationResult run_optimization(const DesignProblem& problem,
                                    const OptimizationConfig& config);

// Central finite-difference probe of the adjoint gradient at `samples`
// deterministic cells; returns the worst relative disagreement.
double validate_gradient(const DesignProblem& problem,
                         const OptimizationConfig& config, int samples,
                         double fd_step);

// Minimum-feature audit of both phases: a solid or void region thinner than
// min_feature anywhere counts as one violation per connected component.
FeatureReport feature_size_check(const PermittivityMap& map,
                                 double min_feature);

}  // namespace modeforge
