#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "modeforge/design.hpp"
#include "modeforge/geometry.hpp"

namespace modeforge {

// Flat key=value run configuration.  Unknown keys are rejected by name and
// line.  `preset=A|B|C` loads a bundle and must precede any other key;
// later keys override the preset's values.
struct RunConfig {
  GeometryKind geometry = GeometryKind::Mbs;
  double domain = 7e-6;
  double dx = 44e-9;
  std::vector<double> wavelengths = {1550e-9};
  double min_feature = 120e-9;
  double filter_radius = 0.0;  // 0 selects min_feature / 2
  int continuous_iterations = 60;
  int levelset_iterations = 20;
  std::array<double, 3> beta_schedule{8.0, 16.0, 32.0};
  double step = 0.1;
  double init_noise = 0.15;
  std::uint64_t seed = 7;
  int threads = 0;
  void validate() const;
};

// Named bundles: A relaxes fabrication (120 nm at 1550 nm), B tightens it
// (80 nm), C adds wavelength corners (80 nm at 1500/1550/1600 nm).
RunConfig preset_config(const std::string& name);

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin);
RunConfig parse_config_file(const std::string& path);

// Every key written out explicitly; parsing the echo reproduces the config.
std::string resolved_config_text(const RunConfig& cfg);

// "1550", "1500,1550,1600", or "1500:50:1600", with an optional nm/um/ps
// suffix overriding default_scale.  Ranges must divide evenly.
std::vector<double> parse_number_list(const std::string& text,
                                      double default_scale);

struct RunSummary {
  double f_initial = 0.0;
  double f_final = 0.0;
  int iterations = 0;
  FeatureReport feature;
  std::vector<ScatteringMatrix> smatrices;
};

// The optimize pipeline: builds the problem, runs both stages, and writes
// design.eps (+ .bin sidecar), trace.csv, smatrix.csv, and resolved.cfg
// into out_dir.
RunSummary run_optimize(const RunConfig& cfg, const std::string& out_dir);

// Problem construction shared by the optimizer and the gradient probe.
DesignProblem build_problem(const RunConfig& cfg);
OptimizationConfig optimizer_config(const RunConfig& cfg);

}  // namespace modeforge
