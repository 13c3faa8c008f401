#pragma once

#include <string>
#include <vector>

#include "modeforge/fdfd.hpp"
#include "modeforge/geometry.hpp"
#include "modeforge/grid.hpp"

namespace modeforge {

// Uniform fabrication bias: the solid phase grows by `bias` metres (shrinks
// for negative bias) via signed-distance thresholding of the binarized map.
// Zero bias returns the input bit for bit.  |bias| is capped at half the
// stated minimum feature so features cannot vanish outright.
PermittivityMap apply_bias(const PermittivityMap& map, double bias,
                           double min_feature);

struct BiasSweepPoint {
  double bias = 0.0;
  double wavelength = 0.0;
  bool failed = false;
  std::string error;
  double eta_eff = 0.0;
  double alpha = 0.0;
  double v_max = 0.0;  // predicted visibility at the sweep overlap i0
  ScatteringMatrix smatrix;
};

// Re-simulates the design across the bias and wavelength lattice.  Each
// biased geometry is re-materialized at each wavelength with the dispersive
// core permittivity before solving; v_max uses the photon overlap i0.  A
// failed point is recorded and the sweep continues.
std::vector<BiasSweepPoint> sweep_bias(const PermittivityMap& design,
                                       GeometryKind kind,
                                       const std::vector<double>& biases,
                                       const std::vector<double>& wavelengths,
                                       double min_feature, double i0,
                                       int threads);

}  // namespace modeforge
