#include "modeforge/bias.hpp"

#include <algorithm>
#include <cmath>

#include "modeforge/errors.hpp"
#include "modeforge/hom.hpp"
#include "modeforge/modes.hpp"
#include "modeforge/parallel.hpp"
#include "morphology.hpp"

namespace modeforge {

PermittivityMap apply_bias(const PermittivityMap& map, double bias,
                           double min_feature) {
  map.validate();
  require(std::isfinite(bias), ErrorKind::Config, "bias must be finite");
  if (bias == 0.0) return map;
  require(min_feature > 0.0, ErrorKind::Config,
          "bias needs a positive minimum feature for its guard");
  require(std::fabs(bias) <= 0.5 * min_feature, ErrorKind::Config,
          "|bias| above half the minimum feature would erase features");

  const double lo = *std::min_element(map.eps.begin(), map.eps.end());
  const double mid = 0.5 * (lo + map.eps_core);
  const int nx = map.grid.nx, ny = map.grid.ny;
  std::vector<std::uint8_t> solid(map.eps.size());
  for (std::size_t c = 0; c < map.eps.size(); ++c)
    solid[c] = map.eps[c] >= mid ? 1 : 0;

  const auto phi = morph::signed_distance_cells(solid, nx, ny);
  const double bias_cells = bias / map.grid.dx;
  PermittivityMap out = map;
  for (std::size_t c = 0; c < out.eps.size(); ++c)
    out.eps[c] = (phi[c] >= -bias_cells) ? map.eps_core : lo;
  return out;
}

std::vector<BiasSweepPoint> sweep_bias(const PermittivityMap& design,
                                       GeometryKind kind,
                                       const std::vector<double>& biases,
                                       const std::vector<double>& wavelengths,
                                       double min_feature, double i0,
                                       int threads) {
  design.validate();
  require(!biases.empty() && !wavelengths.empty(), ErrorKind::Config,
          "bias and wavelength lists must be non-empty");
  require(kind == GeometryKind::Mbs || kind == GeometryKind::Mdm,
          ErrorKind::Config,
          "interference metrics need a two-in two-out geometry");

  const GeometryLayout layout =
      make_layout(kind, design.grid.nx * design.grid.dx, design.grid.dx);
  require(layout.grid.nx == design.grid.nx && layout.grid.ny == design.grid.ny,
          ErrorKind::Config, "design grid does not match the geometry");
  const double lo = *std::min_element(design.eps.begin(), design.eps.end());

  const std::size_t nb = biases.size(), nw = wavelengths.size();
  std::vector<BiasSweepPoint> points(nb * nw);
  parallel_for(nb * nw, threads, [&](std::size_t k) {
    BiasSweepPoint& pt = points[k];
    pt.bias = biases[k / nw];
    pt.wavelength = wavelengths[k % nw];
    try {
      const PermittivityMap biased = apply_bias(design, pt.bias, min_feature);
      const double mid = 0.5 * (lo + biased.eps_core);

      // The fabricated geometry is wavelength-independent; the core
      // permittivity follows the slab dispersion at each wavelength.
      PermittivityMap at_wl;
      at_wl.grid = design.grid;
      const double n_eff = effective_core_index(pt.wavelength);
      at_wl.eps_core = n_eff * n_eff;
      at_wl.eps.resize(biased.eps.size());
      for (std::size_t c = 0; c < biased.eps.size(); ++c)
        at_wl.eps[c] = biased.eps[c] >= mid ? at_wl.eps_core : lo;

      const auto mats = compute_smatrix(at_wl, layout.ports,
                                        {pt.wavelength}, layout.pml, 1);
      pt.smatrix = mats.front();
      const BeamsplitterMatrix bs = from_smatrix(pt.smatrix);
      pt.eta_eff = effective_splitting_ratio(bs);
      pt.alpha = bs.alpha();
      pt.v_max = predict_visibility(bs, i0);
    } catch (const Error& e) {
      pt.failed = true;
      pt.error = e.what();
    }
  });
  return points;
}

}  // namespace modeforge
