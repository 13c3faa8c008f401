#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modeforge/design.hpp"
#include "modeforge/fdfd.hpp"
#include "modeforge/grid.hpp"

namespace modeforge {

// Canonical device layouts.  All sit on a square domain with the design
// block centred between an input and an output waveguide section:
//   straight  one multimode guide straight through, no design block logic
//   mbs       transverse-mode beamsplitter: one 1.0 um guide each side,
//             ports 1/2 = TE0/TE1 in, ports 3/4 = TE0/TE1 out
//   mdm       mode multiplexer: two 0.5 um single-mode inputs (ports 1, 2),
//             one 1.0 um output, ports 3/4 = TE0/TE1 out
//   tritter   three-mode mixer on 1.8 um guides, ports 1-3 in, 4-6 out
enum class GeometryKind { Straight, Mbs, Mdm, Tritter };

GeometryKind parse_geometry(const std::string& name);
const char* geometry_name(GeometryKind kind);

struct GeometryLayout {
  GeometryKind kind = GeometryKind::Mbs;
  Grid2D grid;
  PmlSpec pml;
  DesignRegion region;  // densities 0.5, connection stubs frozen solid
  std::vector<Port> ports;
  std::vector<std::uint8_t> occupancy;  // background solid mask, full grid
  double eps_lo = 0.0;
};

// Grid, ports, background occupancy, and design block for a device on a
// square domain of the given physical size and cell pitch.
GeometryLayout make_layout(GeometryKind kind, double domain, double dx);

// Background permittivity at one wavelength; the core value follows the
// slab dispersion.
PermittivityMap layout_background(const GeometryLayout& layout,
                                  double wavelength);

TargetSet default_targets(GeometryKind kind);

// Assembles the optimizer input.  init_noise adds a seeded, spatially
// smoothed perturbation to the free starting densities; the mode-mixing
// targets are unreachable from a mirror-symmetric state, so a symmetric
// start would stall on them.
DesignProblem make_design_problem(const GeometryLayout& layout,
                                  const std::vector<double>& wavelengths,
                                  const TargetSet& targets, double init_noise,
                                  std::uint64_t seed);

}  // namespace modeforge
