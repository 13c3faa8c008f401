// Internal raster morphology helpers: exact Euclidean distance transforms,
// disk structuring elements, and binary open/close with explicit boundary
// padding.  Masks are row-major uint8 over an nx by ny cell grid.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace modeforge::morph {

struct Offset {
  int di;
  int dj;
};

// Offsets (di, dj) with hypot(di, dj) strictly below radius_cells.  A radius
// at or below 1 yields only the origin.
std::vector<Offset> disk_offsets(double radius_cells);

// Squared Euclidean distance from each cell centre to the nearest cell where
// mask is nonzero, in cell units.  Cells with mask nonzero get 0.  If the
// mask is empty everywhere the distances come back huge (>= 1e18).
std::vector<double> edt_squared(const std::vector<std::uint8_t>& mask, int nx,
                                int ny);

// Signed distance to the solid/void interface in cell units, positive
// inside the solid phase.  Cell centres sit half a cell from the boundary
// between opposite-phase neighbours.
std::vector<double> signed_distance_cells(
    const std::vector<std::uint8_t>& solid, int nx, int ny);

// Erosion: out(p) = AND over offsets of in(p + o); reads outside the grid
// return pad.  Dilation is the OR analogue.
std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& mask, int nx,
                                int ny, const std::vector<Offset>& se,
                                bool pad);
std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int nx,
                                 int ny, const std::vector<Offset>& se,
                                 bool pad);

// Opening of the foreground phase with the foreground assumed to continue
// past the boundary (pad = true keeps a uniform mask invariant).
std::vector<std::uint8_t> open_phase(const std::vector<std::uint8_t>& mask,
                                     int nx, int ny,
                                     const std::vector<Offset>& se);

// Number of 4-connected components of nonzero cells; optionally collects one
// representative cell index per component.
int count_components_4(const std::vector<std::uint8_t>& mask, int nx, int ny,
                       std::vector<int>* representatives = nullptr);

}  // namespace modeforge::morph
