#pragma once

#include <cstddef>
#include <vector>

namespace modeforge {

// Uniform square-cell grid.  Cell (i, j) sits at physical position
// (origin_x + i*dx, origin_y + j*dx); i runs along the propagation axis x,
// j along the transverse axis y.  Storage is row-major with index j*nx + i.
struct Grid2D {
  int nx = 0;
  int ny = 0;
  double dx = 0.0;       // metres
  double origin_x = 0.0;  // metres, position of cell (0,0)
  double origin_y = 0.0;

  [[nodiscard]] std::size_t cell_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }
  [[nodiscard]] std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) +
           static_cast<std::size_t>(i);
  }

  // nx, ny >= 8 and dx > 0; the per-wavelength resolution guard lives at the
  // solver entry points where wavelength and peak index are known.
  void validate() const;
};

// Relative permittivity per cell.  eps_core is the material ceiling (the
// squared effective core index at the map's reference wavelength); every cell
// must lie in [1, eps_core].
struct PermittivityMap {
  Grid2D grid;
  std::vector<double> eps;
  double eps_core = 0.0;

  [[nodiscard]] double at(int i, int j) const { return eps[grid.idx(i, j)]; }
  double& at(int i, int j) { return eps[grid.idx(i, j)]; }

  void validate() const;
};

}  // namespace modeforge
