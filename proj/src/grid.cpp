#include "modeforge/grid.hpp"

#include <cmath>
#include <string>

#include "modeforge/errors.hpp"

namespace modeforge {

void Grid2D::validate() const {
  require(nx >= 8 && ny >= 8, ErrorKind::Config,
          "grid must be at least 8x8 cells, got " + std::to_string(nx) + "x" +
              std::to_string(ny));
  require(dx > 0.0 && std::isfinite(dx), ErrorKind::Config,
          "grid pitch must be positive");
}

void PermittivityMap::validate() const {
  grid.validate();
  require(eps.size() == grid.cell_count(), ErrorKind::Invalid,
          "permittivity array size does not match grid");
  require(eps_core >= 1.0 && std::isfinite(eps_core), ErrorKind::Config,
          "eps_core must be finite and >= 1");
  const double tol = 1e-9 * eps_core;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const double e = eps[k];
    require(std::isfinite(e), ErrorKind::Config,
            "permittivity must be finite at cell " + std::to_string(k));
    require(e >= 1.0 - tol && e <= eps_core + tol, ErrorKind::Config,
            "permittivity " + std::to_string(e) + " outside [1, eps_core] at cell " +
                std::to_string(k));
  }
}

}  // namespace modeforge
