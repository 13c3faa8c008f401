#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "modeforge/grid.hpp"
#include "modeforge/modes.hpp"

namespace modeforge {

using Complex = std::complex<double>;

// Stretched-coordinate PML, polynomial conductivity grading.  sigma_max
// scales the analytic optimum for a 1e-8 power-reflection target.
struct PmlSpec {
  int thickness = 12;
  double sigma_max = 1.0;
  int order = 2;
  void validate() const;  // thickness >= 8, sigma_max > 0, order in [2, 4]
};

enum class Axis { X, Y };

// A mode port: a grid plane normal to `axis`, a transverse span of cells, a
// propagation sense, and the transverse mode order it launches or monitors.
struct Port {
  int id = 0;  // user-facing port number
  Axis axis = Axis::X;
  int plane = 0;                    // i for Axis::X, j for Axis::Y
  int span_begin = 0, span_end = 0;  // transverse cell range [begin, end)
  int direction = +1;                // +1 toward +axis, -1 toward -axis
  int mode_order = 0;
  bool is_source = false;

  [[nodiscard]] int span_size() const { return span_end - span_begin; }
  void validate(const Grid2D& grid, const PmlSpec& pml) const;
};

struct FieldMap {
  Grid2D grid;
  std::vector<Complex> values;
};

// Complex S-parameters at one wavelength, entries indexed (monitor, source)
// by position in the id lists.  |S|^2 is a power fraction.
struct ScatteringMatrix {
  double wavelength = 0.0;
  std::vector<int> source_ids;
  std::vector<int> monitor_ids;
  std::vector<Complex> entries;  // row-major monitor x source

  [[nodiscard]] Complex at(int monitor_id, int source_id) const;
  void validate() const;  // passivity and finiteness
};

// Discrete transverse mode living on a port span: the exact propagating
// solution of the assembled operator in a straight guide is
// field[t] * z^(i - plane), which makes injection and directional overlap
// exact at machine precision.
struct PortMode {
  std::vector<double> field;  // L2-normalized over the span
  double n_eff = 0.0;         // sqrt(mu)/k0 of the on-grid eigenvalue
  double beta_tilde = 0.0;    // discrete propagation constant
  Complex z;                  // exp(i*beta_tilde*dx)
  double flux = 0.0;          // power carried per unit squared amplitude
};

// Assembled and factorized Helmholtz operator.  Immutable after
// construction; concurrent solves are safe.
class LinearSystem {
 public:
  [[nodiscard]] std::size_t dimension() const;
  [[nodiscard]] double k0() const;
  [[nodiscard]] const Grid2D& grid() const;

  // Direct solve; relative residual is verified against 1e-8 and written
  // to residual_out when given.
  [[nodiscard]] std::vector<Complex> solve(const std::vector<Complex>& rhs,
                                           double* residual_out = nullptr) const;

  // d(operator)/d(eps at cell c) is this value times the unit matrix at
  // (c, c); used by the adjoint gradient.
  [[nodiscard]] Complex eps_derivative_scale(std::size_t cell) const;

  struct Impl;
  explicit LinearSystem(std::shared_ptr<const Impl> impl);

 private:
  std::shared_ptr<const Impl> impl_;
};

LinearSystem assemble_system(const PermittivityMap& eps_map, double wavelength,
                             const PmlSpec& pml);

// On-grid transverse eigenmode at the port plane of eps_map.  Fails with a
// solver error when no guided mode of the requested order exists there.
PortMode resolve_port_mode(const PermittivityMap& eps_map, const Port& port,
                           double wavelength);

// Conversions between the solver's span-local modes and the public profile
// type (unit-power normalization, n_eff carried through).
ModeProfile to_mode_profile(const PortMode& mode, const Grid2D& grid, int mode_order);
PortMode to_port_mode(const ModeProfile& mode, const Grid2D& grid, double wavelength);

// One-sided mode injection: a two-plane source that launches `mode` along
// port.direction with power |amplitude|^2.  The ModeProfile form needs the
// wavelength to map n_eff onto the grid dispersion.
std::vector<Complex> mode_source(const Grid2D& grid, const Port& port,
                                 const PortMode& mode, Complex amplitude);
std::vector<Complex> mode_source(const Grid2D& grid, const Port& port,
                                 const ModeProfile& mode, Complex amplitude,
                                 double wavelength);

// Directional modal amplitude at the port plane; |result|^2 is the power
// carried by `mode` through the plane in port.direction.
Complex measure_overlap(const FieldMap& field, const Port& port,
                        const PortMode& mode);
Complex measure_overlap(const FieldMap& field, const Port& port,
                        const ModeProfile& mode, double wavelength);

// One forward solve per (wavelength, source); modes are resolved from
// mode_eps (defaults to eps_map itself).  Distinct wavelengths run in
// parallel under `threads` workers.
std::vector<ScatteringMatrix> compute_smatrix(const PermittivityMap& eps_map,
                                              const std::vector<Port>& ports,
                                              const std::vector<double>& wavelengths,
                                              const PmlSpec& pml, int threads = 0);
std::vector<ScatteringMatrix> compute_smatrix(const PermittivityMap& eps_map,
                                              const std::vector<Port>& ports,
                                              const std::vector<double>& wavelengths,
                                              const PmlSpec& pml,
                                              const PermittivityMap& mode_eps,
                                              int threads = 0);

}  // namespace modeforge
