#include "modeforge/fdfd.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "modeforge/errors.hpp"
#include "modeforge/parallel.hpp"

namespace modeforge {

void PmlSpec::validate() const {
  require(thickness >= 8, ErrorKind::Config, "PML thickness must be >= 8 cells");
  require(sigma_max > 0.0 && std::isfinite(sigma_max), ErrorKind::Config,
          "PML sigma_max must be positive");
  require(order >= 2 && order <= 4, ErrorKind::Config,
          "PML grading order must lie in [2, 4]");
}

void Port::validate(const Grid2D& grid, const PmlSpec& pml) const {
  const int n_axis = (axis == Axis::X) ? grid.nx : grid.ny;
  const int n_trans = (axis == Axis::X) ? grid.ny : grid.nx;
  const int t = pml.thickness;
  require(direction == 1 || direction == -1, ErrorKind::Config,
          "port direction must be +1 or -1");
  require(mode_order >= 0, ErrorKind::Config, "port mode order must be >= 0");
  require(span_end - span_begin >= 3, ErrorKind::Config,
          "port span must cover at least 3 cells");
  // The two-plane source and monitor use planes `plane` and its neighbours,
  // all of which must sit strictly inside the non-PML interior.
  require(plane - 1 > t && plane + 1 < n_axis - 1 - t, ErrorKind::Config,
          "port plane too close to the PML");
  require(span_begin > t && span_end < n_trans - t, ErrorKind::Config,
          "port span must lie strictly inside the non-PML interior");
}

Complex ScatteringMatrix::at(int monitor_id, int source_id) const {
  const auto mi = std::find(monitor_ids.begin(), monitor_ids.end(), monitor_id);
  const auto si = std::find(source_ids.begin(), source_ids.end(), source_id);
  require(mi != monitor_ids.end() && si != source_ids.end(), ErrorKind::Config,
          "missing S-matrix entry for monitor " + std::to_string(monitor_id) +
              ", source " + std::to_string(source_id));
  const std::size_t row = static_cast<std::size_t>(mi - monitor_ids.begin());
  const std::size_t col = static_cast<std::size_t>(si - source_ids.begin());
  return entries[row * source_ids.size() + col];
}

void ScatteringMatrix::validate() const {
  require(entries.size() == monitor_ids.size() * source_ids.size(),
          ErrorKind::Invalid, "S-matrix entry count mismatch");
  for (std::size_t s = 0; s < source_ids.size(); ++s) {
    double total = 0.0;
    for (std::size_t m = 0; m < monitor_ids.size(); ++m) {
      const Complex v = entries[m * source_ids.size() + s];
      require(std::isfinite(v.real()) && std::isfinite(v.imag()),
              ErrorKind::Solver, "non-finite S-matrix entry");
      total += std::norm(v);
    }
    require(total <= 1.0 + 1e-6, ErrorKind::Solver,
            "passivity violated for source " + std::to_string(source_ids[s]) +
                ": sum |S|^2 = " + std::to_string(total));
  }
}

namespace {

// Stretched-coordinate factors s = 1 + i*sigma(depth), graded as
// sigma_max * sigma_opt * (d/L)^order with sigma_opt targeting 1e-8
// round-trip power reflection at normal incidence.
struct StretchProfile {
  std::vector<Complex> center;  // size n
  std::vector<Complex> face;    // size n+1, face i sits between cells i-1 and i
};

StretchProfile make_stretch(int n, double dx, double k0, const PmlSpec& pml) {
  const double L = pml.thickness * dx;
  const double sigma_opt =
      (pml.order + 1) * std::log(1e8) / (4.0 * k0 * L);
  const double peak = pml.sigma_max * sigma_opt;
  const double t = static_cast<double>(pml.thickness);

  const auto sigma_at = [&](double pos_cells) {
    double depth = 0.0;
    if (pos_cells < t)
      depth = t - pos_cells;
    else if (pos_cells > static_cast<double>(n) - t)
      depth = pos_cells - (static_cast<double>(n) - t);
    else
      return 0.0;
    return peak * std::pow(depth / t, static_cast<double>(pml.order));
  };

  StretchProfile out;
  out.center.resize(n);
  out.face.resize(n + 1);
  for (int i = 0; i < n; ++i)
    out.center[i] = Complex(1.0, sigma_at(static_cast<double>(i) + 0.5));
  for (int i = 0; i <= n; ++i)
    out.face[i] = Complex(1.0, sigma_at(static_cast<double>(i)));
  return out;
}

std::size_t cell_index(const Grid2D& grid, Axis axis, int plane, int t) {
  return (axis == Axis::X) ? grid.idx(plane, t) : grid.idx(t, plane);
}

}  // namespace

struct LinearSystem::Impl {
  Grid2D grid;
  double k0 = 0.0;
  Eigen::SparseMatrix<Complex> A;
  Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu;
  std::vector<Complex> sxsy;
  mutable std::mutex solve_mutex;
};

LinearSystem::LinearSystem(std::shared_ptr<const Impl> impl)
    : impl_(std::move(impl)) {}

std::size_t LinearSystem::dimension() const { return impl_->grid.cell_count(); }
double LinearSystem::k0() const { return impl_->k0; }
const Grid2D& LinearSystem::grid() const { return impl_->grid; }

Complex LinearSystem::eps_derivative_scale(std::size_t cell) const {
  return impl_->k0 * impl_->k0 * impl_->sxsy[cell];
}

std::vector<Complex> LinearSystem::solve(const std::vector<Complex>& rhs,
                                         double* residual_out) const {
  const std::size_t n = dimension();
  require(rhs.size() == n, ErrorKind::Invalid,
          "rhs dimension does not match system");
  const Eigen::Map<const Eigen::VectorXcd> b(rhs.data(),
                                             static_cast<Eigen::Index>(n));
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    if (residual_out) *residual_out = 0.0;
    return std::vector<Complex>(n, Complex(0.0, 0.0));
  }

  Eigen::VectorXcd x;
  {
    std::lock_guard<std::mutex> lock(impl_->solve_mutex);
    x = impl_->lu.solve(b);
  }
  const double resid = (impl_->A * x - b).norm() / bnorm;
  if (residual_out) *residual_out = resid;
  require(std::isfinite(resid) && resid <= 1e-8, ErrorKind::Solver,
          "linear solve residual " + std::to_string(resid) +
              " above tolerance 1e-8");
  return std::vector<Complex>(x.data(), x.data() + n);
}

LinearSystem assemble_system(const PermittivityMap& eps_map, double wavelength,
                             const PmlSpec& pml) {
  eps_map.validate();
  pml.validate();
  require(wavelength > 0.0 && std::isfinite(wavelength), ErrorKind::Config,
          "wavelength must be positive");
  const Grid2D& g = eps_map.grid;
  require(g.nx > 2 * pml.thickness + 4 && g.ny > 2 * pml.thickness + 4,
          ErrorKind::Config, "grid too small for the PML thickness");

  double eps_max = 1.0;
  for (double e : eps_map.eps) eps_max = std::max(eps_max, e);
  const double n_max = std::sqrt(eps_max);
  require(g.dx <= wavelength / (10.0 * n_max), ErrorKind::Config,
          "resolution guard: dx must satisfy dx <= wavelength/(10*n_max)");

  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double inv_dx2 = 1.0 / (g.dx * g.dx);
  const StretchProfile sx = make_stretch(g.nx, g.dx, k0, pml);
  const StretchProfile sy = make_stretch(g.ny, g.dx, k0, pml);

  auto impl = std::make_shared<LinearSystem::Impl>();
  impl->grid = g;
  impl->k0 = k0;
  impl->sxsy.resize(g.cell_count());

  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(5 * g.cell_count());
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const auto row = static_cast<Eigen::Index>(g.idx(i, j));
      const Complex cx_lo = sy.center[j] / sx.face[i] * inv_dx2;
      const Complex cx_hi = sy.center[j] / sx.face[i + 1] * inv_dx2;
      const Complex cy_lo = sx.center[i] / sy.face[j] * inv_dx2;
      const Complex cy_hi = sx.center[i] / sy.face[j + 1] * inv_dx2;
      const Complex ss = sx.center[i] * sy.center[j];
      impl->sxsy[g.idx(i, j)] = ss;

      Complex diag = -(cx_lo + cx_hi + cy_lo + cy_hi) +
                     k0 * k0 * eps_map.eps[g.idx(i, j)] * ss;
      trips.emplace_back(row, row, diag);
      if (i > 0)
        trips.emplace_back(row, static_cast<Eigen::Index>(g.idx(i - 1, j)), cx_lo);
      if (i < g.nx - 1)
        trips.emplace_back(row, static_cast<Eigen::Index>(g.idx(i + 1, j)), cx_hi);
      if (j > 0)
        trips.emplace_back(row, static_cast<Eigen::Index>(g.idx(i, j - 1)), cy_lo);
      if (j < g.ny - 1)
        trips.emplace_back(row, static_cast<Eigen::Index>(g.idx(i, j + 1)), cy_hi);
    }
  }

  const auto n = static_cast<Eigen::Index>(g.cell_count());
  impl->A.resize(n, n);
  impl->A.setFromTriplets(trips.begin(), trips.end());
  impl->A.makeCompressed();
  impl->lu.analyzePattern(impl->A);
  impl->lu.factorize(impl->A);
  require(impl->lu.info() == Eigen::Success, ErrorKind::Solver,
          "sparse factorization failed (singular or ill-conditioned operator)");
  return LinearSystem(std::shared_ptr<const LinearSystem::Impl>(impl));
}

namespace {

// Discrete dispersion of the assembled stencil in a straight guide: a
// transverse eigenvector m with eigenvalue mu propagates as m * z^i with
// 2 cos(beta*dx) = 2 - mu*dx^2.
PortMode port_mode_from_eigen(const std::vector<double>& vec, double mu,
                              double dx, double k0) {
  const double cb = 1.0 - 0.5 * mu * dx * dx;
  require(cb > -1.0 && cb < 1.0, ErrorKind::Solver,
          "port mode is not propagating on this grid");
  PortMode pm;
  pm.field = vec;
  pm.n_eff = std::sqrt(mu) / k0;
  pm.beta_tilde = std::acos(cb) / dx;
  const double sb = std::sqrt(1.0 - cb * cb);
  pm.z = Complex(cb, sb);
  pm.flux = sb;
  return pm;
}

}  // namespace

PortMode resolve_port_mode(const PermittivityMap& eps_map, const Port& port,
                           double wavelength) {
  const Grid2D& g = eps_map.grid;
  const int n_trans = (port.axis == Axis::X) ? g.ny : g.nx;
  require(port.span_begin >= 0 && port.span_end <= n_trans &&
              port.span_size() >= 3,
          ErrorKind::Invalid, "port span outside grid");
  const int n_axis = (port.axis == Axis::X) ? g.nx : g.ny;
  require(port.plane >= 0 && port.plane < n_axis, ErrorKind::Invalid,
          "port plane outside grid");

  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double inv_dx2 = 1.0 / (g.dx * g.dx);
  const int ns = port.span_size();
  std::vector<double> diag(ns);
  double eps_hi = 0.0;
  for (int t = 0; t < ns; ++t) {
    const double e = eps_map.eps[cell_index(g, port.axis, port.plane,
                                            port.span_begin + t)];
    diag[t] = -2.0 * inv_dx2 + k0 * k0 * e;
    eps_hi = std::max(eps_hi, e);
  }
  const double eps_edge =
      std::max(eps_map.eps[cell_index(g, port.axis, port.plane, port.span_begin)],
               eps_map.eps[cell_index(g, port.axis, port.plane, port.span_end - 1)]);
  require(eps_hi > eps_edge, ErrorKind::Solver,
          "no guided mode at port " + std::to_string(port.id) +
              ": span has no index contrast");

  const auto modes =
      tridiag_modes_in_range(diag, inv_dx2, k0 * k0 * eps_edge,
                             k0 * k0 * eps_hi, port.mode_order + 1);
  require(static_cast<int>(modes.size()) > port.mode_order, ErrorKind::Solver,
          "no guided mode of order " + std::to_string(port.mode_order) +
              " at port " + std::to_string(port.id));
  const auto& m = modes[port.mode_order];
  require(m.sign_changes == port.mode_order, ErrorKind::Solver,
          "mode order mismatch at port " + std::to_string(port.id));
  return port_mode_from_eigen(m.vec, m.eigenvalue, g.dx, k0);
}

ModeProfile to_mode_profile(const PortMode& mode, const Grid2D& grid,
                            int mode_order) {
  ModeProfile mp;
  mp.mode_order = mode_order;
  mp.n_eff = mode.n_eff;
  mp.power_norm = grid.dx;
  mp.field.resize(mode.field.size());
  const double s = 1.0 / std::sqrt(grid.dx);
  for (std::size_t k = 0; k < mode.field.size(); ++k)
    mp.field[k] = mode.field[k] * s;
  return mp;
}

PortMode to_port_mode(const ModeProfile& mode, const Grid2D& grid,
                      double wavelength) {
  require(!mode.field.empty(), ErrorKind::Invalid, "empty mode profile");
  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double mu = (k0 * mode.n_eff) * (k0 * mode.n_eff);
  std::vector<double> v(mode.field.begin(), mode.field.end());
  double norm = 0.0;
  for (double x : v) norm += x * x;
  require(norm > 0.0, ErrorKind::Invalid, "zero mode profile");
  const double s = 1.0 / std::sqrt(norm);
  for (double& x : v) x *= s;
  return port_mode_from_eigen(v, mu, grid.dx, k0);
}

std::vector<Complex> mode_source(const Grid2D& grid, const Port& port,
                                 const PortMode& mode, Complex amplitude) {
  require(static_cast<int>(mode.field.size()) == port.span_size(),
          ErrorKind::Invalid, "mode and port span size mismatch");
  std::vector<Complex> rhs(grid.cell_count(), Complex(0.0, 0.0));
  if (amplitude == Complex(0.0, 0.0)) return rhs;

  const int n_axis = (port.axis == Axis::X) ? grid.nx : grid.ny;
  require(port.plane - port.direction >= 0 &&
              port.plane - port.direction < n_axis,
          ErrorKind::Invalid, "source plane pair outside grid");

  // Two-plane one-sided injection: the incident wave m*z^(d*(i-plane)) is
  // masked to the downstream side, so the residual of the masked wave acts
  // as the source.  Exact for on-grid modes, hence no backward launch.
  const Complex a_raw = amplitude / std::sqrt(mode.flux);
  const double c = 1.0 / (grid.dx * grid.dx);
  const Complex zinv = Complex(1.0, 0.0) / mode.z;
  for (int t = 0; t < port.span_size(); ++t) {
    const double m = mode.field[t];
    rhs[cell_index(grid, port.axis, port.plane - port.direction,
                   port.span_begin + t)] += c * m * a_raw;
    rhs[cell_index(grid, port.axis, port.plane, port.span_begin + t)] -=
        c * m * zinv * a_raw;
  }
  return rhs;
}

std::vector<Complex> mode_source(const Grid2D& grid, const Port& port,
                                 const ModeProfile& mode, Complex amplitude,
                                 double wavelength) {
  return mode_source(grid, port, to_port_mode(mode, grid, wavelength),
                     amplitude);
}

Complex measure_overlap(const FieldMap& field, const Port& port,
                        const PortMode& mode) {
  const Grid2D& g = field.grid;
  require(field.values.size() == g.cell_count(), ErrorKind::Invalid,
          "field size does not match grid");
  require(static_cast<int>(mode.field.size()) == port.span_size(),
          ErrorKind::Invalid, "mode and port span size mismatch");
  const int n_axis = (port.axis == Axis::X) ? g.nx : g.ny;
  require(port.plane + 1 < n_axis, ErrorKind::Invalid,
          "overlap needs plane+1 inside the grid");

  Complex o0(0.0, 0.0), o1(0.0, 0.0);
  for (int t = 0; t < port.span_size(); ++t) {
    const double m = mode.field[t];
    o0 += m * field.values[cell_index(g, port.axis, port.plane,
                                      port.span_begin + t)];
    o1 += m * field.values[cell_index(g, port.axis, port.plane + 1,
                                      port.span_begin + t)];
  }
  // Two-plane separation of the forward (port.direction) running component.
  const Complex zd = (port.direction > 0) ? mode.z : Complex(1.0, 0.0) / mode.z;
  const Complex zdinv = Complex(1.0, 0.0) / zd;
  const Complex fwd = (o1 - o0 * zdinv) / (zd - zdinv);
  return fwd * std::sqrt(mode.flux);
}

Complex measure_overlap(const FieldMap& field, const Port& port,
                        const ModeProfile& mode, double wavelength) {
  return measure_overlap(field, port, to_port_mode(mode, field.grid, wavelength));
}

std::vector<ScatteringMatrix> compute_smatrix(
    const PermittivityMap& eps_map, const std::vector<Port>& ports,
    const std::vector<double>& wavelengths, const PmlSpec& pml, int threads) {
  return compute_smatrix(eps_map, ports, wavelengths, pml, eps_map, threads);
}

std::vector<ScatteringMatrix> compute_smatrix(
    const PermittivityMap& eps_map, const std::vector<Port>& ports,
    const std::vector<double>& wavelengths, const PmlSpec& pml,
    const PermittivityMap& mode_eps, int threads) {
  eps_map.validate();
  pml.validate();
  require(!wavelengths.empty(), ErrorKind::Config, "no wavelengths requested");
  std::vector<const Port*> sources, monitors;
  for (const auto& p : ports) {
    p.validate(eps_map.grid, pml);
    (p.is_source ? sources : monitors).push_back(&p);
  }
  require(!sources.empty() && !monitors.empty(), ErrorKind::Config,
          "need at least one source port and one monitor port");

  std::vector<ScatteringMatrix> out(wavelengths.size());
  parallel_for(wavelengths.size(), threads, [&](std::size_t wi) {
    const double wl = wavelengths[wi];
    std::vector<PortMode> source_modes(sources.size()), monitor_modes(monitors.size());
    for (std::size_t k = 0; k < sources.size(); ++k)
      source_modes[k] = resolve_port_mode(mode_eps, *sources[k], wl);
    for (std::size_t k = 0; k < monitors.size(); ++k)
      monitor_modes[k] = resolve_port_mode(mode_eps, *monitors[k], wl);

    const LinearSystem system = assemble_system(eps_map, wl, pml);

    ScatteringMatrix sm;
    sm.wavelength = wl;
    for (const Port* p : sources) sm.source_ids.push_back(p->id);
    for (const Port* p : monitors) sm.monitor_ids.push_back(p->id);
    sm.entries.assign(sources.size() * monitors.size(), Complex(0.0, 0.0));

    for (std::size_t s = 0; s < sources.size(); ++s) {
      try {
        const auto rhs = mode_source(eps_map.grid, *sources[s], source_modes[s],
                                     Complex(1.0, 0.0));
        FieldMap field{eps_map.grid, system.solve(rhs)};
        for (std::size_t m = 0; m < monitors.size(); ++m)
          sm.entries[m * sources.size() + s] =
              measure_overlap(field, *monitors[m], monitor_modes[m]);
      } catch (const Error& e) {
        fail(e.kind(), "wavelength " + std::to_string(wl * 1e9) +
                           " nm, source port " +
                           std::to_string(sources[s]->id) + ": " + e.what());
      }
    }
    sm.validate();
    out[wi] = std::move(sm);
  });
  return out;
}

}  // namespace modeforge
