#include "modeforge/design.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "modeforge/errors.hpp"
#include "modeforge/parallel.hpp"
#include "morphology.hpp"

namespace modeforge {

void DesignRegion::validate(const Grid2D& grid) const {
  grid.validate();
  require(ni >= 4 && nj >= 4, ErrorKind::Config,
          "design region must be at least 4x4 cells");
  require(i0 >= 0 && j0 >= 0 && i0 + ni <= grid.nx && j0 + nj <= grid.ny,
          ErrorKind::Config, "design region exceeds the grid");
  require(p.size() == cell_count() && frozen.size() == cell_count(),
          ErrorKind::Config, "design region arrays sized wrong");
  for (double d : p)
    require(std::isfinite(d) && d >= 0.0 && d <= 1.0, ErrorKind::Config,
            "densities must lie in [0, 1]");
  require(eps_lo >= 1.0, ErrorKind::Config,
          "cladding permittivity must be at least 1");
}

void TargetSet::validate() const {
  require(!entries.empty(), ErrorKind::Config, "target set is empty");
  for (const Entry& e : entries)
    require(std::isfinite(e.target) && e.target >= 0.0 && e.target <= 1.0,
            ErrorKind::Config, "targets must lie in [0, 1]");
}

double objective_general(const std::vector<ScatteringMatrix>& smatrices,
                         const TargetSet& targets) {
  targets.validate();
  require(!smatrices.empty(), ErrorKind::Invalid, "no scattering matrices");
  double total = 0.0;
  for (const ScatteringMatrix& s : smatrices) {
    for (const TargetSet::Entry& e : targets.entries) {
      const double mag = std::abs(s.at(e.monitor, e.source));
      total += (e.target - mag) * (e.target - mag);
    }
  }
  return total;
}

TargetSet targets_mbs() {
  const double v = std::sqrt(0.5);
  return TargetSet{{{3, 1, v}, {4, 1, v}, {3, 2, v}, {4, 2, v}}};
}

TargetSet targets_mdm() {
  return TargetSet{{{3, 1, 1.0}, {4, 1, 1.0}, {3, 2, 0.0}, {4, 2, 0.0}}};
}

TargetSet targets_tritter() {
  const double v = 1.0 / std::sqrt(3.0);
  TargetSet t;
  for (int mon = 4; mon <= 6; ++mon)
    for (int src = 1; src <= 3; ++src) t.entries.push_back({mon, src, v});
  return t;
}

double objective_mbs(const ScatteringMatrix& s) {
  return objective_general({s}, targets_mbs());
}
double objective_mdm(const ScatteringMatrix& s) {
  return objective_general({s}, targets_mdm());
}
double objective_tritter(const ScatteringMatrix& s) {
  return objective_general({s}, targets_tritter());
}

void DesignProblem::validate() const {
  require(!wavelengths.empty(), ErrorKind::Config, "no wavelengths");
  require(backgrounds.size() == wavelengths.size(), ErrorKind::Config,
          "one background map per wavelength required");
  const Grid2D& g = backgrounds.front().grid;
  for (std::size_t w = 0; w < backgrounds.size(); ++w) {
    require(wavelengths[w] > 0.0, ErrorKind::Config,
            "wavelengths must be positive");
    backgrounds[w].validate();
    const Grid2D& gw = backgrounds[w].grid;
    require(gw.nx == g.nx && gw.ny == g.ny && gw.dx == g.dx,
            ErrorKind::Config, "backgrounds must share one grid");
    require(backgrounds[w].eps_core > region.eps_lo, ErrorKind::Config,
            "core permittivity must exceed the cladding");
  }
  region.validate(g);
  pml.validate();
  require(!ports.empty(), ErrorKind::Config, "no ports");
  bool any_source = false, any_monitor = false;
  for (const Port& port : ports) {
    port.validate(g, pml);
    (port.is_source ? any_source : any_monitor) = true;
  }
  require(any_source && any_monitor, ErrorKind::Config,
          "need at least one source and one monitor port");
  for (const Port& port : ports) {
    if (port.axis != Axis::X) continue;
    const bool clear = (port.plane + 1 < region.i0 - 1) ||
                       (port.plane - 1 > region.i0 + region.ni);
    require(clear, ErrorKind::Config,
            "port plane overlaps the design region");
  }
  targets.validate();
  for (const TargetSet::Entry& e : targets.entries) {
    bool src_ok = false, mon_ok = false;
    for (const Port& port : ports) {
      if (port.id == e.source && port.is_source) src_ok = true;
      if (port.id == e.monitor && !port.is_source) mon_ok = true;
    }
    require(src_ok && mon_ok, ErrorKind::Config,
            "target references a missing port id");
  }
}

void OptimizationConfig::validate() const {
  require(continuous_iterations >= 0 && levelset_iterations >= 0,
          ErrorKind::Config, "iteration counts must be nonnegative");
  require(min_feature >= 0.0 && filter_radius >= 0.0, ErrorKind::Config,
          "feature sizes must be nonnegative");
  require(beta_schedule[0] > 0.0 && beta_schedule[1] >= beta_schedule[0] &&
              beta_schedule[2] >= beta_schedule[1],
          ErrorKind::Config, "beta schedule must be positive nondecreasing");
  require(step > 0.0, ErrorKind::Config, "step must be positive");
  require(divergence_factor > 1.0, ErrorKind::Config,
          "divergence factor must exceed 1");
}

namespace {

double project(double x, double beta) {
  if (beta < 1e-8) return x;
  const double th = std::tanh(0.5 * beta);
  return (th + std::tanh(beta * (x - 0.5))) / (2.0 * th);
}

double project_deriv(double x, double beta) {
  if (beta < 1e-8) return 1.0;
  const double th = std::tanh(0.5 * beta);
  const double c = std::cosh(beta * (x - 0.5));
  return beta / (2.0 * th * c * c);
}

// Interface smoothing over one cell for the levelset stage.
double h_smooth(double u) {
  if (u <= -1.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return 0.5 * (1.0 + u + std::sin(std::numbers::pi * u) / std::numbers::pi);
}

double h_smooth_deriv(double u) {
  if (u <= -1.0 || u >= 1.0) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * u));
}

struct ConeFilter {
  std::vector<morph::Offset> offsets;
  std::vector<double> weights;
  double wsum = 1.0;
};

ConeFilter make_cone_filter(double radius_cells) {
  ConeFilter f;
  if (radius_cells <= 0.5) {
    f.offsets = {{0, 0}};
    f.weights = {1.0};
    f.wsum = 1.0;
    return f;
  }
  const int r = static_cast<int>(std::ceil(radius_cells));
  for (int dj = -r; dj <= r; ++dj)
    for (int di = -r; di <= r; ++di) {
      const double d = std::hypot(double(di), double(dj));
      if (d < radius_cells) {
        f.offsets.push_back({di, dj});
        f.weights.push_back(1.0 - d / radius_cells);
      }
    }
  f.wsum = std::accumulate(f.weights.begin(), f.weights.end(), 0.0);
  return f;
}

// Background occupancy used to pad the filter stencil outside the region.
double pad_density(const DesignProblem& pb, int gi, int gj) {
  const PermittivityMap& bg = pb.backgrounds.front();
  const double mid = 0.5 * (pb.region.eps_lo + bg.eps_core);
  if (gi < 0 || gi >= bg.grid.nx || gj < 0 || gj >= bg.grid.ny) return 0.0;
  return bg.at(gi, gj) >= mid ? 1.0 : 0.0;
}

std::vector<double> apply_cone_filter(const DesignProblem& pb,
                                      const std::vector<double>& d,
                                      const ConeFilter& f) {
  const DesignRegion& r = pb.region;
  std::vector<double> out(d.size(), 0.0);
  for (int lj = 0; lj < r.nj; ++lj)
    for (int li = 0; li < r.ni; ++li) {
      double acc = 0.0;
      for (std::size_t k = 0; k < f.offsets.size(); ++k) {
        const int ii = li + f.offsets[k].di, jj = lj + f.offsets[k].dj;
        double val;
        if (ii >= 0 && ii < r.ni && jj >= 0 && jj < r.nj)
          val = d[r.local_idx(ii, jj)];
        else
          val = pad_density(pb, r.i0 + ii, r.j0 + jj);
        acc += f.weights[k] * val;
      }
      out[r.local_idx(li, lj)] = acc / f.wsum;
    }
  return out;
}

// Adjoint of the filter as a map from region cells to region cells: the pad
// ring is constant, so it drops out of the derivative.
std::vector<double> apply_cone_filter_transpose(const DesignRegion& r,
                                                const std::vector<double>& g,
                                                const ConeFilter& f) {
  std::vector<double> out(g.size(), 0.0);
  for (int lj = 0; lj < r.nj; ++lj)
    for (int li = 0; li < r.ni; ++li) {
      double acc = 0.0;
      for (std::size_t k = 0; k < f.offsets.size(); ++k) {
        const int ii = li + f.offsets[k].di, jj = lj + f.offsets[k].dj;
        if (ii >= 0 && ii < r.ni && jj >= 0 && jj < r.nj)
          acc += f.weights[k] * g[r.local_idx(ii, jj)];
      }
      out[r.local_idx(li, lj)] = acc / f.wsum;
    }
  return out;
}

PermittivityMap materialize_from_fraction(const DesignProblem& pb,
                                          std::size_t w,
                                          const std::vector<double>& v) {
  PermittivityMap map = pb.backgrounds[w];
  const DesignRegion& r = pb.region;
  const double lo = r.eps_lo, hi = map.eps_core;
  for (int lj = 0; lj < r.nj; ++lj)
    for (int li = 0; li < r.ni; ++li)
      map.eps[map.grid.idx(r.i0 + li, r.j0 + lj)] =
          lo + (hi - lo) * v[r.local_idx(li, lj)];
  return map;
}

// Measurement functional: S = sum_c w[c] * x[c] reproduces measure_overlap.
std::vector<Complex> overlap_functional(const Grid2D& g, const Port& port,
                                        const PortMode& mode) {
  std::vector<Complex> w(g.cell_count(), Complex(0.0, 0.0));
  const Complex zd =
      (port.direction > 0) ? mode.z : Complex(1.0, 0.0) / mode.z;
  const Complex zdinv = Complex(1.0, 0.0) / zd;
  const Complex scale = std::sqrt(mode.flux) / (zd - zdinv);
  for (int t = 0; t < port.span_size(); ++t) {
    const double m = mode.field[t];
    const int tr = port.span_begin + t;
    const std::size_t c0 =
        (port.axis == Axis::X) ? g.idx(port.plane, tr) : g.idx(tr, port.plane);
    const std::size_t c1 = (port.axis == Axis::X) ? g.idx(port.plane + 1, tr)
                                                  : g.idx(tr, port.plane + 1);
    w[c1] += m * scale;
    w[c0] -= m * scale * zdinv;
  }
  return w;
}

struct WavelengthEval {
  double f = 0.0;
  std::vector<double> dfdv;  // df/d(solid fraction), region cells
  double max_residual = 0.0;
};

// One wavelength of the objective and its adjoint sensitivity to the solid
// fraction.  Port modes come from the background so they stay fixed as the
// design evolves.
WavelengthEval eval_wavelength(const DesignProblem& pb, std::size_t w,
                               const std::vector<double>& v,
                               bool want_gradient) {
  const double wl = pb.wavelengths[w];
  const DesignRegion& r = pb.region;
  const PermittivityMap eps = materialize_from_fraction(pb, w, v);
  const LinearSystem sys = assemble_system(eps, wl, pb.pml);
  const Grid2D& g = eps.grid;

  std::vector<const Port*> sources, monitors;
  for (const Port& port : pb.ports)
    (port.is_source ? sources : monitors).push_back(&port);

  std::vector<PortMode> src_modes(sources.size()), mon_modes(monitors.size());
  for (std::size_t k = 0; k < sources.size(); ++k)
    src_modes[k] = resolve_port_mode(pb.backgrounds[w], *sources[k], wl);
  for (std::size_t k = 0; k < monitors.size(); ++k)
    mon_modes[k] = resolve_port_mode(pb.backgrounds[w], *monitors[k], wl);

  WavelengthEval out;
  if (want_gradient) out.dfdv.assign(r.cell_count(), 0.0);
  const double hi = pb.backgrounds[w].eps_core;

  for (std::size_t s = 0; s < sources.size(); ++s) {
    bool used = false;
    for (const TargetSet::Entry& e : pb.targets.entries)
      if (e.source == sources[s]->id) used = true;
    if (!used) continue;

    double resid = 0.0;
    const auto rhs =
        mode_source(g, *sources[s], src_modes[s], Complex(1.0, 0.0));
    const auto x = sys.solve(rhs, &resid);
    out.max_residual = std::max(out.max_residual, resid);
    const FieldMap field{g, x};

    std::vector<Complex> adj_rhs;
    if (want_gradient) adj_rhs.assign(g.cell_count(), Complex(0.0, 0.0));

    for (const TargetSet::Entry& e : pb.targets.entries) {
      if (e.source != sources[s]->id) continue;
      std::size_t mi = monitors.size();
      for (std::size_t k = 0; k < monitors.size(); ++k)
        if (monitors[k]->id == e.monitor) mi = k;
      require(mi < monitors.size(), ErrorKind::Config,
              "target monitor port missing");
      const Complex smn = measure_overlap(field, *monitors[mi], mon_modes[mi]);
      const double mag = std::abs(smn);
      out.f += (e.target - mag) * (e.target - mag);
      if (!want_gradient || mag <= 1e-9) continue;
      const Complex gamma = -2.0 * (e.target - mag) * std::conj(smn) / mag;
      const auto wfun = overlap_functional(g, *monitors[mi], mon_modes[mi]);
      for (std::size_t c = 0; c < adj_rhs.size(); ++c)
        adj_rhs[c] += gamma * wfun[c];
    }

    if (!want_gradient) continue;
    double resid_adj = 0.0;
    const auto lambda = sys.solve(adj_rhs, &resid_adj);
    out.max_residual = std::max(out.max_residual, resid_adj);
    for (int lj = 0; lj < r.nj; ++lj)
      for (int li = 0; li < r.ni; ++li) {
        const std::size_t gc = g.idx(r.i0 + li, r.j0 + lj);
        const Complex term =
            sys.eps_derivative_scale(gc) * lambda[gc] * x[gc];
        out.dfdv[r.local_idx(li, lj)] -= (hi - r.eps_lo) * term.real();
      }
  }
  return out;
}

struct EvalResult {
  double f = 0.0;
  std::vector<double> grad;
  double max_residual = 0.0;
};

EvalResult eval_continuous(const DesignProblem& pb,
                           const std::vector<double>& p, const ConeFilter& f,
                           double beta, int threads, bool want_gradient) {
  const DesignRegion& r = pb.region;
  const std::vector<double> dt = apply_cone_filter(pb, p, f);
  std::vector<double> v(dt.size());
  for (std::size_t c = 0; c < dt.size(); ++c) v[c] = project(dt[c], beta);

  const std::size_t nw = pb.wavelengths.size();
  std::vector<WavelengthEval> per(nw);
  parallel_for(nw, threads,
               [&](std::size_t w) { per[w] = eval_wavelength(pb, w, v, want_gradient); });

  EvalResult out;
  std::vector<double> dfdv(r.cell_count(), 0.0);
  for (std::size_t w = 0; w < nw; ++w) {
    out.f += per[w].f;
    out.max_residual = std::max(out.max_residual, per[w].max_residual);
    if (want_gradient)
      for (std::size_t c = 0; c < dfdv.size(); ++c)
        dfdv[c] += per[w].dfdv[c];
  }
  if (want_gradient) {
    for (std::size_t c = 0; c < dfdv.size(); ++c)
      dfdv[c] *= project_deriv(dt[c], beta);
    out.grad = apply_cone_filter_transpose(r, dfdv, f);
    for (std::size_t c = 0; c < out.grad.size(); ++c)
      if (r.frozen[c]) out.grad[c] = 0.0;
  }
  return out;
}

EvalResult eval_levelset(const DesignProblem& pb,
                         const std::vector<double>& phi, double band,
                         int threads, bool want_gradient) {
  const DesignRegion& r = pb.region;
  std::vector<double> v(phi.size());
  for (std::size_t c = 0; c < phi.size(); ++c)
    v[c] = h_smooth(phi[c] / band);

  const std::size_t nw = pb.wavelengths.size();
  std::vector<WavelengthEval> per(nw);
  parallel_for(nw, threads,
               [&](std::size_t w) { per[w] = eval_wavelength(pb, w, v, want_gradient); });

  EvalResult out;
  if (want_gradient) out.grad.assign(phi.size(), 0.0);
  for (std::size_t w = 0; w < nw; ++w) {
    out.f += per[w].f;
    out.max_residual = std::max(out.max_residual, per[w].max_residual);
    if (want_gradient)
      for (std::size_t c = 0; c < phi.size(); ++c)
        out.grad[c] += per[w].dfdv[c];
  }
  if (want_gradient)
    for (std::size_t c = 0; c < phi.size(); ++c) {
      out.grad[c] *= h_smooth_deriv(phi[c] / band) / band;
      if (r.frozen[c]) out.grad[c] = 0.0;
    }
  return out;
}

// Full-grid solid mask: background occupancy with the region block replaced.
std::vector<std::uint8_t> full_mask_from_region(
    const DesignProblem& pb, const std::vector<std::uint8_t>& region_solid) {
  const PermittivityMap& bg = pb.backgrounds.front();
  const DesignRegion& r = pb.region;
  const double mid = 0.5 * (r.eps_lo + bg.eps_core);
  std::vector<std::uint8_t> mask(bg.grid.cell_count());
  for (int j = 0; j < bg.grid.ny; ++j)
    for (int i = 0; i < bg.grid.nx; ++i)
      mask[bg.grid.idx(i, j)] = bg.at(i, j) >= mid ? 1 : 0;
  for (int lj = 0; lj < r.nj; ++lj)
    for (int li = 0; li < r.ni; ++li)
      mask[bg.grid.idx(r.i0 + li, r.j0 + lj)] =
          region_solid[r.local_idx(li, lj)];
  return mask;
}

std::vector<double> region_phi_from_mask(const DesignProblem& pb,
                                         const std::vector<std::uint8_t>& full,
                                         double dx) {
  const Grid2D& g = pb.backgrounds.front().grid;
  const DesignRegion& r = pb.region;
  const auto phi_cells = morph::signed_distance_cells(full, g.nx, g.ny);
  std::vector<double> phi(r.cell_count());
  for (int lj = 0; lj < r.nj; ++lj)
    for (int li = 0; li < r.ni; ++li)
      phi[r.local_idx(li, lj)] = phi_cells[g.idx(r.i0 + li, r.j0 + lj)] * dx;
  return phi;
}

}  // namespace

PermittivityMap materialize(const DesignProblem& problem, std::size_t w,
                            const std::vector<double>& densities,
                            double filter_radius, double beta) {
  problem.validate();
  require(w < problem.wavelengths.size(), ErrorKind::Invalid,
          "wavelength index out of range");
  require(densities.size() == problem.region.cell_count(), ErrorKind::Invalid,
          "density vector sized wrong");
  const ConeFilter f =
      make_cone_filter(filter_radius / problem.backgrounds[w].grid.dx);
  const std::vector<double> dt = apply_cone_filter(problem, densities, f);
  std::vector<double> v(dt.size());
  for (std::size_t c = 0; c < dt.size(); ++c) v[c] = project(dt[c], beta);
  return materialize_from_fraction(problem, w, v);
}

PermittivityMap materialize_binary(const DesignProblem& problem, std::size_t w,
                                   const std::vector<std::uint8_t>& solid) {
  problem.validate();
  require(w < problem.wavelengths.size(), ErrorKind::Invalid,
          "wavelength index out of range");
  require(solid.size() == problem.region.cell_count(), ErrorKind::Invalid,
          "mask sized wrong");
  std::vector<double> v(solid.size());
  for (std::size_t c = 0; c < solid.size(); ++c) v[c] = solid[c] ? 1.0 : 0.0;
  return materialize_from_fraction(problem, w, v);
}

GradientResult objective_and_gradient(const DesignProblem& problem,
                                      const std::vector<double>& densities,
                                      double filter_radius, double beta,
                                      int threads) {
  problem.validate();
  require(densities.size() == problem.region.cell_count(), ErrorKind::Invalid,
          "density vector sized wrong");
  const ConeFilter f = make_cone_filter(
      filter_radius / problem.backgrounds.front().grid.dx);
  EvalResult r = eval_continuous(problem, densities, f, beta, threads, true);
  return GradientResult{r.f, std::move(r.grad), r.max_residual};
}

FeatureReport feature_size_check(const PermittivityMap& map,
                                 double min_feature) {
  map.validate();
  FeatureReport report;
  report.min_feature = min_feature;
  if (min_feature <= 0.0) return report;

  const double lo = *std::min_element(map.eps.begin(), map.eps.end());
  const double mid = 0.5 * (lo + map.eps_core);
  const int nx = map.grid.nx, ny = map.grid.ny;
  std::vector<std::uint8_t> solid(map.eps.size());
  for (std::size_t c = 0; c < map.eps.size(); ++c)
    solid[c] = map.eps[c] >= mid ? 1 : 0;

  const auto se = morph::disk_offsets(min_feature / (2.0 * map.grid.dx));
  for (int phase = 0; phase < 2; ++phase) {
    std::vector<std::uint8_t> mask(solid.size());
    for (std::size_t c = 0; c < solid.size(); ++c)
      mask[c] = phase == 0 ? solid[c] : !solid[c];
    const auto opened = morph::open_phase(mask, nx, ny, se);
    std::vector<std::uint8_t> viol(mask.size());
    for (std::size_t c = 0; c < mask.size(); ++c)
      viol[c] = mask[c] && !opened[c];
    std::vector<int> reps;
    const int n = morph::count_components_4(viol, nx, ny, &reps);
    (phase == 0 ? report.solid_violations : report.void_violations) = n;
    report.cells.insert(report.cells.end(), reps.begin(), reps.end());
  }
  report.pass = report.solid_violations + report.void_violations == 0;
  return report;
}

double validate_gradient(const DesignProblem& problem,
                         const OptimizationConfig& config, int samples,
                         double fd_step) {
  problem.validate();
  config.validate();
  require(samples > 0 && fd_step > 0.0, ErrorKind::Config,
          "need a positive sample count and step");
  const double radius = config.filter_radius > 0.0 ? config.filter_radius
                                                   : 0.5 * config.min_feature;
  const double beta = config.beta_schedule[0];
  const ConeFilter f =
      make_cone_filter(radius / problem.backgrounds.front().grid.dx);

  std::vector<double> p = problem.region.p;
  const EvalResult base =
      eval_continuous(problem, p, f, beta, config.threads, true);

  std::vector<std::size_t> free_cells;
  for (std::size_t c = 0; c < p.size(); ++c)
    if (!problem.region.frozen[c] && p[c] - fd_step >= 0.0 &&
        p[c] + fd_step <= 1.0)
      free_cells.push_back(c);
  require(!free_cells.empty(), ErrorKind::Invalid,
          "no probeable cells for the finite-difference check");

  const std::size_t n = std::min<std::size_t>(samples, free_cells.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t c =
        free_cells[(k * free_cells.size()) / n + free_cells.size() / (2 * n)];
    const double keep = p[c];
    p[c] = keep + fd_step;
    const double fp =
        eval_continuous(problem, p, f, beta, config.threads, false).f;
    p[c] = keep - fd_step;
    const double fm =
        eval_continuous(problem, p, f, beta, config.threads, false).f;
    p[c] = keep;
    const double fd = (fp - fm) / (2.0 * fd_step);
    const double denom = std::max(std::fabs(fd), 1e-12);
    worst = std::max(worst, std::fabs(base.grad[c] - fd) / denom);
  }
  return worst;
}

namespace {

struct StepState {
  double step = 0.0;
  bool have_step = false;
};

// Projected Armijo backtracking with a Barzilai-Borwein step seed.  Returns
// true when a decreasing step was accepted; cur/f/g are updated in place.
template <typename Eval, typename Clamp>
bool descend_step(std::vector<double>& x, EvalResult& cur, StepState& st,
                  double init_scale, const Eval& eval, const Clamp& clamp,
                  double* iter_max_resid) {
  double gmax = 0.0;
  for (double gc : cur.grad) gmax = std::max(gmax, std::fabs(gc));
  if (gmax == 0.0) return false;
  if (!st.have_step) {
    st.step = init_scale / gmax;
    st.have_step = true;
  }

  double s = st.step;
  for (int bt = 0; bt < 25; ++bt) {
    std::vector<double> x_try(x.size());
    double move2 = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      x_try[c] = clamp(x[c] - s * cur.grad[c]);
      const double d = x_try[c] - x[c];
      move2 += d * d;
    }
    if (move2 == 0.0) break;
    EvalResult trial = eval(x_try);
    *iter_max_resid = std::max(*iter_max_resid, trial.max_residual);
    if (trial.f <= cur.f - 1e-4 * move2 / s) {
      double dpdg = 0.0, dp2 = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) {
        const double dp = x_try[c] - x[c];
        dpdg += dp * (trial.grad[c] - cur.grad[c]);
        dp2 += dp * dp;
      }
      st.step = (dpdg > 0.0 && std::isfinite(dp2 / dpdg)) ? dp2 / dpdg
                                                          : s * 2.0;
      x = std::move(x_try);
      cur = std::move(trial);
      return true;
    }
    s *= 0.5;
  }
  st.step = s;
  return false;
}

}  // namespace

OptimizationResult run_optimization(const DesignProblem& problem,
                                    const OptimizationConfig& config) {
  problem.validate();
  config.validate();
  const DesignRegion& r0 = problem.region;
  const Grid2D& grid = problem.backgrounds.front().grid;
  const double dx = grid.dx;
  const double radius = config.filter_radius > 0.0 ? config.filter_radius
                                                   : 0.5 * config.min_feature;
  const ConeFilter filter = make_cone_filter(radius / dx);
  const int n_cont = config.continuous_iterations;
  const int n_ls = config.levelset_iterations;

  OptimizationResult result;
  result.region = r0;

  // A run with no iterations in either stage reports on the input as given.
  if (n_cont + n_ls == 0) {
    const EvalResult e0 = eval_continuous(problem, r0.p, filter,
                                          config.beta_schedule[0],
                                          config.threads, false);
    result.f_initial = result.f_final = e0.f;
    result.eps =
        materialize(problem, 0, r0.p, radius, config.beta_schedule[0]);
    result.feature = feature_size_check(result.eps, config.min_feature);
    return result;
  }

  std::vector<double> p = r0.p;
  int global_iter = 0;
  double f_initial = -1.0;

  const auto check_divergence = [&](double f) {
    if (f_initial > 0.0 && f > config.divergence_factor * f_initial)
      fail(ErrorKind::Solver,
           "optimization diverged: objective " + std::to_string(f) +
               " exceeds " + std::to_string(config.divergence_factor) +
               " times the starting value " + std::to_string(f_initial) +
               " at iteration " + std::to_string(global_iter));
  };

  // Continuous stage with scheduled projection sharpness.
  if (n_cont > 0) {
    const int seg = (n_cont + 2) / 3;
    double cur_beta = -1.0;
    EvalResult cur;
    StepState st;
    for (int it = 0; it < n_cont; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      const double beta = config.beta_schedule[std::min(it / seg, 2)];
      double iter_resid = 0.0;
      if (beta != cur_beta) {
        cur = eval_continuous(problem, p, filter, beta, config.threads, true);
        cur_beta = beta;
        st = StepState{};
        iter_resid = cur.max_residual;
        if (f_initial < 0.0) f_initial = std::max(cur.f, 1e-300);
      }
      // Converged for this projection sharpness: jump to the next segment.
      double gmax = 0.0;
      for (double gc : cur.grad) gmax = std::max(gmax, std::fabs(gc));
      if (gmax < 1e-7) {
        const int segment = std::min(it / seg, 2);
        if (segment == 2) break;
        it = (segment + 1) * seg - 1;
        continue;
      }
      descend_step(
          p, cur, st, config.step,
          [&](const std::vector<double>& q) {
            return eval_continuous(problem, q, filter, beta, config.threads,
                                   true);
          },
          [](double x) { return std::clamp(x, 0.0, 1.0); }, &iter_resid);
      iter_resid = std::max(iter_resid, cur.max_residual);
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      ++global_iter;
      result.trace.push_back(
          {global_iter, "continuous", cur.f, iter_resid, ms, beta});
      check_divergence(cur.f);
    }
  }

  // Binarize the continuous design; frozen cells keep their pinned phase.
  std::vector<std::uint8_t> region_solid(r0.cell_count());
  {
    const std::vector<double> dt = apply_cone_filter(problem, p, filter);
    for (std::size_t c = 0; c < region_solid.size(); ++c) {
      const double v = project(dt[c], config.beta_schedule[2]);
      region_solid[c] = r0.frozen[c] ? (p[c] >= 0.5) : (v >= 0.5);
    }
  }

  // Levelset stage on the signed distance of the binarized design.
  if (n_ls > 0) {
    const double band = dx;
    std::vector<double> phi =
        region_phi_from_mask(problem, full_mask_from_region(problem, region_solid), dx);
    EvalResult cur = eval_levelset(problem, phi, band, config.threads, true);
    if (f_initial < 0.0) f_initial = std::max(cur.f, 1e-300);
    StepState st;
    int accepted_since_reinit = 0;
    for (int it = 0; it < n_ls; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      double iter_resid = cur.max_residual;
      double gmax = 0.0;
      for (double gc : cur.grad) gmax = std::max(gmax, std::fabs(gc));
      if (gmax < 1e-7) break;
      const bool moved = descend_step(
          phi, cur, st, 0.25 * dx,
          [&](const std::vector<double>& q) {
            return eval_levelset(problem, q, band, config.threads, true);
          },
          [](double x) { return x; }, &iter_resid);
      if (moved && ++accepted_since_reinit >= 10) {
        accepted_since_reinit = 0;
        for (std::size_t c = 0; c < region_solid.size(); ++c)
          region_solid[c] =
              r0.frozen[c] ? (r0.p[c] >= 0.5) : (phi[c] >= 0.0);
        phi = region_phi_from_mask(
            problem, full_mask_from_region(problem, region_solid), dx);
        cur = eval_levelset(problem, phi, band, config.threads, true);
        st = StepState{};
        iter_resid = std::max(iter_resid, cur.max_residual);
      }
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      ++global_iter;
      result.trace.push_back(
          {global_iter, "levelset", cur.f, iter_resid, ms, 0.0});
      check_divergence(cur.f);
    }
    for (std::size_t c = 0; c < region_solid.size(); ++c)
      region_solid[c] = r0.frozen[c] ? (r0.p[c] >= 0.5) : (phi[c] >= 0.0);
  }

  // Final regularization: open the solid phase, then the void phase, with
  // the minimum-feature disk, and pin the frozen stubs back on.
  {
    const auto se = morph::disk_offsets(config.min_feature / (2.0 * dx));
    auto full = full_mask_from_region(problem, region_solid);
    full = morph::open_phase(full, grid.nx, grid.ny, se);
    std::vector<std::uint8_t> inv(full.size());
    for (std::size_t c = 0; c < full.size(); ++c) inv[c] = full[c] ? 0 : 1;
    inv = morph::open_phase(inv, grid.nx, grid.ny, se);
    for (std::size_t c = 0; c < full.size(); ++c) full[c] = inv[c] ? 0 : 1;
    for (int lj = 0; lj < r0.nj; ++lj)
      for (int li = 0; li < r0.ni; ++li) {
        const std::size_t lc = r0.local_idx(li, lj);
        region_solid[lc] = r0.frozen[lc]
                               ? (r0.p[lc] >= 0.5)
                               : full[grid.idx(r0.i0 + li, r0.j0 + lj)];
      }
  }

  result.region.p.assign(r0.cell_count(), 0.0);
  for (std::size_t c = 0; c < region_solid.size(); ++c)
    result.region.p[c] = region_solid[c] ? 1.0 : 0.0;
  result.eps = materialize_binary(problem, 0, region_solid);

  // Objective of the as-built binary design.
  {
    std::vector<double> v(region_solid.size());
    for (std::size_t c = 0; c < v.size(); ++c)
      v[c] = region_solid[c] ? 1.0 : 0.0;
    const std::size_t nw = problem.wavelengths.size();
    std::vector<WavelengthEval> per(nw);
    parallel_for(nw, config.threads, [&](std::size_t w) {
      per[w] = eval_wavelength(problem, w, v, false);
    });
    result.f_final = 0.0;
    for (const WavelengthEval& e : per) result.f_final += e.f;
  }
  result.f_initial = f_initial > 0.0 ? f_initial : result.f_final;
  result.feature = feature_size_check(result.eps, config.min_feature);
  return result;
}

}  // namespace modeforge
