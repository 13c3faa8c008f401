#include "modeforge/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "modeforge/errors.hpp"
#include "modeforge/modes.hpp"
#include "modeforge/rng.hpp"

namespace modeforge {

GeometryKind parse_geometry(const std::string& name) {
  if (name == "straight") return GeometryKind::Straight;
  if (name == "mbs") return GeometryKind::Mbs;
  if (name == "mdm") return GeometryKind::Mdm;
  if (name == "tritter") return GeometryKind::Tritter;
  fail(ErrorKind::Config, "unknown geometry '" + name +
                              "' (expected straight, mbs, mdm, or tritter)");
}

const char* geometry_name(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::Straight: return "straight";
    case GeometryKind::Mbs: return "mbs";
    case GeometryKind::Mdm: return "mdm";
    case GeometryKind::Tritter: return "tritter";
  }
  fail(ErrorKind::Invalid, "bad geometry kind");
}

namespace {

constexpr double kEpsCladIndex = 1.48;  // effective cladding, SiO2/PMMA blend

// Odd cell count spanning `width`, so guides centre on one cell row.
int odd_cells(double width, double dx) {
  int w = static_cast<int>(std::llround(width / dx));
  if (w % 2 == 0) ++w;
  return std::max(w, 3);
}

struct GuideSpec {
  int center = 0;     // transverse centre cell
  int half = 0;       // guide half-width in cells
  int mode_count = 1; // transverse orders carried as ports
};

// Solid rows of one domain side (input or output cross-section).
std::vector<std::uint8_t> side_profile(const std::vector<GuideSpec>& guides,
                                       int ny) {
  std::vector<std::uint8_t> rows(ny, 0);
  for (const GuideSpec& g : guides)
    for (int j = g.center - g.half; j <= g.center + g.half; ++j)
      if (j >= 0 && j < ny) rows[j] = 1;
  return rows;
}

}  // namespace

GeometryLayout make_layout(GeometryKind kind, double domain, double dx) {
  require(domain > 0.0 && dx > 0.0, ErrorKind::Config,
          "domain and cell pitch must be positive");
  const int n = static_cast<int>(std::llround(domain / dx));

  GeometryLayout layout;
  layout.kind = kind;
  layout.grid = Grid2D{n, n, dx, 0.0, 0.0};
  layout.grid.validate();
  layout.pml = PmlSpec{};
  layout.eps_lo = kEpsCladIndex * kEpsCladIndex;
  const int t = layout.pml.thickness;
  require(n > 2 * t + 10, ErrorKind::Config,
          "domain too small for the boundary layers");

  const int cy = n / 2;
  const int src_plane = t + 6;
  const int mon_plane = n - 1 - t - 6;

  // Design block: a centred square leaving 2 um of routing on each side.
  const int ni = std::max(8, static_cast<int>(std::llround((domain - 4e-6) / dx)));
  const int i0 = (n - ni) / 2;
  require(src_plane + 2 < i0 - 1 && mon_plane - 2 > i0 + ni,
          ErrorKind::Config,
          "domain leaves no room between ports and the design block");

  std::vector<GuideSpec> in_guides, out_guides;
  switch (kind) {
    case GeometryKind::Straight:
    case GeometryKind::Mbs: {
      const int half = odd_cells(1.0e-6, dx) / 2;
      const int modes = (kind == GeometryKind::Mbs) ? 2 : 1;
      in_guides = {{cy, half, modes}};
      out_guides = in_guides;
      break;
    }
    case GeometryKind::Mdm: {
      const int off = static_cast<int>(std::llround(0.75e-6 / dx));
      const int half_in = odd_cells(0.5e-6, dx) / 2;
      const int half_out = odd_cells(1.0e-6, dx) / 2;
      require(off > 2 * half_in + 2, ErrorKind::Config,
              "input guides too close for this pitch");
      in_guides = {{cy - off, half_in, 1}, {cy + off, half_in, 1}};
      out_guides = {{cy, half_out, 2}};
      break;
    }
    case GeometryKind::Tritter: {
      const int half = odd_cells(1.8e-6, dx) / 2;
      in_guides = {{cy, half, 3}};
      out_guides = in_guides;
      break;
    }
  }

  const auto in_rows = side_profile(in_guides, n);
  const auto out_rows = side_profile(out_guides, n);
  layout.occupancy.assign(layout.grid.cell_count(), 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      layout.occupancy[layout.grid.idx(i, j)] =
          (i < i0 + ni / 2) ? in_rows[j] : out_rows[j];

  DesignRegion& r = layout.region;
  r.i0 = i0;
  r.j0 = (n - ni) / 2;
  r.ni = ni;
  r.nj = ni;
  r.eps_lo = layout.eps_lo;
  r.p.assign(r.cell_count(), 0.5);
  r.frozen.assign(r.cell_count(), 0);
  if (kind == GeometryKind::Straight) {
    // No free cells: the block reproduces the through guide.
    for (int lj = 0; lj < r.nj; ++lj)
      for (int li = 0; li < r.ni; ++li) {
        const std::size_t c = r.local_idx(li, lj);
        r.p[c] = in_rows[r.j0 + lj] ? 1.0 : 0.0;
        r.frozen[c] = 1;
      }
  } else {
    // Two solid connection stubs per side keep the device attached to its
    // guides whatever the optimizer does.
    for (int lj = 0; lj < r.nj; ++lj) {
      const int gj = r.j0 + lj;
      for (int li : {0, 1}) {
        if (in_rows[gj]) {
          r.p[r.local_idx(li, lj)] = 1.0;
          r.frozen[r.local_idx(li, lj)] = 1;
        }
      }
      for (int li : {ni - 2, ni - 1}) {
        if (out_rows[gj]) {
          r.p[r.local_idx(li, lj)] = 1.0;
          r.frozen[r.local_idx(li, lj)] = 1;
        }
      }
    }
  }

  // Monitor spans reach well into the cladding; input spans stay disjoint.
  const auto clamp_span = [&](int center, int half) {
    const int max_half =
        std::min(center - (t + 2), (n - t - 3) - center);
    return std::min(half, max_half);
  };
  int next_id = 1;
  for (const GuideSpec& g : in_guides) {
    int half = g.half + 14;
    if (in_guides.size() > 1) {
      int gap = n;
      for (const GuideSpec& other : in_guides)
        if (other.center != g.center)
          gap = std::min(gap, std::abs(other.center - g.center));
      half = std::min(half, gap / 2 - 1);
    }
    half = clamp_span(g.center, half);
    for (int m = 0; m < g.mode_count; ++m) {
      Port port;
      port.id = next_id++;
      port.axis = Axis::X;
      port.plane = src_plane;
      port.span_begin = g.center - half;
      port.span_end = g.center + half + 1;
      port.direction = +1;
      port.mode_order = m;
      port.is_source = true;
      layout.ports.push_back(port);
    }
  }
  for (const GuideSpec& g : out_guides) {
    const int half = clamp_span(g.center, g.half + 14);
    for (int m = 0; m < g.mode_count; ++m) {
      Port port;
      port.id = next_id++;
      port.axis = Axis::X;
      port.plane = mon_plane;
      port.span_begin = g.center - half;
      port.span_end = g.center + half + 1;
      port.direction = +1;
      port.mode_order = m;
      port.is_source = false;
      layout.ports.push_back(port);
    }
  }
  for (const Port& port : layout.ports) port.validate(layout.grid, layout.pml);
  return layout;
}

PermittivityMap layout_background(const GeometryLayout& layout,
                                  double wavelength) {
  const double n_eff = effective_core_index(wavelength);
  PermittivityMap map;
  map.grid = layout.grid;
  map.eps_core = n_eff * n_eff;
  map.eps.resize(layout.grid.cell_count());
  for (std::size_t c = 0; c < map.eps.size(); ++c)
    map.eps[c] = layout.occupancy[c] ? map.eps_core : layout.eps_lo;
  map.validate();
  return map;
}

TargetSet default_targets(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::Straight:
      return TargetSet{{{2, 1, 1.0}}};
    case GeometryKind::Mbs:
      return targets_mbs();
    case GeometryKind::Mdm:
      // Physical multiplexer routing: input 1 to TE0, input 2 to TE1.
      return TargetSet{{{3, 1, 1.0}, {4, 2, 1.0}, {4, 1, 0.0}, {3, 2, 0.0}}};
    case GeometryKind::Tritter:
      return targets_tritter();
  }
  fail(ErrorKind::Invalid, "bad geometry kind");
}

DesignProblem make_design_problem(const GeometryLayout& layout,
                                  const std::vector<double>& wavelengths,
                                  const TargetSet& targets, double init_noise,
                                  std::uint64_t seed) {
  require(!wavelengths.empty(), ErrorKind::Config, "no wavelengths");
  require(init_noise >= 0.0 && init_noise <= 0.45, ErrorKind::Config,
          "init_noise must lie in [0, 0.45]");

  DesignProblem pb;
  pb.wavelengths = wavelengths;
  for (double wl : wavelengths)
    pb.backgrounds.push_back(layout_background(layout, wl));
  pb.ports = layout.ports;
  pb.pml = layout.pml;
  pb.region = layout.region;
  pb.targets = targets;

  if (init_noise > 0.0 && layout.kind != GeometryKind::Straight) {
    DesignRegion& r = pb.region;
    Rng rng(seed);
    std::vector<double> raw(r.cell_count());
    for (double& x : raw) x = rng.uniform(-1.0, 1.0);

    // Separable triangular smoothing, radius 3 cells, zero-padded; the
    // result is generic (no mirror symmetry), which the mixing targets need.
    const int rad = 3;
    std::vector<double> tmp(raw.size(), 0.0), smooth(raw.size(), 0.0);
    for (int lj = 0; lj < r.nj; ++lj)
      for (int li = 0; li < r.ni; ++li) {
        double acc = 0.0, wsum = 0.0;
        for (int d = -rad; d <= rad; ++d) {
          if (li + d < 0 || li + d >= r.ni) continue;
          const double w = 1.0 - std::fabs(d) / (rad + 1.0);
          acc += w * raw[r.local_idx(li + d, lj)];
          wsum += w;
        }
        tmp[r.local_idx(li, lj)] = acc / wsum;
      }
    for (int lj = 0; lj < r.nj; ++lj)
      for (int li = 0; li < r.ni; ++li) {
        double acc = 0.0, wsum = 0.0;
        for (int d = -rad; d <= rad; ++d) {
          if (lj + d < 0 || lj + d >= r.nj) continue;
          const double w = 1.0 - std::fabs(d) / (rad + 1.0);
          acc += w * tmp[r.local_idx(li, lj + d)];
          wsum += w;
        }
        smooth[r.local_idx(li, lj)] = acc / wsum;
      }
    double peak = 0.0;
    for (double x : smooth) peak = std::max(peak, std::fabs(x));
    const double scale = peak > 0.0 ? init_noise / peak : 0.0;
    for (std::size_t c = 0; c < r.p.size(); ++c)
      if (!r.frozen[c])
        r.p[c] = std::clamp(r.p[c] + scale * smooth[c], 0.01, 0.99);
  }

  pb.validate();
  return pb;
}

}  // namespace modeforge
