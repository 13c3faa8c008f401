#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "modeforge/bias.hpp"
#include "modeforge/errors.hpp"
#include "modeforge/fdfd.hpp"
#include "modeforge/geometry.hpp"
#include "modeforge/hom.hpp"
#include "modeforge/modes.hpp"
#include "support/oracles.hpp"

using namespace modeforge;

namespace {

constexpr double kLo = 2.2;
constexpr double kHi = 7.7;

// Digitized disk of the given radius centred on cell (c, c).
PermittivityMap disk_map(int n, double dx, double radius) {
  PermittivityMap map;
  map.grid = Grid2D{n, n, dx};
  map.eps_core = kHi;
  map.eps.resize(map.grid.cell_count());
  const double c = (n - 1) / 2.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double d = std::hypot((i - c) * dx, (j - c) * dx);
      map.eps[map.grid.idx(i, j)] = d <= radius ? kHi : kLo;
    }
  return map;
}

int solid_count(const PermittivityMap& map) {
  const double lo = *std::min_element(map.eps.begin(), map.eps.end());
  const double mid = 0.5 * (lo + map.eps_core);
  int n = 0;
  for (double e : map.eps) n += e >= mid ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("zero bias is a bitwise identity") {
  const PermittivityMap map = disk_map(64, 10e-9, 150e-9);
  const PermittivityMap out = apply_bias(map, 0.0, 120e-9);
  CHECK(out.eps == map.eps);
  CHECK(out.eps_core == map.eps_core);
  CHECK(out.grid.nx == map.grid.nx);
  // Zero bias skips even the guard, so a zero minimum feature is fine here.
  const PermittivityMap out2 = apply_bias(map, 0.0, 0.0);
  CHECK(out2.eps == map.eps);
}

TEST_CASE("bias guard rejects feature-erasing magnitudes") {
  const PermittivityMap map = disk_map(64, 10e-9, 150e-9);
  CHECK_THROWS_AS((void)apply_bias(map, 51e-9, 100e-9), Error);
  CHECK_THROWS_AS((void)apply_bias(map, -51e-9, 100e-9), Error);
  CHECK_THROWS_AS(
      (void)apply_bias(map, std::numeric_limits<double>::quiet_NaN(), 100e-9),
      Error);
  CHECK_THROWS_AS((void)apply_bias(map, 10e-9, 0.0), Error);
  try {
    (void)apply_bias(map, 51e-9, 100e-9);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  // Exactly half the feature floor is still allowed.
  (void)apply_bias(map, 50e-9, 100e-9);
}

TEST_CASE("bias grows and shrinks a disk by the stated amount") {
  const int n = 101;
  const double dx = 10e-9, R = 200e-9;
  const PermittivityMap map = disk_map(n, dx, R);
  const double c = (n - 1) / 2.0;

  for (double bias : {55e-9, -55e-9}) {
    CAPTURE(bias);
    const PermittivityMap out = apply_bias(map, bias, 120e-9);
    const double target = R + bias;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double d = std::hypot((i - c) * dx, (j - c) * dx);
        const double e = out.at(i, j);
        CHECK((e == kHi || e == kLo));  // output stays binary
        if (d <= target - 1.5 * dx) CHECK(e == kHi);
        if (d >= target + 1.5 * dx) CHECK(e == kLo);
      }
  }
}

TEST_CASE("solid area is monotone in the bias") {
  const PermittivityMap map = disk_map(101, 10e-9, 200e-9);
  int prev = -1;
  for (double bias : {-50e-9, -25e-9, 0.0, 25e-9, 50e-9}) {
    const int area = solid_count(apply_bias(map, bias, 120e-9));
    CHECK(area >= prev);
    prev = area;
  }
  CHECK(prev > solid_count(apply_bias(map, -50e-9, 120e-9)));
}

TEST_CASE("grow then shrink restores the mask away from the boundary") {
  const int n = 101;
  const double dx = 10e-9, R = 200e-9, b = 40e-9;
  const PermittivityMap map = disk_map(n, dx, R);
  const PermittivityMap round = apply_bias(apply_bias(map, b, 120e-9), -b, 120e-9);
  const double c = (n - 1) / 2.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double d = std::hypot((i - c) * dx, (j - c) * dx);
      if (std::fabs(d - R) > 2.5 * dx)
        CHECK(round.at(i, j) == map.at(i, j));
    }
}

TEST_CASE("bias sweep composes the public primitives") {
  // At zero bias and the design's own wavelength the sweep point must equal
  // the hand-assembled pipeline bit for bit.
  const GeometryLayout lay = make_layout(GeometryKind::Mbs, 5e-6, 50e-9);
  const PermittivityMap design = layout_background(lay, 1550e-9);
  const double i0 = 0.93;
  const auto pts =
      sweep_bias(design, GeometryKind::Mbs, {0.0}, {1550e-9}, 100e-9, i0, 1);
  REQUIRE(pts.size() == 1);
  REQUIRE(!pts[0].failed);

  const PermittivityMap biased = apply_bias(design, 0.0, 100e-9);
  const double lo = *std::min_element(design.eps.begin(), design.eps.end());
  const double mid = 0.5 * (lo + biased.eps_core);
  PermittivityMap at_wl;
  at_wl.grid = design.grid;
  const double n_eff = effective_core_index(1550e-9);
  at_wl.eps_core = n_eff * n_eff;
  at_wl.eps.resize(biased.eps.size());
  for (std::size_t cell = 0; cell < biased.eps.size(); ++cell)
    at_wl.eps[cell] = biased.eps[cell] >= mid ? at_wl.eps_core : lo;
  const auto mats = compute_smatrix(at_wl, lay.ports, {1550e-9}, lay.pml, 1);
  const BeamsplitterMatrix bs = from_smatrix(mats.front());

  CHECK(pts[0].eta_eff == effective_splitting_ratio(bs));
  CHECK(pts[0].alpha == bs.alpha());
  CHECK(pts[0].v_max == predict_visibility(bs, i0));
  REQUIRE(pts[0].smatrix.entries.size() == mats.front().entries.size());
  for (std::size_t k = 0; k < mats.front().entries.size(); ++k)
    CHECK(pts[0].smatrix.entries[k] == mats.front().entries[k]);
}

TEST_CASE("bias sweep is deterministic and ordered bias-major") {
  const GeometryLayout lay = make_layout(GeometryKind::Mbs, 5e-6, 50e-9);
  const PermittivityMap design = layout_background(lay, 1550e-9);
  const std::vector<double> biases = {-20e-9, 0.0, 20e-9};
  const std::vector<double> wls = {1500e-9, 1550e-9};
  const auto a = sweep_bias(design, GeometryKind::Mbs, biases, wls, 100e-9,
                            0.93, 1);
  const auto b = sweep_bias(design, GeometryKind::Mbs, biases, wls, 100e-9,
                            0.93, 3);
  REQUIRE(a.size() == 6);
  REQUIRE(b.size() == 6);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].bias == biases[k / 2]);
    CHECK(a[k].wavelength == wls[k % 2]);
    CHECK(a[k].failed == b[k].failed);
    CHECK(a[k].eta_eff == b[k].eta_eff);
    CHECK(a[k].alpha == b[k].alpha);
    CHECK(a[k].v_max == b[k].v_max);
    REQUIRE(a[k].smatrix.entries.size() == b[k].smatrix.entries.size());
    for (std::size_t e = 0; e < a[k].smatrix.entries.size(); ++e)
      CHECK(a[k].smatrix.entries[e] == b[k].smatrix.entries[e]);
  }
}

TEST_CASE("a sweep point that cannot resolve modes is recorded, not fatal") {
  // All-cladding design: no guided modes anywhere, every point fails softly.
  PermittivityMap design;
  design.grid = Grid2D{100, 100, 50e-9};
  design.eps_core = kHi;
  design.eps.assign(design.grid.cell_count(), kLo);
  const auto pts = sweep_bias(design, GeometryKind::Mbs, {0.0, 20e-9},
                              {1550e-9}, 100e-9, 0.93, 1);
  REQUIRE(pts.size() == 2);
  for (const auto& pt : pts) {
    CHECK(pt.failed);
    CHECK(!pt.error.empty());
    CHECK(pt.wavelength == 1550e-9);
  }
}

TEST_CASE("bias sweep input validation") {
  const GeometryLayout lay = make_layout(GeometryKind::Mbs, 5e-6, 50e-9);
  const PermittivityMap design = layout_background(lay, 1550e-9);
  CHECK_THROWS_AS((void)sweep_bias(design, GeometryKind::Mbs, {}, {1550e-9},
                                   100e-9, 0.93, 1),
                  Error);
  CHECK_THROWS_AS((void)sweep_bias(design, GeometryKind::Mbs, {0.0}, {},
                                   100e-9, 0.93, 1),
                  Error);
  CHECK_THROWS_AS((void)sweep_bias(design, GeometryKind::Straight, {0.0},
                                   {1550e-9}, 100e-9, 0.93, 1),
                  Error);
  CHECK_THROWS_AS((void)sweep_bias(design, GeometryKind::Tritter, {0.0},
                                   {1550e-9}, 100e-9, 0.93, 1),
                  Error);
  PermittivityMap offgrid = design;
  offgrid.grid.ny = 90;
  offgrid.eps.resize(offgrid.grid.cell_count());
  CHECK_THROWS_AS((void)sweep_bias(offgrid, GeometryKind::Mbs, {0.0},
                                   {1550e-9}, 100e-9, 0.93, 1),
                  Error);
}
