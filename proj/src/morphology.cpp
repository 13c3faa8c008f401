#include "morphology.hpp"

#include <cmath>
#include <limits>

namespace modeforge::morph {

namespace {

constexpr double kFar = 1e20;

// One-dimensional squared distance transform (lower envelope of parabolas).
void dt1d(const double* f, double* d, int n, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kFar;
  z[1] = kFar;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
               (2.0 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
          (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kFar;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<Offset> disk_offsets(double radius_cells) {
  std::vector<Offset> se;
  const int r = std::max(0, static_cast<int>(std::ceil(radius_cells)));
  for (int dj = -r; dj <= r; ++dj)
    for (int di = -r; di <= r; ++di)
      if (std::hypot(double(di), double(dj)) < radius_cells)
        se.push_back({di, dj});
  if (se.empty()) se.push_back({0, 0});
  return se;
}

std::vector<double> edt_squared(const std::vector<std::uint8_t>& mask, int nx,
                                int ny) {
  std::vector<double> dist(static_cast<std::size_t>(nx) * ny);
  for (std::size_t c = 0; c < dist.size(); ++c)
    dist[c] = mask[c] ? 0.0 : kFar;

  const int n = std::max(nx, ny);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);

  for (int j = 0; j < ny; ++j) {
    double* row = dist.data() + static_cast<std::size_t>(j) * nx;
    dt1d(row, d.data(), nx, v.data(), z.data());
    for (int i = 0; i < nx; ++i) row[i] = d[i];
  }
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j)
      f[j] = dist[static_cast<std::size_t>(j) * nx + i];
    dt1d(f.data(), d.data(), ny, v.data(), z.data());
    for (int j = 0; j < ny; ++j)
      dist[static_cast<std::size_t>(j) * nx + i] = d[j];
  }
  return dist;
}

std::vector<double> signed_distance_cells(
    const std::vector<std::uint8_t>& solid, int nx, int ny) {
  std::vector<std::uint8_t> voids(solid.size());
  for (std::size_t c = 0; c < solid.size(); ++c) voids[c] = solid[c] ? 0 : 1;
  const std::vector<double> d2_to_void = edt_squared(voids, nx, ny);
  const std::vector<double> d2_to_solid = edt_squared(solid, nx, ny);
  std::vector<double> phi(solid.size());
  for (std::size_t c = 0; c < solid.size(); ++c)
    phi[c] = solid[c] ? std::sqrt(d2_to_void[c]) - 0.5
                      : -(std::sqrt(d2_to_solid[c]) - 0.5);
  return phi;
}

namespace {

std::vector<std::uint8_t> morph_pass(const std::vector<std::uint8_t>& mask,
                                     int nx, int ny,
                                     const std::vector<Offset>& se, bool pad,
                                     bool erosion) {
  std::vector<std::uint8_t> out(mask.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      bool acc = erosion;
      for (const Offset& o : se) {
        const int ii = i + o.di, jj = j + o.dj;
        bool val;
        if (ii < 0 || ii >= nx || jj < 0 || jj >= ny)
          val = pad;
        else
          val = mask[static_cast<std::size_t>(jj) * nx + ii] != 0;
        if (erosion) {
          if (!val) {
            acc = false;
            break;
          }
        } else {
          if (val) {
            acc = true;
            break;
          }
        }
      }
      out[static_cast<std::size_t>(j) * nx + i] = acc ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& mask, int nx,
                                int ny, const std::vector<Offset>& se,
                                bool pad) {
  return morph_pass(mask, nx, ny, se, pad, true);
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int nx,
                                 int ny, const std::vector<Offset>& se,
                                 bool pad) {
  return morph_pass(mask, nx, ny, se, pad, false);
}

std::vector<std::uint8_t> open_phase(const std::vector<std::uint8_t>& mask,
                                     int nx, int ny,
                                     const std::vector<Offset>& se) {
  return dilate(erode(mask, nx, ny, se, true), nx, ny, se, true);
}

int count_components_4(const std::vector<std::uint8_t>& mask, int nx, int ny,
                       std::vector<int>* representatives) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<int> stack;
  int components = 0;
  for (int start = 0; start < nx * ny; ++start) {
    if (!mask[start] || seen[start]) continue;
    ++components;
    if (representatives) representatives->push_back(start);
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      const int i = c % nx, j = c / nx;
      const int nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= nx || q[1] < 0 || q[1] >= ny) continue;
        const int cc = q[1] * nx + q[0];
        if (mask[cc] && !seen[cc]) {
          seen[cc] = 1;
          stack.push_back(cc);
        }
      }
    }
  }
  return components;
}

}  // namespace modeforge::morph
