#include "modeforge/modes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "modeforge/errors.hpp"

namespace modeforge {

namespace {

// Number of eigenvalues of tridiag(off, diag, off) strictly below x, via the
// Sturm sequence of LDL^T pivots.
int sturm_count(const std::vector<double>& diag, double off, double x) {
  const double off2 = off * off;
  const double pivmin = std::max(off2, 1.0) * 1e-290;
  int count = 0;
  double q = diag[0] - x;
  for (std::size_t k = 1; k <= diag.size(); ++k) {
    if (q < 0.0) ++count;
    if (k == diag.size()) break;
    double denom = q;
    if (std::fabs(denom) < pivmin) denom = (denom < 0.0) ? -pivmin : pivmin;
    q = diag[k] - x - off2 / denom;
  }
  return count;
}

// Eigenvalue of ascending rank k (0-based) located by bisection on the Sturm
// count; (lo, hi) must bracket it.
double bisect_eigenvalue(const std::vector<double>& diag, double off, double lo,
                         double hi, int k) {
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (sturm_count(diag, off, mid) > k)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= 1e-15 * (std::fabs(lo) + std::fabs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

// Solves (T - shift*I) x = b in place for symmetric tridiagonal T, using
// Gaussian elimination with partial pivoting (one fill-in superdiagonal).
// Near-singular pivots are clamped, which is the desired behaviour for
// inverse iteration at a converged eigenvalue.
void shifted_tridiag_solve(const std::vector<double>& diag, double off,
                           double shift, std::vector<double>& x) {
  const std::size_t n = diag.size();
  std::vector<double> dd(n), du(n, 0.0), du2(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) dd[k] = diag[k] - shift;
  for (std::size_t k = 0; k + 1 < n; ++k) du[k] = off;

  double scale = 0.0;
  for (double v : dd) scale = std::max(scale, std::fabs(v));
  scale = std::max(scale, std::fabs(off));
  const double tiny = std::max(scale, 1.0) * 1e-280;

  for (std::size_t k = 0; k + 1 < n; ++k) {
    double low = off;  // element (k+1, k)
    if (std::fabs(dd[k]) >= std::fabs(low)) {
      if (std::fabs(dd[k]) < tiny) dd[k] = (dd[k] < 0.0) ? -tiny : tiny;
      const double m = low / dd[k];
      dd[k + 1] -= m * du[k];
      x[k + 1] -= m * x[k];
    } else {
      const double m = dd[k] / low;
      dd[k] = low;
      const double old_du = du[k];
      du[k] = dd[k + 1];
      du2[k] = (k + 2 < n) ? du[k + 1] : 0.0;
      dd[k + 1] = old_du - m * du[k];
      du[k + 1] = (k + 2 < n) ? -m * du2[k] : 0.0;
      std::swap(x[k], x[k + 1]);
      x[k + 1] -= m * x[k];
    }
  }

  if (std::fabs(dd[n - 1]) < tiny) dd[n - 1] = (dd[n - 1] < 0.0) ? -tiny : tiny;
  x[n - 1] /= dd[n - 1];
  if (n >= 2) x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / dd[n - 2];
  for (std::size_t k = n; k-- > 2;) {
    const std::size_t i = k - 2;
    x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i];
  }
}

void tridiag_apply(const std::vector<double>& diag, double off,
                   const std::vector<double>& v, std::vector<double>& out) {
  const std::size_t n = diag.size();
  out.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = diag[k] * v[k];
    if (k > 0) s += off * v[k - 1];
    if (k + 1 < n) s += off * v[k + 1];
    out[k] = s;
  }
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

int count_sign_changes(const std::vector<double>& v, double floor) {
  int changes = 0;
  int prev = 0;
  for (double x : v) {
    const int s = (x > floor) ? 1 : (x < -floor ? -1 : 0);
    if (s != 0) {
      if (prev != 0 && s != prev) ++changes;
      prev = s;
    }
  }
  return changes;
}

}  // namespace

std::vector<TridiagMode> tridiag_modes_in_range(const std::vector<double>& diag,
                                                double off, double lo, double hi,
                                                int max_count) {
  require(!diag.empty(), ErrorKind::Invalid, "empty tridiagonal system");
  require(hi > lo, ErrorKind::Invalid, "empty eigenvalue window");
  std::vector<TridiagMode> modes;
  if (max_count <= 0) return modes;

  const int below_hi = sturm_count(diag, off, hi);
  const int below_lo = sturm_count(diag, off, lo);
  const int available = below_hi - below_lo;
  const int want = std::min(max_count, available);

  const std::size_t n = diag.size();
  for (int r = 0; r < want; ++r) {
    const int rank = below_hi - 1 - r;  // ascending index of the r-th largest
    const double ev = bisect_eigenvalue(diag, off, lo, hi, rank);

    // Inverse iteration from a fixed non-degenerate start vector.
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k)
      v[k] = std::sin(0.7 * static_cast<double>(k + 1) + 0.3);
    for (int it = 0; it < 3; ++it) {
      shifted_tridiag_solve(diag, off, ev, v);
      const double nv = l2_norm(v);
      require(nv > 0.0 && std::isfinite(nv), ErrorKind::Solver,
              "inverse iteration breakdown");
      for (double& x : v) x /= nv;
    }

    std::vector<double> tv;
    tridiag_apply(diag, off, v, tv);
    double rq = 0.0;
    for (std::size_t k = 0; k < n; ++k) rq += v[k] * tv[k];
    double resid = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = tv[k] - rq * v[k];
      resid += d * d;
    }
    resid = std::sqrt(resid);

    // Deterministic sign: largest-magnitude sample is positive.
    std::size_t peak = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::fabs(v[k]) > std::fabs(v[peak])) peak = k;
    if (v[peak] < 0.0)
      for (double& x : v) x = -x;

    TridiagMode m;
    m.eigenvalue = rq;
    m.sign_changes = count_sign_changes(v, 1e-9 * std::fabs(v[peak]));
    m.residual = resid;
    m.vec = std::move(v);
    modes.push_back(std::move(m));
  }
  return modes;
}

void IndexProfile1D::validate() const {
  require(n.size() >= 3, ErrorKind::Config, "index profile needs >= 3 samples");
  require(dx > 0.0 && std::isfinite(dx), ErrorKind::Config,
          "index profile pitch must be positive");
  double lo = n[0], hi = n[0];
  for (double v : n) {
    require(std::isfinite(v) && v >= 1.0, ErrorKind::Config,
            "refractive index must be finite and >= 1");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  require(hi > lo, ErrorKind::Config,
          "uniform index profile cannot guide (max n must exceed min n)");
}

std::vector<ModeProfile> solve_slab_modes(const IndexProfile1D& profile,
                                          double wavelength, int count) {
  profile.validate();
  require(count >= 1, ErrorKind::Config, "mode count must be >= 1");
  require(wavelength > 0.0 && std::isfinite(wavelength), ErrorKind::Config,
          "wavelength must be positive");
  const double n_max = *std::max_element(profile.n.begin(), profile.n.end());
  require(profile.dx <= wavelength / (20.0 * n_max), ErrorKind::Config,
          "resolution guard: sample pitch must satisfy dx <= wavelength/(20*n_max)");

  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double inv_dx2 = 1.0 / (profile.dx * profile.dx);
  const std::size_t n = profile.n.size();
  std::vector<double> diag(n);
  for (std::size_t j = 0; j < n; ++j)
    diag[j] = -2.0 * inv_dx2 + k0 * k0 * profile.n[j] * profile.n[j];

  // Guided window: above the edge (cladding) light line, below the core line.
  const double n_edge = std::max(profile.n.front(), profile.n.back());
  const double lo = k0 * k0 * n_edge * n_edge;
  const double hi = k0 * k0 * n_max * n_max;
  if (hi <= lo) return {};

  const auto raw = tridiag_modes_in_range(diag, inv_dx2, lo, hi, count);

  std::vector<ModeProfile> out;
  out.reserve(raw.size());
  const double eig_scale = std::fabs(hi);
  for (const auto& m : raw) {
    require(m.residual <= 1e-8 * eig_scale, ErrorKind::Solver,
            "mode eigensolve residual above tolerance");
    ModeProfile mp;
    mp.n_eff = std::sqrt(m.eigenvalue) / k0;
    mp.mode_order = m.sign_changes;
    mp.power_norm = profile.dx;
    mp.field.resize(m.vec.size());
    const double scale = 1.0 / std::sqrt(profile.dx);
    for (std::size_t k = 0; k < m.vec.size(); ++k) mp.field[k] = m.vec[k] * scale;
    out.push_back(std::move(mp));
  }
  return out;
}

namespace {

double slab_fundamental_neff(double wavelength, double dy) {
  // Layer stack sampled at cell centres; every interface lies exactly on a
  // cell boundary for dy in {1 nm, 0.5 nm}, which keeps the discretization
  // error a smooth function of dy for Richardson extrapolation.
  const double clad = 3.0e-6;
  const auto cells = [&](double len) {
    return static_cast<std::size_t>(std::llround(len / dy));
  };
  IndexProfile1D profile;
  profile.dx = dy;
  profile.n.reserve(cells(2.0 * clad + kSlabThickness));
  for (std::size_t k = 0; k < cells(clad); ++k) profile.n.push_back(kIndexSiO2);
  for (std::size_t k = 0; k < cells(kSlabThickness); ++k)
    profile.n.push_back(kIndexSi);
  for (std::size_t k = 0; k < cells(clad); ++k) profile.n.push_back(kIndexPmma);

  const auto modes = solve_slab_modes(profile, wavelength, 1);
  require(!modes.empty(), ErrorKind::Solver,
          "slab stack unexpectedly has no guided mode");
  return modes[0].n_eff;
}

}  // namespace

double effective_core_index(double wavelength) {
  require(wavelength >= 1.4e-6 && wavelength <= 1.7e-6, ErrorKind::Config,
          "wavelength outside tabulated material range [1.4, 1.7] um");
  const double coarse = slab_fundamental_neff(wavelength, 1.0e-9);
  const double fine = slab_fundamental_neff(wavelength, 0.5e-9);
  const double n_eff = (4.0 * fine - coarse) / 3.0;  // h^2 Richardson step
  require(n_eff > kIndexPmma && n_eff < kIndexSi, ErrorKind::Solver,
          "effective index outside physical bounds");
  return n_eff;
}

}  // namespace modeforge
