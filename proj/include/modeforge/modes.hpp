#pragma once

#include <vector>

namespace modeforge {

// Fixed material indices for the 220 nm silicon-on-insulator stack with PMMA
// top cladding; standard values near 1550 nm.
inline constexpr double kIndexSi = 3.476;
inline constexpr double kIndexSiO2 = 1.444;
inline constexpr double kIndexPmma = 1.48;
inline constexpr double kSlabThickness = 220e-9;

// Piecewise-constant refractive index sampled at cell centres along a
// transverse line.
struct IndexProfile1D {
  std::vector<double> n;
  double dx = 0.0;  // sample pitch, metres

  [[nodiscard]] double extent() const { return dx * static_cast<double>(n.size()); }
  void validate() const;  // guiding possible (max n > min n), all n >= 1
};

// One guided TE mode.  field holds real samples normalized to unit power:
// power_norm * sum(field^2) = 1 with power_norm equal to the sample pitch.
struct ModeProfile {
  int mode_order = 0;
  double n_eff = 0.0;
  std::vector<double> field;
  double power_norm = 0.0;
};

// Guided TE modes of a 1D profile, sorted by descending n_eff, at most
// `count` of them.  Returns an empty vector when no guided mode exists.
// The resolution guard requires dx <= wavelength / (20 * max(n)).
std::vector<ModeProfile> solve_slab_modes(const IndexProfile1D& profile,
                                          double wavelength, int count);

// Effective index of the fundamental TE mode of the 220 nm silicon slab,
// used as the in-plane core index of the 2D reduction.  Valid for
// wavelengths in [1.4, 1.7] micrometres.
double effective_core_index(double wavelength);

// Symmetric tridiagonal eigensolver used by the mode extraction above and by
// the solver's port-mode resolution.  Returns the largest eigenvalues of
// tridiag(off, diag, off) strictly inside (lo, hi), largest first, with
// L2-normalized eigenvectors.
struct TridiagMode {
  double eigenvalue = 0.0;
  std::vector<double> vec;
  int sign_changes = 0;
  double residual = 0.0;
};
std::vector<TridiagMode> tridiag_modes_in_range(const std::vector<double>& diag,
                                                double off, double lo, double hi,
                                                int max_count);

}  // namespace modeforge
