#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modeforge/fdfd.hpp"

namespace modeforge {

// Transfer-matrix parameters of a general (lossy, unbalanced, asymmetric)
// beamsplitter: entries t1, r1*e^{i*theta1}, r2*e^{i*theta2}, t2*e^{i*theta3}
// map inputs (E1, E2) to outputs (E3, E4).
struct BeamsplitterMatrix {
  double t1 = 0.0, t2 = 0.0, r1 = 0.0, r2 = 0.0;
  double theta1 = 0.0, theta2 = 0.0, theta3 = 0.0;

  [[nodiscard]] double alpha() const;  // theta1+theta2-theta3 in (-pi, pi]
  [[nodiscard]] double r0() const;     // sqrt(r1*r2)
  [[nodiscard]] double t0() const;     // sqrt(t1*t2)
  void validate() const;  // amplitudes in [0,1], t_i^2 + r_i^2 <= 1
};

struct OverlapModel {
  enum class Kind { Triangular, Gaussian };
  Kind kind = Kind::Triangular;
  double i0 = 1.0;     // peak overlap, in [0, 1]
  double width = 2.3e-12;  // seconds
  void validate() const;
};

struct ScanPoint {
  double tau = 0.0;  // seconds
  long long counts = 0;
};

struct CoincidenceScan {
  std::vector<ScanPoint> points;
  double integration_time = 0.0;   // seconds per point
  double coincidence_window = 0.0;  // seconds, carried as metadata
  void validate() const;  // strictly increasing tau, counts >= 0
};

struct DipFit {
  double baseline = 0.0;
  double visibility = 0.0;
  double center = 0.0;  // seconds
  double width = 0.0;   // seconds
  double se_baseline = 0.0, se_visibility = 0.0, se_center = 0.0, se_width = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  bool degenerate = false;  // flat scan, visibility pinned to 0
};

// Extraction from a 4-entry S-matrix (monitors 3,4 x sources 1,2), with the
// global phase rotated so S31 is real and nonnegative.
BeamsplitterMatrix from_smatrix(const ScatteringMatrix& s);

// Balanced-loss device with a given effective splitting ratio and phase sum.
BeamsplitterMatrix beamsplitter_from_eta(double eta, double alpha);

double effective_splitting_ratio(const BeamsplitterMatrix& bs);
double overlap_value(const OverlapModel& model, double tau);
double coincidence_probability(const BeamsplitterMatrix& bs,
                               const OverlapModel& overlap, double tau);
double predict_visibility(const BeamsplitterMatrix& bs, double i0);

// The synthetic-experiment delay schedule: 0.1 ps coarse steps across a
// 10 ps window with 13 fine points spaced 0.033 ps around zero delay,
// 109 points total, ascending, in seconds.
std::vector<double> scan_delays_protocol();

// Poisson-sampled coincidence scan; mean counts at delay tau equal
// rate * integration_time * P(tau).  Identical seeds give identical scans.
CoincidenceScan simulate_scan(const BeamsplitterMatrix& bs,
                              const OverlapModel& overlap,
                              const std::vector<double>& delays,
                              double integration_time,
                              double coincidence_window, double rate,
                              std::uint64_t seed);

// Weighted least-squares triangular dip fit with model-based Poisson
// weights; standard errors come from the fit covariance.
DipFit fit_dip(const CoincidenceScan& scan);

// Reads a scan CSV; parse errors carry line numbers.
CoincidenceScan ingest_scan(const std::string& path);

}  // namespace modeforge
