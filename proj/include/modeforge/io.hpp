#pragma once

#include <string>
#include <vector>

#include "modeforge/bias.hpp"
#include "modeforge/design.hpp"
#include "modeforge/fdfd.hpp"
#include "modeforge/grid.hpp"
#include "modeforge/hom.hpp"
#include "modeforge/modes.hpp"

namespace modeforge {

// Shortest decimal form that round-trips to the identical double.
std::string format_double(double v);

// Permittivity maps travel as a small text header plus a raw float64
// sidecar at path + ".bin" (row-major, native little-endian).  Writing then
// reading reproduces the map bit for bit.
void write_epsmap(const PermittivityMap& map, const std::string& path);
PermittivityMap read_epsmap(const std::string& path);

// Columns: wavelength_nm,source_port,monitor_port,re,im,mag2
void write_smatrix_csv(const std::vector<ScatteringMatrix>& matrices,
                       const std::string& path);
std::vector<ScatteringMatrix> read_smatrix_csv(const std::string& path);

// Two metadata comments then tau_ps,counts rows.
void write_scan_csv(const CoincidenceScan& scan, const std::string& path);
CoincidenceScan read_scan_csv(const std::string& path);

// Columns: iter,stage,f,max_residual,wall_ms
void write_trace_csv(const OptimizationTrace& trace, const std::string& path);

// Columns: bias_nm,wavelength_nm,eta_eff,alpha_rad,v_max; failed points
// carry nan values.
void write_sweep_csv(const std::vector<BiasSweepPoint>& rows,
                     const std::string& path);
std::vector<BiasSweepPoint> read_sweep_csv(const std::string& path);

// key=value dip-fit report, one entry per line.
void write_fit_report(const DipFit& fit, const std::string& path);
DipFit read_fit_report(const std::string& path);

// Header comment with n_eff, then x_nm,field rows.
void write_mode_profile_csv(const ModeProfile& mode, double dx,
                            const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Plot-ready CSV emission.  kind "dip": scan plus optional fit report
// (input2, empty fits on the fly) becomes tau_ps,counts,fit rows.
// kind "spectrum": per-wavelength S-matrices become wavelength_nm plus one
// |S|^2 column per entry.  kind "bias" and kind "trace" pass the sweep and
// trace CSVs through unchanged after validating their shape.
void emit_plot(const std::string& kind, const std::string& input,
               const std::string& input2, const std::string& out_path);

}  // namespace modeforge
