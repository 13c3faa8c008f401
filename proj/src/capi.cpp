#include "modeforge/modeforge.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "modeforge/bias.hpp"
#include "modeforge/config.hpp"
#include "modeforge/design.hpp"
#include "modeforge/errors.hpp"
#include "modeforge/geometry.hpp"
#include "modeforge/hom.hpp"
#include "modeforge/io.hpp"
#include "modeforge/version.hpp"

using namespace modeforge;

struct mf_epsmap {
  PermittivityMap map;
};

namespace {

thread_local std::string g_last_error;

mf_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return MF_E_CONFIG;
    case ErrorKind::Solver: return MF_E_SOLVER;
    case ErrorKind::Fit: return MF_E_FIT;
    case ErrorKind::Io: return MF_E_IO;
    case ErrorKind::Invalid: return MF_E_INVALID;
  }
  return MF_E_INVALID;
}

template <typename F>
mf_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return MF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MF_E_INVALID;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MF_E_INVALID;
  }
}

void need(bool ok, const char* what) {
  require(ok, ErrorKind::Invalid, what);
}

std::vector<double> span_of(const double* values, int n, const char* what) {
  need(values != nullptr && n > 0, what);
  return std::vector<double>(values, values + n);
}

}  // namespace

extern "C" {

const char* mf_version(void) { return kVersion; }

const char* mf_last_error(void) { return g_last_error.c_str(); }

mf_status mf_epsmap_read(const char* path, mf_epsmap** out) {
  return guarded([&] {
    need(path && out, "null argument");
    *out = new mf_epsmap{read_epsmap(path)};
  });
}

mf_status mf_epsmap_write(const mf_epsmap* map, const char* path) {
  return guarded([&] {
    need(map && path, "null argument");
    write_epsmap(map->map, path);
  });
}

mf_status mf_epsmap_info(const mf_epsmap* map, int* nx, int* ny, double* dx_m,
                         double* eps_core) {
  return guarded([&] {
    need(map != nullptr, "null map");
    if (nx) *nx = map->map.grid.nx;
    if (ny) *ny = map->map.grid.ny;
    if (dx_m) *dx_m = map->map.grid.dx;
    if (eps_core) *eps_core = map->map.eps_core;
  });
}

mf_status mf_epsmap_data(const mf_epsmap* map, const double** data) {
  return guarded([&] {
    need(map && data, "null argument");
    *data = map->map.eps.data();
  });
}

mf_status mf_epsmap_apply_bias(const mf_epsmap* map, double bias_m,
                               double min_feature_m, mf_epsmap** out) {
  return guarded([&] {
    need(map && out, "null argument");
    *out = new mf_epsmap{apply_bias(map->map, bias_m, min_feature_m)};
  });
}

void mf_epsmap_free(mf_epsmap* map) { delete map; }

mf_status mf_feature_check(const char* eps_path, double min_feature_m,
                           int* pass, int* violations) {
  return guarded([&] {
    need(eps_path != nullptr, "null path");
    const FeatureReport report =
        feature_size_check(read_epsmap(eps_path), min_feature_m);
    if (pass) *pass = report.pass ? 1 : 0;
    if (violations)
      *violations = report.solid_violations + report.void_violations;
  });
}

mf_status mf_optimize(const char* config_path, const char* out_dir,
                      double* f_final) {
  return guarded([&] {
    need(config_path && out_dir, "null argument");
    const RunSummary summary =
        run_optimize(parse_config_file(config_path), out_dir);
    if (f_final) *f_final = summary.f_final;
  });
}

mf_status mf_validate_gradient(const char* config_path, int samples,
                               double fd_step, double* max_rel_err) {
  return guarded([&] {
    need(config_path && max_rel_err, "null argument");
    const RunConfig cfg = parse_config_file(config_path);
    *max_rel_err = validate_gradient(build_problem(cfg),
                                     optimizer_config(cfg), samples, fd_step);
  });
}

mf_status mf_simulate(const char* eps_path, const char* geometry,
                      const double* wavelengths_m, int n_wavelengths,
                      int threads, const char* out_csv) {
  return guarded([&] {
    need(eps_path && geometry && out_csv, "null argument");
    const auto wls = span_of(wavelengths_m, n_wavelengths, "no wavelengths");
    const PermittivityMap map = read_epsmap(eps_path);
    const GeometryLayout layout = make_layout(
        parse_geometry(geometry), map.grid.nx * map.grid.dx, map.grid.dx);
    require(layout.grid.nx == map.grid.nx && layout.grid.ny == map.grid.ny,
            ErrorKind::Config, "design grid does not match the geometry");
    write_smatrix_csv(
        compute_smatrix(map, layout.ports, wls, layout.pml, threads),
        out_csv);
  });
}

mf_status mf_sweep_bias(const char* eps_path, const char* geometry,
                        const double* biases_m, int n_biases,
                        const double* wavelengths_m, int n_wavelengths,
                        double min_feature_m, double i0, int threads,
                        const char* out_csv) {
  return guarded([&] {
    need(eps_path && geometry && out_csv, "null argument");
    const auto biases = span_of(biases_m, n_biases, "no biases");
    const auto wls = span_of(wavelengths_m, n_wavelengths, "no wavelengths");
    const auto points =
        sweep_bias(read_epsmap(eps_path), parse_geometry(geometry), biases,
                   wls, min_feature_m, i0, threads);
    write_sweep_csv(points, out_csv);
  });
}

mf_status mf_hom_predict(double eta, double alpha, double i0, double* v) {
  return guarded([&] {
    need(v != nullptr, "null output");
    *v = predict_visibility(beamsplitter_from_eta(eta, alpha), i0);
  });
}

mf_status mf_hom_predict_smatrix(const char* smatrix_csv, double i0,
                                 mf_hom_prediction** out, int* count) {
  return guarded([&] {
    need(smatrix_csv && out && count, "null argument");
    const auto mats = read_smatrix_csv(smatrix_csv);
    std::vector<mf_hom_prediction> rows;
    for (const ScatteringMatrix& s : mats) {
      const BeamsplitterMatrix bs = from_smatrix(s);
      rows.push_back({s.wavelength, effective_splitting_ratio(bs), bs.alpha(),
                      predict_visibility(bs, i0)});
    }
    auto* buf = new mf_hom_prediction[rows.size()];
    std::memcpy(buf, rows.data(), rows.size() * sizeof(mf_hom_prediction));
    *out = buf;
    *count = static_cast<int>(rows.size());
  });
}

void mf_hom_predictions_free(mf_hom_prediction* predictions) {
  delete[] predictions;
}

mf_status mf_hom_simulate(const mf_hom_sim_params* params,
                          const char* out_csv) {
  return guarded([&] {
    need(params && out_csv, "null argument");
    const BeamsplitterMatrix bs =
        beamsplitter_from_eta(params->eta, params->alpha);
    OverlapModel overlap;
    overlap.kind = params->gaussian ? OverlapModel::Kind::Gaussian
                                    : OverlapModel::Kind::Triangular;
    overlap.i0 = params->i0;
    overlap.width = params->width_s;
    require(params->baseline > 0.0, ErrorKind::Config,
            "baseline must be positive");
    require(params->integration_s > 0.0, ErrorKind::Config,
            "integration time must be positive");
    const double p_inf = bs.r1 * bs.r1 * bs.r2 * bs.r2 +
                         bs.t1 * bs.t1 * bs.t2 * bs.t2;
    require(p_inf > 0.0, ErrorKind::Invalid,
            "baseline undefined: distinguishable coincidence rate is zero");
    const double rate = params->baseline / (params->integration_s * p_inf);
    const CoincidenceScan scan =
        simulate_scan(bs, overlap, scan_delays_protocol(),
                      params->integration_s, params->window_s, rate,
                      params->seed);
    write_scan_csv(scan, out_csv);
  });
}

namespace {

mf_hom_fit_result to_c(const DipFit& fit) {
  mf_hom_fit_result out;
  out.baseline = fit.baseline;
  out.visibility = fit.visibility;
  out.center_s = fit.center;
  out.width_s = fit.width;
  out.se_baseline = fit.se_baseline;
  out.se_visibility = fit.se_visibility;
  out.se_center_s = fit.se_center;
  out.se_width_s = fit.se_width;
  out.chi2 = fit.chi2;
  out.dof = fit.dof;
  out.degenerate = fit.degenerate ? 1 : 0;
  return out;
}

}  // namespace

mf_status mf_hom_fit(const char* scan_csv, mf_hom_fit_result* out) {
  return guarded([&] {
    need(scan_csv && out, "null argument");
    *out = to_c(fit_dip(ingest_scan(scan_csv)));
  });
}

mf_status mf_hom_fit_report(const char* scan_csv, const char* report_path,
                            mf_hom_fit_result* out) {
  return guarded([&] {
    need(scan_csv && report_path, "null argument");
    const DipFit fit = fit_dip(ingest_scan(scan_csv));
    write_fit_report(fit, report_path);
    if (out) *out = to_c(fit);
  });
}

mf_status mf_parse_list(const char* text, double default_scale, double** out,
                        int* count) {
  return guarded([&] {
    need(text && out && count, "null argument");
    const std::vector<double> values =
        parse_number_list(text, default_scale);
    auto* buf = new double[values.size()];
    std::memcpy(buf, values.data(), values.size() * sizeof(double));
    *out = buf;
    *count = static_cast<int>(values.size());
  });
}

void mf_list_free(double* values) { delete[] values; }

mf_status mf_emit_plot(const char* kind, const char* input,
                       const char* input2, const char* out_csv) {
  return guarded([&] {
    need(kind && input && out_csv, "null argument");
    emit_plot(kind, input, input2 ? input2 : "", out_csv);
  });
}

}  // extern "C"
