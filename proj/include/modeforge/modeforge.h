/* C interface to the modeforge core.  Every entry point returns an
 * mf_status; on failure mf_last_error() carries a thread-local message.
 * Pointers returned through out-parameters stay valid until the matching
 * free call (or, for borrowed views, until the owning handle is freed). */
#ifndef MODEFORGE_H
#define MODEFORGE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
  MF_OK = 0,
  MF_E_CONFIG = 2,
  MF_E_SOLVER = 3,
  MF_E_FIT = 4,
  MF_E_IO = 5,
  MF_E_INVALID = 6
} mf_status;

const char* mf_version(void);
const char* mf_last_error(void);

/* ---- permittivity maps ---- */

typedef struct mf_epsmap mf_epsmap;

mf_status mf_epsmap_read(const char* path, mf_epsmap** out);
mf_status mf_epsmap_write(const mf_epsmap* map, const char* path);
mf_status mf_epsmap_info(const mf_epsmap* map, int* nx, int* ny, double* dx_m,
                         double* eps_core);
/* Borrowed row-major view, ny rows of nx values. */
mf_status mf_epsmap_data(const mf_epsmap* map, const double** data);
mf_status mf_epsmap_apply_bias(const mf_epsmap* map, double bias_m,
                               double min_feature_m, mf_epsmap** out);
void mf_epsmap_free(mf_epsmap* map);

mf_status mf_feature_check(const char* eps_path, double min_feature_m,
                           int* pass, int* violations);

/* ---- inverse design ---- */

/* Runs the optimize pipeline from a key=value config file and writes
 * design.eps, trace.csv, smatrix.csv, and resolved.cfg into out_dir. */
mf_status mf_optimize(const char* config_path, const char* out_dir,
                      double* f_final);

/* Worst relative disagreement between the adjoint gradient and central
 * finite differences over `samples` probe cells. */
mf_status mf_validate_gradient(const char* config_path, int samples,
                               double fd_step, double* max_rel_err);

/* S-parameters of a stored design on its canonical geometry's ports. */
mf_status mf_simulate(const char* eps_path, const char* geometry,
                      const double* wavelengths_m, int n_wavelengths,
                      int threads, const char* out_csv);

mf_status mf_sweep_bias(const char* eps_path, const char* geometry,
                        const double* biases_m, int n_biases,
                        const double* wavelengths_m, int n_wavelengths,
                        double min_feature_m, double i0, int threads,
                        const char* out_csv);

/* ---- two-photon interference ---- */

mf_status mf_hom_predict(double eta, double alpha, double i0, double* v);

typedef struct mf_hom_prediction {
  double wavelength_m;
  double eta;
  double alpha;
  double visibility;
} mf_hom_prediction;

mf_status mf_hom_predict_smatrix(const char* smatrix_csv, double i0,
                                 mf_hom_prediction** out, int* count);
void mf_hom_predictions_free(mf_hom_prediction* predictions);

typedef struct mf_hom_sim_params {
  double eta;
  double alpha;
  double i0;
  double width_s;       /* overlap width */
  int gaussian;         /* 0 triangular, 1 gaussian */
  double integration_s; /* per scan point */
  double window_s;      /* coincidence window metadata */
  double baseline;      /* expected far-delay counts per point */
  uint64_t seed;
} mf_hom_sim_params;

mf_status mf_hom_simulate(const mf_hom_sim_params* params,
                          const char* out_csv);

typedef struct mf_hom_fit_result {
  double baseline;
  double visibility;
  double center_s;
  double width_s;
  double se_baseline;
  double se_visibility;
  double se_center_s;
  double se_width_s;
  double chi2;
  int dof;
  int degenerate;
} mf_hom_fit_result;

mf_status mf_hom_fit(const char* scan_csv, mf_hom_fit_result* out);
mf_status mf_hom_fit_report(const char* scan_csv, const char* report_path,
                            mf_hom_fit_result* out);

/* ---- list parsing ---- */

/* Parses "1550", "1500,1550,1600", or "-40:10:40", with an optional
 * nm/um/ps suffix; bare numbers scale by default_scale. The array is
 * heap-allocated; release it with mf_list_free. */
mf_status mf_parse_list(const char* text, double default_scale, double** out,
                        int* count);
void mf_list_free(double* values);

/* ---- plot data ---- */

/* kind "dip" (input scan csv, input2 optional fit report or NULL),
 * "spectrum" (input S-matrix csv), "bias" (input sweep csv), or "trace"
 * (input trace csv). */
mf_status mf_emit_plot(const char* kind, const char* input,
                       const char* input2, const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* MODEFORGE_H */
