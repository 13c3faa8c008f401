// Command-line front end.  Links against the C API only; every numeric
// operation happens behind modeforge.h so this file is pure plumbing.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "modeforge/modeforge.h"

namespace {

// Owning wrapper for arrays returned by mf_parse_list.
struct NumberList {
  double* data = nullptr;
  int count = 0;
  NumberList() = default;
  NumberList(const NumberList&) = delete;
  NumberList& operator=(const NumberList&) = delete;
  ~NumberList() { mf_list_free(data); }
};

int report(mf_status status) {
  if (status != MF_OK)
    std::fprintf(stderr, "modeforge: error: %s\n", mf_last_error());
  return static_cast<int>(status);
}

// Parses a list option ("1550", "1500,1550,1600", "-5:1:5nm"); bare
// numbers scale by default_scale.
bool parse_list(const std::string& text, double default_scale,
                NumberList& out, int& rc) {
  const mf_status status =
      mf_parse_list(text.c_str(), default_scale, &out.data, &out.count);
  if (status != MF_OK) rc = report(status);
  return status == MF_OK;
}

bool parse_length(const std::string& text, double& out, int& rc) {
  NumberList list;
  if (!parse_list(text, 1e-9, list, rc)) return false;
  if (list.count != 1) {
    std::fprintf(stderr, "modeforge: error: expected one value, got %d\n",
                 list.count);
    rc = static_cast<int>(MF_E_CONFIG);
    return false;
  }
  out = list.data[0];
  return true;
}

int default_threads() {
  const char* env = std::getenv("MODEFORGE_THREADS");
  if (env && *env) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 0;  // resolved to the logical core count downstream
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modeforge: inverse design of transverse-mode photonic "
               "circuits and two-photon interference analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mf_version()));

  int rc = 0;

  // optimize
  auto* optimize = app.add_subcommand(
      "optimize", "Run the two-stage inverse-design pipeline from a config");
  std::string opt_config, opt_out;
  optimize->add_option("--config", opt_config, "key=value config file")
      ->required();
  optimize->add_option("--out", opt_out, "output directory")->required();
  optimize->callback([&] {
    double f_final = 0.0;
    rc = report(mf_optimize(opt_config.c_str(), opt_out.c_str(), &f_final));
    if (rc == 0) std::printf("f_final = %.6e\n", f_final);
  });

  // validate-gradient
  auto* vg = app.add_subcommand(
      "validate-gradient",
      "Compare the adjoint gradient against finite differences");
  std::string vg_config;
  int vg_samples = 20;
  double vg_step = 1e-4;
  vg->add_option("--config", vg_config, "key=value config file")->required();
  vg->add_option("--samples", vg_samples, "number of probed cells");
  vg->add_option("--fd-step", vg_step, "central-difference step");
  vg->callback([&] {
    double err = 0.0;
    rc = report(
        mf_validate_gradient(vg_config.c_str(), vg_samples, vg_step, &err));
    if (rc == 0) std::printf("max_rel_err = %.6e\n", err);
  });

  // simulate
  auto* sim = app.add_subcommand(
      "simulate", "S-parameters of a stored design on its geometry's ports");
  std::string sim_design, sim_geometry = "mbs", sim_wls, sim_out;
  int sim_threads = default_threads();
  sim->add_option("--design", sim_design, "permittivity map")->required();
  sim->add_option("--geometry", sim_geometry,
                  "straight | mbs | mdm | tritter");
  sim->add_option("--wavelengths", sim_wls, "list or first:step:last, nm")
      ->required();
  sim->add_option("--threads", sim_threads, "worker count, 0 = all cores");
  sim->add_option("--out", sim_out, "output S-matrix CSV")->required();
  sim->callback([&] {
    NumberList wls;
    if (!parse_list(sim_wls, 1e-9, wls, rc)) return;
    rc = report(mf_simulate(sim_design.c_str(), sim_geometry.c_str(),
                            wls.data, wls.count, sim_threads,
                            sim_out.c_str()));
  });

  // sweep-bias
  auto* sweep = app.add_subcommand(
      "sweep-bias", "Re-simulate a design over a fabrication-bias lattice");
  std::string sw_design, sw_geometry = "mbs", sw_biases, sw_wls;
  std::string sw_feature = "80nm", sw_out;
  double sw_i0 = 1.0;
  int sw_threads = default_threads();
  sweep->add_option("--design", sw_design, "permittivity map")->required();
  sweep->add_option("--geometry", sw_geometry, "mbs | mdm");
  sweep->add_option("--biases", sw_biases, "list or first:step:last, nm")
      ->required();
  sweep->add_option("--wavelengths", sw_wls, "list or first:step:last, nm")
      ->required();
  sweep->add_option("--min-feature", sw_feature, "bias cap, nm");
  sweep->add_option("--i0", sw_i0, "photon overlap used for v_max");
  sweep->add_option("--threads", sw_threads, "worker count, 0 = all cores");
  sweep->add_option("--out", sw_out, "output sweep CSV")->required();
  sweep->callback([&] {
    NumberList biases, wls;
    double feature = 0.0;
    if (!parse_list(sw_biases, 1e-9, biases, rc)) return;
    if (!parse_list(sw_wls, 1e-9, wls, rc)) return;
    if (!parse_length(sw_feature, feature, rc)) return;
    rc = report(mf_sweep_bias(sw_design.c_str(), sw_geometry.c_str(),
                              biases.data, biases.count, wls.data, wls.count,
                              feature, sw_i0, sw_threads, sw_out.c_str()));
  });

  // feature-check
  auto* fc = app.add_subcommand(
      "feature-check", "Check a design against a minimum feature size");
  std::string fc_design, fc_feature;
  fc->add_option("--design", fc_design, "permittivity map")->required();
  fc->add_option("--min-feature", fc_feature, "feature size, nm")->required();
  fc->callback([&] {
    double feature = 0.0;
    if (!parse_length(fc_feature, feature, rc)) return;
    int pass = 0, violations = 0;
    rc = report(
        mf_feature_check(fc_design.c_str(), feature, &pass, &violations));
    if (rc != 0) return;
    if (pass) {
      std::printf("pass\n");
    } else {
      std::printf("fail (%d violations)\n", violations);
      rc = 1;  // check verdict, distinct from the typed error codes
    }
  });

  // hom predict | simulate | fit
  auto* hom = app.add_subcommand("hom", "Two-photon interference analysis");
  hom->require_subcommand(1);

  auto* predict = hom->add_subcommand(
      "predict", "Visibility from (eta, alpha) or from an S-matrix CSV");
  std::string pr_smatrix;
  double pr_eta = 0.5, pr_alpha = 3.141592653589793, pr_i0 = 1.0;
  auto* pr_eta_opt = predict->add_option("--eta", pr_eta,
                                         "effective splitting ratio");
  predict->add_option("--alpha", pr_alpha, "phase sum, radians");
  predict->add_option("--i0", pr_i0, "photon overlap at zero delay");
  auto* pr_sm_opt = predict->add_option("--smatrix", pr_smatrix,
                                        "per-wavelength S-matrix CSV");
  pr_sm_opt->excludes(pr_eta_opt);
  predict->callback([&] {
    if (pr_sm_opt->count() > 0) {
      mf_hom_prediction* rows = nullptr;
      int count = 0;
      rc = report(
          mf_hom_predict_smatrix(pr_smatrix.c_str(), pr_i0, &rows, &count));
      if (rc != 0) return;
      std::printf("wavelength_nm,eta,alpha_rad,v\n");
      for (int k = 0; k < count; ++k)
        std::printf("%.6f,%.6f,%.6f,%.6f\n", rows[k].wavelength_m * 1e9,
                    rows[k].eta, rows[k].alpha, rows[k].visibility);
      mf_hom_predictions_free(rows);
      return;
    }
    double v = 0.0;
    rc = report(mf_hom_predict(pr_eta, pr_alpha, pr_i0, &v));
    if (rc == 0) std::printf("V = %.6f\n", v);
  });

  auto* hsim = hom->add_subcommand(
      "simulate", "Synthetic Poisson coincidence scan over the delay protocol");
  mf_hom_sim_params hp;
  hp.eta = 0.5;
  hp.alpha = 3.141592653589793;
  hp.i0 = 1.0;
  hp.width_s = 2.3e-12;
  hp.gaussian = 0;
  hp.integration_s = 1.0;
  hp.window_s = 1e-9;
  hp.baseline = 3500.0;
  hp.seed = 7;
  std::string hs_width = "2.3ps", hs_out;
  double hs_window_ns = 1.0;
  bool hs_gaussian = false;
  hsim->add_option("--eta", hp.eta, "effective splitting ratio")->required();
  hsim->add_option("--alpha", hp.alpha, "phase sum, radians");
  hsim->add_option("--i0", hp.i0, "photon overlap at zero delay");
  hsim->add_option("--width", hs_width, "overlap width, ps");
  hsim->add_flag("--gaussian", hs_gaussian,
                 "gaussian overlap instead of triangular");
  hsim->add_option("--integration", hp.integration_s,
                   "integration time per point, seconds");
  hsim->add_option("--window-ns", hs_window_ns,
                   "coincidence window metadata, ns");
  hsim->add_option("--baseline", hp.baseline,
                   "expected far-delay counts per point");
  hsim->add_option("--seed", hp.seed, "RNG seed");
  hsim->add_option("--out", hs_out, "output scan CSV")->required();
  hsim->callback([&] {
    NumberList list;
    if (!parse_list(hs_width, 1e-12, list, rc)) return;
    if (list.count != 1) {
      std::fprintf(stderr, "modeforge: error: --width takes one value\n");
      rc = static_cast<int>(MF_E_CONFIG);
      return;
    }
    hp.width_s = list.data[0];
    hp.gaussian = hs_gaussian ? 1 : 0;
    hp.window_s = hs_window_ns * 1e-9;
    rc = report(mf_hom_simulate(&hp, hs_out.c_str()));
  });

  auto* hfit = hom->add_subcommand(
      "fit", "Fit the triangular dip model to a coincidence scan");
  std::string hf_scan, hf_report;
  hfit->add_option("--scan", hf_scan, "scan CSV")->required();
  hfit->add_option("--report", hf_report, "also write a fit report file");
  hfit->callback([&] {
    mf_hom_fit_result fit;
    rc = report(hf_report.empty()
                    ? mf_hom_fit(hf_scan.c_str(), &fit)
                    : mf_hom_fit_report(hf_scan.c_str(), hf_report.c_str(),
                                        &fit));
    if (rc != 0) return;
    std::printf("baseline = %.6f +- %.6f\n", fit.baseline, fit.se_baseline);
    std::printf("visibility = %.6f +- %.6f\n", fit.visibility,
                fit.se_visibility);
    std::printf("center_ps = %.6f +- %.6f\n", fit.center_s * 1e12,
                fit.se_center_s * 1e12);
    std::printf("width_ps = %.6f +- %.6f\n", fit.width_s * 1e12,
                fit.se_width_s * 1e12);
    std::printf("chi2 = %.6f dof = %d\n", fit.chi2, fit.dof);
    if (fit.degenerate) std::printf("degenerate = 1\n");
  });

  // emit-plot
  auto* plot = app.add_subcommand(
      "emit-plot", "Plot-ready CSV from a stored artifact");
  std::string pl_kind, pl_input, pl_fit, pl_out;
  plot->add_option("--kind", pl_kind, "dip | spectrum | bias | trace")
      ->required();
  plot->add_option("--input", pl_input, "source artifact")->required();
  plot->add_option("--fit", pl_fit, "fit report (dip kind only)");
  plot->add_option("--out", pl_out, "output CSV")->required();
  plot->callback([&] {
    rc = report(mf_emit_plot(pl_kind.c_str(), pl_input.c_str(),
                             pl_fit.empty() ? nullptr : pl_fit.c_str(),
                             pl_out.c_str()));
  });

  // A range value like "-5:1:5nm" must not be classified as a flag, so the
  // separated form is folded into --option=value before parsing.
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc));
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  for (std::size_t k = 0; k + 1 < args.size(); ++k) {
    if ((args[k] == "--biases" || args[k] == "--wavelengths") &&
        !args[k + 1].empty() && args[k + 1][0] == '-') {
      args[k] += "=" + args[k + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    }
  }

  try {
    // CLI11 consumes the vector back to front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(MF_E_CONFIG);
  }
  return rc;
}
