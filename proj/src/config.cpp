#include "modeforge/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "modeforge/errors.hpp"
#include "modeforge/io.hpp"
#include "modeforge/version.hpp"

namespace modeforge {

namespace {

std::string trim(std::string s) {
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

double parse_num(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto res = std::from_chars(b, e, v);
  require(res.ec == std::errc() && res.ptr == e && std::isfinite(v),
          ErrorKind::Config, where + ": bad number '" + tok + "'");
  return v;
}

long long parse_int(const std::string& tok, const std::string& where) {
  long long v = 0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto res = std::from_chars(b, e, v);
  require(res.ec == std::errc() && res.ptr == e, ErrorKind::Config,
          where + ": bad integer '" + tok + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text,
                                      double default_scale) {
  std::string body = trim(text);
  require(!body.empty(), ErrorKind::Config, "empty number list");
  double scale = default_scale;
  const auto ends_with = [&](const char* suf) {
    const std::size_t n = std::char_traits<char>::length(suf);
    return body.size() > n && body.compare(body.size() - n, n, suf) == 0;
  };
  if (ends_with("nm")) {
    scale = 1e-9;
    body = trim(body.substr(0, body.size() - 2));
  } else if (ends_with("um")) {
    scale = 1e-6;
    body = trim(body.substr(0, body.size() - 2));
  } else if (ends_with("ps")) {
    scale = 1e-12;
    body = trim(body.substr(0, body.size() - 2));
  }

  std::vector<double> out;
  if (body.find(':') != std::string::npos) {
    const auto parts = split(body, ':');
    require(parts.size() == 3, ErrorKind::Config,
            "range must be first:step:last, got '" + text + "'");
    const double first = parse_num(parts[0], "range");
    const double step = parse_num(parts[1], "range");
    const double last = parse_num(parts[2], "range");
    require(step > 0.0, ErrorKind::Config, "range step must be positive");
    require(last >= first, ErrorKind::Config,
            "range end must not precede its start");
    const long long n = std::llround((last - first) / step);
    require(std::fabs(first + static_cast<double>(n) * step - last) <=
                1e-6 * step,
            ErrorKind::Config,
            "range '" + text + "' does not divide evenly by its step");
    for (long long k = 0; k <= n; ++k)
      out.push_back((first + static_cast<double>(k) * step) * scale);
    return out;
  }
  for (const std::string& tok : split(body, ','))
    out.push_back(parse_num(tok, "list") * scale);
  return out;
}

void RunConfig::validate() const {
  require(domain > 0.0 && dx > 0.0, ErrorKind::Config,
          "domain and dx must be positive");
  require(!wavelengths.empty(), ErrorKind::Config, "no wavelengths");
  for (double wl : wavelengths)
    require(wl >= 1.4e-6 && wl <= 1.7e-6, ErrorKind::Config,
            "wavelengths must lie in the 1400-1700 nm band");
  require(min_feature >= dx, ErrorKind::Config,
          "min_feature must be at least one cell");
  require(filter_radius >= 0.0, ErrorKind::Config,
          "filter_radius must be nonnegative");
  require(continuous_iterations >= 0 && levelset_iterations >= 0,
          ErrorKind::Config, "iteration counts must be nonnegative");
  require(beta_schedule[0] > 0.0 && beta_schedule[1] >= beta_schedule[0] &&
              beta_schedule[2] >= beta_schedule[1],
          ErrorKind::Config, "beta schedule must be positive nondecreasing");
  require(step > 0.0, ErrorKind::Config, "step must be positive");
  require(init_noise >= 0.0 && init_noise <= 0.45, ErrorKind::Config,
          "init_noise must lie in [0, 0.45]");
  require(threads >= 0, ErrorKind::Config, "threads must be nonnegative");
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  cfg.geometry = GeometryKind::Mbs;
  cfg.domain = 7e-6;
  cfg.dx = 44e-9;
  cfg.continuous_iterations = 60;
  cfg.levelset_iterations = 20;
  if (name == "A") {
    cfg.continuous_iterations = 90;
    cfg.levelset_iterations = 30;
    cfg.min_feature = 120e-9;
    cfg.wavelengths = {1550e-9};
  } else if (name == "B") {
    cfg.min_feature = 80e-9;
    cfg.wavelengths = {1550e-9};
  } else if (name == "C") {
    cfg.min_feature = 80e-9;
    cfg.wavelengths = {1500e-9, 1550e-9, 1600e-9};
  } else {
    fail(ErrorKind::Config,
         "unknown preset '" + name + "' (expected A, B, or C)");
  }
  return cfg;
}

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin) {
  RunConfig cfg;
  bool saw_key = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string where =
        origin + " line " + std::to_string(lineno);
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Config,
            where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    require(!val.empty(), ErrorKind::Config, where + ": empty value");

    if (key == "preset") {
      require(!saw_key, ErrorKind::Config,
              where + ": preset must come before other keys");
      cfg = preset_config(val);
      continue;
    }
    saw_key = true;
    if (key == "geometry") {
      cfg.geometry = parse_geometry(val);
    } else if (key == "domain_um") {
      cfg.domain = parse_num(val, where) * 1e-6;
    } else if (key == "dx_nm") {
      cfg.dx = parse_num(val, where) * 1e-9;
    } else if (key == "wavelengths_nm") {
      cfg.wavelengths = parse_number_list(val, 1e-9);
    } else if (key == "min_feature_nm") {
      cfg.min_feature = parse_num(val, where) * 1e-9;
    } else if (key == "filter_radius_nm") {
      cfg.filter_radius = parse_num(val, where) * 1e-9;
    } else if (key == "iterations") {
      const long long n = parse_int(val, where);
      require(n >= 0, ErrorKind::Config, where + ": iterations < 0");
      cfg.continuous_iterations = static_cast<int>((3 * n) / 4);
      cfg.levelset_iterations =
          static_cast<int>(n) - cfg.continuous_iterations;
    } else if (key == "continuous_iterations") {
      cfg.continuous_iterations = static_cast<int>(parse_int(val, where));
    } else if (key == "levelset_iterations") {
      cfg.levelset_iterations = static_cast<int>(parse_int(val, where));
    } else if (key == "beta_schedule") {
      const auto vals = parse_number_list(val, 1.0);
      require(vals.size() == 3, ErrorKind::Config,
              where + ": beta_schedule needs exactly three values");
      cfg.beta_schedule = {vals[0], vals[1], vals[2]};
    } else if (key == "step") {
      cfg.step = parse_num(val, where);
    } else if (key == "init_noise") {
      cfg.init_noise = parse_num(val, where);
    } else if (key == "seed") {
      const long long s = parse_int(val, where);
      require(s >= 0, ErrorKind::Config, where + ": seed must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(parse_int(val, where));
    } else {
      fail(ErrorKind::Config, where + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path),
                           std::filesystem::path(path).filename().string());
}

std::string resolved_config_text(const RunConfig& cfg) {
  const double radius =
      cfg.filter_radius > 0.0 ? cfg.filter_radius : 0.5 * cfg.min_feature;
  std::ostringstream out;
  out << "# modeforge " << kVersion << " resolved configuration\n";
  out << "geometry=" << geometry_name(cfg.geometry) << "\n";
  out << "domain_um=" << format_double(cfg.domain * 1e6) << "\n";
  out << "dx_nm=" << format_double(cfg.dx * 1e9) << "\n";
  out << "wavelengths_nm=";
  for (std::size_t k = 0; k < cfg.wavelengths.size(); ++k)
    out << (k ? "," : "") << format_double(cfg.wavelengths[k] * 1e9);
  out << "\n";
  out << "min_feature_nm=" << format_double(cfg.min_feature * 1e9) << "\n";
  out << "filter_radius_nm=" << format_double(radius * 1e9) << "\n";
  out << "continuous_iterations=" << cfg.continuous_iterations << "\n";
  out << "levelset_iterations=" << cfg.levelset_iterations << "\n";
  out << "beta_schedule=" << format_double(cfg.beta_schedule[0]) << ","
      << format_double(cfg.beta_schedule[1]) << ","
      << format_double(cfg.beta_schedule[2]) << "\n";
  out << "step=" << format_double(cfg.step) << "\n";
  out << "init_noise=" << format_double(cfg.init_noise) << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "threads=" << cfg.threads << "\n";
  return out.str();
}

DesignProblem build_problem(const RunConfig& cfg) {
  cfg.validate();
  const GeometryLayout layout = make_layout(cfg.geometry, cfg.domain, cfg.dx);
  return make_design_problem(layout, cfg.wavelengths,
                             default_targets(cfg.geometry), cfg.init_noise,
                             cfg.seed);
}

OptimizationConfig optimizer_config(const RunConfig& cfg) {
  OptimizationConfig oc;
  oc.continuous_iterations = cfg.continuous_iterations;
  oc.levelset_iterations = cfg.levelset_iterations;
  oc.min_feature = cfg.min_feature;
  oc.filter_radius = cfg.filter_radius;
  oc.beta_schedule = cfg.beta_schedule;
  oc.step = cfg.step;
  oc.threads = cfg.threads;
  return oc;
}

RunSummary run_optimize(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::Io, "cannot create '" + out_dir + "': " + ec.message());

  const DesignProblem problem = build_problem(cfg);
  const OptimizationConfig oc = optimizer_config(cfg);
  const OptimizationResult result = run_optimization(problem, oc);

  const auto out_path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  write_epsmap(result.eps, out_path("design.eps"));
  write_trace_csv(result.trace, out_path("trace.csv"));
  write_text_file(out_path("resolved.cfg"), resolved_config_text(cfg));

  // Final scatter per wavelength from the as-built design.
  RunSummary summary;
  const bool binary = !result.trace.empty();
  std::vector<std::uint8_t> solid(result.region.p.size());
  for (std::size_t c = 0; c < solid.size(); ++c)
    solid[c] = result.region.p[c] >= 0.5 ? 1 : 0;
  const double radius =
      cfg.filter_radius > 0.0 ? cfg.filter_radius : 0.5 * cfg.min_feature;
  for (std::size_t w = 0; w < problem.wavelengths.size(); ++w) {
    const PermittivityMap eps_w =
        binary ? materialize_binary(problem, w, solid)
               : materialize(problem, w, result.region.p, radius,
                             cfg.beta_schedule[0]);
    const auto mats =
        compute_smatrix(eps_w, problem.ports, {problem.wavelengths[w]},
                        problem.pml, cfg.threads);
    summary.smatrices.push_back(mats.front());
  }
  write_smatrix_csv(summary.smatrices, out_path("smatrix.csv"));

  summary.f_initial = result.f_initial;
  summary.f_final = result.f_final;
  summary.iterations = static_cast<int>(result.trace.size());
  summary.feature = result.feature;
  return summary;
}

}  // namespace modeforge
