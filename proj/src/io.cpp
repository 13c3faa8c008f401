#include "modeforge/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include "modeforge/errors.hpp"

namespace modeforge {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double_token(const std::string& tok, int line,
                          const std::string& what) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    if (tok == "nan") return std::nan("");
    fail(ErrorKind::Io, "line " + std::to_string(line) + ": bad " + what +
                            " value '" + tok + "'");
  }
  return v;
}

long long parse_int_token(const std::string& tok, int line,
                          const std::string& what) {
  long long v = 0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto res = std::from_chars(b, e, v);
  require(res.ec == std::errc() && res.ptr == e, ErrorKind::Io,
          "line " + std::to_string(line) + ": bad " + what + " value '" +
              tok + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& s : out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
      s.erase(s.begin());
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                          s.back() == '\r'))
      s.pop_back();
  }
  return out;
}

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' ||
                        s.back() == ' ' || s.back() == '\t'))
    s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), ErrorKind::Io, "read failed for '" + path + "'");
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

void write_epsmap(const PermittivityMap& map, const std::string& path) {
  map.validate();
  const fs::path header_path(path);
  const fs::path data_path(path + ".bin");

  std::ostringstream h;
  h << "modeforge-epsmap v1\n";
  h << "nx=" << map.grid.nx << "\n";
  h << "ny=" << map.grid.ny << "\n";
  h << "dx_nm=" << format_double(map.grid.dx * 1e9) << "\n";
  h << "origin_x_nm=" << format_double(map.grid.origin_x * 1e9) << "\n";
  h << "origin_y_nm=" << format_double(map.grid.origin_y * 1e9) << "\n";
  h << "eps_core=" << format_double(map.eps_core) << "\n";
  h << "data=" << data_path.filename().string() << "\n";
  write_text_file(header_path.string(), h.str());

  std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io,
          "cannot open '" + data_path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(map.eps.data()),
            static_cast<std::streamsize>(map.eps.size() * sizeof(double)));
  out.flush();
  require(out.good(), ErrorKind::Io,
          "write failed for '" + data_path.string() + "'");
}

PermittivityMap read_epsmap(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  require(std::getline(in, line) && trimmed(line) == "modeforge-epsmap v1",
          ErrorKind::Io, "'" + path + "' is not a modeforge-epsmap v1 file");

  std::map<std::string, std::string> kv;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Io,
            "line " + std::to_string(lineno) + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key :
       {"nx", "ny", "dx_nm", "origin_x_nm", "origin_y_nm", "eps_core", "data"})
    require(kv.count(key), ErrorKind::Io,
            "'" + path + "' is missing header key '" + key + "'");

  PermittivityMap map;
  map.grid.nx = static_cast<int>(parse_int_token(kv["nx"], 0, "nx"));
  map.grid.ny = static_cast<int>(parse_int_token(kv["ny"], 0, "ny"));
  map.grid.dx = parse_double_token(kv["dx_nm"], 0, "dx_nm") * 1e-9;
  map.grid.origin_x = parse_double_token(kv["origin_x_nm"], 0, "origin_x_nm") * 1e-9;
  map.grid.origin_y = parse_double_token(kv["origin_y_nm"], 0, "origin_y_nm") * 1e-9;
  map.eps_core = parse_double_token(kv["eps_core"], 0, "eps_core");
  map.grid.validate();

  const fs::path data_path = fs::path(path).parent_path() / kv["data"];
  std::ifstream bin(data_path, std::ios::binary);
  require(bin.good(), ErrorKind::Io,
          "cannot open sidecar '" + data_path.string() + "'");
  map.eps.resize(map.grid.cell_count());
  bin.read(reinterpret_cast<char*>(map.eps.data()),
           static_cast<std::streamsize>(map.eps.size() * sizeof(double)));
  require(bin.gcount() ==
              static_cast<std::streamsize>(map.eps.size() * sizeof(double)),
          ErrorKind::Io, "sidecar '" + data_path.string() + "' is truncated");
  char extra;
  require(!bin.read(&extra, 1), ErrorKind::Io,
          "sidecar '" + data_path.string() + "' has trailing bytes");
  map.validate();
  return map;
}

void write_smatrix_csv(const std::vector<ScatteringMatrix>& matrices,
                       const std::string& path) {
  std::ostringstream out;
  out << "wavelength_nm,source_port,monitor_port,re,im,mag2\n";
  for (const ScatteringMatrix& s : matrices) {
    s.validate();
    for (int src : s.source_ids)
      for (int mon : s.monitor_ids) {
        const Complex v = s.at(mon, src);
        out << format_double(s.wavelength * 1e9) << ',' << src << ',' << mon
            << ',' << format_double(v.real()) << ',' << format_double(v.imag())
            << ',' << format_double(std::norm(v)) << "\n";
      }
  }
  write_text_file(path, out.str());
}

std::vector<ScatteringMatrix> read_smatrix_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  struct Row {
    double wl;
    int src, mon;
    Complex v;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("wavelength_nm", 0) == 0) continue;
    const auto f = split_csv(line);
    require(f.size() == 6, ErrorKind::Io,
            "line " + std::to_string(lineno) + ": expected 6 columns, got " +
                std::to_string(f.size()));
    Row r;
    r.wl = parse_double_token(f[0], lineno, "wavelength_nm") * 1e-9;
    r.src = static_cast<int>(parse_int_token(f[1], lineno, "source_port"));
    r.mon = static_cast<int>(parse_int_token(f[2], lineno, "monitor_port"));
    r.v = Complex(parse_double_token(f[3], lineno, "re"),
                  parse_double_token(f[4], lineno, "im"));
    rows.push_back(r);
  }
  require(!rows.empty(), ErrorKind::Io, "'" + path + "' has no data rows");

  std::vector<ScatteringMatrix> out;
  for (const Row& r : rows) {
    if (out.empty() || out.back().wavelength != r.wl) {
      for (const ScatteringMatrix& prev : out)
        require(prev.wavelength != r.wl, ErrorKind::Io,
                "wavelength blocks are not contiguous in '" + path + "'");
      out.push_back(ScatteringMatrix{r.wl, {}, {}, {}});
    }
  }
  for (ScatteringMatrix& s : out) {
    std::set<int> srcs, mons;
    for (const Row& r : rows)
      if (r.wl == s.wavelength) {
        srcs.insert(r.src);
        mons.insert(r.mon);
      }
    s.source_ids.assign(srcs.begin(), srcs.end());
    s.monitor_ids.assign(mons.begin(), mons.end());
    s.entries.assign(s.source_ids.size() * s.monitor_ids.size(),
                     Complex(0.0, 0.0));
    std::vector<std::uint8_t> seen(s.entries.size(), 0);
    for (const Row& r : rows) {
      if (r.wl != s.wavelength) continue;
      const auto si = std::find(s.source_ids.begin(), s.source_ids.end(), r.src) -
                      s.source_ids.begin();
      const auto mi = std::find(s.monitor_ids.begin(), s.monitor_ids.end(),
                                r.mon) -
                      s.monitor_ids.begin();
      const std::size_t k = mi * s.source_ids.size() + si;
      require(!seen[k], ErrorKind::Io,
              "duplicate S-matrix entry in '" + path + "'");
      seen[k] = 1;
      s.entries[k] = r.v;
    }
    for (std::uint8_t sk : seen)
      require(sk, ErrorKind::Io,
              "incomplete S-matrix block in '" + path + "'");
    s.validate();
  }
  return out;
}

void write_scan_csv(const CoincidenceScan& scan, const std::string& path) {
  scan.validate();
  std::ostringstream out;
  out << "# integration_s=" << format_double(scan.integration_time) << "\n";
  out << "# window_ns=" << format_double(scan.coincidence_window * 1e9)
      << "\n";
  out << "tau_ps,counts\n";
  for (const ScanPoint& p : scan.points)
    out << format_double(p.tau * 1e12) << ',' << p.counts << "\n";
  write_text_file(path, out.str());
}

CoincidenceScan read_scan_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  CoincidenceScan scan;
  bool have_integration = false, have_window = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = trimmed(line.substr(1));
      const std::size_t eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      const std::string val = body.substr(eq + 1);
      if (key == "integration_s") {
        scan.integration_time = parse_double_token(val, lineno, key);
        have_integration = true;
      } else if (key == "window_ns") {
        scan.coincidence_window = parse_double_token(val, lineno, key) * 1e-9;
        have_window = true;
      }
      continue;
    }
    if (line.rfind("tau_ps", 0) == 0) continue;
    const auto f = split_csv(line);
    require(f.size() == 2, ErrorKind::Io,
            "line " + std::to_string(lineno) + ": expected tau_ps,counts");
    ScanPoint p;
    p.tau = parse_double_token(f[0], lineno, "tau_ps") * 1e-12;
    p.counts = parse_int_token(f[1], lineno, "counts");
    require(p.counts >= 0, ErrorKind::Io,
            "line " + std::to_string(lineno) + ": negative counts");
    if (!scan.points.empty())
      require(p.tau > scan.points.back().tau, ErrorKind::Io,
              "line " + std::to_string(lineno) +
                  ": tau_ps not strictly increasing");
    scan.points.push_back(p);
  }
  require(have_integration, ErrorKind::Io,
          "'" + path + "' is missing '# integration_s='");
  require(have_window, ErrorKind::Io,
          "'" + path + "' is missing '# window_ns='");
  require(!scan.points.empty(), ErrorKind::Io,
          "'" + path + "' has no data rows");
  return scan;
}

void write_trace_csv(const OptimizationTrace& trace, const std::string& path) {
  std::ostringstream out;
  out << "iter,stage,f,max_residual,wall_ms\n";
  for (const TraceEntry& row : trace)
    out << row.iter << ',' << row.stage << ',' << format_double(row.f) << ','
        << format_double(row.max_residual) << ','
        << format_double(row.wall_ms) << "\n";
  write_text_file(path, out.str());
}

void write_sweep_csv(const std::vector<BiasSweepPoint>& rows,
                     const std::string& path) {
  std::ostringstream out;
  out << "bias_nm,wavelength_nm,eta_eff,alpha_rad,v_max\n";
  for (const BiasSweepPoint& r : rows) {
    out << format_double(r.bias * 1e9) << ','
        << format_double(r.wavelength * 1e9) << ',';
    if (r.failed)
      out << "nan,nan,nan\n";
    else
      out << format_double(r.eta_eff) << ',' << format_double(r.alpha) << ','
          << format_double(r.v_max) << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<BiasSweepPoint> read_sweep_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<BiasSweepPoint> rows;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("bias_nm", 0) == 0) continue;
    const auto f = split_csv(line);
    require(f.size() == 5, ErrorKind::Io,
            "line " + std::to_string(lineno) + ": expected 5 columns");
    BiasSweepPoint r;
    r.bias = parse_double_token(f[0], lineno, "bias_nm") * 1e-9;
    r.wavelength = parse_double_token(f[1], lineno, "wavelength_nm") * 1e-9;
    r.eta_eff = parse_double_token(f[2], lineno, "eta_eff");
    r.alpha = parse_double_token(f[3], lineno, "alpha_rad");
    r.v_max = parse_double_token(f[4], lineno, "v_max");
    r.failed = std::isnan(r.v_max);
    rows.push_back(r);
  }
  require(!rows.empty(), ErrorKind::Io, "'" + path + "' has no data rows");
  return rows;
}

void write_fit_report(const DipFit& fit, const std::string& path) {
  std::ostringstream out;
  out << "baseline=" << format_double(fit.baseline) << "\n";
  out << "visibility=" << format_double(fit.visibility) << "\n";
  out << "center_ps=" << format_double(fit.center * 1e12) << "\n";
  out << "width_ps=" << format_double(fit.width * 1e12) << "\n";
  out << "se_baseline=" << format_double(fit.se_baseline) << "\n";
  out << "se_visibility=" << format_double(fit.se_visibility) << "\n";
  out << "se_center_ps=" << format_double(fit.se_center * 1e12) << "\n";
  out << "se_width_ps=" << format_double(fit.se_width * 1e12) << "\n";
  out << "chi2=" << format_double(fit.chi2) << "\n";
  out << "dof=" << fit.dof << "\n";
  out << "degenerate=" << (fit.degenerate ? 1 : 0) << "\n";
  write_text_file(path, out.str());
}

DipFit read_fit_report(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> kv;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Io,
            "line " + std::to_string(lineno) + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"baseline", "visibility", "center_ps", "width_ps",
                          "se_baseline", "se_visibility", "se_center_ps",
                          "se_width_ps", "chi2", "dof", "degenerate"})
    require(kv.count(key), ErrorKind::Io,
            "'" + path + "' is missing key '" + key + "'");

  DipFit fit;
  fit.baseline = parse_double_token(kv["baseline"], 0, "baseline");
  fit.visibility = parse_double_token(kv["visibility"], 0, "visibility");
  fit.center = parse_double_token(kv["center_ps"], 0, "center_ps") * 1e-12;
  fit.width = parse_double_token(kv["width_ps"], 0, "width_ps") * 1e-12;
  fit.se_baseline = parse_double_token(kv["se_baseline"], 0, "se_baseline");
  fit.se_visibility =
      parse_double_token(kv["se_visibility"], 0, "se_visibility");
  fit.se_center =
      parse_double_token(kv["se_center_ps"], 0, "se_center_ps") * 1e-12;
  fit.se_width = parse_double_token(kv["se_width_ps"], 0, "se_width_ps") * 1e-12;
  fit.chi2 = parse_double_token(kv["chi2"], 0, "chi2");
  fit.dof = static_cast<int>(parse_int_token(kv["dof"], 0, "dof"));
  fit.degenerate = parse_int_token(kv["degenerate"], 0, "degenerate") != 0;
  return fit;
}

void emit_plot(const std::string& kind, const std::string& input,
               const std::string& input2, const std::string& out_path) {
  if (kind == "dip") {
    const CoincidenceScan scan = read_scan_csv(input);
    const DipFit fit = input2.empty() ? fit_dip(scan) : read_fit_report(input2);
    std::ostringstream out;
    out << "tau_ps,counts,fit\n";
    for (const ScanPoint& p : scan.points) {
      const double w = std::max(fit.width, 1e-21);
      const double tri =
          std::max(0.0, 1.0 - std::fabs(p.tau - fit.center) / w);
      const double model = fit.baseline * (1.0 - fit.visibility * tri);
      out << format_double(p.tau * 1e12) << ',' << p.counts << ','
          << format_double(model) << "\n";
    }
    write_text_file(out_path, out.str());
    return;
  }
  if (kind == "spectrum") {
    const auto mats = read_smatrix_csv(input);
    require(!mats.empty(), ErrorKind::Config, "empty S-matrix file");
    std::ostringstream out;
    out << "wavelength_nm";
    for (int src : mats.front().source_ids)
      for (int mon : mats.front().monitor_ids)
        out << ",s" << mon << src << "_mag2";
    out << "\n";
    for (const ScatteringMatrix& s : mats) {
      require(s.source_ids == mats.front().source_ids &&
                  s.monitor_ids == mats.front().monitor_ids,
              ErrorKind::Config, "inconsistent port sets across wavelengths");
      out << format_double(s.wavelength * 1e9);
      for (int src : s.source_ids)
        for (int mon : s.monitor_ids)
          out << ',' << format_double(std::norm(s.at(mon, src)));
      out << "\n";
    }
    write_text_file(out_path, out.str());
    return;
  }
  if (kind == "bias") {
    write_sweep_csv(read_sweep_csv(input), out_path);
    return;
  }
  if (kind == "trace") {
    const std::string text = read_text_file(input);
    require(text.rfind("iter,stage,f,max_residual,wall_ms", 0) == 0,
            ErrorKind::Config, "not a trace file: " + input);
    write_text_file(out_path, text);
    return;
  }
  fail(ErrorKind::Config, "unknown plot kind '" + kind +
                              "' (expected dip, spectrum, bias, or trace)");
}

void write_mode_profile_csv(const ModeProfile& mode, double dx,
                            const std::string& path) {
  std::ostringstream out;
  out << "# n_eff=" << format_double(mode.n_eff) << "\n";
  out << "x_nm,field\n";
  for (std::size_t k = 0; k < mode.field.size(); ++k)
    out << format_double((static_cast<double>(k) + 0.5) * dx * 1e9) << ','
        << format_double(mode.field[k]) << "\n";
  write_text_file(path, out.str());
}

}  // namespace modeforge
