#include "sgpe/scanner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sgpe/constants.hpp"
#include "sgpe/units.hpp"

namespace sgpe {

namespace {

const std::vector<std::string>& registered_params() {
  static const std::vector<std::string> names = {"N", "rabi_hz", "delta_b_mg",
                                                 "zero_anti_trap", "phase_tol"};
  return names;
}

void apply_param(RunConfig& cfg, const std::string& name, double value) {
  if (name == "N") cfg.n_atoms = value;
  else if (name == "rabi_hz") cfg.rabi_override_hz = value;
  else if (name == "delta_b_mg") cfg.delta_b_mg = value;
  else if (name == "zero_anti_trap") cfg.propagator.zero_anti_trap = value != 0.0;
  else if (name == "phase_tol") cfg.propagator.phase_tol = value;
  else throw ConfigError("scan: unregistered parameter '" + name + "'");
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

std::string sanitize(std::string s) {
  for (auto& c : s)
    if (c == '=' || c == ';' || c == '/' || c == ' ') c = '_';
  return s;
}

} // namespace

void ScanSpec::validate() const {
  if (axes.empty()) throw ConfigError("scan: no axes defined, no runs");
  const auto& reg = registered_params();
  for (const auto& ax : axes) {
    if (std::find(reg.begin(), reg.end(), ax.name) == reg.end())
      throw ConfigError("scan: unregistered parameter '" + ax.name + "'");
    if (ax.values.empty()) throw ConfigError("scan: axis '" + ax.name + "' has no values");
    for (double v : ax.values)
      if (!std::isfinite(v)) throw ConfigError("scan: non-finite value on '" + ax.name + "'");
  }
}

std::string ScanRow::key() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : params) {
    if (!first) os << ';';
    os << k << '=' << format_value(v);
    first = false;
  }
  return os.str();
}

void ScanSpec::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("scan: cannot write '" + path + "'");
  out << "[scan]\n";
  out << "name = " << name << "\n";
  out << "output_dir = " << output_dir.string() << "\n";
  out << "parallelism = " << parallelism << "\n";
  out << "resume = " << (resume ? 1 : 0) << "\n";
  out << "grid = " << baseline.grid_name << "\n";
  out << "schedule = " << baseline.schedule_name << "\n";
  out << "n_atoms = " << baseline.n_atoms << "\n";
  out.precision(12);
  for (const auto& ax : axes) {
    out << "\n[axis " << ax.name << "]\nvalues = ";
    for (std::size_t i = 0; i < ax.values.size(); ++i)
      out << (i ? "," : "") << ax.values[i];
    out << "\n";
  }
}

ScanSpec ScanSpec::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scan: cannot open '" + path + "'");
  ScanSpec spec;
  spec.baseline = make_run_config("model", "scan");
  std::string line, section;
  auto trim = [](std::string v) {
    const char* ws = " \t\r";
    v.erase(0, v.find_first_not_of(ws));
    auto last = v.find_last_not_of(ws);
    v.erase(last == std::string::npos ? 0 : last + 1);
    return v;
  };
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = trim(line.substr(1, line.find(']') - 1));
      if (section.rfind("axis", 0) == 0) {
        spec.axes.emplace_back();
        spec.axes.back().name = trim(section.substr(4));
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("scan: expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (section == "scan") {
      if (key == "name") spec.name = val;
      else if (key == "output_dir") spec.output_dir = val;
      else if (key == "parallelism") spec.parallelism = std::stoi(val);
      else if (key == "resume") spec.resume = std::stoi(val) != 0;
      else if (key == "grid") spec.baseline.grid_name = val;
      else if (key == "schedule") spec.baseline.schedule_name = val;
      else if (key == "n_atoms") spec.baseline.n_atoms = std::stod(val);
      else throw ConfigError("scan: unknown key '" + key + "'");
    } else if (section.rfind("axis", 0) == 0) {
      if (key != "values") throw ConfigError("scan: unknown axis key '" + key + "'");
      std::stringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) spec.axes.back().values.push_back(std::stod(item));
    }
  }
  resolve_config(spec.baseline);
  spec.validate();
  return spec;
}

ScanResultTable run_scan(const ScanSpec& spec) {
  namespace fs = std::filesystem;
  spec.validate();
  fs::create_directories(spec.output_dir);

  // baseline feasibility checks, logged alongside the scan
  {
    RunConfig base = spec.baseline;
    resolve_config(base);
    const CheckReport checks = run_checks(base);
    std::ofstream out(spec.output_dir / "baseline_checks.txt");
    out << checks.summary();
  }

  // Cartesian product of axis values
  std::vector<std::map<std::string, double>> tuples{{}};
  for (const auto& ax : spec.axes) {
    std::vector<std::map<std::string, double>> next;
    for (const auto& t : tuples)
      for (double v : ax.values) {
        auto u = t;
        u[ax.name] = v;
        next.push_back(std::move(u));
      }
    tuples = std::move(next);
  }

  const fs::path manifest_path = spec.output_dir / "scan_manifest.json";
  nlohmann::json manifest;
  manifest["name"] = spec.name;
  manifest["completed"] = nlohmann::json::object();
  if (spec.resume && fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    try {
      in >> manifest;
    } catch (...) {
      manifest["completed"] = nlohmann::json::object();
    }
  }

  ScanResultTable table;
  table.axes = spec.axes;
  table.rows.resize(tuples.size());
  std::mutex manifest_mutex;

  auto row_to_json = [](const ScanRow& row) {
    nlohmann::json j;
    j["params"] = row.params;
    j["ok"] = row.ok;
    j["error"] = row.error;
    j["mu_hz"] = row.mu_hz;
    j["rf_transfer"] = row.rf_transfer;
    j["rf_loss"] = row.rf_loss;
    j["trapped_remnant"] = row.trapped_remnant;
    j["n_mp_over_n"] = row.n_mp_over_n;
    j["v_bar_um_s"] = row.v_bar / units::um_per_s;
    j["fidelity"] = row.fidelity;
    j["sigma_vx_um_s"] = row.sigma_vx / units::um_per_s;
    j["sigma_vz_um_s"] = row.sigma_vz / units::um_per_s;
    j["final_norms"] = row.final_norms;
    j["absorbed"] = row.absorbed;
    j["wall_seconds"] = row.wall_seconds;
    return j;
  };
  auto row_from_json = [](const nlohmann::json& j, ScanRow& row) {
    row.params = j.at("params").get<std::map<std::string, double>>();
    row.ok = j.value("ok", false);
    row.error = j.value("error", "");
    row.mu_hz = j.value("mu_hz", 0.0);
    row.rf_transfer = j.value("rf_transfer", 0.0);
    row.rf_loss = j.value("rf_loss", 0.0);
    row.trapped_remnant = j.value("trapped_remnant", 0.0);
    row.n_mp_over_n = j.value("n_mp_over_n", 0.0);
    row.v_bar = j.value("v_bar_um_s", 0.0) * units::um_per_s;
    row.fidelity = j.value("fidelity", 0.0);
    row.sigma_vx = j.value("sigma_vx_um_s", 0.0) * units::um_per_s;
    row.sigma_vz = j.value("sigma_vz_um_s", 0.0) * units::um_per_s;
    if (j.contains("final_norms")) row.final_norms = j.at("final_norms");
    if (j.contains("absorbed")) row.absorbed = j.at("absorbed");
    row.wall_seconds = j.value("wall_seconds", 0.0);
  };

  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= tuples.size()) return;
      ScanRow row;
      row.params = tuples[i];
      const std::string key = row.key();

      {
        std::lock_guard<std::mutex> lock(manifest_mutex);
        if (spec.resume && manifest["completed"].contains(key)) {
          row_from_json(manifest["completed"][key], row);
          table.rows[i] = row;
          continue;
        }
      }

      RunConfig cfg = spec.baseline;
      cfg.output_dir = spec.output_dir / "runs" / sanitize(key);
      cfg.gs_cache_dir = spec.output_dir / "gs_cache";
      cfg.write_snapshots = false;
      try {
        for (const auto& [k, v] : row.params) apply_param(cfg, k, v);
        resolve_config(cfg);
        const RunArtifacts art = execute_run(cfg);
        row.ok = true;
        row.mu_hz = art.mu / consts::planck;
        row.rf_transfer = art.rf_transfer_fraction;
        row.rf_loss = art.rf_loss_fraction;
        row.trapped_remnant = art.trapped_remnant_fraction;
        row.n_mp_over_n = art.report.outcoupled_fraction;
        row.v_bar = art.report.v_bar;
        row.fidelity = art.report.fidelity;
        row.sigma_vx = art.report.fit_vx.ok ? art.report.fit_vx.sigma : 0.0;
        row.sigma_vz = art.report.fit_vz.ok ? art.report.fit_vz.sigma : 0.0;
        row.final_norms = art.report.final_norms;
        row.absorbed = art.report.absorbed;
        row.wall_seconds = art.wall_seconds;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      table.rows[i] = row;

      std::lock_guard<std::mutex> lock(manifest_mutex);
      manifest["completed"][key] = row_to_json(row);
      const fs::path tmp = manifest_path.string() + ".tmp";
      {
        std::ofstream out(tmp);
        out << manifest.dump(1) << "\n";
      }
      fs::rename(tmp, manifest_path);
    }
  };

  const int nworkers = std::max(1, spec.parallelism);
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nworkers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  table.write_csv((spec.output_dir / "scan_table.csv").string());
  table.write_heatmaps(spec.output_dir);
  return table;
}

void ScanResultTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("scan: cannot write '" + path + "'");
  out << "key";
  for (const auto& ax : axes) out << ',' << ax.name;
  out << ",ok,error,mu_hz,rf_transfer,rf_loss,trapped_remnant,n_mp_over_n,"
         "v_bar_um_s,sigma_vx_um_s,sigma_vz_um_s,fidelity,n_m1,n_0,n_p1,"
         "abs_m1,abs_0,abs_p1,wall_s\n";
  out.precision(10);
  for (const auto& row : rows) {
    out << '"' << row.key() << '"';
    for (const auto& ax : axes) {
      auto it = row.params.find(ax.name);
      out << ',' << (it != row.params.end() ? it->second : 0.0);
    }
    out << ',' << (row.ok ? 1 : 0) << ',' << '"' << row.error << '"' << ',' << row.mu_hz
        << ',' << row.rf_transfer << ',' << row.rf_loss << ',' << row.trapped_remnant
        << ',' << row.n_mp_over_n << ',' << row.v_bar / units::um_per_s << ','
        << row.sigma_vx / units::um_per_s << ',' << row.sigma_vz / units::um_per_s << ','
        << row.fidelity;
    for (int c = 0; c < 3; ++c) out << ',' << row.final_norms[c];
    for (int c = 0; c < 3; ++c) out << ',' << row.absorbed[c];
    out << ',' << row.wall_seconds << '\n';
  }
}

void ScanResultTable::write_heatmaps(const std::filesystem::path& dir) const {
  if (axes.size() < 2) return;
  const auto& ax0 = axes[0];
  const auto& ax1 = axes[1];
  auto metric = [&](const ScanRow& r, const std::string& name) {
    if (name == "n_mp_over_n") return r.n_mp_over_n;
    if (name == "v_bar_um_s") return r.v_bar / units::um_per_s;
    return r.fidelity;
  };
  for (const std::string name : {"n_mp_over_n", "v_bar_um_s", "fidelity"}) {
    std::ofstream out(dir / ("heatmap_" + name + ".csv"));
    out.precision(10);
    out << ax0.name << '\\' << ax1.name;
    for (double v1 : ax1.values) out << ',' << v1;
    out << '\n';
    for (double v0 : ax0.values) {
      out << v0;
      for (double v1 : ax1.values) {
        double val = std::nan("");
        for (const auto& r : rows) {
          auto i0 = r.params.find(ax0.name);
          auto i1 = r.params.find(ax1.name);
          if (i0 != r.params.end() && i1 != r.params.end() && i0->second == v0 &&
              i1->second == v1) {
            val = r.ok ? metric(r, name) : std::nan("");
            break;
          }
        }
        out << ',' << val;
      }
      out << '\n';
    }
  }
}

std::map<std::string, ScanSpec> preset_scans(const RunConfig& baseline) {
  std::map<std::string, ScanSpec> presets;
  auto base = baseline;
  base.grid_name = "scan";
  base.write_snapshots = false;

  auto linspace = [](double a, double b, double step) {
    std::vector<double> v;
    for (double x = a; x <= b + 1e-9 * std::abs(step); x += step) v.push_back(x);
    return v;
  };

  {
    ScanSpec s;
    s.name = "fig6-desk";
    s.baseline = base;
    s.axes = {{"rabi_hz", {40.0, 90.0, 150.0}}, {"zero_anti_trap", {0.0, 1.0}}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "fig7-desk";
    s.baseline = base;
    s.axes = {{"N", {5e4, 7.5e4, 1e5, 1.25e5, 1.5e5}},
              {"rabi_hz", linspace(10.0, 300.0, 10.0)}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "fig7-full";
    s.baseline = base;
    s.axes = {{"N", linspace(5e4, 1.5e5, 1e4)}, {"rabi_hz", linspace(2.5, 300.0, 2.5)}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "fig8-desk";
    s.baseline = base;
    s.axes = {{"rabi_hz", {40.0, 90.0, 150.0, 250.0, 255.0}}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "fig9-desk";
    s.baseline = base;
    s.axes = {{"delta_b_mg", {-1.0, -0.3, -0.1, -0.03, -0.01, 0.0, 0.01, 0.03, 0.1, 0.3, 1.0}}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "fig9-full";
    s.baseline = base;
    s.axes = {{"rabi_hz", {40.0, 90.0, 150.0}},
              {"delta_b_mg", {-1.0, -0.3, -0.1, -0.03, -0.01, 0.0, 0.01, 0.03, 0.1, 0.3, 1.0}}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "stripe-desk";
    s.baseline = base;
    s.axes = {{"rabi_hz", linspace(200.0, 260.0, 2.5)}};
    presets[s.name] = s;
  }
  {
    ScanSpec s;
    s.name = "shutdown-desk";
    s.baseline = base;
    s.axes = {{"rabi_hz", {5.0, 10.0, 20.0, 40.0}}};
    presets[s.name] = s;
  }
  return presets;
}

double expected_oscillation_period(double t_rf_seconds) {
  if (!(t_rf_seconds > 0.0)) throw std::domain_error("expected period: t_rf must be > 0");
  return 1.0 / t_rf_seconds;
}

double stripe_period_hz(const std::vector<double>& omega_hz,
                        const std::vector<double>& fraction) {
  const std::size_t n = omega_hz.size();
  if (n < 8 || fraction.size() != n) return 0.0;
  const double h = omega_hz[1] - omega_hz[0];
  // detrend with a moving average roughly two expected periods wide
  const int win = std::max<int>(3, int(std::lround(n / 4.0)) | 1);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int lo = std::max<int>(0, int(i) - win / 2);
    const int hi = std::min<int>(int(n) - 1, int(i) + win / 2);
    double mean = 0.0;
    for (int k = lo; k <= hi; ++k) mean += fraction[k];
    mean /= (hi - lo + 1);
    d[i] = fraction[i] - mean;
  }
  double var = 0.0;
  for (double x : d) var += x * x;
  if (var <= 0.0) return 0.0;
  // normalized autocorrelation; first maximum after the first zero crossing
  std::vector<double> ac(n / 2, 0.0);
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += d[i] * d[i + lag];
    ac[lag] = s / var;
  }
  std::size_t lag0 = 0;
  for (std::size_t lag = 1; lag < ac.size(); ++lag)
    if (ac[lag] < 0.0) {
      lag0 = lag;
      break;
    }
  if (lag0 == 0) return 0.0;
  std::size_t best = 0;
  for (std::size_t lag = lag0 + 1; lag < ac.size(); ++lag)
    if (best == 0 || ac[lag] > ac[best]) best = lag;
  return best > 0 ? best * h : 0.0;
}

} // namespace sgpe
