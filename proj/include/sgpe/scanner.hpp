#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgpe/run_setup.hpp"

namespace sgpe {

// One scan axis: a registered override parameter and its values.
struct ScanAxis {
  std::string name;  // N | rabi_hz | delta_b_mg | zero_anti_trap | phase_tol
  std::vector<double> values;
};

struct ScanSpec {
  std::string name = "scan";
  std::vector<ScanAxis> axes;
  RunConfig baseline;
  std::filesystem::path output_dir = "scans/scan";
  int parallelism = 1;
  bool resume = true;

  void validate() const;  // axis names registered, values finite, non-empty
  void save_file(const std::string& path) const;
  static ScanSpec load_file(const std::string& path);
};

struct ScanRow {
  std::map<std::string, double> params;
  bool ok = false;
  std::string error;
  double mu_hz = 0.0;
  double rf_transfer = 0.0, rf_loss = 0.0, trapped_remnant = 0.0;
  double n_mp_over_n = 0.0, v_bar = 0.0, fidelity = 0.0;
  double sigma_vx = 0.0, sigma_vz = 0.0;
  std::array<double, 3> final_norms{};
  std::array<double, 3> absorbed{};
  double wall_seconds = 0.0;

  std::string key() const;
};

struct ScanResultTable {
  std::vector<ScanRow> rows;
  std::vector<ScanAxis> axes;
  void write_csv(const std::string& path) const;
  // parameter-grid matrices (rows = axis 0, cols = axis 1) per metric
  void write_heatmaps(const std::filesystem::path& dir) const;
};

ScanResultTable run_scan(const ScanSpec& spec);

// Desk-scale and full-fidelity presets for the published parameter studies.
std::map<std::string, ScanSpec> preset_scans(const RunConfig& baseline);

// 1/t_rf: the predicted Rabi-frequency periodicity of the outcoupled-fraction
// stripe pattern in the strong-coupling regime (Hz).
double expected_oscillation_period(double t_rf_seconds);

// Stripe period of fraction-vs-Omega data via detrended autocorrelation (Hz);
// returns 0 when no oscillation is detectable.
double stripe_period_hz(const std::vector<double>& omega_hz,
                        const std::vector<double>& fraction);

} // namespace sgpe
