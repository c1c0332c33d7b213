#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "sgpe/analysis.hpp"
#include "sgpe/dynamics.hpp"
#include "sgpe/groundstate.hpp"
#include "sgpe/zeeman.hpp"

namespace sgpe {

// Fully resolved configuration of one simulation run.  Config files and CLI
// flags use experiment units (Hz, G, mG, ms); everything here is SI.
struct RunConfig {
  SpeciesConstants species;
  std::string schedule_name = "model";  // model | sudden | file:<path>
  FieldSchedule schedule;
  double n_atoms = 1e5;
  std::string grid_name = "desk";
  GridSpec grid;                      // initial (trapped-phase) grid
  PropagatorConfig propagator;
  AnalysisOptions analysis;
  std::filesystem::path output_dir = "runs/run";
  std::filesystem::path gs_cache_dir;  // empty = <output parent>/gs_cache
  bool sudden_release = false;
  bool dry_run = false;
  bool force = false;
  int threads = 1;
  bool write_snapshots = true;

  // overrides recorded for manifests
  double rabi_override_hz = -1.0;
  double delta_b_mg = 0.0;
};

// Build the Table-style default configuration for a named schedule preset.
RunConfig make_run_config(const std::string& schedule_name = "model",
                          const std::string& grid_name = "desk");

// Re-resolve schedule/grid/absorbers after mutating overrides
// (rabi_override_hz, delta_b_mg, grid_name, sudden_release, ...).
void resolve_config(RunConfig& config);

RunConfig load_config_file(const std::string& path);
nlohmann::json config_to_json(const RunConfig& config);

// Preflight validation: outcoupling feasibility, grid sufficiency.
struct CheckReport {
  zeeman::ConditionCheck sharp_resonance;
  zeeman::ConditionCheck state_selectivity;
  double anti_trap_ratio = 0.0;
  bool anti_trap_warn = false;
  double mu_tf = 0.0;  // J
  double omega0_over_detuning = 0.0;
  struct NyquistRow {
    std::string grid, axis;
    double nyquist = 0, required = 0, margin = 0;
    bool pass = false;
  };
  std::vector<NyquistRow> nyquist;
  bool rf_active = false;
  bool hard_pass = true;
  std::string summary() const;
  nlohmann::json to_json() const;
};

CheckReport run_checks(const RunConfig& config);

// Velocity scales used for Nyquist validation and absorber strengths.
struct VelocityEstimates {
  double v_bar = 0.0;        // mean expansion scale sqrt(4 mu / 7 M)
  double v_release = 0.0;    // TF edge speed sqrt(2 mu / M)
  double v_kick = 0.0;       // gradient-pulse momentum kick
  double v_anti_trap = 0.0;  // anti-trapped speed at the inner absorber end
};
VelocityEstimates estimate_velocities(const RunConfig& config);

struct RunArtifacts {
  std::filesystem::path dir;
  AnalysisReport report;
  double mu = 0.0;             // J, ground-state chemical potential
  double rf_transfer_fraction = 0.0;  // to m_F=0 at the end of the rf ramp
  double rf_loss_fraction = 0.0;      // to m_F=+1 (incl. absorbed) at rf end
  double trapped_remnant_fraction = 0.0;
  TimeSeries series;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
};

// Ground state -> propagate -> metrics, with all artifacts written under
// config.output_dir (manifest, particle_numbers.csv, report.json, snapshots).
RunArtifacts execute_run(const RunConfig& config);

// Ground-state solve with a content-addressed snapshot cache.
GroundStateResult ground_state_cached(const RunConfig& config, const Grid& grid);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace sgpe
