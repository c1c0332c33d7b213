// Command-line entry points for the rf-outcoupling condensate simulator:
// preflight checks, end-to-end runs, parameter scans, snapshot analysis and
// preset export.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "sgpe/analysis.hpp"
#include "sgpe/constants.hpp"
#include "sgpe/field_io.hpp"
#include "sgpe/run_setup.hpp"
#include "sgpe/scanner.hpp"
#include "sgpe/units.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitNumerical = 4;

struct CommonOpts {
  std::string config_file;
  std::string preset = "model";
  std::string grid;
  double n_atoms = -1.0;
  double rabi_hz = -1.0;
  double delta_b_mg = 0.0;
  bool zero_anti_trap = false;
  bool sudden_release = false;
  std::string method;
  double phase_tol = -1.0;
  double snapshot_ms = 0.0;
  std::string output;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_file, "run configuration file");
  cmd->add_option("--preset", o.preset, "schedule preset: model | sudden");
  cmd->add_option("--grid", o.grid, "grid preset: desk | scan | coarse | sudden | cart3d");
  cmd->add_option("--n-atoms", o.n_atoms, "initial particle number");
  cmd->add_option("--rabi-hz", o.rabi_hz, "Rabi frequency override (Hz)");
  cmd->add_option("--delta-b-mg", o.delta_b_mg, "offset-field deviation (mG)");
  cmd->add_flag("--zero-anti-trap", o.zero_anti_trap, "set V_trap,0 = 0");
  cmd->add_flag("--sudden-release", o.sudden_release, "trap switch-off comparison run");
  cmd->add_option("--method", o.method, "integrator: split | dp54");
  cmd->add_option("--phase-tol", o.phase_tol, "split-step phase tolerance (rad)");
  cmd->add_option("--snapshots-ms", o.snapshot_ms, "snapshot cadence (ms), 0 = off");
  cmd->add_option("--output", o.output, "output directory");
  cmd->add_option("--threads", o.threads, "thread budget (default $SGPE_THREADS or 1)");
}

sgpe::RunConfig build_config(const CommonOpts& o) {
  sgpe::RunConfig cfg;
  if (!o.config_file.empty())
    cfg = sgpe::load_config_file(o.config_file);
  else
    cfg = sgpe::make_run_config(o.sudden_release ? "sudden" : o.preset);
  if (o.sudden_release) {
    cfg.sudden_release = true;
    cfg.schedule_name = "sudden";
    if (cfg.grid_name == "desk") cfg.grid_name = "sudden";
  }
  if (!o.grid.empty()) cfg.grid_name = o.grid;
  if (o.n_atoms > 0.0) cfg.n_atoms = o.n_atoms;
  if (o.rabi_hz >= 0.0) cfg.rabi_override_hz = o.rabi_hz;
  if (o.delta_b_mg != 0.0) cfg.delta_b_mg = o.delta_b_mg;
  if (o.zero_anti_trap) cfg.propagator.zero_anti_trap = true;
  if (!o.method.empty())
    cfg.propagator.method = o.method == "dp54"
                                ? sgpe::PropagatorConfig::Method::DormandPrince54
                                : sgpe::PropagatorConfig::Method::SplitStrang;
  if (o.phase_tol > 0.0) cfg.propagator.phase_tol = o.phase_tol;
  if (o.snapshot_ms > 0.0) cfg.propagator.snapshot_interval = o.snapshot_ms * sgpe::units::ms;
  if (!o.output.empty()) cfg.output_dir = o.output;
  if (o.threads > 0)
    cfg.threads = o.threads;
  else if (const char* env = std::getenv("SGPE_THREADS"))
    cfg.threads = std::max(1, std::atoi(env));
  sgpe::resolve_config(cfg);
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"sgpe: rf outcoupling simulator for magnetically trapped condensates"};
  app.require_subcommand(1);

  CommonOpts check_o, run_o;
  bool run_dry = false, run_force = false;

  auto* cmd_check = app.add_subcommand("check", "validate a configuration");
  add_common(cmd_check, check_o);

  auto* cmd_run = app.add_subcommand("run", "ground state + propagation + analysis");
  add_common(cmd_run, run_o);
  cmd_run->add_flag("--dry-run", run_dry, "write the manifest only");
  cmd_run->add_flag("--force", run_force, "run even when preflight checks fail");

  std::string scan_preset, scan_spec_file, scan_output;
  int scan_parallel = 1;
  bool scan_no_resume = false;
  auto* cmd_scan = app.add_subcommand("scan", "parameter sweep");
  cmd_scan->add_option("--preset", scan_preset, "scan preset (fig6-desk, fig7-desk, ...)");
  cmd_scan->add_option("--spec", scan_spec_file, "scan specification file");
  cmd_scan->add_option("--output", scan_output, "scan output directory");
  cmd_scan->add_option("--parallelism", scan_parallel, "concurrent propagations");
  cmd_scan->add_flag("--no-resume", scan_no_resume, "ignore completed tuples");

  std::string ana_snapshot, ana_output;
  double ana_n_atoms = 0.0;
  auto* cmd_analyze = app.add_subcommand("analyze", "output-state metrics of a snapshot");
  cmd_analyze->add_option("--snapshot", ana_snapshot, "field container file")->required();
  cmd_analyze->add_option("--n-atoms", ana_n_atoms, "total atom number for fractions");
  cmd_analyze->add_option("--output", ana_output, "directory for report.json");

  std::string pre_kind, pre_name = "model", pre_out;
  auto* cmd_preset = app.add_subcommand("preset", "export a preset as a declarative file");
  cmd_preset->add_option("kind", pre_kind, "species | sequence | scan")->required();
  cmd_preset->add_option("name", pre_name, "preset name");
  cmd_preset->add_option("--output", pre_out, "destination path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (cmd_check->parsed()) {
      const sgpe::RunConfig cfg = build_config(check_o);
      const sgpe::CheckReport rep = sgpe::run_checks(cfg);
      std::cout << rep.summary();
      return rep.hard_pass ? kExitOk : kExitCheckFailed;
    }

    if (cmd_run->parsed()) {
      sgpe::RunConfig cfg = build_config(run_o);
      cfg.dry_run = run_dry;
      cfg.force = run_force;
      const sgpe::CheckReport rep = sgpe::run_checks(cfg);
      std::cout << rep.summary();
      if (!rep.hard_pass && !run_force) {
        std::cerr << "preflight checks failed (use --force to run anyway)\n";
        return kExitCheckFailed;
      }
      try {
        const sgpe::RunArtifacts art = sgpe::execute_run(cfg);
        if (!cfg.dry_run) {
          std::cout.precision(4);
          std::cout << "mu/h = " << art.mu / sgpe::consts::planck << " Hz\n";
          std::cout << "rf transfer fraction (m_F=0):  " << art.rf_transfer_fraction << "\n";
          std::cout << "rf loss fraction (m_F=+1):     " << art.rf_loss_fraction << "\n";
          std::cout << "N_mp/N = " << art.report.outcoupled_fraction
                    << ", v_bar = " << art.report.v_bar / sgpe::units::um_per_s
                    << " um/s, F = " << art.report.fidelity << "\n";
          std::cout << "artifacts: " << art.dir.string() << "\n";
        } else {
          std::cout << "dry run: manifest written to " << art.dir.string() << "\n";
        }
        return kExitOk;
      } catch (const sgpe::NumericalError& e) {
        std::cerr << "numerical failure at t = " << e.t << " s: " << e.what() << "\n";
        return kExitNumerical;
      } catch (const sgpe::DivergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
      } catch (const sgpe::ConvergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
      }
    }

    if (cmd_scan->parsed()) {
      sgpe::ScanSpec spec;
      if (!scan_spec_file.empty()) {
        spec = sgpe::ScanSpec::load_file(scan_spec_file);
      } else if (!scan_preset.empty()) {
        auto presets = sgpe::preset_scans(sgpe::make_run_config("model", "scan"));
        auto it = presets.find(scan_preset);
        if (it == presets.end()) {
          std::cerr << "unknown scan preset '" << scan_preset << "'; available:";
          for (const auto& [k, v] : presets) std::cerr << ' ' << k;
          std::cerr << "\n";
          return kExitConfig;
        }
        spec = it->second;
        spec.output_dir = std::string("scans/") + scan_preset;
      } else {
        std::cerr << "scan requires --preset or --spec\n";
        return kExitConfig;
      }
      if (!scan_output.empty()) spec.output_dir = scan_output;
      spec.parallelism = std::max(1, scan_parallel);
      if (scan_no_resume) spec.resume = false;
      const sgpe::ScanResultTable table = sgpe::run_scan(spec);
      std::size_t ok = 0;
      for (const auto& r : table.rows) ok += r.ok ? 1 : 0;
      std::cout << "scan complete: " << ok << "/" << table.rows.size() << " runs ok, table at "
                << (spec.output_dir / "scan_table.csv").string() << "\n";
      return ok == table.rows.size() ? kExitOk : kExitNumerical;
    }

    if (cmd_analyze->parsed()) {
      const sgpe::LoadedField lf = sgpe::load_field(ana_snapshot);
      const sgpe::SpeciesConstants species = sgpe::SpeciesConstants::rubidium87();
      const double n = ana_n_atoms > 0.0 ? ana_n_atoms
                                         : lf.meta.extra.value("n_atoms", 1e5);
      const sgpe::AnalysisReport rep = sgpe::metrics(lf.field, species, n);
      const nlohmann::json j = rep.to_json();
      if (!ana_output.empty()) {
        std::filesystem::create_directories(ana_output);
        std::ofstream out(std::filesystem::path(ana_output) / "report.json");
        out << j.dump(2) << "\n";
      }
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }

    if (cmd_preset->parsed()) {
      if (pre_kind == "species") {
        const std::string path = pre_out.empty() ? pre_name + ".species" : pre_out;
        sgpe::SpeciesConstants::rubidium87().save_file(path);
        std::cout << "wrote " << path << "\n";
      } else if (pre_kind == "sequence") {
        const auto species = sgpe::SpeciesConstants::rubidium87();
        const auto sched = pre_name == "sudden"
                               ? sgpe::FieldSchedule::sudden_release_preset(species)
                               : sgpe::FieldSchedule::model_sequence_preset(species);
        const std::string path = pre_out.empty() ? pre_name + ".seq" : pre_out;
        sched.save_file(path);
        std::cout << "wrote " << path << "\n";
      } else if (pre_kind == "scan") {
        auto presets = sgpe::preset_scans(sgpe::make_run_config("model", "scan"));
        auto it = presets.find(pre_name);
        if (it == presets.end()) {
          std::cerr << "unknown scan preset '" << pre_name << "'\n";
          return kExitConfig;
        }
        const std::string path = pre_out.empty() ? pre_name + ".scan" : pre_out;
        it->second.save_file(path);
        std::cout << "wrote " << path << "\n";
      } else {
        std::cerr << "unknown preset kind '" << pre_kind << "'\n";
        return kExitConfig;
      }
      return kExitOk;
    }
  } catch (const sgpe::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
