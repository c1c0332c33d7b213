#include "sgpe/run_setup.hpp"

#include <omp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "sgpe/constants.hpp"
#include "sgpe/field_io.hpp"
#include "sgpe/units.hpp"

namespace sgpe {

namespace {

struct GridPresetDef {
  GridSpec initial;
  std::optional<GridSpec> after_release;
};

GridPresetDef grid_preset(const std::string& name) {
  using units::um;
  if (name == "desk")
    return {GridSpec::cyl(80 * um, 256, 120 * um, 512, "desk"),
            GridSpec::cyl(120 * um, 256, 120 * um, 1024, "desk-free")};
  if (name == "scan")
    return {GridSpec::cyl(72 * um, 128, 120 * um, 512, "scan"),
            GridSpec::cyl(120 * um, 256, 120 * um, 1024, "scan-free")};
  if (name == "coarse")
    return {GridSpec::cyl(64 * um, 64, 96 * um, 256, "coarse"),
            GridSpec::cyl(96 * um, 64, 96 * um, 512, "coarse-free")};
  if (name == "tiny")
    return {GridSpec::cyl(48 * um, 32, 64 * um, 128, "tiny"),
            GridSpec::cyl(64 * um, 32, 64 * um, 256, "tiny-free")};
  if (name == "sudden")
    return {GridSpec::cyl(320 * um, 512, 256 * um, 1024, "sudden"), std::nullopt};
  if (name == "sudden-coarse")
    return {GridSpec::cyl(320 * um, 256, 256 * um, 512, "sudden-coarse"), std::nullopt};
  if (name == "cart3d")
    return {GridSpec::cart({80 * um, 80 * um, 120 * um}, {128, 128, 128}, "cart3d"),
            std::nullopt};
  throw ConfigError("unknown grid preset '" + name + "'");
}

double max_rabi(const FieldSchedule& s) {
  double r = 0.0;
  for (const auto& p : s.phases) r = std::max({r, p.rabi_begin, p.rabi_end});
  return r;
}

double rf_end_time(const FieldSchedule& s) {
  double t = 0.0;
  for (const auto& p : s.phases)
    if (p.rabi_begin > 0.0 || p.rabi_end > 0.0) t = std::max(t, p.t_end);
  return t;
}

double gradient_impulse(const FieldSchedule& s) {
  double impulse = 0.0;  // time integral of |gradient| (T s / m)
  for (const auto& p : s.phases)
    impulse += 0.5 * (std::abs(p.gradient_begin) + std::abs(p.gradient_end)) *
               (p.t_end - p.t_start);
  return impulse;
}

// Semi-axes of the outer (0 -> +1) resonance shell at the start of the ramp.
std::array<double, 3> green_shell_axes(const SpeciesConstants& sp, const FieldSchedule& s) {
  double delta0 = 0.0;
  for (const auto& p : s.phases)
    if (p.rabi_begin > 0.0 || p.rabi_end > 0.0)
      delta0 = std::max({delta0, p.detuning_begin, p.detuning_end});
  const double vbr = zeeman::breit_rabi_asymmetry(sp, s.trap.b_bot);
  const double e = consts::hbar * delta0 + vbr;
  std::array<double, 3> r{};
  for (int d = 0; d < 3; ++d) {
    const double w = s.trap.omega[d];
    r[d] = w > 0.0 ? std::sqrt(2.0 * e / (sp.mass * w * w)) : 0.0;
  }
  return r;
}

constexpr double kAbsorberStrengthFactor = 40.0;

AbsorberPlan plan_absorbers(const RunConfig& cfg, const GridSpec& gspec, bool trapped) {
  AbsorberPlan plan;
  const SpeciesConstants& sp = cfg.species;
  const VelocityEstimates v = estimate_velocities(cfg);

  AbsorbingLayer edge;
  edge.onset_frac = {0.15, 0.15, 0.15};
  double l_ramp;
  if (gspec.kind == GridKind::CylRZ)
    l_ramp = 0.15 * std::min(gspec.r_max, gspec.z_half);
  else
    l_ramp = 0.15 * std::min({gspec.half[0], gspec.half[1], gspec.half[2]});
  const double v_edge = trapped ? std::max(2.5e-3, 1.5 * v.v_release)
                                : std::max(2.5e-3, 1.1 * (v.v_kick + v.v_release));
  edge.peak = kAbsorberStrengthFactor * consts::hbar * v_edge / l_ramp;
  plan.edge = edge;

  if (trapped && max_rabi(cfg.schedule) > 0.0 && gspec.kind == GridKind::CylRZ) {
    const auto shell = green_shell_axes(sp, cfg.schedule);
    AbsorbingLayer inner;
    const double ramp = std::max(10e-6, 8.0 * gspec.r_max / gspec.n_rho);
    inner.onset_abs = {1.2 * shell[0], -1.0, 1.2 * shell[2]};
    inner.ramp_len = ramp;
    inner.peak = kAbsorberStrengthFactor * consts::hbar * v.v_anti_trap / ramp;
    // never let the inner layer start outside the grid
    inner.onset_abs[0] = std::min(inner.onset_abs[0], 0.7 * gspec.r_max);
    inner.onset_abs[2] = std::min(inner.onset_abs[2], 0.7 * gspec.z_half);
    plan.plus_inner = inner;
  }
  return plan;
}

std::mutex& gs_cache_mutex() {
  static std::mutex m;
  return m;
}

FieldSchedule trapped_hold_schedule(const SpeciesConstants& sp, const HarmonicTrapSpec& trap) {
  FieldSchedule f;
  f.trap = trap;
  f.rf_omega0 = zeeman::rf_offset_frequency(sp, trap.b_bot);
  f.t_max = 1e-3;
  Phase hold;
  hold.name = "hold";
  hold.t_start = 0.0;
  hold.t_end = 1e-3;
  hold.b_bot_begin = hold.b_bot_end = trap.b_bot;
  f.phases = {hold};
  f.validate();
  return f;
}

} // namespace

VelocityEstimates estimate_velocities(const RunConfig& cfg) {
  VelocityEstimates v;
  const SpeciesConstants& sp = cfg.species;
  bool weak = false;
  const double mu = thomas_fermi_mu(sp, cfg.schedule.trap, cfg.n_atoms, &weak);
  v.v_bar = std::sqrt(4.0 * mu / (7.0 * sp.mass));
  v.v_release = std::sqrt(2.0 * mu / sp.mass);
  v.v_kick = std::abs(sp.g_f) * sp.mu_b * gradient_impulse(cfg.schedule) / sp.mass;
  // anti-trapped speed when reaching the end of the inner absorber ramp
  if (max_rabi(cfg.schedule) > 0.0) {
    const auto shell = green_shell_axes(sp, cfg.schedule);
    const double w = std::max(cfg.schedule.trap.omega[0], cfg.schedule.trap.omega[2]);
    const double r0 = shell[0];
    const double r1 = 1.2 * r0 + 15e-6;
    v.v_anti_trap = w * std::sqrt(std::max(0.0, r1 * r1 - r0 * r0));
  }
  return v;
}

RunConfig make_run_config(const std::string& schedule_name, const std::string& grid_name) {
  RunConfig cfg;
  cfg.species = SpeciesConstants::rubidium87();
  cfg.schedule_name = schedule_name;
  cfg.grid_name = grid_name;
  if (schedule_name == "sudden") {
    cfg.sudden_release = true;
    if (grid_name == "desk") cfg.grid_name = "sudden";
  }
  resolve_config(cfg);
  return cfg;
}

void resolve_config(RunConfig& cfg) {
  cfg.species.validate();
  // schedule
  if (cfg.sudden_release && cfg.schedule_name == "model") cfg.schedule_name = "sudden";
  if (cfg.schedule_name == "model")
    cfg.schedule = FieldSchedule::model_sequence_preset(cfg.species);
  else if (cfg.schedule_name == "sudden")
    cfg.schedule = FieldSchedule::sudden_release_preset(cfg.species);
  else if (cfg.schedule_name.rfind("file:", 0) == 0)
    cfg.schedule = FieldSchedule::load_file(cfg.schedule_name.substr(5));
  else
    throw ConfigError("unknown schedule '" + cfg.schedule_name + "'");
  cfg.sudden_release = cfg.schedule_name == "sudden";

  if (cfg.rabi_override_hz >= 0.0) {
    for (auto& p : cfg.schedule.phases)
      if (p.rabi_begin > 0.0 || p.rabi_end > 0.0)
        p.rabi_begin = p.rabi_end = consts::two_pi * cfg.rabi_override_hz;
  }
  cfg.schedule.b_offset_shift = cfg.delta_b_mg * units::milligauss;
  cfg.schedule.validate();

  // grid and absorbers
  const GridPresetDef def = grid_preset(cfg.grid_name);
  cfg.grid = def.initial;
  cfg.propagator.regrids.clear();
  cfg.propagator.absorbers = plan_absorbers(cfg, cfg.grid, true);
  if (def.after_release) {
    // re-grid at the instantaneous trap switch-off, when present
    for (std::size_t i = 1; i < cfg.schedule.phases.size(); ++i) {
      const auto& prev = cfg.schedule.phases[i - 1];
      const auto& p = cfg.schedule.phases[i];
      if (p.jump_allowed_at_start && p.trap_scale_begin == 0.0 &&
          prev.trap_scale_end > 0.0) {
        RegridEvent ev;
        ev.time = p.t_start;
        ev.target = *def.after_release;
        ev.absorbers = plan_absorbers(cfg, ev.target, false);
        cfg.propagator.regrids.push_back(ev);
        break;
      }
    }
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  RunConfig cfg;
  cfg.species = SpeciesConstants::rubidium87();
  std::string line;
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
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "species") {
        if (val == "rb87") cfg.species = SpeciesConstants::rubidium87();
        else if (val.rfind("file:", 0) == 0) cfg.species = SpeciesConstants::load_file(val.substr(5));
        else throw ConfigError("unknown species '" + val + "'");
      } else if (key == "schedule") cfg.schedule_name = val;
      else if (key == "n_atoms") cfg.n_atoms = std::stod(val);
      else if (key == "grid") cfg.grid_name = val;
      else if (key == "method")
        cfg.propagator.method = val == "dp54" ? PropagatorConfig::Method::DormandPrince54
                                              : PropagatorConfig::Method::SplitStrang;
      else if (key == "phase_tol") cfg.propagator.phase_tol = std::stod(val);
      else if (key == "rel_tol") cfg.propagator.rel_tol = std::stod(val);
      else if (key == "fixed_dt_us") cfg.propagator.fixed_dt = std::stod(val) * 1e-6;
      else if (key == "max_dt_us") cfg.propagator.max_dt = std::stod(val) * 1e-6;
      else if (key == "sample_ms") cfg.propagator.sample_interval = std::stod(val) * units::ms;
      else if (key == "snapshot_ms") cfg.propagator.snapshot_interval = std::stod(val) * units::ms;
      else if (key == "rabi_hz") cfg.rabi_override_hz = std::stod(val);
      else if (key == "delta_b_mg") cfg.delta_b_mg = std::stod(val);
      else if (key == "zero_anti_trap") cfg.propagator.zero_anti_trap = std::stoi(val) != 0;
      else if (key == "pad_factor") cfg.analysis.pad_factor = std::stoi(val);
      else if (key == "v_max_um_s") cfg.analysis.v_max = std::stod(val) * units::um_per_s;
      else if (key == "fidelity_density_overlap")
        cfg.analysis.density_overlap_fidelity = std::stoi(val) != 0;
      else if (key == "output_dir") cfg.output_dir = val;
      else if (key == "gs_cache_dir") cfg.gs_cache_dir = val;
      else if (key == "threads") cfg.threads = std::stoi(val);
      else if (key == "sudden_release") cfg.sudden_release = std::stoi(val) != 0;
      else if (key == "write_snapshots") cfg.write_snapshots = std::stoi(val) != 0;
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: bad value for '" + key + "'");
    }
  }
  resolve_config(cfg);
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["species"] = {{"name", cfg.species.name},
                  {"mass_kg", cfg.species.mass},
                  {"ahfs_joule", cfg.species.a_hfs},
                  {"g_i", cfg.species.g_i},
                  {"g_j", cfg.species.g_j},
                  {"g_f", cfg.species.g_f},
                  {"scattering_length_m", cfg.species.scattering_length}};
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : cfg.schedule.phases)
    phases.push_back({{"name", p.name},
                      {"t_start_ms", p.t_start / units::ms},
                      {"t_end_ms", p.t_end / units::ms},
                      {"trap_scale", {p.trap_scale_begin, p.trap_scale_end}},
                      {"b_bot_gauss", {p.b_bot_begin / units::gauss, p.b_bot_end / units::gauss}},
                      {"rabi_hz", {p.rabi_begin / consts::two_pi, p.rabi_end / consts::two_pi}},
                      {"detuning_hz",
                       {p.detuning_begin / consts::two_pi, p.detuning_end / consts::two_pi}},
                      {"gradient_g_per_mm",
                       {p.gradient_begin / units::gauss_per_mm,
                        p.gradient_end / units::gauss_per_mm}}});
  j["schedule"] = {{"preset", cfg.schedule_name},
                   {"omega0_hz", cfg.schedule.rf_omega0 / consts::two_pi},
                   {"b_offset_shift_mg", cfg.schedule.b_offset_shift / units::milligauss},
                   {"trap_omega_hz",
                    {cfg.schedule.trap.omega[0] / consts::two_pi,
                     cfg.schedule.trap.omega[1] / consts::two_pi,
                     cfg.schedule.trap.omega[2] / consts::two_pi}},
                   {"trap_b_bot_gauss", cfg.schedule.trap.b_bot / units::gauss},
                   {"t_max_ms", cfg.schedule.t_max / units::ms},
                   {"phases", phases}};
  j["n_atoms"] = cfg.n_atoms;
  j["grid"] = gridspec_to_json(cfg.grid);
  nlohmann::json regrids = nlohmann::json::array();
  for (const auto& r : cfg.propagator.regrids)
    regrids.push_back({{"time_ms", r.time / units::ms}, {"target", gridspec_to_json(r.target)}});
  j["propagator"] = {
      {"method",
       cfg.propagator.method == PropagatorConfig::Method::SplitStrang ? "split" : "dp54"},
      {"phase_tol", cfg.propagator.phase_tol},
      {"rel_tol", cfg.propagator.rel_tol},
      {"fixed_dt", cfg.propagator.fixed_dt},
      {"max_dt", cfg.propagator.max_dt},
      {"sample_interval", cfg.propagator.sample_interval},
      {"snapshot_interval", cfg.propagator.snapshot_interval},
      {"zero_anti_trap", cfg.propagator.zero_anti_trap},
      {"regrids", regrids}};
  if (cfg.propagator.absorbers.edge)
    j["propagator"]["edge_absorber_peak_j"] = cfg.propagator.absorbers.edge->peak;
  if (cfg.propagator.absorbers.plus_inner) {
    const auto& in = *cfg.propagator.absorbers.plus_inner;
    j["propagator"]["plus_inner_absorber"] = {
        {"onset_abs_um", {in.onset_abs[0] / units::um, in.onset_abs[2] / units::um}},
        {"ramp_um", in.ramp_len / units::um},
        {"peak_j", in.peak}};
  }
  j["analysis"] = {{"threshold", cfg.analysis.threshold},
                   {"pad_factor", cfg.analysis.pad_factor},
                   {"v_max", cfg.analysis.v_max},
                   {"density_overlap_fidelity", cfg.analysis.density_overlap_fidelity}};
  j["overrides"] = {{"rabi_hz", cfg.rabi_override_hz}, {"delta_b_mg", cfg.delta_b_mg}};
  j["sudden_release"] = cfg.sudden_release;
  j["threads"] = cfg.threads;
  j["version"] = "sgpe 0.1.0";
  return j;
}

CheckReport run_checks(const RunConfig& cfg) {
  CheckReport rep;
  const SpeciesConstants& sp = cfg.species;
  bool weak = false;
  rep.mu_tf = thomas_fermi_mu(sp, cfg.schedule.trap, cfg.n_atoms, &weak);
  rep.anti_trap_ratio = zeeman::anti_trap_ratio(sp, cfg.schedule.trap.b_bot, &rep.anti_trap_warn);
  const double rabi = max_rabi(cfg.schedule);
  rep.rf_active = rabi > 0.0;
  rep.sharp_resonance = zeeman::sharp_resonance_check(sp, rep.mu_tf, rabi);
  rep.state_selectivity = zeeman::state_selectivity_check(sp, cfg.schedule.trap.b_bot, rep.mu_tf);

  double dmax = 0.0;
  for (const auto& p : cfg.schedule.phases)
    if (p.rabi_begin > 0.0 || p.rabi_end > 0.0)
      dmax = std::max({dmax, std::abs(p.detuning_begin), std::abs(p.detuning_end)});
  rep.omega0_over_detuning =
      dmax > 0.0 ? std::abs(cfg.schedule.rf_omega0) / dmax
                 : std::numeric_limits<double>::infinity();

  const VelocityEstimates v = estimate_velocities(cfg);
  // base: lattice resolves four times the mean expansion-velocity scale; the
  // z axis of the grid active during the gradient pulse additionally carries
  // the coherent kick on top of a doubled spread margin.
  auto add_nyquist = [&](const GridSpec& gs, const std::string& label, bool sees_kick) {
    Grid grid(gs);
    auto push = [&](const std::string& axis, int dim, bool kick_axis) {
      CheckReport::NyquistRow row;
      row.grid = label;
      row.axis = axis;
      row.nyquist = grid.nyquist_velocity(dim, sp.mass);
      row.required = kick_axis ? std::max(4.0 * v.v_bar, v.v_kick + 2.0 * v.v_bar)
                               : 4.0 * v.v_bar;
      row.margin = row.nyquist / std::max(row.required, 1e-30);
      row.pass = row.nyquist >= row.required;
      rep.nyquist.push_back(row);
    };
    if (gs.kind == GridKind::CylRZ) {
      push("rho", 0, false);
      push("z", 2, sees_kick);
    } else {
      push("x", 0, false);
      push("y", 1, false);
      push("z", 2, sees_kick);
    }
  };
  const bool kick_present = v.v_kick > 0.0;
  add_nyquist(cfg.grid, "initial", kick_present && cfg.propagator.regrids.empty());
  for (const auto& r : cfg.propagator.regrids)
    add_nyquist(r.target, "after-release", kick_present);

  rep.hard_pass = (!rep.rf_active || (rep.sharp_resonance.pass && rep.state_selectivity.pass)) &&
                  rep.omega0_over_detuning >= 1e3;
  for (const auto& row : rep.nyquist) rep.hard_pass = rep.hard_pass && row.pass;
  return rep;
}

std::string CheckReport::summary() const {
  std::ostringstream os;
  os.precision(4);
  os << "mu_TF/h = " << mu_tf / consts::planck << " Hz\n";
  if (rf_active) {
    os << "sharp resonance:    mu^2 / (hbar Omega)^2 = " << sharp_resonance.ratio << " ("
       << (sharp_resonance.pass ? "pass" : "FAIL") << ", threshold 10)\n";
    os << "state selectivity:  B_bot^2 / rhs = " << state_selectivity.ratio << " ("
       << (state_selectivity.pass ? "pass" : "FAIL") << ", threshold 5)\n";
  } else {
    os << "rf drive off; resonance conditions not applicable\n";
  }
  os << "anti-trap ratio |V_0/V_-1| = " << anti_trap_ratio
     << (anti_trap_warn ? " (warning: b^2 expansion marginal)" : "") << "\n";
  os << "omega_0 / max|Delta_rf| = " << omega0_over_detuning << "\n";
  for (const auto& row : nyquist)
    os << "nyquist " << row.grid << " " << row.axis << ": "
       << row.nyquist / units::um_per_s << " um/s vs required "
       << row.required / units::um_per_s << " um/s (margin " << row.margin << ", "
       << (row.pass ? "pass" : "FAIL") << ")\n";
  os << (hard_pass ? "all checks passed" : "CHECKS FAILED") << "\n";
  return os.str();
}

nlohmann::json CheckReport::to_json() const {
  nlohmann::json j;
  j["mu_tf_hz"] = mu_tf / consts::planck;
  j["rf_active"] = rf_active;
  j["sharp_resonance"] = {{"ratio", sharp_resonance.ratio}, {"pass", sharp_resonance.pass}};
  j["state_selectivity"] = {{"ratio", state_selectivity.ratio},
                            {"pass", state_selectivity.pass}};
  j["anti_trap_ratio"] = anti_trap_ratio;
  j["anti_trap_warn"] = anti_trap_warn;
  j["omega0_over_detuning"] = omega0_over_detuning;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : nyquist)
    rows.push_back({{"grid", r.grid},
                    {"axis", r.axis},
                    {"nyquist_um_s", r.nyquist / units::um_per_s},
                    {"required_um_s", r.required / units::um_per_s},
                    {"pass", r.pass}});
  j["nyquist"] = rows;
  j["hard_pass"] = hard_pass;
  return j;
}

GroundStateResult ground_state_cached(const RunConfig& cfg, const Grid& grid) {
  namespace fs = std::filesystem;
  const FieldSchedule hold = trapped_hold_schedule(cfg.species, cfg.schedule.trap);

  std::ostringstream key;
  key.precision(17);
  key << cfg.species.name << '|' << cfg.species.mass << '|' << cfg.species.a_hfs << '|'
      << cfg.species.g_f << '|' << cfg.species.scattering_length[0][0] << '|'
      << cfg.schedule.trap.omega[0] << '|' << cfg.schedule.trap.omega[1] << '|'
      << cfg.schedule.trap.omega[2] << '|' << cfg.schedule.trap.b_bot << '|'
      << cfg.n_atoms << '|' << gridspec_to_json(grid.spec()).dump() << "|v1";
  const std::size_t h = std::hash<std::string>{}(key.str());
  std::ostringstream hex;
  hex << std::hex << h;

  fs::path cache_dir = cfg.gs_cache_dir;
  if (cache_dir.empty())
    cache_dir = (cfg.output_dir.has_parent_path() ? cfg.output_dir.parent_path()
                                                  : fs::path(".")) /
                "gs_cache";
  const fs::path file = cache_dir / ("gs_" + hex.str() + ".fld");

  std::lock_guard<std::mutex> lock(gs_cache_mutex());
  if (fs::exists(file)) {
    LoadedField lf = load_field(file.string());
    if (lf.grid->spec() == grid.spec()) {
      GroundStateResult res;
      res.psi = ComplexField(grid);
      res.psi.v = lf.field.v;
      res.mu = lf.meta.extra.value("mu", 0.0);
      res.energy = lf.meta.extra.value("energy", 0.0);
      res.e_kinetic = lf.meta.extra.value("e_kinetic", 0.0);
      res.e_potential = lf.meta.extra.value("e_potential", 0.0);
      res.e_interaction = lf.meta.extra.value("e_interaction", 0.0);
      res.residual = lf.meta.extra.value("residual", 0.0);
      res.iterations = lf.meta.extra.value("iterations", 0);
      res.status = GroundStateStatus::Converged;
      return res;
    }
  }
  GroundStateResult res = solve_ground_state(cfg.species, hold, cfg.n_atoms, grid);
  fs::create_directories(cache_dir);
  SnapshotMeta meta;
  meta.time = 0.0;
  meta.label = "groundstate_psi_m-1";
  meta.extra = {{"mu", res.mu},
                {"energy", res.energy},
                {"e_kinetic", res.e_kinetic},
                {"e_potential", res.e_potential},
                {"e_interaction", res.e_interaction},
                {"residual", res.residual},
                {"iterations", res.iterations},
                {"n_atoms", cfg.n_atoms}};
  save_field(file.string(), res.psi, meta);
  return res;
}

RunArtifacts execute_run(const RunConfig& config) {
  namespace fs = std::filesystem;
  RunConfig cfg = config;  // local copy; resolution is idempotent
  resolve_config(cfg);
  omp_set_num_threads(std::max(1, cfg.threads));

  RunArtifacts art;
  art.dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);

  // manifest first: it alone must suffice to re-execute the run
  {
    nlohmann::json manifest = config_to_json(cfg);
    manifest["checks"] = run_checks(cfg).to_json();
    std::ofstream out(cfg.output_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  }
  if (cfg.dry_run) return art;

  auto grid = std::make_shared<Grid>(cfg.grid);
  GroundStateResult gs = ground_state_cached(cfg, *grid);
  art.mu = gs.mu;

  SpinorState st(grid);
  st.psi[0].v = gs.psi.v;

  const fs::path snapdir = cfg.output_dir / "snapshots";
  if (cfg.write_snapshots) fs::create_directories(snapdir);
  SnapshotSink sink;
  if (cfg.write_snapshots && cfg.propagator.snapshot_interval > 0.0) {
    sink = [&](const SpinorState& s) {
      static const char* labels[3] = {"psi_m-1", "psi_0", "psi_p1"};
      for (int c = 0; c < 3; ++c) {
        std::ostringstream name;
        name << labels[c] << "_t" << std::fixed << std::setprecision(1)
             << s.t / units::ms << "ms.fld";
        SnapshotMeta meta;
        meta.time = s.t;
        meta.label = labels[c];
        meta.extra = {{"detuning_phase", s.detuning_phase}, {"n_atoms", cfg.n_atoms}};
        save_field((snapdir / name.str()).string(), s.psi[c], meta, true);
      }
    };
  }

  Trajectory traj = propagate(std::move(st), cfg.species, cfg.schedule, cfg.propagator, sink);
  art.series = traj.series;
  art.wall_seconds = traj.wall_seconds;
  art.steps = traj.steps;

  // particle-number time series
  {
    std::ofstream out(cfg.output_dir / "particle_numbers.csv");
    out << "t_ms,n_m1,n_0,n_p1,absorbed_m1,absorbed_0,absorbed_p1\n";
    out.precision(10);
    for (std::size_t i = 0; i < traj.series.t.size(); ++i) {
      out << traj.series.t[i] / units::ms;
      for (int c = 0; c < 3; ++c) out << ',' << traj.series.norm[c][i];
      for (int c = 0; c < 3; ++c) out << ',' << traj.series.absorbed[c][i];
      out << '\n';
    }
  }

  // rf bookkeeping: fractions at the end of the outcoupling ramp
  const double t_rf = rf_end_time(cfg.schedule);
  if (t_rf > 0.0) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < traj.series.t.size(); ++i)
      if (traj.series.t[i] <= t_rf + 1e-9) idx = i;
    const double n = cfg.n_atoms;
    art.rf_transfer_fraction =
        (traj.series.norm[1][idx] + traj.series.absorbed[1][idx]) / n;
    art.rf_loss_fraction = (traj.series.norm[2][idx] + traj.series.absorbed[2][idx]) / n;
    art.trapped_remnant_fraction = traj.series.norm[0][idx] / n;
  }

  // final state snapshots (full precision)
  const SpinorState& fin = *traj.final_state;
  if (cfg.write_snapshots) {
    static const char* labels[3] = {"psi_m-1", "psi_0", "psi_p1"};
    for (int c = 0; c < 3; ++c) {
      SnapshotMeta meta;
      meta.time = fin.t;
      meta.label = labels[c];
      meta.extra = {{"detuning_phase", fin.detuning_phase},
                    {"n_atoms", cfg.n_atoms},
                    {"absorbed", fin.absorbed},
                    {"species_gf", cfg.species.g_f},
                    {"species_mass", cfg.species.mass}};
      save_field((snapdir / (std::string("final_") + labels[c] + ".fld")).string(),
                 fin.psi[c], meta);
    }
  }

  // output-state metrology on the analyzed component
  const int analyzed = cfg.sudden_release ? 0 : 1;
  art.report = metrics(fin.psi[analyzed], cfg.species, cfg.n_atoms, cfg.analysis);
  art.report.final_norms = fin.norms();
  art.report.absorbed = fin.absorbed;

  {
    nlohmann::json rep = art.report.to_json();
    rep["analyzed_component_mf"] = mf_of(analyzed);
    rep["mu_hz"] = art.mu / consts::planck;
    rep["rf_transfer_fraction"] = art.rf_transfer_fraction;
    rep["rf_loss_fraction"] = art.rf_loss_fraction;
    rep["trapped_remnant_fraction"] = art.trapped_remnant_fraction;
    rep["steps"] = traj.steps;
    rep["rhs_evaluations"] = traj.rhs_evaluations;
    rep["wall_seconds"] = traj.wall_seconds;
    rep["regrid_norm_error"] = traj.regrid_norm_error;
    if (t_rf > 0.0)
      rep["predicted_release_energy_hz"] =
          predicted_release_energy(cfg.species, cfg.schedule, art.mu, 0.0) /
          consts::planck;
    std::ofstream out(cfg.output_dir / "report.json");
    out << rep.dump(2) << "\n";
  }
  write_density_matrix_csv((cfg.output_dir / "density_rz.csv").string(), fin.psi[analyzed]);
  write_axis_cuts_csv((cfg.output_dir / "density_cuts.csv").string(), fin.psi[analyzed]);
  return art;
}

} // namespace sgpe
