#include "sgpe/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sgpe/constants.hpp"
#include "sgpe/grid.hpp"
#include "sgpe/units.hpp"
#include "sgpe/zeeman.hpp"

namespace sgpe {

namespace {
constexpr double kBoundaryEps = 1e-12;

double lerp(double a, double b, double s) { return a + (b - a) * s; }

double phase_frac(const Phase& p, double t) {
  const double len = p.t_end - p.t_start;
  return len > 0.0 ? (t - p.t_start) / len : 0.0;
}
} // namespace

void FieldSchedule::validate() const {
  if (phases.empty()) throw std::invalid_argument("schedule: no phases");
  for (const auto& p : phases) {
    if (!(p.t_end > p.t_start)) throw std::invalid_argument("schedule: empty phase '" + p.name + "'");
    if (p.rabi_begin < 0.0 || p.rabi_end < 0.0)
      throw std::invalid_argument("schedule: Rabi frequency must be >= 0");
    if (p.b_bot_begin < 0.0 || p.b_bot_end < 0.0)
      throw std::invalid_argument("schedule: field offset must be >= 0");
    const bool trap_on = p.trap_scale_begin > 0.0 || p.trap_scale_end > 0.0;
    if (trap_on && (p.b_bot_begin <= 0.0 || p.b_bot_end <= 0.0))
      throw std::invalid_argument("schedule: B_bot must stay > 0 while the trap is on");
    const bool rf_on = p.rabi_begin > 0.0 || p.rabi_end > 0.0;
    if (rf_on) {
      const double dmax = std::max(std::abs(p.detuning_begin), std::abs(p.detuning_end));
      if (dmax > 0.0 && std::abs(rf_omega0) < 1e3 * dmax)
        throw std::invalid_argument("schedule: |omega_0| must exceed |Delta_rf| by >= 1e3");
    }
  }
  if (std::abs(phases.front().t_start) > kBoundaryEps)
    throw std::invalid_argument("schedule: first phase must start at t = 0");
  for (std::size_t i = 1; i < phases.size(); ++i) {
    const auto& a = phases[i - 1];
    const auto& b = phases[i];
    if (std::abs(b.t_start - a.t_end) > kBoundaryEps)
      throw std::invalid_argument("schedule: phases must be contiguous");
    if (!b.jump_allowed_at_start) {
      if (std::abs(b.b_bot_begin - a.b_bot_end) > 1e-12 ||
          std::abs(b.trap_scale_begin - a.trap_scale_end) > 1e-12 ||
          std::abs(b.gradient_begin - a.gradient_end) > 1e-9)
        throw std::invalid_argument("schedule: discontinuity at '" + b.name +
                                    "' without jump_allowed_at_start");
    }
  }
  if (t_max < phases.back().t_end - kBoundaryEps)
    throw std::invalid_argument("schedule: t_max must cover the last phase");
}

const Phase& FieldSchedule::phase_at(double t) const {
  if (t < -kBoundaryEps || t > t_max + kBoundaryEps)
    throw std::out_of_range("schedule: t outside [0, t_max]");
  for (const auto& p : phases)
    if (t < p.t_end) return p;
  return phases.back();
}

ScheduleSample FieldSchedule::sample(double t) const {
  const Phase& p = phase_at(t);
  const double s = std::clamp(phase_frac(p, t), 0.0, 1.0);
  ScheduleSample out;
  out.t = t;
  out.trap_scale = lerp(p.trap_scale_begin, p.trap_scale_end, s);
  for (int d = 0; d < 3; ++d) out.omega[d] = out.trap_scale * trap.omega[d];
  out.b_bot = lerp(p.b_bot_begin, p.b_bot_end, s) + b_offset_shift;
  out.rabi = lerp(p.rabi_begin, p.rabi_end, s);
  out.detuning = lerp(p.detuning_begin, p.detuning_end, s);
  out.gradient = lerp(p.gradient_begin, p.gradient_end, s);
  return out;
}

std::vector<double> FieldSchedule::boundaries() const {
  std::vector<double> b;
  for (const auto& p : phases) b.push_back(p.t_start);
  b.push_back(phases.back().t_end);
  if (t_max > phases.back().t_end + kBoundaryEps) b.push_back(t_max);
  return b;
}

double FieldSchedule::accumulated_detuning_phase(double t) const {
  if (t < -kBoundaryEps || t > t_max + kBoundaryEps)
    throw std::out_of_range("schedule: t outside [0, t_max]");
  double phi = 0.0;
  for (const auto& p : phases) {
    if (t <= p.t_start) break;
    const double tt = std::min(t, p.t_end);
    const double u = tt - p.t_start;
    const double len = p.t_end - p.t_start;
    const double slope = (p.detuning_end - p.detuning_begin) / len;
    phi += p.detuning_begin * u + 0.5 * slope * u * u;
  }
  return phi;
}

std::array<double, 3> FieldSchedule::curvatures(const SpeciesConstants& s,
                                                const ScheduleSample& at) const {
  std::array<double, 3> c{};
  const double denom = std::abs(s.g_f) * s.mu_b;
  for (int d = 0; d < 3; ++d) c[d] = s.mass * at.omega[d] * at.omega[d] / denom;
  return c;
}

double FieldSchedule::field_magnitude(const SpeciesConstants& s, const std::array<double, 3>& x,
                                      double t, bool* clamped) const {
  const ScheduleSample at = sample(t);
  const auto curv = curvatures(s, at);
  double b = at.b_bot + at.gradient * x[2];
  for (int d = 0; d < 3; ++d) b += 0.5 * curv[d] * x[d] * x[d];
  if (b < 0.0) {
    if (clamped) *clamped = true;
    b = 0.0;
  }
  return b;
}

bool FieldSchedule::axially_symmetric() const { return trap.omega[0] == trap.omega[1]; }

FieldSchedule FieldSchedule::model_sequence_preset(const SpeciesConstants& s) {
  using units::angular;
  using units::gauss;
  using units::gauss_per_mm;
  using units::ms;

  FieldSchedule f;
  f.trap.omega = {angular(30.0), angular(30.0), angular(15.0)};
  f.trap.b_bot = 4.0 * gauss;
  f.rf_omega0 = zeeman::rf_offset_frequency(s, f.trap.b_bot);
  f.t_max = 140.0 * ms;

  Phase rf;
  rf.name = "rf_outcouple";
  rf.t_start = 0.0;
  rf.t_end = 90.0 * ms;
  rf.b_bot_begin = rf.b_bot_end = 4.0 * gauss;
  rf.rabi_begin = rf.rabi_end = angular(90.0);
  rf.detuning_begin = angular(319.0);
  rf.detuning_end = angular(319.0 - 1.6 * 90.0);

  Phase ramp;
  ramp.name = "trap_rampdown";
  ramp.t_start = 90.0 * ms;
  ramp.t_end = 95.0 * ms;
  ramp.trap_scale_begin = 1.0;
  ramp.trap_scale_end = 0.1;
  ramp.b_bot_begin = 4.0 * gauss;
  ramp.b_bot_end = 1.0 * gauss;

  Phase free1;
  free1.name = "free_expansion";
  free1.t_start = 95.0 * ms;
  free1.t_end = 110.0 * ms;
  free1.trap_scale_begin = free1.trap_scale_end = 0.0;
  free1.b_bot_begin = free1.b_bot_end = 0.2 * gauss;
  free1.jump_allowed_at_start = true;  // instantaneous trap switch-off

  Phase grad;
  grad.name = "gradient_pulse";
  grad.t_start = 110.0 * ms;
  grad.t_end = 112.0 * ms;
  grad.b_bot_begin = grad.b_bot_end = 0.2 * gauss;
  grad.gradient_begin = grad.gradient_end = 1.0 * gauss_per_mm;
  grad.jump_allowed_at_start = true;

  Phase free2;
  free2.name = "free_to_end";
  free2.t_start = 112.0 * ms;
  free2.t_end = 140.0 * ms;
  free2.b_bot_begin = free2.b_bot_end = 0.2 * gauss;
  free2.jump_allowed_at_start = true;  // gradient switch-off

  f.phases = {rf, ramp, free1, grad, free2};
  f.validate();
  return f;
}

FieldSchedule FieldSchedule::sudden_release_preset(const SpeciesConstants& s) {
  using units::angular;
  using units::gauss;
  using units::ms;

  FieldSchedule f;
  f.trap.omega = {angular(30.0), angular(30.0), angular(15.0)};
  f.trap.b_bot = 4.0 * gauss;
  f.rf_omega0 = zeeman::rf_offset_frequency(s, f.trap.b_bot);
  f.t_max = 140.0 * ms;

  Phase free;
  free.name = "free_expansion";
  free.t_start = 0.0;
  free.t_end = 140.0 * ms;
  free.trap_scale_begin = free.trap_scale_end = 0.0;
  free.b_bot_begin = free.b_bot_end = 0.2 * gauss;
  free.jump_allowed_at_start = true;  // trap off at t = 0

  f.phases = {free};
  f.validate();
  return f;
}

double trap_potential_at(const SpeciesConstants& s, const FieldSchedule& sched, int m_f,
                         const std::array<double, 3>& x, double t, bool zero_anti_trap) {
  if (zero_anti_trap && m_f == 0) return 0.0;
  const ScheduleSample at = sched.sample(t);
  const auto curv = sched.curvatures(s, at);
  double b = at.b_bot + at.gradient * x[2];
  for (int d = 0; d < 3; ++d) b += 0.5 * curv[d] * x[d] * x[d];
  if (b < 0.0) b = 0.0;
  return zeeman::breit_rabi_potential(s, m_f, b) -
         zeeman::breit_rabi_potential(s, m_f, at.b_bot);
}

ScalarField potential_on_grid(const SpeciesConstants& s, const FieldSchedule& sched,
                              int m_f, const Grid& grid, double t, bool zero_anti_trap) {
  ScalarField out(grid);
  if (zero_anti_trap && m_f == 0) return out;
  const ScheduleSample at = sched.sample(t);
  const auto curv = sched.curvatures(s, at);
  const double v_ref = zeeman::breit_rabi_potential(s, m_f, at.b_bot);
  const std::int64_t n = std::int64_t(grid.total());
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < n; ++idx) {
    const auto x = grid.position(std::size_t(idx));
    double b = at.b_bot + at.gradient * x[2];
    for (int d = 0; d < 3; ++d) b += 0.5 * curv[d] * x[d] * x[d];
    if (b < 0.0) b = 0.0;
    out.v[std::size_t(idx)] = zeeman::breit_rabi_potential(s, m_f, b) - v_ref;
  }
  return out;
}

namespace {

std::string fmt_ramp(double a, double b, double scale) {
  std::ostringstream os;
  os.precision(17);
  if (a == b)
    os << a / scale;
  else
    os << a / scale << " -> " << b / scale;
  return os.str();
}

void parse_ramp(const std::string& text, double scale, double* begin, double* end) {
  auto arrow = text.find("->");
  if (arrow == std::string::npos) {
    *begin = *end = std::stod(text) * scale;
  } else {
    *begin = std::stod(text.substr(0, arrow)) * scale;
    *end = std::stod(text.substr(arrow + 2)) * scale;
  }
}

} // namespace

void FieldSchedule::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("schedule: cannot write '" + path + "'");
  out.precision(17);
  out << "# outcoupling sequence (frequencies in Hz as omega/2pi, fields in G, times in ms)\n";
  out << "omega0_hz = " << rf_omega0 / consts::two_pi << "\n";
  out << "trap_omega_x_hz = " << trap.omega[0] / consts::two_pi << "\n";
  out << "trap_omega_y_hz = " << trap.omega[1] / consts::two_pi << "\n";
  out << "trap_omega_z_hz = " << trap.omega[2] / consts::two_pi << "\n";
  out << "trap_b_bot_gauss = " << trap.b_bot / units::gauss << "\n";
  out << "b_offset_shift_gauss = " << b_offset_shift / units::gauss << "\n";
  out << "t_max_ms = " << t_max / units::ms << "\n";
  for (const auto& p : phases) {
    out << "\n[phase " << p.name << "]\n";
    out << "t_start_ms = " << p.t_start / units::ms << "\n";
    out << "t_end_ms = " << p.t_end / units::ms << "\n";
    out << "trap_scale = " << fmt_ramp(p.trap_scale_begin, p.trap_scale_end, 1.0) << "\n";
    out << "b_bot_gauss = " << fmt_ramp(p.b_bot_begin, p.b_bot_end, units::gauss) << "\n";
    out << "rabi_hz = " << fmt_ramp(p.rabi_begin, p.rabi_end, consts::two_pi) << "\n";
    out << "detuning_hz = " << fmt_ramp(p.detuning_begin, p.detuning_end, consts::two_pi) << "\n";
    out << "gradient_gauss_per_mm = "
        << fmt_ramp(p.gradient_begin, p.gradient_end, units::gauss_per_mm) << "\n";
    out << "jump_allowed_at_start = " << (p.jump_allowed_at_start ? 1 : 0) << "\n";
  }
}

FieldSchedule FieldSchedule::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("schedule: cannot open '" + path + "'");
  FieldSchedule f;
  Phase* cur = nullptr;
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
    if (line.front() == '[') {
      auto close = line.find(']');
      if (close == std::string::npos) throw std::runtime_error("schedule: malformed section");
      std::string head = trim(line.substr(1, close - 1));
      if (head.rfind("phase", 0) != 0) throw std::runtime_error("schedule: unknown section");
      f.phases.emplace_back();
      cur = &f.phases.back();
      cur->name = trim(head.substr(5));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("schedule: expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!cur) {
      if (key == "omega0_hz") f.rf_omega0 = std::stod(val) * consts::two_pi;
      else if (key == "trap_omega_x_hz") f.trap.omega[0] = std::stod(val) * consts::two_pi;
      else if (key == "trap_omega_y_hz") f.trap.omega[1] = std::stod(val) * consts::two_pi;
      else if (key == "trap_omega_z_hz") f.trap.omega[2] = std::stod(val) * consts::two_pi;
      else if (key == "trap_b_bot_gauss") f.trap.b_bot = std::stod(val) * units::gauss;
      else if (key == "b_offset_shift_gauss") f.b_offset_shift = std::stod(val) * units::gauss;
      else if (key == "t_max_ms") f.t_max = std::stod(val) * units::ms;
      else throw std::runtime_error("schedule: unknown key '" + key + "'");
    } else {
      if (key == "t_start_ms") cur->t_start = std::stod(val) * units::ms;
      else if (key == "t_end_ms") cur->t_end = std::stod(val) * units::ms;
      else if (key == "trap_scale") parse_ramp(val, 1.0, &cur->trap_scale_begin, &cur->trap_scale_end);
      else if (key == "b_bot_gauss") parse_ramp(val, units::gauss, &cur->b_bot_begin, &cur->b_bot_end);
      else if (key == "rabi_hz") parse_ramp(val, consts::two_pi, &cur->rabi_begin, &cur->rabi_end);
      else if (key == "detuning_hz") parse_ramp(val, consts::two_pi, &cur->detuning_begin, &cur->detuning_end);
      else if (key == "gradient_gauss_per_mm")
        parse_ramp(val, units::gauss_per_mm, &cur->gradient_begin, &cur->gradient_end);
      else if (key == "jump_allowed_at_start") cur->jump_allowed_at_start = std::stoi(val) != 0;
      else throw std::runtime_error("schedule: unknown phase key '" + key + "'");
    }
  }
  f.validate();
  return f;
}

} // namespace sgpe
