#pragma once

#include <array>
#include <string>
#include <vector>

#include "sgpe/species.hpp"

namespace sgpe {

class Grid;
struct ScalarField;

// Base (t = 0) harmonic magnetic trap: frequencies seen by the m_F = -1
// state and the offset field at the trap bottom.
struct HarmonicTrapSpec {
  std::array<double, 3> omega{};  // rad/s
  double b_bot = 0.0;             // T
};

// One phase of the outcoupling sequence.  Every scheduled quantity ramps
// linearly from its begin to its end value across the phase.
struct Phase {
  std::string name;
  double t_start = 0.0, t_end = 0.0;               // s
  double trap_scale_begin = 1.0, trap_scale_end = 1.0;  // multiplies base omegas
  double b_bot_begin = 0.0, b_bot_end = 0.0;       // T
  double rabi_begin = 0.0, rabi_end = 0.0;         // rad/s
  double detuning_begin = 0.0, detuning_end = 0.0; // rad/s
  double gradient_begin = 0.0, gradient_end = 0.0; // T/m, along z
  // Instantaneous field discontinuities are only allowed at the trap
  // switch-off and at the gradient-pulse edges.
  bool jump_allowed_at_start = false;
};

// Scheduled quantities evaluated at one instant.
struct ScheduleSample {
  double t = 0.0;
  std::array<double, 3> omega{};  // trap frequencies (rad/s)
  double trap_scale = 0.0;
  double b_bot = 0.0;             // T (includes any scan offset deviation)
  double rabi = 0.0;              // rad/s
  double detuning = 0.0;          // rad/s
  double gradient = 0.0;          // T/m
};

// Time-dependent magnetic field magnitude, rf drive and the piecewise
// outcoupling sequence, evaluable at any t in [0, t_max].
class FieldSchedule {
 public:
  HarmonicTrapSpec trap;
  double rf_omega0 = 0.0;       // rad/s; fixed offset frequency of the rf drive
  double b_offset_shift = 0.0;  // T; constant deviation of the field offset (scans)
  std::vector<Phase> phases;
  double t_max = 0.0;

  void validate() const;  // throws std::invalid_argument
  const Phase& phase_at(double t) const;
  ScheduleSample sample(double t) const;
  std::vector<double> boundaries() const;

  // phi(t) = integral of the detuning ramp, closed form per linear segment.
  double accumulated_detuning_phase(double t) const;

  // |B|(x, t) = B_bot(t) + sum_i curvature_i x_i^2/2 + B_grad(t) z, clamped at 0.
  double field_magnitude(const SpeciesConstants& s, const std::array<double, 3>& x,
                         double t, bool* clamped = nullptr) const;

  // Curvatures M omega_i(t)^2 / (|g_F| mu_B) of the harmonic field (T/m^2).
  std::array<double, 3> curvatures(const SpeciesConstants& s, const ScheduleSample& at) const;

  bool axially_symmetric() const;  // omega_x == omega_y

  static FieldSchedule model_sequence_preset(const SpeciesConstants& s);
  static FieldSchedule sudden_release_preset(const SpeciesConstants& s);

  void save_file(const std::string& path) const;
  static FieldSchedule load_file(const std::string& path);
};

// Sublevel-dependent trapping potential, measured relative to the
// instantaneous trap bottom so it vanishes at the field minimum:
//   V_trap,m(x,t) = V_BR(m, |B|(x,t)) - V_BR(m, B_bot(t)).
double trap_potential_at(const SpeciesConstants& s, const FieldSchedule& sched, int m_f,
                         const std::array<double, 3>& x, double t,
                         bool zero_anti_trap = false);

// The same potential evaluated on every grid point.
ScalarField potential_on_grid(const SpeciesConstants& s, const FieldSchedule& sched,
                              int m_f, const Grid& grid, double t,
                              bool zero_anti_trap = false);

} // namespace sgpe
