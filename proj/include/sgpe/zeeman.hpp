#pragma once

#include "sgpe/species.hpp"

// Closed-form hyperfine energies from the Breit-Rabi formula for a J=1/2,
// I=3/2 ground-state manifold, plus the outcoupling feasibility checks.
// All functions are pure and safe for concurrent use.
namespace sgpe::zeeman {

// Dimensionless field parameter b = (g_J - g_I) mu_B B / (2 A_hfs).
// Throws std::domain_error for B < 0.
double dimensionless_b(const SpeciesConstants& s, double field_tesla);

// Field strength at which b = 1, i.e. 2 A_hfs / ((g_J - g_I) mu_B).
double field_at_unit_b(const SpeciesConstants& s);

// Breit-Rabi potential of the sublevel m_f in {-1,0,+1} at field B:
//   V = -A/4 - m_f g_I mu_B B - A sqrt(1 + m_f b + b^2)      [J]
double breit_rabi_potential(const SpeciesConstants& s, int m_f, double field_tesla);

struct TransitionFrequencies {
  double minus_to_zero; // omega_{-1,0}  (rad/s)
  double zero_to_plus;  // omega_{0,+1}  (rad/s)
};

// Both transition frequencies, evaluated in a cancellation-free form so that
// their small difference is accurate to machine precision.
TransitionFrequencies transition_frequencies(const SpeciesConstants& s, double field_tesla);

// rf offset omega_0 = [V(-1) - V(0)]/hbar at the trap bottom (rad/s).
double rf_offset_frequency(const SpeciesConstants& s, double field_tesla);

// V_BR = V(-1) + V(+1) - 2 V(0) = hbar (omega_{-1,0} - omega_{0,+1}),
// the asymmetric splitting of the manifold (J).  Stable closed form.
double breit_rabi_asymmetry(const SpeciesConstants& s, double field_tesla);

// |V_trap,0| / |V_trap,-1| = (g_J - g_I)^2 mu_B B_bot / (4 |g_F| A_hfs),
// the first-order anti-trapping ratio of the m_F = 0 sublevel.
// Sets *warn_large_b when b(B_bot)^2 > 1e-2 (expansion validity).
double anti_trap_ratio(const SpeciesConstants& s, double b_bot_tesla,
                       bool* warn_large_b = nullptr);

struct ConditionCheck {
  bool pass = false;
  double ratio = 0.0; // lhs / rhs
  double lhs = 0.0;
  double rhs = 0.0;
};

// Sharp-resonance condition mu^2 >> (hbar Omega_rf)^2.  Ratio mu^2/(hbar Omega)^2
// reported; passes at ratio >= threshold (default 10).  Omega = 0 reports +inf.
ConditionCheck sharp_resonance_check(const SpeciesConstants& s, double mu,
                                     double omega_rabi, double threshold = 10.0);

// State-selectivity condition B_bot^2 >> 16 mu A_hfs / ((g_J-g_I)^2 mu_B^2).
// Ratio of the two sides reported; passes at ratio >= threshold (default 5).
ConditionCheck state_selectivity_check(const SpeciesConstants& s, double b_bot_tesla,
                                       double mu, double threshold = 5.0);

// Rabi oscillation amplitude Omega^2 / (Omega^2 + detuning^2), in [0,1].
double resonance_amplitude(double omega_rabi, double detuning);

} // namespace sgpe::zeeman
