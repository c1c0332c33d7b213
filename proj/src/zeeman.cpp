#include "sgpe/zeeman.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgpe::zeeman {

double dimensionless_b(const SpeciesConstants& s, double field_tesla) {
  if (field_tesla < 0.0) throw std::domain_error("zeeman: field magnitude must be >= 0");
  return (s.g_j - s.g_i) * s.mu_b * field_tesla / (2.0 * s.a_hfs);
}

double field_at_unit_b(const SpeciesConstants& s) {
  return 2.0 * s.a_hfs / ((s.g_j - s.g_i) * s.mu_b);
}

double breit_rabi_potential(const SpeciesConstants& s, int m_f, double field_tesla) {
  const double b = dimensionless_b(s, field_tesla);
  const double arg = 1.0 + m_f * b + b * b;
  return -0.25 * s.a_hfs - m_f * s.g_i * s.mu_b * field_tesla - s.a_hfs * std::sqrt(arg);
}

TransitionFrequencies transition_frequencies(const SpeciesConstants& s, double field_tesla) {
  const double b = dimensionless_b(s, field_tesla);
  const double r0 = std::sqrt(1.0 + b * b);
  const double rm = std::sqrt(1.0 - b + b * b);
  const double rp = std::sqrt(1.0 + b + b * b);
  // V(-1)-V(0) = g_I mu_B B + A (r0 - rm); the sqrt difference is rewritten as
  // b/(r0+rm) to avoid the catastrophic cancellation of nearly equal roots.
  const double gterm = s.g_i * s.mu_b * field_tesla;
  TransitionFrequencies w;
  w.minus_to_zero = (gterm + s.a_hfs * b / (r0 + rm)) / s.hbar;
  w.zero_to_plus = (gterm + s.a_hfs * b / (r0 + rp)) / s.hbar;
  return w;
}

double rf_offset_frequency(const SpeciesConstants& s, double field_tesla) {
  return transition_frequencies(s, field_tesla).minus_to_zero;
}

double breit_rabi_asymmetry(const SpeciesConstants& s, double field_tesla) {
  const double b = dimensionless_b(s, field_tesla);
  const double r0 = std::sqrt(1.0 + b * b);
  const double rm = std::sqrt(1.0 - b + b * b);
  const double rp = std::sqrt(1.0 + b + b * b);
  // A [2 r0 - rm - rp] = A * 2 b^2 / ((rm+rp)(r0+rm)(r0+rp)), exact identity.
  return s.a_hfs * 2.0 * b * b / ((rm + rp) * (r0 + rm) * (r0 + rp));
}

double anti_trap_ratio(const SpeciesConstants& s, double b_bot_tesla, bool* warn_large_b) {
  const double b = dimensionless_b(s, b_bot_tesla);
  if (warn_large_b) *warn_large_b = (b * b > 1e-2);
  const double d = s.g_j - s.g_i;
  return d * d * s.mu_b * b_bot_tesla / (4.0 * std::abs(s.g_f) * s.a_hfs);
}

ConditionCheck sharp_resonance_check(const SpeciesConstants& s, double mu,
                                     double omega_rabi, double threshold) {
  if (mu < 0.0 || omega_rabi < 0.0)
    throw std::domain_error("zeeman: sharp_resonance_check requires mu, Omega >= 0");
  ConditionCheck c;
  c.lhs = mu * mu;
  c.rhs = (s.hbar * omega_rabi) * (s.hbar * omega_rabi);
  c.ratio = (omega_rabi == 0.0) ? std::numeric_limits<double>::infinity() : c.lhs / c.rhs;
  c.pass = c.ratio >= threshold;
  return c;
}

ConditionCheck state_selectivity_check(const SpeciesConstants& s, double b_bot_tesla,
                                       double mu, double threshold) {
  if (b_bot_tesla < 0.0 || mu <= 0.0)
    throw std::domain_error("zeeman: state_selectivity_check requires B >= 0, mu > 0");
  ConditionCheck c;
  const double d = s.g_j - s.g_i;
  c.lhs = b_bot_tesla * b_bot_tesla;
  c.rhs = 16.0 * mu * s.a_hfs / (d * d * s.mu_b * s.mu_b);
  c.ratio = c.lhs / c.rhs;
  c.pass = c.ratio >= threshold;
  return c;
}

double resonance_amplitude(double omega_rabi, double detuning) {
  if (omega_rabi < 0.0) throw std::domain_error("zeeman: Omega must be >= 0");
  if (omega_rabi == 0.0) return 0.0;
  const double o2 = omega_rabi * omega_rabi;
  return o2 / (o2 + detuning * detuning);
}

} // namespace sgpe::zeeman
