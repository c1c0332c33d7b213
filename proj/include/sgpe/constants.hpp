#pragma once

// Physical constants, CODATA 2018.  All SI.
namespace sgpe::consts {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

inline constexpr double planck = 6.62607015e-34;         // J s (exact)
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double mu_bohr = 9.2740100783e-24;      // J/T
inline constexpr double k_boltzmann = 1.380649e-23;      // J/K (exact)
inline constexpr double bohr_radius = 5.29177210903e-11; // m
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg

} // namespace sgpe::consts
