#pragma once

#include <array>
#include <string>

namespace sgpe {

inline constexpr int kComponents = 3;

// Component index c in {0,1,2} maps to the hyperfine sublevel m_F = c-1.
inline constexpr int mf_of(int component) { return component - 1; }
inline constexpr int component_of_mf(int m_f) { return m_f + 1; }

// Atomic and physical constants parameterizing all of the physics.  The
// default preset is the F=1 ground-state manifold of 87Rb; any other J=1/2,
// I=3/2 species can be loaded from a declarative text file.
struct SpeciesConstants {
  std::string name = "unnamed";
  double mass = 0.0;   // kg
  double a_hfs = 0.0;  // J, zero-field hyperfine constant
  double g_i = 0.0;    // nuclear g-factor (signed, Steck convention)
  double g_j = 0.0;    // fine-structure g-factor
  double g_f = 0.0;    // hyperfine Lande factor (g_f < 0 for F=1 of 87Rb)
  double mu_b;         // J/T
  double hbar;         // J s
  double k_b;          // J/K
  // s-wave scattering lengths a_{m,m'} (m), symmetric, indexed by component.
  std::array<std::array<double, 3>, 3> scattering_length{};

  SpeciesConstants();

  // Mean-field coupling constant g_{m,m'} = 4 pi hbar^2 a_{m,m'} / M.
  double coupling(int c, int cp) const;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  static SpeciesConstants rubidium87();
  static SpeciesConstants load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

} // namespace sgpe
