#pragma once

#include "sgpe/grid.hpp"
#include "sgpe/schedule.hpp"
#include "sgpe/species.hpp"

namespace sgpe {

struct GroundStateOptions {
  double tol = 1e-10;        // relative energy change per step at the final stage
  int max_iterations = 400000;
  double initial_tau = 0.0;  // s; 0 selects 0.02 / max(omega_max, mu_TF/hbar)
  int check_every = 10;
};

enum class GroundStateStatus { Converged, IterationLimit, Diverged };

struct GroundStateResult {
  ComplexField psi;  // normalized to N atoms; real-positive up to global phase
  double mu = 0.0;   // J
  double energy = 0.0;
  double e_kinetic = 0.0, e_potential = 0.0, e_interaction = 0.0;
  double residual = 0.0;  // J, ||(H - mu) psi|| / sqrt(N)
  int iterations = 0;
  GroundStateStatus status = GroundStateStatus::Converged;
};

struct ConvergenceError : std::runtime_error {
  GroundStateResult best;
  explicit ConvergenceError(GroundStateResult r)
      : std::runtime_error("ground state: tolerance unreachable"), best(std::move(r)) {}
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Normalized-after-each-step imaginary-time propagation of the trapped
// component in the t = 0 potential of the schedule.
GroundStateResult solve_ground_state(const SpeciesConstants& species,
                                     const FieldSchedule& schedule, double n_atoms,
                                     const Grid& grid, const GroundStateOptions& opts = {},
                                     int m_f = -1);

// Closed-form Thomas-Fermi chemical potential; the oracle and initial-guess
// scale.  Sets *warn_weak when 15 N a / a_ho < 10.
double thomas_fermi_mu(const SpeciesConstants& species, const HarmonicTrapSpec& trap,
                       double n_atoms, bool* warn_weak = nullptr);

} // namespace sgpe
