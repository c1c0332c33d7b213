#pragma once

#include <array>
#include <vector>

#include "sgpe/grid.hpp"

// Data-parallel inner kernels of the propagators, plus serial reference
// implementations (suffix _serial) used for testing and benchmarking.
// OpenMP variants use schedule(static) so results are reproducible for a
// fixed thread count.
namespace sgpe::kernels {

// 3x3 real-symmetric eigendecomposition by cyclic Jacobi; deterministic.
// eval ascending is NOT guaranteed; evec columns match eval entries.
void sym3_eigen(const double m[3][3], double eval[3], double evec[3][3]);

// Inputs of the fused local (potential + interaction + rf coupling) substep.
struct LocalStepParams {
  const double* v_trap[3] = {nullptr, nullptr, nullptr}; // J, may be null
  std::array<double, 3> shift{};   // diagonal frame residuals s_m (J)
  double g[3][3] = {};             // mean-field couplings (J m^3)
  double rabi = 0.0;               // rad/s
  cplx phase_minus{1.0, 0.0};      // e^{-i phi(t)}
  double dt = 0.0;                 // substep duration (s)
  double hbar = 0.0;
  bool imaginary_time = false;
  double skip_floor = 0.0;         // total density below which coupling is skipped
};

struct LocalStepStats {
  double max_diag_over_hbar = 0.0; // over points with density >= dens_scale*1e-6
  double max_density = 0.0;
};

LocalStepStats apply_coupled_phase(cplx* psi[3], std::size_t n,
                                   const LocalStepParams& p, double dens_scale);
LocalStepStats apply_coupled_phase_serial(cplx* psi[3], std::size_t n,
                                          const LocalStepParams& p, double dens_scale);

// psi_m *= exp(-W_m dt / hbar); adds the removed norm to absorbed[m].
void apply_decay(cplx* psi[3], const double* w[3], double dt_over_hbar,
                 const Grid& grid, std::array<double, 3>& absorbed);
void apply_decay_serial(cplx* psi[3], const double* w[3], double dt_over_hbar,
                        const Grid& grid, std::array<double, 3>& absorbed);

// Multiply exp(-i hbar kz^2 dt / 2M) on (rho, kz)-layout data.
void apply_kz_phase(cplx* data, const Grid& grid, double dt, double mass,
                    bool imaginary_time = false);
void apply_kz_phase_serial(cplx* data, const Grid& grid, double dt, double mass,
                           bool imaginary_time = false);

// Crank-Nicolson (Cayley) factors of the radial kinetic half-step
// exp(-i T_rho tau / hbar):  (I - eta L) psi' = (I + eta L) psi with
// eta = i tau hbar / (4M) (real time) or tau hbar / (4M) (imaginary time).
struct RadialCayley {
  int n_rho = 0;
  cplx eta{};
  std::vector<cplx> ea, eb, ec;    // eta * (sub, diag, super) of L
  std::vector<cplx> cp, denom;     // Thomas factors of (I - eta L)
  static RadialCayley build(const Grid& grid, double tau, double mass,
                            bool imaginary_time);
};

void cn_radial_apply(cplx* data, cplx* scratch, const Grid& grid, const RadialCayley& c);
void cn_radial_apply_serial(cplx* data, cplx* scratch, const Grid& grid,
                            const RadialCayley& c);

double weighted_norm(const cplx* data, const Grid& grid);
double weighted_norm_serial(const cplx* data, const Grid& grid);

double max_density(const cplx* psi[3], std::size_t n);

} // namespace sgpe::kernels
