// Straightforward single-threaded reference implementations of the grid
// kernels.  Kept deliberately naive (explicit matrices, per-column solves) so
// the optimized OpenMP versions in kernels.cpp can be tested against them.
#include <cmath>
#include <complex>
#include <vector>

#include "sgpe/constants.hpp"
#include "sgpe/kernels.hpp"

namespace sgpe::kernels {

namespace {

// exp(-i H dt/hbar) (or exp(-H dt/hbar)) for the full complex 3x3 ladder,
// built without factoring the coupling phases out first.
void expm_ladder(const double diag[3], cplx coupling, double dt_over_hbar,
                 bool imaginary_time, cplx u[3][3]) {
  // Hermitian H with H01 = coupling, H12 = coupling, H02 = 0.
  // Diagonalize the phase-stripped real matrix and dress the eigenvectors.
  const double cmag = std::abs(coupling);
  cplx ph = cmag > 0.0 ? coupling / cmag : cplx(1.0, 0.0);
  double hr[3][3] = {{diag[0], cmag, 0.0}, {cmag, diag[1], cmag}, {0.0, cmag, diag[2]}};
  double lam[3], q[3][3];
  sym3_eigen(hr, lam, q);
  // complex eigenvectors: v_k = diag(ph, 1, conj(ph)) * q_k
  cplx vec[3][3];
  for (int k = 0; k < 3; ++k) {
    vec[0][k] = ph * q[0][k];
    vec[1][k] = q[1][k];
    vec[2][k] = std::conj(ph) * q[2][k];
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      cplx s = 0.0;
      for (int k = 0; k < 3; ++k) {
        const cplx phase = imaginary_time
                               ? cplx(std::exp(-lam[k] * dt_over_hbar), 0.0)
                               : std::exp(cplx(0.0, -lam[k] * dt_over_hbar));
        s += vec[i][k] * phase * std::conj(vec[j][k]);
      }
      u[i][j] = s;
    }
}

} // namespace

LocalStepStats apply_coupled_phase_serial(cplx* psi[3], std::size_t n,
                                          const LocalStepParams& p, double dens_scale) {
  LocalStepStats st;
  const double dt_over_hbar = p.dt / p.hbar;
  const double stat_floor = 1e-6 * dens_scale;
  for (std::size_t i = 0; i < n; ++i) {
    const double dens[3] = {std::norm(psi[0][i]), std::norm(psi[1][i]),
                            std::norm(psi[2][i])};
    const double ntot = dens[0] + dens[1] + dens[2];
    double diag[3];
    for (int c = 0; c < 3; ++c) {
      diag[c] = (p.v_trap[c] ? p.v_trap[c][i] : 0.0) + p.shift[c];
      for (int cp = 0; cp < 3; ++cp) diag[c] += p.g[c][cp] * dens[cp];
    }
    if (ntot >= stat_floor) {
      for (int c = 0; c < 3; ++c)
        st.max_diag_over_hbar = std::max(st.max_diag_over_hbar, std::abs(diag[c]) / p.hbar);
      st.max_density = std::max(st.max_density, ntot);
    }
    cplx u[3][3];
    expm_ladder(diag, 0.5 * p.hbar * p.rabi * p.phase_minus, dt_over_hbar,
                p.imaginary_time, u);
    const cplx in[3] = {psi[0][i], psi[1][i], psi[2][i]};
    for (int c = 0; c < 3; ++c)
      psi[c][i] = u[c][0] * in[0] + u[c][1] * in[1] + u[c][2] * in[2];
  }
  return st;
}

void apply_decay_serial(cplx* psi[3], const double* w[3], double dt_over_hbar,
                        const Grid& grid, std::array<double, 3>& absorbed) {
  for (int c = 0; c < 3; ++c) {
    if (!w[c] || !psi[c]) continue;
    for (std::size_t i = 0; i < grid.total(); ++i) {
      const double factor = std::exp(-w[c][i] * dt_over_hbar);
      const double before = std::norm(psi[c][i]);
      psi[c][i] *= factor;
      absorbed[c] += (before - std::norm(psi[c][i])) * grid.weight(i);
    }
  }
}

void apply_kz_phase_serial(cplx* data, const Grid& grid, double dt, double mass,
                           bool imaginary_time) {
  const double coeff = consts::hbar * dt / (2.0 * mass);
  for (int j = 0; j < grid.n_rho(); ++j)
    for (int i = 0; i < grid.n_z(); ++i) {
      const double arg = coeff * grid.kz(i) * grid.kz(i);
      const cplx f = imaginary_time ? cplx(std::exp(-arg), 0.0)
                                    : std::exp(cplx(0.0, -arg));
      data[grid.index_rz(j, i)] *= f;
    }
}

void cn_radial_apply_serial(cplx* data, cplx* scratch, const Grid& grid,
                            const RadialCayley& c) {
  (void)scratch;
  const int nr = grid.n_rho();
  const int nz = grid.n_z();
  std::vector<cplx> rhs(nr), x(nr), cp(nr), dp(nr);
  for (int i = 0; i < nz; ++i) {
    for (int j = 0; j < nr; ++j) {
      cplx r = (cplx(1.0, 0.0) + c.eb[j]) * data[grid.index_rz(j, i)];
      if (j > 0) r += c.ea[j] * data[grid.index_rz(j - 1, i)];
      if (j + 1 < nr) r += c.ec[j] * data[grid.index_rz(j + 1, i)];
      rhs[j] = r;
    }
    // per-column Thomas solve of (I - eta L) x = rhs
    for (int j = 0; j < nr; ++j) {
      const cplx sub = -c.ea[j];
      const cplx diag = cplx(1.0, 0.0) - c.eb[j];
      const cplx sup = -c.ec[j];
      const cplx den = diag - (j > 0 ? sub * cp[j - 1] : cplx(0.0, 0.0));
      cp[j] = sup / den;
      dp[j] = (rhs[j] - (j > 0 ? sub * dp[j - 1] : cplx(0.0, 0.0))) / den;
    }
    for (int j = nr - 1; j >= 0; --j)
      x[j] = dp[j] - (j + 1 < nr ? cp[j] * x[j + 1] : cplx(0.0, 0.0));
    for (int j = 0; j < nr; ++j) data[grid.index_rz(j, i)] = x[j];
  }
}

double weighted_norm_serial(const cplx* data, const Grid& grid) {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.total(); ++i) s += std::norm(data[i]) * grid.weight(i);
  return s;
}

} // namespace sgpe::kernels
