#include "sgpe/kernels.hpp"

#include <cmath>
#include <cstring>

#include "sgpe/constants.hpp"

namespace sgpe::kernels {

void sym3_eigen(const double m[3][3], double eval[3], double evec[3][3]) {
  double a[3][3];
  std::memcpy(a, m, sizeof(a));
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int sweep = 0; sweep < 16; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double dia = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
    if (off <= 1e-30 * (dia + 1e-300)) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < 3; ++i) eval[i] = a[i][i];
  std::memcpy(evec, v, sizeof(double) * 9);
}

namespace {

// One grid point of the fused local substep.  The coupling phases factor out
// of the ladder: H = P H_r P^dag with P = diag(e^{-i phi}, 1, e^{+i phi}),
// leaving a real-symmetric H_r to exponentiate.
inline void local_point(cplx& p0, cplx& p1, cplx& p2, const double diag[3],
                        double coup, const cplx& phm, double dt_over_hbar,
                        bool imaginary_time) {
  double h[3][3] = {{diag[0], coup, 0.0}, {coup, diag[1], coup}, {0.0, coup, diag[2]}};
  double lam[3], q[3][3];
  sym3_eigen(h, lam, q);
  const cplx php = std::conj(phm);
  cplx y0 = php * p0, y1 = p1, y2 = phm * p2;
  cplx c0 = q[0][0] * y0 + q[1][0] * y1 + q[2][0] * y2;
  cplx c1 = q[0][1] * y0 + q[1][1] * y1 + q[2][1] * y2;
  cplx c2 = q[0][2] * y0 + q[1][2] * y1 + q[2][2] * y2;
  if (imaginary_time) {
    c0 *= std::exp(-lam[0] * dt_over_hbar);
    c1 *= std::exp(-lam[1] * dt_over_hbar);
    c2 *= std::exp(-lam[2] * dt_over_hbar);
  } else {
    c0 *= std::exp(cplx(0.0, -lam[0] * dt_over_hbar));
    c1 *= std::exp(cplx(0.0, -lam[1] * dt_over_hbar));
    c2 *= std::exp(cplx(0.0, -lam[2] * dt_over_hbar));
  }
  y0 = q[0][0] * c0 + q[0][1] * c1 + q[0][2] * c2;
  y1 = q[1][0] * c0 + q[1][1] * c1 + q[1][2] * c2;
  y2 = q[2][0] * c0 + q[2][1] * c1 + q[2][2] * c2;
  p0 = phm * y0;
  p1 = y1;
  p2 = php * y2;
}

inline void diag_point(cplx& p0, cplx& p1, cplx& p2, const double diag[3],
                       double dt_over_hbar, bool imaginary_time) {
  if (imaginary_time) {
    p0 *= std::exp(-diag[0] * dt_over_hbar);
    p1 *= std::exp(-diag[1] * dt_over_hbar);
    p2 *= std::exp(-diag[2] * dt_over_hbar);
  } else {
    p0 *= std::exp(cplx(0.0, -diag[0] * dt_over_hbar));
    p1 *= std::exp(cplx(0.0, -diag[1] * dt_over_hbar));
    p2 *= std::exp(cplx(0.0, -diag[2] * dt_over_hbar));
  }
}

template <bool Parallel>
LocalStepStats coupled_phase_impl(cplx* psi[3], std::size_t n, const LocalStepParams& p,
                                  double dens_scale) {
  const double dt_over_hbar = p.dt / p.hbar;
  const double coup = 0.5 * p.hbar * p.rabi;
  const double stat_floor = 1e-6 * dens_scale;
  double max_diag = 0.0, max_dens = 0.0;
  cplx* f0 = psi[0];
  cplx* f1 = psi[1];
  cplx* f2 = psi[2];
  const std::int64_t nn = std::int64_t(n);
#pragma omp parallel for schedule(static) reduction(max : max_diag, max_dens) if (Parallel)
  for (std::int64_t ii = 0; ii < nn; ++ii) {
    const std::size_t i = std::size_t(ii);
    const double n0 = std::norm(f0[i]);
    const double n1 = std::norm(f1[i]);
    const double n2 = std::norm(f2[i]);
    const double ntot = n0 + n1 + n2;
    double diag[3];
    for (int c = 0; c < 3; ++c) {
      diag[c] = (p.v_trap[c] ? p.v_trap[c][i] : 0.0) + p.shift[c] +
                p.g[c][0] * n0 + p.g[c][1] * n1 + p.g[c][2] * n2;
    }
    if (ntot >= stat_floor) {
      const double d =
          std::max(std::abs(diag[0]), std::max(std::abs(diag[1]), std::abs(diag[2])));
      max_diag = std::max(max_diag, d / p.hbar);
      max_dens = std::max(max_dens, ntot);
    }
    if (coup != 0.0 && ntot >= p.skip_floor)
      local_point(f0[i], f1[i], f2[i], diag, coup, p.phase_minus, dt_over_hbar,
                  p.imaginary_time);
    else
      diag_point(f0[i], f1[i], f2[i], diag, dt_over_hbar, p.imaginary_time);
  }
  return {max_diag, max_dens};
}

template <bool Parallel>
void decay_impl(cplx* psi[3], const double* w[3], double dt_over_hbar, const Grid& grid,
                std::array<double, 3>& absorbed) {
  const std::int64_t n = std::int64_t(grid.total());
  for (int c = 0; c < 3; ++c) {
    if (!w[c] || !psi[c]) continue;
    cplx* f = psi[c];
    const double* wc = w[c];
    double removed = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : removed) if (Parallel)
    for (std::int64_t ii = 0; ii < n; ++ii) {
      const std::size_t i = std::size_t(ii);
      if (wc[i] == 0.0) continue;
      const double factor = std::exp(-wc[i] * dt_over_hbar);
      const double before = std::norm(f[i]);
      f[i] *= factor;
      removed += (before - std::norm(f[i])) * grid.weight(i);
    }
    absorbed[c] += removed;
  }
}

template <bool Parallel>
void kz_phase_impl(cplx* data, const Grid& grid, double dt, double mass,
                   bool imaginary_time) {
  const int nr = grid.n_rho();
  const int nz = grid.n_z();
  const double coeff = consts::hbar * dt / (2.0 * mass);
  std::vector<cplx> table(nz);
  for (int i = 0; i < nz; ++i) {
    const double arg = coeff * grid.kz(i) * grid.kz(i);
    table[i] = imaginary_time ? cplx(std::exp(-arg), 0.0) : std::exp(cplx(0.0, -arg));
  }
#pragma omp parallel for schedule(static) if (Parallel)
  for (int j = 0; j < nr; ++j) {
    cplx* row = data + std::size_t(j) * nz;
    for (int i = 0; i < nz; ++i) row[i] *= table[i];
  }
}

} // namespace

LocalStepStats apply_coupled_phase(cplx* psi[3], std::size_t n, const LocalStepParams& p,
                                   double dens_scale) {
  return coupled_phase_impl<true>(psi, n, p, dens_scale);
}

void apply_decay(cplx* psi[3], const double* w[3], double dt_over_hbar, const Grid& grid,
                 std::array<double, 3>& absorbed) {
  decay_impl<true>(psi, w, dt_over_hbar, grid, absorbed);
}

void apply_kz_phase(cplx* data, const Grid& grid, double dt, double mass,
                    bool imaginary_time) {
  kz_phase_impl<true>(data, grid, dt, mass, imaginary_time);
}

RadialCayley RadialCayley::build(const Grid& grid, double tau, double mass,
                                 bool imaginary_time) {
  RadialCayley c;
  const int nr = grid.n_rho();
  c.n_rho = nr;
  const double eta0 = tau * consts::hbar / (4.0 * mass);
  c.eta = imaginary_time ? cplx(eta0, 0.0) : cplx(0.0, eta0);
  c.ea.resize(nr);
  c.eb.resize(nr);
  c.ec.resize(nr);
  c.cp.resize(nr);
  c.denom.resize(nr);
  const double inv_dr2 = 1.0 / (grid.dr() * grid.dr());
  for (int j = 0; j < nr; ++j) {
    const double sub = j * inv_dr2 / (j + 0.5);
    const double sup = (j + 1.0) * inv_dr2 / (j + 0.5);
    c.ea[j] = c.eta * sub;
    c.ec[j] = c.eta * sup;
    c.eb[j] = -(c.ea[j] + c.ec[j]);
  }
  cplx prev_cp = 0.0;
  for (int j = 0; j < nr; ++j) {
    const cplx diag = cplx(1.0, 0.0) - c.eb[j];
    const cplx den = diag - (-c.ea[j]) * prev_cp;
    c.denom[j] = cplx(1.0, 0.0) / den;
    c.cp[j] = (-c.ec[j]) * c.denom[j];
    prev_cp = c.cp[j];
  }
  return c;
}

namespace {

// The tridiagonal is identical for every z column, so the Thomas sweeps run
// j-major with contiguous z inner loops.
template <bool Parallel>
void cn_radial_impl(cplx* data, cplx* scratch, const Grid& grid, const RadialCayley& c) {
  const int nr = grid.n_rho();
  const int nz = grid.n_z();
  // rhs = (I + eta L) psi into scratch
#pragma omp parallel for schedule(static) if (Parallel)
  for (int j = 0; j < nr; ++j) {
    const cplx* cur = data + std::size_t(j) * nz;
    const cplx* below = j > 0 ? data + std::size_t(j - 1) * nz : nullptr;
    const cplx* above = j + 1 < nr ? data + std::size_t(j + 1) * nz : nullptr;
    cplx* out = scratch + std::size_t(j) * nz;
    const cplx one_eb = cplx(1.0, 0.0) + c.eb[j];
    for (int i = 0; i < nz; ++i) {
      cplx r = one_eb * cur[i];
      if (below) r += c.ea[j] * below[i];
      if (above) r += c.ec[j] * above[i];
      out[i] = r;
    }
  }
  // Thomas forward elimination (sequential in j, vectorized in i).
  for (int j = 0; j < nr; ++j) {
    cplx* cur = scratch + std::size_t(j) * nz;
    const cplx* prev = j > 0 ? scratch + std::size_t(j - 1) * nz : nullptr;
    const cplx sub = -c.ea[j];
    const cplx den = c.denom[j];
#pragma omp parallel for schedule(static) if (Parallel)
    for (int i = 0; i < nz; ++i) {
      cplx r = cur[i];
      if (prev) r -= sub * prev[i];
      cur[i] = r * den;
    }
  }
  // Back substitution into data.
  for (int j = nr - 1; j >= 0; --j) {
    const cplx* rhs = scratch + std::size_t(j) * nz;
    cplx* out = data + std::size_t(j) * nz;
    const cplx* upper = j + 1 < nr ? data + std::size_t(j + 1) * nz : nullptr;
    const cplx cp = c.cp[j];
#pragma omp parallel for schedule(static) if (Parallel)
    for (int i = 0; i < nz; ++i) {
      cplx x = rhs[i];
      if (upper) x -= cp * upper[i];
      out[i] = x;
    }
  }
}

template <bool Parallel>
double norm_impl(const cplx* data, const Grid& grid) {
  double s = 0.0;
  const std::int64_t n = std::int64_t(grid.total());
#pragma omp parallel for schedule(static) reduction(+ : s) if (Parallel)
  for (std::int64_t i = 0; i < n; ++i)
    s += std::norm(data[std::size_t(i)]) * grid.weight(std::size_t(i));
  return s;
}

} // namespace

void cn_radial_apply(cplx* data, cplx* scratch, const Grid& grid, const RadialCayley& c) {
  cn_radial_impl<true>(data, scratch, grid, c);
}

double weighted_norm(const cplx* data, const Grid& grid) { return norm_impl<true>(data, grid); }

double max_density(const cplx* psi[3], std::size_t n) {
  double m = 0.0;
  const std::int64_t nn = std::int64_t(n);
#pragma omp parallel for schedule(static) reduction(max : m)
  for (std::int64_t i = 0; i < nn; ++i) {
    const std::size_t ii = std::size_t(i);
    const double d = std::norm(psi[0][ii]) + std::norm(psi[1][ii]) + std::norm(psi[2][ii]);
    m = std::max(m, d);
  }
  return m;
}

} // namespace sgpe::kernels
