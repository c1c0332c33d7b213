#include "sgpe/grid.hpp"

#include <fftw3.h>
#include <lapacke.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include "sgpe/constants.hpp"
#include "sgpe/schedule.hpp"

namespace sgpe {

namespace {

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

} // namespace

GridSpec GridSpec::cyl(double r_max, int n_rho, double z_half, int n_z, std::string name) {
  GridSpec g;
  g.kind = GridKind::CylRZ;
  g.r_max = r_max;
  g.n_rho = n_rho;
  g.z_half = z_half;
  g.n_z = n_z;
  g.name = std::move(name);
  g.validate();
  return g;
}

GridSpec GridSpec::cart(std::array<double, 3> half, std::array<int, 3> n, std::string name) {
  GridSpec g;
  g.kind = GridKind::Cart3D;
  g.half = half;
  g.n = n;
  g.name = std::move(name);
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (kind == GridKind::CylRZ) {
    if (!(r_max > 0.0) || !(z_half > 0.0))
      throw std::invalid_argument("grid: extents must be positive");
    if (!power_of_two(n_rho) || !power_of_two(n_z))
      throw std::invalid_argument("grid: point counts must be powers of two");
  } else {
    for (int d = 0; d < 3; ++d) {
      if (!(half[d] > 0.0)) throw std::invalid_argument("grid: extents must be positive");
      if (!power_of_two(n[d])) throw std::invalid_argument("grid: point counts must be powers of two");
    }
  }
}

Grid::Grid(const GridSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.kind == GridKind::CylRZ) {
    const int nr = spec_.n_rho, nz = spec_.n_z;
    total_ = std::size_t(nr) * nz;
    dr_ = spec_.r_max / nr;
    dz_ = 2.0 * spec_.z_half / nz;
    rho_.resize(nr);
    rho_weight_.resize(nr);
    for (int j = 0; j < nr; ++j) {
      rho_[j] = (j + 0.5) * dr_;
      rho_weight_[j] = consts::two_pi * rho_[j] * dr_ * dz_;
    }
    z_.resize(nz);
    kz_.resize(nz);
    const double dk = consts::two_pi / (2.0 * spec_.z_half);
    for (int i = 0; i < nz; ++i) {
      z_[i] = -spec_.z_half + i * dz_;
      kz_[i] = dk * (i <= nz / 2 ? i : i - nz);
    }
  } else {
    total_ = 1;
    cart_w_ = 1.0;
    for (int d = 0; d < 3; ++d) {
      const int nd = spec_.n[d];
      total_ *= std::size_t(nd);
      cart_d_[d] = 2.0 * spec_.half[d] / nd;
      cart_w_ *= cart_d_[d];
      cart_axis_[d].resize(nd);
      cart_k_[d].resize(nd);
      const double dk = consts::two_pi / (2.0 * spec_.half[d]);
      for (int i = 0; i < nd; ++i) {
        cart_axis_[d][i] = -spec_.half[d] + i * cart_d_[d];
        cart_k_[d][i] = dk * (i <= nd / 2 ? i : i - nd);
      }
    }
  }
}

std::array<double, 3> Grid::position(std::size_t idx) const {
  if (spec_.kind == GridKind::CylRZ) {
    const int i = int(idx % spec_.n_z);
    const int j = int(idx / spec_.n_z);
    return {rho_[j], 0.0, z_[i]};
  }
  const int iz = int(idx % spec_.n[2]);
  const std::size_t rest = idx / spec_.n[2];
  const int iy = int(rest % spec_.n[1]);
  const int ix = int(rest / spec_.n[1]);
  return {cart_axis_[0][ix], cart_axis_[1][iy], cart_axis_[2][iz]};
}

double Grid::nyquist_velocity(int axis_dim, double mass) const {
  double dx;
  if (spec_.kind == GridKind::CylRZ)
    dx = axis_dim == 2 ? dz_ : dr_;
  else
    dx = cart_d_[axis_dim];
  return consts::hbar * consts::pi / (mass * dx);
}

double field_norm(const ComplexField& f) {
  const Grid& g = *f.grid;
  double s = 0.0;
  const std::int64_t n = std::int64_t(g.total());
#pragma omp parallel for schedule(static) reduction(+ : s)
  for (std::int64_t i = 0; i < n; ++i) s += std::norm(f.v[std::size_t(i)]) * g.weight(std::size_t(i));
  return s;
}

double integrate(const ScalarField& f) {
  const Grid& g = *f.grid;
  double s = 0.0;
  const std::int64_t n = std::int64_t(g.total());
#pragma omp parallel for schedule(static) reduction(+ : s)
  for (std::int64_t i = 0; i < n; ++i) s += f.v[std::size_t(i)] * g.weight(std::size_t(i));
  return s;
}

ScalarField absorber_potential(const AbsorbingLayer& layer, const Grid& grid) {
  for (int d = 0; d < 3; ++d)
    if (layer.onset_abs[d] < 0.0 &&
        !(layer.onset_frac[d] > 0.0 && layer.onset_frac[d] < 0.5))
      throw std::invalid_argument("absorber: onset fraction must lie in (0, 0.5)");
  ScalarField w(grid);
  const bool cyl = grid.kind() == GridKind::CylRZ;
  std::array<double, 3> extent{}, onset{}, ramp{};
  if (cyl) {
    extent = {grid.spec().r_max, 0.0, grid.spec().z_half};
  } else {
    extent = grid.spec().half;
  }
  for (int d = 0; d < 3; ++d) {
    if (extent[d] <= 0.0) continue;
    onset[d] = layer.onset_abs[d] >= 0.0 ? layer.onset_abs[d]
                                         : (1.0 - layer.onset_frac[d]) * extent[d];
    ramp[d] = layer.ramp_len > 0.0 ? layer.ramp_len : extent[d] - onset[d];
  }
  const std::int64_t n = std::int64_t(grid.total());
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto x = grid.position(std::size_t(ii));
    double q = 0.0;
    for (int d = 0; d < 3; ++d) {
      if (extent[d] <= 0.0) continue;
      const double dist = std::abs(x[d]);
      if (dist <= onset[d]) continue;
      q = std::max(q, std::min(1.0, (dist - onset[d]) / ramp[d]));
    }
    w.v[std::size_t(ii)] = layer.peak * std::pow(q, layer.exponent);
  }
  return w;
}

GridSpec reduce_cylindrical(const GridSpec& cart3d, const FieldSchedule& schedule) {
  if (cart3d.kind != GridKind::Cart3D)
    throw std::invalid_argument("reduce_cylindrical: expected a Cart3D spec");
  if (!schedule.axially_symmetric())
    throw std::invalid_argument("reduce_cylindrical: schedule is not axially symmetric");
  const double r = std::min(cart3d.half[0], cart3d.half[1]);
  const int nr = std::max(cart3d.n[0], cart3d.n[1]) / 2;
  return GridSpec::cyl(r, nr, cart3d.half[2], cart3d.n[2],
                       cart3d.name.empty() ? "" : cart3d.name + "-rz");
}

// ---------------------------------------------------------------------------
// SpectralWorkspace

struct SpectralWorkspace::Impl {
  fftw_plan fwd_z = nullptr, bwd_z = nullptr;
  fftw_plan fwd_3d = nullptr, bwd_3d = nullptr;
  std::vector<double> eigval;      // of the symmetrized -L, ascending (1/m^2)
  std::vector<double> eigvec;      // column-major [n_rho x n_rho]
  std::vector<double> sqrt_w;      // sqrt(2 pi rho_j dr)
  std::vector<double> mom_weight;  // per-point momentum-space measure
  mutable std::vector<cplx> scratch;
  int threads = 1;
};

SpectralWorkspace::SpectralWorkspace(const Grid& grid, int threads)
    : grid_(grid), impl_(new Impl) {
  impl_->threads = threads;
  std::lock_guard<std::mutex> lock(fftw_plan_mutex());
#ifdef SGPE_FFTW_OMP
  static bool fftw_threads_ready = [] {
    fftw_init_threads();
    return true;
  }();
  (void)fftw_threads_ready;
  fftw_plan_with_nthreads(threads > 0 ? threads : 1);
#endif
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::vector<cplx> probe(grid.total());
  auto* p = reinterpret_cast<fftw_complex*>(probe.data());
  if (grid.kind() == GridKind::CylRZ) {
    const int nz = grid.n_z();
    const int nr = grid.n_rho();
    int n[] = {nz};
    impl_->fwd_z = fftw_plan_many_dft(1, n, nr, p, nullptr, 1, nz, p, nullptr, 1, nz,
                                      FFTW_FORWARD, flags);
    impl_->bwd_z = fftw_plan_many_dft(1, n, nr, p, nullptr, 1, nz, p, nullptr, 1, nz,
                                      FFTW_BACKWARD, flags);

    // Radial eigenbasis: conservative 3-point form of (1/rho) d/drho (rho d/drho)
    // on the cell-centered lattice, symmetrized by sqrt(rho_j).
    std::vector<double> diag(nr), off(nr - 1);
    const double inv_dr2 = 1.0 / (grid.dr() * grid.dr());
    for (int j = 0; j < nr; ++j) diag[j] = 2.0 * inv_dr2;
    for (int j = 0; j + 1 < nr; ++j)
      off[j] = -(j + 1.0) * inv_dr2 / std::sqrt((j + 0.5) * (j + 1.5));
    impl_->eigval = diag;
    impl_->eigvec.assign(std::size_t(nr) * nr, 0.0);
    const int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', nr, impl_->eigval.data(),
                                   off.data(), impl_->eigvec.data(), nr);
    if (info != 0) throw std::runtime_error("grid: radial eigenbasis failed (dstev)");
    for (auto& v : impl_->eigval)
      if (v < 0.0 && v > -1e-9 * inv_dr2) v = 0.0;
    impl_->sqrt_w.resize(nr);
    for (int j = 0; j < nr; ++j)
      impl_->sqrt_w[j] = std::sqrt(consts::two_pi * grid.rho(j) * grid.dr());
    const double dkz = consts::two_pi / (2.0 * grid.spec().z_half);
    impl_->mom_weight.assign(1, dkz);
  } else {
    const auto& n = grid.spec().n;
    impl_->fwd_3d = fftw_plan_dft_3d(n[0], n[1], n[2], p, p, FFTW_FORWARD, flags);
    impl_->bwd_3d = fftw_plan_dft_3d(n[0], n[1], n[2], p, p, FFTW_BACKWARD, flags);
    double wk = 1.0;
    for (int d = 0; d < 3; ++d) wk *= consts::two_pi / (2.0 * grid.spec().half[d]);
    impl_->mom_weight.assign(1, wk);
  }
}

SpectralWorkspace::~SpectralWorkspace() {
  std::lock_guard<std::mutex> lock(fftw_plan_mutex());
  if (impl_->fwd_z) fftw_destroy_plan(impl_->fwd_z);
  if (impl_->bwd_z) fftw_destroy_plan(impl_->bwd_z);
  if (impl_->fwd_3d) fftw_destroy_plan(impl_->fwd_3d);
  if (impl_->bwd_3d) fftw_destroy_plan(impl_->bwd_3d);
}

void SpectralWorkspace::forward_z(cplx* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(impl_->fwd_z, p, p);
}

void SpectralWorkspace::inverse_z(cplx* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(impl_->bwd_z, p, p);
  const double s = 1.0 / grid_.n_z();
  const std::int64_t n = std::int64_t(grid_.total());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) data[std::size_t(i)] *= s;
}

void SpectralWorkspace::forward_3d(cplx* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(impl_->fwd_3d, p, p);
}

void SpectralWorkspace::inverse_3d(cplx* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(impl_->bwd_3d, p, p);
  const double s = 1.0 / double(grid_.total());
  const std::int64_t n = std::int64_t(grid_.total());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) data[std::size_t(i)] *= s;
}

const std::vector<double>& SpectralWorkspace::radial_eigenvalues() const {
  return impl_->eigval;
}

void SpectralWorkspace::radial_to_modes(const cplx* in, cplx* out) const {
  const int nr = grid_.n_rho();
  const int nz = grid_.n_z();
  const double* q = impl_->eigvec.data();
  const double* sw = impl_->sqrt_w.data();
#pragma omp parallel for schedule(static)
  for (int m = 0; m < nr; ++m) {
    cplx* row = out + std::size_t(m) * nz;
    std::memset(reinterpret_cast<void*>(row), 0, sizeof(cplx) * nz);
    const double* qm = q + std::size_t(m) * nr;  // column m, contiguous in j
    for (int j = 0; j < nr; ++j) {
      const double c = qm[j] * sw[j];
      const cplx* src = in + std::size_t(j) * nz;
      for (int i = 0; i < nz; ++i) row[i] += c * src[i];
    }
  }
}

void SpectralWorkspace::radial_from_modes(const cplx* in, cplx* out) const {
  const int nr = grid_.n_rho();
  const int nz = grid_.n_z();
  const double* q = impl_->eigvec.data();
  const double* sw = impl_->sqrt_w.data();
#pragma omp parallel for schedule(static)
  for (int j = 0; j < nr; ++j) {
    cplx* row = out + std::size_t(j) * nz;
    std::memset(reinterpret_cast<void*>(row), 0, sizeof(cplx) * nz);
    const double inv = 1.0 / sw[j];
    for (int m = 0; m < nr; ++m) {
      const double c = q[std::size_t(m) * nr + j] * inv;
      const cplx* src = in + std::size_t(m) * nz;
      for (int i = 0; i < nz; ++i) row[i] += c * src[i];
    }
  }
}

ComplexField SpectralWorkspace::to_momentum(const ComplexField& f) const {
  ComplexField out(grid_);
  if (grid_.kind() == GridKind::CylRZ) {
    std::vector<cplx> tmp(f.v);
    forward_z(tmp.data());
    const double zscale = grid_.dz() / std::sqrt(consts::two_pi);
    for (auto& v : tmp) v *= zscale;
    radial_to_modes(tmp.data(), out.v.data());
  } else {
    out.v = f.v;
    forward_3d(out.v.data());
    double scale = grid_.uniform_weight() / std::pow(consts::two_pi, 1.5);
    for (auto& v : out.v) v *= scale;
  }
  return out;
}

ComplexField SpectralWorkspace::from_momentum(const ComplexField& f) const {
  ComplexField out(grid_);
  if (grid_.kind() == GridKind::CylRZ) {
    radial_from_modes(f.v.data(), out.v.data());
    const double zscale = std::sqrt(consts::two_pi) / (grid_.dz() * grid_.n_z());
    auto* p = reinterpret_cast<fftw_complex*>(out.v.data());
    fftw_execute_dft(impl_->bwd_z, p, p);
    for (auto& v : out.v) v *= zscale;
  } else {
    out.v = f.v;
    const double scale =
        std::pow(consts::two_pi, 1.5) / (grid_.uniform_weight() * grid_.total());
    auto* p = reinterpret_cast<fftw_complex*>(out.v.data());
    fftw_execute_dft(impl_->bwd_3d, p, p);
    for (auto& v : out.v) v *= scale;
  }
  return out;
}

const std::vector<double>& SpectralWorkspace::momentum_weight() const {
  return impl_->mom_weight;
}

void SpectralWorkspace::apply_kinetic_phase(ComplexField& f, double dt, double mass,
                                            bool imaginary_time) const {
  const double pref = consts::hbar * dt / (2.0 * mass);
  if (grid_.kind() == GridKind::CylRZ) {
    const int nr = grid_.n_rho();
    const int nz = grid_.n_z();
    impl_->scratch.resize(f.v.size());
    forward_z(f.v.data());
    radial_to_modes(f.v.data(), impl_->scratch.data());
    const auto& lam = impl_->eigval;
#pragma omp parallel for schedule(static)
    for (int m = 0; m < nr; ++m) {
      cplx* row = impl_->scratch.data() + std::size_t(m) * nz;
      for (int i = 0; i < nz; ++i) {
        const double k2 = lam[m] + grid_.kz(i) * grid_.kz(i);
        row[i] *= imaginary_time ? cplx(std::exp(-pref * k2), 0.0)
                                 : std::exp(cplx(0.0, -pref * k2));
      }
    }
    radial_from_modes(impl_->scratch.data(), f.v.data());
    inverse_z(f.v.data());
  } else {
    forward_3d(f.v.data());
    const auto& nn = grid_.spec().n;
#pragma omp parallel for schedule(static)
    for (int ix = 0; ix < nn[0]; ++ix) {
      const double kx2 = grid_.k_axis(0)[ix] * grid_.k_axis(0)[ix];
      for (int iy = 0; iy < nn[1]; ++iy) {
        const double ky2 = grid_.k_axis(1)[iy] * grid_.k_axis(1)[iy];
        cplx* row = f.v.data() + (std::size_t(ix) * nn[1] + iy) * nn[2];
        for (int iz = 0; iz < nn[2]; ++iz) {
          const double k2 = kx2 + ky2 + grid_.k_axis(2)[iz] * grid_.k_axis(2)[iz];
          row[iz] *= imaginary_time ? cplx(std::exp(-pref * k2), 0.0)
                                    : std::exp(cplx(0.0, -pref * k2));
        }
      }
    }
    inverse_3d(f.v.data());
  }
}

} // namespace sgpe
