#pragma once

#include <array>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "sgpe/species.hpp"

namespace sgpe {

class FieldSchedule;

using cplx = std::complex<double>;

enum class GridKind { CylRZ, Cart3D };

// Lattice descriptor.  CylRZ is the production geometry for axially
// symmetric schedules: rho is cell-centered on (0, r_max], z is a standard
// FFT lattice on [-z_half, z_half).  Cart3D is the full 3D validation mode.
struct GridSpec {
  GridKind kind = GridKind::CylRZ;
  std::string name;
  // CylRZ
  double r_max = 0.0;
  int n_rho = 0;
  double z_half = 0.0;
  int n_z = 0;
  // Cart3D
  std::array<double, 3> half{};
  std::array<int, 3> n{};

  static GridSpec cyl(double r_max, int n_rho, double z_half, int n_z,
                      std::string name = "");
  static GridSpec cart(std::array<double, 3> half, std::array<int, 3> n,
                       std::string name = "");
  void validate() const;  // power-of-two counts, positive extents
  bool operator==(const GridSpec&) const = default;
};

class Grid {
 public:
  explicit Grid(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  GridKind kind() const { return spec_.kind; }
  std::size_t total() const { return total_; }

  // CylRZ accessors
  int n_rho() const { return spec_.n_rho; }
  int n_z() const { return spec_.n_z; }
  double dr() const { return dr_; }
  double dz() const { return dz_; }
  double rho(int j) const { return rho_[j]; }
  double z(int i) const { return z_[i]; }
  double kz(int i) const { return kz_[i]; }
  const std::vector<double>& rho_axis() const { return rho_; }
  const std::vector<double>& z_axis() const { return z_; }
  const std::vector<double>& kz_axis() const { return kz_; }
  std::size_t index_rz(int j, int i) const { return std::size_t(j) * spec_.n_z + i; }

  // Cart3D accessors
  const std::vector<double>& axis(int d) const { return cart_axis_[d]; }
  const std::vector<double>& k_axis(int d) const { return cart_k_[d]; }
  double spacing(int d) const { return cart_d_[d]; }
  std::size_t index3(int ix, int iy, int iz) const {
    return (std::size_t(ix) * spec_.n[1] + iy) * spec_.n[2] + iz;
  }

  // Physical position of a flat index (CylRZ maps to (rho, 0, z)).
  std::array<double, 3> position(std::size_t idx) const;

  // Volume element of a flat index (includes 2 pi rho dr dz in CylRZ).
  double weight(std::size_t idx) const {
    return spec_.kind == GridKind::CylRZ ? rho_weight_[idx / spec_.n_z] : cart_w_;
  }
  const std::vector<double>& radial_weights() const { return rho_weight_; }
  double uniform_weight() const { return cart_w_; }

  // Largest representable velocity hbar*k_nyquist/M per axis.
  double nyquist_velocity(int axis_dim, double mass) const;

 private:
  GridSpec spec_;
  std::size_t total_ = 0;
  double dr_ = 0, dz_ = 0;
  std::vector<double> rho_, z_, kz_, rho_weight_;
  std::array<std::vector<double>, 3> cart_axis_, cart_k_;
  std::array<double, 3> cart_d_{};
  double cart_w_ = 0;
};

struct ScalarField {
  const Grid* grid = nullptr;
  std::vector<double> v;
  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid(&g), v(g.total(), 0.0) {}
};

struct ComplexField {
  const Grid* grid = nullptr;
  std::vector<cplx> v;
  ComplexField() = default;
  explicit ComplexField(const Grid& g) : grid(&g), v(g.total(), cplx{0.0, 0.0}) {}
};

double field_norm(const ComplexField& f);          // integral of |psi|^2
double integrate(const ScalarField& f);            // integral of f

// Imaginary absorbing layer.  W >= 0 (J); the imaginary potential is -i W(x).
// onset_frac is the outer layer thickness as a fraction of the half-extent
// (per axis), in (0, 0.5).  When onset_abs[d] >= 0 it overrides the
// fractional onset with an absolute distance from the axis/center, ramping
// over ramp_len (or to the boundary when ramp_len <= 0).  Axes combine by max.
struct AbsorbingLayer {
  std::array<double, 3> onset_frac{0.15, 0.15, 0.15};
  std::array<double, 3> onset_abs{-1.0, -1.0, -1.0};
  double ramp_len = -1.0;
  double peak = 0.0;  // J
  int exponent = 4;
};

ScalarField absorber_potential(const AbsorbingLayer& layer, const Grid& grid);

// Reduced (rho, z) descriptor for an axially symmetric schedule; throws
// std::invalid_argument when omega_x != omega_y.
GridSpec reduce_cylindrical(const GridSpec& cart3d, const FieldSchedule& schedule);

// FFT plans, the radial spectral basis and scratch buffers for one grid.
// One workspace may be shared by read-only users; mutation is single-writer.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(const Grid& grid, int threads = 1);
  ~SpectralWorkspace();
  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  const Grid& grid() const { return grid_; }

  // Unnormalized z-transform (CylRZ), batched over rho rows; inverse applies 1/n_z.
  void forward_z(cplx* data) const;
  void inverse_z(cplx* data) const;

  // Full 3D FFT (Cart3D); inverse applies 1/total.
  void forward_3d(cplx* data) const;
  void inverse_3d(cplx* data) const;

  // Radial eigenbasis of the discrete Laplacian (CylRZ): -L q_n = lambda_n q_n,
  // orthonormal under the radial weight.  lambda has units 1/m^2.
  const std::vector<double>& radial_eigenvalues() const;
  // psi(rho, z) -> mode amplitudes a(n, z); exactly unitary in the weighted norm.
  void radial_to_modes(const cplx* in, cplx* out) const;
  void radial_from_modes(const cplx* in, cplx* out) const;

  // Unitary momentum-space transform: Parseval holds with momentum_weight().
  ComplexField to_momentum(const ComplexField& f) const;
  ComplexField from_momentum(const ComplexField& f) const;
  const std::vector<double>& momentum_weight() const;

  // Exact spectral kinetic propagator exp(-i hbar k^2 dt / 2M) (real dt) or
  // exp(-hbar k^2 tau / 2M) (imaginary_time).
  void apply_kinetic_phase(ComplexField& f, double dt, double mass,
                           bool imaginary_time = false) const;

 private:
  struct Impl;
  const Grid& grid_;
  std::unique_ptr<Impl> impl_;
};

} // namespace sgpe
