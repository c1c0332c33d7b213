#pragma once

#include <json.hpp>

#include "sgpe/grid.hpp"
#include "sgpe/schedule.hpp"
#include "sgpe/species.hpp"

namespace sgpe {

// Ellipsoid around the main density peak, bounded per axis by the outermost
// point where the density falls below threshold * max.
struct MainPeakRegion {
  std::array<double, 3> semi_axes{};  // m; CylRZ reports (a_rho, a_rho, a_z)
  std::array<double, 3> center{};     // m; CylRZ center is (0, 0, z_c)
  double threshold = 1e-3;
  bool clipped = false;  // threshold never crossed before the grid edge
};

MainPeakRegion find_main_peak(const ComplexField& psi, double threshold = 1e-3);

// |psi~(v)| on a uniform velocity lattice: v_r >= 0 (row) x v_z (column),
// equal spacing dv on both axes, both including v = 0 exactly.
struct VelocityDistribution {
  std::vector<double> v_r;
  std::vector<double> v_z;
  std::vector<cplx> amp;  // row-major [v_r][v_z]
  double dv = 0.0;
  std::size_t index(std::size_t l, std::size_t i) const { return l * v_z.size() + i; }
  double cell_measure(std::size_t l) const;  // 2 pi v_r dv dv ring measure
  double norm() const;                       // integral of |psi~|^2 d^3v
};

struct AnalysisOptions {
  double threshold = 1e-3;
  int pad_factor = 4;    // z zero-padding factor for velocity resolution
  double v_max = 0.0;    // m/s; 0 selects automatically from the z spectrum
  bool density_overlap_fidelity = false;  // numerator |psi~|^2 instead of |psi~|
};

// Fourier transform of the field masked to the main-peak ellipsoid, in the
// (M / 2 pi hbar)^{3/2} velocity convention, v = hbar k / M.
VelocityDistribution restricted_momentum_density(const ComplexField& psi,
                                                 const MainPeakRegion& region,
                                                 const SpeciesConstants& species,
                                                 const AnalysisOptions& opts = {});

struct GaussianFit {
  double amplitude = 0.0;
  double center = 0.0;  // m/s
  double sigma = 0.0;   // m/s
  bool ok = false;
};

// Weighted least-squares Gaussian A exp(-(v-v0)^2 / 2 sigma^2) on a 1D cut.
GaussianFit fit_gaussian_cut(const std::vector<double>& v, const std::vector<double>& f);

struct AnalysisReport {
  double n_component = 0.0;  // on-grid norm of the analyzed component
  double n_mp = 0.0;
  double outcoupled_fraction = 0.0;  // n_mp / N
  double norm_in_region_fraction = 0.0;
  double v_bar = 0.0;  // m/s
  GaussianFit fit_vx, fit_vz;
  double t_eff_x = 0.0, t_eff_z = 0.0;  // K
  double fidelity = 0.0;
  bool fidelity_defined = false;
  MainPeakRegion region;
  std::array<double, 3> final_norms{};
  std::array<double, 3> absorbed{};
  nlohmann::json to_json() const;
};

// Full output-state metrology of one component field.
AnalysisReport metrics(const ComplexField& psi, const SpeciesConstants& species,
                       double n_atoms, const AnalysisOptions& opts = {});
AnalysisReport metrics(const ComplexField& psi, const MainPeakRegion& region,
                       const SpeciesConstants& species, double n_atoms,
                       const AnalysisOptions& opts = {});

// F = int |psi~(vx,0,vz)| |psi~(vz,0,vx)| / int |psi~(vx,0,vz)|^2 over the
// v_y = 0 plane (swap-resampled on the lattice); 1 for isotropic states.
double momentum_overlap_fidelity(const VelocityDistribution& vd,
                                 bool density_overlap = false, bool* defined = nullptr);

// Diagnostic release-energy heuristic: mu(t) - hbar Delta_rf(t) / (1 + r)
// with r the anti-trapping ratio at the instantaneous trap bottom.
double predicted_release_energy(const SpeciesConstants& species,
                                const FieldSchedule& schedule, double mu_t, double t);

} // namespace sgpe
