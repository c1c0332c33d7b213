#include "sgpe/analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include "sgpe/constants.hpp"
#include "sgpe/units.hpp"
#include "sgpe/zeeman.hpp"

namespace sgpe {

namespace {

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

struct AxisScan {
  double semi_axis = 0.0;
  bool clipped = false;
};

// outermost crossing of thr along a 1D cut, scanning away from icenter
AxisScan scan_axis(const std::vector<double>& cut, const std::vector<double>& coord,
                   int icenter, double thr, double center_pos) {
  AxisScan out;
  for (int dir : {-1, +1}) {
    int last = -1;
    for (int i = icenter; i >= 0 && i < int(cut.size()); i += dir)
      if (cut[i] >= thr) last = i;
    if (last < 0) continue;
    const bool at_edge = (dir < 0 && last == 0) || (dir > 0 && last + 1 == int(cut.size()));
    out.clipped = out.clipped || at_edge;
    out.semi_axis = std::max(out.semi_axis, std::abs(coord[last] - center_pos));
  }
  return out;
}

} // namespace

MainPeakRegion find_main_peak(const ComplexField& psi, double threshold) {
  const Grid& g = *psi.grid;
  MainPeakRegion r;
  r.threshold = threshold;
  double dmax = 0.0;
  for (std::size_t i = 0; i < g.total(); ++i) dmax = std::max(dmax, std::norm(psi.v[i]));
  if (!(dmax > 0.0)) throw std::domain_error("find_main_peak: field is identically zero");
  const double thr = threshold * dmax;

  if (g.kind() == GridKind::CylRZ) {
    const int nr = g.n_rho(), nz = g.n_z();
    // center of mass along z
    double wsum = 0.0, zsum = 0.0;
    for (int j = 0; j < nr; ++j)
      for (int i = 0; i < nz; ++i) {
        const double d = std::norm(psi.v[g.index_rz(j, i)]) * g.weight(g.index_rz(j, i));
        wsum += d;
        zsum += d * g.z(i);
      }
    const double zc = zsum / wsum;
    int izc = int(std::lround((zc + g.spec().z_half) / g.dz()));
    izc = std::clamp(izc, 0, nz - 1);

    std::vector<double> cut_r(nr), cut_z(nz);
    for (int j = 0; j < nr; ++j) cut_r[j] = std::norm(psi.v[g.index_rz(j, izc)]);
    for (int i = 0; i < nz; ++i) cut_z[i] = std::norm(psi.v[g.index_rz(0, i)]);
    std::vector<double> rho_coord(g.rho_axis());
    const AxisScan sr = scan_axis(cut_r, rho_coord, 0, thr, 0.0);
    const AxisScan sz = scan_axis(cut_z, g.z_axis(), izc, thr, zc);
    const double a_rho = sr.semi_axis + 0.5 * g.dr();
    const double a_z = sz.semi_axis + 0.5 * g.dz();
    r.semi_axes = {a_rho, a_rho, a_z};
    r.center = {0.0, 0.0, zc};
    r.clipped = sr.clipped || sz.clipped;
  } else {
    const auto& n = g.spec().n;
    std::array<double, 3> com{};
    double wsum = 0.0;
    for (std::size_t i = 0; i < g.total(); ++i) {
      const double d = std::norm(psi.v[i]);
      if (d == 0.0) continue;
      const auto x = g.position(i);
      wsum += d;
      for (int dcomp = 0; dcomp < 3; ++dcomp) com[dcomp] += d * x[dcomp];
    }
    for (auto& c : com) c /= wsum;
    std::array<int, 3> ic{};
    for (int d = 0; d < 3; ++d)
      ic[d] = std::clamp(int(std::lround((com[d] + g.spec().half[d]) / g.spacing(d))), 0,
                         n[d] - 1);
    for (int d = 0; d < 3; ++d) {
      std::vector<double> cut(n[d]);
      for (int i = 0; i < n[d]; ++i) {
        std::array<int, 3> idx = ic;
        idx[d] = i;
        cut[i] = std::norm(psi.v[g.index3(idx[0], idx[1], idx[2])]);
      }
      const AxisScan s = scan_axis(cut, g.axis(d), ic[d], thr, com[d]);
      r.semi_axes[d] = s.semi_axis + 0.5 * g.spacing(d);
      r.clipped = r.clipped || s.clipped;
    }
    r.center = com;
  }
  return r;
}

double VelocityDistribution::cell_measure(std::size_t l) const {
  if (l == 0) return consts::pi * dv * dv / 4.0 * dv;
  return consts::two_pi * v_r[l] * dv * dv;
}

double VelocityDistribution::norm() const {
  double s = 0.0;
  for (std::size_t l = 0; l < v_r.size(); ++l) {
    double row = 0.0;
    for (std::size_t i = 0; i < v_z.size(); ++i) row += std::norm(amp[index(l, i)]);
    s += row * cell_measure(l);
  }
  return s;
}

VelocityDistribution restricted_momentum_density(const ComplexField& psi,
                                                 const MainPeakRegion& region,
                                                 const SpeciesConstants& species,
                                                 const AnalysisOptions& opts) {
  const Grid& g = *psi.grid;
  if (g.kind() != GridKind::CylRZ)
    throw std::invalid_argument(
        "restricted_momentum_density: use the reduced (rho,z) grid");
  const int nr = g.n_rho(), nz = g.n_z();
  const int npad = nz * std::max(1, opts.pad_factor);
  const double z_half_pad = g.spec().z_half * std::max(1, opts.pad_factor);
  const double mass = species.mass;
  const double dv = consts::two_pi * consts::hbar / (mass * 2.0 * z_half_pad);

  // masked field, zero-padded along z
  std::vector<cplx> padded(std::size_t(nr) * npad, cplx(0, 0));
  const int offset = (npad - nz) / 2;
  const double a_r = region.semi_axes[0], a_z = region.semi_axes[2];
  for (int j = 0; j < nr; ++j) {
    const double rr = g.rho(j) / a_r;
    for (int i = 0; i < nz; ++i) {
      const double zz = (g.z(i) - region.center[2]) / a_z;
      if (rr * rr + zz * zz <= 1.0)
        padded[std::size_t(j) * npad + offset + i] = psi.v[g.index_rz(j, i)];
    }
  }

  // z transform of the padded rows
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    auto* p = reinterpret_cast<fftw_complex*>(padded.data());
    int n[] = {npad};
    fftw_plan plan = fftw_plan_many_dft(1, n, nr, p, nullptr, 1, npad, p, nullptr, 1,
                                        npad, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  // velocity window
  double vz_rms = 0.0;
  {
    double s = 0.0, s2 = 0.0;
    for (int j = 0; j < nr; ++j) {
      const double wj = g.rho(j);
      for (int i = 0; i < npad; ++i) {
        const double kz = (i <= npad / 2 ? i : i - npad) * consts::two_pi / (2.0 * z_half_pad);
        const double vz = consts::hbar * kz / mass;
        const double d = wj * std::norm(padded[std::size_t(j) * npad + i]);
        s += d;
        s2 += d * vz * vz;
      }
    }
    vz_rms = s > 0.0 ? std::sqrt(s2 / s) : 0.0;
  }
  double v_max = opts.v_max > 0.0 ? opts.v_max
                                  : std::max(6.0 * std::sqrt(3.0) * vz_rms, 20.0 * dv);
  v_max = std::min({v_max, g.nyquist_velocity(0, mass),
                    consts::hbar * consts::pi / (mass * (2.0 * z_half_pad / npad))});
  const int nk = std::max(8, int(std::floor(v_max / dv)));

  VelocityDistribution vd;
  vd.dv = dv;
  vd.v_r.resize(nk + 1);
  for (int l = 0; l <= nk; ++l) vd.v_r[l] = l * dv;
  vd.v_z.resize(2 * nk + 1);
  for (int i = 0; i <= 2 * nk; ++i) vd.v_z[i] = (i - nk) * dv;
  vd.amp.assign(vd.v_r.size() * vd.v_z.size(), cplx(0, 0));

  // Bessel quadrature table J0(M v_r rho / hbar) * 2 pi rho dr
  std::vector<double> j0(std::size_t(nk + 1) * nr);
#pragma omp parallel for schedule(static)
  for (int l = 0; l <= nk; ++l)
    for (int j = 0; j < nr; ++j)
      j0[std::size_t(l) * nr + j] = std::cyl_bessel_j(0.0, mass * vd.v_r[l] * g.rho(j) /
                                                               consts::hbar) *
                                    consts::two_pi * g.rho(j) * g.dr();

  const double pref = std::pow(mass / (consts::two_pi * consts::hbar), 1.5) *
                      (2.0 * z_half_pad / npad);
#pragma omp parallel for schedule(static)
  for (int l = 0; l <= nk; ++l) {
    for (int i = 0; i <= 2 * nk; ++i) {
      const int m = i - nk;                      // kz index offset
      const int fft_i = m >= 0 ? m : npad + m;   // FFT ordering
      const double kz = mass * vd.v_z[i] / consts::hbar;
      const cplx zphase = std::exp(cplx(0.0, kz * z_half_pad));
      cplx acc(0, 0);
      for (int j = 0; j < nr; ++j)
        acc += j0[std::size_t(l) * nr + j] * padded[std::size_t(j) * npad + fft_i];
      vd.amp[vd.index(l, i)] = pref * zphase * acc;
    }
  }
  return vd;
}

GaussianFit fit_gaussian_cut(const std::vector<double>& v, const std::vector<double>& f) {
  GaussianFit fit;
  if (v.size() != f.size() || v.size() < 5) return fit;
  const auto peak = std::max_element(f.begin(), f.end());
  const double fmax = *peak;
  if (!(fmax > 0.0)) return fit;
  const int p = int(peak - f.begin());
  int lo = p, hi = p;
  while (lo > 0 && f[lo - 1] >= 0.05 * fmax) --lo;
  while (hi + 1 < int(f.size()) && f[hi + 1] >= 0.05 * fmax) ++hi;
  if (hi - lo + 1 < 5) return fit;

  // weighted least squares on ln f = c0 + c1 v + c2 v^2, weights f^2
  double s[5] = {0, 0, 0, 0, 0};
  double b0 = 0, b1 = 0, b2 = 0;
  for (int i = lo; i <= hi; ++i) {
    const double w = f[i] * f[i];
    const double x = v[i];
    const double y = std::log(f[i]);
    const double x2 = x * x;
    s[0] += w;
    s[1] += w * x;
    s[2] += w * x2;
    s[3] += w * x2 * x;
    s[4] += w * x2 * x2;
    b0 += w * y;
    b1 += w * x * y;
    b2 += w * x2 * y;
  }
  // solve the 3x3 normal system
  const double m[3][3] = {{s[0], s[1], s[2]}, {s[1], s[2], s[3]}, {s[2], s[3], s[4]}};
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-300) return fit;
  auto solve = [&](int col) {
    double mm[3][3];
    const double b[3] = {b0, b1, b2};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) mm[i][j] = (j == col) ? b[i] : m[i][j];
    return (mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1]) -
            mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0]) +
            mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0])) /
           det;
  };
  const double c0 = solve(0), c1 = solve(1), c2 = solve(2);
  if (!(c2 < 0.0)) return fit;
  // f is a density cut; the amplitude Gaussian width follows from |psi~|^2
  fit.sigma = std::sqrt(-0.5 / c2);
  fit.center = -c1 / (2.0 * c2);
  fit.amplitude = std::exp(c0 - c1 * c1 / (4.0 * c2));
  fit.ok = true;
  return fit;
}

double momentum_overlap_fidelity(const VelocityDistribution& vd, bool density_overlap,
                                 bool* defined) {
  const int nk = int(vd.v_r.size()) - 1;
  const int nu = 2 * nk + 1;
  auto mag = [&](int ix, int iz) {
    const int l = std::abs(ix - nk);
    return std::abs(vd.amp[vd.index(std::size_t(l), std::size_t(iz))]);
  };
  double num = 0.0, den = 0.0;
  for (int ix = 0; ix < nu; ++ix)
    for (int iz = 0; iz < nu; ++iz) {
      const double a = mag(ix, iz);
      const double b = mag(iz, ix);
      if (density_overlap) {
        num += a * a * b * b;
        den += a * a * a * a;
      } else {
        num += a * b;
        den += a * a;
      }
    }
  if (defined) *defined = den > 0.0;
  return den > 0.0 ? num / den : 0.0;
}

AnalysisReport metrics(const ComplexField& psi, const SpeciesConstants& species,
                       double n_atoms, const AnalysisOptions& opts) {
  return metrics(psi, find_main_peak(psi, opts.threshold), species, n_atoms, opts);
}

AnalysisReport metrics(const ComplexField& psi, const MainPeakRegion& region,
                       const SpeciesConstants& species, double n_atoms,
                       const AnalysisOptions& opts) {
  const Grid& g = *psi.grid;
  AnalysisReport rep;
  rep.region = region;
  rep.n_component = field_norm(psi);

  // main-peak particle number in position space
  double nmp = 0.0;
  for (std::size_t i = 0; i < g.total(); ++i) {
    const auto x = g.position(i);
    const double rr = x[0] / region.semi_axes[0];
    const double zz = (x[2] - region.center[2]) / region.semi_axes[2];
    if (rr * rr + zz * zz <= 1.0) nmp += std::norm(psi.v[i]) * g.weight(i);
  }
  rep.n_mp = nmp;
  rep.outcoupled_fraction = n_atoms > 0.0 ? nmp / n_atoms : 0.0;
  rep.norm_in_region_fraction = rep.n_component > 0.0 ? nmp / rep.n_component : 0.0;

  const VelocityDistribution vd = restricted_momentum_density(psi, region, species, opts);

  double wsum = 0.0, vsum = 0.0;
  for (std::size_t l = 0; l < vd.v_r.size(); ++l) {
    const double w = vd.cell_measure(l);
    for (std::size_t i = 0; i < vd.v_z.size(); ++i) {
      const double d = std::norm(vd.amp[vd.index(l, i)]);
      const double vmag = std::hypot(vd.v_r[l], vd.v_z[i]);
      wsum += w * d;
      vsum += w * d * vmag;
    }
  }
  rep.v_bar = wsum > 0.0 ? vsum / wsum : 0.0;

  // density cuts through the ring along v_x (at v_z = 0) and v_z (at v_r = 0)
  const std::size_t iz0 = vd.v_z.size() / 2;
  std::vector<double> fx(vd.v_r.size()), vzc, fz;
  for (std::size_t l = 0; l < vd.v_r.size(); ++l)
    fx[l] = std::norm(vd.amp[vd.index(l, iz0)]);
  for (std::size_t i = iz0; i < vd.v_z.size(); ++i) {
    vzc.push_back(vd.v_z[i]);
    fz.push_back(std::norm(vd.amp[vd.index(0, i)]));
  }
  rep.fit_vx = fit_gaussian_cut(vd.v_r, fx);
  rep.fit_vz = fit_gaussian_cut(vzc, fz);
  if (rep.fit_vx.ok)
    rep.t_eff_x = species.mass * rep.fit_vx.sigma * rep.fit_vx.sigma / species.k_b;
  if (rep.fit_vz.ok)
    rep.t_eff_z = species.mass * rep.fit_vz.sigma * rep.fit_vz.sigma / species.k_b;

  rep.fidelity =
      momentum_overlap_fidelity(vd, opts.density_overlap_fidelity, &rep.fidelity_defined);
  return rep;
}

double predicted_release_energy(const SpeciesConstants& species,
                                const FieldSchedule& schedule, double mu_t, double t) {
  const ScheduleSample at = schedule.sample(t);
  const double r = zeeman::anti_trap_ratio(species, at.b_bot);
  return mu_t - consts::hbar * at.detuning / (1.0 + r);
}

nlohmann::json AnalysisReport::to_json() const {
  nlohmann::json j;
  j["n_component"] = n_component;
  j["n_mp"] = n_mp;
  j["outcoupled_fraction"] = outcoupled_fraction;
  j["norm_in_region_fraction"] = norm_in_region_fraction;
  j["v_bar_um_per_s"] = v_bar / units::um_per_s;
  j["sigma_vx_um_per_s"] = fit_vx.ok ? fit_vx.sigma / units::um_per_s : 0.0;
  j["sigma_vz_um_per_s"] = fit_vz.ok ? fit_vz.sigma / units::um_per_s : 0.0;
  j["fit_vx_ok"] = fit_vx.ok;
  j["fit_vz_ok"] = fit_vz.ok;
  j["ring_v_x_um_per_s"] = fit_vx.center / units::um_per_s;
  j["ring_v_z_um_per_s"] = fit_vz.center / units::um_per_s;
  j["t_eff_x_pk"] = t_eff_x / units::picokelvin;
  j["t_eff_z_pk"] = t_eff_z / units::picokelvin;
  j["fidelity"] = fidelity;
  j["fidelity_defined"] = fidelity_defined;
  j["region"] = {{"semi_axes_um",
                  {region.semi_axes[0] / units::um, region.semi_axes[1] / units::um,
                   region.semi_axes[2] / units::um}},
                 {"center_um",
                  {region.center[0] / units::um, region.center[1] / units::um,
                   region.center[2] / units::um}},
                 {"threshold", region.threshold},
                 {"clipped", region.clipped}};
  j["final_norms"] = final_norms;
  j["absorbed"] = absorbed;
  return j;
}

} // namespace sgpe
