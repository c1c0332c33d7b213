// Timing comparison of the OpenMP grid kernels against the serial reference
// implementations.
#include <omp.h>

#include <chrono>
#include <complex>
#include <cstdio>
#include <random>
#include <vector>

#include "sgpe/constants.hpp"
#include "sgpe/kernels.hpp"
#include "sgpe/species.hpp"
#include "sgpe/units.hpp"

using namespace sgpe;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

} // namespace

int main(int argc, char** argv) {
  const int nr = argc > 1 ? std::atoi(argv[1]) : 256;
  const int nz = argc > 2 ? std::atoi(argv[2]) : 512;
  const int reps = 5;

  const Grid grid(GridSpec::cyl(80 * units::um, nr, 120 * units::um, nz));
  const SpeciesConstants sp = SpeciesConstants::rubidium87();
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::array<std::vector<cplx>, 3> fields, backup;
  for (auto& f : fields) {
    f.resize(grid.total());
    for (auto& v : f) v = cplx(gauss(rng), gauss(rng)) * 1e9;
  }
  backup = fields;
  std::vector<double> vtrap(grid.total());
  for (auto& v : vtrap) v = std::abs(gauss(rng)) * 1e-31;
  std::vector<double> wabs(grid.total());
  for (auto& v : wabs) v = std::abs(gauss(rng)) * 1e-32;
  std::vector<cplx> scratch(grid.total());

  kernels::LocalStepParams p;
  p.v_trap[0] = p.v_trap[1] = p.v_trap[2] = vtrap.data();
  for (int c = 0; c < 3; ++c)
    for (int cp = 0; cp < 3; ++cp) p.g[c][cp] = sp.coupling(c, cp);
  p.rabi = units::angular(90.0);
  p.phase_minus = std::exp(cplx(0.0, -0.37));
  p.dt = 5e-6;
  p.hbar = consts::hbar;

  std::printf("kernel benchmark, grid %d x %d, omp threads %d\n", nr, nz,
              omp_get_max_threads());
  std::printf("%-24s %12s %12s %8s\n", "kernel", "omp [ms]", "serial [ms]", "speedup");

  auto reset = [&] { fields = backup; };
  cplx* psi[3];
  auto bind = [&] {
    for (int c = 0; c < 3; ++c) psi[c] = fields[c].data();
  };

  reset();
  bind();
  const double t_local_omp = time_best_of(reps, [&] {
    kernels::apply_coupled_phase(psi, grid.total(), p, 1e18);
  });
  reset();
  bind();
  const double t_local_ser = time_best_of(reps, [&] {
    kernels::apply_coupled_phase_serial(psi, grid.total(), p, 1e18);
  });
  std::printf("%-24s %12.3f %12.3f %8.2f\n", "coupled_phase", t_local_omp, t_local_ser,
              t_local_ser / t_local_omp);

  const auto cay = kernels::RadialCayley::build(grid, 2.5e-6, sp.mass, false);
  reset();
  bind();
  const double t_cn_omp = time_best_of(reps, [&] {
    for (int c = 0; c < 3; ++c)
      kernels::cn_radial_apply(psi[c], scratch.data(), grid, cay);
  });
  reset();
  bind();
  const double t_cn_ser = time_best_of(reps, [&] {
    for (int c = 0; c < 3; ++c)
      kernels::cn_radial_apply_serial(psi[c], scratch.data(), grid, cay);
  });
  std::printf("%-24s %12.3f %12.3f %8.2f\n", "cn_radial", t_cn_omp, t_cn_ser,
              t_cn_ser / t_cn_omp);

  reset();
  bind();
  const double t_kz_omp = time_best_of(reps, [&] {
    for (int c = 0; c < 3; ++c) kernels::apply_kz_phase(psi[c], grid, 5e-6, sp.mass);
  });
  reset();
  bind();
  const double t_kz_ser = time_best_of(reps, [&] {
    for (int c = 0; c < 3; ++c) kernels::apply_kz_phase_serial(psi[c], grid, 5e-6, sp.mass);
  });
  std::printf("%-24s %12.3f %12.3f %8.2f\n", "kz_phase", t_kz_omp, t_kz_ser,
              t_kz_ser / t_kz_omp);

  reset();
  bind();
  std::array<double, 3> absorbed{};
  const double* w[3] = {wabs.data(), wabs.data(), wabs.data()};
  const double t_decay_omp = time_best_of(reps, [&] {
    kernels::apply_decay(psi, w, 5e-6 / consts::hbar, grid, absorbed);
  });
  reset();
  bind();
  const double t_decay_ser = time_best_of(reps, [&] {
    kernels::apply_decay_serial(psi, w, 5e-6 / consts::hbar, grid, absorbed);
  });
  std::printf("%-24s %12.3f %12.3f %8.2f\n", "decay", t_decay_omp, t_decay_ser,
              t_decay_ser / t_decay_omp);

  reset();
  bind();
  volatile double sink = 0.0;
  const double t_norm_omp =
      time_best_of(reps, [&] { sink = kernels::weighted_norm(psi[0], grid); });
  const double t_norm_ser =
      time_best_of(reps, [&] { sink = kernels::weighted_norm_serial(psi[0], grid); });
  (void)sink;
  std::printf("%-24s %12.3f %12.3f %8.2f\n", "weighted_norm", t_norm_omp, t_norm_ser,
              t_norm_ser / t_norm_omp);
  return 0;
}
