#include "sgpe/dynamics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "sgpe/constants.hpp"
#include "sgpe/kernels.hpp"
#include "sgpe/zeeman.hpp"

namespace sgpe {

SpinorState::SpinorState(std::shared_ptr<const Grid> g) : grid(std::move(g)) {
  for (auto& f : psi) f = ComplexField(*grid);
}

std::array<double, 3> SpinorState::norms() const {
  std::array<double, 3> n{};
  for (int c = 0; c < 3; ++c) n[c] = kernels::weighted_norm(psi[c].v.data(), *grid);
  return n;
}

double SpinorState::total_norm() const {
  const auto n = norms();
  return n[0] + n[1] + n[2];
}

std::array<double, 3> frame_shifts(const SpeciesConstants& species,
                                   const FieldSchedule& schedule, double t) {
  const ScheduleSample at = schedule.sample(t);
  if (at.rabi <= 0.0) return {0.0, 0.0, 0.0};
  const auto w = zeeman::transition_frequencies(species, at.b_bot);
  return {consts::hbar * (w.minus_to_zero - schedule.rf_omega0), 0.0,
          consts::hbar * (schedule.rf_omega0 - w.zero_to_plus)};
}

// ---------------------------------------------------------------------------
// resampling

namespace {

// Catmull-Rom interpolation on a uniform lattice; index u in lattice units.
// mirror < 0 requests even reflection across u = -0.5 (the rho axis).
inline cplx cubic_sample(const cplx* data, int n, std::ptrdiff_t stride, double u,
                         bool mirror_axis) {
  const int i1 = int(std::floor(u));
  const double s = u - i1;
  auto fetch = [&](int i) -> cplx {
    if (mirror_axis && i < 0) i = -1 - i;  // cell-centered even reflection
    if (i < 0 || i >= n) return cplx(0.0, 0.0);
    return data[std::ptrdiff_t(i) * stride];
  };
  const cplx p0 = fetch(i1 - 1), p1 = fetch(i1), p2 = fetch(i1 + 1), p3 = fetch(i1 + 2);
  const double s2 = s * s, s3 = s2 * s;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s3);
}

// Spectral zero-padding refinement along z (same z extent, n_dst = k * n_src).
void spectral_refine_z(const Grid& src, const std::vector<cplx>& in, int n_dst,
                       std::vector<cplx>& out) {
  const int nr = src.n_rho();
  const int ns = src.n_z();
  SpectralWorkspace ws(src);
  std::vector<cplx> hat(in);
  ws.forward_z(hat.data());
  out.assign(std::size_t(nr) * n_dst, cplx(0, 0));
  // place modes [0 .. ns/2-1] and [-ns/2 .. -1]; the Nyquist mode is split
  for (int j = 0; j < nr; ++j) {
    const cplx* s = hat.data() + std::size_t(j) * ns;
    cplx* d = out.data() + std::size_t(j) * n_dst;
    for (int i = 0; i < ns / 2; ++i) d[i] = s[i];
    for (int i = 1; i < ns / 2; ++i) d[n_dst - i] = s[ns - i];
    d[ns / 2] = 0.5 * s[ns / 2];
    d[n_dst - ns / 2] = 0.5 * s[ns / 2];
  }
  // inverse transform on the destination lattice
  GridSpec tmp_spec = src.spec();
  tmp_spec.n_z = n_dst;
  Grid tmp(tmp_spec);
  SpectralWorkspace wd(tmp);
  wd.inverse_z(out.data());
  const double scale = double(n_dst) / ns;
  for (auto& v : out) v *= scale;
}

} // namespace

ComplexField resample_field(const ComplexField& src_field, const Grid& dst) {
  const Grid& src = *src_field.grid;
  if (src.kind() != GridKind::CylRZ || dst.kind() != GridKind::CylRZ)
    throw std::invalid_argument("resample_field: only CylRZ re-gridding is supported");
  ComplexField out(dst);
  const int nr_d = dst.n_rho(), nz_d = dst.n_z();
  const int nr_s = src.n_rho(), nz_s = src.n_z();

  const bool z_spectral = std::abs(src.spec().z_half - dst.spec().z_half) <
                              1e-12 * dst.spec().z_half &&
                          nz_d >= nz_s && nz_d % nz_s == 0;
  std::vector<cplx> mid;  // src rho lattice x dst z lattice
  if (z_spectral) {
    if (nz_d == nz_s)
      mid = src_field.v;
    else
      spectral_refine_z(src, src_field.v, nz_d, mid);
  } else {
    mid.resize(std::size_t(nr_s) * nz_d);
    for (int j = 0; j < nr_s; ++j) {
      const cplx* row = src_field.v.data() + std::size_t(j) * nz_s;
      cplx* orow = mid.data() + std::size_t(j) * nz_d;
      for (int i = 0; i < nz_d; ++i) {
        const double u = (dst.z(i) + src.spec().z_half) / src.dz();
        orow[i] = cubic_sample(row, nz_s, 1, u, false);
      }
    }
  }
#pragma omp parallel for schedule(static)
  for (int j = 0; j < nr_d; ++j) {
    cplx* orow = out.v.data() + std::size_t(j) * nz_d;
    const double u = dst.rho(j) / src.dr() - 0.5;
    for (int i = 0; i < nz_d; ++i)
      orow[i] = cubic_sample(mid.data() + i, nr_s, nz_d, u, true);
  }
  return out;
}

// ---------------------------------------------------------------------------
// stepping machinery

namespace {

struct PotentialKey {
  double b_bot = -1, scale = -1, gradient = std::numeric_limits<double>::quiet_NaN();
  bool operator==(const PotentialKey&) const = default;
};

struct StepContext {
  const SpeciesConstants& species;
  const FieldSchedule& schedule;
  const PropagatorConfig& config;
  std::shared_ptr<const Grid> grid;
  std::unique_ptr<SpectralWorkspace> ws;
  std::array<ScalarField, 3> vtrap;
  std::array<bool, 3> vtrap_live{false, false, false};
  PotentialKey vkey;
  std::array<ScalarField, 3> wfield;
  std::array<bool, 3> w_live{false, false, false};
  std::vector<cplx> scratch;
  double g[3][3];
  double dens_scale = 0.0;
  kernels::LocalStepStats last_stats;
  std::array<bool, 3> active{true, true, true};

  StepContext(const SpeciesConstants& sp, const FieldSchedule& sc,
              const PropagatorConfig& cf)
      : species(sp), schedule(sc), config(cf) {
    for (int c = 0; c < 3; ++c)
      for (int cp = 0; cp < 3; ++cp) g[c][cp] = sp.coupling(c, cp);
  }

  void attach(std::shared_ptr<const Grid> g_, const AbsorberPlan& plan) {
    grid = std::move(g_);
    ws = std::make_unique<SpectralWorkspace>(*grid);
    scratch.resize(grid->total());
    vkey = PotentialKey{};
    build_absorbers(plan);
  }

  void build_absorbers(const AbsorberPlan& plan) {
    w_live = {false, false, false};
    if (plan.edge) {
      const ScalarField edge = absorber_potential(*plan.edge, *grid);
      for (int c = 0; c < 3; ++c) {
        if (!plan.edge_applies[c]) continue;
        wfield[c] = edge;
        w_live[c] = true;
      }
    }
    if (plan.plus_inner) {
      const ScalarField inner = absorber_potential(*plan.plus_inner, *grid);
      if (!w_live[2]) {
        wfield[2] = inner;
        w_live[2] = true;
      } else {
        for (std::size_t i = 0; i < inner.v.size(); ++i)
          wfield[2].v[i] = std::max(wfield[2].v[i], inner.v[i]);
      }
    }
  }

  void refresh_potentials(double t) {
    const ScheduleSample at = schedule.sample(t);
    const PotentialKey key{at.b_bot, at.trap_scale, at.gradient};
    if (key == vkey) return;
    vkey = key;
    const bool flat = at.trap_scale == 0.0 && at.gradient == 0.0;
    for (int c = 0; c < 3; ++c) {
      const bool zero = flat || (config.zero_anti_trap && c == 1);
      if (zero) {
        vtrap_live[c] = false;
      } else {
        vtrap[c] = potential_on_grid(species, schedule, mf_of(c), *grid, t,
                                     config.zero_anti_trap);
        vtrap_live[c] = true;
      }
    }
  }

  void mark_active(const SpinorState& st, double n_ref) {
    for (int c = 0; c < 3; ++c)
      active[c] = kernels::weighted_norm(st.psi[c].v.data(), *grid) > 1e-12 * n_ref;
  }
};

void apply_local(StepContext& ctx, SpinorState& st, double t_mid, double dt) {
  const ScheduleSample at = ctx.schedule.sample(t_mid);
  kernels::LocalStepParams p;
  for (int c = 0; c < 3; ++c) p.v_trap[c] = ctx.vtrap_live[c] ? ctx.vtrap[c].v.data() : nullptr;
  p.shift = frame_shifts(ctx.species, ctx.schedule, t_mid);
  for (int c = 0; c < 3; ++c)
    for (int cp = 0; cp < 3; ++cp) p.g[c][cp] = ctx.g[c][cp];
  p.rabi = at.rabi;
  const double phi = ctx.schedule.accumulated_detuning_phase(t_mid);
  p.phase_minus = std::exp(cplx(0.0, -phi));
  p.dt = dt;
  p.hbar = consts::hbar;
  p.skip_floor = 1e-12 * ctx.dens_scale;
  cplx* psi[3] = {st.psi[0].v.data(), st.psi[1].v.data(), st.psi[2].v.data()};
  ctx.last_stats = ctx.config.use_serial_kernels
                       ? kernels::apply_coupled_phase_serial(psi, ctx.grid->total(), p,
                                                             ctx.dens_scale)
                       : kernels::apply_coupled_phase(psi, ctx.grid->total(), p,
                                                      ctx.dens_scale);
  ctx.dens_scale = std::max(ctx.dens_scale, ctx.last_stats.max_density);
}

void apply_absorbers(StepContext& ctx, SpinorState& st, double dt) {
  if (!(ctx.w_live[0] || ctx.w_live[1] || ctx.w_live[2])) return;
  cplx* psi[3] = {st.psi[0].v.data(), st.psi[1].v.data(), st.psi[2].v.data()};
  const double* w[3] = {ctx.w_live[0] ? ctx.wfield[0].v.data() : nullptr,
                        ctx.w_live[1] ? ctx.wfield[1].v.data() : nullptr,
                        ctx.w_live[2] ? ctx.wfield[2].v.data() : nullptr};
  if (ctx.config.use_serial_kernels)
    kernels::apply_decay_serial(psi, w, dt / consts::hbar, *ctx.grid, st.absorbed);
  else
    kernels::apply_decay(psi, w, dt / consts::hbar, *ctx.grid, st.absorbed);
}

void apply_kinetic_split(StepContext& ctx, SpinorState& st, double dt) {
  if (ctx.grid->kind() == GridKind::CylRZ) {
    const auto cay = kernels::RadialCayley::build(*ctx.grid, 0.5 * dt, ctx.species.mass, false);
    for (int c = 0; c < 3; ++c) {
      if (!ctx.active[c]) continue;
      cplx* d = st.psi[c].v.data();
      if (ctx.config.use_serial_kernels) {
        kernels::cn_radial_apply_serial(d, ctx.scratch.data(), *ctx.grid, cay);
        ctx.ws->forward_z(d);
        kernels::apply_kz_phase_serial(d, *ctx.grid, dt, ctx.species.mass, false);
        ctx.ws->inverse_z(d);
        kernels::cn_radial_apply_serial(d, ctx.scratch.data(), *ctx.grid, cay);
      } else {
        kernels::cn_radial_apply(d, ctx.scratch.data(), *ctx.grid, cay);
        ctx.ws->forward_z(d);
        kernels::apply_kz_phase(d, *ctx.grid, dt, ctx.species.mass, false);
        ctx.ws->inverse_z(d);
        kernels::cn_radial_apply(d, ctx.scratch.data(), *ctx.grid, cay);
      }
    }
  } else {
    for (int c = 0; c < 3; ++c) {
      if (!ctx.active[c]) continue;
      ctx.ws->apply_kinetic_phase(st.psi[c], dt, ctx.species.mass, false);
    }
  }
}

void strang_step(StepContext& ctx, SpinorState& st, double dt) {
  const double t_mid = st.t + 0.5 * dt;
  ctx.refresh_potentials(t_mid);
  if (ctx.schedule.sample(t_mid).rabi > 0.0) ctx.active = {true, true, true};
  apply_absorbers(ctx, st, 0.5 * dt);
  apply_local(ctx, st, t_mid, 0.5 * dt);
  apply_kinetic_split(ctx, st, dt);
  apply_local(ctx, st, t_mid, 0.5 * dt);
  apply_absorbers(ctx, st, 0.5 * dt);
  st.t += dt;
  st.detuning_phase = ctx.schedule.accumulated_detuning_phase(st.t);
}

double controller_dt(StepContext& ctx, const SpinorState& st, double t) {
  const auto& cfg = ctx.config;
  if (cfg.fixed_dt > 0.0) return cfg.fixed_dt;
  const ScheduleSample at = ctx.schedule.sample(t);
  double omega = std::max(ctx.last_stats.max_diag_over_hbar, 0.5 * at.rabi);
  if (at.rabi > 0.0) omega = std::max(omega, std::abs(at.detuning));
  double dt = omega > 0.0 ? cfg.phase_tol / omega : cfg.max_dt;
  dt = std::clamp(dt, cfg.min_dt, cfg.max_dt);
  // guard against fast parameter ramps across the step
  for (int iter = 0; iter < 24; ++iter) {
    const double t2 = std::min(t + dt, ctx.schedule.t_max);
    const ScheduleSample b = ctx.schedule.sample(t2);
    const auto s1 = frame_shifts(ctx.species, ctx.schedule, t);
    const auto s2 = frame_shifts(ctx.species, ctx.schedule, t2);
    double ramp = std::abs(b.detuning - at.detuning) + std::abs(b.rabi - at.rabi);
    for (int c = 0; c < 3; ++c) ramp = std::max(ramp, std::abs(s2[c] - s1[c]) / consts::hbar);
    // trap ramps change the potential landscape; bound by the bulk scale
    if (b.trap_scale != at.trap_scale || b.b_bot != at.b_bot)
      ramp = std::max(ramp, ctx.last_stats.max_diag_over_hbar *
                                std::abs(b.trap_scale - at.trap_scale));
    if (ramp * dt <= cfg.phase_tol || dt <= cfg.min_dt) break;
    dt *= 0.5;
  }
  (void)st;
  return dt;
}

// ---------------------------------------------------------------------------
// right-hand side (Dormand-Prince path and the public test hook)

void rhs_into(StepContext& ctx, const std::array<ComplexField, 3>& psi, double t,
              double phi, std::array<ComplexField, 3>& out) {
  const Grid& grid = *ctx.grid;
  ctx.refresh_potentials(t);
  const ScheduleSample at = ctx.schedule.sample(t);
  const auto shift = frame_shifts(ctx.species, ctx.schedule, t);
  const cplx coup_dn = 0.5 * consts::hbar * at.rabi * std::exp(cplx(0.0, -phi));
  const cplx coup_up = std::conj(coup_dn);
  const std::size_t total = grid.total();

  // kinetic term per component
  for (int c = 0; c < 3; ++c) {
    if (grid.kind() == GridKind::CylRZ) {
      const int nr = grid.n_rho(), nz = grid.n_z();
      ctx.scratch = psi[c].v;
      ctx.ws->forward_z(ctx.scratch.data());
#pragma omp parallel for schedule(static)
      for (int j = 0; j < nr; ++j) {
        cplx* row = ctx.scratch.data() + std::size_t(j) * nz;
        for (int i = 0; i < nz; ++i)
          row[i] *= consts::hbar * consts::hbar * grid.kz(i) * grid.kz(i) /
                    (2.0 * ctx.species.mass);
      }
      ctx.ws->inverse_z(ctx.scratch.data());
      const double inv_dr2 = 1.0 / (grid.dr() * grid.dr());
#pragma omp parallel for schedule(static)
      for (int j = 0; j < nr; ++j) {
        const double a = j * inv_dr2 / (j + 0.5);
        const double cc = (j + 1.0) * inv_dr2 / (j + 0.5);
        const cplx* cur = psi[c].v.data() + std::size_t(j) * nz;
        const cplx* below = j > 0 ? psi[c].v.data() + std::size_t(j - 1) * nz : nullptr;
        const cplx* above = j + 1 < nr ? psi[c].v.data() + std::size_t(j + 1) * nz : nullptr;
        cplx* o = out[c].v.data() + std::size_t(j) * nz;
        const cplx* tz = ctx.scratch.data() + std::size_t(j) * nz;
        for (int i = 0; i < nz; ++i) {
          cplx lap = -(a + cc) * cur[i];
          if (below) lap += a * below[i];
          if (above) lap += cc * above[i];
          o[i] = tz[i] - consts::hbar * consts::hbar / (2.0 * ctx.species.mass) * lap;
        }
      }
    } else {
      out[c].v = psi[c].v;
      ctx.ws->forward_3d(out[c].v.data());
      const auto& nn = grid.spec().n;
#pragma omp parallel for schedule(static)
      for (int ix = 0; ix < nn[0]; ++ix)
        for (int iy = 0; iy < nn[1]; ++iy) {
          cplx* row = out[c].v.data() + (std::size_t(ix) * nn[1] + iy) * nn[2];
          for (int iz = 0; iz < nn[2]; ++iz) {
            const double k2 = grid.k_axis(0)[ix] * grid.k_axis(0)[ix] +
                              grid.k_axis(1)[iy] * grid.k_axis(1)[iy] +
                              grid.k_axis(2)[iz] * grid.k_axis(2)[iz];
            row[iz] *= consts::hbar * consts::hbar * k2 / (2.0 * ctx.species.mass);
          }
        }
      ctx.ws->inverse_3d(out[c].v.data());
    }
  }

  const cplx minus_i_over_hbar(0.0, -1.0 / consts::hbar);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < std::int64_t(total); ++ii) {
    const std::size_t i = std::size_t(ii);
    const double dens[3] = {std::norm(psi[0].v[i]), std::norm(psi[1].v[i]),
                            std::norm(psi[2].v[i])};
    cplx h[3];
    for (int c = 0; c < 3; ++c) {
      double diag = (ctx.vtrap_live[c] ? ctx.vtrap[c].v[i] : 0.0) + shift[c];
      for (int cp = 0; cp < 3; ++cp) diag += ctx.g[c][cp] * dens[cp];
      h[c] = out[c].v[i] + diag * psi[c].v[i];
    }
    h[0] += coup_dn * psi[1].v[i];
    h[1] += coup_up * psi[0].v[i] + coup_dn * psi[2].v[i];
    h[2] += coup_up * psi[1].v[i];
    for (int c = 0; c < 3; ++c) {
      cplx r = minus_i_over_hbar * h[c];
      if (ctx.w_live[c]) r -= ctx.wfield[c].v[i] / consts::hbar * psi[c].v[i];
      out[c].v[i] = r;
    }
  }
}

} // namespace

void compute_rhs(const SpinorState& state, const SpeciesConstants& species,
                 const FieldSchedule& schedule, const PropagatorConfig& config,
                 const SpectralWorkspace& ws, double t, std::array<ComplexField, 3>& out) {
  (void)ws;
  StepContext ctx(species, schedule, config);
  ctx.attach(state.grid, config.absorbers);
  for (auto& f : out) f = ComplexField(*state.grid);
  rhs_into(ctx, state.psi, t, schedule.accumulated_detuning_phase(t), out);
}

// ---------------------------------------------------------------------------
// propagate

namespace {

void record_sample(TimeSeries& ts, const SpinorState& st) {
  ts.t.push_back(st.t);
  const auto n = st.norms();
  for (int c = 0; c < 3; ++c) {
    ts.norm[c].push_back(n[c]);
    ts.absorbed[c].push_back(st.absorbed[c]);
    if (!std::isfinite(n[c])) throw NumericalError("propagate: non-finite norm", st.t);
  }
}

struct Dp54 {
  // Dormand-Prince 5(4) tableau
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600,
                          e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640,
                          e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
};

} // namespace

Trajectory propagate(SpinorState initial, const SpeciesConstants& species,
                     const FieldSchedule& schedule, const PropagatorConfig& config,
                     const SnapshotSink& sink) {
  const auto wall0 = std::chrono::steady_clock::now();
  Trajectory traj;
  auto state = std::make_shared<SpinorState>(std::move(initial));

  StepContext ctx(species, schedule, config);
  ctx.attach(state->grid, config.absorbers);

  const double n_ref = state->total_norm();
  {
    const cplx* p[3] = {state->psi[0].v.data(), state->psi[1].v.data(),
                        state->psi[2].v.data()};
    ctx.dens_scale = kernels::max_density(p, state->grid->total());
  }
  ctx.mark_active(*state, n_ref);

  // event times: phase boundaries, re-grids, end
  std::set<double> events;
  for (double b : schedule.boundaries())
    if (b > state->t && b <= schedule.t_max) events.insert(b);
  events.insert(schedule.t_max);
  std::map<double, const RegridEvent*> regrid_at;
  for (const auto& r : config.regrids) {
    if (r.time > state->t && r.time <= schedule.t_max) {
      events.insert(r.time);
      regrid_at[r.time] = &r;
    }
  }

  record_sample(traj.series, *state);
  if (sink && config.snapshot_interval > 0.0) sink(*state);
  double next_sample = state->t + config.sample_interval;
  double next_snapshot = config.snapshot_interval > 0.0
                             ? state->t + config.snapshot_interval
                             : std::numeric_limits<double>::infinity();

  // warm the controller statistics with a zero-duration local pass
  ctx.refresh_potentials(state->t);
  apply_local(ctx, *state, state->t, 0.0);

  const bool use_dp = config.method == PropagatorConfig::Method::DormandPrince54;

  // Dormand-Prince storage
  std::array<ComplexField, 3> k1, k2, k3, k4, k5, k6, k7, ytmp, ynew;
  double abs_tol = 0.0;
  bool k1_valid = false;
  if (use_dp) {
    for (auto* f : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &ytmp, &ynew})
      for (auto& c : *f) c = ComplexField(*state->grid);
    abs_tol = config.abs_tol_scale * std::sqrt(std::max(ctx.dens_scale, 1.0));
  }

  double dt_dp = config.fixed_dt > 0.0 ? config.fixed_dt : 1e-6;

  for (auto ev = events.begin(); ev != events.end(); ++ev) {
    const double t_stop = *ev;
    while (state->t < t_stop - 1e-15) {
      double dt;
      if (!use_dp) {
        dt = controller_dt(ctx, *state, state->t);
        dt = std::min(dt, t_stop - state->t);
        strang_step(ctx, *state, dt);
        ++traj.steps;
      } else {
        // adaptive embedded step (FSAL)
        bool accepted = false;
        dt = std::min(dt_dp, t_stop - state->t);
        while (!accepted) {
          if (dt < config.min_dt)
            throw NumericalError("propagate: step size underflow", state->t);
          const double t = state->t;
          auto phi = [&](double tt) { return schedule.accumulated_detuning_phase(tt); };
          if (!k1_valid) {
            rhs_into(ctx, state->psi, t, phi(t), k1);
            ++traj.rhs_evaluations;
            k1_valid = true;
          }
          auto stage = [&](std::array<ComplexField, 3>& out, double tfrac,
                           std::initializer_list<std::pair<const std::array<ComplexField, 3>*, double>>
                               terms) {
            for (int c = 0; c < 3; ++c) {
              const std::size_t n = state->psi[c].v.size();
#pragma omp parallel for schedule(static)
              for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
                cplx acc = state->psi[c].v[std::size_t(i)];
                for (const auto& term : terms)
                  acc += dt * term.second * (*term.first)[c].v[std::size_t(i)];
                ytmp[c].v[std::size_t(i)] = acc;
              }
            }
            rhs_into(ctx, ytmp, t + tfrac * dt, phi(t + tfrac * dt), out);
            ++traj.rhs_evaluations;
          };
          stage(k2, Dp54::c2, {{&k1, Dp54::a21}});
          stage(k3, Dp54::c3, {{&k1, Dp54::a31}, {&k2, Dp54::a32}});
          stage(k4, Dp54::c4, {{&k1, Dp54::a41}, {&k2, Dp54::a42}, {&k3, Dp54::a43}});
          stage(k5, Dp54::c5,
                {{&k1, Dp54::a51}, {&k2, Dp54::a52}, {&k3, Dp54::a53}, {&k4, Dp54::a54}});
          stage(k6, 1.0,
                {{&k1, Dp54::a61}, {&k2, Dp54::a62}, {&k3, Dp54::a63}, {&k4, Dp54::a64},
                 {&k5, Dp54::a65}});
          // 5th-order solution
          double err2 = 0.0, cnt = 0.0;
          for (int c = 0; c < 3; ++c) {
            const std::size_t n = state->psi[c].v.size();
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
              const std::size_t idx = std::size_t(i);
              ynew[c].v[idx] = state->psi[c].v[idx] +
                               dt * (Dp54::b1 * k1[c].v[idx] + Dp54::b3 * k3[c].v[idx] +
                                     Dp54::b4 * k4[c].v[idx] + Dp54::b5 * k5[c].v[idx] +
                                     Dp54::b6 * k6[c].v[idx]);
            }
          }
          rhs_into(ctx, ynew, t + dt, phi(t + dt), k7);
          ++traj.rhs_evaluations;
          for (int c = 0; c < 3; ++c) {
            const std::size_t n = state->psi[c].v.size();
#pragma omp parallel for schedule(static) reduction(+ : err2, cnt)
            for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
              const std::size_t idx = std::size_t(i);
              const cplx e = dt * (Dp54::e1 * k1[c].v[idx] + Dp54::e3 * k3[c].v[idx] +
                                   Dp54::e4 * k4[c].v[idx] + Dp54::e5 * k5[c].v[idx] +
                                   Dp54::e6 * k6[c].v[idx] + Dp54::e7 * k7[c].v[idx]);
              const double sc = abs_tol + config.rel_tol *
                                              std::max(std::abs(state->psi[c].v[idx]),
                                                       std::abs(ynew[c].v[idx]));
              err2 += std::norm(e) / (sc * sc);
              cnt += 1.0;
            }
          }
          const double err = std::sqrt(err2 / std::max(cnt, 1.0));
          if (!std::isfinite(err)) throw NumericalError("propagate: NaN in step", state->t);
          if (err <= 1.0 || config.fixed_dt > 0.0) {
            for (int c = 0; c < 3; ++c) state->psi[c].v.swap(ynew[c].v);
            state->t += dt;
            state->detuning_phase = schedule.accumulated_detuning_phase(state->t);
            for (int c = 0; c < 3; ++c) k1[c].v.swap(k7[c].v);  // FSAL
            accepted = true;
            ++traj.steps;
            if (config.fixed_dt <= 0.0) {
              const double fac =
                  std::clamp(0.9 * std::pow(err > 0 ? 1.0 / err : 1e4, 0.2), 0.2, 5.0);
              dt_dp = std::min(dt * fac, config.max_dt);
            }
          } else {
            const double fac = std::clamp(0.9 * std::pow(1.0 / err, 0.2), 0.2, 1.0);
            dt *= fac;
          }
        }
      }

      if (state->t >= next_sample - 1e-15) {
        record_sample(traj.series, *state);
        next_sample += config.sample_interval;
        ctx.mark_active(*state, n_ref);
      }
      if (state->t >= next_snapshot - 1e-15) {
        if (sink) sink(*state);
        next_snapshot += config.snapshot_interval;
      }
    }

    // re-grid event
    if (auto it = regrid_at.find(t_stop); it != regrid_at.end()) {
      const RegridEvent& rg = *it->second;
      auto new_grid = std::make_shared<Grid>(rg.target);
      auto next = std::make_shared<SpinorState>(new_grid);
      next->t = state->t;
      next->detuning_phase = state->detuning_phase;
      next->absorbed = state->absorbed;
      const double before = state->total_norm();
      for (int c = 0; c < 3; ++c)
        if (ctx.active[c]) next->psi[c] = resample_field(state->psi[c], *new_grid);
      state = next;
      traj.regrid_norm_error += std::abs(state->total_norm() - before);
      ctx.attach(state->grid, rg.absorbers);
      ctx.mark_active(*state, n_ref);
      if (use_dp) {
        for (auto* f : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &ytmp, &ynew})
          for (auto& c : *f) c = ComplexField(*state->grid);
        k1_valid = false;
      }
    } else if (use_dp) {
      k1_valid = false;  // schedule parameters may jump across the boundary
    }
  }

  record_sample(traj.series, *state);
  if (sink) sink(*state);
  traj.final_state = state;
  traj.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return traj;
}

Trajectory sudden_release_run(const SpeciesConstants& species, const ComplexField& ground,
                              const FieldSchedule& release_schedule,
                              const PropagatorConfig& config, const SnapshotSink& sink) {
  auto grid = std::make_shared<Grid>(ground.grid->spec());
  SpinorState st(grid);
  st.psi[0].v = ground.v;
  return propagate(std::move(st), species, release_schedule, config, sink);
}

} // namespace sgpe
