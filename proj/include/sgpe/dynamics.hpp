#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "sgpe/grid.hpp"
#include "sgpe/schedule.hpp"
#include "sgpe/species.hpp"

namespace sgpe {

// Three rotating-frame components on one grid plus elapsed time, the
// accumulated detuning phase and the per-component norm removed by absorbers.
struct SpinorState {
  std::shared_ptr<const Grid> grid;
  std::array<ComplexField, 3> psi;
  double t = 0.0;
  double detuning_phase = 0.0;
  std::array<double, 3> absorbed{};

  explicit SpinorState(std::shared_ptr<const Grid> g);
  std::array<double, 3> norms() const;
  double total_norm() const;
};

// Per-component imaginary absorbers: one edge layer plus an optional close-in
// layer for the anti-trapped component (it accelerates and must be removed
// before its momentum outruns the lattice).
struct AbsorberPlan {
  std::optional<AbsorbingLayer> edge;
  std::array<bool, 3> edge_applies{true, true, true};
  std::optional<AbsorbingLayer> plus_inner;
  bool any() const { return edge.has_value() || plus_inner.has_value(); }
};

struct RegridEvent {
  double time = 0.0;
  GridSpec target;
  AbsorberPlan absorbers;  // layers for the new grid
};

struct PropagatorConfig {
  enum class Method { SplitStrang, DormandPrince54 };
  Method method = Method::SplitStrang;

  // split-operator step control: largest phase advance per step (rad)
  double phase_tol = 0.1;
  double max_dt = 2e-4;
  double min_dt = 1e-10;
  double fixed_dt = 0.0;  // > 0 forces constant steps (tests)

  // embedded Dormand-Prince 5(4) control
  double rel_tol = 1e-6;
  double abs_tol_scale = 1e-8;  // absolute tolerance = scale * sqrt(peak density)

  double sample_interval = 1e-3;    // particle-number cadence (s)
  double snapshot_interval = 0.0;   // 0 = off

  AbsorberPlan absorbers;
  std::vector<RegridEvent> regrids;
  bool zero_anti_trap = false;
  bool use_serial_kernels = false;  // reference kernels (tests)
};

struct TimeSeries {
  std::vector<double> t;
  std::array<std::vector<double>, 3> norm;      // on-grid per component
  std::array<std::vector<double>, 3> absorbed;  // cumulative removed norm
};

struct Trajectory {
  TimeSeries series;
  std::shared_ptr<SpinorState> final_state;
  std::size_t steps = 0;
  std::size_t rhs_evaluations = 0;  // Dormand-Prince only
  double wall_seconds = 0.0;
  double regrid_norm_error = 0.0;   // |norm change| across re-gridding
};

struct NumericalError : std::runtime_error {
  double t;
  NumericalError(const std::string& msg, double t_) : std::runtime_error(msg), t(t_) {}
};

using SnapshotSink = std::function<void(const SpinorState&)>;

// Right-hand side of the rotating-wave coupled system at time t:
// out_m = -(i/hbar) [ T psi_m + (V_trap,m + sum g |psi|^2 + s_m) psi_m
//                     + (hbar Omega/2)(e^{-i phi} ladder) ] - (W_m/hbar) psi_m
void compute_rhs(const SpinorState& state, const SpeciesConstants& species,
                 const FieldSchedule& schedule, const PropagatorConfig& config,
                 const SpectralWorkspace& ws, double t,
                 std::array<ComplexField, 3>& out);

Trajectory propagate(SpinorState initial, const SpeciesConstants& species,
                     const FieldSchedule& schedule, const PropagatorConfig& config,
                     const SnapshotSink& sink = nullptr);

// Sudden trap release: the ground state expands with no rf drive; all
// Table-style metrics are computed on the m_F = -1 component.
Trajectory sudden_release_run(const SpeciesConstants& species, const ComplexField& ground,
                              const FieldSchedule& release_schedule,
                              const PropagatorConfig& config,
                              const SnapshotSink& sink = nullptr);

// Resample a field onto another grid: spectral zero-padding along z when the
// extents match, cubic (Catmull-Rom) interpolation otherwise; even reflection
// across the axis.
ComplexField resample_field(const ComplexField& src, const Grid& dst);

// Frame diagonal residuals s_m(t) (J): zero whenever the rf drive is off.
std::array<double, 3> frame_shifts(const SpeciesConstants& species,
                                   const FieldSchedule& schedule, double t);

} // namespace sgpe
