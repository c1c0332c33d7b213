// Closed-form Zeeman structure checks.  Frozen expected values were computed
// by direct high-precision (40-digit) evaluation of the defining formulas
// with the preset constants.
#include <doctest.h>

#include <cmath>

#include "sgpe/constants.hpp"
#include "sgpe/species.hpp"
#include "sgpe/units.hpp"
#include "sgpe/zeeman.hpp"

using namespace sgpe;
using namespace sgpe::units;
using doctest::Approx;

namespace {
const SpeciesConstants rb = SpeciesConstants::rubidium87();
const double mu318 = consts::hbar * angular(318.0);
} // namespace

TEST_CASE("dimensionless field parameter b") {
  CHECK(zeeman::dimensionless_b(rb, 0.0) == 0.0);
  const double b4 = zeeman::dimensionless_b(rb, 4.0 * gauss);
  CHECK(b4 == Approx(1.6409859405409225e-3).epsilon(1e-12));
  CHECK(b4 * b4 < 1e-2);  // well inside the intermediate-field regime
  CHECK(zeeman::dimensionless_b(rb, zeeman::field_at_unit_b(rb)) == Approx(1.0).epsilon(1e-14));
  CHECK(zeeman::field_at_unit_b(rb) == Approx(0.24375589706036540).epsilon(1e-12));
  CHECK_THROWS_AS(zeeman::dimensionless_b(rb, -1e-6), std::domain_error);
}

TEST_CASE("Breit-Rabi potentials") {
  for (int m : {-1, 0, 1})
    CHECK(zeeman::breit_rabi_potential(rb, m, 0.0) ==
          Approx(-1.25 * rb.a_hfs).epsilon(1e-15));

  // rf offset at the 4 G trap bottom: 2.799 MHz (frozen 2.7994806796 MHz)
  const double w0 = zeeman::rf_offset_frequency(rb, 4.0 * gauss);
  CHECK(w0 / consts::two_pi == Approx(2.7994806796193331e6).epsilon(1e-10));
  CHECK(w0 / consts::two_pi == Approx(2.799e6).epsilon(1e-3));

  // V(-1) + V(+1) - 2 V(0) equals the stable closed form of the asymmetry
  const double direct = zeeman::breit_rabi_potential(rb, -1, 4 * gauss) +
                        zeeman::breit_rabi_potential(rb, +1, 4 * gauss) -
                        2.0 * zeeman::breit_rabi_potential(rb, 0, 4 * gauss);
  const double stable = zeeman::breit_rabi_asymmetry(rb, 4 * gauss);
  CHECK(direct == Approx(stable).epsilon(1e-9));
  CHECK(stable / consts::planck == Approx(2300.5765897853714).epsilon(1e-12));

  // anti-trapped level becomes more strongly bound as B grows (small b)
  double prev = zeeman::breit_rabi_potential(rb, +1, 0.0);
  for (double bg = 0.5; bg <= 16.0; bg *= 2.0) {
    const double v = zeeman::breit_rabi_potential(rb, +1, bg * gauss);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("transition frequencies and their asymmetry") {
  const auto w0 = zeeman::transition_frequencies(rb, 0.0);
  CHECK(w0.minus_to_zero == 0.0);
  CHECK(w0.zero_to_plus == 0.0);

  // omega_{-1,0} > omega_{0,+1} across 1e-4 .. 1e2 G
  for (double bg = 1e-4; bg <= 1e2; bg *= 10.0) {
    const auto w = zeeman::transition_frequencies(rb, bg * gauss);
    CHECK(w.minus_to_zero > w.zero_to_plus);
  }

  // the asymmetry formula matches the direct difference to < 1e-12 relative
  for (double bg : {0.5, 4.0, 40.0}) {
    const auto w = zeeman::transition_frequencies(rb, bg * gauss);
    const double direct = w.minus_to_zero - w.zero_to_plus;
    const double b = zeeman::dimensionless_b(rb, bg * gauss);
    const double formula = rb.a_hfs / rb.hbar *
                           (2.0 * std::sqrt(1.0 + b * b) - std::sqrt(1.0 - b + b * b) -
                            std::sqrt(1.0 + b + b * b));
    CHECK(direct == Approx(formula).epsilon(1e-12));
    CHECK(consts::hbar * direct ==
          Approx(zeeman::breit_rabi_asymmetry(rb, bg * gauss)).epsilon(1e-12));
  }

  // state-selectivity scale: 16 mu A / ((gJ-gI)^2 muB^2) = 2.2 G^2 at mu/h = 318 Hz
  const double rhs = 16.0 * mu318 * rb.a_hfs /
                     ((rb.g_j - rb.g_i) * (rb.g_j - rb.g_i) * rb.mu_b * rb.mu_b);
  CHECK(rhs / (gauss * gauss) == Approx(2.2116124059507364).epsilon(1e-12));
  CHECK(rhs / (gauss * gauss) == Approx(2.2).epsilon(0.05));
}

TEST_CASE("anti-trapping ratio") {
  CHECK(zeeman::anti_trap_ratio(rb, 0.0) == 0.0);
  const double r4 = zeeman::anti_trap_ratio(rb, 4 * gauss);
  CHECK(r4 == Approx(3.2754636063481593e-3).epsilon(1e-12));
  CHECK(r4 == Approx(3.3e-3).epsilon(0.03));
  CHECK(zeeman::anti_trap_ratio(rb, 8 * gauss) == Approx(2.0 * r4).epsilon(1e-14));

  bool warn = false;
  zeeman::anti_trap_ratio(rb, 4 * gauss, &warn);
  CHECK_FALSE(warn);
  zeeman::anti_trap_ratio(rb, 3000.0 * gauss, &warn);
  CHECK(warn);

  // first-order ratio matches the exact potential-difference ratio within 5%
  // for B_t <= 0.1 B_bot at 4 G
  const double b_bot = 4 * gauss;
  for (double bt : {0.01 * b_bot, 0.05 * b_bot, 0.1 * b_bot}) {
    const double dv0 = zeeman::breit_rabi_potential(rb, 0, b_bot + bt) -
                       zeeman::breit_rabi_potential(rb, 0, b_bot);
    const double dvm = zeeman::breit_rabi_potential(rb, -1, b_bot + bt) -
                       zeeman::breit_rabi_potential(rb, -1, b_bot);
    CHECK(std::abs(dv0 / dvm) == Approx(r4).epsilon(0.05));
    CHECK(dv0 < 0.0);  // anti-trapping
    CHECK(dvm > 0.0);  // trapping
  }

  // quadratic-order expansion of V(0): linear-in-B_trap within O(b^2)
  const double bt = 0.02 * b_bot;
  const double exact = zeeman::breit_rabi_potential(rb, 0, b_bot + bt) -
                       zeeman::breit_rabi_potential(rb, 0, b_bot);
  const double linear = -r4 * std::abs(rb.g_f) * rb.mu_b * bt;
  CHECK(exact == Approx(linear).epsilon(0.02));
}

TEST_CASE("sharp-resonance condition") {
  // paper margin: sides 1.0e5 vs 8.1e3 in (2 pi hbar Hz)^2
  const auto c = zeeman::sharp_resonance_check(rb, mu318, angular(90.0));
  const double unit = consts::hbar * consts::two_pi;  // (2 pi hbar Hz)
  CHECK(c.lhs / (unit * unit) == Approx(318.0 * 318.0).epsilon(1e-12));
  CHECK(c.rhs / (unit * unit) == Approx(8100.0).epsilon(1e-12));
  CHECK(c.ratio == Approx(318.0 * 318.0 / 8100.0).epsilon(1e-12));
  CHECK(c.pass);

  CHECK_FALSE(zeeman::sharp_resonance_check(rb, 0.0, angular(90.0)).pass);
  CHECK(zeeman::sharp_resonance_check(rb, 0.0, angular(90.0)).ratio == 0.0);

  const auto inf = zeeman::sharp_resonance_check(rb, mu318, 0.0);
  CHECK(std::isinf(inf.ratio));
  CHECK(inf.pass);

  const auto eq =
      zeeman::sharp_resonance_check(rb, consts::hbar * angular(318.0), angular(318.0));
  CHECK(eq.ratio == Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(eq.pass);
}

TEST_CASE("state-selectivity condition") {
  const auto c = zeeman::state_selectivity_check(rb, 4 * gauss, mu318);
  CHECK(c.ratio == Approx(7.2345407165148627).epsilon(1e-12));
  CHECK(c.pass);
  CHECK_FALSE(zeeman::state_selectivity_check(rb, 0.0, mu318).pass);
  CHECK(zeeman::state_selectivity_check(rb, 0.0, mu318).ratio == 0.0);
  const auto doubled = zeeman::state_selectivity_check(rb, 8 * gauss, mu318);
  CHECK(doubled.ratio == Approx(4.0 * c.ratio).epsilon(1e-14));
}

TEST_CASE("resonance amplitude") {
  CHECK(zeeman::resonance_amplitude(angular(90.0), 0.0) == 1.0);
  CHECK(zeeman::resonance_amplitude(angular(90.0), angular(90.0)) ==
        Approx(0.5).epsilon(1e-15));
  CHECK(zeeman::resonance_amplitude(angular(90.0), -angular(318.0)) ==
        Approx(0.074159525379037574).epsilon(1e-12));
  for (double det : {-500.0, -10.0, 0.0, 3.0, 777.0}) {
    const double a = zeeman::resonance_amplitude(angular(90.0), angular(det));
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(a == zeeman::resonance_amplitude(angular(90.0), -angular(det)));
  }
}

TEST_CASE("species invariants and file round trip") {
  SpeciesConstants s = rb;
  CHECK_NOTHROW(s.validate());
  CHECK(s.g_f < 0.0);
  CHECK(std::abs(s.g_f) == Approx(0.5).epsilon(0.01));
  s.scattering_length[0][1] = 1e-9;  // break symmetry
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  const char* path = "test_species.tmp";
  rb.save_file(path);
  const SpeciesConstants back = SpeciesConstants::load_file(path);
  CHECK(back.mass == rb.mass);
  CHECK(back.a_hfs == rb.a_hfs);
  CHECK(back.g_f == rb.g_f);
  CHECK(back.scattering_length[2][2] == rb.scattering_length[2][2]);
  std::remove(path);
}
