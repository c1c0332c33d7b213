#pragma once

#include "sgpe/constants.hpp"

// Conversions between experiment-friendly units (config files, reports) and
// the SI values used internally.  Frequencies in files are plain Hz (omega/2pi),
// fields are gauss, times are ms, velocities are um/s.
namespace sgpe::units {

inline constexpr double gauss = 1e-4;          // T
inline constexpr double milligauss = 1e-7;     // T
inline constexpr double gauss_per_mm = 0.1;    // T/m
inline constexpr double ms = 1e-3;             // s
inline constexpr double um = 1e-6;             // m
inline constexpr double um_per_s = 1e-6;       // m/s
inline constexpr double picokelvin = 1e-12;    // K

inline constexpr double angular(double f_hz) { return consts::two_pi * f_hz; }
inline constexpr double hz_of(double omega) { return omega / consts::two_pi; }

} // namespace sgpe::units
