#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "sgpe/grid.hpp"

// Self-describing binary snapshot container: 8-byte magic, little-endian
// uint64 header length, JSON header (grid metadata, time, component label,
// units, dtype), then the raw complex payload.
namespace sgpe {

struct SnapshotMeta {
  double time = 0.0;
  std::string label;          // e.g. "psi_m-1"
  std::string units = "m^-3/2";
  nlohmann::json extra;       // free-form (phase, norms, parameters)
};

void save_field(const std::string& path, const ComplexField& field,
                const SnapshotMeta& meta, bool single_precision = false);

struct LoadedField {
  std::shared_ptr<const Grid> grid;
  ComplexField field;
  SnapshotMeta meta;
};

LoadedField load_field(const std::string& path);

nlohmann::json gridspec_to_json(const GridSpec& spec);
GridSpec gridspec_from_json(const nlohmann::json& j);

// CSV export: the full (rho, z) density matrix and 1D cuts along each axis.
void write_density_matrix_csv(const std::string& path, const ComplexField& field);
void write_axis_cuts_csv(const std::string& path, const ComplexField& field);

} // namespace sgpe
