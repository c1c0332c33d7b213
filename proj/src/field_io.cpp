#include "sgpe/field_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sgpe {

namespace {
constexpr char kMagic[8] = {'S', 'G', 'P', 'E', 'F', 'L', 'D', '1'};
}

nlohmann::json gridspec_to_json(const GridSpec& spec) {
  nlohmann::json j;
  j["kind"] = spec.kind == GridKind::CylRZ ? "cyl_rz" : "cart3d";
  j["name"] = spec.name;
  if (spec.kind == GridKind::CylRZ) {
    j["r_max"] = spec.r_max;
    j["n_rho"] = spec.n_rho;
    j["z_half"] = spec.z_half;
    j["n_z"] = spec.n_z;
  } else {
    j["half"] = spec.half;
    j["n"] = spec.n;
  }
  return j;
}

GridSpec gridspec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "cyl_rz")
    return GridSpec::cyl(j.at("r_max").get<double>(), j.at("n_rho").get<int>(),
                         j.at("z_half").get<double>(), j.at("n_z").get<int>(),
                         j.value("name", ""));
  if (kind == "cart3d")
    return GridSpec::cart(j.at("half").get<std::array<double, 3>>(),
                          j.at("n").get<std::array<int, 3>>(), j.value("name", ""));
  throw std::runtime_error("field_io: unknown grid kind '" + kind + "'");
}

void save_field(const std::string& path, const ComplexField& field,
                const SnapshotMeta& meta, bool single_precision) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("field_io: cannot write '" + path + "'");
  nlohmann::json header;
  header["grid"] = gridspec_to_json(field.grid->spec());
  header["time"] = meta.time;
  header["label"] = meta.label;
  header["units"] = meta.units;
  header["dtype"] = single_precision ? "complex64" : "complex128";
  if (!meta.extra.is_null()) header["extra"] = meta.extra;
  const std::string htext = header.dump();
  const std::uint64_t hlen = htext.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), std::streamsize(hlen));
  if (single_precision) {
    std::vector<float> buf(2 * field.v.size());
    for (std::size_t i = 0; i < field.v.size(); ++i) {
      buf[2 * i] = float(field.v[i].real());
      buf[2 * i + 1] = float(field.v[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(field.v.data()),
              std::streamsize(field.v.size() * sizeof(cplx)));
  }
  if (!out) throw std::runtime_error("field_io: short write to '" + path + "'");
}

LoadedField load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("field_io: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("field_io: bad magic in '" + path + "'");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1u << 24)) throw std::runtime_error("field_io: bad header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), std::streamsize(hlen));
  const auto header = nlohmann::json::parse(htext);

  LoadedField lf;
  const GridSpec spec = gridspec_from_json(header.at("grid"));
  lf.grid = std::make_shared<Grid>(spec);
  lf.field = ComplexField(*lf.grid);
  lf.meta.time = header.value("time", 0.0);
  lf.meta.label = header.value("label", "");
  lf.meta.units = header.value("units", "");
  if (header.contains("extra")) lf.meta.extra = header.at("extra");
  const std::string dtype = header.value("dtype", "complex128");
  if (dtype == "complex128") {
    in.read(reinterpret_cast<char*>(lf.field.v.data()),
            std::streamsize(lf.field.v.size() * sizeof(cplx)));
  } else if (dtype == "complex64") {
    std::vector<float> buf(2 * lf.field.v.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
    for (std::size_t i = 0; i < lf.field.v.size(); ++i)
      lf.field.v[i] = cplx(buf[2 * i], buf[2 * i + 1]);
  } else {
    throw std::runtime_error("field_io: unknown dtype '" + dtype + "'");
  }
  if (!in) throw std::runtime_error("field_io: truncated payload in '" + path + "'");
  return lf;
}

void write_density_matrix_csv(const std::string& path, const ComplexField& field) {
  const Grid& g = *field.grid;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("field_io: cannot write '" + path + "'");
  out.precision(9);
  if (g.kind() == GridKind::CylRZ) {
    out << "# rows: rho (m), cols: z (m); |psi|^2 (m^-3)\n";
    out << "rho_z";
    for (int i = 0; i < g.n_z(); ++i) out << ',' << g.z(i);
    out << '\n';
    for (int j = 0; j < g.n_rho(); ++j) {
      out << g.rho(j);
      for (int i = 0; i < g.n_z(); ++i) out << ',' << std::norm(field.v[g.index_rz(j, i)]);
      out << '\n';
    }
  } else {
    // x-z slice through y = 0
    const auto& n = g.spec().n;
    const int iy = n[1] / 2;
    out << "# rows: x (m), cols: z (m); |psi|^2 at y=0 (m^-3)\n";
    out << "x_z";
    for (int iz = 0; iz < n[2]; ++iz) out << ',' << g.axis(2)[iz];
    out << '\n';
    for (int ix = 0; ix < n[0]; ++ix) {
      out << g.axis(0)[ix];
      for (int iz = 0; iz < n[2]; ++iz)
        out << ',' << std::norm(field.v[g.index3(ix, iy, iz)]);
      out << '\n';
    }
  }
}

void write_axis_cuts_csv(const std::string& path, const ComplexField& field) {
  const Grid& g = *field.grid;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("field_io: cannot write '" + path + "'");
  out.precision(9);
  if (g.kind() == GridKind::CylRZ) {
    const int iz0 = g.n_z() / 2;  // z = 0
    out << "axis,coordinate_m,density_m3\n";
    for (int j = 0; j < g.n_rho(); ++j)
      out << "rho," << g.rho(j) << ',' << std::norm(field.v[g.index_rz(j, iz0)]) << '\n';
    for (int i = 0; i < g.n_z(); ++i)
      out << "z," << g.z(i) << ',' << std::norm(field.v[g.index_rz(0, i)]) << '\n';
  } else {
    const auto& n = g.spec().n;
    out << "axis,coordinate_m,density_m3\n";
    for (int ix = 0; ix < n[0]; ++ix)
      out << "x," << g.axis(0)[ix] << ','
          << std::norm(field.v[g.index3(ix, n[1] / 2, n[2] / 2)]) << '\n';
    for (int iz = 0; iz < n[2]; ++iz)
      out << "z," << g.axis(2)[iz] << ','
          << std::norm(field.v[g.index3(n[0] / 2, n[1] / 2, iz)]) << '\n';
  }
}

} // namespace sgpe
