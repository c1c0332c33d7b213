#include "sgpe/species.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sgpe/constants.hpp"

namespace sgpe {

SpeciesConstants::SpeciesConstants()
    : mu_b(consts::mu_bohr), hbar(consts::hbar), k_b(consts::k_boltzmann) {}

double SpeciesConstants::coupling(int c, int cp) const {
  return 4.0 * consts::pi * hbar * hbar * scattering_length[c][cp] / mass;
}

void SpeciesConstants::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("species: mass must be > 0");
  if (!(a_hfs > 0.0)) throw std::invalid_argument("species: a_hfs must be > 0");
  if (!(mu_b > 0.0)) throw std::invalid_argument("species: mu_b must be > 0");
  for (int c = 0; c < 3; ++c)
    for (int cp = 0; cp < 3; ++cp)
      if (scattering_length[c][cp] != scattering_length[cp][c])
        throw std::invalid_argument("species: scattering-length matrix must be symmetric");
}

SpeciesConstants SpeciesConstants::rubidium87() {
  SpeciesConstants s;
  s.name = "Rb87_F1";
  s.mass = 1.4431606e-25;                       // kg
  s.a_hfs = consts::planck * 3.417341305452145e9; // J
  s.g_j = 2.00233113;
  s.g_i = -0.0009951414;
  s.g_f = -s.g_j / 4.0 + 1.25 * s.g_i;          // -0.50182671 for F=1
  const double a = 100.4 * consts::bohr_radius; // common value for all channels
  for (auto& row : s.scattering_length) row.fill(a);
  return s;
}

namespace {

std::map<std::string, std::string> parse_keyvalue(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("species: cannot open '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string v) {
      const char* ws = " \t\r";
      v.erase(0, v.find_first_not_of(ws));
      auto last = v.find_last_not_of(ws);
      v.erase(last == std::string::npos ? 0 : last + 1);
      return v;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

double need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("species: missing key '" + key + "'");
  return std::stod(it->second);
}

} // namespace

SpeciesConstants SpeciesConstants::load_file(const std::string& path) {
  auto kv = parse_keyvalue(path);
  SpeciesConstants s;
  if (auto it = kv.find("name"); it != kv.end()) s.name = it->second;
  s.mass = need(kv, "mass_kg");
  s.a_hfs = need(kv, "ahfs_joule");
  s.g_i = need(kv, "g_i");
  s.g_j = need(kv, "g_j");
  s.g_f = need(kv, "g_f");
  if (kv.count("scattering_length_m")) {
    const double a = need(kv, "scattering_length_m");
    for (auto& row : s.scattering_length) row.fill(a);
  }
  static const char* mf_tag[3] = {"m1", "0", "p1"};
  for (int c = 0; c < 3; ++c)
    for (int cp = 0; cp < 3; ++cp) {
      std::string key = std::string("scattering_lengths_m[") + mf_tag[c] + "][" + mf_tag[cp] + "]";
      if (kv.count(key)) s.scattering_length[c][cp] = need(kv, key);
    }
  s.validate();
  return s;
}

void SpeciesConstants::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("species: cannot write '" + path + "'");
  out.precision(17);
  out << "# species constants (SI)\n";
  out << "name = " << name << "\n";
  out << "mass_kg = " << mass << "\n";
  out << "ahfs_joule = " << a_hfs << "\n";
  out << "g_i = " << g_i << "\n";
  out << "g_j = " << g_j << "\n";
  out << "g_f = " << g_f << "\n";
  static const char* mf_tag[3] = {"m1", "0", "p1"};
  for (int c = 0; c < 3; ++c)
    for (int cp = 0; cp < 3; ++cp)
      out << "scattering_lengths_m[" << mf_tag[c] << "][" << mf_tag[cp]
          << "] = " << scattering_length[c][cp] << "\n";
}

} // namespace sgpe
