#pragma once

// Physical parameters of a magnet-spring chain catheter, unit conventions and
// validation. Every quantity stored here is SI (m, T, rad, N*m/rad). User-facing
// units (mm, mT, deg) are converted in load_spec() and nowhere else.

#include "magchain/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace magchain {

inline constexpr double kMu0 = 4.0 * std::numbers::pi * 1e-7;  // N/A^2
inline constexpr int kSchemaVersion = 1;

namespace units {
inline constexpr double from_mm(double mm) { return mm / 1000.0; }
inline constexpr double from_mT(double mT) { return mT / 1000.0; }
inline constexpr double from_deg(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double to_mm(double m) { return m * 1000.0; }
inline constexpr double to_mT(double T) { return T * 1000.0; }
inline constexpr double to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }
}  // namespace units

struct MagnetSpec {
  double remanence = 0.0;  // B_r [T]
  double diameter = 0.0;   // d_m [m]
  double length = 0.0;     // l_m [m]

  double volume() const { return std::numbers::pi * (diameter / 2.0) * (diameter / 2.0) * length; }
  // ||m|| = B_r V_m / mu0 [A*m^2]
  double dipole_moment() const { return remanence * volume() / kMu0; }

  bool operator==(const MagnetSpec&) const = default;
};

struct SpringSpec {
  int index = 0;                               // 1 = distal tip
  double free_length = 0.0;                    // l_s [m]
  std::optional<double> bending_stiffness;     // k_b [N*m/rad]
  std::optional<double> compression_stiffness; // k_c [N/m]
  double design_angle = 0.0;                   // alpha_d [rad]
  double design_radius = 0.0;                  // r_d = l_s / alpha_d [m]

  bool operator==(const SpringSpec&) const = default;
};

struct CatheterSpec {
  MagnetSpec magnet;
  std::vector<SpringSpec> springs;  // index 0 is segment 1 (distal)

  int segments() const { return static_cast<int>(springs.size()); }
  double spring_length() const { return springs.front().free_length; }
  double design_angle() const { return springs.front().design_angle; }
  double segment_pitch() const { return magnet.length + spring_length(); }

  // N (l_m + l_s): the free chain without the clamped base magnet.
  double free_length() const { return segments() * segment_pitch(); }
  // Free chain plus the base magnet; the normalizer for relative pivot errors.
  double total_length_including_base_magnet() const { return free_length() + magnet.length; }

  bool has_stiffnesses(int upto) const {
    if (upto > segments()) return false;
    for (int n = 0; n < upto; ++n)
      if (!springs[n].bending_stiffness) return false;
    return true;
  }
  bool has_stiffnesses() const { return has_stiffnesses(segments()); }

  // k_b of segment n (1-based).
  double stiffness(int n) const {
    if (n < 1 || n > segments()) throw DomainError("segment index " + std::to_string(n) + " out of range");
    const auto& k = springs[n - 1].bending_stiffness;
    if (!k) throw DomainError("bending stiffness of segment " + std::to_string(n) + " is unset");
    return *k;
  }

  std::vector<double> stiffnesses() const {
    std::vector<double> out;
    out.reserve(springs.size());
    for (int n = 1; n <= segments(); ++n) out.push_back(stiffness(n));
    return out;
  }

  CatheterSpec with_stiffnesses(const std::vector<double>& k) const;

  bool operator==(const CatheterSpec&) const = default;
};

struct EnvironmentSpec {
  double field = 0.0;             // ||B|| [T]
  double lumen_distance = 0.0;    // d_p [m]
  double target_direction = 0.0;  // gamma [rad]
  double steering_margin = 0.0;   // beta [rad]

  bool operator==(const EnvironmentSpec&) const = default;
};

struct Specs {
  CatheterSpec catheter;
  EnvironmentSpec environment;
};

// Builds N identical springs sharing l_s and alpha_d; r_d follows from l_s = r_d alpha_d.
inline CatheterSpec make_catheter(const MagnetSpec& magnet, int segments, double spring_length,
                                  double design_angle,
                                  const std::vector<double>& bending_stiffness = {}) {
  CatheterSpec spec;
  spec.magnet = magnet;
  for (int n = 1; n <= segments; ++n) {
    SpringSpec s;
    s.index = n;
    s.free_length = spring_length;
    s.design_angle = design_angle;
    s.design_radius = spring_length / design_angle;
    if (!bending_stiffness.empty()) s.bending_stiffness = bending_stiffness.at(n - 1);
    spec.springs.push_back(s);
  }
  return spec;
}

inline CatheterSpec CatheterSpec::with_stiffnesses(const std::vector<double>& k) const {
  if (static_cast<int>(k.size()) != segments())
    throw DomainError("stiffness vector has " + std::to_string(k.size()) + " entries, expected " +
                      std::to_string(segments()));
  CatheterSpec out = *this;
  for (int n = 0; n < segments(); ++n) out.springs[n].bending_stiffness = k[n];
  return out;
}

inline void validate(const MagnetSpec& m) {
  if (!(m.remanence > 0.0)) throw ValidationError("B_r > 0", "magnet remanence must be positive");
  if (!(m.diameter > 0.0)) throw ValidationError("d_m > 0", "magnet diameter must be positive");
  if (!(m.length > 0.0)) throw ValidationError("l_m > 0", "magnet length must be positive");
}

inline void validate(const CatheterSpec& spec) {
  validate(spec.magnet);
  if (spec.springs.empty()) throw ValidationError("N >= 1", "catheter needs at least one segment");
  const auto& first = spec.springs.front();
  for (int n = 0; n < spec.segments(); ++n) {
    const auto& s = spec.springs[n];
    const std::string tag = "spring " + std::to_string(n + 1);
    if (s.index != n + 1) throw ValidationError("index order", tag + " has index " + std::to_string(s.index));
    if (!(s.free_length > 0.0)) throw ValidationError("l_s > 0", tag + ": free length must be positive");
    if (!(s.design_angle > 0.0) || !(s.design_angle < 2.0 * std::numbers::pi))
      throw ValidationError("0 < alpha_d < 2pi", tag + ": design angle out of range");
    if (s.free_length != first.free_length || s.design_angle != first.design_angle)
      throw ValidationError("shared l_s and alpha_d", tag + ": all springs must share l_s and alpha_d");
    if (std::abs(s.design_radius * s.design_angle - s.free_length) > 1e-12 * s.free_length)
      throw ValidationError("l_s = r_d alpha_d", tag + ": design radius inconsistent with l_s / alpha_d");
    if (s.bending_stiffness && !(*s.bending_stiffness > 0.0))
      throw ValidationError("k_b > 0", tag + ": bending stiffness must be positive");
    if (s.compression_stiffness && !(*s.compression_stiffness > 0.0))
      throw ValidationError("k_c > 0", tag + ": compression stiffness must be positive");
  }
}

inline void validate(const EnvironmentSpec& env) {
  if (!(env.field > 0.0)) throw ValidationError("||B|| > 0", "field magnitude must be positive");
  if (!(env.lumen_distance > 0.0)) throw ValidationError("d_p > 0", "lumen-center distance must be positive");
  if (!(env.target_direction >= 0.0 && env.target_direction <= std::numbers::pi * (1.0 + 1e-15)))
    throw ValidationError("0 <= gamma <= pi", "target direction must lie in [0, 180] deg");
  if (!(env.steering_margin > 0.0 && env.steering_margin < std::numbers::pi / 2.0))
    throw ValidationError("0 < beta < pi/2", "steering margin must lie in (0, 90) deg");
}

// Default design point: N = 6, N52 magnets 1.5 x 2 mm, l_s = 3.14 mm,
// 40 mT, d_p = 80 mm, gamma = 180 deg, beta = 20 deg. Stiffnesses unset.
inline Specs default_spec() {
  MagnetSpec magnet{1.42, units::from_mm(1.5), units::from_mm(2.0)};
  Specs s;
  s.catheter = make_catheter(magnet, 6, units::from_mm(3.14), std::numbers::pi / 2.0);
  s.environment = EnvironmentSpec{units::from_mT(40.0), units::from_mm(80.0), std::numbers::pi,
                                  units::from_deg(20.0)};
  return s;
}

// --- config document -------------------------------------------------------
//
// Flat JSON object. "units" selects the key suffixes: "user" (default) reads
// mm / mT / deg, "SI" reads m / T / rad. Stiffness arrays are SI in both.
//
//   schema_version                 1 (required)
//   units                          "user" | "SI"
//   segments                       N (required)
//   magnet_remanence_T             (required)
//   magnet_diameter_{mm|m}         (required)
//   magnet_length_{mm|m}           (required)
//   spring_free_length_{mm|m}      (required)
//   spring_design_angle_{deg|rad}  default 90 deg
//   field_{mT|T}                   (required)
//   lumen_distance_{mm|m}          (required)
//   target_direction_{deg|rad}     default 180 deg
//   steering_margin_{deg|rad}      default 20 deg
//   bending_stiffness_Nm_per_rad   optional array of N
//   compression_stiffness_N_per_m  optional array of N

namespace detail {

struct KeyReader {
  const nlohmann::json& doc;
  std::set<std::string> seen;

  const nlohmann::json* find(const std::string& key) {
    seen.insert(key);
    auto it = doc.find(key);
    return it == doc.end() ? nullptr : &*it;
  }

  double number(const std::string& key) {
    const auto* v = find(key);
    if (!v) throw ConfigError(key, "required key is missing");
    if (!v->is_number()) throw ConfigError(key, "expected a number");
    return v->get<double>();
  }

  double number_or(const std::string& key, double fallback) {
    const auto* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(key, "expected a number");
    return v->get<double>();
  }

  std::optional<std::vector<double>> array(const std::string& key, std::size_t expected) {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) throw ConfigError(key, "expected an array");
    if (v->size() != expected)
      throw ConfigError(key, "expected " + std::to_string(expected) + " entries, got " + std::to_string(v->size()));
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) throw ConfigError(key + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }
};

}  // namespace detail

inline Specs load_spec_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config document must be a JSON object");
  detail::KeyReader keys{doc, {}};

  const auto* version = keys.find("schema_version");
  if (!version) throw ConfigError("schema_version", "required key is missing");
  if (!version->is_number_integer() || version->get<int>() != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");

  bool si = false;
  if (const auto* u = keys.find("units")) {
    if (!u->is_string() || (*u != "user" && *u != "SI")) throw ConfigError("units", R"(expected "user" or "SI")");
    si = (*u == "SI");
  }
  const auto len = [&](const std::string& stem) {
    return si ? keys.number(stem + "_m") : units::from_mm(keys.number(stem + "_mm"));
  };
  const auto* seg = keys.find("segments");
  if (!seg) throw ConfigError("segments", "required key is missing");
  if (!seg->is_number_integer()) throw ConfigError("segments", "expected an integer");
  const int segments = seg->get<int>();
  if (segments < 1) throw ValidationError("N >= 1", "segments must be at least 1");

  MagnetSpec magnet;
  magnet.remanence = keys.number("magnet_remanence_T");
  magnet.diameter = len("magnet_diameter");
  magnet.length = len("magnet_length");

  const double ls = len("spring_free_length");
  double alpha_d = 0.0;
  if (si)
    alpha_d = keys.number_or("spring_design_angle_rad", std::numbers::pi / 2.0);
  else
    alpha_d = units::from_deg(keys.number_or("spring_design_angle_deg", 90.0));
  if (!(alpha_d > 0.0)) throw ValidationError("alpha_d > 0", "design angle must be positive");

  EnvironmentSpec env;
  env.field = si ? keys.number("field_T") : units::from_mT(keys.number("field_mT"));
  env.lumen_distance = len("lumen_distance");
  env.target_direction = si ? keys.number_or("target_direction_rad", std::numbers::pi)
                            : units::from_deg(keys.number_or("target_direction_deg", 180.0));
  env.steering_margin = si ? keys.number_or("steering_margin_rad", units::from_deg(20.0))
                           : units::from_deg(keys.number_or("steering_margin_deg", 20.0));

  Specs out;
  out.catheter = make_catheter(magnet, segments, ls, alpha_d);
  if (auto kb = keys.array("bending_stiffness_Nm_per_rad", segments))
    for (int n = 0; n < segments; ++n) out.catheter.springs[n].bending_stiffness = (*kb)[n];
  if (auto kc = keys.array("compression_stiffness_N_per_m", segments))
    for (int n = 0; n < segments; ++n) out.catheter.springs[n].compression_stiffness = (*kc)[n];
  out.environment = env;

  for (const auto& [key, value] : doc.items())
    if (!keys.seen.contains(key)) throw ConfigError(key, "unknown key");

  validate(out.catheter);
  validate(out.environment);
  return out;
}

inline Specs load_spec(const std::string& document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("parse failure: ") + e.what());
  }
  return load_spec_json(doc);
}

inline Specs load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_spec(buf.str());
}

// SI-normalized document; load_spec() of the result reproduces the specs exactly.
inline nlohmann::json to_json(const Specs& specs) {
  const auto& c = specs.catheter;
  const auto& e = specs.environment;
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["units"] = "SI";
  doc["segments"] = c.segments();
  doc["magnet_remanence_T"] = c.magnet.remanence;
  doc["magnet_diameter_m"] = c.magnet.diameter;
  doc["magnet_length_m"] = c.magnet.length;
  doc["spring_free_length_m"] = c.spring_length();
  doc["spring_design_angle_rad"] = c.design_angle();
  doc["field_T"] = e.field;
  doc["lumen_distance_m"] = e.lumen_distance;
  doc["target_direction_rad"] = e.target_direction;
  doc["steering_margin_rad"] = e.steering_margin;
  if (c.has_stiffnesses()) doc["bending_stiffness_Nm_per_rad"] = c.stiffnesses();
  bool all_kc = true;
  for (const auto& s : c.springs) all_kc = all_kc && s.compression_stiffness.has_value();
  if (all_kc) {
    std::vector<double> kc;
    for (const auto& s : c.springs) kc.push_back(*s.compression_stiffness);
    doc["compression_stiffness_N_per_m"] = kc;
  }
  return doc;
}

inline std::string serialize_spec(const Specs& specs) { return to_json(specs).dump(2); }

}  // namespace magchain
