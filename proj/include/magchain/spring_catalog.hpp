#pragma once

// Helical-spring bending/compression stiffness relations and catalog matching.

#include "magchain/csv.hpp"
#include "magchain/errors.hpp"
#include "magchain/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace magchain {

struct SpringGeometry {
  double wire_diameter = 0.0;     // d [m]
  double nominal_diameter = 0.0;  // D_n [m]
  int active_coils = 0;           // c
  double elastic_modulus = 0.0;   // E [Pa]
  double shear_modulus = 0.0;     // G [Pa]
  double poisson_ratio = 0.0;     // v

  double outer_diameter() const { return nominal_diameter + wire_diameter; }

  // G = E / (2 + 2v), D_n = D - d.
  static SpringGeometry from_outer(double wire, double outer, int coils, double E, double v) {
    return {wire, outer - wire, coils, E, E / (2.0 + 2.0 * v), v};
  }
};

inline void validate(const SpringGeometry& g) {
  if (!(g.wire_diameter > 0.0)) throw ValidationError("d > 0", "wire diameter must be positive");
  if (!(g.nominal_diameter > g.wire_diameter)) throw ValidationError("D_n > d", "nominal diameter must exceed wire diameter");
  if (g.active_coils < 1) throw ValidationError("c >= 1", "at least one active coil");
  if (!(g.elastic_modulus > 0.0)) throw ValidationError("E > 0", "elastic modulus must be positive");
  const double expected = g.elastic_modulus / (2.0 + 2.0 * g.poisson_ratio);
  if (std::abs(g.shear_modulus - expected) > 1e-12 * expected)
    throw ValidationError("G = E/(2+2v)", "shear modulus inconsistent with E and v");
}

// k_b = E d^4 / (32 c D_n) * 1 / (1 + E / 2G)
inline double kb_from_geometry(const SpringGeometry& g) {
  const double d2 = g.wire_diameter * g.wire_diameter;
  return g.elastic_modulus * d2 * d2 / (32.0 * g.active_coils * g.nominal_diameter) /
         (1.0 + g.elastic_modulus / (2.0 * g.shear_modulus));
}

// k_c = G d^4 / (8 c D_n^3)
inline double kc_from_geometry(const SpringGeometry& g) {
  const double d2 = g.wire_diameter * g.wire_diameter;
  const double D = g.nominal_diameter;
  return g.shear_modulus * d2 * d2 / (8.0 * g.active_coils * D * D * D);
}

// k_b = E D_n^2 / (2 (2G + E)) * k_c
inline double kb_from_kc(double kc, double nominal_diameter, double E, double G) {
  return E * nominal_diameter * nominal_diameter / (2.0 * (2.0 * G + E)) * kc;
}

// D_n implied by a measured (k_b, k_c) pair.
inline double implied_nominal_diameter(double kb, double kc, double E, double G) {
  return std::sqrt(kb * 2.0 * (2.0 * G + E) / (E * kc));
}

struct CatalogEntry {
  std::optional<SpringGeometry> geometry;  // absent for measured-only entries
  double kb = 0.0;                         // [N*m/rad]
  std::optional<double> kc;                // [N/m]

  static CatalogEntry from_geometry(const SpringGeometry& g) { return {g, kb_from_geometry(g), kc_from_geometry(g)}; }
};

struct CatalogGrid {
  std::vector<double> wire_diameters{units::from_mm(0.10), units::from_mm(0.15)};
  double outer_min = units::from_mm(1.0);
  double outer_max = units::from_mm(1.5);
  double outer_step = units::from_mm(0.05);
  int coils_min = 3;
  int coils_max = 7;
  double elastic_modulus = 200e9;
  double poisson_ratio = 0.3;
};

inline std::vector<CatalogEntry> generate_catalog(const CatalogGrid& grid = {}) {
  std::vector<CatalogEntry> out;
  const int steps = static_cast<int>(std::lround((grid.outer_max - grid.outer_min) / grid.outer_step));
  for (double d : grid.wire_diameters)
    for (int i = 0; i <= steps; ++i)
      for (int c = grid.coils_min; c <= grid.coils_max; ++c) {
        const double outer = grid.outer_min + i * grid.outer_step;
        const auto g = SpringGeometry::from_outer(d, outer, c, grid.elastic_modulus, grid.poisson_ratio);
        validate(g);
        out.push_back(CatalogEntry::from_geometry(g));
      }
  return out;
}

enum class MatchPolicy {
  nearest,     // each design spring independently; entries may repeat
  one_to_one,  // each entry used at most once, minimal total relative error
};

struct SpringMatch {
  int n = 0;
  double design = 0.0;
  int entry = -1;  // index into the catalog
  CatalogEntry selected;
  double relative_error = 0.0;  // e_kb = |k_b* - k_b| / k_b
};

namespace detail {

inline double relative_error(double selected, double design) { return std::abs(selected - design) / design; }

inline double wire_or_inf(const CatalogEntry& e) {
  return e.geometry ? e.geometry->wire_diameter : std::numeric_limits<double>::infinity();
}

// Rectangular assignment (rows <= cols), minimizing total cost.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost.front().size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

inline std::vector<SpringMatch> match_catalog(std::span<const double> design, const std::vector<CatalogEntry>& catalog,
                                              MatchPolicy policy = MatchPolicy::nearest) {
  if (catalog.empty()) throw DomainError("spring catalog is empty");
  std::vector<SpringMatch> out;
  if (policy == MatchPolicy::nearest) {
    for (std::size_t n = 0; n < design.size(); ++n) {
      int best = 0;
      for (int i = 1; i < static_cast<int>(catalog.size()); ++i) {
        const double ei = detail::relative_error(catalog[i].kb, design[n]);
        const double eb = detail::relative_error(catalog[best].kb, design[n]);
        if (ei < eb || (ei == eb && detail::wire_or_inf(catalog[i]) < detail::wire_or_inf(catalog[best]))) best = i;
      }
      out.push_back({static_cast<int>(n + 1), design[n], best, catalog[best],
                     detail::relative_error(catalog[best].kb, design[n])});
    }
    return out;
  }

  if (catalog.size() < design.size())
    throw DomainError("one-to-one matching needs at least as many catalog entries as springs");
  std::vector<std::vector<double>> cost(design.size(), std::vector<double>(catalog.size()));
  for (std::size_t n = 0; n < design.size(); ++n)
    for (std::size_t i = 0; i < catalog.size(); ++i) cost[n][i] = detail::relative_error(catalog[i].kb, design[n]);
  const auto assignment = detail::hungarian(cost);
  for (std::size_t n = 0; n < design.size(); ++n) {
    const int i = assignment[n];
    out.push_back({static_cast<int>(n + 1), design[n], i, catalog[i], cost[n][i]});
  }
  return out;
}

// --- CSV: d_mm,D_mm,c,kb_Nm_per_rad,kc_N_per_m -------------------------------
// Geometry cells may be left empty for measured-only entries. Geometry read
// from file uses the given material constants.

inline std::vector<CatalogEntry> read_catalog_csv(const std::string& path, double E = 200e9, double v = 0.3) {
  const auto table = csv::read_file(path);
  const int cd = table.column("d_mm"), cD = table.column("D_mm"), cc = table.column("c");
  const int ckb = table.column("kb_Nm_per_rad"), ckc = table.column("kc_N_per_m");
  if (cd < 0 || cD < 0 || cc < 0 || ckb < 0 || ckc < 0)
    throw ConfigError(path, "expected columns d_mm,D_mm,c,kb_Nm_per_rad,kc_N_per_m");
  std::vector<CatalogEntry> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto row = table.rows[r];
    row.resize(std::max<std::size_t>(row.size(), 5));
    const std::string where = path + ":row " + std::to_string(r + 1);
    CatalogEntry e;
    e.kb = csv::to_number(row[ckb], where);
    if (!(e.kb > 0.0)) throw ValidationError("k_b > 0", where + ": stiffness must be positive");
    if (!row[ckc].empty()) e.kc = csv::to_number(row[ckc], where);
    const bool has_geom = !row[cd].empty() || !row[cD].empty() || !row[cc].empty();
    if (has_geom) {
      const auto g = SpringGeometry::from_outer(units::from_mm(csv::to_number(row[cd], where)),
                                                units::from_mm(csv::to_number(row[cD], where)),
                                                static_cast<int>(csv::to_number(row[cc], where)), E, v);
      validate(g);
      e.geometry = g;
    }
    out.push_back(e);
  }
  if (out.empty()) throw ConfigError(path, "catalog has no entries");
  return out;
}

inline std::string catalog_csv(const std::vector<CatalogEntry>& entries) {
  std::ostringstream os;
  os << "# magchain-csv v1 spring_catalog\n";
  os << "d_mm,D_mm,c,kb_Nm_per_rad,kc_N_per_m\n";
  for (const auto& e : entries) {
    if (e.geometry)
      os << csv::fmt("%.4f", units::to_mm(e.geometry->wire_diameter)) << ','
         << csv::fmt("%.4f", units::to_mm(e.geometry->outer_diameter())) << ',' << e.geometry->active_coils;
    else
      os << ",,";
    os << ',' << csv::fmt("%.6e", e.kb) << ',' << (e.kc ? csv::fmt("%.6f", *e.kc) : std::string{}) << '\n';
  }
  return os.str();
}

inline std::string match_csv(const std::vector<SpringMatch>& matches) {
  std::ostringstream os;
  os << "# magchain-csv v1 spring_match\n";
  os << "n,k_b_design_Nm_per_rad,k_b_selected_Nm_per_rad,kc_selected_N_per_m,d_mm,D_mm,c,e_kb_pct\n";
  for (const auto& m : matches) {
    os << m.n << ',' << csv::fmt("%.6e", m.design) << ',' << csv::fmt("%.6e", m.selected.kb) << ','
       << (m.selected.kc ? csv::fmt("%.6f", *m.selected.kc) : std::string{}) << ',';
    if (m.selected.geometry)
      os << csv::fmt("%.4f", units::to_mm(m.selected.geometry->wire_diameter)) << ','
         << csv::fmt("%.4f", units::to_mm(m.selected.geometry->outer_diameter())) << ','
         << m.selected.geometry->active_coils;
    else
      os << ",,";
    os << ',' << csv::fmt("%.2f", 100.0 * m.relative_error) << '\n';
  }
  return os.str();
}

}  // namespace magchain
