#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "topojscc/tensor.hpp"

namespace topojscc {

// One persistence pair. birth/death carry the exact filtration values and
// birth_cell/death_cell the index of the cell that realizes each value:
// a pixel index for cubical diagrams, an encoded edge (u*B+v, u<=v) for Rips,
// -1 when no generator exists (capped essential deaths).
struct DiagramPoint {
  double birth = 0.0;
  double death = 0.0;
  int dim = 0;
  std::int64_t birth_cell = -1;
  std::int64_t death_cell = -1;
  bool essential = false;

  double persistence() const { return birth > death ? birth - death : death - birth; }
};

struct PersistenceDiagram {
  std::vector<DiagramPoint> points;

  PersistenceDiagram restrict_dim(int dim) const {
    PersistenceDiagram d;
    for (const auto& p : points)
      if (p.dim == dim) d.points.push_back(p);
    return d;
  }

  std::size_t count_dim(int dim) const {
    std::size_t n = 0;
    for (const auto& p : points) n += (p.dim == dim);
    return n;
  }
};

// Canonical order: keeps outputs byte-stable across runs.
inline void sort_diagram(PersistenceDiagram& d) {
  std::sort(d.points.begin(), d.points.end(), [](const DiagramPoint& a, const DiagramPoint& b) {
    if (a.dim != b.dim) return a.dim < b.dim;
    if (a.birth != b.birth) return a.birth > b.birth;
    if (a.death != b.death) return a.death > b.death;
    if (a.birth_cell != b.birth_cell) return a.birth_cell < b.birth_cell;
    return a.death_cell < b.death_cell;
  });
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_diagram_csv(std::ostream& os, const PersistenceDiagram& d) {
  os << "dim,birth,death,essential,birth_cell,death_cell\n";
  for (const auto& p : d.points) {
    os << p.dim << ',' << format_double(p.birth) << ',' << format_double(p.death) << ','
       << (p.essential ? 1 : 0) << ',' << p.birth_cell << ',' << p.death_cell << '\n';
  }
}

inline PersistenceDiagram read_diagram_csv(std::istream& is) {
  PersistenceDiagram d;
  std::string line;
  if (!std::getline(is, line)) throw Error("diagram csv: empty stream");
  if (line.rfind("dim,birth,death", 0) != 0) throw Error("diagram csv: bad header: " + line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    DiagramPoint p;
    auto next = [&]() -> std::string {
      if (!std::getline(ss, field, ',')) throw Error("diagram csv: short row: " + line);
      return field;
    };
    p.dim = std::stoi(next());
    p.birth = std::stod(next());
    p.death = std::stod(next());
    p.essential = std::stoi(next()) != 0;
    p.birth_cell = std::stoll(next());
    p.death_cell = std::stoll(next());
    d.points.push_back(p);
  }
  return d;
}

}  // namespace topojscc
