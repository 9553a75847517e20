#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "topojscc/cubical.hpp"  // xor_column
#include "topojscc/diagram.hpp"
#include "topojscc/tensor.hpp"

namespace topojscc {

// Finite point cloud in R^d with the Euclidean metric.
using PointCloud = std::vector<std::vector<double>>;

struct DistanceMatrix {
  int n = 0;
  std::vector<double> d;  // row-major n x n
  double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
};

// Encoding of generator cells in Rips diagrams: vertex v -> v*B+v,
// edge (u,v) with u<v -> u*B+v, none -> -1.
inline std::int64_t encode_rips_cell(int u, int v, int b) {
  if (u > v) std::swap(u, v);
  return static_cast<std::int64_t>(u) * b + v;
}
inline std::pair<int, int> decode_rips_cell(std::int64_t code, int b) {
  return {static_cast<int>(code / b), static_cast<int>(code % b)};
}

inline DistanceMatrix pairwise_distances(const PointCloud& cloud) {
  if (cloud.size() < 2) throw Error("rips: point cloud needs at least 2 points");
  const int n = static_cast<int>(cloud.size());
  const std::size_t dim = cloud[0].size();
  for (const auto& p : cloud)
    if (p.size() != dim) throw Error("rips: point dimension mismatch");
  DistanceMatrix m;
  m.n = n;
  m.d.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = cloud[i][k] - cloud[j][k];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      m.d[static_cast<std::size_t>(i) * n + j] = dist;
      m.d[static_cast<std::size_t>(j) * n + i] = dist;
    }
  }
  return m;
}

// Default scale cap: the cloud diameter, so the complex becomes complete at
// the top of the filtration and dim-1 classes all die.
inline double default_eps_max(const DistanceMatrix& m) {
  double mx = 0.0;
  for (double v : m.d) mx = std::max(mx, v);
  return mx;
}

namespace detail {

struct RipsEdge {
  double len;
  int u, v;
  bool operator<(const RipsEdge& o) const {
    if (len != o.len) return len < o.len;
    if (u != o.u) return u < o.u;
    return v < o.v;
  }
};

}  // namespace detail

// Vietoris-Rips persistence (dims 0 and 1) of a distance matrix. Dim 0 is the
// Kruskal sweep: births at 0, deaths at MST edge lengths, one essential class
// per remaining component capped at eps_max. Dim 1 reduces the triangle/edge
// boundary matrix over Z/2, a simplex entering at its longest edge; simplices
// longer than eps_max are excluded. Generator edges are recorded for every
// coordinate; zero-persistence non-essential pairs are dropped.
inline PersistenceDiagram rips_diagram(const DistanceMatrix& m, int max_dim, double eps_max) {
  if (eps_max <= 0.0) throw Error("rips: eps_max must be positive");
  if (max_dim < 0 || max_dim > 1) throw Error("rips: max_dim must be 0 or 1");
  const int n = m.n;
  if (n < 2) throw Error("rips: distance matrix needs at least 2 points");
  PersistenceDiagram out;

  std::vector<detail::RipsEdge> edges;
  edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (m.at(i, j) <= eps_max) edges.push_back({m.at(i, j), i, j});
  std::sort(edges.begin(), edges.end());

  // dim 0: union-find over the sorted edges. All births are 0; on a merge the
  // component with the smaller minimal vertex is the elder and survives.
  std::vector<int> parent(n), comp_min(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::iota(comp_min.begin(), comp_min.end(), 0);
  auto find = [&](int x) {
    int root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const int nx = parent[x];
      parent[x] = root;
      x = nx;
    }
    return root;
  };
  std::vector<char> edge_in_mst(edges.size(), 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    int ra = find(edges[e].u), rb = find(edges[e].v);
    if (ra == rb) continue;
    edge_in_mst[e] = 1;
    if (comp_min[ra] > comp_min[rb]) std::swap(ra, rb);  // ra elder
    if (edges[e].len != 0.0) {
      DiagramPoint pt;
      pt.birth = 0.0;
      pt.death = edges[e].len;
      pt.dim = 0;
      pt.birth_cell = encode_rips_cell(comp_min[rb], comp_min[rb], n);
      pt.death_cell = encode_rips_cell(edges[e].u, edges[e].v, n);
      out.points.push_back(pt);
    }
    parent[rb] = ra;
  }
  for (int v = 0; v < n; ++v) {
    if (find(v) != v) continue;
    DiagramPoint pt;
    pt.birth = 0.0;
    pt.death = eps_max;
    pt.dim = 0;
    pt.birth_cell = encode_rips_cell(comp_min[v], comp_min[v], n);
    pt.death_cell = -1;
    pt.essential = true;
    out.points.push_back(pt);
  }

  if (max_dim >= 1) {
    const int ne = static_cast<int>(edges.size());
    std::vector<std::int64_t> edge_code(ne);
    for (int e = 0; e < ne; ++e) edge_code[e] = encode_rips_cell(edges[e].u, edges[e].v, n);
    // position of each edge (u,v) in the sorted order
    std::vector<int> pos_of_pair(static_cast<std::size_t>(n) * n, -1);
    for (int e = 0; e < ne; ++e) pos_of_pair[static_cast<std::size_t>(edges[e].u) * n + edges[e].v] = e;

    struct Tri {
      double val;
      int a, b, c;     // vertices, a<b<c
      int longest;     // edge position realizing val (lex-min among maxima)
    };
    std::vector<Tri> tris;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const double dab = m.at(a, b);
        if (dab > eps_max) continue;
        for (int c = b + 1; c < n; ++c) {
          const double dac = m.at(a, c), dbc = m.at(b, c);
          if (dac > eps_max || dbc > eps_max) continue;
          const double val = std::max(dab, std::max(dac, dbc));
          int le;  // lex-min edge among those realizing the max
          if (dab == val) le = pos_of_pair[static_cast<std::size_t>(a) * n + b];
          else if (dac == val) le = pos_of_pair[static_cast<std::size_t>(a) * n + c];
          else le = pos_of_pair[static_cast<std::size_t>(b) * n + c];
          tris.push_back({val, a, b, c, le});
        }
      }
    std::sort(tris.begin(), tris.end(), [](const Tri& x, const Tri& y) {
      if (x.val != y.val) return x.val < y.val;
      if (x.a != y.a) return x.a < y.a;
      if (x.b != y.b) return x.b < y.b;
      return x.c < y.c;
    });

    std::vector<int> low_owner(ne, -1);
    std::vector<std::vector<int>> cols(tris.size());
    std::vector<char> edge_killed(ne, 0);
    for (std::size_t t = 0; t < tris.size(); ++t) {
      const Tri& tr = tris[t];
      std::vector<int>& col = cols[t];
      col = {pos_of_pair[static_cast<std::size_t>(tr.a) * n + tr.b],
             pos_of_pair[static_cast<std::size_t>(tr.a) * n + tr.c],
             pos_of_pair[static_cast<std::size_t>(tr.b) * n + tr.c]};
      std::sort(col.begin(), col.end());
      while (!col.empty() && low_owner[col.back()] >= 0)
        detail::xor_column(col, cols[low_owner[col.back()]]);
      if (col.empty()) continue;  // cycle of triangles: kills nothing
      const int low = col.back();
      low_owner[low] = static_cast<int>(t);
      edge_killed[low] = 1;
      const double birth = edges[low].len;
      if (birth != tr.val) {
        DiagramPoint pt;
        pt.birth = birth;
        pt.death = tr.val;
        pt.dim = 1;
        pt.birth_cell = edge_code[low];
        pt.death_cell = edge_code[tr.longest];
        out.points.push_back(pt);
      }
    }
    // positive edges never killed by a triangle are essential 1-cycles
    for (int e = 0; e < ne; ++e) {
      if (edge_in_mst[e] || edge_killed[e]) continue;
      DiagramPoint pt;
      pt.birth = edges[e].len;
      pt.death = eps_max;
      pt.dim = 1;
      pt.birth_cell = edge_code[e];
      pt.death_cell = -1;
      pt.essential = true;
      out.points.push_back(pt);
    }
  }

  sort_diagram(out);
  return out;
}

inline PersistenceDiagram rips_diagram(const PointCloud& cloud, int max_dim, double eps_max) {
  return rips_diagram(pairwise_distances(cloud), max_dim, eps_max);
}

}  // namespace topojscc
