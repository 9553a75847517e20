#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "topojscc/diagram.hpp"
#include "topojscc/tensor.hpp"

namespace topojscc {

// Superlevel filtration of an image: pixels sorted by descending intensity,
// ties broken by row-major index so the sweep order is a strict total order.
struct CubicalFiltration {
  int h = 0, w = 0;
  std::vector<double> values;  // row-major pixel intensities
  std::vector<int> order;      // pixel indices, descending intensity
  std::vector<int> rank;       // rank[pixel] = position in order
};

namespace detail {

inline void image_dims(const Tensor& image, int& h, int& w) {
  if (image.shape.size() == 2) {
    h = image.shape[0];
    w = image.shape[1];
  } else if (image.shape.size() == 3 && image.shape[0] == 1) {
    h = image.shape[1];
    w = image.shape[2];
  } else {
    throw Error("cubical: image must be {H,W} or {1,H,W}, got " + shape_str(image.shape));
  }
}

inline void validate_image(const Tensor& image, int& h, int& w) {
  if (image.data.empty()) throw Error("cubical: empty image");
  image_dims(image, h, w);
  if (h < 2 || w < 2) throw Error("cubical: image must be at least 2x2");
  for (double v : image.data)
    if (!(v >= 0.0 && v <= 1.0)) throw Error("cubical: pixel value outside [0,1]");
}

}  // namespace detail

inline CubicalFiltration superlevel_order(const Tensor& image) {
  CubicalFiltration f;
  detail::validate_image(image, f.h, f.w);
  f.values = image.data;
  f.order.resize(f.values.size());
  std::iota(f.order.begin(), f.order.end(), 0);
  std::stable_sort(f.order.begin(), f.order.end(),
                   [&](int a, int b) { return f.values[a] > f.values[b]; });
  f.rank.assign(f.values.size(), 0);
  for (int i = 0; i < static_cast<int>(f.order.size()); ++i) f.rank[f.order[i]] = i;
  return f;
}

namespace detail {

struct PixelUnionFind {
  std::vector<int> parent, size, birth;  // birth: pixel index of the oldest member
  explicit PixelUnionFind(int n) : parent(n, -1), size(n, 1), birth(n, -1) {}
  void activate(int p) {
    parent[p] = p;
    birth[p] = p;
  }
  bool active(int p) const { return parent[p] >= 0; }
  int find(int p) {
    int root = p;
    while (parent[root] != root) root = parent[root];
    while (parent[p] != root) {
      const int next = parent[p];
      parent[p] = root;
      p = next;
    }
    return root;
  }
};

// Symmetric difference of two ascending index lists (Z/2 column addition).
inline void xor_column(std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) out.push_back(a[i++]);
    else if (b[j] < a[i]) out.push_back(b[j++]);
    else { ++i; ++j; }
  }
  out.insert(out.end(), a.begin() + i, a.end());
  out.insert(out.end(), b.begin() + j, b.end());
  a.swap(out);
}

}  // namespace detail

// Persistence diagram (dims 0 and 1) of the superlevel upper-star filtration.
// Dim 0 sweeps pixels by descending intensity with 8-connectivity and the
// elder rule; dim 1 reduces the square/edge boundary matrix, where every face
// enters at the max intensity over its incident pixels. Each birth/death maps
// to the single pixel realizing its value, which is what makes the Wasserstein
// loss differentiable w.r.t. pixels. Non-essential zero-persistence pairs are
// dropped; the one essential component is capped at the image minimum.
inline PersistenceDiagram cubical_diagram(const Tensor& image, int max_dim) {
  if (max_dim < 0 || max_dim > 1) throw Error("cubical: max_dim must be 0 or 1");
  const CubicalFiltration f = superlevel_order(image);
  const int h = f.h, w = f.w;
  const int n = h * w;
  PersistenceDiagram out;

  // dim 0
  detail::PixelUnionFind uf(n);
  static const int kOff[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  for (int pos = 0; pos < n; ++pos) {
    const int p = f.order[pos];
    const int pr = p / w, pc = p % w;
    uf.activate(p);
    for (const auto& d : kOff) {
      const int qr = pr + d[0], qc = pc + d[1];
      if (qr < 0 || qr >= h || qc < 0 || qc >= w) continue;
      const int q = qr * w + qc;
      if (!uf.active(q)) continue;
      int ra = uf.find(p), rb = uf.find(q);
      if (ra == rb) continue;
      // elder rule: the component with the older (lower-rank) birth survives
      if (f.rank[uf.birth[ra]] > f.rank[uf.birth[rb]]) std::swap(ra, rb);
      const int young_birth = uf.birth[rb];
      if (f.values[young_birth] != f.values[p]) {
        DiagramPoint pt;
        pt.birth = f.values[young_birth];
        pt.death = f.values[p];
        pt.dim = 0;
        pt.birth_cell = young_birth;
        pt.death_cell = p;
        out.points.push_back(pt);
      }
      if (uf.size[ra] < uf.size[rb]) {
        uf.parent[ra] = rb;
        uf.size[rb] += uf.size[ra];
        uf.birth[rb] = uf.birth[ra];
      } else {
        uf.parent[rb] = ra;
        uf.size[ra] += uf.size[rb];
      }
    }
  }
  {
    const int root = uf.find(f.order[0]);
    const int last = f.order.back();
    DiagramPoint pt;
    pt.birth = f.values[uf.birth[root]];
    pt.death = f.values[last];
    pt.dim = 0;
    pt.birth_cell = uf.birth[root];
    pt.death_cell = last;
    pt.essential = true;
    out.points.push_back(pt);
  }

  if (max_dim >= 1) {
    // Edges of the (h+1)x(w+1) vertex lattice. An edge enters at the min rank
    // (max intensity) over its incident pixels.
    const int n_hedge = (h + 1) * w;
    const int n_edge = n_hedge + h * (w + 1);
    std::vector<int> edge_det(n_edge);  // pixel whose intensity the edge carries
    auto consider = [&](int pix, int& best) {
      if (best < 0 || f.rank[pix] < f.rank[best]) best = pix;
    };
    for (int i = 0; i <= h; ++i)
      for (int j = 0; j < w; ++j) {
        int best = -1;
        if (i - 1 >= 0) consider((i - 1) * w + j, best);
        if (i < h) consider(i * w + j, best);
        edge_det[i * w + j] = best;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j <= w; ++j) {
        int best = -1;
        if (j - 1 >= 0) consider(i * w + (j - 1), best);
        if (j < w) consider(i * w + j, best);
        edge_det[n_hedge + i * (w + 1) + j] = best;
      }
    std::vector<int> edge_order(n_edge);
    std::iota(edge_order.begin(), edge_order.end(), 0);
    std::sort(edge_order.begin(), edge_order.end(), [&](int a, int b) {
      const int ra = f.rank[edge_det[a]], rb = f.rank[edge_det[b]];
      if (ra != rb) return ra < rb;
      return a < b;
    });
    std::vector<int> edge_pos(n_edge);
    for (int i = 0; i < n_edge; ++i) edge_pos[edge_order[i]] = i;

    // Reduce square columns (rows are edge positions); the standard algorithm
    // restricted to dimension 2, which yields exactly the dim-1 pairs.
    std::vector<int> low_owner(n_edge, -1);
    std::vector<std::vector<int>> cols(n);
    for (int pos = 0; pos < n; ++pos) {
      const int p = f.order[pos];
      const int r = p / w, c = p % w;
      std::vector<int>& col = cols[pos];
      col = {edge_pos[r * w + c],                       // top
             edge_pos[(r + 1) * w + c],                 // bottom
             edge_pos[n_hedge + r * (w + 1) + c],       // left
             edge_pos[n_hedge + r * (w + 1) + c + 1]};  // right
      std::sort(col.begin(), col.end());
      while (!col.empty() && low_owner[col.back()] >= 0)
        detail::xor_column(col, cols[low_owner[col.back()]]);
      if (col.empty())
        throw Error("cubical: internal error: degenerate square column");
      const int low_edge = edge_order[col.back()];
      low_owner[col.back()] = pos;
      const double birth = f.values[edge_det[low_edge]];
      const double death = f.values[p];
      if (birth != death) {
        DiagramPoint pt;
        pt.birth = birth;
        pt.death = death;
        pt.dim = 1;
        pt.birth_cell = edge_det[low_edge];
        pt.death_cell = p;
        out.points.push_back(pt);
      }
    }
  }

  sort_diagram(out);
  return out;
}

// Number of features alive at threshold tau under the superlevel convention:
// a pair (b, d) with b >= d is alive for d < tau <= b; essential classes stay
// alive for every tau <= b.
inline std::pair<int, int> betti_at(const PersistenceDiagram& d, double tau) {
  int b0 = 0, b1 = 0;
  for (const auto& p : d.points) {
    const bool alive = p.birth >= tau && (p.essential || p.death < tau);
    if (!alive) continue;
    if (p.dim == 0) ++b0;
    else if (p.dim == 1) ++b1;
  }
  return {b0, b1};
}

// Snap intensities to a uniform grid of `levels` values in [0,1]; used by the
// evaluation path so metrics are computed on a fixed threshold sequence.
inline Tensor snap_levels(const Tensor& image, int levels) {
  if (levels < 2) throw Error("snap_levels: need at least 2 levels");
  Tensor out = image;
  const double s = static_cast<double>(levels - 1);
  for (double& v : out.data) v = std::floor(v * s + 0.5) / s;
  return out;
}

}  // namespace topojscc
