#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "topojscc/cubical.hpp"
#include "topojscc/rips.hpp"
#include "topojscc/tensor.hpp"
#include "topojscc/wasserstein.hpp"

namespace topojscc {

// Result of a topological loss term: scalar value, its per-dimension split,
// and the cotangent routed back to the differentiated input. grad is nonzero
// only at coordinates referenced by some generator cell.
struct TopoLossResult {
  double value = 0.0;
  std::array<double, 2> per_dim{0.0, 0.0};
  Tensor grad;
  int degenerate_edges = 0;
};

struct LatentTopoLossResult {
  double value = 0.0;
  std::array<double, 2> per_dim{0.0, 0.0};
  std::vector<std::vector<double>> grad_s;       // d value / d S[i]
  std::vector<std::vector<double>> grad_stilde;  // d value / d S~[i]
  int degenerate_edges = 0;
};

// Sum over dims {0,1} of the 2-Wasserstein distance between superlevel
// cubical diagrams of x and xhat, differentiated w.r.t. xhat. Every diagram
// coordinate equals the intensity of one recorded pixel, so the matching
// subgradient scatters directly onto those pixels.
inline TopoLossResult image_topo_loss_from_diagram(const PersistenceDiagram& dx, const Tensor& xhat) {
  TopoLossResult res;
  res.grad = Tensor::zeros(xhat.shape);
  const PersistenceDiagram dxh = cubical_diagram(xhat, 1);
  for (int m = 0; m <= 1; ++m) {
    const PersistenceDiagram a = dx.restrict_dim(m);
    const PersistenceDiagram b = dxh.restrict_dim(m);
    const Matching match = wasserstein(a, b, 2.0);
    res.per_dim[m] = match.cost;
    const auto grads = wasserstein_grad(match, a, b);
    for (std::size_t j = 0; j < grads.size(); ++j) {
      const DiagramPoint& p = b.points[j];
      res.grad.data[static_cast<std::size_t>(p.birth_cell)] += grads[j][0];
      res.grad.data[static_cast<std::size_t>(p.death_cell)] += grads[j][1];
    }
  }
  res.value = res.per_dim[0] + res.per_dim[1];
  return res;
}

inline TopoLossResult image_topo_loss(const Tensor& x, const Tensor& xhat) {
  if (x.shape != xhat.shape)
    throw Error("image_topo_loss: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(xhat.shape));
  return image_topo_loss_from_diagram(cubical_diagram(x, 1), xhat);
}

namespace detail {

// Routes a gradient on one diagram coordinate through its generator edge
// length onto the two endpoint vectors.
inline void chain_edge(double g, std::int64_t cell, const PointCloud& cloud,
                       std::vector<std::vector<double>>& grad, int& degenerate) {
  if (cell < 0) return;  // capped essential coordinate, treated as constant
  const int b = static_cast<int>(cloud.size());
  const auto [u, v] = decode_rips_cell(cell, b);
  if (u == v) return;  // vertex generator: birth fixed at 0
  double len = 0.0;
  const std::size_t dim = cloud[u].size();
  for (std::size_t k = 0; k < dim; ++k) {
    const double d = cloud[u][k] - cloud[v][k];
    len += d * d;
  }
  len = std::sqrt(len);
  if (len == 0.0) {
    ++degenerate;  // zero-length generator: no direction, contribution dropped
    return;
  }
  for (std::size_t k = 0; k < dim; ++k) {
    const double dir = (cloud[u][k] - cloud[v][k]) / len;
    grad[u][k] += g * dir;
    grad[v][k] -= g * dir;
  }
}

}  // namespace detail

// Sum over dims {0,1} of the 2-Wasserstein distance between Vietoris-Rips
// diagrams of the two latent clouds, sharing eps_max = max of the two cloud
// diameters. Gradients are returned for both clouds (both depend on the
// encoder); eps_max and capped essential deaths are held constant.
inline LatentTopoLossResult latent_topo_loss(const PointCloud& s, const PointCloud& stilde) {
  if (s.size() != stilde.size())
    throw Error("latent_topo_loss: clouds differ in size");
  if (s.size() < 2) throw Error("latent_topo_loss: need at least 2 points");
  if (s[0].size() != stilde[0].size())
    throw Error("latent_topo_loss: clouds differ in dimension");
  LatentTopoLossResult res;
  const int b = static_cast<int>(s.size());
  const std::size_t dim = s[0].size();
  res.grad_s.assign(b, std::vector<double>(dim, 0.0));
  res.grad_stilde.assign(b, std::vector<double>(dim, 0.0));

  const DistanceMatrix ms = pairwise_distances(s);
  const DistanceMatrix mst = pairwise_distances(stilde);
  double eps = std::max(default_eps_max(ms), default_eps_max(mst));
  if (eps == 0.0) return res;  // both clouds fully degenerate: identical diagrams
  const PersistenceDiagram ds = rips_diagram(ms, 1, eps);
  const PersistenceDiagram dst = rips_diagram(mst, 1, eps);

  for (int m = 0; m <= 1; ++m) {
    const PersistenceDiagram a = ds.restrict_dim(m);
    const PersistenceDiagram c = dst.restrict_dim(m);
    const Matching match = wasserstein(a, c, 2.0);
    res.per_dim[m] = match.cost;
    const auto g_tilde = wasserstein_grad(match, a, c);
    for (std::size_t j = 0; j < g_tilde.size(); ++j) {
      detail::chain_edge(g_tilde[j][0], c.points[j].birth_cell, stilde, res.grad_stilde, res.degenerate_edges);
      if (!c.points[j].essential)
        detail::chain_edge(g_tilde[j][1], c.points[j].death_cell, stilde, res.grad_stilde, res.degenerate_edges);
    }
    const auto g_s = wasserstein_grad(mirrored(match), c, a);
    for (std::size_t j = 0; j < g_s.size(); ++j) {
      detail::chain_edge(g_s[j][0], a.points[j].birth_cell, s, res.grad_s, res.degenerate_edges);
      if (!a.points[j].essential)
        detail::chain_edge(g_s[j][1], a.points[j].death_cell, s, res.grad_s, res.degenerate_edges);
    }
  }
  res.value = res.per_dim[0] + res.per_dim[1];
  return res;
}

}  // namespace topojscc
