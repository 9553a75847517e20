#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "topojscc/diagram.hpp"
#include "topojscc/tensor.hpp"

namespace topojscc {

constexpr int kDiagonal = -1;

// Optimal partial matching between two diagrams with diagonal augmentation.
// pairs holds (index into D, index into D2), kDiagonal for the diagonal.
struct Matching {
  std::vector<std::pair<int, int>> pairs;
  double cost = 0.0;   // (sum of l_inf gaps^p)^(1/p)
  double sum_p = 0.0;  // cost^p, kept for gradient chain rule
  double p = 2.0;
  int n_left = 0, n_right = 0;
};

namespace detail {

inline double linf(const DiagramPoint& a, const DiagramPoint& b) {
  return std::max(std::abs(a.birth - b.birth), std::abs(a.death - b.death));
}

inline double diag_gap(const DiagramPoint& a) { return std::abs(a.birth - a.death) / 2.0; }

// O(n^3) Hungarian algorithm on a square cost matrix; deterministic.
inline std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
    } while (j0);
  }
  std::vector<int> assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assign[p[j] - 1] = j - 1;
  return assign;
}

inline void validate_same_dim(const PersistenceDiagram& a, const PersistenceDiagram& b) {
  int dim = -1;
  for (const auto& p : a.points) {
    if (dim < 0) dim = p.dim;
    else if (p.dim != dim) throw Error("wasserstein: mixed-dimension diagram");
  }
  for (const auto& p : b.points) {
    if (dim < 0) dim = p.dim;
    else if (p.dim != dim) throw Error("wasserstein: diagrams of different homology dimensions");
  }
}

// Total order on diagrams used to canonicalize the solve direction, so the
// distance is exactly symmetric in its arguments.
inline bool diagram_leq(const PersistenceDiagram& a, const PersistenceDiagram& b) {
  auto key = [](const PersistenceDiagram& d) {
    std::vector<std::pair<double, double>> k;
    k.reserve(d.points.size());
    for (const auto& p : d.points) k.emplace_back(p.birth, p.death);
    std::sort(k.begin(), k.end());
    return k;
  };
  const auto ka = key(a), kb = key(b);
  if (ka.size() != kb.size()) return ka.size() < kb.size();
  return ka <= kb;
}

inline Matching solve_oriented(const PersistenceDiagram& d1, const PersistenceDiagram& d2, double p) {
  const int n = static_cast<int>(d1.points.size());
  const int m = static_cast<int>(d2.points.size());
  Matching match;
  match.p = p;
  match.n_left = n;
  match.n_right = m;
  if (n + m == 0) return match;

  const int size = n + m;
  std::vector<double> cost(static_cast<std::size_t>(size) * size, 0.0);
  for (int i = 0; i < n; ++i) {
    const double dg = std::pow(diag_gap(d1.points[i]), p);
    for (int j = 0; j < m; ++j)
      cost[static_cast<std::size_t>(i) * size + j] = std::pow(linf(d1.points[i], d2.points[j]), p);
    for (int j = m; j < size; ++j) cost[static_cast<std::size_t>(i) * size + j] = dg;
  }
  for (int i = n; i < size; ++i) {
    for (int j = 0; j < m; ++j)
      cost[static_cast<std::size_t>(i) * size + j] = std::pow(diag_gap(d2.points[j]), p);
    // diagonal-to-diagonal entries stay 0
  }

  const std::vector<int> assign = solve_assignment(cost, size);
  std::vector<double> terms;
  for (int i = 0; i < size; ++i) {
    const int j = assign[i];
    const bool li = i < n, rj = j < m;
    if (!li && !rj) continue;
    match.pairs.emplace_back(li ? i : kDiagonal, rj ? j : kDiagonal);
    terms.push_back(cost[static_cast<std::size_t>(i) * size + j]);
  }
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  match.sum_p = s;
  match.cost = s == 0.0 ? 0.0 : std::pow(s, 1.0 / p);
  return match;
}

}  // namespace detail

// Exact p-Wasserstein matching between persistence diagrams of one homology
// dimension. Point-to-point cost is the l_inf gap^p, point-to-diagonal cost
// (|b-d|/2)^p, via an exact assignment solve on the augmented square matrix.
inline Matching wasserstein(const PersistenceDiagram& d1, const PersistenceDiagram& d2, double p) {
  if (p < 1.0) throw Error("wasserstein: p must be >= 1");
  detail::validate_same_dim(d1, d2);
  if (detail::diagram_leq(d1, d2)) return detail::solve_oriented(d1, d2, p);
  Matching m = detail::solve_oriented(d2, d1, p);
  std::swap(m.n_left, m.n_right);
  for (auto& pr : m.pairs) std::swap(pr.first, pr.second);
  return m;
}

// Subgradient of the matching cost w.r.t. the (birth, death) coordinates of
// every point of d2, holding the optimal matching fixed (envelope theorem).
// l_inf argmax ties route to the birth coordinate.
inline std::vector<std::array<double, 2>> wasserstein_grad(const Matching& match,
                                                           const PersistenceDiagram& d1,
                                                           const PersistenceDiagram& d2) {
  if (match.n_left != static_cast<int>(d1.points.size()) ||
      match.n_right != static_cast<int>(d2.points.size()))
    throw Error("wasserstein_grad: stale matching (point counts disagree)");
  std::vector<std::array<double, 2>> grads(d2.points.size(), {0.0, 0.0});
  if (match.sum_p == 0.0) return grads;
  const double p = match.p;
  const double outer = std::pow(match.sum_p, 1.0 / p - 1.0);
  auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  for (const auto& [i, j] : match.pairs) {
    if (j == kDiagonal) continue;
    const DiagramPoint& q = d2.points[j];
    if (i == kDiagonal) {
      const double c = detail::diag_gap(q);
      if (c == 0.0) continue;
      const double g = outer * std::pow(c, p - 1.0) * 0.5 * sgn(q.birth - q.death);
      grads[j][0] += g;
      grads[j][1] -= g;
    } else {
      const DiagramPoint& a = d1.points[i];
      const double db = q.birth - a.birth;
      const double dd = q.death - a.death;
      const double ab = std::abs(db), ad = std::abs(dd);
      const double mx = std::max(ab, ad);
      if (mx == 0.0) continue;
      const double g = outer * std::pow(mx, p - 1.0);
      if (ab >= ad) grads[j][0] += g * sgn(db);
      else grads[j][1] += g * sgn(dd);
    }
  }
  return grads;
}

inline Matching mirrored(const Matching& m) {
  Matching out = m;
  std::swap(out.n_left, out.n_right);
  for (auto& pr : out.pairs) std::swap(pr.first, pr.second);
  return out;
}

// Exhaustive-enumeration oracle; independent of the assignment solver.
inline double brute_force_wasserstein(const PersistenceDiagram& d1, const PersistenceDiagram& d2,
                                      double p) {
  if (p < 1.0) throw Error("wasserstein: p must be >= 1");
  detail::validate_same_dim(d1, d2);
  const int n = static_cast<int>(d1.points.size());
  const int m = static_cast<int>(d2.points.size());
  if (n + m > 8) throw Error("brute_force_wasserstein: size cap |D|+|D2| <= 8 exceeded");
  std::vector<char> used(m, 0);
  double best = std::numeric_limits<double>::infinity();
  const std::function<void(int, double)> rec = [&](int i, double acc) {
    if (acc >= best) return;
    if (i == n) {
      double total = acc;
      for (int j = 0; j < m; ++j)
        if (!used[j]) total += std::pow(detail::diag_gap(d2.points[j]), p);
      best = std::min(best, total);
      return;
    }
    rec(i + 1, acc + std::pow(detail::diag_gap(d1.points[i]), p));
    for (int j = 0; j < m; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      rec(i + 1, acc + std::pow(detail::linf(d1.points[i], d2.points[j]), p));
      used[j] = 0;
    }
  };
  rec(0, 0.0);
  return best == 0.0 ? 0.0 : std::pow(best, 1.0 / p);
}

}  // namespace topojscc
