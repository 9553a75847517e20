#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "topojscc/autodiff.hpp"
#include "topojscc/channel.hpp"
#include "topojscc/jscc.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/tensor.hpp"
#include "topojscc/topo_loss.hpp"
#include "topojscc/train.hpp"

namespace topojscc {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates at tie/degeneracy points (FD inconsistent across steps)
  bool pass = false;
};

namespace detail {

inline double rel_err(double a, double f) {
  const double denom = std::max({std::abs(a), std::abs(f), 1e-8});
  return std::abs(a - f) / denom;
}

// Central finite differences over every coordinate of x. A coordinate is
// skipped as degenerate when halving the step moves the estimate by more than
// half the tolerance (the loss is locally non-smooth there).
inline GradCheckResult fd_compare(const std::string& name,
                                  const std::function<double(const std::vector<double>&)>& f,
                                  const std::vector<double>& x, const std::vector<double>& analytic,
                                  double step, double tol, bool detect_degenerate = false) {
  GradCheckResult res;
  res.name = name;
  res.tolerance = tol;
  std::vector<double> probe = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    auto central = [&](double h) {
      probe[j] = x[j] + h;
      const double up = f(probe);
      probe[j] = x[j] - h;
      const double dn = f(probe);
      probe[j] = x[j];
      return (up - dn) / (2.0 * h);
    };
    const double fd = central(step);
    if (detect_degenerate) {
      const double fd2 = central(step / 2.0);
      if (rel_err(fd, fd2) > 0.5 * tol && std::abs(fd - fd2) > 1e-9) {
        ++res.skipped;
        continue;
      }
    }
    res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[j], fd));
    ++res.checked;
  }
  res.pass = res.max_rel_err < tol && res.checked > 0;
  return res;
}

inline std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Image with well-separated intensity levels in (0,1): a random permutation of
// an even grid, keeping FD probes away from pixel-value ties.
inline Tensor separated_image(Rng& rng, int h, int w) {
  const int n = h * w;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  Tensor t = Tensor::zeros({1, h, w});
  for (int i = 0; i < n; ++i)
    t.data[i] = (perm[i] + 0.5) / static_cast<double>(n);
  return t;
}

}  // namespace detail

// Finite-difference suites for every autodiff op, the power/channel layers and
// both persistent-homology losses.
inline std::vector<GradCheckResult> run_gradcheck_suites(std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  Rng root(seed);
  const double kOpTol = 1e-6, kOpStep = 1e-5;
  const double kPhTol = 1e-3, kPhStep = 1e-6;

  // graph op suites: loss = mse(op(x...), target); FD over each leaf
  struct OpCase {
    std::string name;
    std::function<void(Graph&, std::vector<int>&, std::vector<Tensor>&, Rng&)> build;
  };
  // builders append leaves + their feed tensors and finish with a scalar loss node
  auto finish_mse = [](Graph& g, int out, std::vector<int>& leaves, std::vector<Tensor>& feeds,
                       Rng& rng) {
    const auto& shp = g.node_shape(out);
    Tensor target(shp, detail::random_vec(rng, static_cast<std::size_t>(shape_numel(shp))));
    const int t = g.leaf(shp);
    leaves.push_back(t);
    feeds.push_back(target);
    return g.mse(out, t);
  };

  std::vector<std::pair<std::string, std::function<int(Graph&, std::vector<int>&, std::vector<Tensor>&, Rng&)>>>
      cases;
  cases.emplace_back("affine", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({2, 3});
    lv.push_back(x);
    fd.emplace_back(std::vector<int>{2, 3}, detail::random_vec(r, 6));
    return finish_mse(g, g.affine(x, 1.7, -0.3), lv, fd, r);
  });
  cases.emplace_back("conv2d_s1", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({2, 6, 6}), w = g.leaf({3, 2, 3, 3}), b = g.leaf({3});
    lv.insert(lv.end(), {x, w, b});
    fd.emplace_back(std::vector<int>{2, 6, 6}, detail::random_vec(r, 72));
    fd.emplace_back(std::vector<int>{3, 2, 3, 3}, detail::random_vec(r, 54));
    fd.emplace_back(std::vector<int>{3}, detail::random_vec(r, 3));
    return finish_mse(g, g.conv2d(x, w, b, 1), lv, fd, r);
  });
  cases.emplace_back("conv2d_s2", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({1, 8, 8}), w = g.leaf({2, 1, 5, 5}), b = g.leaf({2});
    lv.insert(lv.end(), {x, w, b});
    fd.emplace_back(std::vector<int>{1, 8, 8}, detail::random_vec(r, 64));
    fd.emplace_back(std::vector<int>{2, 1, 5, 5}, detail::random_vec(r, 50));
    fd.emplace_back(std::vector<int>{2}, detail::random_vec(r, 2));
    return finish_mse(g, g.conv2d(x, w, b, 2), lv, fd, r);
  });
  cases.emplace_back("conv2d_1x1", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({2, 4, 4}), w = g.leaf({2, 2, 1, 1}), b = g.leaf({2});
    lv.insert(lv.end(), {x, w, b});
    fd.emplace_back(std::vector<int>{2, 4, 4}, detail::random_vec(r, 32));
    fd.emplace_back(std::vector<int>{2, 2, 1, 1}, detail::random_vec(r, 4));
    fd.emplace_back(std::vector<int>{2}, detail::random_vec(r, 2));
    return finish_mse(g, g.conv2d(x, w, b, 1), lv, fd, r);
  });
  cases.emplace_back("conv_transpose2d_s1", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({2, 4, 4}), w = g.leaf({2, 3, 3, 3}), b = g.leaf({3});
    lv.insert(lv.end(), {x, w, b});
    fd.emplace_back(std::vector<int>{2, 4, 4}, detail::random_vec(r, 32));
    fd.emplace_back(std::vector<int>{2, 3, 3, 3}, detail::random_vec(r, 54));
    fd.emplace_back(std::vector<int>{3}, detail::random_vec(r, 3));
    return finish_mse(g, g.conv_transpose2d(x, w, b, 1, 0), lv, fd, r);
  });
  cases.emplace_back("conv_transpose2d_s2", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({2, 4, 4}), w = g.leaf({2, 1, 5, 5}), b = g.leaf({1});
    lv.insert(lv.end(), {x, w, b});
    fd.emplace_back(std::vector<int>{2, 4, 4}, detail::random_vec(r, 32));
    fd.emplace_back(std::vector<int>{2, 1, 5, 5}, detail::random_vec(r, 50));
    fd.emplace_back(std::vector<int>{1}, detail::random_vec(r, 1));
    return finish_mse(g, g.conv_transpose2d(x, w, b, 2, 1), lv, fd, r);
  });
  cases.emplace_back("prelu", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({3, 3}), a = g.leaf({1});
    lv.insert(lv.end(), {x, a});
    fd.emplace_back(std::vector<int>{3, 3}, detail::random_vec(r, 9));
    fd.emplace_back(std::vector<int>{1}, std::vector<double>{0.25});
    return finish_mse(g, g.prelu(x, a), lv, fd, r);
  });
  cases.emplace_back("sigmoid", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({4});
    lv.push_back(x);
    fd.emplace_back(std::vector<int>{4}, detail::random_vec(r, 4, -2.0, 2.0));
    return finish_mse(g, g.sigmoid(x), lv, fd, r);
  });
  cases.emplace_back("add_reshape", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({2, 3}), y = g.leaf({2, 3});
    lv.insert(lv.end(), {x, y});
    fd.emplace_back(std::vector<int>{2, 3}, detail::random_vec(r, 6));
    fd.emplace_back(std::vector<int>{2, 3}, detail::random_vec(r, 6));
    return finish_mse(g, g.reshape(g.add(x, y), {6}), lv, fd, r);
  });
  cases.emplace_back("mse", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({5}), y = g.leaf({5});
    lv.insert(lv.end(), {x, y});
    fd.emplace_back(std::vector<int>{5}, detail::random_vec(r, 5));
    fd.emplace_back(std::vector<int>{5}, detail::random_vec(r, 5));
    return g.mse(x, y);
  });
  cases.emplace_back("power_normalize", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({8});
    lv.push_back(x);
    fd.emplace_back(std::vector<int>{8}, detail::random_vec(r, 8, 0.2, 1.0));
    return finish_mse(g, g.power_normalize(x, 1.0), lv, fd, r);
  });
  cases.emplace_back("channel", [&](Graph& g, std::vector<int>& lv, std::vector<Tensor>& fd, Rng& r) {
    const int x = g.leaf({8});
    lv.push_back(x);
    fd.emplace_back(std::vector<int>{8}, detail::random_vec(r, 8));
    return finish_mse(g, g.channel(x, 0.8, -0.6, detail::random_vec(r, 8, -0.2, 0.2)), lv, fd, r);
  });

  for (auto& [name, build] : cases) {
    Rng case_rng = root.derived(std::hash<std::string>{}(name));
    Graph g;
    std::vector<int> leaves;
    std::vector<Tensor> feed_vals;
    const int loss = build(g, leaves, feed_vals, case_rng);
    // one flat parameter vector spanning all leaves
    std::vector<double> flat;
    std::vector<std::size_t> offsets;
    for (const auto& t : feed_vals) {
      offsets.push_back(flat.size());
      flat.insert(flat.end(), t.data.begin(), t.data.end());
    }
    auto eval = [&](const std::vector<double>& x) {
      std::vector<Tensor> local = feed_vals;
      for (std::size_t i = 0; i < local.size(); ++i)
        std::copy(x.begin() + offsets[i], x.begin() + offsets[i] + local[i].data.size(),
                  local[i].data.begin());
      std::unordered_map<int, const Tensor*> feeds;
      for (std::size_t i = 0; i < leaves.size(); ++i) feeds[leaves[i]] = &local[i];
      Graph g2 = g;
      g2.forward(feeds);
      g2.backward(loss);
      return g2.value(loss)[0];
    };
    // analytic gradient at the base point
    std::unordered_map<int, const Tensor*> feeds;
    for (std::size_t i = 0; i < leaves.size(); ++i) feeds[leaves[i]] = &feed_vals[i];
    g.forward(feeds);
    g.backward(loss);
    std::vector<double> analytic;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto& gr = g.gradient(leaves[i]);
      analytic.insert(analytic.end(), gr.begin(), gr.end());
    }
    results.push_back(detail::fd_compare("op/" + name, eval, flat, analytic, kOpStep, kOpTol));
  }

  // image topological loss w.r.t. the reconstruction
  {
    Rng r = root.derived(201);
    const Tensor x = detail::separated_image(r, 6, 6);
    Rng r2 = root.derived(202);
    const Tensor xhat = detail::separated_image(r2, 6, 6);
    const TopoLossResult base = image_topo_loss(x, xhat);
    auto eval = [&](const std::vector<double>& v) {
      Tensor probe = xhat;
      probe.data = v;
      return image_topo_loss(x, probe).value;
    };
    results.push_back(detail::fd_compare("loss/image_topo", eval, xhat.data, base.grad.data, kPhStep,
                                         kPhTol, true));
  }

  // latent topological loss w.r.t. both clouds
  {
    Rng r = root.derived(203);
    const int b = 6, dim = 4;
    PointCloud s(b), st(b);
    for (int i = 0; i < b; ++i) {
      s[i] = detail::random_vec(r, dim);
      st[i] = s[i];
      for (auto& v : st[i]) v += r.uniform(-0.15, 0.15);
    }
    const LatentTopoLossResult base = latent_topo_loss(s, st);
    std::vector<double> flat, analytic;
    for (int i = 0; i < b; ++i) {
      flat.insert(flat.end(), s[i].begin(), s[i].end());
      analytic.insert(analytic.end(), base.grad_s[i].begin(), base.grad_s[i].end());
    }
    for (int i = 0; i < b; ++i) {
      flat.insert(flat.end(), st[i].begin(), st[i].end());
      analytic.insert(analytic.end(), base.grad_stilde[i].begin(), base.grad_stilde[i].end());
    }
    auto eval = [&](const std::vector<double>& v) {
      PointCloud ps(b), pst(b);
      std::size_t off = 0;
      for (int i = 0; i < b; ++i) {
        ps[i].assign(v.begin() + off, v.begin() + off + dim);
        off += dim;
      }
      for (int i = 0; i < b; ++i) {
        pst[i].assign(v.begin() + off, v.begin() + off + dim);
        off += dim;
      }
      return latent_topo_loss(ps, pst).value;
    };
    results.push_back(detail::fd_compare("loss/latent_topo", eval, flat, analytic, kPhStep, kPhTol, true));
  }

  // end-to-end batch objective through a tiny network (2 images, 8x8)
  {
    Rng r = root.derived(204);
    JsccParams params = init_params(42, 0.25, 8, 8);
    std::vector<Tensor> imgs{detail::separated_image(r, 8, 8), detail::separated_image(r, 8, 8)};
    std::vector<ChannelRealization> chans;
    for (int i = 0; i < 2; ++i) {
      Rng cr = r.derived(i);
      chans.push_back(draw_channel(params.k, ChannelKind::kRayleigh, 10.0, cr));
    }
    std::vector<Tensor*> pt = param_tensors(params);
    std::vector<double> flat;
    std::vector<std::size_t> offs;
    for (Tensor* t : pt) {
      offs.push_back(flat.size());
      flat.insert(flat.end(), t->data.begin(), t->data.end());
    }
    const double li = 1e-2, ll = 1e-2;
    auto eval = [&](const std::vector<double>& v) {
      JsccParams local = params;
      std::vector<Tensor*> lt = param_tensors(local);
      for (std::size_t i = 0; i < lt.size(); ++i)
        std::copy(v.begin() + offs[i], v.begin() + offs[i] + lt[i]->data.size(), lt[i]->data.begin());
      std::vector<const Tensor*> batch{&imgs[0], &imgs[1]};
      return batch_loss(batch, local, chans, li, ll).total;
    };
    std::vector<const Tensor*> batch{&imgs[0], &imgs[1]};
    const BatchLossResult base = batch_loss(batch, params, chans, li, ll);
    std::vector<double> analytic;
    for (const auto& gt : base.grads) analytic.insert(analytic.end(), gt.data.begin(), gt.data.end());
    // probing every weight is too slow; check a seeded sample of coordinates
    Rng pick = root.derived(205);
    std::vector<double> sub_flat, sub_analytic;
    std::vector<std::size_t> chosen;
    for (int i = 0; i < 60; ++i)
      chosen.push_back(static_cast<std::size_t>(pick.uniform_int(static_cast<int>(flat.size()))));
    auto eval_sub = [&](const std::vector<double>& v) {
      std::vector<double> full = flat;
      for (std::size_t i = 0; i < chosen.size(); ++i) full[chosen[i]] = v[i];
      return eval(full);
    };
    for (std::size_t c : chosen) {
      sub_flat.push_back(flat[c]);
      sub_analytic.push_back(analytic[c]);
    }
    results.push_back(
        detail::fd_compare("loss/batch_end_to_end", eval_sub, sub_flat, sub_analytic, 1e-5, 1e-2, true));
  }

  return results;
}

}  // namespace topojscc
