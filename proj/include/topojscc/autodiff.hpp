#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "topojscc/tensor.hpp"

namespace topojscc {

struct ConvGeom {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, kernel = 0, stride = 1, pad = 0;
  int out_h = 0, out_w = 0;
};

inline ConvGeom make_conv_geom(int in_c, int in_h, int in_w, int out_c, int kernel, int stride) {
  ConvGeom g;
  g.in_c = in_c;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_c = out_c;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = (kernel - 1) / 2;
  g.out_h = (in_h + 2 * g.pad - kernel) / stride + 1;
  g.out_w = (in_w + 2 * g.pad - kernel) / stride + 1;
  return g;
}

namespace detail {

// Patch matrix P: rows = out_h*out_w positions, cols = in_c*k*k taps.
// Column index order (c, ky, kx) matches the native weight layout
// [out_c][in_c][k][k] so weight rows can be used as packed K-vectors.
inline void im2col(const double* x, const ConvGeom& g, double* p) {
  const int K = g.in_c * g.kernel * g.kernel;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      double* row = p + (static_cast<std::size_t>(oy) * g.out_w + ox) * K;
      int idx = 0;
      for (int c = 0; c < g.in_c; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) {
            for (int kx = 0; kx < g.kernel; ++kx) row[idx++] = 0.0;
            continue;
          }
          const double* xr = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride + kx - g.pad;
            row[idx++] = (ix < 0 || ix >= g.in_w) ? 0.0 : xr[ix];
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* p, const ConvGeom& g, double* x) {
  const int K = g.in_c * g.kernel * g.kernel;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const double* row = p + (static_cast<std::size_t>(oy) * g.out_w + ox) * K;
      int idx = 0;
      for (int c = 0; c < g.in_c; ++c) {
        double* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) {
            idx += g.kernel;
            continue;
          }
          double* xr = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.in_w) xr[ix] += row[idx];
            ++idx;
          }
        }
      }
    }
  }
}

inline std::vector<double>& scratch_buffer(int which, std::size_t n) {
  thread_local std::vector<double> bufs[4];
  if (bufs[which].size() < n) bufs[which].resize(n);
  return bufs[which];
}

// y[oc][m] = sum_k P[m][k] * w[oc][k] + bias[oc]
inline void conv2d_forward(const double* x, const double* w, const double* bias, const ConvGeom& g,
                           double* y) {
  const int M = g.out_h * g.out_w;
  const int K = g.in_c * g.kernel * g.kernel;
  const int N = g.out_c;
  auto& pbuf = scratch_buffer(0, static_cast<std::size_t>(M) * K);
  auto& wbuf = scratch_buffer(1, static_cast<std::size_t>(K) * N);
  auto& cbuf = scratch_buffer(2, static_cast<std::size_t>(M) * N);
  im2col(x, g, pbuf.data());
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n) wbuf[static_cast<std::size_t>(k) * N + n] = w[static_cast<std::size_t>(n) * K + k];
  std::fill(cbuf.begin(), cbuf.begin() + static_cast<std::size_t>(M) * N, 0.0);
  for (int m = 0; m < M; ++m) {
    const double* pr = pbuf.data() + static_cast<std::size_t>(m) * K;
    double* cr = cbuf.data() + static_cast<std::size_t>(m) * N;
    for (int k = 0; k < K; ++k) {
      const double pv = pr[k];
      const double* wr = wbuf.data() + static_cast<std::size_t>(k) * N;
      for (int n = 0; n < N; ++n) cr[n] += pv * wr[n];
    }
  }
  for (int n = 0; n < N; ++n) {
    const double b = bias ? bias[n] : 0.0;
    double* yn = y + static_cast<std::size_t>(n) * M;
    for (int m = 0; m < M; ++m) yn[m] = cbuf[static_cast<std::size_t>(m) * N + n] + b;
  }
}

// dx[c][iy][ix] += sum over taps of dy * w  (transposed data path; also the
// forward pass of a transpose convolution)
inline void conv2d_backward_data(const double* dy, const double* w, const ConvGeom& g, double* dx_accum) {
  const int M = g.out_h * g.out_w;
  const int K = g.in_c * g.kernel * g.kernel;
  const int N = g.out_c;
  auto& dpbuf = scratch_buffer(0, static_cast<std::size_t>(M) * K);
  std::fill(dpbuf.begin(), dpbuf.begin() + static_cast<std::size_t>(M) * K, 0.0);
  for (int m = 0; m < M; ++m) {
    double* dpr = dpbuf.data() + static_cast<std::size_t>(m) * K;
    for (int n = 0; n < N; ++n) {
      const double gv = dy[static_cast<std::size_t>(n) * M + m];
      const double* wr = w + static_cast<std::size_t>(n) * K;
      for (int k = 0; k < K; ++k) dpr[k] += gv * wr[k];
    }
  }
  col2im_add(dpbuf.data(), g, dx_accum);
}

// dw[oc][k] += sum_m P[m][k] * dy[oc][m];  dbias[oc] += sum_m dy[oc][m]
inline void conv2d_backward_weights(const double* x, const double* dy, const ConvGeom& g,
                                    double* dw_accum, double* dbias_accum) {
  const int M = g.out_h * g.out_w;
  const int K = g.in_c * g.kernel * g.kernel;
  const int N = g.out_c;
  auto& pbuf = scratch_buffer(0, static_cast<std::size_t>(M) * K);
  auto& dwbuf = scratch_buffer(3, static_cast<std::size_t>(K) * N);
  im2col(x, g, pbuf.data());
  std::fill(dwbuf.begin(), dwbuf.begin() + static_cast<std::size_t>(K) * N, 0.0);
  for (int m = 0; m < M; ++m) {
    const double* pr = pbuf.data() + static_cast<std::size_t>(m) * K;
    for (int n = 0; n < N; ++n) {
      const double gv = dy[static_cast<std::size_t>(n) * M + m];
      double* dwk = dwbuf.data() + static_cast<std::size_t>(n) * K;
      for (int k = 0; k < K; ++k) dwk[k] += gv * pr[k];
    }
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(K) * N; ++i) dw_accum[i] += dwbuf[i];
  if (dbias_accum) {
    for (int n = 0; n < N; ++n) {
      double s = 0.0;
      const double* dyn = dy + static_cast<std::size_t>(n) * M;
      for (int m = 0; m < M; ++m) s += dyn[m];
      dbias_accum[n] += s;
    }
  }
}

}  // namespace detail

enum class OpKind {
  kLeaf,
  kAffine,
  kConv2d,
  kConvTranspose2d,
  kPRelu,
  kSigmoid,
  kAdd,
  kReshape,
  kMse,
  kPowerNormalize,
  kChannel,
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAffine: return "affine";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvTranspose2d: return "conv_transpose2d";
    case OpKind::kPRelu: return "prelu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kAdd: return "add";
    case OpKind::kReshape: return "reshape";
    case OpKind::kMse: return "mse";
    case OpKind::kPowerNormalize: return "power_normalize";
    case OpKind::kChannel: return "channel";
  }
  return "?";
}

struct GraphNode {
  OpKind kind = OpKind::kLeaf;
  std::vector<int> in;
  std::vector<int> shape;
  std::vector<double> value;
  // op attributes
  int stride = 1;
  int out_pad = 0;
  double mul = 1.0, off = 0.0;    // affine
  double power = 1.0;             // power_normalize target P
  double cached_alpha = 0.0;      // power_normalize scale from forward
  double cached_snorm2 = 0.0;
  double h_re = 1.0, h_im = 0.0;  // channel gain
  std::vector<double> noise;      // channel noise, interleaved re/im
};

// Define-by-run reverse-mode graph over dense real tensors. Nodes are
// appended in evaluation order, so insertion order is a topological order.
class Graph {
 public:
  int leaf(std::vector<int> shape) {
    shape_numel(shape);
    return push(OpKind::kLeaf, {}, std::move(shape));
  }

  int affine(int x, double mul, double off) {
    const int id = push(OpKind::kAffine, {check(x)}, nodes_[x].shape);
    nodes_[id].mul = mul;
    nodes_[id].off = off;
    return id;
  }

  int scale(int x, double c) { return affine(x, c, 0.0); }

  // x {in_c,h,w}, w {out_c,in_c,k,k}, b {out_c}
  int conv2d(int x, int w, int b, int stride) {
    check(x); check(w); check(b);
    const auto& xs = nodes_[x].shape;
    const auto& ws = nodes_[w].shape;
    if (xs.size() != 3) fail("conv2d", "input must be rank 3, got " + shape_str(xs));
    if (ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0)
      fail("conv2d", "weight must be {out_c,in_c,k,k} with odd k, got " + shape_str(ws));
    if (ws[1] != xs[0]) fail("conv2d", "in_c mismatch: input " + shape_str(xs) + " weight " + shape_str(ws));
    if (nodes_[b].shape != std::vector<int>{ws[0]}) fail("conv2d", "bias shape mismatch");
    if (stride != 1 && stride != 2) fail("conv2d", "stride must be 1 or 2");
    const ConvGeom g = make_conv_geom(xs[0], xs[1], xs[2], ws[0], ws[2], stride);
    if (g.out_h <= 0 || g.out_w <= 0) fail("conv2d", "non-positive output size");
    const int id = push(OpKind::kConv2d, {x, w, b}, {g.out_c, g.out_h, g.out_w});
    nodes_[id].stride = stride;
    return id;
  }

  // x {in_c,h,w}, w {in_c,out_c,k,k}, b {out_c}
  int conv_transpose2d(int x, int w, int b, int stride, int out_pad) {
    check(x); check(w); check(b);
    const auto& xs = nodes_[x].shape;
    const auto& ws = nodes_[w].shape;
    if (xs.size() != 3) fail("conv_transpose2d", "input must be rank 3, got " + shape_str(xs));
    if (ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0)
      fail("conv_transpose2d", "weight must be {in_c,out_c,k,k} with odd k, got " + shape_str(ws));
    if (ws[0] != xs[0]) fail("conv_transpose2d", "in_c mismatch");
    if (nodes_[b].shape != std::vector<int>{ws[1]}) fail("conv_transpose2d", "bias shape mismatch");
    if (stride != 1 && stride != 2) fail("conv_transpose2d", "stride must be 1 or 2");
    if (out_pad < 0 || out_pad >= stride) fail("conv_transpose2d", "output padding must be in [0, stride)");
    const int k = ws[2];
    const int pad = (k - 1) / 2;
    const int oh = (xs[1] - 1) * stride - 2 * pad + k + out_pad;
    const int ow = (xs[2] - 1) * stride - 2 * pad + k + out_pad;
    if (oh <= 0 || ow <= 0) fail("conv_transpose2d", "non-positive output size");
    const int id = push(OpKind::kConvTranspose2d, {x, w, b}, {ws[1], oh, ow});
    nodes_[id].stride = stride;
    nodes_[id].out_pad = out_pad;
    return id;
  }

  // slope is a scalar leaf shared across the whole layer
  int prelu(int x, int slope) {
    check(x); check(slope);
    if (shape_numel(nodes_[slope].shape) != 1) fail("prelu", "slope must be scalar");
    return push(OpKind::kPRelu, {x, slope}, nodes_[x].shape);
  }

  int sigmoid(int x) { return push(OpKind::kSigmoid, {check(x)}, nodes_[x].shape); }

  int add(int a, int b) {
    check(a); check(b);
    if (nodes_[a].shape != nodes_[b].shape)
      fail("add", "shape mismatch " + shape_str(nodes_[a].shape) + " vs " + shape_str(nodes_[b].shape));
    return push(OpKind::kAdd, {a, b}, nodes_[a].shape);
  }

  int reshape(int x, std::vector<int> shape) {
    check(x);
    if (shape_numel(shape) != shape_numel(nodes_[x].shape))
      fail("reshape", "element count mismatch " + shape_str(nodes_[x].shape) + " -> " + shape_str(shape));
    return push(OpKind::kReshape, {x}, std::move(shape));
  }

  int mse(int a, int b) {
    check(a); check(b);
    if (nodes_[a].shape != nodes_[b].shape)
      fail("mse", "shape mismatch " + shape_str(nodes_[a].shape) + " vs " + shape_str(nodes_[b].shape));
    return push(OpKind::kMse, {a, b}, {1});
  }

  int power_normalize(int s, double p) {
    check(s);
    if (shape_numel(nodes_[s].shape) % 2 != 0) fail("power_normalize", "length must be even (2k reals)");
    if (p <= 0.0) fail("power_normalize", "power must be positive");
    const int id = push(OpKind::kPowerNormalize, {s}, nodes_[s].shape);
    nodes_[id].power = p;
    return id;
  }

  // y = h*z + noise over k complex symbols; h and noise are constants of the
  // node, so backward is multiplication by conj(h).
  int channel(int z, double h_re, double h_im, std::vector<double> noise) {
    check(z);
    const auto n = shape_numel(nodes_[z].shape);
    if (n % 2 != 0) fail("channel", "length must be even (2k reals)");
    if (static_cast<std::int64_t>(noise.size()) != n) fail("channel", "noise length mismatch");
    const int id = push(OpKind::kChannel, {z}, nodes_[z].shape);
    nodes_[id].h_re = h_re;
    nodes_[id].h_im = h_im;
    nodes_[id].noise = std::move(noise);
    return id;
  }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  bool is_leaf(int id) const { return nodes_[at(id)].kind == OpKind::kLeaf; }
  const std::vector<int>& node_shape(int id) const { return nodes_[at(id)].shape; }
  const std::vector<double>& value(int id) const {
    if (!forwarded_) throw Error("graph: value() before forward()");
    return nodes_[at(id)].value;
  }

  // Computes every node in insertion order. feeds must supply every leaf.
  void forward(const std::unordered_map<int, const Tensor*>& feeds) {
    injections_.clear();
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
      GraphNode& n = nodes_[i];
      const auto numel = static_cast<std::size_t>(shape_numel(n.shape));
      n.value.resize(numel);
      switch (n.kind) {
        case OpKind::kLeaf: {
          auto it = feeds.find(i);
          if (it == feeds.end() || it->second == nullptr)
            fail_at(i, "leaf not fed");
          const Tensor& t = *it->second;
          if (t.shape != n.shape)
            fail_at(i, "feed shape " + shape_str(t.shape) + " != leaf shape " + shape_str(n.shape));
          n.value = t.data;
          break;
        }
        case OpKind::kAffine: {
          const auto& x = nodes_[n.in[0]].value;
          for (std::size_t j = 0; j < numel; ++j) n.value[j] = n.mul * x[j] + n.off;
          break;
        }
        case OpKind::kConv2d: {
          const auto& xs = nodes_[n.in[0]].shape;
          const auto& ws = nodes_[n.in[1]].shape;
          const ConvGeom g = make_conv_geom(xs[0], xs[1], xs[2], ws[0], ws[2], n.stride);
          detail::conv2d_forward(nodes_[n.in[0]].value.data(), nodes_[n.in[1]].value.data(),
                                 nodes_[n.in[2]].value.data(), g, n.value.data());
          break;
        }
        case OpKind::kConvTranspose2d: {
          const ConvGeom g = tconv_view(n);
          std::fill(n.value.begin(), n.value.end(), 0.0);
          detail::conv2d_backward_data(nodes_[n.in[0]].value.data(), nodes_[n.in[1]].value.data(), g,
                                       n.value.data());
          const auto& bias = nodes_[n.in[2]].value;
          const std::size_t hw = numel / bias.size();
          for (std::size_t c = 0; c < bias.size(); ++c)
            for (std::size_t j = 0; j < hw; ++j) n.value[c * hw + j] += bias[c];
          break;
        }
        case OpKind::kPRelu: {
          const auto& x = nodes_[n.in[0]].value;
          const double a = nodes_[n.in[1]].value[0];
          for (std::size_t j = 0; j < numel; ++j) n.value[j] = x[j] >= 0.0 ? x[j] : a * x[j];
          break;
        }
        case OpKind::kSigmoid: {
          const auto& x = nodes_[n.in[0]].value;
          for (std::size_t j = 0; j < numel; ++j) n.value[j] = 1.0 / (1.0 + std::exp(-x[j]));
          break;
        }
        case OpKind::kAdd: {
          const auto& a = nodes_[n.in[0]].value;
          const auto& b = nodes_[n.in[1]].value;
          for (std::size_t j = 0; j < numel; ++j) n.value[j] = a[j] + b[j];
          break;
        }
        case OpKind::kReshape:
          n.value = nodes_[n.in[0]].value;
          break;
        case OpKind::kMse: {
          const auto& a = nodes_[n.in[0]].value;
          const auto& b = nodes_[n.in[1]].value;
          double s = 0.0;
          for (std::size_t j = 0; j < a.size(); ++j) {
            const double d = a[j] - b[j];
            s += d * d;
          }
          n.value[0] = s / static_cast<double>(a.size());
          break;
        }
        case OpKind::kPowerNormalize: {
          const auto& s = nodes_[n.in[0]].value;
          double s2 = 0.0;
          for (double v : s) s2 += v * v;
          if (s2 == 0.0) fail_at(i, "zero input vector cannot be power-normalized");
          const double k = static_cast<double>(s.size()) / 2.0;
          const double alpha = std::sqrt(k * n.power / s2);
          n.cached_alpha = alpha;
          n.cached_snorm2 = s2;
          for (std::size_t j = 0; j < numel; ++j) n.value[j] = alpha * s[j];
          break;
        }
        case OpKind::kChannel: {
          const auto& z = nodes_[n.in[0]].value;
          for (std::size_t j = 0; j + 1 < numel; j += 2) {
            n.value[j] = n.h_re * z[j] - n.h_im * z[j + 1] + n.noise[j];
            n.value[j + 1] = n.h_re * z[j + 1] + n.h_im * z[j] + n.noise[j + 1];
          }
          break;
        }
      }
    }
    forwarded_ = true;
  }

  // Registers an externally computed cotangent; backward() treats the node as
  // an extra loss contribution. Cleared by the next forward().
  void inject_gradient(int id, const std::vector<double>& cotangent) {
    const auto n = shape_numel(nodes_[at(id)].shape);
    if (static_cast<std::int64_t>(cotangent.size()) != n)
      fail_at(id, "injected cotangent length " + std::to_string(cotangent.size()) +
                      " != node size " + std::to_string(n));
    injections_.emplace_back(id, cotangent);
  }

  void backward(int loss) {
    if (!forwarded_) throw Error("graph: backward() before forward()");
    if (shape_numel(nodes_[at(loss)].shape) != 1) fail_at(loss, "backward: loss node is not scalar");
    grads_.assign(nodes_.size(), {});
    std::vector<char> active(nodes_.size(), 0);
    auto touch = [&](int id) -> std::vector<double>& {
      if (grads_[id].empty()) grads_[id].assign(nodes_[id].value.size(), 0.0);
      active[id] = 1;
      return grads_[id];
    };
    touch(loss)[0] += 1.0;
    for (const auto& [id, cot] : injections_) {
      auto& g = touch(id);
      for (std::size_t j = 0; j < cot.size(); ++j) g[j] += cot[j];
    }
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (!active[i]) continue;
      const GraphNode& n = nodes_[i];
      const auto& g = grads_[i];
      switch (n.kind) {
        case OpKind::kLeaf:
          break;
        case OpKind::kAffine: {
          auto& gx = touch(n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) gx[j] += n.mul * g[j];
          break;
        }
        case OpKind::kConv2d: {
          const auto& xs = nodes_[n.in[0]].shape;
          const auto& ws = nodes_[n.in[1]].shape;
          const ConvGeom geom = make_conv_geom(xs[0], xs[1], xs[2], ws[0], ws[2], n.stride);
          auto& gx = touch(n.in[0]);
          auto& gw = touch(n.in[1]);
          auto& gb = touch(n.in[2]);
          detail::conv2d_backward_weights(nodes_[n.in[0]].value.data(), g.data(), geom, gw.data(),
                                          gb.data());
          detail::conv2d_backward_data(g.data(), nodes_[n.in[1]].value.data(), geom, gx.data());
          break;
        }
        case OpKind::kConvTranspose2d: {
          const ConvGeom geom = tconv_view(n);
          auto& gx = touch(n.in[0]);
          auto& gw = touch(n.in[1]);
          auto& gb = touch(n.in[2]);
          // In the conv view, the upstream gradient is the conv input and the
          // node input is the conv output gradient.
          detail::conv2d_forward(g.data(), nodes_[n.in[1]].value.data(), nullptr, geom, scratch_out(geom));
          accum_from_scratch(gx, geom);
          detail::conv2d_backward_weights(g.data(), nodes_[n.in[0]].value.data(), geom, gw.data(), nullptr);
          const auto& bias_shape = nodes_[n.in[2]].shape;
          const std::size_t hw = g.size() / static_cast<std::size_t>(bias_shape[0]);
          for (int c = 0; c < bias_shape[0]; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < hw; ++j) s += g[static_cast<std::size_t>(c) * hw + j];
            gb[c] += s;
          }
          break;
        }
        case OpKind::kPRelu: {
          const auto& x = nodes_[n.in[0]].value;
          const double a = nodes_[n.in[1]].value[0];
          auto& gx = touch(n.in[0]);
          auto& ga = touch(n.in[1]);
          double sa = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (x[j] >= 0.0) {
              gx[j] += g[j];
            } else {
              gx[j] += a * g[j];
              sa += g[j] * x[j];
            }
          }
          ga[0] += sa;
          break;
        }
        case OpKind::kSigmoid: {
          auto& gx = touch(n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) {
            const double y = n.value[j];
            gx[j] += g[j] * y * (1.0 - y);
          }
          break;
        }
        case OpKind::kAdd: {
          auto& ga = touch(n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
          auto& gb = touch(n.in[1]);
          for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j];
          break;
        }
        case OpKind::kReshape: {
          auto& gx = touch(n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) gx[j] += g[j];
          break;
        }
        case OpKind::kMse: {
          const auto& a = nodes_[n.in[0]].value;
          const auto& b = nodes_[n.in[1]].value;
          const double c = 2.0 * g[0] / static_cast<double>(a.size());
          auto& ga = touch(n.in[0]);
          auto& gb = touch(n.in[1]);
          for (std::size_t j = 0; j < a.size(); ++j) {
            const double d = c * (a[j] - b[j]);
            ga[j] += d;
            gb[j] -= d;
          }
          break;
        }
        case OpKind::kPowerNormalize: {
          const auto& s = nodes_[n.in[0]].value;
          const double alpha = n.cached_alpha;
          const double s2 = n.cached_snorm2;
          double dot = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * s[j];
          const double c = alpha * dot / s2;
          auto& gs = touch(n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) gs[j] += alpha * g[j] - c * s[j];
          break;
        }
        case OpKind::kChannel: {
          auto& gz = touch(n.in[0]);
          for (std::size_t j = 0; j + 1 < g.size(); j += 2) {
            gz[j] += n.h_re * g[j] + n.h_im * g[j + 1];
            gz[j + 1] += -n.h_im * g[j] + n.h_re * g[j + 1];
          }
          break;
        }
      }
    }
  }

  // Gradient of the last backward() pass; zeros if the loss never reached it.
  const std::vector<double>& gradient(int id) {
    at(id);
    if (grads_.empty()) throw Error("graph: gradient() before backward()");
    if (grads_[id].empty()) grads_[id].assign(nodes_[id].value.size(), 0.0);
    return grads_[id];
  }

  std::map<int, Tensor> leaf_gradients() {
    std::map<int, Tensor> out;
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
      if (nodes_[i].kind != OpKind::kLeaf) continue;
      out.emplace(i, Tensor(nodes_[i].shape, gradient(i)));
    }
    return out;
  }

 private:
  int push(OpKind kind, std::vector<int> in, std::vector<int> shape) {
    GraphNode n;
    n.kind = kind;
    n.in = std::move(in);
    n.shape = std::move(shape);
    nodes_.push_back(std::move(n));
    forwarded_ = false;
    return static_cast<int>(nodes_.size()) - 1;
  }

  int check(int id) const { return at(id); }

  int at(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw Error("graph: node id " + std::to_string(id) + " out of range");
    return id;
  }

  [[noreturn]] void fail(const std::string& op, const std::string& msg) const {
    throw Error("graph: " + op + " node " + std::to_string(nodes_.size()) + ": " + msg);
  }

  [[noreturn]] void fail_at(int id, const std::string& msg) const {
    throw Error("graph: " + std::string(op_kind_name(nodes_[id].kind)) + " node " +
                std::to_string(id) + ": " + msg);
  }

  // Geometry of the ordinary convolution whose data-transpose realizes this
  // transpose convolution: conv maps the tconv OUTPUT shape to its INPUT shape.
  ConvGeom tconv_view(const GraphNode& n) const {
    const auto& xs = nodes_[n.in[0]].shape;   // tconv input {in_c, h, w}
    const auto& ws = nodes_[n.in[1]].shape;   // {in_c, out_c, k, k}
    ConvGeom g = make_conv_geom(ws[1], n.shape[1], n.shape[2], ws[0], ws[2], n.stride);
    // out must land on the tconv input extent
    if (g.out_h != xs[1] || g.out_w != xs[2])
      throw Error("graph: conv_transpose2d: inconsistent geometry");
    return g;
  }

  double* scratch_out(const ConvGeom& g) {
    tconv_scratch_.assign(static_cast<std::size_t>(g.out_c) * g.out_h * g.out_w, 0.0);
    return tconv_scratch_.data();
  }
  void accum_from_scratch(std::vector<double>& dst, const ConvGeom& g) {
    const std::size_t n = static_cast<std::size_t>(g.out_c) * g.out_h * g.out_w;
    for (std::size_t j = 0; j < n; ++j) dst[j] += tconv_scratch_[j];
  }

  std::vector<GraphNode> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::pair<int, std::vector<double>>> injections_;
  std::vector<double> tconv_scratch_;
  bool forwarded_ = false;
};

}  // namespace topojscc
