#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "topojscc/autodiff.hpp"
#include "topojscc/channel.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/tensor.hpp"

namespace topojscc {

struct ConvLayerParams {
  Tensor w;      // conv: {out_c,in_c,5,5}; transpose: {in_c,out_c,5,5}
  Tensor b;      // {out_c}
  Tensor slope;  // scalar PReLU slope; unused after the final decoder layer
  int stride = 1;
  int out_pad = 0;
  bool transpose = false;
  bool activation = true;  // PReLU after this layer
};

// Encoder f_theta, decoder g_phi and the realized code geometry. The encoder
// applies input normalization [0,1] -> [-1,1] and five 5x5 convolutions with
// strides (2,2,1,1,1), PReLU after each; the decoder mirrors with transpose
// convolutions, PReLU after all but the last, then a sigmoid.
struct JsccParams {
  int height = 0, width = 0;
  double rho_target = 0.0;
  double rho_realized = 0.0;
  int k = 0;           // complex channel uses
  int latent_c = 0;    // final encoder channels; latent length = 2k = latent_c*(h/4)*(w/4)
  double power = 1.0;  // P of the power constraint
  std::uint64_t seed = 0;
  std::vector<ConvLayerParams> enc, dec;

  int latent_len() const { return 2 * k; }
};

inline constexpr int kConvKernel = 5;

inline double kaiming_bound(int in_c, int kernel) {
  return std::sqrt(6.0 / (static_cast<double>(in_c) * kernel * kernel));
}

// Final-layer channel count: latent length latent_c*(H/4)(W/4) must be even
// (it packs into k complex symbols) and k = len/2 as close as possible to
// round(rho*n). Exact rho is often unrealizable; rho_realized reports k/n.
inline int plan_latent_channels(int h, int w, double rho) {
  const int s = (h / 4) * (w / 4);
  const double n = static_cast<double>(h) * w;
  const double target_k = std::floor(rho * n + 0.5);
  int best_c = -1;
  double best_err = 0.0;
  const int c_hi = std::max(2, static_cast<int>(2.0 * target_k / s) + 2);
  for (int c = 1; c <= c_hi; ++c) {
    if ((static_cast<long long>(c) * s) % 2 != 0) continue;
    const double err = std::abs(static_cast<double>(c) * s / 2.0 - target_k);
    if (best_c < 0 || err < best_err) {
      best_c = c;
      best_err = err;
    }
  }
  if (best_c < 0) throw Error("jscc: no realizable latent size");
  return best_c;
}

inline JsccParams init_params(std::uint64_t seed, double rho, int height, int width) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error("jscc: rho must be in (0,1)");
  if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0)
    throw Error("jscc: image dims must be multiples of 4, got " + std::to_string(height) + "x" +
                std::to_string(width));
  JsccParams p;
  p.height = height;
  p.width = width;
  p.rho_target = rho;
  p.seed = seed;
  p.latent_c = plan_latent_channels(height, width, rho);
  p.k = p.latent_c * (height / 4) * (width / 4) / 2;
  p.rho_realized = static_cast<double>(p.k) / (static_cast<double>(height) * width);

  const Rng root(seed);
  auto make_layer = [&](int in_c, int out_c, int stride, bool transpose, bool activation,
                        std::uint64_t tag, int idx) {
    ConvLayerParams l;
    l.stride = stride;
    l.out_pad = (transpose && stride == 2) ? 1 : 0;
    l.transpose = transpose;
    l.activation = activation;
    l.w = transpose ? Tensor::zeros({in_c, out_c, kConvKernel, kConvKernel})
                    : Tensor::zeros({out_c, in_c, kConvKernel, kConvKernel});
    l.b = Tensor::zeros({out_c});
    l.slope = Tensor::scalar(0.25);
    const double bound = kaiming_bound(in_c, kConvKernel);
    Rng r = root.derived(tag, static_cast<std::uint64_t>(idx));
    for (auto& v : l.w.data) v = r.uniform(-bound, bound);
    return l;
  };
  const int widths[4] = {16, 32, 32, 32};
  // encoder: 1 -> 16 -> 32 -> 32 -> 32 -> latent_c, strides 2,2,1,1,1
  p.enc.push_back(make_layer(1, widths[0], 2, false, true, 1, 0));
  p.enc.push_back(make_layer(widths[0], widths[1], 2, false, true, 1, 1));
  p.enc.push_back(make_layer(widths[1], widths[2], 1, false, true, 1, 2));
  p.enc.push_back(make_layer(widths[2], widths[3], 1, false, true, 1, 3));
  p.enc.push_back(make_layer(widths[3], p.latent_c, 1, false, true, 1, 4));
  // decoder mirror: latent_c -> 32 -> 32 -> 32 -> 16 -> 1, strides 1,1,1,2,2
  p.dec.push_back(make_layer(p.latent_c, widths[3], 1, true, true, 2, 0));
  p.dec.push_back(make_layer(widths[3], widths[2], 1, true, true, 2, 1));
  p.dec.push_back(make_layer(widths[2], widths[1], 1, true, true, 2, 2));
  p.dec.push_back(make_layer(widths[1], widths[0], 2, true, true, 2, 3));
  p.dec.push_back(make_layer(widths[0], 1, 2, true, false, 2, 4));
  return p;
}

// Canonical flat parameter order: every trainable tensor of every layer.
inline std::vector<Tensor*> param_tensors(JsccParams& p) {
  std::vector<Tensor*> out;
  for (auto* half : {&p.enc, &p.dec}) {
    for (auto& l : *half) {
      out.push_back(&l.w);
      out.push_back(&l.b);
      if (l.activation) out.push_back(&l.slope);
    }
  }
  return out;
}

struct PipelineNodes {
  int x = -1;       // image leaf {1,H,W}
  int latent = -1;  // s = f_theta(x), {2k}
  int z = -1;       // power-normalized symbols {2k}
  int ytilde = -1;  // channel output {2k}
  int xhat = -1;    // reconstruction {1,H,W}
  int mse = -1;
  int loss = -1;  // mse scaled by loss_scale
  std::vector<int> params;  // leaves aligned with param_tensors()
};

namespace detail {

inline int build_encoder_chain(Graph& g, int x, const JsccParams& p, std::vector<int>& param_nodes) {
  int cur = g.affine(x, 2.0, -1.0);  // input normalization [0,1] -> [-1,1]
  for (const auto& l : p.enc) {
    const int w = g.leaf(l.w.shape);
    const int b = g.leaf(l.b.shape);
    param_nodes.push_back(w);
    param_nodes.push_back(b);
    cur = g.conv2d(cur, w, b, l.stride);
    if (l.activation) {
      const int s = g.leaf(l.slope.shape);
      param_nodes.push_back(s);
      cur = g.prelu(cur, s);
    }
  }
  return g.reshape(cur, {p.latent_len()});
}

inline int build_decoder_chain(Graph& g, int y, const JsccParams& p, std::vector<int>& param_nodes) {
  int cur = g.reshape(y, {p.latent_c, p.height / 4, p.width / 4});
  for (const auto& l : p.dec) {
    const int w = g.leaf(l.w.shape);
    const int b = g.leaf(l.b.shape);
    param_nodes.push_back(w);
    param_nodes.push_back(b);
    cur = g.conv_transpose2d(cur, w, b, l.stride, l.out_pad);
    if (l.activation) {
      const int s = g.leaf(l.slope.shape);
      param_nodes.push_back(s);
      cur = g.prelu(cur, s);
    }
  }
  return g.sigmoid(cur);
}

}  // namespace detail

// Full per-image pipeline x -> encoder -> power norm -> channel -> decoder
// with an in-graph MSE-against-x loss scaled by loss_scale (1/B in training).
inline PipelineNodes build_pipeline(Graph& g, const JsccParams& p, const ChannelRealization& chan,
                                    double loss_scale = 1.0) {
  PipelineNodes n;
  n.x = g.leaf({1, p.height, p.width});
  n.latent = detail::build_encoder_chain(g, n.x, p, n.params);
  n.z = g.power_normalize(n.latent, p.power);
  n.ytilde = add_channel_node(g, n.z, chan);
  n.xhat = detail::build_decoder_chain(g, n.ytilde, p, n.params);
  n.mse = g.mse(n.xhat, n.x);
  n.loss = g.scale(n.mse, loss_scale);
  return n;
}

inline void bind_params(const JsccParams& p, const PipelineNodes& n,
                        std::unordered_map<int, const Tensor*>& feeds) {
  // param_tensors is const-incompatible by design; bind from a const ref here
  std::size_t i = 0;
  auto bind_half = [&](const std::vector<ConvLayerParams>& half) {
    for (const auto& l : half) {
      feeds[n.params[i++]] = &l.w;
      feeds[n.params[i++]] = &l.b;
      if (l.activation) feeds[n.params[i++]] = &l.slope;
    }
  };
  bind_half(p.enc);
  bind_half(p.dec);
}

// s = f_theta(x); forward-only convenience used by evaluation paths.
inline Tensor encode(const Tensor& image, const JsccParams& p) {
  if (image.shape != std::vector<int>{1, p.height, p.width} &&
      image.shape != std::vector<int>{p.height, p.width})
    throw Error("encode: image shape " + shape_str(image.shape) + " does not match checkpoint " +
                std::to_string(p.height) + "x" + std::to_string(p.width));
  Graph g;
  std::vector<int> param_nodes;
  const int x = g.leaf({1, p.height, p.width});
  const int latent = detail::build_encoder_chain(g, x, p, param_nodes);
  std::unordered_map<int, const Tensor*> feeds;
  Tensor img3 = image;
  img3.shape = {1, p.height, p.width};
  feeds[x] = &img3;
  std::size_t i = 0;
  for (const auto& l : p.enc) {
    feeds[param_nodes[i++]] = &l.w;
    feeds[param_nodes[i++]] = &l.b;
    if (l.activation) feeds[param_nodes[i++]] = &l.slope;
  }
  g.forward(feeds);
  return Tensor({p.latent_len()}, g.value(latent));
}

// z = s * sqrt(kP/||s||^2), interpreted as k complex symbols.
inline Tensor power_normalize(const Tensor& s, double power) {
  if (s.size() == 0 || s.size() % 2 != 0) throw Error("power_normalize: length must be 2k");
  double s2 = 0.0;
  for (double v : s.data) s2 += v * v;
  if (s2 == 0.0) throw Error("power_normalize: zero latent cannot be normalized");
  const double k = static_cast<double>(s.size()) / 2.0;
  const double alpha = std::sqrt(k * power / s2);
  Tensor z = s;
  for (double& v : z.data) v *= alpha;
  return z;
}

// xhat = g_phi(ytilde), values in (0,1).
inline Tensor decode(const Tensor& ytilde, const JsccParams& p) {
  if (ytilde.size() != p.latent_len())
    throw Error("decode: expected length " + std::to_string(p.latent_len()) + ", got " +
                std::to_string(ytilde.size()));
  Graph g;
  std::vector<int> param_nodes;
  const int y = g.leaf({p.latent_len()});
  const int xhat = detail::build_decoder_chain(g, y, p, param_nodes);
  std::unordered_map<int, const Tensor*> feeds;
  feeds[y] = &ytilde;
  std::size_t i = 0;
  for (const auto& l : p.dec) {
    feeds[param_nodes[i++]] = &l.w;
    feeds[param_nodes[i++]] = &l.b;
    if (l.activation) feeds[param_nodes[i++]] = &l.slope;
  }
  g.forward(feeds);
  return Tensor({1, p.height, p.width}, g.value(xhat));
}

// ---- checkpoint container (text, version 1) --------------------------------
// Doubles are serialized as C hexfloats, which round-trip bit-exactly.

namespace detail {

inline std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline void write_tensor_line(std::ostream& os, const char* name, const Tensor& t) {
  os << name;
  for (double v : t.data) os << ' ' << hex_double(v);
  os << '\n';
}

inline void read_tensor_line(std::istream& is, const char* name, Tensor& t) {
  std::string line;
  if (!std::getline(is, line)) throw Error("checkpoint: truncated at " + std::string(name));
  std::istringstream ss(line);
  std::string tag;
  ss >> tag;
  if (tag != name) throw Error("checkpoint: expected '" + std::string(name) + "', got '" + tag + "'");
  for (auto& v : t.data) {
    std::string tok;
    if (!(ss >> tok)) throw Error("checkpoint: short data for " + std::string(name));
    v = std::strtod(tok.c_str(), nullptr);
  }
  std::string extra;
  if (ss >> extra) throw Error("checkpoint: trailing data for " + std::string(name));
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const JsccParams& p) {
  os << "topojscc-checkpoint v1\n";
  os << "height " << p.height << "\n";
  os << "width " << p.width << "\n";
  os << "rho_target " << detail::hex_double(p.rho_target) << "\n";
  os << "rho_realized " << detail::hex_double(p.rho_realized) << "\n";
  os << "k " << p.k << "\n";
  os << "latent_c " << p.latent_c << "\n";
  os << "power " << detail::hex_double(p.power) << "\n";
  os << "seed " << p.seed << "\n";
  auto dump_half = [&](const char* tag, const std::vector<ConvLayerParams>& half) {
    os << tag << " " << half.size() << "\n";
    for (const auto& l : half) {
      os << "layer " << (l.transpose ? "tconv" : "conv") << ' ' << l.stride << ' ' << l.out_pad << ' '
         << (l.activation ? 1 : 0);
      for (int d : l.w.shape) os << ' ' << d;
      os << '\n';
      detail::write_tensor_line(os, "w", l.w);
      detail::write_tensor_line(os, "b", l.b);
      detail::write_tensor_line(os, "slope", l.slope);
    }
  };
  dump_half("encoder", p.enc);
  dump_half("decoder", p.dec);
  os << "end\n";
}

inline JsccParams load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "topojscc-checkpoint v1")
    throw Error("checkpoint: bad or unsupported header: '" + line + "'");
  JsccParams p;
  auto read_kv = [&](const char* key) -> std::string {
    if (!std::getline(is, line)) throw Error("checkpoint: truncated before " + std::string(key));
    std::istringstream ss(line);
    std::string k, v;
    ss >> k >> v;
    if (k != key) throw Error("checkpoint: expected key '" + std::string(key) + "', got '" + k + "'");
    return v;
  };
  p.height = std::stoi(read_kv("height"));
  p.width = std::stoi(read_kv("width"));
  p.rho_target = std::strtod(read_kv("rho_target").c_str(), nullptr);
  p.rho_realized = std::strtod(read_kv("rho_realized").c_str(), nullptr);
  p.k = std::stoi(read_kv("k"));
  p.latent_c = std::stoi(read_kv("latent_c"));
  p.power = std::strtod(read_kv("power").c_str(), nullptr);
  p.seed = std::stoull(read_kv("seed"));
  auto load_half = [&](const char* tag, std::vector<ConvLayerParams>& half) {
    const int count = std::stoi(read_kv(tag));
    half.clear();
    for (int i = 0; i < count; ++i) {
      if (!std::getline(is, line)) throw Error("checkpoint: truncated layer header");
      std::istringstream ss(line);
      std::string word, kind;
      ss >> word >> kind;
      if (word != "layer" || (kind != "conv" && kind != "tconv"))
        throw Error("checkpoint: bad layer header: " + line);
      ConvLayerParams l;
      l.transpose = kind == "tconv";
      int act = 1;
      std::vector<int> ws(4);
      ss >> l.stride >> l.out_pad >> act >> ws[0] >> ws[1] >> ws[2] >> ws[3];
      if (!ss) throw Error("checkpoint: bad layer header: " + line);
      l.activation = act != 0;
      l.w = Tensor::zeros(ws);
      l.b = Tensor::zeros({l.transpose ? ws[1] : ws[0]});
      l.slope = Tensor::scalar(0.0);
      detail::read_tensor_line(is, "w", l.w);
      detail::read_tensor_line(is, "b", l.b);
      detail::read_tensor_line(is, "slope", l.slope);
      half.push_back(std::move(l));
    }
  };
  load_half("encoder", p.enc);
  load_half("decoder", p.dec);
  if (!std::getline(is, line) || line != "end") throw Error("checkpoint: missing end marker");
  return p;
}

inline void save_checkpoint_file(const std::string& path, const JsccParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path);
  save_checkpoint(os, p);
  if (!os) throw Error("failed writing checkpoint: " + path);
}

inline JsccParams load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  return load_checkpoint(is);
}

}  // namespace topojscc
