#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "topojscc/autodiff.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/tensor.hpp"

namespace topojscc {

enum class ChannelKind { kAwgn, kRayleigh };

inline ChannelKind channel_kind_from(const std::string& s) {
  if (s == "awgn") return ChannelKind::kAwgn;
  if (s == "rayleigh") return ChannelKind::kRayleigh;
  throw Error("unknown channel kind: " + s);
}

inline const char* channel_kind_name(ChannelKind k) {
  return k == ChannelKind::kAwgn ? "awgn" : "rayleigh";
}

// Everything needed to replay one transmission bitwise: the fading gain, the
// noise power and the realized noise samples (interleaved re/im).
struct ChannelRealization {
  ChannelKind kind = ChannelKind::kAwgn;
  double h_re = 1.0, h_im = 0.0;
  double n0 = 0.0;
  double snr_db = 0.0;
  std::vector<double> noise;

  std::vector<double> apply(const std::vector<double>& z) const {
    if (z.size() != noise.size()) throw Error("channel: symbol/noise length mismatch");
    std::vector<double> y(z.size());
    for (std::size_t j = 0; j + 1 < z.size(); j += 2) {
      y[j] = h_re * z[j] - h_im * z[j + 1] + noise[j];
      y[j + 1] = h_re * z[j + 1] + h_im * z[j] + noise[j + 1];
    }
    return y;
  }

  // Perfect-CSI receiver view: y/h, i.e. unit gain with noise/h.
  ChannelRealization equalized() const {
    ChannelRealization r = *this;
    const double mag2 = h_re * h_re + h_im * h_im;
    if (mag2 == 0.0) throw Error("channel: cannot equalize zero gain");
    for (std::size_t j = 0; j + 1 < noise.size(); j += 2) {
      const double nr = noise[j], ni = noise[j + 1];
      r.noise[j] = (nr * h_re + ni * h_im) / mag2;
      r.noise[j + 1] = (ni * h_re - nr * h_im) / mag2;
    }
    r.h_re = 1.0;
    r.h_im = 0.0;
    return r;
  }
};

// N0 = P / 10^(snr_db/10); +inf snr_db is the noiseless sentinel.
inline double noise_power(double power, double snr_db) {
  if (std::isnan(snr_db)) throw Error("channel: snr_db must be finite or +inf");
  if (std::isinf(snr_db)) {
    if (snr_db > 0) return 0.0;
    throw Error("channel: snr_db must be finite or +inf");
  }
  return power / std::pow(10.0, snr_db / 10.0);
}

// Draws h (Rayleigh: CN(0,1), constant per image) then k complex noise
// samples CN(0, N0), in that fixed order.
inline ChannelRealization draw_channel(int k, ChannelKind kind, double snr_db, Rng& rng,
                                       double power = 1.0) {
  if (k <= 0) throw Error("channel: k must be positive");
  ChannelRealization r;
  r.kind = kind;
  r.snr_db = snr_db;
  r.n0 = noise_power(power, snr_db);
  switch (kind) {
    case ChannelKind::kAwgn:
      break;
    case ChannelKind::kRayleigh: {
      const double s = std::sqrt(0.5);
      r.h_re = s * rng.normal();
      r.h_im = s * rng.normal();
      break;
    }
    default:
      throw Error("channel: unknown kind");
  }
  r.noise.assign(static_cast<std::size_t>(2) * k, 0.0);
  if (r.n0 > 0.0) {
    const double s = std::sqrt(r.n0 / 2.0);
    for (auto& v : r.noise) v = s * rng.normal();
  }
  return r;
}

// y = h z + n over k complex symbols; returns the received 2k reals and the
// realization for replay. Differentiable w.r.t. z with gradient conj(h).
inline std::pair<std::vector<double>, ChannelRealization> transmit(const std::vector<double>& z,
                                                                   ChannelKind kind, double snr_db,
                                                                   Rng& rng, double power = 1.0) {
  if (z.size() % 2 != 0 || z.empty()) throw Error("channel: symbol vector must hold 2k reals");
  ChannelRealization r = draw_channel(static_cast<int>(z.size() / 2), kind, snr_db, rng, power);
  return {r.apply(z), std::move(r)};
}

// Training SNR grid of the mini-batch sampler.
inline const std::vector<double>& training_snr_set() {
  static const std::vector<double> kSet{0.0, 5.0, 10.0, 15.0, 20.0};
  return kSet;
}

inline double sample_training_snr(Rng& rng) {
  const auto& set = training_snr_set();
  return set[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(set.size())))];
}

inline int add_channel_node(Graph& g, int z, const ChannelRealization& r) {
  return g.channel(z, r.h_re, r.h_im, r.noise);
}

}  // namespace topojscc
