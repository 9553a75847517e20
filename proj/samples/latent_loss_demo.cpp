// Transmits a small latent cloud through an AWGN channel and reports the
// latent topological loss at a few SNRs.

#include <cstdio>

#include "topojscc/channel.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/topo_loss.hpp"

int main() {
  using namespace topojscc;
  Rng rng(11);
  const int b = 16, dim = 8;
  PointCloud s(b);
  for (auto& p : s) {
    p.resize(dim);
    for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  }
  for (double snr : {0.0, 10.0, 20.0}) {
    PointCloud st(b);
    for (int i = 0; i < b; ++i) {
      Rng r = rng.derived(static_cast<std::uint64_t>(snr * 10), i);
      auto [y, real] = transmit(s[i], ChannelKind::kAwgn, snr, r);
      st[i] = y;
    }
    const auto res = latent_topo_loss(s, st);
    std::printf("snr %5.1f dB  latent loss %.4f (dim0 %.4f, dim1 %.4f)\n", snr, res.value,
                res.per_dim[0], res.per_dim[1]);
  }
  return 0;
}
