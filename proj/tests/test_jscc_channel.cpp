#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "topojscc/channel.hpp"
#include "topojscc/jscc.hpp"
#include "topojscc/rng.hpp"

using namespace topojscc;

TEST(JsccInit, DeterministicAndBounded) {
  const JsccParams a = init_params(42, 0.4, 32, 32);
  const JsccParams b = init_params(42, 0.4, 32, 32);
  ASSERT_EQ(a.enc.size(), 5u);
  ASSERT_EQ(a.dec.size(), 5u);
  for (std::size_t i = 0; i < a.enc.size(); ++i) {
    EXPECT_EQ(a.enc[i].w.data, b.enc[i].w.data);
    const int in_c = a.enc[i].w.shape[1];
    const double bound = kaiming_bound(in_c, kConvKernel);
    for (double v : a.enc[i].w.data) EXPECT_LE(std::abs(v), bound);
    for (double v : a.enc[i].b.data) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_DOUBLE_EQ(a.enc[i].slope.data[0], 0.25);
  }
  const JsccParams c = init_params(42, 0.2, 32, 32);
  EXPECT_NE(c.latent_c, a.latent_c);
  EXPECT_THROW(init_params(1, 0.0, 32, 32), Error);
  EXPECT_THROW(init_params(1, 1.0, 32, 32), Error);
  EXPECT_THROW(init_params(1, 0.4, 30, 32), Error);
}

TEST(JsccInit, RealizedRhoIsClosestAchievable) {
  for (double rho : {0.05, 0.10, 0.20, 0.30, 0.40, 0.50}) {
    const JsccParams p = init_params(1, rho, 32, 32);
    const int s = 8 * 8;
    const double target_k = std::floor(rho * 1024.0 + 0.5);
    // no other even-length latent width gets closer
    const double err = std::abs(p.k - target_k);
    for (int c = 1; c <= 40; ++c) {
      if ((c * s) % 2 != 0) continue;
      EXPECT_LE(err, std::abs(c * s / 2.0 - target_k) + 1e-12) << "rho " << rho << " c " << c;
    }
    EXPECT_EQ(p.latent_len(), p.latent_c * s);
  }
}

TEST(JsccInit, ExactRhoWhenRealizable) {
  // 8x8 image, rho 0.25: n=64, target k=16, latent 2k=32 = 2*round(rho*n)
  const JsccParams p = init_params(3, 0.25, 8, 8);
  EXPECT_EQ(p.latent_len(), 2 * static_cast<int>(std::floor(0.25 * 64 + 0.5)));
  EXPECT_DOUBLE_EQ(p.rho_realized, 0.25);
}

TEST(Encode, ZeroWeightsGiveZeroLatent) {
  JsccParams p = init_params(5, 0.25, 8, 8);
  for (auto& l : p.enc)
    for (auto& v : l.w.data) v = 0.0;
  const Tensor x = Tensor::zeros({1, 8, 8});
  const Tensor s = encode(x, p);
  for (double v : s.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Encode, DeterministicAcrossRuns) {
  const JsccParams p = init_params(7, 0.4, 16, 16);
  Rng rng(9);
  Tensor x = Tensor::zeros({1, 16, 16});
  for (auto& v : x.data) v = rng.uniform();
  const Tensor a = encode(x, p);
  const Tensor b = encode(x, p);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.size(), p.latent_len());
}

TEST(Decode, ShapeContractAndSigmoidRange) {
  for (double rho : {0.1, 0.4}) {
    for (int hw : {8, 16}) {
      const JsccParams p = init_params(11, rho, hw, hw);
      Rng rng(13);
      Tensor y = Tensor::zeros({p.latent_len()});
      for (auto& v : y.data) v = rng.uniform(-2, 2);
      const Tensor xhat = decode(y, p);
      EXPECT_EQ(xhat.shape, (std::vector<int>{1, hw, hw}));
      for (double v : xhat.data) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
  }
  const JsccParams p = init_params(11, 0.4, 8, 8);
  EXPECT_THROW(decode(Tensor::zeros({p.latent_len() + 2}), p), Error);
}

TEST(PowerNormalize, FixedPointAndConstraint) {
  // k=4, P=1: a vector with ||s||^2 == 4 exactly is already normalized
  Tensor s = Tensor::zeros({8});
  s.data[0] = 2.0;
  const Tensor z = power_normalize(s, 1.0);
  EXPECT_EQ(z.data, s.data);

  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = Tensor::zeros({16});
    for (auto& x : v.data) x = rng.uniform(-3, 3);
    const Tensor zz = power_normalize(v, 1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < zz.data.size(); i += 2)
      sum += zz.data[i] * zz.data[i] + zz.data[i + 1] * zz.data[i + 1];
    EXPECT_NEAR(sum / 8.0, 1.0, 1e-12);  // (1/k) sum |z|^2 == P
  }
  EXPECT_THROW(power_normalize(Tensor::zeros({8}), 1.0), Error);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  const JsccParams p = init_params(21, 0.3, 16, 16);
  std::stringstream ss;
  save_checkpoint(ss, p);
  const std::string first = ss.str();
  const JsccParams q = load_checkpoint(ss);
  EXPECT_EQ(q.height, p.height);
  EXPECT_EQ(q.k, p.k);
  EXPECT_EQ(q.rho_realized, p.rho_realized);
  for (std::size_t i = 0; i < p.enc.size(); ++i) {
    EXPECT_EQ(q.enc[i].w.data, p.enc[i].w.data);
    EXPECT_EQ(q.enc[i].stride, p.enc[i].stride);
  }
  for (std::size_t i = 0; i < p.dec.size(); ++i) {
    EXPECT_EQ(q.dec[i].w.data, p.dec[i].w.data);
    EXPECT_EQ(q.dec[i].out_pad, p.dec[i].out_pad);
  }
  std::stringstream ss2;
  save_checkpoint(ss2, q);
  EXPECT_EQ(ss2.str(), first);  // byte-identical re-serialization

  std::stringstream bad("topojscc-checkpoint v0\n");
  EXPECT_THROW(load_checkpoint(bad), Error);
}

TEST(Channel, NoiselessSentinelIsExact) {
  Rng rng(17);
  std::vector<double> z(10);
  for (auto& v : z) v = rng.uniform(-1, 1);
  Rng crng(18);
  auto [y, real] = transmit(z, ChannelKind::kRayleigh, std::numeric_limits<double>::infinity(), crng);
  for (std::size_t i = 0; i + 1 < z.size(); i += 2) {
    EXPECT_DOUBLE_EQ(y[i], real.h_re * z[i] - real.h_im * z[i + 1]);
    EXPECT_DOUBLE_EQ(y[i + 1], real.h_re * z[i + 1] + real.h_im * z[i]);
  }
  EXPECT_DOUBLE_EQ(real.n0, 0.0);
}

TEST(Channel, AwgnNoisePowerMatchesNominal) {
  Rng rng(19);
  const int k = 100000;
  ChannelRealization r = draw_channel(k, ChannelKind::kAwgn, 0.0, rng, 1.0);
  EXPECT_DOUBLE_EQ(r.h_re, 1.0);
  EXPECT_DOUBLE_EQ(r.h_im, 0.0);
  double power = 0.0;
  for (int i = 0; i < k; ++i)
    power += r.noise[2 * i] * r.noise[2 * i] + r.noise[2 * i + 1] * r.noise[2 * i + 1];
  power /= k;
  EXPECT_NEAR(power, 1.0, 0.02);  // N0 = P/10^(0/10) = 1
}

TEST(Channel, RayleighGainSecondMoment) {
  Rng rng(23);
  double m2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Rng r = rng.derived(i);
    const ChannelRealization c = draw_channel(1, ChannelKind::kRayleigh, 10.0, r);
    m2 += c.h_re * c.h_re + c.h_im * c.h_im;
  }
  EXPECT_NEAR(m2 / n, 1.0, 0.02);
}

TEST(Channel, ReplayIsBitwise) {
  Rng rng(29);
  std::vector<double> z(64);
  for (auto& v : z) v = rng.uniform(-1, 1);
  Rng crng(31);
  auto [y, real] = transmit(z, ChannelKind::kRayleigh, 5.0, crng);
  EXPECT_EQ(real.apply(z), y);
  EXPECT_EQ(real.apply(z), y);
}

TEST(Channel, EqualizedInvertsGain) {
  Rng rng(37);
  std::vector<double> z(16);
  for (auto& v : z) v = rng.uniform(-1, 1);
  Rng crng(38);
  auto [y, real] = transmit(z, ChannelKind::kRayleigh, 200.0, crng);  // nearly noiseless
  const auto yeq = real.equalized().apply(z);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(yeq[i], z[i], 1e-8);
}

TEST(Channel, TrainingSnrSampler) {
  Rng rng(41);
  std::map<double, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double s = sample_training_snr(rng);
    ASSERT_TRUE(s == 0 || s == 5 || s == 10 || s == 15 || s == 20);
    counts[s]++;
  }
  // 3 sigma of a fair 5-way multinomial
  const double expect = n / 5.0;
  const double sigma = std::sqrt(n * 0.2 * 0.8);
  for (const auto& [v, c] : counts) EXPECT_NEAR(c, expect, 3 * sigma) << v;
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_training_snr(a), sample_training_snr(b));
}

TEST(Channel, UnknownKindStringThrows) {
  EXPECT_THROW(channel_kind_from("fancy"), Error);
  EXPECT_THROW(noise_power(1.0, std::numeric_limits<double>::quiet_NaN()), Error);
  EXPECT_THROW(noise_power(1.0, -std::numeric_limits<double>::infinity()), Error);
}
