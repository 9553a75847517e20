#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "topojscc/channel.hpp"
#include "topojscc/cubical.hpp"
#include "topojscc/jscc.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/tensor.hpp"
#include "topojscc/topo_loss.hpp"
#include "topojscc/wasserstein.hpp"

namespace topojscc {

struct TrainConfig {
  double rho = 0.4;
  ChannelKind channel = ChannelKind::kAwgn;
  bool csi = false;  // perfect-CSI equalization at the receiver (Rayleigh ablation)
  double lambda_img = 1e-4;
  double lambda_lat = 1e-5;
  double anneal_t = 10.0;  // epochs to reach 1-1/e of the full weight
  int batch = 32;
  double lr = 1e-4;
  int max_epochs = 50;
  int patience = 10;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
  double power = 1.0;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::string dataset;  // path or synthetic spec; consumed by the CLI layer

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw Error("config: rho must be in (0,1)");
    if (lambda_img < 0.0 || lambda_lat < 0.0) throw Error("config: lambda weights must be >= 0");
    if (batch < 2) throw Error("config: batch must be >= 2 (latent Rips needs >= 2 points)");
    if (lr <= 0.0) throw Error("config: lr must be positive");
    if (max_epochs < 1) throw Error("config: max_epochs must be >= 1");
    if (patience < 1) throw Error("config: patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error("config: val_fraction in (0,1)");
    if (anneal_t <= 0.0) throw Error("config: anneal_T must be positive");
  }
};

// lambda(t) = lambda * (1 - e^(-t/T))
inline double anneal(double lambda, double t, double t_const) {
  if (t_const <= 0.0) throw Error("anneal: time constant must be positive");
  if (t < 0.0) throw Error("anneal: epoch index must be >= 0");
  return lambda * (1.0 - std::exp(-t / t_const));
}

// ---- Adam -------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

inline AdamState make_adam_state(const std::vector<Tensor*>& params) {
  AdamState s;
  for (const Tensor* t : params) {
    s.m.emplace_back(t->data.size(), 0.0);
    s.v.emplace_back(t->data.size(), 0.0);
  }
  return s;
}

inline void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw Error("adam: parameter/gradient/state arity mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->data;
    const auto& g = grads[i].data;
    if (w.size() != g.size()) throw Error("adam: gradient shape mismatch at tensor " + std::to_string(i));
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!std::isfinite(g[j]))
        throw Error("adam: non-finite gradient at tensor " + std::to_string(i) + " element " +
                    std::to_string(j) + " step " + std::to_string(state.step));
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---- batch objective ---------------------------------------------------------

struct BatchLossResult {
  double total = 0.0;
  double mse_mean = 0.0;
  double topo_img_mean = 0.0;
  double topo_lat = 0.0;
  std::vector<Tensor> grads;  // aligned with param_tensors()
  int degenerate_edges = 0;
};

// Eq-style batch objective: (1/B) sum_i [mse_i + lam_img * L_img_i]
// + lam_lat * L_lat(S, S~). Topological gradients enter the graphs through
// injected cotangents; channel noise is fixed by the supplied realizations.
inline BatchLossResult batch_loss(const std::vector<const Tensor*>& images, JsccParams& params,
                                  const std::vector<ChannelRealization>& chans, double lam_img,
                                  double lam_lat,
                                  const std::vector<const PersistenceDiagram*>* input_diagrams = nullptr) {
  const int b = static_cast<int>(images.size());
  if (b < 1) throw Error("batch_loss: empty batch");
  if (lam_lat > 0.0 && b < 2) throw Error("batch_loss: latent loss needs a batch of >= 2");
  if (static_cast<int>(chans.size()) != b) throw Error("batch_loss: one channel realization per image");

  BatchLossResult res;
  std::vector<Tensor*> ptensors = param_tensors(params);
  res.grads.reserve(ptensors.size());
  for (Tensor* t : ptensors) res.grads.push_back(Tensor::zeros(t->shape));

  std::vector<std::unique_ptr<Graph>> graphs;
  std::vector<PipelineNodes> nodes(b);
  graphs.reserve(b);
  const double inv_b = 1.0 / static_cast<double>(b);
  for (int i = 0; i < b; ++i) {
    graphs.push_back(std::make_unique<Graph>());
    nodes[i] = build_pipeline(*graphs[i], params, chans[i], inv_b);
    std::unordered_map<int, const Tensor*> feeds;
    feeds[nodes[i].x] = images[i];
    bind_params(params, nodes[i], feeds);
    graphs[i]->forward(feeds);
    res.mse_mean += graphs[i]->value(nodes[i].mse)[0] * inv_b;
  }

  if (lam_img > 0.0) {
    for (int i = 0; i < b; ++i) {
      const Tensor xhat(graphs[i]->node_shape(nodes[i].xhat), graphs[i]->value(nodes[i].xhat));
      TopoLossResult tl;
      if (input_diagrams && (*input_diagrams)[i] != nullptr) {
        tl = image_topo_loss_from_diagram(*(*input_diagrams)[i], xhat);
      } else {
        tl = image_topo_loss(*images[i], xhat);
      }
      res.topo_img_mean += tl.value * inv_b;
      std::vector<double> cot = tl.grad.data;
      for (double& v : cot) v *= lam_img * inv_b;
      graphs[i]->inject_gradient(nodes[i].xhat, cot);
    }
  }

  if (lam_lat > 0.0) {
    PointCloud s(b), st(b);
    for (int i = 0; i < b; ++i) {
      s[i] = graphs[i]->value(nodes[i].latent);
      st[i] = graphs[i]->value(nodes[i].ytilde);
    }
    const LatentTopoLossResult lt = latent_topo_loss(s, st);
    res.topo_lat = lt.value;
    res.degenerate_edges = lt.degenerate_edges;
    for (int i = 0; i < b; ++i) {
      std::vector<double> cs = lt.grad_s[i];
      for (double& v : cs) v *= lam_lat;
      graphs[i]->inject_gradient(nodes[i].latent, cs);
      std::vector<double> ct = lt.grad_stilde[i];
      for (double& v : ct) v *= lam_lat;
      graphs[i]->inject_gradient(nodes[i].ytilde, ct);
    }
  }

  for (int i = 0; i < b; ++i) {
    graphs[i]->backward(nodes[i].loss);
    for (std::size_t t = 0; t < ptensors.size(); ++t) {
      const auto& g = graphs[i]->gradient(nodes[i].params[t]);
      auto& acc = res.grads[t].data;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    }
  }

  res.total = res.mse_mean + lam_img * res.topo_img_mean + lam_lat * res.topo_lat;
  return res;
}

// ---- metrics ----------------------------------------------------------------

// 10*log10(peak^2/MSE) with peak 1; +inf sentinel for a zero-MSE match.
inline double psnr(const Tensor& x, const Tensor& xhat) {
  if (x.shape != xhat.shape) throw Error("psnr: shape mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < x.data.size(); ++j) {
    const double d = x.data[j] - xhat.data[j];
    s += d * d;
  }
  const double mse = s / static_cast<double>(x.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// ---- training loop ------------------------------------------------------------

struct TrainLogRow {
  int epoch = 0;
  double mse = 0.0, topo_img = 0.0, topo_lat = 0.0;
  double lambda_img_t = 0.0, lambda_lat_t = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  JsccParams best;
  std::vector<TrainLogRow> log;
  int best_epoch = -1;
  double best_val = 0.0;
  int epochs_run = 0;
};

inline void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "epoch,mse,topo_img,topo_lat,lambda_img,lambda_lat,val_loss\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_double(r.mse) << ',' << format_double(r.topo_img) << ','
       << format_double(r.topo_lat) << ',' << format_double(r.lambda_img_t) << ','
       << format_double(r.lambda_lat_t) << ',' << format_double(r.val_loss) << '\n';
  }
}

namespace detail {

constexpr std::uint64_t kTagSplit = 11, kTagShuffle = 12, kTagSnr = 13, kTagChan = 14, kTagVal = 15;

// Validation loss with the *full* (un-annealed) weights on a frozen noise set,
// so early stopping compares epochs on one fixed objective.
inline double validation_loss(JsccParams& params, const std::vector<Tensor>& images,
                              const std::vector<int>& val_idx,
                              const std::vector<ChannelRealization>& val_chans,
                              const TrainConfig& cfg,
                              const std::vector<PersistenceDiagram>& diagram_cache) {
  double mse_sum = 0.0, img_sum = 0.0, lat_sum = 0.0;
  int lat_batches = 0;
  const int n = static_cast<int>(val_idx.size());
  for (int start = 0; start < n;) {
    const int bsz = std::min(cfg.batch, n - start);
    std::vector<std::unique_ptr<Graph>> graphs;
    std::vector<PipelineNodes> nodes(bsz);
    PointCloud s(bsz), st(bsz);
    for (int i = 0; i < bsz; ++i) {
      const int idx = val_idx[start + i];
      graphs.push_back(std::make_unique<Graph>());
      nodes[i] = build_pipeline(*graphs[i], params, val_chans[start + i], 1.0);
      std::unordered_map<int, const Tensor*> feeds;
      feeds[nodes[i].x] = &images[idx];
      bind_params(params, nodes[i], feeds);
      graphs[i]->forward(feeds);
      mse_sum += graphs[i]->value(nodes[i].mse)[0];
      if (cfg.lambda_img > 0.0) {
        const Tensor xhat(graphs[i]->node_shape(nodes[i].xhat), graphs[i]->value(nodes[i].xhat));
        img_sum += image_topo_loss_from_diagram(diagram_cache[idx], xhat).value;
      }
      s[i] = graphs[i]->value(nodes[i].latent);
      st[i] = graphs[i]->value(nodes[i].ytilde);
    }
    if (cfg.lambda_lat > 0.0 && bsz >= 2) {
      lat_sum += latent_topo_loss(s, st).value;
      ++lat_batches;
    }
    start += bsz;
  }
  double loss = mse_sum / n + cfg.lambda_img * (img_sum / n);
  if (lat_batches > 0) loss += cfg.lambda_lat * (lat_sum / lat_batches);
  return loss;
}

}  // namespace detail

// Adam training with per-mini-batch SNR sampling, annealed topological weights
// and early stopping on validation loss; returns the best checkpoint and the
// per-epoch log.
inline TrainResult train(const TrainConfig& cfg, const std::vector<Tensor>& images) {
  cfg.validate();
  if (images.empty()) throw Error("train: empty dataset");
  for (const auto& im : images)
    if (im.shape != images[0].shape) throw Error("train: images must share one shape");
  int h = 0, w = 0;
  detail::image_dims(images[0], h, w);

  const Rng root(cfg.seed);
  const int n = static_cast<int>(images.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng split_rng = root.derived(detail::kTagSplit);
  split_rng.shuffle(idx);
  const int n_val = std::max(1, static_cast<int>(std::floor(cfg.val_fraction * n)));
  if (n_val >= n) throw Error("train: dataset too small for the validation split");
  std::vector<int> val_idx(idx.begin(), idx.begin() + n_val);
  std::vector<int> train_idx(idx.begin() + n_val, idx.end());

  JsccParams params = init_params(cfg.seed, cfg.rho, h, w);
  std::vector<Tensor*> ptensors = param_tensors(params);
  AdamState adam = make_adam_state(ptensors);

  // exact-value diagrams of the clean inputs, computed once
  std::vector<PersistenceDiagram> diagram_cache;
  if (cfg.lambda_img > 0.0) {
    diagram_cache.resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) diagram_cache[i] = cubical_diagram(images[i], 1);
  } else {
    diagram_cache.resize(images.size());
  }

  // frozen validation channel set: SNR cycles the training grid per item
  std::vector<ChannelRealization> val_chans;
  val_chans.reserve(val_idx.size());
  for (std::size_t j = 0; j < val_idx.size(); ++j) {
    Rng r = root.derived(detail::kTagVal, j);
    const double snr = training_snr_set()[j % training_snr_set().size()];
    val_chans.push_back(draw_channel(params.k, cfg.channel, snr, r, cfg.power));
    if (cfg.csi && cfg.channel == ChannelKind::kRayleigh)
      val_chans.back() = val_chans.back().equalized();
  }

  TrainResult out;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double li = anneal(cfg.lambda_img, epoch, cfg.anneal_t);
    const double ll = anneal(cfg.lambda_lat, epoch, cfg.anneal_t);
    Rng shuffle_rng = root.derived(detail::kTagShuffle, epoch);
    shuffle_rng.shuffle(train_idx);

    double ep_mse = 0.0, ep_img = 0.0, ep_lat = 0.0;
    int n_batches = 0;
    for (int start = 0, bi = 0; start + 1 < static_cast<int>(train_idx.size()); bi++) {
      const int bsz = std::min<int>(cfg.batch, static_cast<int>(train_idx.size()) - start);
      if (bsz < 2) break;
      Rng snr_rng = root.derived(detail::kTagSnr, epoch, bi);
      const double snr = sample_training_snr(snr_rng);
      std::vector<const Tensor*> batch(bsz);
      std::vector<ChannelRealization> chans;
      std::vector<const PersistenceDiagram*> dgms(bsz, nullptr);
      chans.reserve(bsz);
      for (int i = 0; i < bsz; ++i) {
        const int id = train_idx[start + i];
        batch[i] = &images[id];
        Rng chan_rng = root.derived(detail::kTagChan, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(bi) << 20 | static_cast<std::uint64_t>(i));
        chans.push_back(draw_channel(params.k, cfg.channel, snr, chan_rng, cfg.power));
        if (cfg.csi && cfg.channel == ChannelKind::kRayleigh) chans.back() = chans.back().equalized();
        if (li > 0.0) dgms[i] = &diagram_cache[id];
      }
      BatchLossResult bl = batch_loss(batch, params, chans, li, ll, li > 0.0 ? &dgms : nullptr);
      adam_step(ptensors, bl.grads, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      ep_mse += bl.mse_mean;
      ep_img += bl.topo_img_mean;
      ep_lat += bl.topo_lat;
      ++n_batches;
      start += bsz;
    }
    if (n_batches == 0) throw Error("train: training split smaller than a 2-image batch");

    const double val =
        detail::validation_loss(params, images, val_idx, val_chans, cfg, diagram_cache);
    TrainLogRow row;
    row.epoch = epoch;
    row.mse = ep_mse / n_batches;
    row.topo_img = ep_img / n_batches;
    row.topo_lat = ep_lat / n_batches;
    row.lambda_img_t = li;
    row.lambda_lat_t = ll;
    row.val_loss = val;
    out.log.push_back(row);

    if (val < best_val) {
      best_val = val;
      out.best = params;
      out.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    out.epochs_run = epoch + 1;
    if (since_best >= cfg.patience) break;
  }
  out.best_val = best_val;
  if (out.best_epoch < 0) {
    out.best = params;
    out.best_epoch = out.epochs_run - 1;
  }
  return out;
}

// ---- evaluation sweeps ---------------------------------------------------------

enum class SweepAxis { kSnr, kBandwidth };

struct SweepRecord {
  std::string axis;
  double value = 0.0;
  double psnr_db = 0.0;
  double wd0 = 0.0, wd1 = 0.0, wd_total = 0.0;
  std::uint64_t seed = 0;
};

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
  os << "axis,value,psnr_db,wdist0,wdist1,wdist_total,seed\n";
  for (const auto& r : records) {
    os << r.axis << ',' << format_double(r.value) << ',' << format_double(r.psnr_db) << ','
       << format_double(r.wd0) << ',' << format_double(r.wd1) << ',' << format_double(r.wd_total)
       << ',' << r.seed << '\n';
  }
}

struct SweepOptions {
  SweepAxis axis = SweepAxis::kSnr;
  std::vector<double> values;
  ChannelKind kind = ChannelKind::kAwgn;
  bool csi = false;
  int n_runs = 1;
  std::uint64_t seed = 1;
  int snap_levels = 64;   // 0: exact intensities
  double fixed_snr_db = 15.0;  // SNR used by the bandwidth sweep
  int workers = 0;        // 0: hardware concurrency
};

// Mean PSNR and mean per-dimension 2-Wasserstein distance between input and
// reconstruction diagrams over the test set, one record per (value, run).
// SNR sweeps take one checkpoint; bandwidth sweeps one checkpoint per rho.
inline std::vector<SweepRecord> evaluate_sweep(const std::vector<const JsccParams*>& checkpoints,
                                               const std::vector<Tensor>& test_images,
                                               const SweepOptions& opt) {
  if (test_images.empty()) throw Error("evaluate_sweep: empty test set");
  if (opt.values.empty()) throw Error("evaluate_sweep: no axis values");
  if (opt.n_runs < 1) throw Error("evaluate_sweep: n_runs must be >= 1");
  if (opt.axis == SweepAxis::kSnr) {
    if (checkpoints.size() != 1) throw Error("evaluate_sweep: SNR sweep takes exactly one checkpoint");
  } else {
    if (checkpoints.size() != opt.values.size())
      throw Error("evaluate_sweep: bandwidth sweep needs one checkpoint per rho value");
    for (std::size_t i = 0; i < opt.values.size(); ++i)
      if (std::abs(checkpoints[i]->rho_target - opt.values[i]) > 1e-9)
        throw Error("evaluate_sweep: missing checkpoint for rho=" + format_double(opt.values[i]));
  }

  // clean-input diagrams per (checkpoint grid) are shared across runs
  std::vector<PersistenceDiagram> input_dgms(test_images.size());
  std::vector<Tensor> snapped_inputs(test_images.size());
  for (std::size_t i = 0; i < test_images.size(); ++i) {
    snapped_inputs[i] = opt.snap_levels > 0 ? snap_levels(test_images[i], opt.snap_levels) : test_images[i];
    input_dgms[i] = cubical_diagram(snapped_inputs[i], 1);
  }

  struct Item {
    int vi, run;
  };
  std::vector<Item> items;
  for (int vi = 0; vi < static_cast<int>(opt.values.size()); ++vi)
    for (int run = 0; run < opt.n_runs; ++run) items.push_back({vi, run});
  std::vector<SweepRecord> records(items.size());

  const Rng root(opt.seed);
  auto run_item = [&](const Item& it, SweepRecord& rec) {
    const JsccParams& params = opt.axis == SweepAxis::kSnr ? *checkpoints[0] : *checkpoints[it.vi];
    const double snr = opt.axis == SweepAxis::kSnr ? opt.values[it.vi] : opt.fixed_snr_db;
    const Rng item_rng = root.derived(101, it.vi, it.run);
    double wd0 = 0.0, wd1 = 0.0, psnr_sum = 0.0;
    bool psnr_inf = false;
    for (std::size_t i = 0; i < test_images.size(); ++i) {
      Rng chan_rng = item_rng.derived(i);
      const Tensor s = encode(test_images[i], params);
      const Tensor z = power_normalize(s, params.power);
      auto [y, real] = transmit(z.data, opt.kind, snr, chan_rng, params.power);
      if (opt.csi && opt.kind == ChannelKind::kRayleigh) y = real.equalized().apply(z.data);
      const Tensor xhat = decode(Tensor({params.latent_len()}, y), params);
      Tensor xin = test_images[i];
      xin.shape = xhat.shape;
      const double ps = psnr(xin, xhat);
      if (std::isinf(ps)) psnr_inf = true;
      else psnr_sum += ps;
      const Tensor snapped_hat = opt.snap_levels > 0 ? snap_levels(xhat, opt.snap_levels) : xhat;
      const PersistenceDiagram dh = cubical_diagram(snapped_hat, 1);
      wd0 += wasserstein(input_dgms[i].restrict_dim(0), dh.restrict_dim(0), 2.0).cost;
      wd1 += wasserstein(input_dgms[i].restrict_dim(1), dh.restrict_dim(1), 2.0).cost;
    }
    const double denom = static_cast<double>(test_images.size());
    rec.axis = opt.axis == SweepAxis::kSnr ? "snr" : "bw";
    rec.value = opt.values[it.vi];
    rec.psnr_db = psnr_inf ? std::numeric_limits<double>::infinity() : psnr_sum / denom;
    rec.wd0 = wd0 / denom;
    rec.wd1 = wd1 / denom;
    rec.wd_total = rec.wd0 + rec.wd1;
    rec.seed = item_rng.seed();
  };

  int workers = opt.workers > 0 ? opt.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(items.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) run_item(items[i], records[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= items.size()) return;
          run_item(items[i], records[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return records;
}

// ---- weight calibration ---------------------------------------------------------

struct CalibrationReport {
  double mse_mag = 0.0;
  double topo_img_mag = 0.0;
  double topo_lat_mag = 0.0;
  double fraction = 0.1;
  double lambda_img_rec = 0.0;
  double lambda_lat_rec = 0.0;
};

// Stage 1 of the weight-selection procedure: measure the unweighted loss
// magnitudes of a frozen model on a validation batch and suggest weights that
// make each topological term a small fraction of the reconstruction loss.
inline CalibrationReport calibrate(const JsccParams& frozen, const std::vector<Tensor>& val_images,
                                   ChannelKind kind, std::uint64_t seed, double fraction = 0.1,
                                   int batch = 32) {
  if (val_images.empty()) throw Error("calibrate: empty validation set");
  const int b = std::min<int>(batch, static_cast<int>(val_images.size()));
  CalibrationReport rep;
  rep.fraction = fraction;
  const Rng root(seed);
  PointCloud s(b), st(b);
  for (int i = 0; i < b; ++i) {
    Rng r = root.derived(7, i);
    const double snr = training_snr_set()[i % training_snr_set().size()];
    const Tensor lat = encode(val_images[i], frozen);
    const Tensor z = power_normalize(lat, frozen.power);
    auto [y, real] = transmit(z.data, kind, snr, r, frozen.power);
    const Tensor xhat = decode(Tensor({frozen.latent_len()}, y), frozen);
    Tensor xin = val_images[i];
    xin.shape = xhat.shape;
    double mse = 0.0;
    for (std::size_t j = 0; j < xin.data.size(); ++j) {
      const double d = xin.data[j] - xhat.data[j];
      mse += d * d;
    }
    rep.mse_mag += mse / static_cast<double>(xin.data.size()) / b;
    rep.topo_img_mag += image_topo_loss(xin, xhat).value / b;
    s[i] = lat.data;
    st[i] = y;
  }
  if (b >= 2) rep.topo_lat_mag = latent_topo_loss(s, st).value;
  rep.lambda_img_rec = rep.topo_img_mag > 0.0 ? fraction * rep.mse_mag / rep.topo_img_mag : 0.0;
  rep.lambda_lat_rec = rep.topo_lat_mag > 0.0 ? fraction * rep.mse_mag / rep.topo_lat_mag : 0.0;
  return rep;
}

struct GridSearchEntry {
  double lambda_img = 0.0, lambda_lat = 0.0;
  double val_psnr = 0.0, val_wdist = 0.0;
  bool recommended = false;
};

// Stage 2: short trainings over a small grid near the calibrated weights; the
// recommendation is the smallest Wasserstein distortion among entries whose
// PSNR stays within 0.5 dB of the best.
inline std::vector<GridSearchEntry> grid_search(TrainConfig base, const std::vector<Tensor>& images,
                                                const std::vector<std::pair<double, double>>& pairs,
                                                int epochs, double eval_snr_db = 10.0) {
  if (pairs.empty()) throw Error("grid_search: no candidate pairs");
  std::vector<GridSearchEntry> out;
  base.max_epochs = epochs;
  base.patience = epochs;
  for (const auto& [li, ll] : pairs) {
    TrainConfig cfg = base;
    cfg.lambda_img = li;
    cfg.lambda_lat = ll;
    TrainResult tr = train(cfg, images);
    // evaluate on the same held-out split the trainer used
    const Rng root(cfg.seed);
    std::vector<int> idx(images.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng = root.derived(detail::kTagSplit);
    split_rng.shuffle(idx);
    const int n_val = std::max(1, static_cast<int>(std::floor(cfg.val_fraction * images.size())));
    std::vector<Tensor> val_images;
    val_images.reserve(n_val);
    for (int i = 0; i < n_val; ++i) val_images.push_back(images[static_cast<std::size_t>(idx[i])]);
    SweepOptions opt;
    opt.axis = SweepAxis::kSnr;
    opt.values = {eval_snr_db};
    opt.kind = cfg.channel;
    opt.csi = cfg.csi;
    opt.n_runs = 1;
    opt.seed = cfg.seed;
    std::vector<const JsccParams*> cks{&tr.best};
    const auto recs = evaluate_sweep(cks, val_images, opt);
    GridSearchEntry e;
    e.lambda_img = li;
    e.lambda_lat = ll;
    e.val_psnr = recs[0].psnr_db;
    e.val_wdist = recs[0].wd_total;
    out.push_back(e);
  }
  double best_psnr = -std::numeric_limits<double>::infinity();
  for (const auto& e : out) best_psnr = std::max(best_psnr, e.val_psnr);
  int rec = -1;
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    if (out[i].val_psnr + 0.5 < best_psnr) continue;
    if (rec < 0 || out[i].val_wdist < out[rec].val_wdist) rec = i;
  }
  if (rec >= 0) out[rec].recommended = true;
  return out;
}

}  // namespace topojscc
