// Command-line front end: dataset generation, persistence diagrams, diagram
// distances, training, evaluation sweeps, weight calibration and gradient
// checks. Exit codes: 0 ok, 1 domain error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topojscc/topojscc.hpp"

namespace fs = std::filesystem;
using namespace topojscc;

namespace {

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "inf" || tok == "+inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else {
      out.push_back(detail::parse_double(tok, "values"));
    }
  }
  if (out.empty()) throw Error("values: empty list");
  return out;
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig cfg;
  cfg.rho = config_double(c, "rho", cfg.rho);
  cfg.channel = channel_kind_from(config_str(c, "channel", "awgn"));
  cfg.csi = config_bool(c, "csi", cfg.csi);
  cfg.lambda_img = config_double(c, "lambda_img", cfg.lambda_img);
  cfg.lambda_lat = config_double(c, "lambda_lat", cfg.lambda_lat);
  cfg.anneal_t = config_double(c, "anneal_T", cfg.anneal_t);
  cfg.batch = config_int(c, "batch", cfg.batch);
  cfg.lr = config_double(c, "lr", cfg.lr);
  cfg.max_epochs = config_int(c, "max_epochs", cfg.max_epochs);
  cfg.patience = config_int(c, "patience", cfg.patience);
  cfg.seed = static_cast<std::uint64_t>(config_double(c, "seed", 1));
  cfg.val_fraction = config_double(c, "val_fraction", cfg.val_fraction);
  cfg.dataset = config_str(c, "dataset", "");
  return cfg;
}

void ensure_out_dir(const std::string& out) {
  if (!out.empty() && out != ".") fs::create_directories(out);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

struct GlobalOpts {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
  std::string out = ".";
  bool dump_config = false;
};

int cmd_gen(const GlobalOpts& g, const std::string& kind, int count, int height, int width) {
  SyntheticSpec spec;
  spec.kind = synthetic_kind_from(kind);
  spec.count = count;
  spec.h = height;
  spec.w = width;
  spec.seed = g.seed_set ? g.seed : 1;
  const Dataset d = gen_synthetic(spec);
  ensure_out_dir(g.out);
  for (std::size_t i = 0; i < d.images.size(); ++i) save_pgm(join_path(g.out, d.names[i]), d.images[i]);
  std::cout << "wrote " << d.images.size() << " images to " << g.out << "\n";
  return 0;
}

int cmd_ph(const GlobalOpts&, const std::string& image_path, const std::string& out_file, int max_dim,
           int levels) {
  Tensor img = load_pgm(image_path);
  if (levels > 0) img = snap_levels(img, levels);
  const PersistenceDiagram d = cubical_diagram(img, max_dim);
  if (out_file.empty()) {
    write_diagram_csv(std::cout, d);
  } else {
    std::ofstream os(out_file, std::ios::binary);
    if (!os) throw Error("cannot open " + out_file);
    write_diagram_csv(os, d);
  }
  return 0;
}

int cmd_wdist(const GlobalOpts&, const std::string& a_path, const std::string& b_path, double p) {
  std::ifstream ia(a_path), ib(b_path);
  if (!ia) throw Error("cannot open " + a_path);
  if (!ib) throw Error("cannot open " + b_path);
  const PersistenceDiagram a = read_diagram_csv(ia);
  const PersistenceDiagram b = read_diagram_csv(ib);
  double total = 0.0;
  for (int m = 0; m <= 1; ++m) {
    const double d = wasserstein(a.restrict_dim(m), b.restrict_dim(m), p).cost;
    total += d;
    std::cout << "wdist" << m << " " << format_double(d) << "\n";
  }
  std::cout << "wdist_total " << format_double(total) << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g) {
  if (g.config_path.empty()) throw Error("train: --config <file> is required");
  const Config c = parse_config_file(g.config_path);
  TrainConfig cfg = train_config_from(c);
  if (g.seed_set) cfg.seed = g.seed;
  if (cfg.dataset.empty()) throw Error("train: config needs dataset=<dir|synthetic:...>");
  const Dataset data = load_dataset(cfg.dataset, cfg.seed);
  const TrainResult res = train(cfg, data.images);
  ensure_out_dir(g.out);
  save_checkpoint_file(join_path(g.out, "checkpoint.txt"), res.best);
  {
    std::ofstream os(join_path(g.out, "train_log.csv"), std::ios::binary);
    if (!os) throw Error("cannot write train_log.csv");
    write_train_log_csv(os, res.log);
  }
  std::cout << "trained " << res.epochs_run << " epochs; best epoch " << res.best_epoch
            << " val_loss " << format_double(res.best_val) << "\n"
            << "checkpoint: " << join_path(g.out, "checkpoint.txt") << "\n";
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::vector<std::string>& ckpt_paths, const std::string& axis,
             const std::string& values_csv, const std::string& channel, int runs,
             const std::string& images_spec, double fixed_snr, int levels, bool csi) {
  SweepOptions opt;
  if (axis == "snr") opt.axis = SweepAxis::kSnr;
  else if (axis == "bw") opt.axis = SweepAxis::kBandwidth;
  else throw Error("eval: axis must be snr or bw");
  opt.values = parse_values(values_csv);
  opt.kind = channel_kind_from(channel);
  opt.n_runs = runs;
  opt.seed = g.seed_set ? g.seed : 1;
  opt.snap_levels = levels;
  opt.fixed_snr_db = fixed_snr;
  opt.csi = csi;
  std::vector<JsccParams> loaded;
  loaded.reserve(ckpt_paths.size());
  for (const auto& p : ckpt_paths) loaded.push_back(load_checkpoint_file(p));
  std::vector<const JsccParams*> cks;
  for (const auto& p : loaded) cks.push_back(&p);
  const Dataset data = load_dataset(images_spec, opt.seed);
  const auto records = evaluate_sweep(cks, data.images, opt);
  ensure_out_dir(g.out);
  const std::string path = join_path(g.out, "sweep.csv");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  write_sweep_csv(os, records);
  std::cout << "wrote " << records.size() << " records to " << path << "\n";
  return 0;
}

int cmd_calibrate(const GlobalOpts& g, const std::string& ckpt_path, const std::string& images_spec,
                  const std::string& channel, double fraction, int batch, bool grid, int grid_epochs) {
  const JsccParams params = load_checkpoint_file(ckpt_path);
  const std::uint64_t seed = g.seed_set ? g.seed : 1;
  const Dataset data = load_dataset(images_spec, seed);
  const ChannelKind kind = channel_kind_from(channel);
  const CalibrationReport rep = calibrate(params, data.images, kind, seed, fraction, batch);
  std::cout << "mse_magnitude " << format_double(rep.mse_mag) << "\n"
            << "topo_img_magnitude " << format_double(rep.topo_img_mag) << "\n"
            << "topo_lat_magnitude " << format_double(rep.topo_lat_mag) << "\n"
            << "recommended lambda_img " << format_double(rep.lambda_img_rec) << "\n"
            << "recommended lambda_lat " << format_double(rep.lambda_lat_rec) << "\n";
  if (grid) {
    if (g.config_path.empty()) throw Error("calibrate --grid needs --config for training settings");
    TrainConfig cfg = train_config_from(parse_config_file(g.config_path));
    cfg.seed = seed;
    std::vector<std::pair<double, double>> pairs;
    for (double fi : {0.5, 1.0, 2.0})
      for (double fl : {0.5, 1.0, 2.0})
        pairs.emplace_back(rep.lambda_img_rec * fi, rep.lambda_lat_rec * fl);
    const auto entries = grid_search(cfg, data.images, pairs, grid_epochs);
    std::cout << "lambda_img,lambda_lat,val_psnr,val_wdist,recommended\n";
    for (const auto& e : entries)
      std::cout << format_double(e.lambda_img) << ',' << format_double(e.lambda_lat) << ','
                << format_double(e.val_psnr) << ',' << format_double(e.val_wdist) << ','
                << (e.recommended ? 1 : 0) << "\n";
  }
  return 0;
}

int cmd_gradcheck(const GlobalOpts& g) {
  const auto results = run_gradcheck_suites(g.seed_set ? g.seed : 7);
  bool all_ok = true;
  for (const auto& r : results) {
    std::printf("%-26s %s  max_rel_err %.3e  tol %.0e  checked %d skipped %d\n", r.name.c_str(),
                r.pass ? "ok  " : "FAIL", r.max_rel_err, r.tolerance, r.checked, r.skipped);
    all_ok = all_ok && r.pass;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topology-aware deep joint source-channel coding"};
  app.require_subcommand(0, 1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--config", g.config_path, "flat key=value config file");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--dump-config", g.dump_config, "echo the normalized config and exit");

  auto* gen = app.add_subcommand("gen", "generate a synthetic PGM dataset");
  std::string gen_kind = "rings";
  int gen_count = 8, gen_h = 32, gen_w = 32;
  gen->add_option("--kind", gen_kind, "blobs|rings|grid-roads");
  gen->add_option("--count", gen_count, "number of images");
  gen->add_option("--height", gen_h, "image height");
  gen->add_option("--width", gen_w, "image width");

  auto* ph = app.add_subcommand("ph", "persistence diagram of one image");
  std::string ph_image, ph_out;
  int ph_maxdim = 1, ph_levels = 0;
  ph->add_option("--image", ph_image, "input PGM")->required();
  ph->add_option("--out-file", ph_out, "diagram CSV path (default: stdout)");
  ph->add_option("--max-dim", ph_maxdim, "0 or 1");
  ph->add_option("--levels", ph_levels, "snap to a uniform threshold grid (0 = exact)");

  auto* wd = app.add_subcommand("wdist", "p-Wasserstein distance between two diagram CSVs");
  std::string wd_a, wd_b;
  double wd_p = 2.0;
  wd->add_option("--a", wd_a, "first diagram CSV")->required();
  wd->add_option("--b", wd_b, "second diagram CSV")->required();
  wd->add_option("--p", wd_p, "Wasserstein order (default 2)");

  auto* tr = app.add_subcommand("train", "train a model from a config file");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints over an SNR or bandwidth sweep");
  std::vector<std::string> ev_ckpts;
  std::string ev_axis = "snr", ev_values = "0,5,10,15,20", ev_channel = "awgn", ev_images;
  int ev_runs = 1, ev_levels = 64;
  double ev_snr = 15.0;
  bool ev_csi = false;
  ev->add_option("--checkpoint", ev_ckpts, "checkpoint file (repeat per rho for bw sweeps)")->required();
  ev->add_option("--axis", ev_axis, "snr|bw");
  ev->add_option("--values", ev_values, "comma-separated axis values");
  ev->add_option("--channel", ev_channel, "awgn|rayleigh");
  ev->add_option("--runs", ev_runs, "independent runs per value");
  ev->add_option("--images", ev_images, "test set: PGM dir or synthetic:<kind>:<count>:<H>x<W>")->required();
  ev->add_option("--snr", ev_snr, "fixed SNR (dB) for bandwidth sweeps");
  ev->add_option("--levels", ev_levels, "threshold-grid levels for metric diagrams (0 = exact)");
  ev->add_flag("--csi", ev_csi, "perfect-CSI equalization under Rayleigh");

  auto* ca = app.add_subcommand("calibrate", "report loss magnitudes and recommend weights");
  std::string ca_ckpt, ca_images, ca_channel = "awgn";
  double ca_fraction = 0.1;
  int ca_batch = 32, ca_grid_epochs = 5;
  bool ca_grid = false;
  ca->add_option("--checkpoint", ca_ckpt, "frozen baseline checkpoint")->required();
  ca->add_option("--images", ca_images, "validation images (dir or synthetic spec)")->required();
  ca->add_option("--channel", ca_channel, "awgn|rayleigh");
  ca->add_option("--fraction", ca_fraction, "target topo/mse contribution ratio");
  ca->add_option("--batch", ca_batch, "validation batch size");
  ca->add_flag("--grid", ca_grid, "run the short grid-search driver (needs --config)");
  ca->add_option("--grid-epochs", ca_grid_epochs, "epochs per grid-search training");

  auto* gc = app.add_subcommand("gradcheck", "run the finite-difference suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g.dump_config) {
      if (g.config_path.empty()) throw Error("--dump-config needs --config <file>");
      dump_config(std::cout, parse_config_file(g.config_path));
      return 0;
    }
    if (gen->parsed()) return cmd_gen(g, gen_kind, gen_count, gen_h, gen_w);
    if (ph->parsed()) return cmd_ph(g, ph_image, ph_out, ph_maxdim, ph_levels);
    if (wd->parsed()) return cmd_wdist(g, wd_a, wd_b, wd_p);
    if (tr->parsed()) return cmd_train(g);
    if (ev->parsed())
      return cmd_eval(g, ev_ckpts, ev_axis, ev_values, ev_channel, ev_runs, ev_images, ev_snr,
                      ev_levels, ev_csi);
    if (ca->parsed())
      return cmd_calibrate(g, ca_ckpt, ca_images, ca_channel, ca_fraction, ca_batch, ca_grid,
                           ca_grid_epochs);
    if (gc->parsed()) return cmd_gradcheck(g);
    std::cerr << app.help() << std::endl;
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
