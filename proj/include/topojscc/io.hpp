#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "topojscc/cubical.hpp"
#include "topojscc/rng.hpp"
#include "topojscc/tensor.hpp"

namespace topojscc {

struct Dataset {
  std::vector<Tensor> images;  // {1,H,W}, values in [0,1]
  std::vector<std::string> names;
  std::string provenance;
};

// ---- PGM (binary P5, 8-bit) -----------------------------------------------

namespace detail {

inline int pgm_read_value(std::istream& is) {
  // skips whitespace and '#' comments inside the header
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
      continue;
    }
    if (std::isspace(c)) {
      is.get();
      continue;
    }
    break;
  }
  int v;
  if (!(is >> v)) throw Error("pgm: malformed header value");
  return v;
}

}  // namespace detail

inline Tensor load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("pgm: cannot open " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5') throw Error("pgm: not a binary P5 file: " + path);
  const int w = detail::pgm_read_value(is);
  const int h = detail::pgm_read_value(is);
  const int maxval = detail::pgm_read_value(is);
  if (w <= 0 || h <= 0) throw Error("pgm: bad dimensions in " + path);
  if (maxval != 255) throw Error("pgm: only 8-bit (maxval 255) supported: " + path);
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size()))
    throw Error("pgm: truncated pixel data in " + path);
  Tensor t = Tensor::zeros({1, h, w});
  for (std::size_t i = 0; i < raw.size(); ++i) t.data[i] = static_cast<double>(raw[i]) / 255.0;
  return t;
}

inline void save_pgm(const std::string& path, const Tensor& image) {
  int h = 0, w = 0;
  detail::image_dims(image, h, w);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("pgm: cannot open for writing: " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : image.data) {
    const double c = std::min(1.0, std::max(0.0, v));
    os.put(static_cast<char>(static_cast<int>(std::floor(c * 255.0 + 0.5))));
  }
  if (!os) throw Error("pgm: write failed: " + path);
}

// Loads every .pgm file of a directory in lexicographic filename order.
inline Dataset load_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("load_images: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (e.path().extension() == ".pgm") files.push_back(e.path().string());
  }
  if (files.empty()) throw Error("load_images: no .pgm files in " + dir);
  std::sort(files.begin(), files.end());
  Dataset d;
  d.provenance = dir;
  for (const auto& f : files) {
    Tensor img = load_pgm(f);
    if (!d.images.empty() && img.shape != d.images[0].shape)
      throw Error("load_images: mixed image sizes (" + f + ")");
    d.images.push_back(std::move(img));
    d.names.push_back(fs::path(f).filename().string());
  }
  return d;
}

// ---- synthetic topology-rich generator --------------------------------------

struct SyntheticSpec {
  enum class Kind { kBlobs, kRings, kGridRoads };
  Kind kind = Kind::kRings;
  int count = 0;
  int h = 32, w = 32;
  std::uint64_t seed = 1;
};

inline SyntheticSpec::Kind synthetic_kind_from(const std::string& s) {
  if (s == "blobs") return SyntheticSpec::Kind::kBlobs;
  if (s == "rings") return SyntheticSpec::Kind::kRings;
  if (s == "grid-roads") return SyntheticSpec::Kind::kGridRoads;
  throw Error("unknown synthetic kind: " + s);
}

inline const char* synthetic_kind_name(SyntheticSpec::Kind k) {
  switch (k) {
    case SyntheticSpec::Kind::kBlobs: return "blobs";
    case SyntheticSpec::Kind::kRings: return "rings";
    case SyntheticSpec::Kind::kGridRoads: return "grid-roads";
  }
  return "?";
}

namespace detail {

struct Disk {
  double cy, cx, r;
};

// r annuli (expected Betti (r, r)) or r disks (expected (r, 0)).
inline bool draw_round_shapes(Tensor& img, int h, int w, int r, bool rings, Rng& rng) {
  std::fill(img.data.begin(), img.data.end(), 0.0);
  std::vector<Disk> placed;
  for (int s = 0; s < r; ++s) {
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      const double rad = rng.uniform(3.5, std::min(h, w) / 5.0);
      const double cy = rng.uniform(rad + 1.0, h - rad - 2.0);
      const double cx = rng.uniform(rad + 1.0, w - rad - 2.0);
      ok = true;
      for (const auto& d : placed) {
        const double dist = std::hypot(cy - d.cy, cx - d.cx);
        if (dist < rad + d.r + 3.0) {
          ok = false;
          break;
        }
      }
      if (ok) placed.push_back({cy, cx, rad});
    }
    if (!ok) return false;
  }
  for (const auto& d : placed) {
    const double inner = rings ? d.r - 2.0 : -1.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dist = std::hypot(y + 0.5 - d.cy, x + 0.5 - d.cx);
        if (dist <= d.r && dist >= inner) img.data[static_cast<std::size_t>(y) * w + x] = 1.0;
      }
  }
  return true;
}

// Connected axis-aligned line network on a 3x3 node grid; enclosed faces give
// beta1 = extra edges beyond a spanning tree, beta0 = 1.
inline int draw_roads(Tensor& img, int h, int w, Rng& rng) {
  std::fill(img.data.begin(), img.data.end(), 0.0);
  const int margin = 2;
  int ys[3], xs[3];
  for (int i = 0; i < 3; ++i) {
    ys[i] = margin + i * (h - 2 * margin - 2) / 2;
    xs[i] = margin + i * (w - 2 * margin - 2) / 2;
  }
  struct Edge {
    int a, b;
  };
  std::vector<Edge> all;
  auto node = [](int r, int c) { return r * 3 + c; };
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) all.push_back({node(r, c), node(r, c + 1)});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) all.push_back({node(r, c), node(r + 1, c)});
  std::vector<int> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<int> parent(9);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  std::vector<char> keep(all.size(), 0);
  int extra = 0;
  for (int e : order) {
    const int ra = find(all[e].a), rb = find(all[e].b);
    if (ra != rb) {
      parent[ra] = rb;
      keep[e] = 1;
    } else if (rng.uniform() < 0.5) {
      keep[e] = 1;
      ++extra;
    }
  }
  auto stroke = [&](int y0, int x0, int y1, int x1) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1) + 1; ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1) + 1; ++x)
        img.data[static_cast<std::size_t>(y) * w + x] = 1.0;
  };
  for (std::size_t e = 0; e < all.size(); ++e) {
    if (!keep[e]) continue;
    const int ar = all[e].a / 3, ac = all[e].a % 3;
    const int br = all[e].b / 3, bc = all[e].b % 3;
    stroke(ys[ar], xs[ac], ys[br], xs[bc]);
  }
  return extra;
}

inline bool betti_matches(const Tensor& img, int b0, int b1) {
  const auto d = cubical_diagram(img, 1);
  const auto [c0, c1] = betti_at(d, 0.5);
  return c0 == b0 && c1 == b1;
}

}  // namespace detail

// Generates count images with known ground-truth topology; every image is
// verified against cubical_diagram at threshold 0.5 and regenerated on a
// mismatch, up to a bounded number of retries.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.count <= 0) throw Error("gen_synthetic: count must be positive");
  if (spec.h < 16 || spec.w < 16 || spec.h % 4 != 0 || spec.w % 4 != 0)
    throw Error("gen_synthetic: dims must be >= 16 and multiples of 4");
  Dataset d;
  d.provenance = std::string("synthetic:") + synthetic_kind_name(spec.kind);
  const Rng root(spec.seed);
  for (int i = 0; i < spec.count; ++i) {
    Tensor img = Tensor::zeros({1, spec.h, spec.w});
    bool ok = false;
    for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
      Rng rng = root.derived(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt));
      switch (spec.kind) {
        case SyntheticSpec::Kind::kBlobs: {
          const int r = 1 + rng.uniform_int(3);
          if (!detail::draw_round_shapes(img, spec.h, spec.w, r, false, rng)) break;
          ok = detail::betti_matches(img, r, 0);
          break;
        }
        case SyntheticSpec::Kind::kRings: {
          const int r = 1 + rng.uniform_int(3);
          if (!detail::draw_round_shapes(img, spec.h, spec.w, r, true, rng)) break;
          ok = detail::betti_matches(img, r, r);
          break;
        }
        case SyntheticSpec::Kind::kGridRoads: {
          const int extra = detail::draw_roads(img, spec.h, spec.w, rng);
          ok = detail::betti_matches(img, 1, extra);
          break;
        }
      }
    }
    if (!ok) throw Error("gen_synthetic: could not realize declared topology for image " +
                         std::to_string(i));
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.pgm", i);
    d.images.push_back(std::move(img));
    d.names.emplace_back(name);
  }
  return d;
}

// Dataset specs accepted by the CLI/config: a directory path or
// "synthetic:<kind>:<count>:<H>x<W>".
inline Dataset load_dataset(const std::string& spec, std::uint64_t seed) {
  if (spec.rfind("synthetic:", 0) == 0) {
    std::stringstream ss(spec.substr(10));
    std::string kind, count, dims;
    if (!std::getline(ss, kind, ':') || !std::getline(ss, count, ':') || !std::getline(ss, dims))
      throw Error("dataset spec: expected synthetic:<kind>:<count>:<H>x<W>, got " + spec);
    SyntheticSpec s;
    s.kind = synthetic_kind_from(kind);
    s.count = std::stoi(count);
    const auto xpos = dims.find('x');
    if (xpos == std::string::npos) throw Error("dataset spec: bad dims in " + spec);
    s.h = std::stoi(dims.substr(0, xpos));
    s.w = std::stoi(dims.substr(xpos + 1));
    s.seed = seed;
    return gen_synthetic(s);
  }
  return load_images(spec);
}

// ---- flat key=value config ---------------------------------------------------

using Config = std::map<std::string, std::string>;

inline Config parse_config(std::istream& is) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config: line " + std::to_string(lineno) + " is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw Error("config: empty key at line " + std::to_string(lineno));
    cfg[key] = val;
  }
  return cfg;
}

inline Config parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path);
  return parse_config(is);
}

inline void dump_config(std::ostream& os, const Config& cfg) {
  for (const auto& [k, v] : cfg) os << k << "=" << v << "\n";
}

namespace detail {

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("config: bad number for " + key + ": '" + s + "'");
  }
}

}  // namespace detail

inline double config_double(const Config& c, const std::string& key, double dflt) {
  auto it = c.find(key);
  return it == c.end() ? dflt : detail::parse_double(it->second, key);
}

inline int config_int(const Config& c, const std::string& key, int dflt) {
  return static_cast<int>(config_double(c, key, dflt));
}

inline std::string config_str(const Config& c, const std::string& key, const std::string& dflt) {
  auto it = c.find(key);
  return it == c.end() ? dflt : it->second;
}

inline bool config_bool(const Config& c, const std::string& key, bool dflt) {
  auto it = c.find(key);
  if (it == c.end()) return dflt;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw Error("config: bad boolean for " + key + ": '" + it->second + "'");
}

}  // namespace topojscc
