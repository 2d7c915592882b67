#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "maskforge/grabcut.hpp"
#include "maskforge/image.hpp"
#include "maskforge/maxflow.hpp"

namespace testing {

namespace fs = std::filesystem;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * uniform());
  }

 private:
  std::mt19937_64 engine_;
};

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::ostringstream name;
    name << "maskforge_" << tag << "_" << ::getpid() << "_" << counter++;
    path_ = fs::temp_directory_path() / name.str();
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& child) const { return path_ / child; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every file under `root` (relative path -> bytes), for tree comparisons.
inline std::vector<std::pair<std::string, std::string>> tree_contents(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out.emplace_back(fs::relative(e.path(), root).generic_string(), slurp(e.path()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Max-flow oracle.

inline maskforge::FlowNetwork random_network(Rng& rng, int max_nodes, int max_cap) {
  using maskforge::FlowNetwork;
  const int n = rng.integer(1, max_nodes);
  FlowNetwork net(n);
  for (auto& t : net.terminal) {
    t.from_source = rng.integer(0, max_cap);
    t.to_sink = rng.integer(0, max_cap);
  }
  const int edge_count = rng.integer(0, n * (n - 1) / 2 + 2);
  for (int e = 0; e < edge_count && n > 1; ++e) {
    const int u = rng.integer(0, n - 1);
    int v = rng.integer(0, n - 2);
    if (v >= u) ++v;
    net.add_edge(u, v, rng.integer(0, max_cap), rng.integer(0, max_cap));
  }
  return net;
}

// Capacity of the cut where bit i of `source_set` puts node i on the source side.
inline double cut_capacity(const maskforge::FlowNetwork& net, std::uint32_t source_set) {
  const auto src = [&](int i) { return (source_set >> i) & 1u; };
  double c = 0.0;
  for (int i = 0; i < net.node_count; ++i) {
    c += src(i) ? net.terminal[i].to_sink : net.terminal[i].from_source;
  }
  for (const auto& e : net.edges) {
    if (src(e.u) && !src(e.v)) c += e.cap_uv;
    if (src(e.v) && !src(e.u)) c += e.cap_vu;
  }
  return c;
}

inline double brute_force_min_cut(const maskforge::FlowNetwork& net) {
  double best = cut_capacity(net, 0);
  for (std::uint32_t s = 1; s < (1u << net.node_count); ++s) {
    best = std::min(best, cut_capacity(net, s));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Images.

inline maskforge::RgbImage random_blob_image(Rng& rng, int w, int h, maskforge::BinaryMask* truth,
                                             double noise) {
  using namespace maskforge;
  RgbImage img(w, h);
  BinaryMask t(w, h);
  const Rgb fg{rng.uniform(), rng.uniform(), rng.uniform()};
  const Rgb bg{rng.uniform(), rng.uniform(), rng.uniform()};
  const double cx = rng.uniform(0.3, 0.7) * w;
  const double cy = rng.uniform(0.3, 0.7) * h;
  const double r = rng.uniform(0.15, 0.35) * std::min(w, h);
  const auto clamp = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool in = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      t.at(x, y) = in ? 1 : 0;
      const Rgb c = in ? fg : bg;
      img.at(x, y) = {clamp(c.r + noise * rng.gaussian()), clamp(c.g + noise * rng.gaussian()),
                      clamp(c.b + noise * rng.gaussian())};
    }
  }
  if (truth) *truth = t;
  return img;
}

inline maskforge::BinaryMask box_mask(int w, int h, int x0, int y0, int x1, int y1) {
  maskforge::BinaryMask m(w, h);
  for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) m.at(x, y) = 1;
  }
  return m;
}

}  // namespace testing
