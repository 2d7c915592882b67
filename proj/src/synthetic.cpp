#include "maskforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace maskforge {
namespace {

namespace fs = std::filesystem;

// Box-Muller over raw 64-bit draws keeps the fixtures identical across
// standard library implementations.
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Rgb jitter(const Rgb& c, double sigma, Noise& noise) {
  return {clamp01(c.r + sigma * noise.gaussian()), clamp01(c.g + sigma * noise.gaussian()),
          clamp01(c.b + sigma * noise.gaussian())};
}

enum class Shape { kDisk, kSquare, kTriangle, kEllipse };

struct CategoryStyle {
  int category;
  Rgb color;
  Shape shape;
};

const std::vector<CategoryStyle>& styles() {
  static const std::vector<CategoryStyle> kStyles = {
      {3, {0.85, 0.20, 0.20}, Shape::kDisk},
      {8, {0.90, 0.80, 0.20}, Shape::kSquare},
      {12, {0.20, 0.30, 0.85}, Shape::kTriangle},
      {15, {0.80, 0.30, 0.80}, Shape::kEllipse},
  };
  return kStyles;
}

const std::vector<Rgb>& background_tones() {
  static const std::vector<Rgb> kTones = {
      {0.35, 0.55, 0.30}, {0.50, 0.50, 0.45}, {0.55, 0.40, 0.25},
      {0.30, 0.45, 0.50}, {0.60, 0.60, 0.55}, {0.25, 0.35, 0.25},
  };
  return kTones;
}

bool inside(Shape shape, double dx, double dy, double r) {
  switch (shape) {
    case Shape::kDisk:
      return dx * dx + dy * dy <= r * r;
    case Shape::kSquare:
      return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case Shape::kTriangle: {
      // Upward triangle with apex at -r and base at +0.8 r.
      if (dy < -r || dy > 0.8 * r) return false;
      const double half_width = (dy + r) / 1.8 * 1.1;
      return std::abs(dx) <= half_width;
    }
    case Shape::kEllipse:
      return (dx * dx) / (1.3 * 1.3 * r * r) + (dy * dy) / (0.7 * 0.7 * r * r) <= 1.0;
  }
  return false;
}

BinaryMask shift(const BinaryMask& m, int sx, int sy) {
  BinaryMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const int ox = x - sx;
      const int oy = y - sy;
      if (ox >= 0 && oy >= 0 && ox < m.width() && oy < m.height()) {
        out.at(x, y) = m.at(ox, oy);
      }
    }
  }
  return out;
}

// Square structuring element; grow > 0 dilates, grow < 0 erodes.
BinaryMask morph(const BinaryMask& m, int grow) {
  if (grow == 0) return m;
  const int r = std::abs(grow);
  const std::uint8_t target = grow > 0 ? 1 : 0;
  BinaryMask out = m;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool hit = false;
      for (int dy = -r; dy <= r && !hit; ++dy) {
        for (int dx = -r; dx <= r && !hit; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height()) continue;
          hit = m.at(nx, ny) == target;
        }
      }
      if (hit) out.at(x, y) = target;
    }
  }
  return out;
}

void paint_disk(BinaryMask& m, double cx, double cy, double r, std::uint8_t value) {
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = value;
    }
  }
}

void paint_box(BinaryMask& m, int x0, int y0, int x1, int y1, std::uint8_t value) {
  for (int y = std::max(0, y0); y <= std::min(m.height() - 1, y1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(m.width() - 1, x1); ++x) {
      m.at(x, y) = value;
    }
  }
}

BinaryMask corrupt(const BinaryMask& truth, Corruption kind, double cx, double cy,
                   double radius, Noise& noise) {
  const int w = truth.width();
  const int h = truth.height();
  switch (kind) {
    case Corruption::kMild: {
      BinaryMask m = shift(truth, noise.integer(-4, 4), noise.integer(-4, 4));
      m = morph(m, noise.integer(-2, 3));
      for (int k = 0; k < 2; ++k) {
        paint_disk(m, cx + noise.uniform(-0.6, 0.6) * radius,
                   cy + noise.uniform(-0.6, 0.6) * radius, noise.uniform(2.0, 4.0), 0);
      }
      paint_disk(m, noise.uniform(0.1, 0.9) * w, noise.uniform(0.1, 0.9) * h,
                 noise.uniform(2.0, 5.0), 1);
      return m;
    }
    case Corruption::kMisplaced: {
      BinaryMask m(w, h);
      const double angle = noise.uniform(0.0, 2.0 * std::numbers::pi);
      const double bx = cx + std::cos(angle) * radius * 1.2;
      const double by = cy + std::sin(angle) * radius * 1.2;
      const int half = static_cast<int>(radius * noise.uniform(1.0, 1.3));
      paint_box(m, static_cast<int>(bx) - half, static_cast<int>(by) - half,
                static_cast<int>(bx) + half, static_cast<int>(by) + half, 1);
      return m;
    }
    case Corruption::kTiny: {
      BinaryMask m(w, h);
      paint_disk(m, cx + noise.uniform(-3, 3), cy + noise.uniform(-3, 3), 1.5, 1);
      return m;
    }
    case Corruption::kBloated: {
      BinaryMask m(w, h, 1);
      paint_box(m, 0, 0, w - 1, 1, 0);
      return m;
    }
  }
  return truth;
}

Corruption pick_corruption(std::size_t index) {
  // Fixed cycle so every dataset size keeps the same mix.
  static const Corruption kCycle[] = {
      Corruption::kMild,      Corruption::kMisplaced, Corruption::kMild,
      Corruption::kMild,      Corruption::kMisplaced, Corruption::kTiny,
      Corruption::kMild,      Corruption::kMisplaced, Corruption::kMild,
      Corruption::kBloated,   Corruption::kMild,      Corruption::kMisplaced,
  };
  return kCycle[index % std::size(kCycle)];
}

}  // namespace

SquareFixture make_square_fixture(int size, int square, int init_box, Rgb fg, Rgb bg,
                                  double noise_sigma, std::uint64_t seed) {
  Noise noise(seed);
  SquareFixture f{RgbImage(size, size), BinaryMask(size, size), BinaryMask(size, size)};
  const int s0 = (size - square) / 2;
  const int b0 = (size - init_box) / 2;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool in_square = x >= s0 && x < s0 + square && y >= s0 && y < s0 + square;
      f.truth.at(x, y) = in_square ? 1 : 0;
      f.init.at(x, y) = (x >= b0 && x < b0 + init_box && y >= b0 && y < b0 + init_box) ? 1 : 0;
      f.image.at(x, y) = jitter(in_square ? fg : bg, noise_sigma, noise);
    }
  }
  return f;
}

const std::vector<int>& synthetic_categories() {
  static const std::vector<int> kCategories = [] {
    std::vector<int> c;
    for (const auto& s : styles()) c.push_back(s.category);
    return c;
  }();
  return kCategories;
}

std::vector<SyntheticSample> generate_synthetic_dataset(const SyntheticOptions& options) {
  Noise noise(options.seed);
  const int w = options.width;
  const int h = options.height;
  const auto& tones = background_tones();
  std::vector<SyntheticSample> samples;
  for (int n = 0; n < options.count; ++n) {
    const CategoryStyle& style = styles()[n % styles().size()];
    SyntheticSample s;
    std::ostringstream id;
    id << "synth_" << std::setw(3) << std::setfill('0') << n;
    s.id = id.str();
    s.category = style.category;
    s.corruption = pick_corruption(static_cast<std::size_t>(n));

    // Two-tone background: stripes or checker at a random period and phase.
    const Rgb tone_a = tones[noise.integer(0, static_cast<int>(tones.size()) - 1)];
    const Rgb tone_b = tones[noise.integer(0, static_cast<int>(tones.size()) - 1)];
    const bool checker = noise.uniform() < 0.5;
    const int period = noise.integer(4, 9);
    const int phase = noise.integer(0, period - 1);
    const Rgb object = jitter(style.color, 0.04, noise);
    const double radius = noise.uniform(0.20, 0.28) * std::min(w, h);
    const double cx = 0.5 * w + noise.uniform(-0.12, 0.12) * w;
    const double cy = 0.5 * h + noise.uniform(-0.12, 0.12) * h;

    s.image = RgbImage(w, h);
    s.truth = LabelMask(w, h);
    BinaryMask truth(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool in = inside(style.shape, x - cx, y - cy, radius);
        truth.at(x, y) = in ? 1 : 0;
        s.truth.at(x, y) = in ? static_cast<std::uint8_t>(style.category) : 0;
        Rgb base;
        if (in) {
          base = object;
        } else {
          const int band = checker ? ((x + phase) / period + (y / period)) % 2
                                   : ((x + y + phase) / period) % 2;
          base = band ? tone_a : tone_b;
        }
        s.image.at(x, y) = jitter(base, options.pixel_noise, noise);
      }
    }
    s.coarse = corrupt(truth, s.corruption, cx, cy, radius, noise);
    samples.push_back(std::move(s));
  }
  return samples;
}

fs::path write_synthetic_dataset(const std::vector<SyntheticSample>& samples,
                                 const fs::path& dir) {
  DatasetManifest manifest;
  for (const auto& s : samples) {
    const fs::path image = dir / "images" / (s.id + ".png");
    const fs::path gt = dir / "gt" / (s.id + ".png");
    const fs::path coarse = dir / "coarse" / (s.id + ".png");
    save_image(s.image, image);
    write_label_mask(s.truth, gt);
    write_binary_mask(s.coarse, coarse);
    manifest.records.push_back({image, s.category, coarse, gt});
  }
  const fs::path path = dir / "manifest.json";
  save_manifest(manifest, path);
  return path;
}

}  // namespace maskforge
