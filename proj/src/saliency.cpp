#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "maskforge/segment.hpp"

namespace maskforge {

void SaliencyParams::validate() const {
  if (!(center_prior_sigma > 0.0)) {
    throw std::invalid_argument("saliency center_prior_sigma must be > 0");
  }
  if (!(fixed_threshold >= 0.0 && fixed_threshold <= 1.0)) {
    throw std::invalid_argument("saliency fixed_threshold must lie in [0,1]");
  }
}

constexpr double kFlatContrast = 1e-9;

Grid<double> saliency_map(const RgbImage& image, const SaliencyParams& params) {
  params.validate();
  const int w = image.width();
  const int h = image.height();

  Rgb border{};
  std::size_t border_count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x != 0 && y != 0 && x != w - 1 && y != h - 1) continue;
      const Rgb& p = image.at(x, y);
      border.r += p.r;
      border.g += p.g;
      border.b += p.b;
      ++border_count;
    }
  }
  border.r /= border_count;
  border.g /= border_count;
  border.b /= border_count;

  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);
  const double sigma = params.center_prior_sigma * std::hypot(w, h);
  const double denom = 2.0 * sigma * sigma;

  Grid<double> map(w, h, 0.0);
  double peak = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double contrast = std::sqrt(squared_distance(image.at(x, y), border));
      const double s = contrast * std::exp(-(dx * dx + dy * dy) / denom);
      map.at(x, y) = s;
      peak = std::max(peak, s);
    }
  }
  // Rounding in the border mean leaves ~1e-17 contrast on flat images.
  if (peak < kFlatContrast) {
    std::fill(map.data().begin(), map.data().end(), 0.0);
  } else {
    for (double& v : map.data()) v /= peak;
  }
  return map;
}

double otsu_threshold(const Grid<double>& values) {
  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  for (double v : values.data()) {
    const int bin = std::clamp(static_cast<int>(v * (kBins - 1) + 0.5), 0, kBins - 1);
    hist[bin] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];

  double weight_low = 0.0;
  double sum_low = 0.0;
  double best_variance = -1.0;
  int best_bin = 0;
  for (int b = 0; b < kBins - 1; ++b) {
    weight_low += hist[b];
    sum_low += b * hist[b];
    const double weight_high = total - weight_low;
    if (weight_low == 0.0 || weight_high == 0.0) continue;
    const double mean_low = sum_low / weight_low;
    const double mean_high = (sum_all - sum_low) / weight_high;
    const double between = weight_low * weight_high * (mean_low - mean_high) *
                           (mean_low - mean_high);
    if (between > best_variance) {
      best_variance = between;
      best_bin = b;
    }
  }
  if (best_variance < 0.0) return 1.0;  // single-valued input: nothing above
  // Boundary between bin best_bin and best_bin + 1.
  return (best_bin + 0.5) / (kBins - 1);
}

BinaryMask coarse_saliency_mask(const RgbImage& image, const SaliencyParams& params) {
  const Grid<double> map = saliency_map(image, params);
  const double threshold = params.threshold_mode == ThresholdMode::kOtsu
                               ? otsu_threshold(map)
                               : params.fixed_threshold;
  BinaryMask mask(image.width(), image.height());
  for (std::size_t i = 0; i < map.size(); ++i) mask[i] = map[i] > threshold ? 1 : 0;
  return mask;
}

}  // namespace maskforge
