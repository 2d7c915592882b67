#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "maskforge/segment.hpp"

namespace maskforge {
namespace {

std::uint64_t class_seed(std::uint64_t seed, int label) {
  return seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(label + 1);
}

// Keeps at most `cap` samples, chosen by a seeded partial shuffle; the kept
// samples stay in their original order.
std::vector<FeatureGmm::Vector> subsample(std::vector<FeatureGmm::Vector> samples,
                                          std::size_t cap, std::uint64_t seed) {
  if (samples.size() <= cap) return samples;
  std::vector<std::size_t> index(samples.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t span = index.size() - i;
    const std::size_t j = i + static_cast<std::size_t>(rng() % span);
    std::swap(index[i], index[j]);
  }
  index.resize(cap);
  std::sort(index.begin(), index.end());
  std::vector<FeatureGmm::Vector> kept;
  kept.reserve(cap);
  for (std::size_t i : index) kept.push_back(samples[i]);
  return kept;
}

}  // namespace

FeatureGmm::Vector pixel_feature(const RgbImage& image, int x, int y) {
  const Rgb& p = image.at(x, y);
  FeatureGmm::Vector f;
  f << p.r, p.g, p.b, static_cast<double>(x) / image.width(),
      static_cast<double>(y) / image.height();
  return f;
}

AppearanceModel train_appearance(std::span<const TrainingExample> examples,
                                 const AppearanceOptions& options) {
  if (options.components < 1) {
    throw std::invalid_argument("appearance model needs at least one component");
  }
  std::array<std::vector<FeatureGmm::Vector>, kNumClasses> features;
  for (const auto& ex : examples) {
    if (ex.image == nullptr || ex.labels == nullptr) {
      throw std::invalid_argument("training example '" + ex.id + "' is incomplete");
    }
    if (!ex.image->same_shape(*ex.labels)) {
      throw std::invalid_argument("training example '" + ex.id +
                                  "' has mismatched image and label dimensions");
    }
    for (int y = 0; y < ex.image->height(); ++y) {
      for (int x = 0; x < ex.image->width(); ++x) {
        const int label = ex.labels->at(x, y);
        if (label == kIgnoreLabel) continue;
        if (label > kMaxCategory) {
          throw std::invalid_argument("training label out of range in '" + ex.id + "'");
        }
        features[label].push_back(pixel_feature(*ex.image, x, y));
      }
    }
  }

  std::size_t total = 0;
  for (const auto& f : features) total += f.size();
  if (total == 0) throw std::invalid_argument("no labeled pixels to train on");

  AppearanceModel model;
  model.majority_filter = options.majority_filter;
  for (int label = 0; label < kNumClasses; ++label) {
    if (features[label].empty()) continue;
    const std::size_t count = features[label].size();
    const auto samples = subsample(std::move(features[label]),
                                   options.max_samples_per_class,
                                   class_seed(options.seed, label));
    GmmFitOptions fit;
    fit.components =
        count < static_cast<std::size_t>(options.components) ? 1 : options.components;
    fit.seed = class_seed(options.seed, label);
    fit.max_iterations = options.max_em_iterations;
    fit.tolerance = options.em_tolerance;
    model.classes.push_back({label, static_cast<double>(count) / static_cast<double>(total),
                             count, fit_gmm<5>(samples, fit).model});
  }
  return model;
}

LabelMask predict_appearance(const AppearanceModel& model, const RgbImage& image) {
  if (model.classes.empty()) throw std::invalid_argument("appearance model is untrained");
  std::vector<double> log_prior;
  for (const auto& c : model.classes) log_prior.push_back(std::log(c.prior));

  LabelMask out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const FeatureGmm::Vector f = pixel_feature(image, x, y);
      int best = model.classes.front().label;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < model.classes.size(); ++c) {
        const double s = log_prior[c] + model.classes[c].gmm.log_density(f);
        if (s > best_score) {
          best_score = s;
          best = model.classes[c].label;
        }
      }
      out.at(x, y) = static_cast<std::uint8_t>(best);
    }
  }
  return model.majority_filter ? majority_filter(out) : out;
}

LabelMask majority_filter(const LabelMask& mask) {
  LabelMask out = mask;
  std::array<int, 256> votes{};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      votes.fill(0);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width() || ny >= mask.height()) continue;
          ++votes[mask.at(nx, ny)];
        }
      }
      const int center = mask.at(x, y);
      int best = center;
      for (int label = 0; label < 256; ++label) {
        if (votes[label] > votes[best]) best = label;
      }
      out.at(x, y) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

void AppearanceBackend::train(std::span<const TrainingExample> examples) {
  model_ = train_appearance(examples, options_);
}

LabelMask AppearanceBackend::predict(const std::string&, const RgbImage& image) const {
  if (!model_) throw std::logic_error("appearance backend used before training");
  return predict_appearance(*model_, image);
}

}  // namespace maskforge
