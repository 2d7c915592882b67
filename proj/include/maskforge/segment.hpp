#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskforge/gmm.hpp"
#include "maskforge/image.hpp"

namespace maskforge {

struct TrainingExample {
  std::string id;
  const RgbImage* image = nullptr;
  const LabelMask* labels = nullptr;
};

/// A pixel classifier that can be retrained every refinement round.
/// predict() must be safe to call concurrently once train() has returned.
class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;

  virtual std::string name() const = 0;
  /// Pixels labeled 255 contribute nothing.
  virtual void train(std::span<const TrainingExample> examples) = 0;
  /// Same dimensions as `image`, labels in 0..20.
  virtual LabelMask predict(const std::string& id, const RgbImage& image) const = 0;
};

// ---------------------------------------------------------------------------
// Appearance model: one GMM per class over (r, g, b, x / width, y / height).

using FeatureGmm = GaussianMixture<5>;

struct AppearanceOptions {
  int components = 5;
  std::uint64_t seed = 0;
  std::size_t max_samples_per_class = 50000;
  int max_em_iterations = 30;
  double em_tolerance = 1e-5;
  bool majority_filter = true;
};

struct AppearanceModel {
  struct ClassModel {
    int label = 0;
    double prior = 0.0;
    std::size_t pixel_count = 0;
    FeatureGmm gmm;
  };
  std::vector<ClassModel> classes;  // ascending label order
  bool majority_filter = true;
};

FeatureGmm::Vector pixel_feature(const RgbImage& image, int x, int y);

/// Throws std::invalid_argument if no labeled (non-ignore) pixel exists.
AppearanceModel train_appearance(std::span<const TrainingExample> examples,
                                 const AppearanceOptions& options);

/// Per-pixel argmax of log prior + log density (ties -> lower class id), then
/// one 3x3 majority pass when the model enables it.
LabelMask predict_appearance(const AppearanceModel& model, const RgbImage& image);

/// 3x3 mode filter; ties keep the center label if it is among the winners,
/// else the lowest label.
LabelMask majority_filter(const LabelMask& mask);

class AppearanceBackend final : public SegmenterBackend {
 public:
  explicit AppearanceBackend(AppearanceOptions options) : options_(options) {}

  std::string name() const override { return "appearance"; }
  void train(std::span<const TrainingExample> examples) override;
  LabelMask predict(const std::string& id, const RgbImage& image) const override;

  const std::optional<AppearanceModel>& model() const { return model_; }

 private:
  AppearanceOptions options_;
  std::optional<AppearanceModel> model_;
};

/// Returns stored masks by id; training is a no-op.
class OracleBackend final : public SegmenterBackend {
 public:
  explicit OracleBackend(std::map<std::string, LabelMask> truth)
      : truth_(std::move(truth)) {}

  std::string name() const override { return "oracle"; }
  void train(std::span<const TrainingExample>) override {}
  LabelMask predict(const std::string& id, const RgbImage& image) const override;

 private:
  std::map<std::string, LabelMask> truth_;
};

// ---------------------------------------------------------------------------
// File exchange with an externally trained model:
//   <root>/round_<k>/train_manifest.json
//   <root>/round_<k>/labels/<stem>.png       (training label masks)
//   <root>/round_<k>/predictions/<stem>.png  (written by the external model)

struct ExchangeRecord {
  std::string id;
  std::filesystem::path image;
  int category = 0;
};

class ExchangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes the label masks of `examples` and a manifest listing every record
/// in `records`; records with a training mask carry `label_mask`.
void export_training_round(const std::filesystem::path& round_dir,
                           std::span<const ExchangeRecord> records,
                           std::span<const TrainingExample> examples);

/// Reads and validates predictions/<id>.png. Throws ExchangeError naming the
/// file if it is missing, unreadable, the wrong size, or holds a label
/// outside {0..20, 255}.
LabelMask import_prediction(const std::filesystem::path& round_dir, const std::string& id,
                            int width, int height);

class ExternalExchangeBackend final : public SegmenterBackend {
 public:
  /// `command`, when non-empty, runs after each export with the round
  /// directory appended as its last argument; it must fill predictions/.
  ExternalExchangeBackend(std::filesystem::path root, std::vector<ExchangeRecord> records,
                          std::string command = {});

  std::string name() const override { return "external"; }
  void train(std::span<const TrainingExample> examples) override;
  LabelMask predict(const std::string& id, const RgbImage& image) const override;

  std::filesystem::path current_round_dir() const;

 private:
  std::filesystem::path root_;
  std::vector<ExchangeRecord> records_;
  std::string command_;
  int round_ = 0;
};

// ---------------------------------------------------------------------------
// Saliency coarse masks.

enum class ThresholdMode { kOtsu, kFixed };

struct SaliencyParams {
  /// Center prior width as a fraction of the image diagonal.
  double center_prior_sigma = 0.3;
  ThresholdMode threshold_mode = ThresholdMode::kOtsu;
  double fixed_threshold = 0.5;

  void validate() const;
};

/// Color distance to the mean border color weighted by a Gaussian center
/// prior, normalized to [0,1]. All zeros if the image has no contrast.
Grid<double> saliency_map(const RgbImage& image, const SaliencyParams& params);

/// Threshold in [0,1] maximizing between-class variance over a 256-bin
/// histogram; pixels strictly above it are foreground.
double otsu_threshold(const Grid<double>& values);

BinaryMask coarse_saliency_mask(const RgbImage& image, const SaliencyParams& params);

}  // namespace maskforge
