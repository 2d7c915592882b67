#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskforge {

/// Class ids: 0 is background, 1..20 are object categories, 255 is ignore.
inline constexpr int kNumClasses = 21;
inline constexpr std::uint8_t kBackgroundLabel = 0;
inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr int kMaxCategory = 20;

inline bool is_valid_label(int label) {
  return (label >= 0 && label <= kMaxCategory) || label == kIgnoreLabel;
}

class ImageIoError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kUnsupportedFormat,
    kCorruptData,
    kWriteFailure,
    kOutOfRange,
    kDimensionMismatch,
  };

  ImageIoError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline double squared_distance(const Rgb& a, const Rgb& b) {
  const double dr = a.r - b.r;
  const double dg = a.g - b.g;
  const double db = a.b - b.b;
  return dr * dr + dg * dg + db * db;
}

// Pixel grids share row-major addressing: (x, y) -> y * width + x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("grid dimensions must be at least 1x1, got " +
                                  std::to_string(width) + "x" +
                                  std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1 ||
        data_.size() != static_cast<std::size_t>(width) * height) {
      throw std::invalid_argument("grid data does not match " +
                                  std::to_string(width) + "x" +
                                  std::to_string(height));
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }
  const T& at(int x, int y) const { return data_[index(x, y)]; }
  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// RGB image with channels in [0, 1].
class RgbImage : public Grid<Rgb> {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {}) : Grid(width, height, fill) {
    check_range();
  }
  RgbImage(int width, int height, std::vector<Rgb> pixels)
      : Grid(width, height, std::move(pixels)) {
    check_range();
  }

 private:
  void check_range() const;
};

/// Values are 0 (background) or 1 (foreground).
class BinaryMask : public Grid<std::uint8_t> {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, std::uint8_t fill = 0)
      : Grid(width, height, fill ? 1 : 0) {}
  BinaryMask(int width, int height, std::vector<std::uint8_t> values);

  bool foreground(int x, int y) const { return at(x, y) != 0; }
  std::size_t count_foreground() const;
  bool is_degenerate() const {
    const std::size_t fg = count_foreground();
    return fg == 0 || fg == size();
  }
};

/// Semantic labels in {0..20} plus 255 for ignore.
class LabelMask : public Grid<std::uint8_t> {
 public:
  LabelMask() = default;
  LabelMask(int width, int height, std::uint8_t fill = kBackgroundLabel);
  LabelMask(int width, int height, std::vector<std::uint8_t> labels);

  /// True if every label is within {0..20, 255}.
  bool is_valid() const;
};

double foreground_fraction(const BinaryMask& mask);

/// Foreground = any label in 1..20; background and ignore map to 0.
BinaryMask binarize(const LabelMask& mask);

// File I/O. Images: PNG (RGB/RGBA/gray/palette, alpha discarded) or binary
// PPM (P6). Binary masks: 8-bit gray PNG or PGM (P5), nonzero = foreground,
// written as {0, 255}. Label masks: 8-bit gray or indexed PNG, value = class.
RgbImage load_image(const std::filesystem::path& path);
void save_image(const RgbImage& image, const std::filesystem::path& path);

BinaryMask read_binary_mask(const std::filesystem::path& path);
void write_binary_mask(const BinaryMask& mask, const std::filesystem::path& path);

LabelMask read_label_mask(const std::filesystem::path& path);
void write_label_mask(const LabelMask& mask, const std::filesystem::path& path);

/// One image with its single image-level category.
struct DatasetRecord {
  std::filesystem::path image;
  int category = 0;
  std::optional<std::filesystem::path> coarse_mask;
  std::optional<std::filesystem::path> gt_mask;

  /// File stem of `image`, used as the record id everywhere on disk.
  std::string stem() const { return image.stem().string(); }
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
};

/// Parses a manifest JSON array. Relative paths resolve against the manifest's
/// directory. Throws std::runtime_error listing every invalid record.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

}  // namespace maskforge
