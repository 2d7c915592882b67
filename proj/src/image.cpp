#include "maskforge/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "png_io.hpp"

namespace maskforge {
namespace {

using Kind = ImageIoError::Kind;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

detail::Raster decode_any(const std::filesystem::path& path,
                          detail::PaletteHandling palette) {
  const auto bytes = detail::read_file_bytes(path);
  if (detail::has_png_signature(bytes)) {
    return detail::decode_png(bytes, path, palette);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return detail::decode_pnm(bytes, path);
  }
  throw ImageIoError(Kind::kUnsupportedFormat,
                     "unsupported image format: '" + path.string() + "'");
}

detail::Raster decode_single_channel(const std::filesystem::path& path) {
  detail::Raster raster = decode_any(path, detail::PaletteHandling::kKeepIndices);
  if (raster.channels != 1) {
    throw ImageIoError(Kind::kUnsupportedFormat,
                       "expected a single-channel mask: '" + path.string() + "'");
  }
  return raster;
}

}  // namespace

void RgbImage::check_range() const {
  for (const Rgb& p : data()) {
    for (double c : {p.r, p.g, p.b}) {
      if (!(c >= 0.0 && c <= 1.0)) {
        throw std::invalid_argument("RGB channel outside [0,1]");
      }
    }
  }
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> values)
    : Grid(width, height, std::move(values)) {
  for (std::uint8_t v : data()) {
    if (v > 1) throw std::invalid_argument("binary mask value must be 0 or 1");
  }
}

std::size_t BinaryMask::count_foreground() const {
  return static_cast<std::size_t>(
      std::count_if(data().begin(), data().end(), [](std::uint8_t v) { return v != 0; }));
}

LabelMask::LabelMask(int width, int height, std::uint8_t fill)
    : Grid(width, height, fill) {
  if (!is_valid_label(fill)) {
    throw std::invalid_argument("label out of range: " + std::to_string(fill));
  }
}

LabelMask::LabelMask(int width, int height, std::vector<std::uint8_t> labels)
    : Grid(width, height, std::move(labels)) {}

bool LabelMask::is_valid() const {
  return std::all_of(data().begin(), data().end(),
                     [](std::uint8_t v) { return is_valid_label(v); });
}

double foreground_fraction(const BinaryMask& mask) {
  return static_cast<double>(mask.count_foreground()) /
         static_cast<double>(mask.size());
}

BinaryMask binarize(const LabelMask& mask) {
  BinaryMask out(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = mask[i];
    out[i] = (v != kBackgroundLabel && v != kIgnoreLabel) ? 1 : 0;
  }
  return out;
}

RgbImage load_image(const std::filesystem::path& path) {
  const detail::Raster raster = decode_any(path, detail::PaletteHandling::kExpandToRgb);
  std::vector<Rgb> pixels(static_cast<std::size_t>(raster.width) * raster.height);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (raster.channels == 3) {
      pixels[i] = {raster.samples[3 * i] / 255.0, raster.samples[3 * i + 1] / 255.0,
                   raster.samples[3 * i + 2] / 255.0};
    } else if (raster.channels == 1) {
      const double v = raster.samples[i] / 255.0;
      pixels[i] = {v, v, v};
    } else {
      throw ImageIoError(Kind::kUnsupportedFormat,
                         "unsupported channel layout: '" + path.string() + "'");
    }
  }
  return RgbImage(raster.width, raster.height, std::move(pixels));
}

void save_image(const RgbImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> samples(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    samples[3 * i] = to_byte(image[i].r);
    samples[3 * i + 1] = to_byte(image[i].g);
    samples[3 * i + 2] = to_byte(image[i].b);
  }
  if (has_extension(path, ".ppm")) {
    detail::encode_pnm(path, image.width(), image.height(), 3, samples);
  } else {
    detail::encode_png(path, image.width(), image.height(), 3, samples);
  }
}

BinaryMask read_binary_mask(const std::filesystem::path& path) {
  detail::Raster raster = decode_single_channel(path);
  for (auto& v : raster.samples) v = v != 0 ? 1 : 0;
  return BinaryMask(raster.width, raster.height, std::move(raster.samples));
}

void write_binary_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> samples(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) samples[i] = mask[i] ? 255 : 0;
  if (has_extension(path, ".pgm")) {
    detail::encode_pnm(path, mask.width(), mask.height(), 1, samples);
  } else {
    detail::encode_png(path, mask.width(), mask.height(), 1, samples);
  }
}

LabelMask read_label_mask(const std::filesystem::path& path) {
  detail::Raster raster = decode_single_channel(path);
  for (std::size_t i = 0; i < raster.samples.size(); ++i) {
    if (!is_valid_label(raster.samples[i])) {
      throw ImageIoError(Kind::kOutOfRange,
                         "label " + std::to_string(raster.samples[i]) +
                             " out of range in '" + path.string() + "'");
    }
  }
  return LabelMask(raster.width, raster.height, std::move(raster.samples));
}

void write_label_mask(const LabelMask& mask, const std::filesystem::path& path) {
  for (std::uint8_t v : mask.data()) {
    if (!is_valid_label(v)) {
      throw ImageIoError(Kind::kOutOfRange,
                         "cannot write label " + std::to_string(v) + " to '" +
                             path.string() + "'");
    }
  }
  detail::encode_png(path, mask.width(), mask.height(), 1, mask.data());
}

}  // namespace maskforge
