#include "png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "maskforge/image.hpp"

namespace maskforge::detail {
namespace {

using Kind = ImageIoError::Kind;

struct MemoryReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->offset + count > reader->size) {
    png_error(png, "unexpected end of data");
  }
  std::memcpy(out, reader->data + reader->offset, count);
  reader->offset += count;
}

struct ErrorSlot {
  char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp message) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::strncpy(slot->message, message, sizeof(slot->message) - 1);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

std::string describe(const std::filesystem::path& path) {
  return "'" + path.string() + "'";
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw ImageIoError(Kind::kMissingFile, "no such file: " + describe(path));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ImageIoError(Kind::kMissingFile, "cannot open " + describe(path));
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

Raster decode_png(const std::vector<std::uint8_t>& bytes,
                  const std::filesystem::path& path, PaletteHandling palette) {
  // Everything touched after setjmp lives here so longjmp skips no destructors.
  Raster raster;
  std::vector<png_bytep> rows;
  ErrorSlot error;
  MemoryReader reader{bytes.data(), bytes.size(), 0};

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error,
                                           on_png_error, on_png_warning);
  if (png == nullptr) {
    throw ImageIoError(Kind::kCorruptData, "libpng init failed");
  }
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError(Kind::kCorruptData, "libpng init failed");
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError(Kind::kCorruptData, "corrupt PNG " + describe(path) +
                                               ": " + error.message);
  }

  png_set_read_fn(png, &reader, read_from_memory);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    if (palette == PaletteHandling::kExpandToRgb) {
      png_set_palette_to_rgb(png);
    } else if (bit_depth < 8) {
      png_set_packing(png);
    }
  }
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (palette == PaletteHandling::kExpandToRgb) {
    // Drop tRNS instead of expanding it to an alpha channel.
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  raster.width = static_cast<int>(png_get_image_width(png, info));
  raster.height = static_cast<int>(png_get_image_height(png, info));
  raster.channels = png_get_channels(png, info);
  raster.indexed = color_type == PNG_COLOR_TYPE_PALETTE &&
                   palette == PaletteHandling::kKeepIndices;
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  raster.samples.resize(row_bytes * raster.height);
  rows.resize(raster.height);
  for (int y = 0; y < raster.height; ++y) {
    rows[y] = raster.samples.data() + row_bytes * y;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (row_bytes != static_cast<std::size_t>(raster.width) * raster.channels) {
    throw ImageIoError(Kind::kUnsupportedFormat,
                       "unsupported PNG layout in " + describe(path));
  }
  return raster;
}

void encode_png(const std::filesystem::path& path, int width, int height,
                int channels, const std::vector<std::uint8_t>& samples) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const int ok = png_image_write_to_file(&image, path.c_str(), 0,
                                         samples.data(), 0, nullptr);
  if (!ok) {
    const std::string message = image.message;
    png_image_free(&image);
    throw ImageIoError(Kind::kWriteFailure,
                       "cannot write " + describe(path) + ": " + message);
  }
}

Raster decode_pnm(const std::vector<std::uint8_t>& bytes,
                  const std::filesystem::path& path) {
  std::size_t pos = 0;
  auto corrupt = [&](const std::string& why) {
    return ImageIoError(Kind::kCorruptData,
                        "corrupt PNM header in " + describe(path) + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1 << 20) throw corrupt("dimension too large");
      ++pos;
      ++digits;
    }
    if (digits == 0) throw corrupt("expected integer");
    return static_cast<int>(value);
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ImageIoError(Kind::kUnsupportedFormat,
                       "unsupported format in " + describe(path));
  }
  Raster raster;
  raster.channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  raster.width = read_int();
  raster.height = read_int();
  const int maxval = read_int();
  if (raster.width < 1 || raster.height < 1) throw corrupt("empty image");
  if (maxval != 255) {
    throw ImageIoError(Kind::kUnsupportedFormat,
                       "only 8-bit PNM is supported: " + describe(path));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw corrupt("missing separator after maxval");
  }
  ++pos;
  const std::size_t needed =
      static_cast<std::size_t>(raster.width) * raster.height * raster.channels;
  if (bytes.size() - pos < needed) throw corrupt("truncated pixel data");
  raster.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + needed));
  return raster;
}

void encode_pnm(const std::filesystem::path& path, int width, int height,
                int channels, const std::vector<std::uint8_t>& samples) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ImageIoError(Kind::kWriteFailure, "cannot write " + describe(path));
  }
  out << (channels == 3 ? "P6" : "P5") << "\n"
      << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size()));
  if (!out) {
    throw ImageIoError(Kind::kWriteFailure, "cannot write " + describe(path));
  }
}

}  // namespace maskforge::detail
