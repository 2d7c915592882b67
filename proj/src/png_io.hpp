#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace maskforge::detail {

// Decoded 8-bit raster. For palette images decoded as indices, `channels` is 1
// and samples are the raw palette indices.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  bool indexed = false;
  std::vector<std::uint8_t> samples;
};

enum class PaletteHandling { kExpandToRgb, kKeepIndices };

bool has_png_signature(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

Raster decode_png(const std::vector<std::uint8_t>& bytes,
                  const std::filesystem::path& path, PaletteHandling palette);

// channels: 1 (gray) or 3 (rgb).
void encode_png(const std::filesystem::path& path, int width, int height,
                int channels, const std::vector<std::uint8_t>& samples);

// Netpbm P5/P6 with maxval 255.
Raster decode_pnm(const std::vector<std::uint8_t>& bytes,
                  const std::filesystem::path& path);
void encode_pnm(const std::filesystem::path& path, int width, int height,
                int channels, const std::vector<std::uint8_t>& samples);

}  // namespace maskforge::detail
