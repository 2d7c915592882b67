#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maskforge/image.hpp"

namespace maskforge {

/// Centered square of `fg` on `bg` with Gaussian per-channel noise, the
/// standard GrabCut recovery fixture.
struct SquareFixture {
  RgbImage image;
  BinaryMask truth;
  BinaryMask init;  // centered loose rectangle
};

SquareFixture make_square_fixture(int size, int square, int init_box, Rgb fg, Rgb bg,
                                  double noise_sigma, std::uint64_t seed);

/// How a synthetic coarse mask was damaged.
enum class Corruption {
  kMild,       // shifted, dilated or eroded, holes and a stray blob
  kMisplaced,  // box off the object, covering mostly background
  kTiny,       // a few pixels only
  kBloated,    // almost the whole frame
};

struct SyntheticSample {
  std::string id;
  int category = 0;
  RgbImage image;
  LabelMask truth;
  BinaryMask coarse;
  Corruption corruption = Corruption::kMild;
};

struct SyntheticOptions {
  int count = 36;
  int width = 48;
  int height = 48;
  std::uint64_t seed = 2019;
  double pixel_noise = 0.06;
};

/// Colored shapes (one shape and hue family per category) on two-tone textured
/// backgrounds, with deliberately corrupted coarse masks.
std::vector<SyntheticSample> generate_synthetic_dataset(const SyntheticOptions& options);

/// Categories used by the generator, in cycling order.
const std::vector<int>& synthetic_categories();

/// Writes images/, gt/, coarse/ and manifest.json under `dir`; returns the
/// manifest path.
std::filesystem::path write_synthetic_dataset(const std::vector<SyntheticSample>& samples,
                                              const std::filesystem::path& dir);

}  // namespace maskforge
