#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "maskforge/gmm.hpp"
#include "maskforge/image.hpp"
#include "maskforge/maxflow.hpp"

namespace maskforge {

struct GrabCutParams {
  double gamma = 50.0;
  int components = 5;
  int max_iterations = 10;
  int connectivity = 8;  // 4 or 8
  double convergence_tol = 1e-3;
  std::uint64_t seed = 0;
  /// Terminal capacity clamping definite pixels. When unset it is
  /// 9 * gamma + the largest data term of the network being built.
  std::optional<double> hard_constraint_weight;

  /// Throws std::invalid_argument listing the violated constraint.
  void validate() const;
};

enum class PixelState : std::uint8_t {
  kDefiniteBackground = 0,
  kProbableBackground = 1,
  kProbableForeground = 2,
  kDefiniteForeground = 3,
};

inline bool is_foreground(PixelState s) {
  return s == PixelState::kProbableForeground || s == PixelState::kDefiniteForeground;
}
inline bool is_definite(PixelState s) {
  return s == PixelState::kDefiniteBackground || s == PixelState::kDefiniteForeground;
}

class PixelLabeling : public Grid<PixelState> {
 public:
  using Grid::Grid;

  /// Coarse foreground -> probable foreground, the rest -> probable background.
  static PixelLabeling from_mask(const BinaryMask& mask);
  BinaryMask to_mask() const;
};

/// 1 / (2 * mean squared color difference over all neighbor pairs); 0 for a
/// constant image.
double compute_beta(const RgbImage& image, int connectivity);

/// Neighbor pairs visited once each: right, down, and for 8-connectivity the
/// two downward diagonals. `distance` is 1 or sqrt(2).
struct NeighborOffset {
  int dx;
  int dy;
  double distance;
};
std::vector<NeighborOffset> neighbor_offsets(int connectivity);

/// Network for the foreground/background energy. Source side = foreground.
/// Data terms are shifted per pixel so capacities stay non-negative; the
/// energy of a labeling equals its cut capacity plus `constant`.
struct EnergyNetwork {
  FlowNetwork network;
  double constant = 0.0;
  double hard_constraint_weight = 0.0;
};

EnergyNetwork build_energy(const RgbImage& image, const PixelLabeling& labeling,
                           const ColorGmm& foreground, const ColorGmm& background,
                           const GrabCutParams& params);

/// Data terms -log p(z | side) plus smoothness over differently-labeled
/// neighbor pairs.
double energy_of(const RgbImage& image, const BinaryMask& mask,
                 const ColorGmm& foreground, const ColorGmm& background,
                 const GrabCutParams& params);

struct GrabCutResult {
  BinaryMask mask;
  /// energy_of(mask_t, models_t) after each completed iteration t.
  std::vector<double> energies;
  int iterations = 0;
  /// True if a cut emptied one side and the previous mask was returned.
  bool stopped_on_empty_side = false;
  std::optional<ColorGmm> foreground;
  std::optional<ColorGmm> background;
};

/// Alternates model learning and min-cut relabeling of the probable pixels.
/// Throws std::invalid_argument if the labeling has no foreground or no
/// background pixel, or on a dimension mismatch.
GrabCutResult run_grabcut(const RgbImage& image, const PixelLabeling& labeling,
                          const GrabCutParams& params);

inline GrabCutResult run_grabcut(const RgbImage& image, const BinaryMask& init_mask,
                                 const GrabCutParams& params) {
  return run_grabcut(image, PixelLabeling::from_mask(init_mask), params);
}

}  // namespace maskforge
