#include "maskforge/grabcut.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace maskforge {
namespace {

using Vec3 = ColorGmm::Vector;

// EM settings for the per-side color models.
constexpr int kInitialEmIterations = 10;
constexpr int kRelearnEmIterations = 5;
constexpr double kEmTolerance = 1e-4;
constexpr std::uint64_t kBackgroundSeedSalt = 0x9e3779b97f4a7c15ULL;

Vec3 to_vector(const Rgb& p) { return Vec3(p.r, p.g, p.b); }

void check_shape(const RgbImage& image, const Grid<PixelState>& labeling) {
  if (!image.same_shape(labeling)) {
    throw std::invalid_argument(
        "labeling is " + std::to_string(labeling.width()) + "x" +
        std::to_string(labeling.height()) + " but image is " +
        std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
}

struct WeightedPair {
  std::size_t a;
  std::size_t b;
  double weight;
};

std::vector<WeightedPair> smoothness_pairs(const RgbImage& image,
                                           const GrabCutParams& params) {
  const double beta = compute_beta(image, params.connectivity);
  std::vector<WeightedPair> pairs;
  const auto offsets = neighbor_offsets(params.connectivity);
  pairs.reserve(image.size() * offsets.size());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (const auto& off : offsets) {
        const int nx = x + off.dx;
        const int ny = y + off.dy;
        if (nx < 0 || ny < 0 || nx >= image.width() || ny >= image.height()) continue;
        const double d2 = squared_distance(image.at(x, y), image.at(nx, ny));
        pairs.push_back({image.index(x, y), image.index(nx, ny),
                         params.gamma * std::exp(-beta * d2) / off.distance});
      }
    }
  }
  return pairs;
}

struct DataTerms {
  std::vector<double> foreground;  // -log p(z | foreground)
  std::vector<double> background;
};

DataTerms data_terms(const RgbImage& image, const ColorGmm& fg, const ColorGmm& bg) {
  DataTerms terms;
  terms.foreground.resize(image.size());
  terms.background.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Vec3 z = to_vector(image[i]);
    terms.foreground[i] = -fg.log_density(z);
    terms.background[i] = -bg.log_density(z);
  }
  return terms;
}

double energy_from_terms(const DataTerms& terms, const std::vector<WeightedPair>& pairs,
                         const BinaryMask& mask) {
  double energy = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    energy += mask[i] ? terms.foreground[i] : terms.background[i];
  }
  for (const auto& p : pairs) {
    if (mask[p.a] != mask[p.b]) energy += p.weight;
  }
  return energy;
}

EnergyNetwork network_from_terms(const PixelLabeling& labeling, const DataTerms& terms,
                                 const std::vector<WeightedPair>& pairs,
                                 const GrabCutParams& params) {
  EnergyNetwork out{FlowNetwork(static_cast<int>(labeling.size())), 0.0, 0.0};
  double largest = 0.0;
  for (std::size_t i = 0; i < labeling.size(); ++i) {
    if (is_definite(labeling[i])) continue;
    const double fg = terms.foreground[i];
    const double bg = terms.background[i];
    const double shift = std::min(0.0, std::min(fg, bg));
    out.constant += shift;
    // Cutting s->i puts i on the sink (background) side, so the source cap
    // carries the background cost.
    out.network.terminal[i] = {bg - shift, fg - shift};
    largest = std::max({largest, bg - shift, fg - shift});
  }
  out.hard_constraint_weight =
      params.hard_constraint_weight.value_or(9.0 * params.gamma + largest);
  for (std::size_t i = 0; i < labeling.size(); ++i) {
    if (labeling[i] == PixelState::kDefiniteForeground) {
      out.network.terminal[i] = {out.hard_constraint_weight, 0.0};
      out.constant += terms.foreground[i];
    } else if (labeling[i] == PixelState::kDefiniteBackground) {
      out.network.terminal[i] = {0.0, out.hard_constraint_weight};
      out.constant += terms.background[i];
    }
  }
  out.network.edges.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.network.add_edge(static_cast<int>(p.a), static_cast<int>(p.b), p.weight, p.weight);
  }
  return out;
}

struct SideSamples {
  std::vector<Vec3> foreground;
  std::vector<Vec3> background;
};

SideSamples split_samples(const RgbImage& image, const BinaryMask& mask) {
  SideSamples s;
  for (std::size_t i = 0; i < image.size(); ++i) {
    (mask[i] ? s.foreground : s.background).push_back(to_vector(image[i]));
  }
  return s;
}

GmmFitOptions side_options(const GrabCutParams& params, std::size_t samples,
                           std::uint64_t seed, int iterations) {
  GmmFitOptions opt;
  opt.components = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(params.components), samples));
  opt.seed = seed;
  opt.max_iterations = iterations;
  opt.tolerance = kEmTolerance;
  return opt;
}

// Component assignment under the current model, hard-assignment M-step, a few
// EM steps, and acceptance only if the side's likelihood does not drop. The
// guard is what makes the outer energy non-increasing.
ColorGmm relearn(const std::vector<Vec3>& samples, const ColorGmm& current,
                 const GrabCutParams& params, std::uint64_t seed) {
  const std::span<const Vec3> view(samples);
  std::optional<ColorGmm> candidate;
  if (samples.size() >= static_cast<std::size_t>(current.size())) {
    std::vector<int> assignment(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      assignment[i] = current.assign_component(samples[i]);
    }
    const ColorGmm hard = fit_from_assignments<3>(view, assignment, current.size(),
                                                  kDefaultCovarianceFloor);
    candidate = refine_gmm<3>(view, hard,
                              side_options(params, samples.size(), seed,
                                           kRelearnEmIterations))
                    .model;
  } else {
    candidate = fit_gmm<3>(view, side_options(params, samples.size(), seed,
                                              kInitialEmIterations))
                    .model;
  }
  if (total_log_likelihood<3>(*candidate, view) >= total_log_likelihood<3>(current, view)) {
    return *candidate;
  }
  return current;
}

}  // namespace

void GrabCutParams::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("grabcut gamma must be finite and >= 0");
  }
  if (components < 1) throw std::invalid_argument("grabcut components must be >= 1");
  if (max_iterations < 1) {
    throw std::invalid_argument("grabcut max_iterations must be >= 1");
  }
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("grabcut connectivity must be 4 or 8");
  }
  if (!(convergence_tol >= 0.0)) {
    throw std::invalid_argument("grabcut convergence_tol must be >= 0");
  }
  if (hard_constraint_weight && !(*hard_constraint_weight > 0.0)) {
    throw std::invalid_argument("grabcut hard_constraint_weight must be > 0");
  }
}

PixelLabeling PixelLabeling::from_mask(const BinaryMask& mask) {
  PixelLabeling labeling(mask.width(), mask.height(), PixelState::kProbableBackground);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) labeling[i] = PixelState::kProbableForeground;
  }
  return labeling;
}

BinaryMask PixelLabeling::to_mask() const {
  BinaryMask mask(width(), height());
  for (std::size_t i = 0; i < size(); ++i) mask[i] = is_foreground((*this)[i]) ? 1 : 0;
  return mask;
}

std::vector<NeighborOffset> neighbor_offsets(int connectivity) {
  std::vector<NeighborOffset> offsets = {{1, 0, 1.0}, {0, 1, 1.0}};
  if (connectivity == 8) {
    offsets.push_back({1, 1, std::sqrt(2.0)});
    offsets.push_back({-1, 1, std::sqrt(2.0)});
  } else if (connectivity != 4) {
    throw std::invalid_argument("connectivity must be 4 or 8");
  }
  return offsets;
}

double compute_beta(const RgbImage& image, int connectivity) {
  double sum = 0.0;
  std::size_t count = 0;
  const auto offsets = neighbor_offsets(connectivity);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (const auto& off : offsets) {
        const int nx = x + off.dx;
        const int ny = y + off.dy;
        if (nx < 0 || ny < 0 || nx >= image.width() || ny >= image.height()) continue;
        sum += squared_distance(image.at(x, y), image.at(nx, ny));
        ++count;
      }
    }
  }
  if (count == 0 || sum == 0.0) return 0.0;
  return 1.0 / (2.0 * (sum / static_cast<double>(count)));
}

EnergyNetwork build_energy(const RgbImage& image, const PixelLabeling& labeling,
                           const ColorGmm& foreground, const ColorGmm& background,
                           const GrabCutParams& params) {
  params.validate();
  check_shape(image, labeling);
  return network_from_terms(labeling, data_terms(image, foreground, background),
                            smoothness_pairs(image, params), params);
}

double energy_of(const RgbImage& image, const BinaryMask& mask,
                 const ColorGmm& foreground, const ColorGmm& background,
                 const GrabCutParams& params) {
  params.validate();
  if (!image.same_shape(mask)) {
    throw std::invalid_argument("mask and image dimensions differ");
  }
  return energy_from_terms(data_terms(image, foreground, background),
                           smoothness_pairs(image, params), mask);
}

GrabCutResult run_grabcut(const RgbImage& image, const PixelLabeling& labeling,
                          const GrabCutParams& params) {
  params.validate();
  check_shape(image, labeling);
  BinaryMask mask = labeling.to_mask();
  const std::size_t fg_count = mask.count_foreground();
  if (fg_count == 0 || fg_count == mask.size()) {
    throw std::invalid_argument(
        "grabcut initialization needs at least one foreground and one background "
        "pixel (got " +
        std::to_string(fg_count) + " foreground of " + std::to_string(mask.size()) + ")");
  }

  const auto pairs = smoothness_pairs(image, params);
  const std::uint64_t fg_seed = params.seed;
  const std::uint64_t bg_seed = params.seed ^ kBackgroundSeedSalt;

  GrabCutResult result{mask, {}, 0, false, std::nullopt, std::nullopt};
  SideSamples sides = split_samples(image, mask);
  ColorGmm fg_model =
      fit_gmm<3>(sides.foreground, side_options(params, sides.foreground.size(), fg_seed,
                                                kInitialEmIterations))
          .model;
  ColorGmm bg_model =
      fit_gmm<3>(sides.background, side_options(params, sides.background.size(), bg_seed,
                                                kInitialEmIterations))
          .model;

  for (int iter = 1; iter <= params.max_iterations; ++iter) {
    if (iter > 1) {
      sides = split_samples(image, mask);
      fg_model = relearn(sides.foreground, fg_model, params, fg_seed);
      bg_model = relearn(sides.background, bg_model, params, bg_seed);
    }
    const DataTerms terms = data_terms(image, fg_model, bg_model);
    const EnergyNetwork energy = network_from_terms(labeling, terms, pairs, params);
    const CutResult cut = max_flow(energy.network);

    BinaryMask next = mask;
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (is_definite(labeling[i])) continue;
      next[i] = cut.side[i] == CutSide::kSource ? 1 : 0;
    }
    result.iterations = iter;
    if (next.is_degenerate()) {
      result.stopped_on_empty_side = true;
      break;
    }
    const double e = energy_from_terms(terms, pairs, next);
    mask = std::move(next);
    result.energies.push_back(e);
    result.foreground = fg_model;
    result.background = bg_model;
    if (result.energies.size() >= 2) {
      const double previous = result.energies[result.energies.size() - 2];
      if (previous - e < params.convergence_tol * std::abs(previous)) break;
    }
  }
  result.mask = std::move(mask);
  return result;
}

}  // namespace maskforge
