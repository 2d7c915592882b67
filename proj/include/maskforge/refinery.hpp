#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "maskforge/evalmetrics.hpp"
#include "maskforge/grabcut.hpp"
#include "maskforge/image.hpp"
#include "maskforge/segment.hpp"

namespace maskforge {

enum class RefinementMode { kSemantic, kBinaryForeground };

struct RefinementConfig {
  int rounds = 5;
  double low_coverage = 0.01;
  double high_coverage = 0.80;
  bool apply_grabcut_between_rounds = true;
  GrabCutParams grabcut;
  RefinementMode mode = RefinementMode::kSemantic;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

/// One image loaded into memory. `category` is the image-level label; in
/// binary-foreground mode every image uses label 1 instead.
struct DatasetImage {
  std::string id;
  std::filesystem::path image_path;
  int category = 0;
  RgbImage image;
  std::optional<BinaryMask> coarse_mask;
  std::optional<LabelMask> gt_mask;
};

struct Dataset {
  std::vector<DatasetImage> images;

  /// Loads every referenced file; throws listing all failures.
  static Dataset load(const DatasetManifest& manifest);
  bool has_ground_truth() const;
};

struct RoundRecord {
  double foreground_fraction = 0.0;
  bool active = false;
};

struct RecordState {
  std::string id;
  int category = 0;  // label written into the mask (1 in binary mode)
  LabelMask mask;
  bool active = false;
  std::vector<RoundRecord> history;
};

struct RefinementState {
  std::vector<RecordState> records;
  int round_index = 0;
};

/// Foreground -> category, background -> 0. Throws unless 1 <= category <= 20.
LabelMask assign_semantic_labels(const BinaryMask& mask, int category);

/// Pixels outside {0, 255} over all pixels.
double coverage_fraction(const LabelMask& mask);

enum class CoverageDecision { kKeep, kDrop };

/// Drop iff fraction < low or fraction > high.
CoverageDecision coverage_filter(const LabelMask& mask, double low, double high);

/// Keeps `category` and ignore pixels; every other label becomes 0.
LabelMask suppress_foreign(const LabelMask& predicted, int category);

/// GrabCut seeded by the category pixels of an already-suppressed prediction.
/// Degenerate inputs (no foreground or no background) pass through unchanged.
LabelMask reenhance(const RgbImage& image, const LabelMask& predicted, int category,
                    const GrabCutParams& params);

enum class CoarseSourceKind { kManifest, kSaliency };

struct CoarseSource {
  CoarseSourceKind kind = CoarseSourceKind::kManifest;
  SaliencyParams saliency;
};

/// Label written for `image` under `config.mode`.
int record_label(const DatasetImage& image, const RefinementConfig& config);

/// Ground truth in the label space of `config.mode` (binary mode maps 1..20 to 1).
LabelMask mode_ground_truth(const LabelMask& truth, const RefinementConfig& config);

/// Per record: coarse mask, GrabCut enhancement, label assignment, coverage
/// filter. Throws if a record has no resolvable coarse mask.
RefinementState init_state(const Dataset& dataset, const CoarseSource& source,
                           const RefinementConfig& config);

/// Train on active records, predict every record, then suppress foreign
/// classes, optionally re-run GrabCut, and re-apply the coverage filter.
/// Throws std::runtime_error if no record is active.
RefinementState run_round(const RefinementState& state, SegmenterBackend& backend,
                          const Dataset& dataset, const RefinementConfig& config);

/// Dataset-level report over records that have ground truth; nullopt if none.
std::optional<EvalReport> evaluate_state(const RefinementState& state,
                                         const Dataset& dataset,
                                         const RefinementConfig& config);

struct RoundSummary {
  int round = 0;
  std::size_t active_records = 0;
  std::optional<double> mean_iou;
  std::optional<double> mean_binary_iou;
};

/// Writes masks/<id>.png, state.json and (with ground truth) eval.json.
RoundSummary write_snapshot(const RefinementState& state, const Dataset& dataset,
                            const RefinementConfig& config,
                            const std::filesystem::path& dir);

/// Restores a state written by write_snapshot, matching records by id.
RefinementState load_snapshot(const std::filesystem::path& dir, const Dataset& dataset);

struct RefinementRun {
  RefinementState state;
  std::vector<std::filesystem::path> snapshots;
  std::vector<RoundSummary> summaries;
};

/// Runs `config.rounds` rounds from `initial`. With `out_dir`, every round k
/// is written to out_dir/round_<k>.
RefinementRun continue_refinement(RefinementState initial, const Dataset& dataset,
                                  SegmenterBackend& backend, const RefinementConfig& config,
                                  const std::optional<std::filesystem::path>& out_dir);

/// init_state, then `config.rounds` rounds. Snapshots cover rounds 1..N only;
/// summaries start with round 0 (the initial state).
RefinementRun run_refinement(const Dataset& dataset, SegmenterBackend& backend,
                             const CoarseSource& source, const RefinementConfig& config,
                             const std::optional<std::filesystem::path>& out_dir);

}  // namespace maskforge
