#include "maskforge/refinery.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "maskforge/log.hpp"
#include "maskforge/parallel.hpp"

namespace maskforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed per (image, round) so results do not depend on worker scheduling.
GrabCutParams grabcut_for(const RefinementConfig& config, std::size_t record, int round) {
  GrabCutParams params = config.grabcut;
  params.seed = mix(config.seed ^ mix(static_cast<std::uint64_t>(record) * 1000003ULL +
                                      static_cast<std::uint64_t>(round)));
  return params;
}

void check_category(int category) {
  if (category < 1 || category > kMaxCategory) {
    throw std::invalid_argument("category " + std::to_string(category) +
                                " outside 1..20");
  }
}

std::string fmt_fraction(double f) {
  std::ostringstream s;
  s.precision(4);
  s << f;
  return s.str();
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

void RefinementConfig::validate() const {
  std::vector<std::string> problems;
  if (rounds < 1) problems.push_back("rounds must be >= 1");
  if (!(low_coverage >= 0.0 && low_coverage < high_coverage && high_coverage <= 1.0)) {
    problems.push_back("coverage thresholds must satisfy 0 <= low < high <= 1");
  }
  if (jobs < 1) problems.push_back("jobs must be >= 1");
  try {
    grabcut.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = "invalid refinement config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
}

Dataset Dataset::load(const DatasetManifest& manifest) {
  Dataset dataset;
  std::vector<std::string> problems;
  std::set<std::string> ids;
  for (const auto& record : manifest.records) {
    DatasetImage item;
    item.id = record.stem();
    item.image_path = record.image;
    item.category = record.category;
    if (!ids.insert(item.id).second) {
      problems.push_back("duplicate image stem '" + item.id + "'");
      continue;
    }
    try {
      item.image = load_image(record.image);
      if (record.coarse_mask) {
        item.coarse_mask = read_binary_mask(*record.coarse_mask);
        if (!item.coarse_mask->same_shape(item.image)) {
          problems.push_back("coarse mask of '" + item.id + "' does not match image size");
        }
      }
      if (record.gt_mask) {
        item.gt_mask = read_label_mask(*record.gt_mask);
        if (!item.gt_mask->same_shape(item.image)) {
          problems.push_back("ground truth of '" + item.id + "' does not match image size");
        }
      }
    } catch (const std::exception& e) {
      problems.push_back(e.what());
      continue;
    }
    dataset.images.push_back(std::move(item));
  }
  if (!problems.empty()) {
    std::string msg = "cannot load dataset:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::runtime_error(msg);
  }
  return dataset;
}

bool Dataset::has_ground_truth() const {
  for (const auto& img : images) {
    if (img.gt_mask) return true;
  }
  return false;
}

LabelMask assign_semantic_labels(const BinaryMask& mask, int category) {
  check_category(category);
  LabelMask out(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out[i] = mask[i] ? static_cast<std::uint8_t>(category) : kBackgroundLabel;
  }
  return out;
}

double coverage_fraction(const LabelMask& mask) {
  std::size_t count = 0;
  for (std::uint8_t v : mask.data()) {
    if (v != kBackgroundLabel && v != kIgnoreLabel) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(mask.size());
}

CoverageDecision coverage_filter(const LabelMask& mask, double low, double high) {
  if (!(low < high)) throw std::invalid_argument("coverage filter needs low < high");
  const double f = coverage_fraction(mask);
  return (f < low || f > high) ? CoverageDecision::kDrop : CoverageDecision::kKeep;
}

LabelMask suppress_foreign(const LabelMask& predicted, int category) {
  check_category(category);
  LabelMask out = predicted;
  for (auto& v : out.data()) {
    if (v != category && v != kIgnoreLabel) v = kBackgroundLabel;
  }
  return out;
}

LabelMask reenhance(const RgbImage& image, const LabelMask& predicted, int category,
                    const GrabCutParams& params) {
  check_category(category);
  BinaryMask seed(predicted.width(), predicted.height());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    seed[i] = predicted[i] == category ? 1 : 0;
  }
  if (seed.is_degenerate()) return predicted;
  return assign_semantic_labels(run_grabcut(image, seed, params).mask, category);
}

int record_label(const DatasetImage& image, const RefinementConfig& config) {
  return config.mode == RefinementMode::kBinaryForeground ? 1 : image.category;
}

LabelMask mode_ground_truth(const LabelMask& truth, const RefinementConfig& config) {
  if (config.mode != RefinementMode::kBinaryForeground) return truth;
  LabelMask out = truth;
  for (auto& v : out.data()) {
    if (v != kBackgroundLabel && v != kIgnoreLabel) v = 1;
  }
  return out;
}

RefinementState init_state(const Dataset& dataset, const CoarseSource& source,
                           const RefinementConfig& config) {
  config.validate();
  if (source.kind == CoarseSourceKind::kManifest) {
    std::vector<std::string> missing;
    for (const auto& img : dataset.images) {
      if (!img.coarse_mask) missing.push_back(img.id);
    }
    if (!missing.empty()) {
      std::string msg = "no coarse mask for:";
      for (const auto& id : missing) msg += " " + id;
      throw std::runtime_error(msg);
    }
  } else {
    source.saliency.validate();
  }

  RefinementState state;
  state.records.resize(dataset.images.size());
  parallel_for(dataset.images.size(), config.jobs, [&](std::size_t i) {
    const DatasetImage& img = dataset.images[i];
    const BinaryMask coarse = source.kind == CoarseSourceKind::kManifest
                                  ? *img.coarse_mask
                                  : coarse_saliency_mask(img.image, source.saliency);
    log_event("coarse", img.id, "fraction=" + fmt_fraction(foreground_fraction(coarse)));

    BinaryMask enhanced = coarse;
    if (!coarse.is_degenerate()) {
      enhanced = run_grabcut(img.image, coarse, grabcut_for(config, i, 0)).mask;
    }
    const int label = record_label(img, config);
    RecordState record;
    record.id = img.id;
    record.category = label;
    record.mask = assign_semantic_labels(enhanced, label);
    const double f = coverage_fraction(record.mask);
    record.active = coverage_filter(record.mask, config.low_coverage,
                                    config.high_coverage) == CoverageDecision::kKeep;
    record.history.push_back({f, record.active});
    log_event("enhance", img.id,
              "fraction=" + fmt_fraction(f) + " active=" + (record.active ? "1" : "0"));
    state.records[i] = std::move(record);
  });
  return state;
}

RefinementState run_round(const RefinementState& state, SegmenterBackend& backend,
                          const Dataset& dataset, const RefinementConfig& config) {
  config.validate();
  if (state.records.size() != dataset.images.size()) {
    throw std::invalid_argument("state and dataset disagree on the number of records");
  }
  std::vector<TrainingExample> examples;
  for (std::size_t i = 0; i < state.records.size(); ++i) {
    const RecordState& r = state.records[i];
    if (r.id != dataset.images[i].id) {
      throw std::invalid_argument("state record '" + r.id + "' does not match dataset");
    }
    if (r.active) examples.push_back({r.id, &dataset.images[i].image, &r.mask});
  }
  if (examples.empty()) {
    throw std::runtime_error("round " + std::to_string(state.round_index + 1) +
                             ": no active records to train on");
  }
  log_event("train", "", "round=" + std::to_string(state.round_index + 1) +
                             " backend=" + backend.name() +
                             " examples=" + std::to_string(examples.size()));
  backend.train(examples);

  const int round = state.round_index + 1;
  RefinementState next;
  next.round_index = round;
  next.records.resize(state.records.size());
  parallel_for(state.records.size(), config.jobs, [&](std::size_t i) {
    const RecordState& prev = state.records[i];
    const DatasetImage& img = dataset.images[i];
    const LabelMask predicted = backend.predict(img.id, img.image);
    if (!predicted.same_shape(img.image)) {
      throw std::runtime_error("backend '" + backend.name() + "' returned a mask of the " +
                               "wrong size for '" + img.id + "'");
    }
    LabelMask mask = suppress_foreign(predicted, prev.category);
    if (config.apply_grabcut_between_rounds) {
      mask = reenhance(img.image, mask, prev.category, grabcut_for(config, i, round));
    }
    RecordState record = prev;
    record.mask = std::move(mask);
    const double f = coverage_fraction(record.mask);
    record.active = coverage_filter(record.mask, config.low_coverage,
                                    config.high_coverage) == CoverageDecision::kKeep;
    record.history.push_back({f, record.active});
    log_event("refine", img.id,
              "round=" + std::to_string(round) + " fraction=" + fmt_fraction(f) +
                  " active=" + (record.active ? "1" : "0"));
    next.records[i] = std::move(record);
  });
  return next;
}

std::optional<EvalReport> evaluate_state(const RefinementState& state,
                                         const Dataset& dataset,
                                         const RefinementConfig& config) {
  Evaluator evaluator;
  bool any = false;
  for (std::size_t i = 0; i < state.records.size(); ++i) {
    const auto& gt = dataset.images[i].gt_mask;
    if (!gt) continue;
    evaluator.add(state.records[i].mask, mode_ground_truth(*gt, config));
    any = true;
  }
  if (!any) return std::nullopt;
  return evaluator.report();
}

RoundSummary write_snapshot(const RefinementState& state, const Dataset& dataset,
                            const RefinementConfig& config, const fs::path& dir) {
  fs::create_directories(dir / "masks");
  RoundSummary summary;
  summary.round = state.round_index;

  json records = json::array();
  for (const auto& r : state.records) {
    write_label_mask(r.mask, dir / "masks" / (r.id + ".png"));
    json history = json::array();
    for (const auto& h : r.history) {
      history.push_back({{"foreground_fraction", h.foreground_fraction},
                         {"active", h.active}});
    }
    records.push_back({{"id", r.id},
                       {"category", r.category},
                       {"active", r.active},
                       {"foreground_fraction", r.history.back().foreground_fraction},
                       {"history", history}});
    if (r.active) ++summary.active_records;
  }
  write_json(dir / "state.json", {{"round", state.round_index}, {"records", records}});

  if (const auto report = evaluate_state(state, dataset, config)) {
    write_json(dir / "eval.json", report->to_json());
    summary.mean_iou = report->mean_iou;
    summary.mean_binary_iou = report->mean_binary_iou;
  }
  return summary;
}

RefinementState load_snapshot(const fs::path& dir, const Dataset& dataset) {
  std::ifstream in(dir / "state.json");
  if (!in) throw std::runtime_error("no state.json in " + dir.string());
  const json doc = json::parse(in);
  std::map<std::string, const json*> by_id;
  for (const auto& r : doc.at("records")) by_id[r.at("id").get<std::string>()] = &r;

  RefinementState state;
  state.round_index = doc.at("round").get<int>();
  for (const auto& img : dataset.images) {
    const auto it = by_id.find(img.id);
    if (it == by_id.end()) {
      throw std::runtime_error("snapshot " + dir.string() + " has no record for '" +
                               img.id + "'");
    }
    const json& r = *it->second;
    RecordState record;
    record.id = img.id;
    record.category = r.at("category").get<int>();
    record.active = r.at("active").get<bool>();
    record.mask = read_label_mask(dir / "masks" / (img.id + ".png"));
    if (!record.mask.same_shape(img.image)) {
      throw std::runtime_error("snapshot mask for '" + img.id + "' has the wrong size");
    }
    for (const auto& h : r.at("history")) {
      record.history.push_back({h.at("foreground_fraction").get<double>(),
                                h.at("active").get<bool>()});
    }
    state.records.push_back(std::move(record));
  }
  return state;
}

RefinementRun continue_refinement(RefinementState initial, const Dataset& dataset,
                                  SegmenterBackend& backend, const RefinementConfig& config,
                                  const std::optional<fs::path>& out_dir) {
  config.validate();
  RefinementRun run;
  run.state = std::move(initial);
  for (int k = 0; k < config.rounds; ++k) {
    run.state = run_round(run.state, backend, dataset, config);
    if (out_dir) {
      const fs::path dir = *out_dir / ("round_" + std::to_string(run.state.round_index));
      run.summaries.push_back(write_snapshot(run.state, dataset, config, dir));
      run.snapshots.push_back(dir);
    } else {
      RoundSummary s;
      s.round = run.state.round_index;
      for (const auto& r : run.state.records) s.active_records += r.active ? 1 : 0;
      if (const auto report = evaluate_state(run.state, dataset, config)) {
        s.mean_iou = report->mean_iou;
        s.mean_binary_iou = report->mean_binary_iou;
      }
      run.summaries.push_back(s);
    }
  }
  return run;
}

RefinementRun run_refinement(const Dataset& dataset, SegmenterBackend& backend,
                             const CoarseSource& source, const RefinementConfig& config,
                             const std::optional<fs::path>& out_dir) {
  RefinementState initial = init_state(dataset, source, config);
  RoundSummary first;
  first.round = 0;
  for (const auto& r : initial.records) first.active_records += r.active ? 1 : 0;
  if (const auto report = evaluate_state(initial, dataset, config)) {
    first.mean_iou = report->mean_iou;
    first.mean_binary_iou = report->mean_binary_iou;
  }
  RefinementRun run =
      continue_refinement(std::move(initial), dataset, backend, config, out_dir);
  run.summaries.insert(run.summaries.begin(), first);
  return run;
}

}  // namespace maskforge
