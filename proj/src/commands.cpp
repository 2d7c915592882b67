#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "maskforge/log.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/synthetic.hpp"

namespace maskforge {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown for anything the user can fix by changing inputs or flags.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out;
    for (const auto& s : p) out += (out.empty() ? "" : "; ") + s;
    return out;
  }
  std::vector<std::string> problems_;
};

[[noreturn]] void invalid(const std::string& problem) { throw ValidationError({problem}); }

void write_json(const json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) invalid("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    invalid(path.string() + " is not valid JSON: " + e.what());
  }
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) invalid(what + " not found: " + path.string());
}

// ---------------------------------------------------------------------------
// Config overrides. Every config field is reachable from a flag; values are
// kept as strings until the whole command line is known.

enum class ValueType { kInt, kUint, kDouble, kBool, kString, kPath };

struct OverrideSpec {
  const char* flag;
  const char* pointer;
  ValueType type;
  const char* help;
};

const std::vector<OverrideSpec>& override_specs() {
  static const std::vector<OverrideSpec> kSpecs = {
      {"--manifest", "/manifest", ValueType::kPath, "Dataset manifest"},
      {"--output-dir", "/output_dir", ValueType::kPath, "Output directory"},
      {"--seed", "/seed", ValueType::kUint, "Random seed"},
      {"--jobs", "/jobs", ValueType::kInt, "Worker threads for per-image stages"},
      {"--backend", "/backend", ValueType::kString, "appearance | oracle | external"},
      {"--coarse-source", "/coarse_source", ValueType::kString, "manifest | saliency"},
      {"--center-prior-sigma", "/saliency/center_prior_sigma", ValueType::kDouble,
       "Saliency center prior width"},
      {"--threshold-mode", "/saliency/threshold_mode", ValueType::kString, "otsu | fixed"},
      {"--fixed-threshold", "/saliency/fixed_threshold", ValueType::kDouble,
       "Saliency threshold in fixed mode"},
      {"--rounds", "/refinement/rounds", ValueType::kInt, "Refinement rounds"},
      {"--low-coverage", "/refinement/low_coverage", ValueType::kDouble,
       "Drop masks with coverage below this"},
      {"--high-coverage", "/refinement/high_coverage", ValueType::kDouble,
       "Drop masks with coverage above this"},
      {"--grabcut-between-rounds", "/refinement/apply_grabcut_between_rounds",
       ValueType::kBool, "Re-run GrabCut on predictions (true/false)"},
      {"--mode", "/refinement/mode", ValueType::kString, "semantic | binary"},
      {"--gamma", "/grabcut/gamma", ValueType::kDouble, "GrabCut smoothness weight"},
      {"--components", "/grabcut/components", ValueType::kInt, "GrabCut GMM components"},
      {"--max-iterations", "/grabcut/max_iterations", ValueType::kInt,
       "GrabCut iteration cap"},
      {"--connectivity", "/grabcut/connectivity", ValueType::kInt, "4 or 8"},
      {"--convergence-tol", "/grabcut/convergence_tol", ValueType::kDouble,
       "GrabCut relative energy tolerance"},
      {"--hard-constraint-weight", "/grabcut/hard_constraint_weight", ValueType::kDouble,
       "Capacity for fixed pixels"},
      {"--appearance-components", "/appearance/components", ValueType::kInt,
       "Appearance GMM components per class"},
      {"--max-samples-per-class", "/appearance/max_samples_per_class", ValueType::kUint,
       "Training pixels sampled per class"},
      {"--majority-filter", "/appearance/majority_filter", ValueType::kBool,
       "3x3 majority smoothing of predictions (true/false)"},
      {"--exchange-dir", "/external/exchange_dir", ValueType::kPath,
       "Exchange root for the external backend"},
      {"--external-command", "/external/command", ValueType::kString,
       "Command run after each export"},
  };
  return kSpecs;
}

struct Overrides {
  std::map<std::string, std::string> values;  // flag -> raw text

  void attach(CLI::App& app) {
    for (const auto& spec : override_specs()) {
      app.add_option(spec.flag, values[spec.flag], spec.help);
    }
  }

  // Applies set flags onto `doc`. Paths are made absolute against the
  // current directory, since they came from the command line.
  void apply(CLI::App& app, json& doc, std::vector<std::string>& problems) const {
    for (const auto& spec : override_specs()) {
      if (app.count(spec.flag) == 0) continue;
      const std::string& raw = values.at(spec.flag);
      const json::json_pointer ptr(spec.pointer);
      try {
        switch (spec.type) {
          case ValueType::kInt:
            doc[ptr] = std::stoi(raw);
            break;
          case ValueType::kUint:
            if (!raw.empty() && raw[0] == '-') throw std::invalid_argument(raw);
            doc[ptr] = std::stoull(raw);
            break;
          case ValueType::kDouble:
            doc[ptr] = std::stod(raw);
            break;
          case ValueType::kBool:
            if (raw == "true" || raw == "1") {
              doc[ptr] = true;
            } else if (raw == "false" || raw == "0") {
              doc[ptr] = false;
            } else {
              throw std::invalid_argument(raw);
            }
            break;
          case ValueType::kString:
            doc[ptr] = raw;
            break;
          case ValueType::kPath:
            doc[ptr] = fs::absolute(raw).lexically_normal().generic_string();
            break;
        }
      } catch (const std::logic_error&) {
        problems.push_back(std::string(spec.flag) + ": cannot parse '" + raw + "'");
      }
    }
  }
};

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("MASKFORGE_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(raw, &used);
    if (used == std::string(raw).size() && raw[0] != '-') return v;
  } catch (const std::logic_error&) {
  }
  invalid(std::string("MASKFORGE_SEED is not an unsigned integer: ") + raw);
}

// Defaults <- config file <- MASKFORGE_SEED (only if no seed yet) <- flags.
PipelineConfig resolve_config(const std::string& config_path, CLI::App& app,
                              const Overrides& overrides) {
  std::vector<std::string> problems;
  json doc = json::object();
  fs::path base = fs::current_path();
  if (!config_path.empty()) {
    const fs::path path = fs::absolute(config_path);
    require_file(path, "config");
    doc = read_json(path);
    if (!doc.is_object()) invalid("config must be a JSON object: " + path.string());
    base = path.parent_path();
  }
  const bool has_seed = doc.contains("seed") || app.count("--seed") > 0;
  if (!has_seed) {
    if (const auto seed = env_seed()) doc["seed"] = *seed;
  }
  // Relative paths from the file resolve against the file; make them absolute
  // now so flag-supplied absolute paths and file paths mix cleanly.
  for (const char* key : {"/manifest", "/output_dir", "/external/exchange_dir"}) {
    const json::json_pointer ptr(key);
    if (doc.contains(ptr) && doc[ptr].is_string()) {
      const fs::path p(doc[ptr].get<std::string>());
      if (!p.empty() && p.is_relative()) {
        doc[ptr] = (base / p).lexically_normal().generic_string();
      }
    }
  }
  overrides.apply(app, doc, problems);
  PipelineConfig config = parse_pipeline_config(doc, base, problems);
  validate_pipeline_config(config, problems);
  if (!problems.empty()) throw ValidationError(problems);
  return config;
}

GrabCutParams grabcut_from(CLI::App& app, const Overrides& overrides) {
  json doc = json::object();
  std::vector<std::string> problems;
  overrides.apply(app, doc, problems);
  PipelineConfig c = parse_pipeline_config(doc, fs::current_path(), problems);
  if (!problems.empty()) throw ValidationError(problems);
  return c.refinement.grabcut;
}

// Loads the dataset, turning every load problem into a validation error.
Dataset load_dataset(const fs::path& manifest_path) {
  try {
    return Dataset::load(load_manifest(manifest_path));
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    invalid(e.what());
  }
}

std::unique_ptr<SegmenterBackend> make_backend(const PipelineConfig& config,
                                               const Dataset& dataset) {
  switch (config.backend) {
    case BackendKind::kAppearance:
      return std::make_unique<AppearanceBackend>(config.appearance);
    case BackendKind::kOracle: {
      std::map<std::string, LabelMask> truth;
      std::vector<std::string> missing;
      for (const auto& img : dataset.images) {
        if (img.gt_mask) {
          truth.emplace(img.id, mode_ground_truth(*img.gt_mask, config.refinement));
        } else {
          missing.push_back("oracle backend needs gt_mask for " + img.id);
        }
      }
      if (!missing.empty()) throw ValidationError(missing);
      return std::make_unique<OracleBackend>(std::move(truth));
    }
    case BackendKind::kExternal: {
      std::vector<ExchangeRecord> records;
      for (const auto& img : dataset.images) {
        records.push_back({img.id, img.image_path, record_label(img, config.refinement)});
      }
      return std::make_unique<ExternalExchangeBackend>(config.external.exchange_dir,
                                                       std::move(records),
                                                       config.external.command);
    }
  }
  throw std::logic_error("unknown backend");
}

json summary_json(const std::vector<RoundSummary>& summaries) {
  json rounds = json::array();
  for (const auto& s : summaries) {
    rounds.push_back({{"round", s.round},
                      {"active_records", s.active_records},
                      {"mean_iou", s.mean_iou ? json(*s.mean_iou) : json(nullptr)},
                      {"mean_binary_iou",
                       s.mean_binary_iou ? json(*s.mean_binary_iou) : json(nullptr)}});
  }
  return {{"rounds", rounds}};
}

// ---------------------------------------------------------------------------

int cmd_pipeline(const std::string& config_path, CLI::App& app, const Overrides& overrides) {
  const PipelineConfig config = resolve_config(config_path, app, overrides);
  const Dataset dataset = load_dataset(config.manifest);
  auto backend = make_backend(config, dataset);

  fs::create_directories(config.output_dir);
  write_json(config_to_json(config), config.output_dir / "effective_config.json");
  RefinementState initial = init_state(dataset, config.coarse, config.refinement);
  std::vector<RoundSummary> summaries = {
      write_snapshot(initial, dataset, config.refinement, config.output_dir / "round_0")};
  const RefinementRun run = continue_refinement(std::move(initial), dataset, *backend,
                                                config.refinement, config.output_dir);
  summaries.insert(summaries.end(), run.summaries.begin(), run.summaries.end());
  write_json(summary_json(summaries), config.output_dir / "summary.json");
  return kExitOk;
}

int cmd_refine(const std::string& config_path, const std::string& from, CLI::App& app,
               const Overrides& overrides) {
  const PipelineConfig config = resolve_config(config_path, app, overrides);
  const fs::path from_dir = fs::absolute(from);
  require_file(from_dir / "state.json", "snapshot state");
  const Dataset dataset = load_dataset(config.manifest);
  RefinementState state;
  try {
    state = load_snapshot(from_dir, dataset);
  } catch (const std::exception& e) {
    invalid(e.what());
  }
  auto backend = make_backend(config, dataset);

  fs::create_directories(config.output_dir);
  write_json(config_to_json(config), config.output_dir / "effective_config.json");
  const RefinementRun run = continue_refinement(std::move(state), dataset, *backend,
                                                config.refinement, config.output_dir);
  write_json(summary_json(run.summaries), config.output_dir / "refine_summary.json");
  return kExitOk;
}

int cmd_enhance(const std::string& image_path, const std::string& coarse_path,
                const std::string& out_path, CLI::App& app, const Overrides& overrides) {
  const GrabCutParams params = grabcut_from(app, overrides);
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    invalid(e.what());
  }
  require_file(image_path, "image");
  require_file(coarse_path, "coarse mask");
  RgbImage image;
  BinaryMask coarse;
  try {
    image = load_image(image_path);
    coarse = read_binary_mask(coarse_path);
  } catch (const ImageIoError& e) {
    invalid(e.what());
  }
  if (!image.same_shape(coarse)) {
    invalid("coarse mask " + coarse_path + " does not match the size of " + image_path);
  }
  if (coarse.is_degenerate()) {
    invalid("coarse mask " + coarse_path +
            " must contain at least one foreground and one background pixel");
  }
  const GrabCutResult result = run_grabcut(image, coarse, params);
  log_event("enhance", fs::path(image_path).stem().string(),
            "iterations=" + std::to_string(result.iterations) +
                " fg_fraction=" + std::to_string(foreground_fraction(result.mask)));
  write_binary_mask(result.mask, out_path);
  return kExitOk;
}

int cmd_saliency(const std::string& image_path, const std::string& out_path, CLI::App& app,
                 const Overrides& overrides) {
  json doc = json::object();
  std::vector<std::string> problems;
  overrides.apply(app, doc, problems);
  const PipelineConfig c = parse_pipeline_config(doc, fs::current_path(), problems);
  try {
    c.coarse.saliency.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) throw ValidationError(problems);
  require_file(image_path, "image");
  RgbImage image;
  try {
    image = load_image(image_path);
  } catch (const ImageIoError& e) {
    invalid(e.what());
  }
  const BinaryMask mask = coarse_saliency_mask(image, c.coarse.saliency);
  log_event("saliency", fs::path(image_path).stem().string(),
            "fg_fraction=" + std::to_string(foreground_fraction(mask)));
  write_binary_mask(mask, out_path);
  return kExitOk;
}

std::map<std::string, fs::path> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) invalid("directory not found: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out.emplace(entry.path().stem().string(), entry.path());
    }
  }
  return out;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& out_path) {
  const auto preds = png_stems(pred_dir);
  const auto truths = png_stems(gt_dir);
  json unmatched_pred = json::array();
  json unmatched_gt = json::array();
  std::vector<std::string> common;
  for (const auto& [stem, path] : preds) {
    if (truths.count(stem)) {
      common.push_back(stem);
    } else {
      unmatched_pred.push_back(stem);
    }
  }
  for (const auto& [stem, path] : truths) {
    if (!preds.count(stem)) unmatched_gt.push_back(stem);
  }
  for (const auto& s : unmatched_pred) std::cerr << "unmatched prediction: " << s.get<std::string>() << '\n';
  for (const auto& s : unmatched_gt) std::cerr << "unmatched ground truth: " << s.get<std::string>() << '\n';
  if (common.empty()) {
    invalid("no file stems in common between " + pred_dir + " and " + gt_dir);
  }

  Evaluator evaluator;
  for (const auto& stem : common) {
    LabelMask pred;
    LabelMask truth;
    try {
      pred = read_label_mask(preds.at(stem));
      truth = read_label_mask(truths.at(stem));
    } catch (const ImageIoError& e) {
      invalid(stem + ": " + e.what());
    }
    if (!pred.same_shape(truth)) {
      invalid(stem + ": prediction is " + std::to_string(pred.width()) + "x" +
              std::to_string(pred.height()) + " but ground truth is " +
              std::to_string(truth.width()) + "x" + std::to_string(truth.height()));
    }
    try {
      evaluator.add(pred, truth);
    } catch (const std::exception& e) {
      invalid(stem + ": " + e.what());
    }
    log_event("eval", stem, "pixels=" + std::to_string(pred.size()));
  }
  json report = evaluator.report().to_json();
  report["unmatched_predictions"] = unmatched_pred;
  report["unmatched_ground_truth"] = unmatched_gt;
  write_json(report, out_path);
  return kExitOk;
}

int cmd_segment(const std::string& config_path, const std::string& out_dir, CLI::App& app,
                const Overrides& overrides) {
  // The config's output_dir is not needed here; fill it so validation passes.
  json patch = json::object();
  PipelineConfig config;
  {
    std::vector<std::string> problems;
    json doc = json::object();
    fs::path base = fs::current_path();
    if (!config_path.empty()) {
      const fs::path path = fs::absolute(config_path);
      require_file(path, "config");
      doc = read_json(path);
      base = path.parent_path();
    }
    if (!doc.contains("seed") && app.count("--seed") == 0) {
      if (const auto seed = env_seed()) doc["seed"] = *seed;
    }
    if (doc.is_object() && (!doc.contains("manifest") || doc["manifest"].is_null()) &&
        app.count("--manifest") == 0) {
      problems.push_back("'manifest' is required");
    }
    for (const char* key : {"/manifest", "/external/exchange_dir"}) {
      const json::json_pointer ptr(key);
      if (doc.is_object() && doc.contains(ptr) && doc[ptr].is_string()) {
        const fs::path p(doc[ptr].get<std::string>());
        if (p.is_relative()) doc[ptr] = (base / p).lexically_normal().generic_string();
      }
    }
    doc["output_dir"] = fs::absolute(out_dir).generic_string();
    overrides.apply(app, doc, problems);
    config = parse_pipeline_config(doc, base, problems);
    validate_pipeline_config(config, problems);
    if (!problems.empty()) throw ValidationError(problems);
  }
  const Dataset dataset = load_dataset(config.manifest);
  auto backend = make_backend(config, dataset);

  std::vector<LabelMask> labels;
  labels.reserve(dataset.images.size());
  std::vector<TrainingExample> examples;
  for (const auto& img : dataset.images) {
    if (!img.gt_mask) continue;
    labels.push_back(mode_ground_truth(*img.gt_mask, config.refinement));
  }
  std::size_t li = 0;
  for (const auto& img : dataset.images) {
    if (!img.gt_mask) continue;
    examples.push_back({img.id, &img.image, &labels[li++]});
  }
  if (examples.empty()) invalid("segment needs at least one record with gt_mask to train on");
  backend->train(examples);

  const fs::path out = fs::absolute(out_dir);
  fs::create_directories(out);
  for (const auto& img : dataset.images) {
    const LabelMask pred = backend->predict(img.id, img.image);
    write_label_mask(pred, out / (img.id + ".png"));
    log_event("segment", img.id, "backend=" + backend->name());
  }
  return kExitOk;
}

int cmd_synth(const std::string& out_dir, const SyntheticOptions& options) {
  if (options.count < 1) invalid("--count must be >= 1");
  if (options.width < 8 || options.height < 8) invalid("--width and --height must be >= 8");
  if (options.pixel_noise < 0.0) invalid("--pixel-noise must be >= 0");
  const fs::path dir = fs::absolute(out_dir);
  const auto samples = generate_synthetic_dataset(options);
  write_synthetic_dataset(samples, dir);
  json config = {{"manifest", "manifest.json"},
                 {"output_dir", "run"},
                 {"seed", options.seed},
                 {"backend", "appearance"},
                 {"refinement", {{"rounds", 5}, {"mode", "binary"}}}};
  write_json(config, dir / "pipeline.json");
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"maskforge: coarse-to-fine weakly supervised mask refinement"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress per-image log lines on stderr");

  std::string config_path;
  std::string image_path;
  std::string coarse_path;
  std::string out_path;
  std::string from_dir;
  std::string pred_dir;
  std::string gt_dir;

  auto* pipeline = app.add_subcommand("pipeline", "Coarse masks, enhancement and refinement rounds");
  pipeline->add_option("-c,--config", config_path, "Pipeline config JSON");
  Overrides pipeline_overrides;
  pipeline_overrides.attach(*pipeline);

  auto* refine = app.add_subcommand("refine", "Continue refinement from a saved round snapshot");
  refine->add_option("-c,--config", config_path, "Pipeline config JSON");
  refine->add_option("--from", from_dir, "Snapshot directory (round_<k>)")->required();
  Overrides refine_overrides;
  refine_overrides.attach(*refine);

  auto* enhance = app.add_subcommand("enhance", "GrabCut enhancement of one coarse mask");
  enhance->add_option("--image", image_path, "Input RGB image")->required();
  enhance->add_option("--coarse", coarse_path, "Coarse binary mask")->required();
  enhance->add_option("-o,--out", out_path, "Output mask")->required();
  Overrides enhance_overrides;
  enhance_overrides.attach(*enhance);

  auto* saliency = app.add_subcommand("saliency", "Unsupervised coarse mask from saliency");
  saliency->add_option("--image", image_path, "Input RGB image")->required();
  saliency->add_option("-o,--out", out_path, "Output mask")->required();
  Overrides saliency_overrides;
  saliency_overrides.attach(*saliency);

  auto* eval = app.add_subcommand("eval", "Compare prediction and ground truth directories");
  eval->add_option("--pred", pred_dir, "Directory of predicted label masks")->required();
  eval->add_option("--gt", gt_dir, "Directory of ground truth label masks")->required();
  eval->add_option("-o,--out", out_path, "Report JSON")->required();

  auto* segment = app.add_subcommand("segment", "Train a backend on ground truth and predict");
  segment->add_option("-c,--config", config_path, "Pipeline config JSON");
  segment->add_option("-o,--out", out_path, "Directory for predicted masks")->required();
  Overrides segment_overrides;
  segment_overrides.attach(*segment);

  SyntheticOptions synth_options;
  auto* synth = app.add_subcommand("synth", "Write the synthetic shapes dataset");
  synth->add_option("-o,--out", out_path, "Dataset directory")->required();
  synth->add_option("--count", synth_options.count, "Number of images");
  synth->add_option("--width", synth_options.width, "Image width");
  synth->add_option("--height", synth_options.height, "Image height");
  synth->add_option("--seed", synth_options.seed, "Generator seed");
  synth->add_option("--pixel-noise", synth_options.pixel_noise, "Per-channel noise sigma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const bool was_logging = logging_enabled();
  set_logging(!quiet);
  int code = kExitOk;
  try {
    if (*pipeline) {
      code = cmd_pipeline(config_path, *pipeline, pipeline_overrides);
    } else if (*refine) {
      code = cmd_refine(config_path, from_dir, *refine, refine_overrides);
    } else if (*enhance) {
      code = cmd_enhance(image_path, coarse_path, out_path, *enhance, enhance_overrides);
    } else if (*saliency) {
      code = cmd_saliency(image_path, out_path, *saliency, saliency_overrides);
    } else if (*eval) {
      code = cmd_eval(pred_dir, gt_dir, out_path);
    } else if (*segment) {
      code = cmd_segment(config_path, out_path, *segment, segment_overrides);
    } else if (*synth) {
      code = cmd_synth(out_path, synth_options);
    }
  } catch (const ValidationError& e) {
    for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
    code = kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kExitRuntime;
  }
  set_logging(was_logging);
  return code;
}

}  // namespace maskforge
