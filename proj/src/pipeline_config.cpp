#include <map>

#include "maskforge/pipeline.hpp"

namespace maskforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, BackendKind> kBackends = {
    {"appearance", BackendKind::kAppearance},
    {"oracle", BackendKind::kOracle},
    {"external", BackendKind::kExternal}};
const std::map<std::string, CoarseSourceKind> kCoarseSources = {
    {"manifest", CoarseSourceKind::kManifest}, {"saliency", CoarseSourceKind::kSaliency}};
const std::map<std::string, RefinementMode> kModes = {
    {"semantic", RefinementMode::kSemantic},
    {"binary", RefinementMode::kBinaryForeground}};
const std::map<std::string, ThresholdMode> kThresholds = {
    {"otsu", ThresholdMode::kOtsu}, {"fixed", ThresholdMode::kFixed}};

template <typename E>
std::string name_of(const std::map<std::string, E>& table, E value) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

// Reads doc[section][key] (or doc[key] when section is empty) into `out`,
// recording a problem if present with the wrong type.
template <typename T>
void read(const json& doc, const std::string& section, const std::string& key, T& out,
          std::vector<std::string>& problems) {
  const json* node = &doc;
  if (!section.empty()) {
    if (!doc.contains(section)) return;
    node = &doc.at(section);
    if (!node->is_object()) {
      problems.push_back("'" + section + "' must be an object");
      return;
    }
  }
  if (!node->contains(key) || node->at(key).is_null()) return;
  const std::string where = section.empty() ? key : section + "." + key;
  try {
    out = node->at(key).get<T>();
  } catch (const json::exception&) {
    problems.push_back("'" + where + "' has the wrong type");
  }
}

template <typename E>
void read_enum(const json& doc, const std::string& section, const std::string& key,
               const std::map<std::string, E>& table, E& out,
               std::vector<std::string>& problems) {
  std::string name;
  read(doc, section, key, name, problems);
  if (name.empty()) return;
  const auto it = table.find(name);
  if (it == table.end()) {
    std::string allowed;
    for (const auto& [n, v] : table) allowed += (allowed.empty() ? "" : ", ") + n;
    problems.push_back("'" + (section.empty() ? key : section + "." + key) + "' is '" +
                       name + "', expected one of: " + allowed);
    return;
  }
  out = it->second;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return (path.is_relative() ? base / path : path).lexically_normal();
}

}  // namespace

json default_config_json() {
  const PipelineConfig d;
  json doc = config_to_json(d);
  doc["manifest"] = nullptr;
  doc["output_dir"] = nullptr;
  return doc;
}

PipelineConfig parse_pipeline_config(const json& doc, const fs::path& base_dir,
                                     std::vector<std::string>& problems) {
  PipelineConfig c;
  if (!doc.is_object()) {
    problems.push_back("config must be a JSON object");
    return c;
  }
  std::string manifest;
  std::string output;
  read(doc, "", "manifest", manifest, problems);
  read(doc, "", "output_dir", output, problems);
  c.manifest = resolve(base_dir, manifest);
  c.output_dir = resolve(base_dir, output);
  read(doc, "", "seed", c.seed, problems);
  read(doc, "", "jobs", c.refinement.jobs, problems);
  read_enum(doc, "", "backend", kBackends, c.backend, problems);
  read_enum(doc, "", "coarse_source", kCoarseSources, c.coarse.kind, problems);

  read(doc, "saliency", "center_prior_sigma", c.coarse.saliency.center_prior_sigma, problems);
  read_enum(doc, "saliency", "threshold_mode", kThresholds, c.coarse.saliency.threshold_mode,
            problems);
  read(doc, "saliency", "fixed_threshold", c.coarse.saliency.fixed_threshold, problems);

  RefinementConfig& r = c.refinement;
  read(doc, "refinement", "rounds", r.rounds, problems);
  read(doc, "refinement", "low_coverage", r.low_coverage, problems);
  read(doc, "refinement", "high_coverage", r.high_coverage, problems);
  read(doc, "refinement", "apply_grabcut_between_rounds", r.apply_grabcut_between_rounds,
       problems);
  read_enum(doc, "refinement", "mode", kModes, r.mode, problems);

  GrabCutParams& g = r.grabcut;
  read(doc, "grabcut", "gamma", g.gamma, problems);
  read(doc, "grabcut", "components", g.components, problems);
  read(doc, "grabcut", "max_iterations", g.max_iterations, problems);
  read(doc, "grabcut", "connectivity", g.connectivity, problems);
  read(doc, "grabcut", "convergence_tol", g.convergence_tol, problems);
  double hard = 0.0;
  read(doc, "grabcut", "hard_constraint_weight", hard, problems);
  if (hard != 0.0) g.hard_constraint_weight = hard;

  read(doc, "appearance", "components", c.appearance.components, problems);
  read(doc, "appearance", "max_samples_per_class", c.appearance.max_samples_per_class,
       problems);
  read(doc, "appearance", "majority_filter", c.appearance.majority_filter, problems);

  std::string exchange;
  read(doc, "external", "exchange_dir", exchange, problems);
  c.external.exchange_dir = resolve(base_dir, exchange);
  read(doc, "external", "command", c.external.command, problems);

  r.seed = c.seed;
  c.appearance.seed = c.seed;
  return c;
}

json config_to_json(const PipelineConfig& c) {
  const auto abs = [](const fs::path& p) -> json {
    if (p.empty()) return nullptr;
    return fs::absolute(p).lexically_normal().generic_string();
  };
  const RefinementConfig& r = c.refinement;
  const GrabCutParams& g = r.grabcut;
  return {
      {"manifest", abs(c.manifest)},
      {"output_dir", abs(c.output_dir)},
      {"seed", c.seed},
      {"jobs", r.jobs},
      {"backend", name_of(kBackends, c.backend)},
      {"coarse_source", name_of(kCoarseSources, c.coarse.kind)},
      {"saliency",
       {{"center_prior_sigma", c.coarse.saliency.center_prior_sigma},
        {"threshold_mode", name_of(kThresholds, c.coarse.saliency.threshold_mode)},
        {"fixed_threshold", c.coarse.saliency.fixed_threshold}}},
      {"refinement",
       {{"rounds", r.rounds},
        {"low_coverage", r.low_coverage},
        {"high_coverage", r.high_coverage},
        {"apply_grabcut_between_rounds", r.apply_grabcut_between_rounds},
        {"mode", name_of(kModes, r.mode)}}},
      {"grabcut",
       {{"gamma", g.gamma},
        {"components", g.components},
        {"max_iterations", g.max_iterations},
        {"connectivity", g.connectivity},
        {"convergence_tol", g.convergence_tol},
        {"hard_constraint_weight",
         g.hard_constraint_weight ? json(*g.hard_constraint_weight) : json(nullptr)}}},
      {"appearance",
       {{"components", c.appearance.components},
        {"max_samples_per_class", c.appearance.max_samples_per_class},
        {"majority_filter", c.appearance.majority_filter}}},
      {"external",
       {{"exchange_dir", abs(c.external.exchange_dir)}, {"command", c.external.command}}},
  };
}

void validate_pipeline_config(const PipelineConfig& c, std::vector<std::string>& problems) {
  if (c.manifest.empty()) {
    problems.push_back("'manifest' is required");
  } else if (!fs::is_regular_file(c.manifest)) {
    problems.push_back("manifest not found: " + c.manifest.string());
  }
  if (c.output_dir.empty()) problems.push_back("'output_dir' is required");
  try {
    c.refinement.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  try {
    c.coarse.saliency.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(e.what());
  }
  if (c.appearance.components < 1) problems.push_back("appearance.components must be >= 1");
  if (c.appearance.max_samples_per_class < 1) {
    problems.push_back("appearance.max_samples_per_class must be >= 1");
  }
  if (c.backend == BackendKind::kExternal && c.external.exchange_dir.empty()) {
    problems.push_back("external backend needs 'external.exchange_dir'");
  }
}

}  // namespace maskforge
