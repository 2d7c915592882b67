#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskforge/refinery.hpp"
#include "maskforge/segment.hpp"

namespace maskforge {

enum class BackendKind { kAppearance, kOracle, kExternal };

struct ExternalOptions {
  std::filesystem::path exchange_dir;
  std::string command;
};

/// Everything a `pipeline` run needs. The JSON form mirrors this struct:
///
///   { "manifest": ..., "output_dir": ..., "seed": 7, "jobs": 1,
///     "backend": "appearance" | "oracle" | "external",
///     "coarse_source": "manifest" | "saliency",
///     "saliency":   { "center_prior_sigma", "threshold_mode", "fixed_threshold" },
///     "refinement": { "rounds", "low_coverage", "high_coverage",
///                     "apply_grabcut_between_rounds", "mode" },
///     "grabcut":    { "gamma", "components", "max_iterations", "connectivity",
///                     "convergence_tol", "hard_constraint_weight" },
///     "appearance": { "components", "max_samples_per_class", "majority_filter" },
///     "external":   { "exchange_dir", "command" } }
struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  BackendKind backend = BackendKind::kAppearance;
  CoarseSource coarse;
  RefinementConfig refinement;
  AppearanceOptions appearance;
  ExternalOptions external;
};

/// Defaults for every field, as JSON.
nlohmann::json default_config_json();

/// Parses a merged config document. Relative paths resolve against
/// `base_dir`. Problems are appended to `problems` rather than thrown so a
/// caller can report all of them at once.
PipelineConfig parse_pipeline_config(const nlohmann::json& doc,
                                     const std::filesystem::path& base_dir,
                                     std::vector<std::string>& problems);

/// Effective config with absolute paths; parsing it reproduces `config`.
nlohmann::json config_to_json(const PipelineConfig& config);

/// Path-resolvability and cross-field checks, appended to `problems`.
void validate_pipeline_config(const PipelineConfig& config,
                              std::vector<std::string>& problems);

/// Runs the CLI with argv-style arguments (argv[0] is the program name).
/// Returns 0 on success, 1 on validation errors, 2 on runtime failures.
int run_cli(int argc, const char* const* argv);

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

}  // namespace maskforge
