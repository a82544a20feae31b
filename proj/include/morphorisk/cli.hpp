#pragma once

// Stage-per-command batch driver. Each command reads its declared inputs
// from the output directory, writes stage-named files there, and reports
// per-item errors in <stage>_errors.csv.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "morphorisk/cohort_io.hpp"
#include "morphorisk/selection_pipeline.hpp"

namespace morphorisk::cli {

struct RunConfig {
  /// Paths are resolved against the config file's directory.
  io::fs::path cohort;
  io::fs::path masks_dir;
  io::fs::path maps_dir;
  io::fs::path output_dir;
  /// Precomputed score table; when set, extract validates and copies it
  /// instead of reading masks.
  std::optional<io::fs::path> scores_input;

  std::vector<std::string> outcomes = pipeline::default_outcomes();
  std::vector<std::string> confounders = pipeline::kConfounders;
  std::vector<pipeline::Variant> variants = {pipeline::Variant::kImgOnly, pipeline::Variant::kClinOnly,
                                             pipeline::Variant::kImgClin, pipeline::Variant::kNsqipOnly,
                                             pipeline::Variant::kImgNsqip};
  double corr_threshold = 0.8;
  double retain_p = 0.1;
  double eliminate_p = 0.1;
  double nsqip_threshold = 0.05;
  std::vector<double> nsqip_sweep = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.10, 0.15, 0.20, 0.30, 1.0};
  std::size_t min_n = 50;
  std::size_t bootstrap_replicates = 1000;
  bool include_ibs = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<pipeline::LevelOverride> overrides;

  /// Canonical key = value entries as written in the file (paths verbatim).
  std::vector<std::pair<std::string, std::string>> entries;
};

/// Throws ConfigInvalid (unknown key, bad value, unresolvable path).
RunConfig parse_run_config(std::string_view text, const io::fs::path& base_dir);
RunConfig load_run_config(const io::fs::path& path);

/// --seed beats MORPHORISK_SEED, which beats the file.
void apply_seed_overrides(RunConfig& config, std::optional<std::uint64_t> cli_seed);

struct CommandResult {
  std::string command;
  std::size_t errors = 0;
  std::vector<io::fs::path> outputs;
};

CommandResult cmd_extract(const RunConfig& config);
CommandResult cmd_screen(const RunConfig& config);
CommandResult cmd_select(const RunConfig& config);
CommandResult cmd_fit(const RunConfig& config);
CommandResult cmd_evaluate(const RunConfig& config);
CommandResult cmd_km(const RunConfig& config);
CommandResult cmd_report(const RunConfig& config);

/// Stage names in pipeline order.
const std::vector<std::string>& stage_names();
/// Throws InvalidArgument for an unknown name and MissingUpstream when a
/// declared input is absent.
CommandResult run_stage(const std::string& name, const RunConfig& config);

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

// ---- model persistence -------------------------------------------------------------

/// Outcome -> variant -> model, as written by `fit`.
using ModelStore = std::map<std::string, std::map<pipeline::Variant, pipeline::FittedModel>>;
std::string format_models(const ModelStore& models);
ModelStore parse_models(std::string_view text);

}  // namespace morphorisk::cli
