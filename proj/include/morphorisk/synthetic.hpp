#pragma once

// Seeded synthetic cohorts with known ground truth: geometric phantoms whose
// tissue areas are lattice-point counts, planted score signals, and survival
// and complication outcomes drawn from stated models.

#include <cstdint>
#include <string>
#include <vector>

#include "morphorisk/bodycomp.hpp"
#include "morphorisk/cohort_io.hpp"
#include "morphorisk/stats_models.hpp"

namespace morphorisk::synth {

enum class Mode { kScores, kPhantom };

struct SyntheticConfig {
  std::size_t n = 400;
  Mode mode = Mode::kScores;
  double development_fraction = 0.6;

  // survival: hazard = baseline_hazard * exp(clin_log_hr * u + img_log_hr * s)
  // with u the centred clinical log-odds and s the image latent (per SD).
  double baseline_hazard = 0.0008;
  double clin_log_hr = 0.8;
  double img_log_hr = 0.0;
  /// Fraction of patients lost to follow-up before the one-year horizon.
  double censoring_rate = 0.2;
  /// When true the image effect on hazard applies only below nsqip_threshold.
  bool two_regime = false;
  double nsqip_threshold = 0.05;
  /// Intercept of the clinical log-odds that the NSQIP-analog risk reports.
  double nsqip_intercept = -3.0;
  double nsqip_noise_sd = 0.2;

  // binary complications: logit = intercept + confounder_logit * u + img_logit_beta * s
  double outcome_intercept = -1.0;
  double confounder_logit = 0.6;
  double img_logit_beta = 0.8;

  // score mode
  std::string planted_metric = "N_SMD";
  bodycomp::LevelId planted_level = bodycomp::LevelId::kL2;
  /// Correlation between the planted level and every other level.
  double level_correlation = 0.5;
  /// Metric equal to an age-group function plus noise, the same value at
  /// every level (empty = none).
  std::string decoy_metric = "N_VFA";
  double decoy_noise_sd = 0.5;
  /// Exact copy of the planted metric under another name (empty = none).
  std::string duplicate_metric;
  std::vector<std::string> noise_metrics = {"N_SFA", "N_MFR"};

  // phantom mode
  std::size_t phantom_nx = 48;
  std::size_t phantom_ny = 48;
  std::size_t phantom_nz = 24;
  double spacing_xy = 0.8;
  double spacing_z = 5.0;
  bool z_increases_toward_head = false;

  /// Throws ConfigInvalid.
  void validate() const;
};

/// Reads a flat key=value generator config; unknown keys are rejected.
SyntheticConfig parse_synthetic_config(std::string_view text);
std::vector<std::pair<std::string, std::string>> config_entries(const SyntheticConfig& config);

// ---- phantoms ----------------------------------------------------------------------

/// Lattice points (dx, dy) with dx^2 + dy^2 <= r2; the analytic count of a
/// rasterized disc of squared radius r2 centred on a voxel.
std::uint64_t lattice_disc_count(std::int64_t r2);
std::int64_t isqrt(std::int64_t v);

/// Concentric regions from the centre outward: visceral fat disc,
/// intermuscular fat ring, muscle ring, subcutaneous fat ring, unlabeled
/// body ring, then air (-1000 HU). Squared radii strictly increase.
struct PhantomSlice {
  std::int64_t r2_vat = 0;
  std::int64_t r2_imat = 0;
  std::int64_t r2_muscle = 0;
  std::int64_t r2_sat = 0;
  std::int64_t r2_body = 0;
  std::int16_t hu_vat = -100;
  std::int16_t hu_imat = -60;
  std::int16_t hu_muscle = 40;
  std::int16_t hu_sat = -100;
  std::int16_t hu_body = 30;
};

struct PhantomGeometry {
  bodycomp::Dims dims;
  bodycomp::Spacing spacing;
  bool z_increases_toward_head = false;
  std::vector<PhantomSlice> slices;
  bodycomp::VertebralMap vmap;
};

bodycomp::LabeledVolume rasterize(const PhantomGeometry& geometry);

/// Direct measurements (SMA, SFA, VFA, MFA, BODY, SMD, SMFD at every level)
/// from lattice counts and slice HU constants, without touching voxels.
bodycomp::ScoreVector analytic_direct_scores(const PhantomGeometry& geometry);

// ---- cohorts ------------------------------------------------------------------------

/// Unobserved per-patient quantities that drive every outcome.
struct PatientLatent {
  double image = 0.0;       ///< planted image factor s ~ N(0, 1)
  double clinical = 0.0;    ///< centred clinical log-odds u
  double hazard = 0.0;      ///< daily hazard
};

struct SyntheticCohort {
  std::vector<io::PatientRecord> records;
  std::vector<PatientLatent> latent;
  /// Score mode only: planted, decoy, duplicate and noise metrics at every level.
  io::ScoreTable scores;
  /// Ground-truth sidecar entries.
  std::vector<std::pair<std::string, std::string>> truth;
};

/// Patients are drawn independently from derive_seed(seed, i), so the
/// result does not depend on generation order.
SyntheticCohort generate_cohort(const SyntheticConfig& config, std::uint64_t seed);

/// Phantom of patient i (phantom mode); driven by the same latent factors.
PhantomGeometry phantom_for(const SyntheticConfig& config, std::uint64_t seed, std::size_t i,
                            const io::PatientRecord& record, const PatientLatent& latent);

/// Writes cohort.csv, truth.txt and, in phantom mode, masks/<id>.mvol and
/// maps/<id>.csv; in score mode, scores.csv.
void write_synthetic_cohort(const SyntheticConfig& config, std::uint64_t seed, const io::fs::path& dir);

// ---- small simulators ---------------------------------------------------------------

/// Binary covariate x ~ Bernoulli(1/2), event time ~ Exp(rate * hr^x),
/// independent uniform censoring on (0, censor_max).
struct BinaryCoxSample {
  std::vector<double> x;
  stats::SurvivalData surv;
};
BinaryCoxSample simulate_binary_cox(std::size_t n, double hazard_ratio, double rate, double censor_max,
                                    std::uint64_t seed);

}  // namespace morphorisk::synth
