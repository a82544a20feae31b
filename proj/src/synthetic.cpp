#include "morphorisk/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "morphorisk/error.hpp"
#include "morphorisk/random.hpp"

namespace morphorisk::synth {

using bodycomp::LevelId;
using bodycomp::ScoreKey;
using bodycomp::TissueLabel;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double round_to(double v, double step) { return std::round(v / step) * step; }

std::string mode_name(Mode m) { return m == Mode::kScores ? "scores" : "phantom"; }

// Stream tags under a patient's seed.
constexpr std::uint64_t kScoreStream = 1;
constexpr std::uint64_t kPhantomStream = 2;

std::int16_t clamp_hu(double v) {
  return static_cast<std::int16_t>(std::clamp(std::lround(v), -999L, 3071L));
}

void check_metric(const std::string& metric, const char* what) {
  const auto& keys = bodycomp::catalog_keys();
  for (LevelId level : bodycomp::kAllLevels) {
    if (std::find(keys.begin(), keys.end(), ScoreKey{metric, level}) == keys.end()) {
      throw Error(ErrorCode::kConfigInvalid, std::string(what) + " '" + metric + "' is not a catalog metric at " +
                                                 std::string(bodycomp::level_name(level)));
    }
  }
}

}  // namespace

// ---- config ------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::kConfigInvalid, msg); };
  if (n > 1'000'000) bad("n must be at most 1000000");
  if (!(development_fraction >= 0 && development_fraction <= 1)) bad("development_fraction must be in [0, 1]");
  if (!(baseline_hazard > 0)) bad("baseline_hazard must be > 0");
  if (!(censoring_rate >= 0 && censoring_rate <= 1)) bad("censoring_rate must be in [0, 1]");
  if (!(nsqip_threshold >= 0 && nsqip_threshold <= 1)) bad("nsqip_threshold must be in [0, 1]");
  if (!(nsqip_noise_sd >= 0) || !(decoy_noise_sd >= 0)) bad("noise sd must be >= 0");
  if (!(level_correlation >= -1 && level_correlation <= 1)) bad("level_correlation must be in [-1, 1]");
  for (double v : {clin_log_hr, img_log_hr, nsqip_intercept, outcome_intercept, confounder_logit, img_logit_beta}) {
    if (!std::isfinite(v)) bad("model coefficients must be finite");
  }
  if (mode == Mode::kScores) {
    std::set<std::string> names;
    auto add = [&](const std::string& m, const char* what) {
      if (m.empty()) return;
      check_metric(m, what);
      if (!names.insert(m).second) bad("metric '" + m + "' is used twice");
    };
    add(planted_metric, "planted_metric");
    if (planted_metric.empty()) bad("planted_metric is required in score mode");
    add(decoy_metric, "decoy_metric");
    add(duplicate_metric, "duplicate_metric");
    for (const auto& m : noise_metrics) add(m, "noise metric");
  } else {
    if (phantom_nx < 16 || phantom_ny < 16) bad("phantom_nx and phantom_ny must be >= 16");
    if (phantom_nz < 8) bad("phantom_nz must be >= 8");
    if (phantom_nx * phantom_ny * phantom_nz > 4'000'000) bad("phantom grid too large");
    if (!(spacing_xy > 0) || !(spacing_z > 0)) bad("spacing must be > 0");
  }
}

SyntheticConfig parse_synthetic_config(std::string_view text) {
  io::KeyValueReader r(io::parse_key_values(text));
  SyntheticConfig c;
  const double inf = std::numeric_limits<double>::infinity();
  c.n = r.get_uint("n", c.n, 0, 1'000'000);
  const auto mode = r.get_string("mode", mode_name(c.mode));
  if (mode == "scores") c.mode = Mode::kScores;
  else if (mode == "phantom") c.mode = Mode::kPhantom;
  else throw Error(ErrorCode::kConfigInvalid, "mode must be scores or phantom");
  c.development_fraction = r.get_double("development_fraction", c.development_fraction, 0, 1);
  c.baseline_hazard = r.get_double("baseline_hazard", c.baseline_hazard, 1e-12, 10);
  c.clin_log_hr = r.get_double("clin_log_hr", c.clin_log_hr, -10, 10);
  c.img_log_hr = r.get_double("img_log_hr", c.img_log_hr, -10, 10);
  c.censoring_rate = r.get_double("censoring_rate", c.censoring_rate, 0, 1);
  c.two_regime = r.get_bool("two_regime", c.two_regime);
  c.nsqip_threshold = r.get_double("nsqip_threshold", c.nsqip_threshold, 0, 1);
  c.nsqip_intercept = r.get_double("nsqip_intercept", c.nsqip_intercept, -20, 20);
  c.nsqip_noise_sd = r.get_double("nsqip_noise_sd", c.nsqip_noise_sd, 0, 10);
  c.outcome_intercept = r.get_double("outcome_intercept", c.outcome_intercept, -20, 20);
  c.confounder_logit = r.get_double("confounder_logit", c.confounder_logit, -10, 10);
  c.img_logit_beta = r.get_double("img_logit_beta", c.img_logit_beta, -10, 10);
  c.planted_metric = r.get_string("planted_metric", c.planted_metric);
  const auto level = r.get_string("planted_level", std::string(bodycomp::level_name(c.planted_level)));
  const auto parsed_level = bodycomp::parse_level(level);
  if (!parsed_level) throw Error(ErrorCode::kConfigInvalid, "planted_level '" + level + "' is not a level");
  c.planted_level = *parsed_level;
  c.level_correlation = r.get_double("level_correlation", c.level_correlation, -1, 1);
  c.decoy_metric = r.get_string("decoy_metric", c.decoy_metric);
  c.decoy_noise_sd = r.get_double("decoy_noise_sd", c.decoy_noise_sd, 0, inf);
  c.duplicate_metric = r.get_string("duplicate_metric", c.duplicate_metric);
  c.noise_metrics = r.get_list("noise_metrics", c.noise_metrics);
  c.phantom_nx = r.get_uint("phantom_nx", c.phantom_nx, 16, 1024);
  c.phantom_ny = r.get_uint("phantom_ny", c.phantom_ny, 16, 1024);
  c.phantom_nz = r.get_uint("phantom_nz", c.phantom_nz, 8, 1024);
  c.spacing_xy = r.get_double("spacing_xy", c.spacing_xy, 1e-6, 100);
  c.spacing_z = r.get_double("spacing_z", c.spacing_z, 1e-6, 100);
  c.z_increases_toward_head = r.get_bool("z_increases_toward_head", c.z_increases_toward_head);
  r.finish();
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::string>> config_entries(const SyntheticConfig& c) {
  std::string noise;
  for (const auto& m : c.noise_metrics) noise += (noise.empty() ? "" : ",") + m;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto d = [](double v) { return io::format_exact(v); };
  return {{"n", std::to_string(c.n)},
          {"mode", mode_name(c.mode)},
          {"development_fraction", d(c.development_fraction)},
          {"baseline_hazard", d(c.baseline_hazard)},
          {"clin_log_hr", d(c.clin_log_hr)},
          {"img_log_hr", d(c.img_log_hr)},
          {"censoring_rate", d(c.censoring_rate)},
          {"two_regime", b(c.two_regime)},
          {"nsqip_threshold", d(c.nsqip_threshold)},
          {"nsqip_intercept", d(c.nsqip_intercept)},
          {"nsqip_noise_sd", d(c.nsqip_noise_sd)},
          {"outcome_intercept", d(c.outcome_intercept)},
          {"confounder_logit", d(c.confounder_logit)},
          {"img_logit_beta", d(c.img_logit_beta)},
          {"planted_metric", c.planted_metric},
          {"planted_level", std::string(bodycomp::level_name(c.planted_level))},
          {"level_correlation", d(c.level_correlation)},
          {"decoy_metric", c.decoy_metric},
          {"decoy_noise_sd", d(c.decoy_noise_sd)},
          {"duplicate_metric", c.duplicate_metric},
          {"noise_metrics", noise},
          {"phantom_nx", std::to_string(c.phantom_nx)},
          {"phantom_ny", std::to_string(c.phantom_ny)},
          {"phantom_nz", std::to_string(c.phantom_nz)},
          {"spacing_xy", d(c.spacing_xy)},
          {"spacing_z", d(c.spacing_z)},
          {"z_increases_toward_head", b(c.z_increases_toward_head)}};
}

// ---- phantoms ------------------------------------------------------------------------

std::int64_t isqrt(std::int64_t v) {
  if (v < 0) return -1;
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

std::uint64_t lattice_disc_count(std::int64_t r2) {
  if (r2 < 0) return 0;
  const std::int64_t r = isqrt(r2);
  std::uint64_t count = 0;
  for (std::int64_t dx = -r; dx <= r; ++dx) count += static_cast<std::uint64_t>(2 * isqrt(r2 - dx * dx) + 1);
  return count;
}

bodycomp::LabeledVolume rasterize(const PhantomGeometry& g) {
  const auto& d = g.dims;
  if (g.slices.size() != d.nz) throw Error(ErrorCode::kInvalidArgument, "one PhantomSlice per z slice required");
  const auto cx = static_cast<std::int64_t>(d.nx / 2), cy = static_cast<std::int64_t>(d.ny / 2);
  std::vector<std::int16_t> hu(d.voxel_count(), -1000);
  std::vector<TissueLabel> labels(d.voxel_count(), TissueLabel::kBackground);
  std::size_t i = 0;
  for (std::size_t z = 0; z < d.nz; ++z) {
    const auto& s = g.slices[z];
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        const std::int64_t dx = static_cast<std::int64_t>(x) - cx, dy = static_cast<std::int64_t>(y) - cy;
        const std::int64_t r2 = dx * dx + dy * dy;
        if (r2 <= s.r2_vat) {
          labels[i] = TissueLabel::kVisceralFat;
          hu[i] = s.hu_vat;
        } else if (r2 <= s.r2_imat) {
          labels[i] = TissueLabel::kIntermuscularFat;
          hu[i] = s.hu_imat;
        } else if (r2 <= s.r2_muscle) {
          labels[i] = TissueLabel::kSkeletalMuscle;
          hu[i] = s.hu_muscle;
        } else if (r2 <= s.r2_sat) {
          labels[i] = TissueLabel::kSubcutaneousFat;
          hu[i] = s.hu_sat;
        } else if (r2 <= s.r2_body) {
          hu[i] = s.hu_body;
        }
      }
    }
  }
  return bodycomp::LabeledVolume(d, g.spacing, std::move(hu), std::move(labels), g.z_increases_toward_head);
}

bodycomp::ScoreVector analytic_direct_scores(const PhantomGeometry& g) {
  struct Counts {
    std::uint64_t vat = 0, imat = 0, muscle = 0, sat = 0, body = 0;
    std::int64_t hu_muscle_sum = 0, hu_imat_sum = 0;
  };
  auto slice_counts = [&](std::size_t z) {
    const auto& s = g.slices[z];
    const auto n_vat = lattice_disc_count(s.r2_vat), n_imat = lattice_disc_count(s.r2_imat);
    const auto n_mus = lattice_disc_count(s.r2_muscle), n_sat = lattice_disc_count(s.r2_sat);
    Counts c;
    c.vat = n_vat;
    c.imat = n_imat - n_vat;
    c.muscle = n_mus - n_imat;
    c.sat = n_sat - n_mus;
    c.body = lattice_disc_count(s.r2_body);
    c.hu_muscle_sum = static_cast<std::int64_t>(c.muscle) * s.hu_muscle;
    c.hu_imat_sum = static_cast<std::int64_t>(c.imat) * s.hu_imat;
    return c;
  };
  bodycomp::ScoreVector out;
  auto emit = [&](LevelId level, const Counts& c, double unit) {
    out.insert("SMA", level, static_cast<double>(c.muscle) * unit);
    out.insert("SFA", level, static_cast<double>(c.sat) * unit);
    out.insert("VFA", level, static_cast<double>(c.vat) * unit);
    out.insert("MFA", level, static_cast<double>(c.imat) * unit);
    out.insert("BODY", level, static_cast<double>(c.body) * unit);
    out.insert("SMD", level,
               c.muscle ? bodycomp::Score(static_cast<double>(c.hu_muscle_sum) / static_cast<double>(c.muscle))
                        : std::nullopt);
    const auto n_mi = c.muscle + c.imat;
    out.insert("SMFD", level,
               n_mi ? bodycomp::Score(static_cast<double>(c.hu_muscle_sum + c.hu_imat_sum) / static_cast<double>(n_mi))
                    : std::nullopt);
  };
  for (LevelId level : bodycomp::kPlanarLevels) {
    emit(level, slice_counts(static_cast<std::size_t>(bodycomp::slice_for_level(g.vmap, level))),
         g.spacing.pixel_area());
  }
  const auto range = bodycomp::volume_range(g.vmap);
  Counts total;
  for (std::size_t z = range.lo; z <= range.hi; ++z) {
    const auto c = slice_counts(z);
    total.vat += c.vat;
    total.imat += c.imat;
    total.muscle += c.muscle;
    total.sat += c.sat;
    total.body += c.body;
    total.hu_muscle_sum += c.hu_muscle_sum;
    total.hu_imat_sum += c.hu_imat_sum;
  }
  emit(LevelId::kVol3D, total, g.spacing.voxel_volume());
  return out;
}

PhantomGeometry phantom_for(const SyntheticConfig& config, std::uint64_t seed, std::size_t i,
                            const io::PatientRecord& record, const PatientLatent& latent) {
  Rng rng(derive_seed(derive_seed(seed, i), kPhantomStream));
  PhantomGeometry g;
  g.dims = {config.phantom_nx, config.phantom_ny, config.phantom_nz};
  g.spacing = {config.spacing_xy, config.spacing_xy, config.spacing_z};
  g.z_increases_toward_head = config.z_increases_toward_head;

  const auto nz = static_cast<int>(config.phantom_nz);
  // Vertebral centroids spread evenly between the margins, T12 first anatomically.
  std::array<int, 5> zs{};
  for (int k = 0; k < 5; ++k) zs[static_cast<std::size_t>(k)] = 1 + (k * (nz - 3)) / 4;
  for (std::size_t k = 0; k < 5; ++k) {
    const int z = config.z_increases_toward_head ? nz - 1 - zs[k] : zs[k];
    g.vmap.set(bodycomp::kAllVertebrae[k], z);
  }
  g.vmap.z_increases_toward_head = config.z_increases_toward_head;

  const std::int64_t max_r = static_cast<std::int64_t>(std::min(config.phantom_nx, config.phantom_ny) / 2) - 1;
  const double bmi = record.bmi.value_or(27.0);
  const double body_r = std::clamp(0.8 * static_cast<double>(max_r) * (1 + 0.02 * (bmi - 27)) + rng.normal(0, 0.5),
                                   0.45 * static_cast<double>(max_r), static_cast<double>(max_r));
  const double visceral = rng.normal();
  const double vat_frac = std::clamp(0.3 + 0.05 * visceral, 0.12, 0.45);
  const double imat_frac = vat_frac + 0.06;
  const double muscle_frac = imat_frac + std::clamp(0.25 * (1 - 0.15 * latent.image), 0.1, 0.35);
  const double sat_frac = std::clamp(muscle_frac + 0.15 + 0.01 * (bmi - 27), muscle_frac + 0.05, 0.95);
  const double hu_muscle = 40 - 8 * latent.image;
  const double phase = rng.uniform(0, 3.14159);

  for (int z = 0; z < nz; ++z) {
    const double f = 1 + 0.12 * std::sin(3.14159 * z / nz + phase) + rng.normal(0, 0.02);
    PhantomSlice s;
    auto r2 = [&](double frac) { return static_cast<std::int64_t>(std::llround(std::pow(frac * body_r * f, 2))); };
    s.r2_body = std::min(r2(1.0), max_r * max_r);
    s.r2_sat = std::min(r2(sat_frac), s.r2_body - 1);
    s.r2_muscle = std::min(r2(muscle_frac), s.r2_sat - 1);
    s.r2_imat = std::min(r2(imat_frac), s.r2_muscle - 1);
    s.r2_vat = std::max<std::int64_t>(0, std::min(r2(vat_frac), s.r2_imat - 1));
    s.hu_vat = clamp_hu(-95 + rng.normal(0, 5));
    s.hu_imat = clamp_hu(-70 + rng.normal(0, 5));
    s.hu_muscle = clamp_hu(hu_muscle + rng.normal(0, 2));
    s.hu_sat = clamp_hu(-105 + rng.normal(0, 5));
    s.hu_body = clamp_hu(30 + rng.normal(0, 5));
    g.slices.push_back(s);
  }
  return g;
}

// ---- cohorts ---------------------------------------------------------------------------

namespace {

std::string patient_id(std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i + 1);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
  return "P" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

double age_group_value(const std::string& cat) {
  if (cat == "<65") return -1.5;
  if (cat == "65-75") return -0.5;
  if (cat == "75-85") return 0.5;
  return 1.5;
}

}  // namespace

SyntheticCohort generate_cohort(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticCohort out;
  const auto n_dev = static_cast<std::size_t>(std::llround(config.development_fraction * static_cast<double>(config.n)));

  std::vector<bodycomp::ScoreVector> score_rows;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < config.n; ++i) {
    Rng rng(derive_seed(seed, i));
    io::PatientRecord p;
    p.patient_id = patient_id(i, config.n);
    p.cohort = i < n_dev ? "development" : "validation";
    p.sex = rng.bernoulli(0.5) ? bodycomp::Sex::kFemale : bodycomp::Sex::kMale;
    p.age = round_to(std::clamp(rng.normal(68, 11), 20.0, 98.0), 0.1);
    p.age_cat = io::age_category(p.age);
    p.height_m = round_to((p.sex == bodycomp::Sex::kMale ? 1.76 : 1.63) + rng.normal(0, 0.07), 0.01);
    p.bmi = round_to(std::clamp(rng.normal(27, 5), 15.0, 55.0), 0.1);
    p.bmi_cat = io::bmi_category(*p.bmi);
    p.smoker = rng.bernoulli(0.2);
    p.functional_status = rng.bernoulli(0.15) ? io::FunctionalStatus::kNonIndependent : io::FunctionalStatus::kIndependent;
    const double a = rng.uniform();
    p.asa_class = a < 0.1 ? 1 : a < 0.5 ? 2 : a < 0.9 ? 3 : 4;
    p.emergency = rng.bernoulli(0.1);

    PatientLatent lat;
    lat.clinical = 0.05 * (p.age - 68) + 0.7 * (p.functional_status == io::FunctionalStatus::kNonIndependent) +
                   0.5 * (p.asa_class - 2.5) + 0.3 * p.smoker + 0.6 * p.emergency + rng.normal(0, 0.5);
    lat.image = rng.normal();
    const double nsqip = sigmoid(config.nsqip_intercept + lat.clinical + rng.normal(0, config.nsqip_noise_sd));
    p.nsqip_mortality_risk = nsqip;
    const double img_term = config.two_regime ? (nsqip < config.nsqip_threshold ? lat.image : 0.0) : lat.image;
    lat.hazard = config.baseline_hazard * std::exp(config.clin_log_hr * lat.clinical + config.img_log_hr * img_term);

    const double death = std::ceil(rng.exponential(lat.hazard));
    const bool lost_early = rng.bernoulli(config.censoring_rate);
    const double fu = lost_early ? static_cast<double>(1 + rng.below(365)) : static_cast<double>(366 + rng.below(435));
    if (death <= fu) {
      p.vital_status = io::VitalStatus::kDied;
      p.death_day = death;
      p.last_followup_days = death;
    } else {
      p.last_followup_days = fu;
    }
    if (p.death_day && *p.death_day <= 30) p.outcomes[0] = 1;
    else if (p.last_followup_days >= 30) p.outcomes[0] = 0;

    const double b0 = config.outcome_intercept, cu = config.confounder_logit * lat.clinical;
    const double img = config.img_logit_beta * lat.image;
    const std::array<double, 6> logits = {b0 + cu + img,       b0 - 1 + cu + 0.5 * img, b0 - 1 + cu,
                                          b0 - 1.5 + 0.5 * cu, b0 - 2 + 0.5 * cu,       b0 - 2 + cu};
    for (std::size_t k = 0; k < logits.size(); ++k) p.outcomes[k + 1] = rng.bernoulli(sigmoid(logits[k])) ? 1 : 0;

    if (config.mode == Mode::kPhantom) p.mask_path = "masks/" + p.patient_id + ".mvol";

    if (config.mode == Mode::kScores) {
      Rng srng(derive_seed(derive_seed(seed, i), kScoreStream));
      bodycomp::ScoreVector sv;
      const double rho = config.level_correlation, resid = std::sqrt(1 - rho * rho);
      for (LevelId level : bodycomp::kAllLevels) {
        const double v = level == config.planted_level ? lat.image : rho * lat.image + resid * srng.normal();
        sv.insert(config.planted_metric, level, v);
        if (!config.duplicate_metric.empty()) sv.insert(config.duplicate_metric, level, v);
      }
      if (!config.decoy_metric.empty()) {
        // One score for every level, so level choice cannot pick a lucky noise draw.
        const double v = age_group_value(p.age_cat) + config.decoy_noise_sd * srng.normal();
        for (LevelId level : bodycomp::kAllLevels) sv.insert(config.decoy_metric, level, v);
      }
      for (const auto& m : config.noise_metrics) {
        const double common = srng.normal();
        for (LevelId level : bodycomp::kAllLevels) sv.insert(m, level, rho * common + resid * srng.normal());
      }
      score_rows.push_back(std::move(sv));
      ids.push_back(p.patient_id);
    }
    out.records.push_back(std::move(p));
    out.latent.push_back(lat);
  }

  if (config.mode == Mode::kScores) {
    io::ScoreTable t;
    t.patient_ids = ids;
    if (!score_rows.empty()) {
      for (const auto& [key, v] : score_rows.front()) t.keys.push_back(key);
    } else {
      // Header-only table with the same columns a non-empty cohort would have.
      std::vector<std::string> metrics = {config.planted_metric};
      for (const auto* m : {&config.duplicate_metric, &config.decoy_metric})
        if (!m->empty()) metrics.push_back(*m);
      metrics.insert(metrics.end(), config.noise_metrics.begin(), config.noise_metrics.end());
      for (const auto& m : metrics)
        for (LevelId level : bodycomp::kAllLevels) t.keys.push_back({m, level});
      std::sort(t.keys.begin(), t.keys.end());
    }
    for (const auto& sv : score_rows) {
      std::vector<bodycomp::Score> row;
      for (const auto& k : t.keys) row.push_back(sv.at(k.metric, k.level));
      t.rows.push_back(std::move(row));
    }
    out.scores = std::move(t);
  }

  std::size_t deaths = 0, deaths_1y = 0, lost = 0;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const auto& p = out.records[i];
    deaths += p.vital_status == io::VitalStatus::kDied;
    const auto d = io::derive_outcome(p.vital_status, p.death_day, p.last_followup_days);
    deaths_1y += d.event;
    lost += d.one_year_status == io::OneYearStatus::kUnknown;
  }
  out.truth.emplace_back("seed", std::to_string(seed));
  for (auto& [k, v] : config_entries(config)) out.truth.emplace_back("config." + k, v);
  out.truth.emplace_back("truth.hazard_model",
                         "baseline_hazard * exp(clin_log_hr * u + img_log_hr * s" +
                             std::string(config.two_regime ? " * [nsqip < nsqip_threshold])" : ")"));
  out.truth.emplace_back("truth.any_complication_logit", "outcome_intercept + confounder_logit * u + img_logit_beta * s");
  out.truth.emplace_back("truth.planted_score", bodycomp::column_name({config.planted_metric, config.planted_level}));
  out.truth.emplace_back("truth.planted_score_equals", "s");
  out.truth.emplace_back("truth.development_n", std::to_string(n_dev));
  out.truth.emplace_back("observed.deaths", std::to_string(deaths));
  out.truth.emplace_back("observed.deaths_within_horizon", std::to_string(deaths_1y));
  out.truth.emplace_back("observed.unknown_one_year_status", std::to_string(lost));
  return out;
}

void write_synthetic_cohort(const SyntheticConfig& config, std::uint64_t seed, const io::fs::path& dir) {
  const auto cohort = generate_cohort(config, seed);
  io::write_cohort(dir / "cohort.csv", cohort.records);
  io::write_text(dir / "truth.txt", io::format_key_values(cohort.truth));
  if (config.mode == Mode::kScores) {
    io::write_score_table(dir / "scores.csv", cohort.scores);
    return;
  }
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& p = cohort.records[i];
    const auto g = phantom_for(config, seed, i, p, cohort.latent[i]);
    io::write_mvol(dir / p.mask_path, rasterize(g));
    io::write_vertebral_map(dir / "maps" / (p.patient_id + ".csv"), g.vmap);
  }
}

// ---- small simulators ------------------------------------------------------------------

BinaryCoxSample simulate_binary_cox(std::size_t n, double hazard_ratio, double rate, double censor_max,
                                    std::uint64_t seed) {
  Rng rng(seed);
  BinaryCoxSample s;
  s.x.resize(n);
  s.surv.time.resize(n);
  s.surv.event.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool x = rng.bernoulli(0.5);
    const double t = rng.exponential(rate * (x ? hazard_ratio : 1.0));
    const double c = rng.uniform_open() * censor_max;
    s.x[i] = x ? 1.0 : 0.0;
    s.surv.time[i] = std::min(t, c);
    s.surv.event[i] = t <= c ? 1 : 0;
  }
  return s;
}

}  // namespace morphorisk::synth
