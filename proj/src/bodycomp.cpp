#include "morphorisk/bodycomp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "morphorisk/error.hpp"

namespace morphorisk::bodycomp {

namespace {

const std::string kSMA = "SMA";
const std::string kSMD = "SMD";
const std::string kSFA = "SFA";
const std::string kVFA = "VFA";
const std::string kMFA = "MFA";
const std::string kBODY = "BODY";
const std::string kSMFA = "SMFA";
const std::string kSMFD = "SMFD";
const std::string kMFR = "MFR";
const std::string kSMI = "SMI";
const std::string kFMI = "FMI";
const std::string kSOI = "SOI";
const std::string kVFABMI = "VFA/BMI";
const std::string kNormPrefix = "N_";

constexpr std::array<TissueLabel, 1> kMuscleOnly = {TissueLabel::kSkeletalMuscle};
constexpr std::array<TissueLabel, 2> kMuscleAndImat = {TissueLabel::kSkeletalMuscle,
                                                       TissueLabel::kIntermuscularFat};

// numerator / denominator ratios, applied at every level.
struct RatioDef {
  std::string name;
  std::string numerator;
  std::string denominator;
};
const std::vector<RatioDef>& ratio_defs() {
  static const std::vector<RatioDef> defs = {
      {"VFA/SFA", kVFA, kSFA},   {"SFA/SMA", kSFA, kSMA},   {"VFA/SMA", kVFA, kSMA},
      {"MFA/SMA", kMFA, kSMA},   {"SFA/BODY", kSFA, kBODY}, {"VFA/BODY", kVFA, kBODY},
      {"MFA/BODY", kMFA, kBODY},
  };
  return defs;
}

Score ratio(Score num, Score den) {
  if (!num || !den || *den == 0.0) return std::nullopt;
  return *num / *den;
}

bool is_vertebra_level(LevelId level, Vertebra* out) {
  switch (level) {
    case LevelId::kT12: *out = Vertebra::kT12; return true;
    case LevelId::kL1: *out = Vertebra::kL1; return true;
    case LevelId::kL2: *out = Vertebra::kL2; return true;
    case LevelId::kL3: *out = Vertebra::kL3; return true;
    case LevelId::kL4: *out = Vertebra::kL4; return true;
    default: return false;
  }
}

int require_vertebra(const VertebralMap& vmap, Vertebra v) {
  auto z = vmap.get(v);
  if (!z) {
    throw Error(ErrorCode::kMissingVertebra,
                "vertebral map has no entry for " + std::string(vertebra_name(v)));
  }
  return *z;
}

void check_slice(const LabeledVolume& vol, std::size_t z) {
  if (z >= vol.dims().nz) {
    throw Error(ErrorCode::kOutOfRange, "slice " + std::to_string(z) + " outside [0, " +
                                            std::to_string(vol.dims().nz) + ")");
  }
}

void check_range(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi) {
  if (z_lo > z_hi) {
    throw Error(ErrorCode::kOutOfRange,
                "empty slice range [" + std::to_string(z_lo) + ", " + std::to_string(z_hi) + "]");
  }
  check_slice(vol, z_hi);
}

std::size_t count_label(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi,
                        TissueLabel tissue) {
  std::size_t count = 0;
  for (std::size_t z = z_lo; z <= z_hi; ++z) {
    for (TissueLabel l : vol.label_slice(z)) count += (l == tissue);
  }
  return count;
}

std::size_t count_body(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi) {
  std::size_t count = 0;
  for (std::size_t z = z_lo; z <= z_hi; ++z) {
    for (std::int16_t h : vol.hu_slice(z)) count += (h > kBodyHuThreshold);
  }
  return count;
}

// Re-throws a sub-operation error with the offending (metric, level).
template <typename Fn>
auto with_context(const std::string& metric, LevelId level, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " [while computing " + metric + " at " +
                              std::string(level_name(level)) + "]");
  }
}

std::vector<ScoreKey> build_raw_keys() {
  std::vector<ScoreKey> keys;
  for (LevelId level : kAllLevels) {
    for (const auto& m : direct_metric_names()) keys.push_back({m, level});
    keys.push_back({kSMFD, level});
    keys.push_back({kSMFA, level});
    keys.push_back({kMFR, level});
    for (const auto& r : ratio_defs()) keys.push_back({r.name, level});
    keys.push_back({kVFABMI, level});
  }
  for (LevelId level : {LevelId::kL3, LevelId::kVol3D}) {
    keys.push_back({kSMI, level});
    keys.push_back({kFMI, level});
    keys.push_back({kSOI, level});
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool is_normalized_metric(std::string_view metric) {
  const auto& names = normalized_metric_names();
  return std::find(names.begin(), names.end(), metric) != names.end();
}

}  // namespace

// ---- LabeledVolume -----------------------------------------------------------

LabeledVolume::LabeledVolume(Dims dims, Spacing spacing, std::vector<std::int16_t> hu,
                             std::vector<TissueLabel> labels, bool z_increases_toward_head)
    : dims_(dims),
      spacing_(spacing),
      hu_(std::move(hu)),
      labels_(std::move(labels)),
      z_increases_toward_head_(z_increases_toward_head) {
  if (!(spacing_.sx > 0.0) || !(spacing_.sy > 0.0) || !(spacing_.sz > 0.0)) {
    throw Error(ErrorCode::kNonPositiveSpacing, "every spacing component must be > 0");
  }
  if (hu_.size() != dims_.voxel_count() || labels_.size() != dims_.voxel_count()) {
    throw Error(ErrorCode::kInvalidArgument,
                "grid sizes (hu " + std::to_string(hu_.size()) + ", labels " +
                    std::to_string(labels_.size()) + ") do not match dims " +
                    std::to_string(dims_.voxel_count()));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!is_valid_label_code(static_cast<std::uint8_t>(labels_[i]))) {
      throw Error(ErrorCode::kIllegalLabel, "label code " +
                                                std::to_string(static_cast<int>(labels_[i])) +
                                                " at voxel " + std::to_string(i));
    }
    if (hu_[i] < kMinHu || hu_[i] > kMaxHu) {
      throw Error(ErrorCode::kRangeViolation,
                  "HU " + std::to_string(hu_[i]) + " at voxel " + std::to_string(i));
    }
  }
}

std::span<const std::int16_t> LabeledVolume::hu_slice(std::size_t z) const {
  const std::size_t n = dims_.nx * dims_.ny;
  return std::span<const std::int16_t>(hu_).subspan(z * n, n);
}

std::span<const TissueLabel> LabeledVolume::label_slice(std::size_t z) const {
  const std::size_t n = dims_.nx * dims_.ny;
  return std::span<const TissueLabel>(labels_).subspan(z * n, n);
}

// ---- names -------------------------------------------------------------------

std::string_view vertebra_name(Vertebra v) {
  switch (v) {
    case Vertebra::kT12: return "T12";
    case Vertebra::kL1: return "L1";
    case Vertebra::kL2: return "L2";
    case Vertebra::kL3: return "L3";
    case Vertebra::kL4: return "L4";
  }
  return "?";
}

std::optional<Vertebra> parse_vertebra(std::string_view name) {
  for (Vertebra v : kAllVertebrae) {
    if (vertebra_name(v) == name) return v;
  }
  return std::nullopt;
}

std::string_view level_name(LevelId level) {
  switch (level) {
    case LevelId::kT12: return "T12";
    case LevelId::kT12_L1: return "T12-L1";
    case LevelId::kL1: return "L1";
    case LevelId::kL1_L2: return "L1-L2";
    case LevelId::kL2: return "L2";
    case LevelId::kL2_L3: return "L2-L3";
    case LevelId::kL3: return "L3";
    case LevelId::kL3_L4: return "L3-L4";
    case LevelId::kL4: return "L4";
    case LevelId::kVol3D: return "VOL3D";
  }
  return "?";
}

std::optional<LevelId> parse_level(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '_', '-');
  if (s == "3D") return LevelId::kVol3D;
  for (LevelId level : kAllLevels) {
    if (level_name(level) == s) return level;
  }
  return std::nullopt;
}

std::string_view sex_name(Sex sex) { return sex == Sex::kMale ? "M" : "F"; }

std::optional<Sex> parse_sex(std::string_view s) {
  if (s == "M") return Sex::kMale;
  if (s == "F") return Sex::kFemale;
  return std::nullopt;
}

std::string column_name(const ScoreKey& key) {
  return key.metric + "@" + std::string(level_name(key.level));
}

std::optional<ScoreKey> parse_column_name(std::string_view column) {
  const auto at = column.rfind('@');
  if (at == std::string_view::npos || at == 0) return std::nullopt;
  auto level = parse_level(column.substr(at + 1));
  if (!level) return std::nullopt;
  return ScoreKey{std::string(column.substr(0, at)), *level};
}

// ---- VertebralMap / Demographics ---------------------------------------------

void VertebralMap::validate(std::size_t nz) const {
  int prev = 0;
  for (std::size_t i = 0; i < kAllVertebrae.size(); ++i) {
    const int slice = require_vertebra(*this, kAllVertebrae[i]);
    if (slice < 0 || static_cast<std::size_t>(slice) >= nz) {
      throw Error(ErrorCode::kOutOfRange, std::string(vertebra_name(kAllVertebrae[i])) +
                                              " slice " + std::to_string(slice) +
                                              " outside [0, " + std::to_string(nz) + ")");
    }
    // T12 -> L4 runs toward the feet.
    if (i > 0) {
      const bool ok = z_increases_toward_head ? slice < prev : slice > prev;
      if (!ok) {
        throw Error(ErrorCode::kRangeViolation,
                    "vertebral slices are not strictly monotonic at " +
                        std::string(vertebra_name(kAllVertebrae[i])));
      }
    }
    prev = slice;
  }
}

void Demographics::validate() const {
  if (height_m && !(*height_m > 0.5 && *height_m < 2.6)) {
    throw Error(ErrorCode::kRangeViolation,
                "height " + std::to_string(*height_m) + " m outside (0.5, 2.6)");
  }
  if (bmi && !(*bmi > 8.0 && *bmi < 100.0)) {
    throw Error(ErrorCode::kRangeViolation, "bmi " + std::to_string(*bmi) + " outside (8, 100)");
  }
}

// ---- ScoreVector / CohortNormStats -------------------------------------------

void ScoreVector::insert(const std::string& metric, LevelId level, Score value) {
  auto [it, inserted] = values_.emplace(ScoreKey{metric, level}, value);
  if (!inserted) {
    throw Error(ErrorCode::kInvalidArgument,
                "duplicate score " + column_name(ScoreKey{metric, level}));
  }
}

void ScoreVector::merge(const ScoreVector& other) {
  for (const auto& [key, value] : other) insert(key.metric, key.level, value);
}

bool ScoreVector::contains(const std::string& metric, LevelId level) const {
  return values_.count(ScoreKey{metric, level}) != 0;
}

Score ScoreVector::at(const std::string& metric, LevelId level) const {
  auto it = values_.find(ScoreKey{metric, level});
  if (it == values_.end()) {
    throw Error(ErrorCode::kOutOfRange, "no score " + column_name(ScoreKey{metric, level}));
  }
  return it->second;
}

void CohortNormStats::add(const std::string& metric, LevelId level, Sex sex, NormMoments moments) {
  if (!std::isfinite(moments.mean) || !std::isfinite(moments.sd) || !(moments.sd > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "normalization sd must be finite and > 0 for " +
                                                 column_name(ScoreKey{metric, level}) + " sex " +
                                                 std::string(sex_name(sex)));
  }
  entries_[Key{metric, level, sex}] = moments;
  degenerate_.erase(Key{metric, level, sex});
}

void CohortNormStats::mark_degenerate(const std::string& metric, LevelId level, Sex sex) {
  entries_.erase(Key{metric, level, sex});
  degenerate_.insert(Key{metric, level, sex});
}

const NormMoments* CohortNormStats::find(const std::string& metric, LevelId level, Sex sex) const {
  auto it = entries_.find(Key{metric, level, sex});
  return it == entries_.end() ? nullptr : &it->second;
}

bool CohortNormStats::is_degenerate(const std::string& metric, LevelId level, Sex sex) const {
  return degenerate_.count(Key{metric, level, sex}) != 0;
}

// ---- catalog -----------------------------------------------------------------

const std::vector<std::string>& direct_metric_names() {
  static const std::vector<std::string> names = {kSMA, kSMD, kSFA, kVFA, kMFA, kBODY};
  return names;
}

const std::vector<std::string>& within_body_metric_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = {kSMFA, kSMFD, kMFR};
    for (const auto& r : ratio_defs()) v.push_back(r.name);
    return v;
  }();
  return names;
}

const std::vector<std::string>& normalized_metric_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = {kSMA, kSMD, kSFA, kVFA, kMFA};
    for (const auto& m : within_body_metric_names()) v.push_back(m);
    v.insert(v.end(), {kSMI, kFMI, kSOI, kVFABMI});
    return v;
  }();
  return names;
}

const std::vector<ScoreKey>& raw_catalog_keys() {
  static const std::vector<ScoreKey> keys = build_raw_keys();
  return keys;
}

const std::vector<ScoreKey>& catalog_keys() {
  static const std::vector<ScoreKey> keys = [] {
    std::vector<ScoreKey> all = raw_catalog_keys();
    for (const auto& k : raw_catalog_keys()) {
      if (is_normalized_metric(k.metric)) all.push_back({kNormPrefix + k.metric, k.level});
    }
    std::sort(all.begin(), all.end());
    return all;
  }();
  return keys;
}

std::string_view unit_of(std::string_view metric, LevelId level) {
  const bool vol = level == LevelId::kVol3D;
  if (metric.starts_with(kNormPrefix)) return "z";
  if (metric == kSMA || metric == kSFA || metric == kVFA || metric == kMFA || metric == kBODY ||
      metric == kSMFA) {
    return vol ? "mm3" : "mm2";
  }
  if (metric == kSMD || metric == kSMFD) return "HU";
  if (metric == kSMI || metric == kFMI) return vol ? "cm3/m2" : "cm2/m2";
  if (metric == kSOI) return vol ? "(cm3/m2)/mm3" : "(cm2/m2)/mm2";
  if (metric == kVFABMI) return vol ? "mm3/(kg/m2)" : "mm2/(kg/m2)";
  return "1";
}

// ---- operations --------------------------------------------------------------

int slice_for_level(const VertebralMap& vmap, LevelId level) {
  Vertebra v;
  if (is_vertebra_level(level, &v)) return require_vertebra(vmap, v);
  Vertebra a, b;
  switch (level) {
    case LevelId::kT12_L1: a = Vertebra::kT12; b = Vertebra::kL1; break;
    case LevelId::kL1_L2: a = Vertebra::kL1; b = Vertebra::kL2; break;
    case LevelId::kL2_L3: a = Vertebra::kL2; b = Vertebra::kL3; break;
    case LevelId::kL3_L4: a = Vertebra::kL3; b = Vertebra::kL4; break;
    default:
      throw Error(ErrorCode::kInvalidArgument, "VOL3D has no single slice");
  }
  const int za = require_vertebra(vmap, a);
  const int zb = require_vertebra(vmap, b);
  // Non-negative slices: integer division is the floor, i.e. ties go low.
  return (za + zb) / 2;
}

SliceRange volume_range(const VertebralMap& vmap) {
  const int top = require_vertebra(vmap, Vertebra::kT12);
  const int bottom = require_vertebra(vmap, Vertebra::kL4);
  if (top < 0 || bottom < 0) throw Error(ErrorCode::kOutOfRange, "negative vertebral slice");
  return SliceRange{static_cast<std::size_t>(std::min(top, bottom)),
                    static_cast<std::size_t>(std::max(top, bottom))};
}

double tissue_area_2d(const LabeledVolume& vol, std::size_t z, TissueLabel tissue) {
  check_slice(vol, z);
  return static_cast<double>(count_label(vol, z, z, tissue)) * vol.spacing().pixel_area();
}

double tissue_volume_3d(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi,
                        TissueLabel tissue) {
  check_range(vol, z_lo, z_hi);
  return static_cast<double>(count_label(vol, z_lo, z_hi, tissue)) * vol.spacing().voxel_volume();
}

Score mean_hu(const LabeledVolume& vol, SliceRange range, std::span<const TissueLabel> tissues) {
  check_range(vol, range.lo, range.hi);
  std::int64_t sum = 0;
  std::size_t count = 0;
  for (std::size_t z = range.lo; z <= range.hi; ++z) {
    auto hu = vol.hu_slice(z);
    auto labels = vol.label_slice(z);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (std::find(tissues.begin(), tissues.end(), labels[i]) != tissues.end()) {
        sum += hu[i];
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return static_cast<double>(sum) / static_cast<double>(count);
}

double body_area(const LabeledVolume& vol, std::size_t z) {
  check_slice(vol, z);
  return static_cast<double>(count_body(vol, z, z)) * vol.spacing().pixel_area();
}

double body_volume_3d(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi) {
  check_range(vol, z_lo, z_hi);
  return static_cast<double>(count_body(vol, z_lo, z_hi)) * vol.spacing().voxel_volume();
}

ScoreVector direct_scores(const LabeledVolume& vol, const VertebralMap& vmap, LevelId level) {
  ScoreVector out;
  if (level == LevelId::kVol3D) {
    const SliceRange r = volume_range(vmap);
    out.insert(kSMA, level, tissue_volume_3d(vol, r.lo, r.hi, TissueLabel::kSkeletalMuscle));
    out.insert(kSFA, level, tissue_volume_3d(vol, r.lo, r.hi, TissueLabel::kSubcutaneousFat));
    out.insert(kVFA, level, tissue_volume_3d(vol, r.lo, r.hi, TissueLabel::kVisceralFat));
    out.insert(kMFA, level, tissue_volume_3d(vol, r.lo, r.hi, TissueLabel::kIntermuscularFat));
    out.insert(kBODY, level, body_volume_3d(vol, r.lo, r.hi));
    out.insert(kSMD, level, mean_hu(vol, r, kMuscleOnly));
    out.insert(kSMFD, level, mean_hu(vol, r, kMuscleAndImat));
    return out;
  }
  const int slice = slice_for_level(vmap, level);
  if (slice < 0) throw Error(ErrorCode::kOutOfRange, "negative slice " + std::to_string(slice));
  const auto z = static_cast<std::size_t>(slice);
  out.insert(kSMA, level, tissue_area_2d(vol, z, TissueLabel::kSkeletalMuscle));
  out.insert(kSFA, level, tissue_area_2d(vol, z, TissueLabel::kSubcutaneousFat));
  out.insert(kVFA, level, tissue_area_2d(vol, z, TissueLabel::kVisceralFat));
  out.insert(kMFA, level, tissue_area_2d(vol, z, TissueLabel::kIntermuscularFat));
  out.insert(kBODY, level, body_area(vol, z));
  out.insert(kSMD, level, mean_hu(vol, SliceRange{z, z}, kMuscleOnly));
  out.insert(kSMFD, level, mean_hu(vol, SliceRange{z, z}, kMuscleAndImat));
  return out;
}

ScoreVector derived_scores(const ScoreVector& direct, LevelId level) {
  auto get = [&](const std::string& m) {
    if (!direct.contains(m, level)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "derived scores need " + column_name(ScoreKey{m, level}));
    }
    return direct.at(m, level);
  };
  const Score sma = get(kSMA);
  const Score sfa = get(kSFA);
  const Score vfa = get(kVFA);
  const Score mfa = get(kMFA);

  ScoreVector out;
  out.insert(kSMFA, level, (sma && mfa) ? Score(*sma + *mfa) : std::nullopt);
  out.insert(kMFR, level, ratio(sma, (vfa && sfa) ? Score(*vfa + *sfa) : std::nullopt));
  for (const auto& r : ratio_defs()) out.insert(r.name, level, ratio(get(r.numerator), get(r.denominator)));
  return out;
}

ScoreVector demographic_scores(const ScoreVector& raw, const Demographics& demo) {
  ScoreVector out;
  auto height_sq = [&]() {
    if (!demo.height_m) throw Error(ErrorCode::kMissingDemographic, "height is required for SMI/FMI");
    return *demo.height_m * *demo.height_m;
  };
  for (LevelId level : {LevelId::kL3, LevelId::kVol3D}) {
    if (!raw.contains(kSMA, level)) continue;
    const auto to_cm = [level](double v) {
      return level == LevelId::kVol3D ? mm3_to_cm3(v) : mm2_to_cm2(v);
    };
    const double h2 = height_sq();
    const Score sma = raw.at(kSMA, level);
    const Score sfa = raw.at(kSFA, level);
    const Score smi = sma ? Score(to_cm(*sma) / h2) : std::nullopt;
    out.insert(kSMI, level, smi);
    out.insert(kFMI, level, sfa ? Score(to_cm(*sfa) / h2) : std::nullopt);
    out.insert(kSOI, level, ratio(smi, raw.at(kVFA, level)));
  }
  for (LevelId level : kAllLevels) {
    if (!raw.contains(kVFA, level)) continue;
    if (!demo.bmi) throw Error(ErrorCode::kMissingDemographic, "bmi is required for VFA/BMI");
    out.insert(kVFABMI, level, ratio(raw.at(kVFA, level), *demo.bmi));
  }
  return out;
}

ScoreVector sex_normalize(const ScoreVector& raw, const Demographics& demo,
                          const CohortNormStats& stats) {
  ScoreVector out;
  for (const auto& [key, value] : raw) {
    if (!is_normalized_metric(key.metric)) continue;
    Score z;
    if (const NormMoments* m = stats.find(key.metric, key.level, demo.sex)) {
      if (value) z = (*value - m->mean) / m->sd;
    } else if (!stats.is_degenerate(key.metric, key.level, demo.sex)) {
      throw Error(ErrorCode::kMissingStats, "no normalization stats for " + column_name(key) +
                                                " sex " + std::string(sex_name(demo.sex)));
    }
    out.insert(kNormPrefix + key.metric, key.level, z);
  }
  return out;
}

ScoreVector compute_raw_catalog(const LabeledVolume& vol, const VertebralMap& vmap,
                                const Demographics& demo) {
  ScoreVector raw;
  for (LevelId level : kAllLevels) {
    ScoreVector direct = with_context("direct scores", level, [&] { return direct_scores(vol, vmap, level); });
    ScoreVector derived = with_context("within-body ratios", level, [&] { return derived_scores(direct, level); });
    raw.merge(direct);
    raw.merge(derived);
  }
  raw.merge(with_context("demographic scores", LevelId::kL3, [&] { return demographic_scores(raw, demo); }));
  return raw;
}

ScoreVector compute_catalog(const LabeledVolume& vol, const VertebralMap& vmap,
                            const Demographics& demo, const CohortNormStats& stats) {
  ScoreVector catalog = compute_raw_catalog(vol, vmap, demo);
  ScoreVector normalized = sex_normalize(catalog, demo, stats);
  catalog.merge(normalized);
  return catalog;
}

CohortNormStats fit_norm_stats(std::span<const ReferenceSubject> cohort, std::string provenance) {
  CohortNormStats stats(std::move(provenance));
  std::map<CohortNormStats::Key, std::vector<double>> values;
  for (const auto& subject : cohort) {
    for (const auto& [key, value] : *subject.raw) {
      if (!is_normalized_metric(key.metric)) continue;
      auto& bucket = values[{key.metric, key.level, subject.sex}];
      if (value) bucket.push_back(*value);
    }
  }
  for (const auto& [key, v] : values) {
    const auto& [metric, level, sex] = key;
    if (v.size() < 2) {
      stats.mark_degenerate(metric, level, sex);
      continue;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    if (!(sd > 0.0)) {
      stats.mark_degenerate(metric, level, sex);
      continue;
    }
    stats.add(metric, level, sex, NormMoments{mean, sd, v.size()});
  }
  return stats;
}

}  // namespace morphorisk::bodycomp
