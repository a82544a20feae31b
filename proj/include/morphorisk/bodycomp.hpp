#pragma once

// Body-composition score extraction from labeled CT volumes.
//
// Areas are reported in mm^2, volumes in mm^3, densities in HU and the
// height-normalized indices in cm^2/m^2 (cm^3/m^2 for the 3D forms). All
// unit conversions go through mm2_to_cm2 / mm3_to_cm3.

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace morphorisk::bodycomp {

enum class TissueLabel : std::uint8_t {
  kBackground = 0,
  kSkeletalMuscle = 1,
  kSubcutaneousFat = 2,
  kVisceralFat = 3,
  kIntermuscularFat = 4,
};

constexpr bool is_valid_label_code(std::uint8_t code) noexcept { return code <= 4; }

constexpr std::int16_t kMinHu = -1024;
constexpr std::int16_t kMaxHu = 3071;
/// BODY counts voxels strictly above this value.
constexpr std::int16_t kBodyHuThreshold = -1000;

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t voxel_count() const noexcept { return nx * ny * nz; }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double pixel_area() const noexcept { return sx * sy; }
  double voxel_volume() const noexcept { return sx * sy * sz; }
  bool operator==(const Spacing&) const = default;
};

/// HU grid plus tissue label grid, x fastest and z slowest.
class LabeledVolume {
 public:
  LabeledVolume(Dims dims, Spacing spacing, std::vector<std::int16_t> hu,
                std::vector<TissueLabel> labels, bool z_increases_toward_head = false);

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  bool z_increases_toward_head() const noexcept { return z_increases_toward_head_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims_.nx * (y + dims_.ny * z);
  }
  std::int16_t hu(std::size_t x, std::size_t y, std::size_t z) const { return hu_[index(x, y, z)]; }
  TissueLabel label(std::size_t x, std::size_t y, std::size_t z) const {
    return labels_[index(x, y, z)];
  }

  std::span<const std::int16_t> hu_data() const noexcept { return hu_; }
  std::span<const TissueLabel> label_data() const noexcept { return labels_; }
  /// Voxels of one axial slice.
  std::span<const std::int16_t> hu_slice(std::size_t z) const;
  std::span<const TissueLabel> label_slice(std::size_t z) const;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::int16_t> hu_;
  std::vector<TissueLabel> labels_;
  bool z_increases_toward_head_;
};

enum class Vertebra : std::uint8_t { kT12 = 0, kL1, kL2, kL3, kL4 };
inline constexpr std::array<Vertebra, 5> kAllVertebrae = {Vertebra::kT12, Vertebra::kL1, Vertebra::kL2,
                                                          Vertebra::kL3, Vertebra::kL4};

std::string_view vertebra_name(Vertebra v);
std::optional<Vertebra> parse_vertebra(std::string_view name);

/// Measurement planes, in anatomical order, followed by the T12..L4 volume.
enum class LevelId : std::uint8_t {
  kT12 = 0,
  kT12_L1,
  kL1,
  kL1_L2,
  kL2,
  kL2_L3,
  kL3,
  kL3_L4,
  kL4,
  kVol3D,
};

inline constexpr std::array<LevelId, 9> kPlanarLevels = {
    LevelId::kT12, LevelId::kT12_L1, LevelId::kL1,   LevelId::kL1_L2, LevelId::kL2,
    LevelId::kL2_L3, LevelId::kL3,   LevelId::kL3_L4, LevelId::kL4};
inline constexpr std::array<LevelId, 10> kAllLevels = {
    LevelId::kT12, LevelId::kT12_L1, LevelId::kL1,   LevelId::kL1_L2, LevelId::kL2,
    LevelId::kL2_L3, LevelId::kL3,   LevelId::kL3_L4, LevelId::kL4,   LevelId::kVol3D};

std::string_view level_name(LevelId level);
/// Accepts "L3-L4" and the "L3_L4" spelling; "VOL3D" and "3D" for the volume.
std::optional<LevelId> parse_level(std::string_view name);

/// Vertebral body centroid slices. Entries may be absent; slice_for_level
/// reports MissingVertebra when it needs one.
struct VertebralMap {
  std::array<std::optional<int>, 5> z{};
  bool z_increases_toward_head = false;

  void set(Vertebra v, int slice) { z[static_cast<std::size_t>(v)] = slice; }
  std::optional<int> get(Vertebra v) const { return z[static_cast<std::size_t>(v)]; }

  /// Completeness, range [0, nz) and strict anatomical monotonicity.
  void validate(std::size_t nz) const;
};

enum class Sex : std::uint8_t { kMale, kFemale };
std::string_view sex_name(Sex sex);
std::optional<Sex> parse_sex(std::string_view s);

struct Demographics {
  Sex sex = Sex::kMale;
  std::optional<double> height_m;
  std::optional<double> bmi;

  /// Range checks; a violation is an ingestion error.
  void validate() const;
};

using Score = std::optional<double>;

struct ScoreKey {
  std::string metric;
  LevelId level;

  auto operator<=>(const ScoreKey&) const = default;
};

/// Column label used in score tables, e.g. "N_VFA/SFA@L1".
std::string column_name(const ScoreKey& key);
std::optional<ScoreKey> parse_column_name(std::string_view column);

/// Ordered (metric, level) -> value map; Missing is an empty optional.
class ScoreVector {
 public:
  using Map = std::map<ScoreKey, Score>;

  /// Throws InvalidArgument on a duplicate key.
  void insert(const std::string& metric, LevelId level, Score value);
  void merge(const ScoreVector& other);

  bool contains(const std::string& metric, LevelId level) const;
  /// Throws OutOfRange when the key is absent; a present-but-Missing entry
  /// returns an empty optional.
  Score at(const std::string& metric, LevelId level) const;

  std::size_t size() const noexcept { return values_.size(); }
  Map::const_iterator begin() const { return values_.begin(); }
  Map::const_iterator end() const { return values_.end(); }
  bool operator==(const ScoreVector&) const = default;

 private:
  Map values_;
};

struct NormMoments {
  double mean = 0.0;
  double sd = 1.0;
  std::size_t n = 0;
};

/// Per-(metric, level, sex) moments frozen from a reference cohort.
class CohortNormStats {
 public:
  using Key = std::tuple<std::string, LevelId, Sex>;

  explicit CohortNormStats(std::string provenance = {}) : provenance_(std::move(provenance)) {}

  /// Rejects sd <= 0 (or non-finite moments) with InvalidArgument.
  void add(const std::string& metric, LevelId level, Sex sex, NormMoments moments);
  /// Marks a key whose reference distribution was degenerate (sd = 0 or
  /// fewer than two values); normalizing it yields Missing instead of
  /// MissingStats.
  void mark_degenerate(const std::string& metric, LevelId level, Sex sex);

  const NormMoments* find(const std::string& metric, LevelId level, Sex sex) const;
  bool is_degenerate(const std::string& metric, LevelId level, Sex sex) const;

  const std::string& provenance() const noexcept { return provenance_; }
  const std::map<Key, NormMoments>& entries() const noexcept { return entries_; }
  const std::set<Key>& degenerate() const noexcept { return degenerate_; }

 private:
  std::string provenance_;
  std::map<Key, NormMoments> entries_;
  std::set<Key> degenerate_;
};

// ---- metric catalog --------------------------------------------------------

/// Voxel-level measurements taken at every level.
const std::vector<std::string>& direct_metric_names();
/// Within-body ratio metrics computed from the direct ones.
const std::vector<std::string>& within_body_metric_names();
/// Raw metrics that receive a sex-normalized "N_" variant.
const std::vector<std::string>& normalized_metric_names();
/// Every key compute_catalog emits, in output order. Its size is the fixed
/// catalog width K.
const std::vector<ScoreKey>& catalog_keys();
/// Keys of the raw (un-normalized) part of the catalog.
const std::vector<ScoreKey>& raw_catalog_keys();
std::string_view unit_of(std::string_view metric, LevelId level);

constexpr double mm2_to_cm2(double mm2) noexcept { return mm2 / 100.0; }
constexpr double mm3_to_cm3(double mm3) noexcept { return mm3 / 1000.0; }

// ---- operations ------------------------------------------------------------

/// Slice index of a planar level. Inter-levels take the midpoint of the two
/// centroid slices, ties toward the lower index.
int slice_for_level(const VertebralMap& vmap, LevelId level);

/// Inclusive slice range [lo, hi] spanning the T12 and L4 centroids.
struct SliceRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};
SliceRange volume_range(const VertebralMap& vmap);

double tissue_area_2d(const LabeledVolume& vol, std::size_t z, TissueLabel tissue);
double tissue_volume_3d(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi,
                        TissueLabel tissue);
/// Mean HU over voxels in [range.lo, range.hi] whose label is in `tissues`;
/// Missing when no voxel qualifies.
Score mean_hu(const LabeledVolume& vol, SliceRange range, std::span<const TissueLabel> tissues);
/// Voxels with HU > -1000 at slice z, regardless of label.
double body_area(const LabeledVolume& vol, std::size_t z);
double body_volume_3d(const LabeledVolume& vol, std::size_t z_lo, std::size_t z_hi);

/// Voxel-level measurements at one level: SMA, SMD, SFA, VFA, MFA, BODY and
/// SMFD (SMFD is a density over the muscle + IMAT voxels, so it is measured
/// here rather than derived).
ScoreVector direct_scores(const LabeledVolume& vol, const VertebralMap& vmap, LevelId level);
/// SMFA, MFR and the seven within-body ratios at `level`.
ScoreVector derived_scores(const ScoreVector& direct, LevelId level);
/// SMI, FMI, SOI (L3 and 3D) and VFA/BMI (every level present in `raw`).
ScoreVector demographic_scores(const ScoreVector& raw, const Demographics& demo);
/// "N_" z-scores of every normalizable metric present in `raw`.
ScoreVector sex_normalize(const ScoreVector& raw, const Demographics& demo,
                          const CohortNormStats& stats);

/// Direct, within-body and demographic scores at every level.
ScoreVector compute_raw_catalog(const LabeledVolume& vol, const VertebralMap& vmap,
                                const Demographics& demo);
/// Raw catalog plus all sex-normalized variants.
ScoreVector compute_catalog(const LabeledVolume& vol, const VertebralMap& vmap,
                            const Demographics& demo, const CohortNormStats& stats);

struct ReferenceSubject {
  const ScoreVector* raw;
  Sex sex;
};
/// Within-sex mean and sample sd (n - 1) of every normalizable raw metric.
CohortNormStats fit_norm_stats(std::span<const ReferenceSubject> cohort, std::string provenance);

}  // namespace morphorisk::bodycomp
