#pragma once

// File formats and cohort ingestion: the MVOL volume container, vertebral
// map files, the cohort table with one-year outcome derivation, score and
// normalization-stat tables, and deterministic report tables.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "morphorisk/bodycomp.hpp"

namespace morphorisk::io {

namespace fs = std::filesystem;

// ---- MVOL ------------------------------------------------------------------

inline constexpr std::array<char, 6> kMvolMagic = {'M', 'V', 'O', 'L', '1', '\0'};
inline constexpr std::uint16_t kMvolVersion = 1;
inline constexpr std::size_t kMvolHeaderSize = 6 + 2 + 3 * 4 + 3 * 8 + 1 + 3;

std::vector<std::uint8_t> encode_mvol(const bodycomp::LabeledVolume& vol);
bodycomp::LabeledVolume decode_mvol(std::span<const std::uint8_t> bytes);

void write_mvol(const fs::path& path, const bodycomp::LabeledVolume& vol);
/// Throws BadMagic, TruncatedFile, IllegalLabel, NonPositiveSpacing, IoError.
bodycomp::LabeledVolume read_mvol(const fs::path& path);

// ---- vertebral map -----------------------------------------------------------

std::string format_vertebral_map(const bodycomp::VertebralMap& vmap);
bodycomp::VertebralMap parse_vertebral_map(std::string_view text, bool z_increases_toward_head);
void write_vertebral_map(const fs::path& path, const bodycomp::VertebralMap& vmap);
bodycomp::VertebralMap read_vertebral_map(const fs::path& path, bool z_increases_toward_head);

// ---- cohort table -------------------------------------------------------------

inline constexpr std::array<std::string_view, 7> kBinaryOutcomes = {
    "mortality",  "any_complication", "serious_complication",  "unplanned_readmission",
    "transfusion", "severe_infection", "pulmonary_complication"};

enum class VitalStatus { kAlive, kDied };
enum class FunctionalStatus { kIndependent, kNonIndependent };

struct PatientRecord {
  std::string patient_id;
  /// "development" or "validation".
  std::string cohort = "development";
  bodycomp::Sex sex = bodycomp::Sex::kMale;
  double age = 0.0;
  std::optional<double> height_m;
  std::optional<double> bmi;
  std::string age_cat;
  std::string bmi_cat;
  bool smoker = false;
  FunctionalStatus functional_status = FunctionalStatus::kIndependent;
  int asa_class = 1;
  bool emergency = false;
  /// Indexed like kBinaryOutcomes; empty = not recorded.
  std::array<std::optional<int>, 7> outcomes{};
  double last_followup_days = 0.0;
  VitalStatus vital_status = VitalStatus::kAlive;
  std::optional<double> death_day;
  std::optional<double> nsqip_mortality_risk;
  std::string mask_path;

  bodycomp::Demographics demographics() const { return {sex, height_m, bmi}; }
  bool operator==(const PatientRecord&) const = default;
};

enum class OneYearStatus { kDeceased, kAlive, kUnknown };
std::string_view one_year_status_name(OneYearStatus s);

struct DerivedOutcome {
  OneYearStatus one_year_status = OneYearStatus::kUnknown;
  double survival_time_days = 0.0;
  int event = 0;
};

inline constexpr double kOneYearHorizon = 365.0;

/// Deceased: died on or before the horizon. Alive: followed past the horizon
/// (including deaths after it). Unknown: alive with follow-up ending on or
/// before the horizon. Cox time is min(death or follow-up day, horizon).
DerivedOutcome derive_outcome(VitalStatus vital, std::optional<double> death_day, double last_followup_days,
                              double horizon = kOneYearHorizon);

/// "<65", "65-75" (65 and 75 inclusive), "75-85", ">85".
std::string age_category(double age);
/// "<18.5", "18.5-24.99", "25-29.99", ">=30".
std::string bmi_category(double bmi);
std::string_view functional_status_name(FunctionalStatus f);
std::string_view vital_status_name(VitalStatus v);

const std::vector<std::string>& cohort_columns();

struct CohortTable {
  std::vector<PatientRecord> records;
  std::vector<DerivedOutcome> outcomes;
};

/// Parses and validates; throws SchemaMismatch, BinMismatch, RangeViolation
/// with 1-based data row numbers.
CohortTable parse_cohort(std::string_view text);
CohortTable read_cohort(const fs::path& path);
std::string format_cohort(std::span<const PatientRecord> records);
void write_cohort(const fs::path& path, std::span<const PatientRecord> records);

// ---- score and stats tables -----------------------------------------------------

struct ScoreTable {
  std::vector<std::string> patient_ids;
  std::vector<bodycomp::ScoreKey> keys;
  /// rows[i][j] is patient i, key j.
  std::vector<std::vector<bodycomp::Score>> rows;

  std::optional<std::size_t> key_index(const bodycomp::ScoreKey& key) const;
};

ScoreTable make_score_table(std::span<const std::string> ids, std::span<const bodycomp::ScoreVector> scores);
std::string format_score_table(const ScoreTable& table);
ScoreTable parse_score_table(std::string_view text);
void write_score_table(const fs::path& path, const ScoreTable& table);
ScoreTable read_score_table(const fs::path& path);

std::string format_norm_stats(const bodycomp::CohortNormStats& stats);
bodycomp::CohortNormStats parse_norm_stats(std::string_view text);

// ---- CSV and report tables ------------------------------------------------------

/// RFC 4180 style: fields with comma, quote or newline are quoted.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

/// Shortest text that parses back to the same double.
std::string format_exact(double v);
/// printf "%.6g"; non-finite values print as "inf", "-inf", "nan".
std::string format_g6(double v);

using Cell = std::variant<std::monostate, std::string, double, long long>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

/// Fixed column order, %.6g floats, LF endings.
std::string format_table(const Table& table);
/// Throws IoError.
void write_text(const fs::path& path, std::string_view text);
void write_table(const fs::path& path, const Table& table);
std::string read_text(const fs::path& path);

// ---- flat key=value files -------------------------------------------------------

/// Lines "key = value"; '#' starts a comment line; blank lines ignored.
/// Malformed lines and duplicate keys throw ConfigInvalid.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);
std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& entries);

/// Typed access to a key=value map. Every key read is marked as used;
/// finish() rejects the rest as unknown.
class KeyValueReader {
 public:
  explicit KeyValueReader(std::vector<std::pair<std::string, std::string>> entries);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, std::string fallback);
  double get_double(const std::string& key, double fallback, double lo, double hi);
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback, std::uint64_t lo, std::uint64_t hi);
  bool get_bool(const std::string& key, bool fallback);
  /// Comma-separated list; empty items removed.
  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback);
  /// Keys with the given prefix, prefix stripped, in file order.
  std::vector<std::pair<std::string, std::string>> take_prefixed(const std::string& prefix);
  void finish() const;

 private:
  const std::string* lookup(const std::string& key);
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<bool> used_;
};

}  // namespace morphorisk::io
