#include "morphorisk/cohort_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "morphorisk/error.hpp"

namespace morphorisk::io {

using bodycomp::LabeledVolume;
using bodycomp::TissueLabel;

namespace {

// ---- little-endian helpers ----

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_escape(fields[i]);
  }
  return line;
}

[[noreturn]] void row_error(ErrorCode code, std::size_t row, const std::string& what) {
  throw Error(code, "row " + std::to_string(row) + ": " + what);
}

}  // namespace

// ---- MVOL ----------------------------------------------------------------------

std::vector<std::uint8_t> encode_mvol(const LabeledVolume& vol) {
  const auto& d = vol.dims();
  const auto& s = vol.spacing();
  std::vector<std::uint8_t> out;
  out.reserve(kMvolHeaderSize + 3 * d.voxel_count());
  out.insert(out.end(), kMvolMagic.begin(), kMvolMagic.end());
  put_le<std::uint16_t>(out, kMvolVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.nx));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.ny));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.nz));
  put_le<double>(out, s.sx);
  put_le<double>(out, s.sy);
  put_le<double>(out, s.sz);
  out.push_back(vol.z_increases_toward_head() ? 1 : 0);
  out.insert(out.end(), 3, 0);
  for (std::int16_t h : vol.hu_data()) put_le<std::int16_t>(out, h);
  for (TissueLabel l : vol.label_data()) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

LabeledVolume decode_mvol(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMvolMagic.size() ||
      std::memcmp(bytes.data(), kMvolMagic.data(), kMvolMagic.size()) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an MVOL file");
  }
  if (bytes.size() < kMvolHeaderSize) {
    throw Error(ErrorCode::kTruncatedFile, "header needs " + std::to_string(kMvolHeaderSize) + " bytes, got " +
                                               std::to_string(bytes.size()));
  }
  const auto version = get_le<std::uint16_t>(bytes, 6);
  if (version != kMvolVersion) throw Error(ErrorCode::kBadMagic, "unsupported MVOL version " + std::to_string(version));
  bodycomp::Dims dims{get_le<std::uint32_t>(bytes, 8), get_le<std::uint32_t>(bytes, 12), get_le<std::uint32_t>(bytes, 16)};
  bodycomp::Spacing spacing{get_le<double>(bytes, 20), get_le<double>(bytes, 28), get_le<double>(bytes, 36)};
  const bool toward_head = bytes[44] != 0;
  if (!(spacing.sx > 0) || !(spacing.sy > 0) || !(spacing.sz > 0)) {
    throw Error(ErrorCode::kNonPositiveSpacing, "spacing must be > 0");
  }
  const std::size_t n = dims.voxel_count();
  const std::size_t expected = kMvolHeaderSize + 3 * n;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::kTruncatedFile,
                "expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::kTruncatedFile, "expected " + std::to_string(expected) + " bytes, got " +
                                               std::to_string(bytes.size()) + " (trailing data)");
  }
  std::vector<std::int16_t> hu(n);
  for (std::size_t i = 0; i < n; ++i) hu[i] = get_le<std::int16_t>(bytes, kMvolHeaderSize + 2 * i);
  std::vector<TissueLabel> labels(n);
  const std::size_t label_offset = kMvolHeaderSize + 2 * n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t code = bytes[label_offset + i];
    if (!bodycomp::is_valid_label_code(code)) {
      const std::size_t x = i % dims.nx, y = (i / dims.nx) % dims.ny, z = i / (dims.nx * dims.ny);
      throw Error(ErrorCode::kIllegalLabel, "label " + std::to_string(code) + " at voxel (" + std::to_string(x) +
                                                ", " + std::to_string(y) + ", " + std::to_string(z) + ")");
    }
    labels[i] = static_cast<TissueLabel>(code);
  }
  return LabeledVolume(dims, spacing, std::move(hu), std::move(labels), toward_head);
}

void write_mvol(const fs::path& path, const LabeledVolume& vol) {
  const auto bytes = encode_mvol(vol);
  write_text(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

LabeledVolume read_mvol(const fs::path& path) {
  const std::string text = read_text(path);
  return decode_mvol(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- vertebral map ---------------------------------------------------------------

std::string format_vertebral_map(const bodycomp::VertebralMap& vmap) {
  std::string out;
  for (auto v : bodycomp::kAllVertebrae) {
    const auto z = vmap.get(v);
    if (!z) continue;
    out += std::string(bodycomp::vertebra_name(v)) + "," + std::to_string(*z) + "\n";
  }
  return out;
}

bodycomp::VertebralMap parse_vertebral_map(std::string_view text, bool z_increases_toward_head) {
  bodycomp::VertebralMap vmap;
  vmap.z_increases_toward_head = z_increases_toward_head;
  const auto rows = parse_csv(text);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != 2) row_error(ErrorCode::kSchemaMismatch, i + 1, "expected LEVEL,z_index");
    const auto v = bodycomp::parse_vertebra(r[0]);
    const auto z = parse_int(r[1]);
    if (!v) row_error(ErrorCode::kSchemaMismatch, i + 1, "unknown vertebra '" + r[0] + "'");
    if (!z) row_error(ErrorCode::kSchemaMismatch, i + 1, "bad slice index '" + r[1] + "'");
    if (vmap.get(*v)) row_error(ErrorCode::kSchemaMismatch, i + 1, "duplicate vertebra '" + r[0] + "'");
    vmap.set(*v, static_cast<int>(*z));
  }
  return vmap;
}

void write_vertebral_map(const fs::path& path, const bodycomp::VertebralMap& vmap) {
  write_text(path, format_vertebral_map(vmap));
}

bodycomp::VertebralMap read_vertebral_map(const fs::path& path, bool z_increases_toward_head) {
  return parse_vertebral_map(read_text(path), z_increases_toward_head);
}

// ---- outcomes and bins -------------------------------------------------------------

std::string_view one_year_status_name(OneYearStatus s) {
  switch (s) {
    case OneYearStatus::kDeceased: return "deceased";
    case OneYearStatus::kAlive: return "alive";
    case OneYearStatus::kUnknown: return "unknown";
  }
  return "?";
}

DerivedOutcome derive_outcome(VitalStatus vital, std::optional<double> death_day, double last_followup_days,
                              double horizon) {
  DerivedOutcome out;
  if (vital == VitalStatus::kDied) {
    if (!death_day) throw Error(ErrorCode::kRangeViolation, "died without a death day");
    if (*death_day <= horizon) {
      out.one_year_status = OneYearStatus::kDeceased;
      out.survival_time_days = *death_day;
      out.event = 1;
    } else {
      out.one_year_status = OneYearStatus::kAlive;
      out.survival_time_days = horizon;
    }
    return out;
  }
  out.one_year_status = last_followup_days > horizon ? OneYearStatus::kAlive : OneYearStatus::kUnknown;
  out.survival_time_days = std::min(last_followup_days, horizon);
  return out;
}

std::string age_category(double age) {
  if (age < 65) return "<65";
  if (age <= 75) return "65-75";
  if (age <= 85) return "75-85";
  return ">85";
}

std::string bmi_category(double bmi) {
  if (bmi < 18.5) return "<18.5";
  if (bmi < 25) return "18.5-24.99";
  if (bmi < 30) return "25-29.99";
  return ">=30";
}

std::string_view functional_status_name(FunctionalStatus f) {
  return f == FunctionalStatus::kIndependent ? "independent" : "non-independent";
}

std::string_view vital_status_name(VitalStatus v) { return v == VitalStatus::kAlive ? "alive" : "died"; }

// ---- cohort table -----------------------------------------------------------------

const std::vector<std::string>& cohort_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"patient_id", "cohort", "sex", "age", "height_m", "bmi", "age_cat", "bmi_cat",
                                  "smoker", "functional_status", "asa_class", "emergency"};
    for (auto o : kBinaryOutcomes) c.emplace_back(o);
    for (const char* tail : {"last_followup_days", "vital_status", "death_day", "nsqip_mortality_risk", "mask_path"})
      c.emplace_back(tail);
    return c;
  }();
  return cols;
}

CohortTable parse_cohort(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorCode::kSchemaMismatch, "missing header");
  const auto& cols = cohort_columns();
  if (rows[0] != cols) {
    std::string detail;
    for (const auto& c : cols)
      if (std::find(rows[0].begin(), rows[0].end(), c) == rows[0].end()) detail += " missing '" + c + "';";
    for (const auto& c : rows[0])
      if (std::find(cols.begin(), cols.end(), c) == cols.end()) detail += " unexpected '" + c + "';";
    if (detail.empty()) detail = " columns out of order";
    throw Error(ErrorCode::kSchemaMismatch, "cohort header:" + detail);
  }
  CohortTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != cols.size()) {
      row_error(ErrorCode::kSchemaMismatch, r, "has " + std::to_string(f.size()) + " fields, expected " +
                                                   std::to_string(cols.size()));
    }
    auto field = [&](std::string_view name) -> const std::string& {
      return f[static_cast<std::size_t>(std::find(cols.begin(), cols.end(), name) - cols.begin())];
    };
    auto number = [&](std::string_view name, bool required) -> std::optional<double> {
      const auto& s = field(name);
      if (s.empty()) {
        if (required) row_error(ErrorCode::kRangeViolation, r, std::string(name) + " is required");
        return std::nullopt;
      }
      const auto v = parse_double(s);
      if (!v || !std::isfinite(*v)) row_error(ErrorCode::kRangeViolation, r, std::string(name) + " '" + s + "' is not a number");
      return v;
    };
    auto flag = [&](std::string_view name) {
      const auto& s = field(name);
      if (s != "0" && s != "1") row_error(ErrorCode::kRangeViolation, r, std::string(name) + " must be 0 or 1");
      return s == "1";
    };

    PatientRecord p;
    p.patient_id = field("patient_id");
    if (p.patient_id.empty()) row_error(ErrorCode::kRangeViolation, r, "empty patient_id");
    p.cohort = field("cohort");
    if (p.cohort != "development" && p.cohort != "validation") {
      row_error(ErrorCode::kRangeViolation, r, "cohort must be development or validation");
    }
    const auto sex = bodycomp::parse_sex(field("sex"));
    if (!sex) row_error(ErrorCode::kRangeViolation, r, "sex must be M or F");
    p.sex = *sex;
    p.age = *number("age", true);
    if (p.age < 0 || p.age > 130) row_error(ErrorCode::kRangeViolation, r, "age outside [0, 130]");
    p.height_m = number("height_m", false);
    p.bmi = number("bmi", false);
    try {
      p.demographics().validate();
    } catch (const Error& e) {
      row_error(e.code(), r, e.what());
    }
    p.age_cat = field("age_cat");
    if (p.age_cat != age_category(p.age)) {
      row_error(ErrorCode::kBinMismatch, r, "age_cat '" + p.age_cat + "' but age " + field("age") + " is '" +
                                                 age_category(p.age) + "'");
    }
    p.bmi_cat = field("bmi_cat");
    const std::string expected_bmi = p.bmi ? bmi_category(*p.bmi) : "";
    if (p.bmi_cat != expected_bmi) {
      row_error(ErrorCode::kBinMismatch, r, "bmi_cat '" + p.bmi_cat + "' but bmi '" + field("bmi") + "' is '" +
                                                 expected_bmi + "'");
    }
    p.smoker = flag("smoker");
    const auto& fs_text = field("functional_status");
    if (fs_text == "independent") p.functional_status = FunctionalStatus::kIndependent;
    else if (fs_text == "non-independent") p.functional_status = FunctionalStatus::kNonIndependent;
    else row_error(ErrorCode::kRangeViolation, r, "functional_status '" + fs_text + "'");
    const auto asa = parse_int(field("asa_class"));
    if (!asa || *asa < 1 || *asa > 5) row_error(ErrorCode::kRangeViolation, r, "asa_class must be 1..5");
    p.asa_class = static_cast<int>(*asa);
    p.emergency = flag("emergency");
    for (std::size_t k = 0; k < kBinaryOutcomes.size(); ++k) {
      const auto& s = field(kBinaryOutcomes[k]);
      if (s.empty()) continue;
      if (s != "0" && s != "1") row_error(ErrorCode::kRangeViolation, r, std::string(kBinaryOutcomes[k]) + " must be 0, 1 or empty");
      p.outcomes[k] = s == "1";
    }
    p.last_followup_days = *number("last_followup_days", true);
    if (!(p.last_followup_days > 0)) row_error(ErrorCode::kRangeViolation, r, "last_followup_days must be > 0");
    const auto& vs = field("vital_status");
    if (vs == "alive") p.vital_status = VitalStatus::kAlive;
    else if (vs == "died") p.vital_status = VitalStatus::kDied;
    else row_error(ErrorCode::kRangeViolation, r, "vital_status '" + vs + "'");
    p.death_day = number("death_day", false);
    if (p.vital_status == VitalStatus::kDied) {
      if (!p.death_day) row_error(ErrorCode::kRangeViolation, r, "died without death_day");
      if (!(*p.death_day > 0)) row_error(ErrorCode::kRangeViolation, r, "death_day must be > 0");
      if (*p.death_day > p.last_followup_days) row_error(ErrorCode::kRangeViolation, r, "death_day after last_followup_days");
    } else if (p.death_day) {
      row_error(ErrorCode::kRangeViolation, r, "alive with a death_day");
    }
    p.nsqip_mortality_risk = number("nsqip_mortality_risk", false);
    if (p.nsqip_mortality_risk && (*p.nsqip_mortality_risk < 0 || *p.nsqip_mortality_risk > 1)) {
      row_error(ErrorCode::kRangeViolation, r, "nsqip_mortality_risk outside [0, 1]");
    }
    p.mask_path = field("mask_path");
    table.outcomes.push_back(derive_outcome(p.vital_status, p.death_day, p.last_followup_days));
    table.records.push_back(std::move(p));
  }
  return table;
}

CohortTable read_cohort(const fs::path& path) { return parse_cohort(read_text(path)); }

std::string format_cohort(std::span<const PatientRecord> records) {
  auto opt = [](const std::optional<double>& v) { return v ? format_exact(*v) : std::string(); };
  std::string out = join_csv(cohort_columns()) + "\n";
  for (const auto& p : records) {
    std::vector<std::string> f = {p.patient_id,
                                  p.cohort,
                                  std::string(bodycomp::sex_name(p.sex)),
                                  format_exact(p.age),
                                  opt(p.height_m),
                                  opt(p.bmi),
                                  p.age_cat,
                                  p.bmi_cat,
                                  p.smoker ? "1" : "0",
                                  std::string(functional_status_name(p.functional_status)),
                                  std::to_string(p.asa_class),
                                  p.emergency ? "1" : "0"};
    for (const auto& o : p.outcomes) f.push_back(o ? std::to_string(*o) : "");
    f.push_back(format_exact(p.last_followup_days));
    f.emplace_back(vital_status_name(p.vital_status));
    f.push_back(opt(p.death_day));
    f.push_back(opt(p.nsqip_mortality_risk));
    f.push_back(p.mask_path);
    out += join_csv(f) + "\n";
  }
  return out;
}

void write_cohort(const fs::path& path, std::span<const PatientRecord> records) {
  write_text(path, format_cohort(records));
}

// ---- score tables -----------------------------------------------------------------

std::optional<std::size_t> ScoreTable::key_index(const bodycomp::ScoreKey& key) const {
  auto it = std::find(keys.begin(), keys.end(), key);
  if (it == keys.end()) return std::nullopt;
  return static_cast<std::size_t>(it - keys.begin());
}

ScoreTable make_score_table(std::span<const std::string> ids, std::span<const bodycomp::ScoreVector> scores) {
  if (ids.size() != scores.size()) throw Error(ErrorCode::kInvalidArgument, "ids and scores differ in length");
  ScoreTable t;
  t.patient_ids.assign(ids.begin(), ids.end());
  t.keys = bodycomp::catalog_keys();
  for (const auto& sv : scores) {
    std::vector<bodycomp::Score> row;
    row.reserve(t.keys.size());
    for (const auto& k : t.keys) row.push_back(sv.contains(k.metric, k.level) ? sv.at(k.metric, k.level) : std::nullopt);
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string format_score_table(const ScoreTable& table) {
  std::vector<std::string> header{"patient_id"};
  for (const auto& k : table.keys) header.push_back(bodycomp::column_name(k));
  std::string out = join_csv(header) + "\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out += csv_escape(table.patient_ids[i]);
    for (const auto& v : table.rows[i]) {
      out += ',';
      if (v) out += format_exact(*v);
    }
    out += '\n';
  }
  return out;
}

ScoreTable parse_score_table(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "patient_id") {
    throw Error(ErrorCode::kSchemaMismatch, "score table must start with a patient_id column");
  }
  ScoreTable t;
  for (std::size_t j = 1; j < rows[0].size(); ++j) {
    const auto key = bodycomp::parse_column_name(rows[0][j]);
    if (!key) throw Error(ErrorCode::kSchemaMismatch, "unknown score column '" + rows[0][j] + "'");
    t.keys.push_back(*key);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != t.keys.size() + 1) row_error(ErrorCode::kSchemaMismatch, r, "wrong number of fields");
    t.patient_ids.push_back(f[0]);
    std::vector<bodycomp::Score> row;
    for (std::size_t j = 1; j < f.size(); ++j) {
      if (f[j].empty()) {
        row.push_back(std::nullopt);
        continue;
      }
      const auto v = parse_double(f[j]);
      if (!v) row_error(ErrorCode::kRangeViolation, r, "bad number '" + f[j] + "'");
      row.push_back(*v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_score_table(const fs::path& path, const ScoreTable& table) { write_text(path, format_score_table(table)); }
ScoreTable read_score_table(const fs::path& path) { return parse_score_table(read_text(path)); }

std::string format_norm_stats(const bodycomp::CohortNormStats& stats) {
  std::string out = "# provenance: " + stats.provenance() + "\n";
  out += "metric,level,sex,mean,sd,n,status\n";
  std::map<bodycomp::CohortNormStats::Key, std::string> lines;
  for (const auto& [key, m] : stats.entries()) {
    const auto& [metric, level, sex] = key;
    lines[key] = join_csv({metric, std::string(bodycomp::level_name(level)), std::string(bodycomp::sex_name(sex)),
                           format_exact(m.mean), format_exact(m.sd), std::to_string(m.n), "ok"});
  }
  for (const auto& key : stats.degenerate()) {
    const auto& [metric, level, sex] = key;
    lines[key] = join_csv({metric, std::string(bodycomp::level_name(level)), std::string(bodycomp::sex_name(sex)),
                           "", "", "", "degenerate"});
  }
  for (const auto& [key, line] : lines) out += line + "\n";
  return out;
}

bodycomp::CohortNormStats parse_norm_stats(std::string_view text) {
  std::string provenance;
  constexpr std::string_view kPrefix = "# provenance: ";
  if (text.starts_with(kPrefix)) {
    const auto eol = text.find('\n');
    provenance = std::string(text.substr(kPrefix.size(), eol - kPrefix.size()));
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
  }
  bodycomp::CohortNormStats stats(provenance);
  const auto rows = parse_csv(text);
  const std::vector<std::string> header{"metric", "level", "sex", "mean", "sd", "n", "status"};
  if (rows.empty() || rows[0] != header) throw Error(ErrorCode::kSchemaMismatch, "bad normalization stats header");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != header.size()) row_error(ErrorCode::kSchemaMismatch, r, "wrong number of fields");
    const auto level = bodycomp::parse_level(f[1]);
    const auto sex = bodycomp::parse_sex(f[2]);
    if (!level || !sex) row_error(ErrorCode::kSchemaMismatch, r, "bad level or sex");
    if (f[6] == "degenerate") {
      stats.mark_degenerate(f[0], *level, *sex);
      continue;
    }
    const auto mean = parse_double(f[3]);
    const auto sd = parse_double(f[4]);
    const auto n = parse_int(f[5]);
    if (!mean || !sd || !n || f[6] != "ok") row_error(ErrorCode::kSchemaMismatch, r, "bad moments");
    stats.add(f[0], *level, *sex, {*mean, *sd, static_cast<std::size_t>(*n)});
  }
  return stats;
}

// ---- CSV / text ----------------------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::kSchemaMismatch, "unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_g6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_table(const Table& table) {
  std::string out;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j) out += ',';
    out += csv_escape(table.header[j]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw Error(ErrorCode::kInvalidArgument, "table row width mismatch");
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      const auto& c = row[j];
      if (const auto* s = std::get_if<std::string>(&c)) out += csv_escape(*s);
      else if (const auto* d = std::get_if<double>(&c)) out += format_g6(*d);
      else if (const auto* i = std::get_if<long long>(&c)) out += std::to_string(*i);
    }
    out += '\n';
  }
  return out;
}

void write_text(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(ErrorCode::kIoError, "write failed for '" + path.string() + "'");
}

void write_table(const fs::path& path, const Table& table) { write_text(path, format_table(table)); }

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// ---- key=value files ------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = trim(text.substr(0, eol));
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfigInvalid, "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(ErrorCode::kConfigInvalid, "line " + std::to_string(line_no) + ": empty key");
    for (const auto& [k, v] : out) {
      if (k == key) throw Error(ErrorCode::kConfigInvalid, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

KeyValueReader::KeyValueReader(std::vector<std::pair<std::string, std::string>> entries)
    : entries_(std::move(entries)), used_(entries_.size(), false) {}

bool KeyValueReader::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

const std::string* KeyValueReader::lookup(const std::string& key) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == key) {
      used_[i] = true;
      return &entries_[i].second;
    }
  }
  return nullptr;
}

std::string KeyValueReader::get_string(const std::string& key, std::string fallback) {
  const auto* v = lookup(key);
  return v ? *v : std::move(fallback);
}

double KeyValueReader::get_double(const std::string& key, double fallback, double lo, double hi) {
  const auto* v = lookup(key);
  if (!v) return fallback;
  const auto d = parse_double(*v);
  if (!d || !(*d >= lo && *d <= hi)) {
    throw Error(ErrorCode::kConfigInvalid, key + " = '" + *v + "' must be a number in [" + format_g6(lo) + ", " +
                                               format_g6(hi) + "]");
  }
  return *d;
}

std::uint64_t KeyValueReader::get_uint(const std::string& key, std::uint64_t fallback, std::uint64_t lo,
                                       std::uint64_t hi) {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::uint64_t u = 0;
  const char* end = v->data() + v->size();
  auto [ptr, ec] = std::from_chars(v->data(), end, u);
  if (v->empty() || ec != std::errc() || ptr != end || u < lo || u > hi) {
    throw Error(ErrorCode::kConfigInvalid, key + " = '" + *v + "' must be an integer in [" + std::to_string(lo) +
                                               ", " + std::to_string(hi) + "]");
  }
  return u;
}

bool KeyValueReader::get_bool(const std::string& key, bool fallback) {
  const auto* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw Error(ErrorCode::kConfigInvalid, key + " = '" + *v + "' must be true or false");
}

std::vector<std::string> KeyValueReader::get_list(const std::string& key, std::vector<std::string> fallback) {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::string_view rest = *v;
  while (true) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> KeyValueReader::take_prefixed(const std::string& prefix) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first.starts_with(prefix)) {
      used_[i] = true;
      out.emplace_back(entries_[i].first.substr(prefix.size()), entries_[i].second);
    }
  }
  return out;
}

void KeyValueReader::finish() const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!used_[i]) throw Error(ErrorCode::kConfigInvalid, "unknown key '" + entries_[i].first + "'");
  }
}

}  // namespace morphorisk::io
