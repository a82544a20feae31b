#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "morphorisk/cohort_io.hpp"
#include "morphorisk/error.hpp"
#include "morphorisk/random.hpp"

using namespace morphorisk;
using namespace morphorisk::io;
using bodycomp::LabeledVolume;
using bodycomp::TissueLabel;

namespace {

template <class T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

// Byte-by-byte assembly of a 2x2x1 file, independent of encode_mvol.
std::vector<std::uint8_t> hand_assembled_2x2x1() {
  std::vector<std::uint8_t> b = {'M', 'V', 'O', 'L', '1', 0};
  append_le<std::uint16_t>(b, 1);
  append_le<std::uint32_t>(b, 2);
  append_le<std::uint32_t>(b, 2);
  append_le<std::uint32_t>(b, 1);
  append_le<double>(b, 0.75);
  append_le<double>(b, 0.8);
  append_le<double>(b, 5.0);
  b.push_back(1);
  b.insert(b.end(), {0, 0, 0});
  for (std::int16_t h : {-1000, 40, -90, 3071}) append_le<std::int16_t>(b, h);
  b.insert(b.end(), {0, 1, 2, 4});
  return b;
}

LabeledVolume random_volume(std::uint64_t seed) {
  Rng rng(seed);
  bodycomp::Dims d{1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(4)};
  std::vector<std::int16_t> hu(d.voxel_count());
  std::vector<TissueLabel> lab(d.voxel_count());
  for (std::size_t i = 0; i < hu.size(); ++i) {
    hu[i] = static_cast<std::int16_t>(-1024 + static_cast<int>(rng.below(4096)));
    lab[i] = static_cast<TissueLabel>(rng.below(5));
  }
  return LabeledVolume(d, {rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.5, 8)}, hu, lab,
                       rng.bernoulli(0.5));
}

PatientRecord sample_record(std::string id) {
  PatientRecord p;
  p.patient_id = std::move(id);
  p.sex = bodycomp::Sex::kFemale;
  p.age = 65;
  p.age_cat = age_category(p.age);
  p.height_m = 1.62;
  p.bmi = 24.99;
  p.bmi_cat = bmi_category(*p.bmi);
  p.smoker = true;
  p.asa_class = 3;
  p.outcomes[0] = 0;
  p.outcomes[3] = 1;
  p.last_followup_days = 400;
  p.vital_status = VitalStatus::kDied;
  p.death_day = 123.5;
  p.nsqip_mortality_risk = 0.0123;
  p.mask_path = "masks/p1.mvol";
  return p;
}

ErrorCode code_of(std::string_view text) {
  try {
    parse_cohort(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

std::string header_line() {
  std::string h;
  for (const auto& c : cohort_columns()) h += (h.empty() ? "" : ",") + c;
  return h + "\n";
}

}  // namespace

TEST_CASE("hand-assembled MVOL decodes and re-encodes to the same bytes") {
  const auto bytes = hand_assembled_2x2x1();
  REQUIRE(bytes.size() == kMvolHeaderSize + 4 * 3);
  const auto vol = decode_mvol(bytes);
  CHECK(vol.dims() == bodycomp::Dims{2, 2, 1});
  CHECK(vol.spacing() == bodycomp::Spacing{0.75, 0.8, 5.0});
  CHECK(vol.z_increases_toward_head());
  CHECK(vol.hu(1, 1, 0) == 3071);
  CHECK(vol.hu(0, 1, 0) == -90);
  CHECK(vol.label(1, 0, 0) == TissueLabel::kSkeletalMuscle);
  CHECK(vol.label(1, 1, 0) == TissueLabel::kIntermuscularFat);
  CHECK(encode_mvol(vol) == bytes);
}

TEST_CASE("MVOL round trip is byte identical for random volumes, on disk too") {
  const auto dir = std::filesystem::temp_directory_path() / "morphorisk_test_mvol";
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto vol = random_volume(s);
    const auto bytes = encode_mvol(vol);
    CHECK(encode_mvol(decode_mvol(bytes)) == bytes);
    const auto path = dir / ("v" + std::to_string(s) + ".mvol");
    write_mvol(path, vol);
    const auto back = read_mvol(path);
    CHECK(encode_mvol(back) == bytes);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("MVOL errors") {
  const auto good = hand_assembled_2x2x1();

  SUBCASE("truncated payload names both byte counts") {
    std::vector<std::uint8_t> cut(good.begin(), good.end() - 3);
    try {
      decode_mvol(cut);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTruncatedFile);
      const std::string msg = e.what();
      CHECK(msg.find("expected 60") != std::string::npos);
      CHECK(msg.find("got 57") != std::string::npos);
    }
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> cut(good.begin(), good.begin() + 20);
    CHECK_THROWS_WITH_AS(decode_mvol(cut), doctest::Contains("TruncatedFile"), Error);
  }
  SUBCASE("bad magic") {
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_mvol(bad), doctest::Contains("BadMagic"), Error);
  }
  SUBCASE("label 7 reports the voxel coordinate") {
    auto bad = good;
    bad[kMvolHeaderSize + 8 + 2] = 7;  // voxel index 2 -> (0, 1, 0)
    try {
      decode_mvol(bad);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIllegalLabel);
      CHECK(std::string(e.what()).find("(0, 1, 0)") != std::string::npos);
    }
  }
  SUBCASE("zero spacing") {
    auto bad = good;
    for (std::size_t i = 20; i < 28; ++i) bad[i] = 0;
    CHECK_THROWS_WITH_AS(decode_mvol(bad), doctest::Contains("NonPositiveSpacing"), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(read_mvol("/nonexistent/x.mvol"), doctest::Contains("IoError"), Error);
  }
}

TEST_CASE("vertebral map text round trip") {
  bodycomp::VertebralMap m;
  m.set(bodycomp::Vertebra::kT12, 34);
  m.set(bodycomp::Vertebra::kL1, 28);
  m.set(bodycomp::Vertebra::kL2, 21);
  m.set(bodycomp::Vertebra::kL3, 15);
  m.set(bodycomp::Vertebra::kL4, 8);
  m.z_increases_toward_head = true;
  const auto text = format_vertebral_map(m);
  CHECK(text == "T12,34\nL1,28\nL2,21\nL3,15\nL4,8\n");
  const auto back = parse_vertebral_map(text, true);
  CHECK(back.z == m.z);
  CHECK_NOTHROW(back.validate(40));
  CHECK_THROWS_AS(parse_vertebral_map("L6,3\n", false), Error);
  CHECK_THROWS_AS(parse_vertebral_map("L3,3\nL3,4\n", false), Error);
}

TEST_CASE("derive_outcome over the full small-integer grid") {
  // Oracle written directly from the classification rules.
  for (int fu = 1; fu <= 800; ++fu) {
    const auto a = derive_outcome(VitalStatus::kAlive, std::nullopt, fu);
    CHECK(a.event == 0);
    CHECK(a.survival_time_days == std::min(fu, 365));
    CHECK(a.one_year_status == (fu > 365 ? OneYearStatus::kAlive : OneYearStatus::kUnknown));
    for (int d = 1; d <= fu; d += 7) {
      const auto o = derive_outcome(VitalStatus::kDied, d, fu);
      const bool dead = d <= 365;
      CHECK(o.event == (dead ? 1 : 0));
      CHECK(o.survival_time_days == std::min(d, 365));
      CHECK(o.one_year_status == (dead ? OneYearStatus::kDeceased : OneYearStatus::kAlive));
      // Pure function: the result does not depend on the follow-up day once death is known.
      const auto o2 = derive_outcome(VitalStatus::kDied, d, 800);
      CHECK(o2.event == o.event);
      CHECK(o2.survival_time_days == o.survival_time_days);
    }
  }
}

TEST_CASE("derive_outcome examples") {
  const auto a = derive_outcome(VitalStatus::kAlive, std::nullopt, 200);
  CHECK(a.one_year_status == OneYearStatus::kUnknown);
  CHECK(a.survival_time_days == 200);
  CHECK(a.event == 0);
  const auto b = derive_outcome(VitalStatus::kDied, 400, 400);
  CHECK(b.one_year_status == OneYearStatus::kAlive);
  CHECK(b.survival_time_days == 365);
  CHECK(b.event == 0);
  CHECK_THROWS_AS(derive_outcome(VitalStatus::kDied, std::nullopt, 10), Error);
}

TEST_CASE("category bins") {
  CHECK(age_category(64.999) == "<65");
  CHECK(age_category(65) == "65-75");
  CHECK(age_category(75) == "65-75");
  CHECK(age_category(75.01) == "75-85");
  CHECK(age_category(85) == "75-85");
  CHECK(age_category(85.5) == ">85");
  CHECK(bmi_category(18.49) == "<18.5");
  CHECK(bmi_category(18.5) == "18.5-24.99");
  CHECK(bmi_category(24.999) == "18.5-24.99");
  CHECK(bmi_category(25) == "25-29.99");
  CHECK(bmi_category(30) == ">=30");
}

TEST_CASE("cohort parse then serialize is idempotent") {
  std::vector<PatientRecord> recs = {sample_record("p1"), sample_record("Zoë-東京,\"x\""), sample_record("p3")};
  recs[2].vital_status = VitalStatus::kAlive;
  recs[2].death_day.reset();
  recs[2].bmi.reset();
  recs[2].bmi_cat.clear();
  recs[2].height_m.reset();
  recs[2].nsqip_mortality_risk.reset();
  recs[2].cohort = "validation";
  recs[2].age = 0.1 + 0.2 + 80;
  recs[2].age_cat = age_category(recs[2].age);
  recs[2].functional_status = FunctionalStatus::kNonIndependent;
  recs[2].last_followup_days = 200;
  const auto text = format_cohort(recs);
  const auto parsed = parse_cohort(text);
  REQUIRE(parsed.records.size() == 3);
  CHECK(parsed.records == recs);
  CHECK(format_cohort(parsed.records) == text);
  CHECK(parsed.records[1].patient_id == "Zoë-東京,\"x\"");
  CHECK(parsed.outcomes[0].event == 1);
  CHECK(parsed.outcomes[2].one_year_status == OneYearStatus::kUnknown);

  const auto path = std::filesystem::temp_directory_path() / "morphorisk_test_cohort.csv";
  write_cohort(path, recs);
  CHECK(read_text(path) == text);
  CHECK(read_cohort(path).records == recs);
  std::filesystem::remove(path);
}

TEST_CASE("empty cohort is header only and parses") {
  const auto text = format_cohort({});
  CHECK(text == header_line());
  CHECK(parse_cohort(text).records.empty());
}

TEST_CASE("cohort validation errors carry row numbers") {
  const auto good = format_cohort(std::vector<PatientRecord>{sample_record("a"), sample_record("b")});
  CHECK(code_of("patient_id,sex\n") == ErrorCode::kSchemaMismatch);

  auto replace_in_row2 = [&](std::string from, std::string to) {
    auto pos = good.rfind(from);
    REQUIRE(pos != std::string::npos);
    std::string t = good;
    t.replace(pos, from.size(), to);
    return t;
  };
  const auto bad_bin = replace_in_row2(",65-75,", ",<65,");
  CHECK(code_of(bad_bin) == ErrorCode::kBinMismatch);
  try {
    parse_cohort(bad_bin);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK(code_of(replace_in_row2(",0.0123,", ",1.5,")) == ErrorCode::kRangeViolation);
  CHECK(code_of(replace_in_row2(",123.5,", ",500,")) == ErrorCode::kRangeViolation);
  CHECK(code_of(replace_in_row2(",F,", ",X,")) == ErrorCode::kRangeViolation);
  CHECK(code_of(replace_in_row2(",masks/p1.mvol", "")) == ErrorCode::kSchemaMismatch);
}

TEST_CASE("score table round trip preserves Missing and exact values") {
  std::vector<std::string> ids = {"a", "b"};
  bodycomp::ScoreVector s1, s2;
  const auto& keys = bodycomp::catalog_keys();
  for (std::size_t j = 0; j < keys.size(); ++j) {
    s1.insert(keys[j].metric, keys[j].level, j % 3 ? std::optional<double>(0.1 * j + 1.0 / 3) : std::nullopt);
    s2.insert(keys[j].metric, keys[j].level, -1e-300 * j);
  }
  std::vector<bodycomp::ScoreVector> sv = {s1, s2};
  const auto table = make_score_table(ids, sv);
  const auto text = format_score_table(table);
  const auto back = parse_score_table(text);
  CHECK(back.keys == table.keys);
  CHECK(back.rows == table.rows);
  CHECK(format_score_table(back) == text);
  CHECK(back.key_index(keys[5]) == 5u);
}

TEST_CASE("norm stats round trip") {
  bodycomp::CohortNormStats st("dev cohort n=3");
  st.add("SMA", bodycomp::LevelId::kL3, bodycomp::Sex::kMale, {123.456, 7.25, 40});
  st.add("SMA", bodycomp::LevelId::kL3, bodycomp::Sex::kFemale, {98.1, 6.5, 35});
  st.mark_degenerate("SMD", bodycomp::LevelId::kVol3D, bodycomp::Sex::kFemale);
  const auto text = format_norm_stats(st);
  const auto back = parse_norm_stats(text);
  CHECK(back.provenance() == st.provenance());
  CHECK(back.degenerate() == st.degenerate());
  REQUIRE(back.entries().size() == 2);
  for (const auto& [k, m] : st.entries()) {
    const auto& b = back.entries().at(k);
    CHECK(b.mean == m.mean);
    CHECK(b.sd == m.sd);
    CHECK(b.n == m.n);
  }
  CHECK(format_norm_stats(back) == text);
}

TEST_CASE("report tables are deterministic and header-only when empty") {
  Table t{{"metric", "level", "auc", "n"}, {}};
  CHECK(format_table(t) == "metric,level,auc,n\n");
  t.add({std::string("N_SMD"), std::string("L3"), 0.712345678, 120LL});
  t.add({std::string("ü,x"), std::monostate{}, 1e-7, -3LL});
  const auto a = format_table(t);
  CHECK(a == "metric,level,auc,n\nN_SMD,L3,0.712346,120\n\"ü,x\",,1e-07,-3\n");
  CHECK(format_table(t) == a);
  CHECK(format_g6(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_g6(std::nan("")) == "nan");
}

TEST_CASE("csv parser handles quotes, CRLF and a missing final newline") {
  const auto rows = parse_csv("a,\"b,\"\"c\"\"\"\r\n,\nx");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"a", "b,\"c\""});
  CHECK(rows[1] == std::vector<std::string>{"", ""});
  CHECK(rows[2] == std::vector<std::string>{"x"});
  CHECK_THROWS_AS(parse_csv("\"open"), Error);
  for (double v : {0.1, 1.0 / 3, 1e-300, -2.5e17, 123456789.123}) {
    CHECK(std::stod(format_exact(v)) == v);
  }
}
