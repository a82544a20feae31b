#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "morphorisk/bodycomp.hpp"
#include "morphorisk/cohort_io.hpp"
#include "morphorisk/error.hpp"
#include "morphorisk/synthetic.hpp"

using namespace morphorisk;
using namespace morphorisk::synth;
using bodycomp::LevelId;

namespace {

SyntheticConfig phantom_config(std::uint64_t variant) {
  SyntheticConfig c;
  c.mode = Mode::kPhantom;
  c.n = 4;
  c.phantom_nx = 32 + 2 * (variant % 5);
  c.phantom_ny = 30 + 3 * (variant % 3);
  c.phantom_nz = 10 + variant % 7;
  c.spacing_xy = 0.7 + 0.05 * static_cast<double>(variant % 4);
  c.spacing_z = 2.5 + static_cast<double>(variant % 3);
  c.z_increases_toward_head = variant % 2 == 1;
  return c;
}

}  // namespace

TEST_CASE("lattice disc count matches brute-force enumeration") {
  for (std::int64_t r2 = 0; r2 <= 600; ++r2) {
    std::uint64_t brute = 0;
    for (std::int64_t x = -30; x <= 30; ++x)
      for (std::int64_t y = -30; y <= 30; ++y) brute += x * x + y * y <= r2;
    CHECK(lattice_disc_count(r2) == brute);
  }
  CHECK(lattice_disc_count(-1) == 0);
  CHECK(isqrt(99) == 9);
  CHECK(isqrt(100) == 10);
}

TEST_CASE("phantom catalog areas, volumes and densities equal the analytic counts") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto config = phantom_config(seed);
    const auto cohort = generate_cohort(config, seed);
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
      const auto g = phantom_for(config, seed, i, cohort.records[i], cohort.latent[i]);
      const auto vol = rasterize(g);
      CHECK_NOTHROW(g.vmap.validate(vol.dims().nz));
      const auto raw = bodycomp::compute_raw_catalog(vol, g.vmap, cohort.records[i].demographics());
      const auto oracle = analytic_direct_scores(g);
      for (const auto& [key, expected] : oracle) {
        const auto got = raw.at(key.metric, key.level);
        REQUIRE(got.has_value() == expected.has_value());
        if (!got) continue;
        if (key.metric == "SMD" || key.metric == "SMFD") {
          CHECK(std::abs(*got - *expected) <= 1e-9);
        } else {
          CHECK(*got == *expected);
        }
      }
      // Every tissue is non-empty at every level, so ratios are defined.
      CHECK(*raw.at("VFA", LevelId::kL3) > 0);
      CHECK(*raw.at("MFA", LevelId::kL3) > 0);
    }
  }
}

TEST_CASE("planted score mode: the planted column is the latent factor") {
  SyntheticConfig c;
  c.n = 300;
  c.duplicate_metric = "N_SMFD";
  const auto cohort = generate_cohort(c, 7);
  const auto j = cohort.scores.key_index({"N_SMD", LevelId::kL2});
  const auto dup = cohort.scores.key_index({"N_SMFD", LevelId::kL2});
  REQUIRE(j);
  REQUIRE(dup);
  for (std::size_t i = 0; i < c.n; ++i) {
    CHECK(*cohort.scores.rows[i][*j] == cohort.latent[i].image);
    CHECK(cohort.scores.rows[i][*dup] == cohort.scores.rows[i][*j]);
  }
  CHECK(cohort.scores.keys.size() == 10 * 5);
  // The decoy sits at its age-group value plus noise.
  const auto d = cohort.scores.key_index({"N_VFA", LevelId::kL3});
  double young = 0, old = 0;
  std::size_t ny = 0, no = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    if (cohort.records[i].age_cat == "<65") {
      young += *cohort.scores.rows[i][*d];
      ++ny;
    } else if (cohort.records[i].age_cat == "75-85") {
      old += *cohort.scores.rows[i][*d];
      ++no;
    }
  }
  CHECK(old / no - young / ny == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("generator is reproducible and seed-sensitive") {
  SyntheticConfig c;
  c.n = 50;
  const auto a = generate_cohort(c, 11), b = generate_cohort(c, 11), other = generate_cohort(c, 12);
  CHECK(io::format_cohort(a.records) == io::format_cohort(b.records));
  CHECK(io::format_score_table(a.scores) == io::format_score_table(b.scores));
  CHECK(io::format_cohort(a.records) != io::format_cohort(other.records));
  // Prefixes agree: patient i depends only on (seed, i).
  c.n = 20;
  const auto prefix = generate_cohort(c, 11);
  for (std::size_t i = 0; i < 20; ++i) CHECK(prefix.records[i].age == a.records[i].age);
}

TEST_CASE("generated cohorts pass ingestion validation") {
  SyntheticConfig c;
  c.n = 500;
  const auto cohort = generate_cohort(c, 3);
  const auto parsed = io::parse_cohort(io::format_cohort(cohort.records));
  CHECK(parsed.records == cohort.records);
  std::size_t unknown = 0;
  for (const auto& o : parsed.outcomes) unknown += o.one_year_status == io::OneYearStatus::kUnknown;
  // Early loss hits about 20% of patients; some of them die first.
  CHECK(unknown > 50);
  CHECK(unknown < 130);
}

TEST_CASE("censoring rate 0: every subject has an event or reaches the horizon") {
  SyntheticConfig c;
  c.n = 400;
  c.censoring_rate = 0;
  const auto cohort = generate_cohort(c, 5);
  for (const auto& p : cohort.records) {
    const auto o = io::derive_outcome(p.vital_status, p.death_day, p.last_followup_days);
    CHECK((o.event == 1 || o.survival_time_days == io::kOneYearHorizon));
    CHECK(o.one_year_status != io::OneYearStatus::kUnknown);
  }
}

TEST_CASE("n = 0 writes empty but schema-valid files") {
  const auto dir = std::filesystem::temp_directory_path() / "morphorisk_test_synth_empty";
  std::filesystem::remove_all(dir);
  SyntheticConfig c;
  c.n = 0;
  write_synthetic_cohort(c, 1, dir);
  CHECK(io::read_cohort(dir / "cohort.csv").records.empty());
  const auto scores = io::read_score_table(dir / "scores.csv");
  CHECK(scores.rows.empty());
  CHECK(scores.keys.size() == 40);
  const auto truth = io::parse_key_values(io::read_text(dir / "truth.txt"));
  CHECK(truth.front() == std::pair<std::string, std::string>{"seed", "1"});
  std::filesystem::remove_all(dir);
}

TEST_CASE("phantom cohort files round trip through the readers") {
  const auto dir = std::filesystem::temp_directory_path() / "morphorisk_test_synth_phantom";
  std::filesystem::remove_all(dir);
  auto c = phantom_config(3);
  c.n = 3;
  write_synthetic_cohort(c, 9, dir);
  const auto table = io::read_cohort(dir / "cohort.csv");
  REQUIRE(table.records.size() == 3);
  const auto cohort = generate_cohort(c, 9);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = table.records[i];
    const auto vol = io::read_mvol(dir / p.mask_path);
    const auto vmap = io::read_vertebral_map(dir / "maps" / (p.patient_id + ".csv"), vol.z_increases_toward_head());
    const auto g = phantom_for(c, 9, i, cohort.records[i], cohort.latent[i]);
    CHECK(io::encode_mvol(vol) == io::encode_mvol(rasterize(g)));
    CHECK(vmap.z == g.vmap.z);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator config parsing") {
  SyntheticConfig c;
  c.n = 123;
  c.two_regime = true;
  c.noise_metrics = {"N_SFA"};
  const auto text = io::format_key_values(config_entries(c));
  const auto back = parse_synthetic_config(text);
  CHECK(io::format_key_values(config_entries(back)) == text);
  CHECK_THROWS_WITH_AS(parse_synthetic_config("n = 5\ncolour = red\n"), doctest::Contains("unknown key"), Error);
  CHECK_THROWS_WITH_AS(parse_synthetic_config("censoring_rate = 1.5\n"), doctest::Contains("ConfigInvalid"), Error);
  CHECK_THROWS_WITH_AS(parse_synthetic_config("planted_metric = SMI\n"), doctest::Contains("ConfigInvalid"), Error);
  CHECK_THROWS_WITH_AS(parse_synthetic_config("n = 5\nn = 6\n"), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_WITH_AS(parse_synthetic_config("noise_metrics = N_VFA\n"), doctest::Contains("twice"), Error);
}

TEST_CASE("binary Cox simulator censors about 20% at the acceptance settings") {
  double censored = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sample = simulate_binary_cox(2000, 2.0, 0.01, 370, s);
    censored += 1.0 - static_cast<double>(sample.surv.event_count()) / 2000.0;
  }
  // Analytic: mean over the two arms of (1 - exp(-rate*C)) / (rate*C).
  const double expected = 0.5 * ((1 - std::exp(-3.7)) / 3.7 + (1 - std::exp(-7.4)) / 7.4);
  CHECK(censored / 10 == doctest::Approx(expected).epsilon(0.05));
}
