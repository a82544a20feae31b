#include <cstdlib>
#include <filesystem>

#include "doctest.h"
#include "morphorisk/cli.hpp"
#include "morphorisk/error.hpp"
#include "morphorisk/synthetic.hpp"

using namespace morphorisk;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("morphorisk_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small phantom cohort plus a run config pointing at it.
fs::path phantom_workspace(const std::string& name, std::size_t n, const std::string& extra = "") {
  const auto dir = fresh_dir(name);
  synth::SyntheticConfig c;
  c.mode = synth::Mode::kPhantom;
  c.n = n;
  c.phantom_nx = 32;
  c.phantom_ny = 32;
  c.phantom_nz = 12;
  c.img_log_hr = 0.7;
  c.baseline_hazard = 0.001;
  synth::write_synthetic_cohort(c, 3, dir / "cohort");
  io::write_text(dir / "run.txt", "cohort = cohort/cohort.csv\nmasks_dir = cohort\nmaps_dir = cohort/maps\n"
                                   "output_dir = out\nbootstrap_replicates = 40\nmin_n = 2\n" +
                                       extra);
  return dir;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = io::read_text(e.path());
  return out;
}

}  // namespace

TEST_CASE("run config parsing") {
  const auto dir = phantom_workspace("config", 3);
  const auto c = cli::load_run_config(dir / "run.txt");
  CHECK(c.cohort == (dir / "cohort" / "cohort.csv").lexically_normal());
  CHECK(c.output_dir == (dir / "out").lexically_normal());
  CHECK(c.corr_threshold == 0.8);
  CHECK(c.retain_p == 0.1);
  CHECK(c.eliminate_p == 0.1);
  CHECK(c.nsqip_threshold == 0.05);
  CHECK(c.bootstrap_replicates == 40);
  CHECK(c.outcomes.size() == 8);

  const std::string base = "cohort = cohort/cohort.csv\noutput_dir = out\nmasks_dir = cohort\nmaps_dir = cohort/maps\n";
  auto bad = [&](const std::string& extra, const char* needle) {
    CHECK_THROWS_WITH_AS(cli::parse_run_config(base + extra, dir), doctest::Contains(needle), Error);
  };
  bad("colour = blue\n", "unknown key");
  bad("corr_threshold = 1.5\n", "ConfigInvalid");
  bad("outcomes = mortality,hiccups\n", "hiccups");
  bad("variants = IMG-only,ALL\n", "ALL");
  bad("override.* = N_SMD\n", "metric@LEVEL");
  bad("threads = 0\n", "ConfigInvalid");
  CHECK_THROWS_WITH_AS(cli::parse_run_config("cohort = nowhere.csv\noutput_dir = out\n", dir),
                       doctest::Contains("no such file"), Error);
  CHECK_THROWS_WITH_AS(cli::parse_run_config("output_dir = out\n", dir), doctest::Contains("cohort"), Error);

  const auto o = cli::parse_run_config(base + "override.* = N_SMD@L3, SMA@VOL3D\noverride.mortality = N_VFA@L1\n", dir);
  REQUIRE(o.overrides.size() == 3);
  CHECK(o.overrides[0].outcome == "*");
  CHECK(o.overrides[1].level == bodycomp::LevelId::kVol3D);
  CHECK(o.overrides[2].outcome == "mortality");
}

TEST_CASE("seed precedence: flag, then environment, then file") {
  const auto dir = phantom_workspace("seed", 2, "seed = 5\n");
  auto c = cli::load_run_config(dir / "run.txt");
  CHECK(c.seed == 5);
  ::setenv("MORPHORISK_SEED", "17", 1);
  cli::apply_seed_overrides(c, std::nullopt);
  CHECK(c.seed == 17);
  cli::apply_seed_overrides(c, 99);
  CHECK(c.seed == 99);
  ::setenv("MORPHORISK_SEED", "x1", 1);
  CHECK_THROWS_WITH_AS(cli::apply_seed_overrides(c, std::nullopt), doctest::Contains("MORPHORISK_SEED"), Error);
  ::unsetenv("MORPHORISK_SEED");
}

TEST_CASE("extract: rows, columns, per-sex stats, and an error manifest for a missing mask") {
  const auto dir = phantom_workspace("extract", 3);
  const auto c = cli::load_run_config(dir / "run.txt");
  // Both sexes in the reference cohort, so every patient can be normalized.
  auto edited = io::read_cohort(c.cohort);
  for (std::size_t i = 0; i < 3; ++i) {
    edited.records[i].cohort = "development";
    edited.records[i].sex = i == 1 ? bodycomp::Sex::kFemale : bodycomp::Sex::kMale;
  }
  io::write_text(c.cohort, io::format_cohort(edited.records));
  auto r = cli::cmd_extract(c);
  CHECK(r.errors == 0);
  const auto scores = io::read_score_table(c.output_dir / "scores.csv");
  CHECK(scores.rows.size() == 3);
  CHECK(scores.keys.size() == bodycomp::catalog_keys().size());
  const auto stats = io::parse_norm_stats(io::read_text(c.output_dir / "norm_stats.csv"));
  bool male = false, female = false;
  for (const auto& [key, m] : stats.entries()) (std::get<2>(key) == bodycomp::Sex::kMale ? male : female) = true;
  for (const auto& key : stats.degenerate()) (std::get<2>(key) == bodycomp::Sex::kMale ? male : female) = true;
  CHECK(male);
  CHECK(female);

  const auto first = snapshot(c.output_dir);
  cli::cmd_extract(c);
  CHECK(snapshot(c.output_dir) == first);

  const auto cohort = io::read_cohort(c.cohort);
  fs::remove(c.masks_dir / cohort.records[2].mask_path);
  r = cli::cmd_extract(c);
  CHECK(r.errors == 1);
  const auto manifest = io::read_text(c.output_dir / "extract_errors.csv");
  CHECK(manifest.find(cohort.records[2].patient_id) != std::string::npos);
  const auto partial = io::read_score_table(c.output_dir / "scores.csv");
  REQUIRE(partial.rows.size() == 3);
  CHECK(std::none_of(partial.rows[2].begin(), partial.rows[2].end(), [](const auto& v) { return v.has_value(); }));
  // Normalization stats change with the reference set; raw columns do not.
  for (std::size_t j = 0; j < scores.keys.size(); ++j) {
    if (scores.keys[j].metric.rfind("N_", 0) != 0) CHECK(partial.rows[0][j] == scores.rows[0][j]);
  }
}

TEST_CASE("stages refuse to run without their upstream files") {
  const auto dir = phantom_workspace("upstream", 3);
  const auto c = cli::load_run_config(dir / "run.txt");
  CHECK_THROWS_WITH_AS(cli::cmd_screen(c), doctest::Contains("MissingUpstream"), Error);
  cli::cmd_extract(c);
  CHECK_THROWS_WITH_AS(cli::cmd_evaluate(c), doctest::Contains("models.json"), Error);
  CHECK_THROWS_WITH_AS(cli::cmd_km(c), doctest::Contains("run `fit` first"), Error);
  CHECK_THROWS_WITH_AS(cli::cmd_select(c), doctest::Contains("screen.csv"), Error);
  CHECK_THROWS_WITH_AS(cli::cmd_report(c), doctest::Contains("MissingUpstream"), Error);
  CHECK_THROWS_WITH_AS(cli::run_stage("plot", c), doctest::Contains("unknown command"), Error);
}

TEST_CASE("full pipeline is idempotent and independent of thread count") {
  const auto dir = phantom_workspace("full", 300, "seed = 4\n");
  auto c = cli::load_run_config(dir / "run.txt");
  for (const auto& s : cli::stage_names()) cli::run_stage(s, c);
  const auto first = snapshot(c.output_dir);
  CHECK(first.count("report.md"));
  CHECK(first.count("models.json"));
  CHECK(first.at("report.md").find("## Model cards") != std::string::npos);

  c.threads = 4;
  for (const auto& s : cli::stage_names()) cli::run_stage(s, c);
  CHECK(snapshot(c.output_dir) == first);

  // A different seed moves the bootstrap intervals only.
  c.seed = 5;
  for (const auto& s : cli::stage_names()) cli::run_stage(s, c);
  const auto other = snapshot(c.output_dir);
  CHECK(other.at("models.json") == first.at("models.json"));
  CHECK(other.at("evaluation.csv") != first.at("evaluation.csv"));
}

TEST_CASE("model store round trip preserves predictions") {
  synth::SyntheticConfig g;
  g.n = 400;
  g.img_log_hr = 0.6;
  const auto cohort = synth::generate_cohort(g, 2);
  const auto table = io::parse_cohort(io::format_cohort(cohort.records));
  const auto data = pipeline::make_analysis_data(table, cohort.scores);
  const std::vector<bodycomp::ScoreKey> sel = {{"N_SMD", bodycomp::LevelId::kL2}};
  cli::ModelStore store;
  store["mortality_1y"] = pipeline::build_model_suite("mortality_1y", sel, data, pipeline::kConfounders);
  store["any_complication"] = pipeline::build_model_suite("any_complication", {}, data, pipeline::kConfounders);
  const auto text = cli::format_models(store);
  const auto back = cli::parse_models(text);
  CHECK(cli::format_models(back) == text);
  for (const auto& [outcome, suite] : store) {
    for (const auto& [v, m] : suite) {
      const auto& b = back.at(outcome).at(v);
      CHECK(b.status == m.status);
      CHECK(b.buildable == m.buildable);
      CHECK(pipeline::model_linear_predictor(b, data) == pipeline::model_linear_predictor(m, data));
      if (m.cox) CHECK(b.cox->cumulative_hazard(200) == m.cox->cumulative_hazard(200));
    }
  }
  CHECK_THROWS_WITH_AS(cli::parse_models("{\"x\": [{}]}"), doctest::Contains("SchemaMismatch"), Error);
}

TEST_CASE("fnv1a reference vectors") {
  CHECK(cli::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(cli::fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(cli::fnv1a_hex("foobar") == "85944171f73967e8");
}
