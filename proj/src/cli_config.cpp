#include <charconv>
#include <cstdlib>

#include "morphorisk/cli.hpp"
#include "morphorisk/error.hpp"

namespace morphorisk::cli {

namespace {

io::fs::path resolve(const io::fs::path& base, const std::string& value) {
  const io::fs::path p(value);
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

io::fs::path existing(const io::fs::path& base, const std::string& key, const std::string& value, bool directory) {
  const auto p = resolve(base, value);
  std::error_code ec;
  const bool ok = directory ? io::fs::is_directory(p, ec) : io::fs::is_regular_file(p, ec);
  if (!ok) {
    throw Error(ErrorCode::kConfigInvalid,
                key + " = " + value + ": " + (directory ? "no such directory" : "no such file") + " (" +
                    p.string() + ")");
  }
  return p;
}

double parse_number(const std::string& key, const std::string& s) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kConfigInvalid, key + ": '" + s + "' is not a number");
  }
  return v;
}

std::uint64_t parse_seed(const std::string& where, std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kConfigInvalid, where + ": '" + std::string(s) + "' is not an unsigned 64-bit seed");
  }
  return v;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const io::fs::path& base_dir) {
  RunConfig c;
  c.entries = io::parse_key_values(text);
  io::KeyValueReader r(c.entries);
  if (!r.has("cohort")) throw Error(ErrorCode::kConfigInvalid, "missing required key 'cohort'");
  if (!r.has("output_dir")) throw Error(ErrorCode::kConfigInvalid, "missing required key 'output_dir'");
  c.cohort = existing(base_dir, "cohort", r.get_string("cohort", ""), false);
  c.output_dir = resolve(base_dir, r.get_string("output_dir", ""));
  if (r.has("scores")) c.scores_input = existing(base_dir, "scores", r.get_string("scores", ""), false);
  const std::string cohort_dir = c.cohort.parent_path().string();
  // Masks are only needed when scores are extracted here.
  if (!c.scores_input || r.has("masks_dir")) {
    c.masks_dir = existing(base_dir, "masks_dir", r.get_string("masks_dir", cohort_dir), true);
  }
  if (!c.scores_input || r.has("maps_dir")) {
    c.maps_dir = existing(base_dir, "maps_dir", r.get_string("maps_dir", (c.cohort.parent_path() / "maps").string()),
                          true);
  }

  const auto known_outcomes = pipeline::default_outcomes();
  c.outcomes = r.get_list("outcomes", known_outcomes);
  for (const auto& o : c.outcomes) {
    if (std::find(known_outcomes.begin(), known_outcomes.end(), o) == known_outcomes.end()) {
      throw Error(ErrorCode::kConfigInvalid, "outcomes: unknown outcome '" + o + "'");
    }
  }
  c.confounders = r.get_list("confounders", pipeline::kConfounders);
  for (const auto& f : c.confounders) {
    if (std::find(pipeline::kConfounders.begin(), pipeline::kConfounders.end(), f) == pipeline::kConfounders.end()) {
      throw Error(ErrorCode::kConfigInvalid, "confounders: unknown confounder '" + f + "'");
    }
  }
  if (r.has("variants")) {
    c.variants.clear();
    for (const auto& name : r.get_list("variants", {})) {
      bool found = false;
      for (auto v : pipeline::variants_for(pipeline::kOneYearMortality)) {
        if (pipeline::variant_name(v) == name) {
          c.variants.push_back(v);
          found = true;
        }
      }
      if (!found) throw Error(ErrorCode::kConfigInvalid, "variants: unknown variant '" + name + "'");
    }
  }
  c.corr_threshold = r.get_double("corr_threshold", c.corr_threshold, 0.0, 1.0);
  c.retain_p = r.get_double("retain_p", c.retain_p, 0.0, 1.0);
  c.eliminate_p = r.get_double("eliminate_p", c.eliminate_p, 0.0, 1.0);
  c.nsqip_threshold = r.get_double("nsqip_threshold", c.nsqip_threshold, 0.0, 1.0);
  if (r.has("nsqip_sweep")) {
    c.nsqip_sweep.clear();
    for (const auto& s : r.get_list("nsqip_sweep", {})) {
      const double v = parse_number("nsqip_sweep", s);
      if (!(v > 0 && v <= 1)) throw Error(ErrorCode::kConfigInvalid, "nsqip_sweep: " + s + " outside (0, 1]");
      c.nsqip_sweep.push_back(v);
    }
  }
  c.min_n = r.get_uint("min_n", c.min_n, 2, 1'000'000'000);
  c.bootstrap_replicates = r.get_uint("bootstrap_replicates", c.bootstrap_replicates, 1, 1'000'000);
  c.include_ibs = r.get_bool("include_ibs", c.include_ibs);
  if (r.has("seed")) c.seed = parse_seed("seed", r.get_string("seed", ""));
  c.threads = r.get_uint("threads", c.threads, 1, 256);
  for (const auto& [outcome, value] : r.take_prefixed("override.")) {
    if (outcome != "*" && std::find(known_outcomes.begin(), known_outcomes.end(), outcome) == known_outcomes.end()) {
      throw Error(ErrorCode::kConfigInvalid, "override." + outcome + ": unknown outcome");
    }
    for (const auto& item : io::KeyValueReader({{"v", value}}).get_list("v", {})) {
      const auto key = bodycomp::parse_column_name(item);
      if (!key) throw Error(ErrorCode::kConfigInvalid, "override." + outcome + ": '" + item + "' is not metric@LEVEL");
      c.overrides.push_back({outcome, key->metric, key->level});
    }
  }
  r.finish();
  return c;
}

RunConfig load_run_config(const io::fs::path& path) {
  return parse_run_config(io::read_text(path), path.parent_path());
}

void apply_seed_overrides(RunConfig& config, std::optional<std::uint64_t> cli_seed) {
  if (cli_seed) {
    config.seed = *cli_seed;
    return;
  }
  if (const char* env = std::getenv("MORPHORISK_SEED"); env && *env) {
    config.seed = parse_seed("MORPHORISK_SEED", env);
  }
}

}  // namespace morphorisk::cli
