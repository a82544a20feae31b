#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "morphorisk/bodycomp.hpp"
#include "morphorisk/cli.hpp"
#include "morphorisk/error.hpp"
#include "morphorisk/parallel.hpp"
#include "morphorisk/random.hpp"
#include "morphorisk/svg.hpp"

namespace morphorisk::cli {

using namespace pipeline;
using io::Cell;
using io::Table;

namespace {

constexpr std::string_view kVersion = "0.1.0";
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Stage streams for derive_seed.
enum SeedStream : std::uint64_t { kEvaluateStream = 4, kKmStream = 5 };

struct Files {
  static constexpr const char* scores = "scores.csv";
  static constexpr const char* norm_stats = "norm_stats.csv";
  static constexpr const char* screen = "screen.csv";
  static constexpr const char* selection = "selection.csv";
  static constexpr const char* selected = "selected.csv";
  static constexpr const char* models = "models.json";
  static constexpr const char* model_cards = "model_cards.txt";
  static constexpr const char* coefficients = "coefficients.csv";
  static constexpr const char* elimination = "elimination.csv";
  static constexpr const char* evaluation = "evaluation.csv";
  static constexpr const char* comparisons = "comparisons.csv";
  static constexpr const char* km = "km.csv";
  static constexpr const char* km_logrank = "km_logrank.csv";
  static constexpr const char* subgroup = "subgroup.csv";
  static constexpr const char* sweep = "nsqip_sweep.csv";
  static constexpr const char* report = "report.md";
};

Cell num(double v) { return Cell(v); }
Cell num(std::optional<double> v) { return v ? Cell(*v) : Cell(); }
Cell count(std::size_t v) { return Cell(static_cast<long long>(v)); }
// Hand-off files keep full precision.
Cell exact(double v) { return Cell(std::isfinite(v) ? io::format_exact(v) : io::format_g6(v)); }

double parse_exact(const std::string& s) {
  if (s.empty() || s == "nan") return kNan;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "'" + s + "' is not a number");
  }
  return v;
}

struct Manifest {
  Table table{{"scope", "item", "error"}, {}};
  void add(const std::string& scope, const std::string& item, const std::string& error) {
    table.add({scope, item, error});
  }
  std::size_t size() const { return table.rows.size(); }
};

class Stage {
 public:
  Stage(const RunConfig& config, std::string name) : config_(config) { result_.command = std::move(name); }

  io::fs::path path(const std::string& file) const { return config_.output_dir / file; }

  void require(const std::string& file, const std::string& producer) const {
    if (!io::fs::exists(path(file))) {
      throw Error(ErrorCode::kMissingUpstream, file + " not found in " + config_.output_dir.string() + "; run `" +
                                                   producer + "` first");
    }
  }

  void write(const std::string& file, std::string_view text) {
    io::write_text(path(file), text);
    result_.outputs.push_back(path(file));
  }
  void write(const std::string& file, const Table& table) { write(file, io::format_table(table)); }

  Manifest manifest;

  CommandResult finish() {
    write(result_.command + "_errors.csv", manifest.table);
    result_.errors = manifest.size();
    return result_;
  }

 private:
  const RunConfig& config_;
  CommandResult result_;
};

struct Loaded {
  io::CohortTable cohort;
  AnalysisData all;
};

Loaded load_data(const RunConfig& config, const Stage& stage) {
  stage.require(Files::scores, "extract");
  Loaded l;
  l.cohort = io::read_cohort(config.cohort);
  l.all = make_analysis_data(l.cohort, io::read_score_table(stage.path(Files::scores)));
  return l;
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return s;
}

std::optional<ScoreKey> key_of(const std::string& metric, const std::string& level) {
  const auto l = bodycomp::parse_level(level);
  if (!l) return std::nullopt;
  return ScoreKey{metric, *l};
}

std::string level_text(LevelId l) { return std::string(bodycomp::level_name(l)); }

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- extract ---------------------------------------------------------------------------

CommandResult cmd_extract(const RunConfig& config) {
  Stage stage(config, "extract");
  const auto cohort = io::read_cohort(config.cohort);
  const auto& records = cohort.records;
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.patient_id);

  if (config.scores_input) {
    const auto supplied = io::read_score_table(*config.scores_input);
    std::map<std::string, std::size_t> row;
    for (std::size_t i = 0; i < supplied.patient_ids.size(); ++i) row.emplace(supplied.patient_ids[i], i);
    io::ScoreTable out;
    out.keys = supplied.keys;
    for (const auto& id : ids) {
      out.patient_ids.push_back(id);
      auto it = row.find(id);
      if (it == row.end()) {
        stage.manifest.add("patient", id, "no row in the supplied score table");
        out.rows.emplace_back(out.keys.size());
      } else {
        out.rows.push_back(supplied.rows[it->second]);
      }
    }
    stage.write(Files::scores, io::format_score_table(out));
    stage.write(Files::norm_stats, io::format_norm_stats(bodycomp::CohortNormStats("supplied score table")));
    return stage.finish();
  }

  std::vector<bodycomp::ScoreVector> raw(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), config.threads, [&](std::size_t i) {
    const auto& p = records[i];
    try {
      if (p.mask_path.empty()) throw Error(ErrorCode::kIoError, "no mask_path");
      const auto vol = io::read_mvol(config.masks_dir / p.mask_path);
      const auto vmap =
          io::read_vertebral_map(config.maps_dir / (p.patient_id + ".csv"), vol.z_increases_toward_head());
      raw[i] = bodycomp::compute_raw_catalog(vol, vmap, p.demographics());
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<bodycomp::ReferenceSubject> reference;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (errors[i].empty() && records[i].cohort == "development") reference.push_back({&raw[i], records[i].sex});
  }
  const auto stats =
      bodycomp::fit_norm_stats(reference, "development cohort, " + std::to_string(reference.size()) + " patients");

  std::vector<bodycomp::ScoreVector> full(records.size());
  parallel_for(records.size(), config.threads, [&](std::size_t i) {
    if (!errors[i].empty()) return;
    try {
      full[i] = raw[i];
      full[i].merge(bodycomp::sex_normalize(raw[i], records[i].demographics(), stats));
    } catch (const Error& e) {
      errors[i] = e.what();
      full[i] = {};
    }
  });
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!errors[i].empty()) stage.manifest.add("patient", records[i].patient_id, errors[i]);
  }
  stage.write(Files::scores, io::format_score_table(io::make_score_table(ids, full)));
  stage.write(Files::norm_stats, io::format_norm_stats(stats));
  return stage.finish();
}

// ---- screen -------------------------------------------------------------------------------

namespace {

const std::vector<std::string> kScreenHeader = {"outcome", "metric",    "level", "n",   "events",
                                                "excluded", "odds_ratio", "or_lower", "or_upper", "auc",
                                                "p",        "status",    "detail"};

std::string screen_heatmap(const std::string& outcome, const std::vector<ScreenRow>& rows) {
  std::vector<std::string> metrics;
  for (const auto& r : rows)
    if (std::find(metrics.begin(), metrics.end(), r.key.metric) == metrics.end()) metrics.push_back(r.key.metric);
  std::vector<std::string> levels;
  for (auto l : bodycomp::kAllLevels) levels.push_back(level_text(l));
  std::vector<std::vector<std::optional<double>>> values(metrics.size(),
                                                         std::vector<std::optional<double>>(levels.size()));
  for (const auto& r : rows) {
    if (r.unstable()) continue;
    const auto m = static_cast<std::size_t>(std::find(metrics.begin(), metrics.end(), r.key.metric) - metrics.begin());
    const auto l = static_cast<std::size_t>(
        std::find(bodycomp::kAllLevels.begin(), bodycomp::kAllLevels.end(), r.key.level) - bodycomp::kAllLevels.begin());
    values[m][l] = r.auc;
  }
  return svg::heatmap("Univariate AUC by level: " + outcome, metrics, levels, values, 0.5, 0.8);
}

}  // namespace

CommandResult cmd_screen(const RunConfig& config) {
  Stage stage(config, "screen");
  const auto data = load_data(config, stage);
  const auto dev = cohort_subset(data.all, data.cohort, "development");
  Table t{kScreenHeader, {}};
  ScreenOptions opts{config.min_n, config.threads};
  for (const auto& outcome : config.outcomes) {
    std::vector<ScreenRow> rows;
    try {
      rows = univariate_screen(dev, outcome, dev.score_keys, opts);
    } catch (const Error& e) {
      stage.manifest.add("outcome", outcome, std::string(e.what()) + "; screen skipped");
      continue;
    }
    for (const auto& r : rows) {
      t.add({outcome, r.key.metric, level_text(r.key.level), count(r.n), count(r.events), count(r.excluded),
             exact(r.odds_ratio), exact(r.or_lower), exact(r.or_upper), exact(r.auc), exact(r.p),
             std::string(r.unstable() ? "unstable" : "ok"), r.detail});
    }
    stage.write("screen_heatmap_" + file_safe(outcome) + ".svg", screen_heatmap(outcome, rows));
  }
  stage.write(Files::screen, t);
  return stage.finish();
}

// ---- select -------------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::vector<ScreenRow>>> read_screen(const io::fs::path& path) {
  const auto csv = io::parse_csv(io::read_text(path));
  if (csv.empty() || csv.front() != kScreenHeader) {
    throw Error(ErrorCode::kSchemaMismatch, path.filename().string() + ": unexpected header");
  }
  std::vector<std::pair<std::string, std::vector<ScreenRow>>> out;
  for (std::size_t i = 1; i < csv.size(); ++i) {
    const auto& f = csv[i];
    if (f.size() != kScreenHeader.size()) {
      throw Error(ErrorCode::kSchemaMismatch, "screen row " + std::to_string(i) + ": wrong field count");
    }
    const auto key = key_of(f[1], f[2]);
    if (!key) throw Error(ErrorCode::kSchemaMismatch, "screen row " + std::to_string(i) + ": bad level " + f[2]);
    ScreenRow r;
    r.outcome = f[0];
    r.key = *key;
    r.n = static_cast<std::size_t>(parse_exact(f[3]));
    r.events = static_cast<std::size_t>(parse_exact(f[4]));
    r.excluded = static_cast<std::size_t>(parse_exact(f[5]));
    r.odds_ratio = parse_exact(f[6]);
    r.or_lower = parse_exact(f[7]);
    r.or_upper = parse_exact(f[8]);
    r.auc = parse_exact(f[9]);
    r.p = parse_exact(f[10]);
    r.reason = f[11] == "unstable" ? DropReason::kUnstable : DropReason::kNone;
    r.detail = f[12];
    if (out.empty() || out.back().first != r.outcome) out.emplace_back(r.outcome, std::vector<ScreenRow>{});
    out.back().second.push_back(std::move(r));
  }
  return out;
}

}  // namespace

CommandResult cmd_select(const RunConfig& config) {
  Stage stage(config, "select");
  stage.require(Files::screen, "screen");
  const auto data = load_data(config, stage);
  const auto dev = cohort_subset(data.all, data.cohort, "development");
  SelectionOptions opts;
  opts.screen = {config.min_n, config.threads};
  opts.corr_threshold = config.corr_threshold;
  opts.adjust = {config.retain_p, config.confounders};
  opts.overrides = config.overrides;

  std::vector<std::string> header = {"outcome", "metric", "level", "auc", "p", "adjusted_p", "retained", "reason",
                                     "detail"};
  for (const auto& c : config.confounders) {
    header.push_back(c + "_p");
    header.push_back(c + "_association");
  }
  Table sel{header, {}};
  Table chosen{{"outcome", "selected"}, {}};
  for (auto& [outcome, rows] : read_screen(stage.path(Files::screen))) {
    SelectionResult result;
    try {
      result = select_from_screen(dev, outcome, std::move(rows), opts);
    } catch (const Error& e) {
      stage.manifest.add("outcome", outcome, e.what());
      continue;
    }
    for (const auto& r : result.candidates) {
      std::vector<Cell> row = {outcome,
                               r.key.metric,
                               level_text(r.key.level),
                               num(r.auc),
                               num(r.p),
                               num(r.adjusted_p),
                               std::string(r.retained ? "yes" : "no"),
                               std::string(drop_reason_name(r.reason)),
                               r.detail};
      for (const auto& c : config.confounders) {
        auto it = std::find_if(r.confounder_association.begin(), r.confounder_association.end(),
                               [&](const ConfounderAssociation& a) { return a.confounder == c; });
        if (it == r.confounder_association.end()) {
          row.insert(row.end(), {Cell(), Cell()});
        } else {
          row.insert(row.end(), {num(it->p), it->strength});
        }
      }
      sel.add(std::move(row));
    }
    std::string keys;
    for (const auto& k : result.selected) keys += (keys.empty() ? "" : ";") + bodycomp::column_name(k);
    chosen.add({outcome, keys});
  }
  stage.write(Files::selection, sel);
  stage.write(Files::selected, chosen);
  return stage.finish();
}

// ---- fit ---------------------------------------------------------------------------------

namespace {

std::string model_card(const FittedModel& m) {
  std::string out = "== " + m.spec.outcome + " / " + std::string(variant_name(m.spec.variant)) + " (" +
                    std::string(family_name(m.spec.family)) + ")\n";
  out += "status: " + m.status + "\n";
  std::string cands;
  for (const auto& t : m.spec.candidates) cands += (cands.empty() ? "" : ", ") + t.name;
  out += "candidates: " + (cands.empty() ? std::string("(none)") : cands) + "\n";
  if (m.buildable) {
    out += "complete cases: " + std::to_string(m.n) + " (events " + std::to_string(m.events) + ", excluded " +
           std::to_string(m.excluded) + ")\n";
  }
  if (m.low_events_per_variable) out += "warning: fewer than 5 events per candidate column\n";
  for (const auto& s : m.trace) {
    out += "eliminated " + s.term + " (" + s.test + " p = " + io::format_g6(s.p) + "), " +
           std::to_string(s.remaining) + " remaining\n";
  }
  if (!m.ok()) return out + "\n";
  const std::string ratio = m.spec.family == Family::kCox ? "HR" : "OR";
  Table t{{"column", "beta", "se", ratio, "lower_95", "upper_95", "p"}, {}};
  for (const auto& e : m.estimates) t.add({e.column, num(e.beta), num(e.se), num(e.ratio), num(e.lower), num(e.upper), num(e.p)});
  return out + io::format_table(t) + "\n";
}

std::vector<std::pair<std::string, std::vector<ScoreKey>>> read_selected(const io::fs::path& path) {
  const auto csv = io::parse_csv(io::read_text(path));
  if (csv.empty() || csv.front() != std::vector<std::string>{"outcome", "selected"}) {
    throw Error(ErrorCode::kSchemaMismatch, path.filename().string() + ": unexpected header");
  }
  std::vector<std::pair<std::string, std::vector<ScoreKey>>> out;
  for (std::size_t i = 1; i < csv.size(); ++i) {
    if (csv[i].size() != 2) throw Error(ErrorCode::kSchemaMismatch, "selected row " + std::to_string(i));
    std::vector<ScoreKey> keys;
    std::string_view s = csv[i][1];
    while (!s.empty()) {
      const auto cut = s.find(';');
      const auto item = s.substr(0, cut);
      const auto key = bodycomp::parse_column_name(item);
      if (!key) throw Error(ErrorCode::kSchemaMismatch, "selected: bad column '" + std::string(item) + "'");
      keys.push_back(*key);
      s = cut == std::string_view::npos ? std::string_view{} : s.substr(cut + 1);
    }
    out.emplace_back(csv[i][0], std::move(keys));
  }
  return out;
}

}  // namespace

CommandResult cmd_fit(const RunConfig& config) {
  Stage stage(config, "fit");
  stage.require(Files::selected, "select");
  const auto data = load_data(config, stage);
  const auto dev = cohort_subset(data.all, data.cohort, "development");
  ModelStore store;
  std::string cards;
  Table coef{{"outcome", "variant", "column", "beta", "se", "ratio", "lower_95", "upper_95", "p"}, {}};
  Table trace{{"outcome", "variant", "step", "term", "p", "test", "remaining"}, {}};
  for (const auto& [outcome, keys] : read_selected(stage.path(Files::selected))) {
    auto suite = build_model_suite(outcome, keys, dev, config.confounders, {config.eliminate_p});
    for (auto it = suite.begin(); it != suite.end();) {
      const bool wanted = std::find(config.variants.begin(), config.variants.end(), it->first) != config.variants.end();
      it = wanted ? std::next(it) : suite.erase(it);
    }
    for (const auto& [variant, m] : suite) {
      const std::string vname(variant_name(variant));
      cards += model_card(m);
      if (m.buildable && !m.ok()) stage.manifest.add("model", outcome + "/" + vname, m.status);
      for (const auto& e : m.estimates) {
        coef.add({outcome, vname, e.column, num(e.beta), num(e.se), num(e.ratio), num(e.lower), num(e.upper), num(e.p)});
      }
      for (std::size_t k = 0; k < m.trace.size(); ++k) {
        const auto& s = m.trace[k];
        trace.add({outcome, vname, count(k + 1), s.term, num(s.p), s.test, count(s.remaining)});
      }
    }
    store[outcome] = std::move(suite);
  }
  stage.write(Files::models, format_models(store));
  stage.write(Files::model_cards, cards);
  stage.write(Files::coefficients, coef);
  stage.write(Files::elimination, trace);
  return stage.finish();
}

// ---- evaluate ------------------------------------------------------------------------------

CommandResult cmd_evaluate(const RunConfig& config) {
  Stage stage(config, "evaluate");
  stage.require(Files::models, "fit");
  const auto data = load_data(config, stage);
  const auto validation = cohort_subset(data.all, data.cohort, "validation");
  const auto store = parse_models(io::read_text(stage.path(Files::models)));
  Table ev{{"outcome", "variant", "metric", "n", "point", "lower_95", "upper_95", "replicates", "redraws", "error"}, {}};
  Table cmp{{"outcome", "model_a", "model_b", "metric", "n", "estimate_a", "estimate_b", "difference", "diff_lower_95",
             "diff_upper_95", "p_two_sided", "p_one_sided", "error"},
            {}};
  std::uint64_t index = 0;
  for (const auto& [outcome, suite] : store) {
    EvaluationOptions opts;
    opts.replicates = config.bootstrap_replicates;
    opts.seed = derive_seed(derive_seed(config.seed, kEvaluateStream), index++);
    opts.threads = config.threads;
    opts.include_ibs = config.include_ibs;
    const auto result = evaluate_suite(suite, validation, opts);
    std::vector<svg::Bar> bars;
    for (const auto& m : result.metrics) {
      const std::string vname(variant_name(m.variant));
      const auto& model = suite.at(m.variant);
      if (!m.error.empty() && model.ok()) stage.manifest.add("metric", outcome + "/" + vname + "/" + m.metric, m.error);
      if (m.result) {
        ev.add({outcome, vname, m.metric, count(m.n), num(m.result->point), num(m.result->lower),
                num(m.result->upper), count(m.result->replicates), count(m.result->redraws), std::string()});
      } else {
        ev.add({outcome, vname, m.metric, count(m.n), Cell(), Cell(), Cell(), Cell(), Cell(), m.error});
      }
      if (m.metric == "C-index" || m.metric == "AUC") {
        svg::Bar b{vname, {}, {}, {}};
        if (m.result) {
          b.point = m.result->point;
          b.lower = m.result->lower;
          b.upper = m.result->upper;
        }
        bars.push_back(b);
      }
    }
    for (const auto& c : result.comparisons) {
      const std::string a(variant_name(c.a)), b(variant_name(c.b));
      if (c.result) {
        const auto& r = *c.result;
        cmp.add({outcome, a, b, r.metric, count(c.n), num(r.estimate_a), num(r.estimate_b), num(r.difference),
                 num(r.diff_lower), num(r.diff_upper), num(r.p_two_sided), num(r.p_one_sided), std::string()});
      } else {
        if (suite.at(c.a).ok() && suite.at(c.b).ok()) stage.manifest.add("comparison", outcome + "/" + a + " vs " + b, c.error);
        cmp.add({outcome, a, b, Cell(), count(c.n), Cell(), Cell(), Cell(), Cell(), Cell(), Cell(), Cell(), c.error});
      }
    }
    const bool cox = !suite.empty() && suite.begin()->second.spec.family == Family::kCox;
    stage.write("evaluation_" + file_safe(outcome) + ".svg",
                svg::bar_chart("Validation " + std::string(cox ? "C-index" : "AUC") + ": " + outcome,
                               cox ? "C-index" : "AUC", bars, 0.4, 1.0));
  }
  stage.write(Files::evaluation, ev);
  stage.write(Files::comparisons, cmp);
  return stage.finish();
}

// ---- km -----------------------------------------------------------------------------------

CommandResult cmd_km(const RunConfig& config) {
  Stage stage(config, "km");
  stage.require(Files::models, "fit");
  const auto data = load_data(config, stage);
  const auto validation = cohort_subset(data.all, data.cohort, "validation");
  const auto store = parse_models(io::read_text(stage.path(Files::models)));
  Table km{{"outcome", "analysis", "stratum", "n", "events", "survival_at_horizon", "score_cut", "risk_cut"}, {}};
  Table lr{{"outcome", "analysis", "comparison", "chi_squared", "df", "p"}, {}};
  Table sub{{"outcome", "subgroup", "n", "events", "c_img_nsqip", "c_nsqip", "difference", "diff_lower_95",
             "diff_upper_95", "p_two_sided", "error"},
            {}};
  Table sweep{{"outcome", "threshold", "n", "c_img_nsqip", "c_nsqip"}, {}};

  std::uint64_t index = 0;
  for (const auto& [outcome, suite] : store) {
    if (!is_mortality_outcome(outcome)) continue;
    const auto seed = derive_seed(derive_seed(config.seed, kKmStream), index++);
    const double horizon = outcome_horizon(outcome);
    const auto surv = validation.survival(horizon);
    auto img = suite.find(Variant::kImgOnly);
    if (img == suite.end() || !img->second.ok()) {
      stage.manifest.add("strata", outcome, "IMG-only model unavailable; no image score to stratify");
    } else {
      const auto score = model_linear_predictor(img->second, validation);
      for (const auto& [analysis, thr] :
           std::vector<std::pair<std::string, std::optional<double>>>{{"median", std::nullopt},
                                                                      {"absolute", config.nsqip_threshold}}) {
        const auto st = stratify_km(score, validation.nsqip, surv, thr);
        if (st.degenerate) stage.manifest.add("strata", outcome + "/" + analysis, "DegenerateGroups: " + st.note);
        std::vector<svg::StepSeries> curves;
        for (const auto& s : st.strata) {
          const auto sub_surv = surv.select(s.rows);
          km.add({outcome, analysis, s.label, count(s.rows.size()), count(sub_surv.event_count()),
                  s.km ? num(s.km->at(horizon)) : Cell(), num(st.score_cut), num(st.nsqip_cut)});
          if (s.km) curves.push_back({s.label, *s.km});
        }
        if (st.overall) {
          lr.add({outcome, analysis, std::string("overall"), num(st.overall->chi_squared),
                  Cell(static_cast<long long>(st.overall->df)), num(st.overall->p)});
        }
        for (const auto& [a, b, p] : st.pairwise) {
          lr.add({outcome, analysis, st.strata[a].label + " vs " + st.strata[b].label, Cell(), Cell(1LL), num(p)});
        }
        stage.write("km_" + file_safe(outcome) + "_" + analysis + ".svg",
                    svg::km_plot("Kaplan-Meier by image score and risk (" + analysis + "): " + outcome, curves,
                                 horizon));
      }
    }
    auto both = suite.find(Variant::kImgNsqip), base = suite.find(Variant::kNsqipOnly);
    if (both == suite.end() || base == suite.end() || !both->second.ok() || !base->second.ok()) {
      stage.manifest.add("subgroup", outcome, "IMG+NSQIP or NSQIP-only model unavailable");
      continue;
    }
    metrics::BootstrapOptions bo;
    bo.replicates = config.bootstrap_replicates;
    bo.seed = seed;
    bo.threads = config.threads;
    const auto se = nsqip_subgroup_eval(both->second, base->second, validation, config.nsqip_threshold,
                                        config.nsqip_sweep, bo);
    for (const auto* cell : {&se.low, &se.high}) {
      if (cell->c_index) {
        const auto& r = *cell->c_index;
        sub.add({outcome, cell->subgroup, count(cell->n), count(cell->events), num(r.estimate_a), num(r.estimate_b),
                 num(r.difference), num(r.diff_lower), num(r.diff_upper), num(r.p_two_sided), std::string()});
      } else {
        stage.manifest.add("subgroup", outcome + "/" + cell->subgroup, cell->error);
        sub.add({outcome, cell->subgroup, count(cell->n), count(cell->events), Cell(), Cell(), Cell(), Cell(), Cell(),
                 Cell(), cell->error});
      }
    }
    std::vector<double> xs;
    svg::LineSeries a{"IMG+NSQIP", {}}, b{"NSQIP-only", {}};
    for (const auto& pt : se.sweep) {
      sweep.add({outcome, num(pt.threshold), count(pt.n), num(pt.c_img_nsqip), num(pt.c_nsqip)});
      xs.push_back(pt.threshold);
      a.y.push_back(pt.c_img_nsqip);
      b.y.push_back(pt.c_nsqip);
    }
    stage.write("nsqip_sweep_" + file_safe(outcome) + ".svg",
                svg::line_plot("C-index among patients below a risk threshold: " + outcome, "risk threshold",
                               "C-index", xs, {a, b}));
  }
  stage.write(Files::km, km);
  stage.write(Files::km_logrank, lr);
  stage.write(Files::subgroup, sub);
  stage.write(Files::sweep, sweep);
  return stage.finish();
}

// ---- report --------------------------------------------------------------------------------

CommandResult cmd_report(const RunConfig& config) {
  Stage stage(config, "report");
  const std::vector<std::pair<const char*, const char*>> inputs = {
      {Files::scores, "extract"},          {Files::screen, "screen"},        {Files::selection, "select"},
      {Files::models, "fit"},              {Files::evaluation, "evaluate"}, {Files::km, "km"}};
  for (const auto& [file, producer] : inputs) stage.require(file, producer);

  std::string out = "# morphorisk report\n\n## Provenance\n\n";
  out += "- tool: morphorisk " + std::string(kVersion) + "\n";
  out += "- seed: " + std::to_string(config.seed) + "\n";
  out += "- worker threads: not recorded (results do not depend on them)\n\n";
  out += "Configuration:\n\n```\n";
  for (const auto& [k, v] : config.entries) {
    if (k == "seed" || k == "threads") continue;
    out += k + " = " + v + "\n";
  }
  out += "```\n\n## Stage outputs\n\n";

  std::vector<std::string> files;
  for (const auto& entry : io::fs::directory_iterator(config.output_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name != Files::report && name != "report_errors.csv") files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  Table sums{{"file", "bytes", "fnv1a64"}, {}};
  std::size_t upstream_errors = 0;
  for (const auto& f : files) {
    const auto bytes = io::read_text(stage.path(f));
    sums.add({f, count(bytes.size()), fnv1a_hex(bytes)});
    if (f.size() > 11 && f.ends_with("_errors.csv")) {
      upstream_errors += static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n')) - 1;
    }
  }
  out += "```\n" + io::format_table(sums) + "```\n\n";
  out += "Errors recorded by earlier stages: " + std::to_string(upstream_errors) + "\n\n";

  const std::vector<std::pair<std::string, const char*>> sections = {
      {"Selection", Files::selection},           {"Model cards", Files::model_cards},
      {"Validation metrics", Files::evaluation}, {"Paired comparisons", Files::comparisons},
      {"Risk strata", Files::km},                {"Log-rank tests", Files::km_logrank},
      {"Risk subgroups", Files::subgroup},       {"Risk threshold sweep", Files::sweep}};
  for (const auto& [title, file] : sections) {
    out += "## " + title + "\n\n";
    if (!io::fs::exists(stage.path(file))) {
      out += "(" + std::string(file) + " not produced)\n\n";
      continue;
    }
    out += "```\n" + io::read_text(stage.path(file)) + "```\n\n";
  }
  for (const auto& name : stage_names()) {
    const auto f = name + "_errors.csv";
    if (name == "report" || !io::fs::exists(stage.path(f))) continue;
    const auto text = io::read_text(stage.path(f));
    if (std::count(text.begin(), text.end(), '\n') > 1) out += "## Errors: " + name + "\n\n```\n" + text + "```\n\n";
  }
  stage.write(Files::report, out);
  return stage.finish();
}

// ---- dispatch -------------------------------------------------------------------------------

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"extract", "screen", "select", "fit", "evaluate", "km", "report"};
  return names;
}

CommandResult run_stage(const std::string& name, const RunConfig& config) {
  if (name == "extract") return cmd_extract(config);
  if (name == "screen") return cmd_screen(config);
  if (name == "select") return cmd_select(config);
  if (name == "fit") return cmd_fit(config);
  if (name == "evaluate") return cmd_evaluate(config);
  if (name == "km") return cmd_km(config);
  if (name == "report") return cmd_report(config);
  throw Error(ErrorCode::kInvalidArgument, "unknown command '" + name + "'");
}

}  // namespace morphorisk::cli
