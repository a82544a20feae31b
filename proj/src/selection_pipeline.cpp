#include "morphorisk/selection_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "morphorisk/error.hpp"
#include "morphorisk/parallel.hpp"
#include "morphorisk/random.hpp"

namespace morphorisk::pipeline {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double logit_clipped(double r) {
  const double c = std::clamp(r, 1e-6, 1 - 1e-6);
  return std::log(c / (1 - c));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string short_error(const Error& e) { return e.what(); }

}  // namespace

std::vector<std::string> default_outcomes() {
  std::vector<std::string> out = {std::string(kOneYearMortality)};
  for (auto o : io::kBinaryOutcomes) out.emplace_back(o);
  return out;
}

bool is_mortality_outcome(std::string_view outcome) {
  return outcome == kOneYearMortality || outcome == "mortality";
}

double outcome_horizon(std::string_view outcome) { return outcome == "mortality" ? 30.0 : io::kOneYearHorizon; }

// ---- analysis data -------------------------------------------------------------------

const std::vector<bodycomp::Score>& AnalysisData::score(const ScoreKey& key) const {
  auto it = std::find(score_keys.begin(), score_keys.end(), key);
  if (it == score_keys.end()) throw Error(ErrorCode::kInvalidArgument, "no score column " + bodycomp::column_name(key));
  return score_columns[static_cast<std::size_t>(it - score_keys.begin())];
}

bool AnalysisData::has_score(const ScoreKey& key) const {
  return std::find(score_keys.begin(), score_keys.end(), key) != score_keys.end();
}

const std::vector<std::optional<int>>& AnalysisData::outcome(const std::string& name) const {
  auto it = binary.find(name);
  if (it == binary.end()) throw Error(ErrorCode::kInvalidArgument, "unknown outcome '" + name + "'");
  return it->second;
}

stats::SurvivalData AnalysisData::survival(double horizon) const {
  stats::SurvivalData s;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto d = io::derive_outcome(vital[i], death_day[i], last_followup[i], horizon);
    s.time.push_back(d.survival_time_days);
    s.event.push_back(d.event);
  }
  return s;
}

AnalysisData AnalysisData::select(std::span<const std::size_t> rows) const {
  AnalysisData out;
  auto pick = [&](const auto& src, auto& dst) {
    dst.clear();
    dst.reserve(rows.size());
    for (std::size_t r : rows) dst.push_back(src[r]);
  };
  pick(ids, out.ids);
  pick(sex, out.sex);
  for (const auto& [k, v] : confounders) pick(v, out.confounders[k]);
  for (const auto& [k, v] : binary) pick(v, out.binary[k]);
  pick(vital, out.vital);
  pick(death_day, out.death_day);
  pick(last_followup, out.last_followup);
  pick(nsqip, out.nsqip);
  out.score_keys = score_keys;
  out.score_columns.resize(score_columns.size());
  for (std::size_t j = 0; j < score_columns.size(); ++j) pick(score_columns[j], out.score_columns[j]);
  return out;
}

AnalysisData make_analysis_data(const io::CohortTable& cohort, const io::ScoreTable& scores) {
  std::map<std::string, std::size_t> score_row;
  for (std::size_t i = 0; i < scores.patient_ids.size(); ++i) {
    if (!score_row.emplace(scores.patient_ids[i], i).second) {
      throw Error(ErrorCode::kSchemaMismatch, "duplicate patient_id '" + scores.patient_ids[i] + "' in score table");
    }
  }
  AnalysisData d;
  d.score_keys = scores.keys;
  d.score_columns.assign(scores.keys.size(), {});
  for (const auto& c : kConfounders) d.confounders[c];
  for (auto o : io::kBinaryOutcomes) d.binary[std::string(o)];
  d.binary[std::string(kOneYearMortality)];
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& p = cohort.records[i];
    auto it = score_row.find(p.patient_id);
    if (it == score_row.end()) {
      throw Error(ErrorCode::kSchemaMismatch, "patient_id '" + p.patient_id + "' has no score row");
    }
    d.ids.push_back(p.patient_id);
    d.sex.push_back(p.sex);
    d.confounders["age_cat"].push_back(p.age_cat);
    d.confounders["bmi_cat"].push_back(p.bmi_cat.empty() ? std::nullopt : std::optional<std::string>(p.bmi_cat));
    d.confounders["smoker"].push_back(p.smoker ? "1" : "0");
    d.confounders["functional_status"].push_back(std::string(io::functional_status_name(p.functional_status)));
    d.confounders["asa_class"].push_back(std::to_string(p.asa_class));
    for (std::size_t k = 0; k < io::kBinaryOutcomes.size(); ++k) {
      d.binary[std::string(io::kBinaryOutcomes[k])].push_back(p.outcomes[k]);
    }
    const auto derived = cohort.outcomes.size() == cohort.records.size()
                             ? cohort.outcomes[i]
                             : io::derive_outcome(p.vital_status, p.death_day, p.last_followup_days);
    std::optional<int> one_year;
    if (derived.one_year_status == io::OneYearStatus::kDeceased) one_year = 1;
    else if (derived.one_year_status == io::OneYearStatus::kAlive) one_year = 0;
    d.binary[std::string(kOneYearMortality)].push_back(one_year);
    d.vital.push_back(p.vital_status);
    d.death_day.push_back(p.death_day);
    d.last_followup.push_back(p.last_followup_days);
    d.nsqip.push_back(p.nsqip_mortality_risk);
    const auto& row = scores.rows[it->second];
    for (std::size_t j = 0; j < scores.keys.size(); ++j) d.score_columns[j].push_back(row[j]);
  }
  return d;
}

AnalysisData cohort_subset(const AnalysisData& data, const io::CohortTable& cohort, const std::string& label) {
  std::map<std::string, const io::PatientRecord*> by_id;
  for (const auto& r : cohort.records) by_id[r.patient_id] = &r;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto it = by_id.find(data.ids[i]);
    if (it != by_id.end() && it->second->cohort == label) rows.push_back(i);
  }
  return data.select(rows);
}

// ---- screening ----------------------------------------------------------------------

std::string_view drop_reason_name(DropReason r) {
  switch (r) {
    case DropReason::kNone: return "none";
    case DropReason::kCorrelated: return "correlated";
    case DropReason::kAdjustedNs: return "adjusted_ns";
    case DropReason::kUnstable: return "unstable";
  }
  return "?";
}

namespace {

ScreenRow screen_one(const std::vector<std::optional<int>>& y, const std::vector<bodycomp::Score>& x,
                     const std::string& outcome, const ScoreKey& key, std::size_t min_n) {
  ScreenRow row;
  row.outcome = outcome;
  row.key = key;
  std::vector<double> xs;
  std::vector<int> ys;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] && x[i] && std::isfinite(*x[i])) {
      xs.push_back(*x[i]);
      ys.push_back(*y[i]);
    }
  }
  row.n = xs.size();
  row.excluded = y.size() - xs.size();
  row.events = static_cast<std::size_t>(std::count(ys.begin(), ys.end(), 1));
  auto unstable = [&](std::string why) {
    row.reason = DropReason::kUnstable;
    row.detail = std::move(why);
    row.p = kNan;
    row.auc = kNan;
    row.odds_ratio = row.or_lower = row.or_upper = kNan;
    return row;
  };
  if (row.n < min_n) return unstable("n = " + std::to_string(row.n) + " below min_n " + std::to_string(min_n));
  if (row.events == 0 || row.events == row.n) return unstable("one outcome class among complete rows");
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  if (!(sd > 0)) return unstable("constant score");
  std::vector<double> z(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) z[i] = (xs[i] - mean) / sd;
  try {
    stats::DesignBuilder b(z.size());
    b.add_numeric(bodycomp::column_name(key), z);
    const auto fit = stats::fit_logistic(b.build(), ys);
    if (!fit.converged()) return unstable(std::string(stats::fit_status_name(fit.status)) + ": " + fit.diagnostic);
    const auto ci = stats::odds_ratio_ci(fit, 0);
    row.odds_ratio = ci.ratio;
    row.or_lower = ci.lower;
    row.or_upper = ci.upper;
    row.p = fit.p(0);
    // Direction-free discrimination of the raw score: depends on ranks only,
    // so monotone transforms cannot move it through a sign flip of beta.
    const double a = metrics::auc(xs, ys);
    row.auc = std::max(a, 1.0 - a);
  } catch (const Error& e) {
    return unstable(short_error(e));
  }
  return row;
}

}  // namespace

std::vector<ScreenRow> univariate_screen(const AnalysisData& data, const std::string& outcome,
                                         std::span<const ScoreKey> keys, const ScreenOptions& options) {
  const auto& y = data.outcome(outcome);
  std::size_t pos = 0, neg = 0;
  for (const auto& v : y) {
    if (!v) continue;
    (*v ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) {
    throw Error(ErrorCode::kOneClass, "outcome '" + outcome + "' has a single class (" + std::to_string(pos) +
                                          " events, " + std::to_string(neg) + " non-events)");
  }
  std::vector<ScreenRow> rows(keys.size());
  parallel_for(keys.size(), options.threads,
               [&](std::size_t j) { rows[j] = screen_one(y, data.score(keys[j]), outcome, keys[j], options.min_n); });
  return rows;
}

// ---- level choice ---------------------------------------------------------------------

int level_preference(LevelId level) {
  static constexpr std::array<LevelId, 10> order = {LevelId::kL3,   LevelId::kL2_L3, LevelId::kL3_L4, LevelId::kL2,
                                                     LevelId::kL4,   LevelId::kL1_L2, LevelId::kL1,    LevelId::kT12_L1,
                                                     LevelId::kT12, LevelId::kVol3D};
  return static_cast<int>(std::find(order.begin(), order.end(), level) - order.begin());
}

LevelId best_level(std::span<const ScreenRow> rows, std::span<const LevelOverride> overrides) {
  const ScreenRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.unstable()) continue;
    if (!best || r.auc > best->auc ||
        (r.auc == best->auc && level_preference(r.key.level) < level_preference(best->key.level))) {
      best = &r;
    }
  }
  if (!best) {
    throw Error(ErrorCode::kAllRowsFailed,
                "every level failed for " + (rows.empty() ? std::string("<empty>") : rows.front().key.metric));
  }
  // Outcome-specific overrides beat wildcard ones.
  for (const std::string& wanted : {best->outcome, std::string("*")}) {
    for (const auto& o : overrides) {
      if (o.outcome != wanted || o.metric != best->key.metric) continue;
      for (const auto& r : rows) {
        if (r.key.level == o.level && !r.unstable()) return o.level;
      }
    }
  }
  return best->key.level;
}

// ---- pruning and adjustment --------------------------------------------------------------

double pearson_pairwise(const std::vector<bodycomp::Score>& a, const std::vector<bodycomp::Score>& b) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] && b[i]) {
      x.push_back(*a[i]);
      y.push_back(*b[i]);
    }
  }
  if (x.size() < 2) return kNan;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) return kNan;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<ScreenRow> collinearity_prune(std::vector<ScreenRow> rows, const AnalysisData& data, double threshold) {
  std::vector<ScreenRow> stable, unstable;
  for (auto& r : rows) (r.unstable() ? unstable : stable).push_back(std::move(r));
  std::sort(stable.begin(), stable.end(), [](const ScreenRow& a, const ScreenRow& b) {
    if (a.auc != b.auc) return a.auc > b.auc;
    const int pa = level_preference(a.key.level), pb = level_preference(b.key.level);
    if (pa != pb) return pa < pb;
    return a.key.metric < b.key.metric;
  });
  std::vector<const ScreenRow*> kept;
  for (auto& r : stable) {
    r.reason = DropReason::kNone;
    r.retained = false;
    for (const auto* k : kept) {
      const double corr = pearson_pairwise(data.score(r.key), data.score(k->key));
      if (std::abs(corr) > threshold) {
        r.reason = DropReason::kCorrelated;
        r.detail = bodycomp::column_name(k->key) + " (r = " + io::format_g6(corr) + ")";
        break;
      }
    }
    if (r.reason == DropReason::kNone) kept.push_back(&r);
  }
  stable.insert(stable.end(), std::make_move_iterator(unstable.begin()), std::make_move_iterator(unstable.end()));
  return stable;
}

namespace {

// Complete-case design for a candidate score plus categorical confounders.
struct AdjustDesign {
  std::vector<std::size_t> rows;
  std::vector<int> y;
  std::vector<double> x;
  std::vector<std::vector<std::string>> groups;
};

AdjustDesign adjust_rows(const ScreenRow& row, const AnalysisData& data, const std::vector<std::string>& confounders) {
  const auto& y = data.outcome(row.outcome);
  const auto& x = data.score(row.key);
  AdjustDesign d;
  d.groups.resize(confounders.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!y[i] || !x[i]) continue;
    bool complete = true;
    for (const auto& c : confounders) complete = complete && data.confounders.at(c)[i].has_value();
    if (!complete) continue;
    d.rows.push_back(i);
    d.y.push_back(*y[i]);
    d.x.push_back(*x[i]);
    for (std::size_t k = 0; k < confounders.size(); ++k) d.groups[k].push_back(*data.confounders.at(confounders[k])[i]);
  }
  return d;
}

stats::DesignMatrix confounder_design(const AdjustDesign& d, const std::vector<std::string>& confounders,
                                      const std::string* candidate) {
  stats::DesignBuilder b(d.rows.size());
  if (candidate) b.add_numeric(*candidate, d.x);
  for (std::size_t k = 0; k < confounders.size(); ++k) {
    b.add_categorical(stats::make_encoding(confounders[k], d.groups[k]), d.groups[k]);
  }
  return b.build();
}

}  // namespace

void confounder_adjust(ScreenRow& row, const AnalysisData& data, const AdjustOptions& options) {
  const auto d = adjust_rows(row, data, options.confounders);
  const std::string name = bodycomp::column_name(row.key);
  row.confounder_association.clear();
  for (std::size_t k = 0; k < options.confounders.size(); ++k) {
    ConfounderAssociation a{options.confounders[k], 1.0, "none"};
    try {
      a.p = stats::anova_oneway(d.x, d.groups[k]).p;
    } catch (const Error&) {
      a.p = 1.0;
    }
    a.strength = a.p < 0.01 ? "strong" : a.p < 0.1 ? "weak" : "none";
    row.confounder_association.push_back(a);
  }
  row.retained = false;
  try {
    const auto fit = stats::fit_logistic(confounder_design(d, options.confounders, &name), d.y);
    if (!fit.converged()) {
      row.reason = DropReason::kUnstable;
      row.detail = std::string("adjusted fit ") + stats::fit_status_name(fit.status) + ": " + fit.diagnostic;
      return;
    }
    row.adjusted_p = fit.p(static_cast<Eigen::Index>(fit.column_index(name)));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularInformation && e.code() != ErrorCode::kConstantColumn) {
      row.reason = DropReason::kUnstable;
      row.detail = "adjusted fit: " + short_error(e);
      return;
    }
    // Singular only because the candidate is a function of the confounders:
    // it carries no adjusted information.
    try {
      stats::fit_logistic(confounder_design(d, options.confounders, nullptr), d.y);
    } catch (const Error&) {
      row.reason = DropReason::kUnstable;
      row.detail = "adjusted fit: " + short_error(e);
      return;
    }
    row.adjusted_p = 1.0;
    row.detail = "aliased with confounders";
  }
  row.retained = *row.adjusted_p < options.retain_p;
  row.reason = row.retained ? DropReason::kNone : DropReason::kAdjustedNs;
}

SelectionResult select_features(const AnalysisData& development, const std::string& outcome,
                                std::span<const ScoreKey> keys, const SelectionOptions& options) {
  return select_from_screen(development, outcome, univariate_screen(development, outcome, keys, options.screen),
                            options);
}

SelectionResult select_from_screen(const AnalysisData& development, const std::string& outcome,
                                   std::vector<ScreenRow> screen, const SelectionOptions& options) {
  SelectionResult out;
  out.outcome = outcome;
  out.screen = std::move(screen);
  std::map<std::string, std::vector<ScreenRow>> by_metric;
  for (const auto& r : out.screen) by_metric[r.key.metric].push_back(r);
  std::vector<ScreenRow> chosen;
  for (auto& [metric, rows] : by_metric) {
    try {
      const LevelId level = best_level(rows, options.overrides);
      for (const auto& r : rows)
        if (r.key.level == level) chosen.push_back(r);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAllRowsFailed) throw;
    }
  }
  out.candidates = collinearity_prune(std::move(chosen), development, options.corr_threshold);
  for (auto& r : out.candidates) {
    if (r.reason != DropReason::kNone) continue;
    confounder_adjust(r, development, options.adjust);
    if (r.retained) out.selected.push_back(r.key);
  }
  return out;
}

// ---- models -------------------------------------------------------------------------------

std::string_view family_name(Family f) { return f == Family::kLogistic ? "logistic" : "cox"; }

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kImgOnly: return "IMG-only";
    case Variant::kClinOnly: return "CLIN-only";
    case Variant::kImgClin: return "IMG+CLIN";
    case Variant::kNsqipOnly: return "NSQIP-only";
    case Variant::kImgNsqip: return "IMG+NSQIP";
  }
  return "?";
}

std::vector<Variant> variants_for(std::string_view outcome) {
  std::vector<Variant> v = {Variant::kImgOnly, Variant::kClinOnly, Variant::kImgClin};
  if (is_mortality_outcome(outcome)) v.insert(v.end(), {Variant::kNsqipOnly, Variant::kImgNsqip});
  return v;
}

namespace {

// Value of a numeric term at row i.
std::optional<double> numeric_value(const Term& t, const AnalysisData& data, std::size_t i) {
  if (t.kind == TermKind::kNsqip) {
    if (!data.nsqip[i]) return std::nullopt;
    return logit_clipped(*data.nsqip[i]);
  }
  const auto& col = data.score(t.key);
  return col[i];
}

struct TermData {
  std::vector<double> numeric;
  std::vector<std::string> categorical;
};

struct ModelData {
  std::vector<std::size_t> rows;
  std::vector<int> y;
  stats::SurvivalData surv;
  std::vector<TermData> terms;
};

ModelData complete_cases(const ModelSpec& spec, const AnalysisData& data) {
  ModelData md;
  const std::vector<std::optional<int>>* y = spec.family == Family::kLogistic ? &data.outcome(spec.outcome) : nullptr;
  const auto surv = data.survival(spec.horizon);
  md.terms.resize(spec.candidates.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (y && !(*y)[i]) continue;
    bool complete = true;
    for (const auto& t : spec.candidates) {
      if (t.kind == TermKind::kConfounder) complete = complete && data.confounders.at(t.name)[i].has_value();
      else complete = complete && numeric_value(t, data, i).has_value();
    }
    if (!complete) continue;
    md.rows.push_back(i);
    if (y) md.y.push_back(*(*y)[i]);
    md.surv.time.push_back(surv.time[i]);
    md.surv.event.push_back(surv.event[i]);
    for (std::size_t k = 0; k < spec.candidates.size(); ++k) {
      const auto& t = spec.candidates[k];
      if (t.kind == TermKind::kConfounder) md.terms[k].categorical.push_back(*data.confounders.at(t.name)[i]);
      else md.terms[k].numeric.push_back(*numeric_value(t, data, i));
    }
  }
  return md;
}

stats::DesignMatrix model_design(const ModelSpec& spec, const ModelData& md, const std::vector<std::size_t>& active,
                                 const std::vector<stats::CategoricalEncoding>& enc) {
  stats::DesignBuilder b(md.rows.size());
  for (std::size_t k : active) {
    const auto& t = spec.candidates[k];
    if (t.kind == TermKind::kConfounder) b.add_categorical(enc[k], md.terms[k].categorical);
    else b.add_numeric(t.name, md.terms[k].numeric);
  }
  return b.build();
}

struct AnyFit {
  std::optional<stats::LogisticFit> logistic;
  std::optional<stats::CoxFit> cox;

  double loglik() const { return logistic ? logistic->log_likelihood : cox->log_partial_likelihood; }
  double p(std::size_t j) const {
    return logistic ? logistic->p(static_cast<Eigen::Index>(j)) : cox->p(static_cast<Eigen::Index>(j));
  }
};

AnyFit fit_any(const ModelSpec& spec, const stats::DesignMatrix& x, const ModelData& md) {
  AnyFit f;
  if (spec.family == Family::kLogistic) {
    f.logistic = stats::fit_logistic(x, md.y);
    if (!f.logistic->converged()) {
      throw Error(f.logistic->status == stats::FitStatus::kSeparation ? ErrorCode::kSeparation
                                                                       : ErrorCode::kSingularInformation,
                  std::string(stats::fit_status_name(f.logistic->status)) + ": " + f.logistic->diagnostic);
    }
  } else {
    f.cox = stats::fit_cox(x, md.surv);
    if (!f.cox->converged()) {
      throw Error(f.cox->status == stats::FitStatus::kSeparation ? ErrorCode::kSeparation
                                                                  : ErrorCode::kSingularInformation,
                  std::string(stats::fit_status_name(f.cox->status)) + ": " + f.cox->diagnostic);
    }
  }
  return f;
}

// Log-likelihood of the model without any predictors.
double null_loglik(const ModelSpec& spec, const ModelData& md) {
  if (spec.family == Family::kCox) {
    stats::DesignMatrix empty;
    empty.x = Eigen::MatrixXd(static_cast<Eigen::Index>(md.rows.size()), 0);
    return stats::cox_log_partial_likelihood(empty, md.surv, Eigen::VectorXd(0), stats::TieMethod::kEfron);
  }
  const double n = static_cast<double>(md.y.size());
  const double k = static_cast<double>(std::count(md.y.begin(), md.y.end(), 1));
  const double p = k / n;
  return k * std::log(p) + (n - k) * std::log(1 - p);
}

}  // namespace

FittedModel backward_eliminate(const ModelSpec& spec, const AnalysisData& data, const EliminationOptions& options) {
  FittedModel model;
  model.spec = spec;
  if (spec.candidates.empty()) {
    model.buildable = false;
    model.status = "not buildable: no candidate predictors";
    return model;
  }
  const ModelData md = complete_cases(spec, data);
  model.n = md.rows.size();
  model.excluded = data.size() - md.rows.size();
  model.events = spec.family == Family::kLogistic
                     ? static_cast<std::size_t>(std::count(md.y.begin(), md.y.end(), 1))
                     : md.surv.event_count();

  std::vector<stats::CategoricalEncoding> enc(spec.candidates.size());
  std::size_t columns = 0;
  for (std::size_t k = 0; k < spec.candidates.size(); ++k) {
    if (spec.candidates[k].kind == TermKind::kConfounder) {
      enc[k] = stats::make_encoding(spec.candidates[k].name, md.terms[k].categorical);
      columns += enc[k].levels.size();
    } else {
      columns += 1;
    }
  }
  model.low_events_per_variable = model.events < 5 * columns;

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < spec.candidates.size(); ++k) {
    if (spec.candidates[k].kind == TermKind::kConfounder && enc[k].levels.empty()) {
      model.trace.push_back({spec.candidates[k].name, 1.0, "constant", 0});
      continue;
    }
    active.push_back(k);
  }
  for (auto& step : model.trace) step.remaining = active.size();

  AnyFit fit;
  std::vector<double> term_p;
  try {
    if (active.empty()) throw Error(ErrorCode::kConstantColumn, "every candidate is constant on the complete cases");
    if (spec.family == Family::kLogistic && (model.events == 0 || model.events == model.n)) {
      throw Error(ErrorCode::kOneClass, "outcome '" + spec.outcome + "' has a single class on the complete cases");
    }
    if (spec.family == Family::kCox && model.events == 0) {
      throw Error(ErrorCode::kNoEvents, "no events on the complete cases");
    }
    while (true) {
      const auto x = model_design(spec, md, active, enc);
      fit = fit_any(spec, x, md);
      term_p.assign(active.size(), 1.0);
      for (std::size_t a = 0; a < active.size(); ++a) {
        const auto& block = x.term(spec.candidates[active[a]].name);
        if (block.count == 1) {
          term_p[a] = fit.p(block.first);
        } else {
          std::vector<std::size_t> rest;
          for (std::size_t b = 0; b < active.size(); ++b)
            if (b != a) rest.push_back(active[b]);
          const double reduced = rest.empty() ? null_loglik(spec, md)
                                              : fit_any(spec, model_design(spec, md, rest, enc), md).loglik();
          term_p[a] = stats::likelihood_ratio_p(fit.loglik(), reduced, static_cast<int>(block.count));
        }
      }
      if (active.size() == 1) break;
      std::size_t worst = 0;
      for (std::size_t a = 1; a < active.size(); ++a)
        if (term_p[a] > term_p[worst]) worst = a;
      if (!(term_p[worst] > options.eliminate_p)) break;
      const auto& removed = spec.candidates[active[worst]];
      const bool block = removed.kind == TermKind::kConfounder && enc[active[worst]].levels.size() > 1;
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(worst));
      model.trace.push_back({removed.name, term_p[worst], block ? "lr" : "wald", active.size()});
    }
  } catch (const Error& e) {
    throw EliminationError(e, model.trace);
  }

  for (std::size_t k : active) {
    model.terms.push_back(spec.candidates[k]);
    if (spec.candidates[k].kind == TermKind::kConfounder) model.encodings.push_back(enc[k]);
  }
  model.term_p = term_p;
  model.logistic = fit.logistic;
  model.cox = fit.cox;
  const auto& cols = fit.logistic ? fit.logistic->columns : fit.cox->columns;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto ci = fit.logistic ? stats::odds_ratio_ci(*fit.logistic, j) : stats::hazard_ratio_ci(*fit.cox, j);
    const auto idx = static_cast<Eigen::Index>(j);
    const double beta = fit.logistic ? fit.logistic->beta(idx) : fit.cox->beta(idx);
    const double se = fit.logistic ? fit.logistic->se(idx) : fit.cox->se(idx);
    model.estimates.push_back({cols[j], beta, se, ci.ratio, ci.lower, ci.upper, ci.p});
  }
  return model;
}

std::vector<std::optional<double>> model_linear_predictor(const FittedModel& model, const AnalysisData& data) {
  std::vector<std::optional<double>> out(data.size());
  if (!model.ok()) return out;
  const Eigen::VectorXd& beta = model.logistic ? model.logistic->beta : model.cox->beta;
  const double intercept = model.logistic ? model.logistic->intercept : 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double eta = intercept;
    Eigen::Index j = 0;
    std::size_t enc_index = 0;
    bool complete = true;
    for (const auto& t : model.terms) {
      if (t.kind == TermKind::kConfounder) {
        const auto& e = model.encodings[enc_index++];
        const auto& v = data.confounders.at(t.name)[i];
        if (!v) {
          complete = false;
          break;
        }
        for (const auto& level : e.levels) eta += beta(j++) * (*v == level ? 1.0 : 0.0);
      } else {
        const auto v = numeric_value(t, data, i);
        if (!v) {
          complete = false;
          break;
        }
        eta += beta(j++) * *v;
      }
    }
    if (complete) out[i] = eta;
  }
  return out;
}

std::map<Variant, FittedModel> build_model_suite(const std::string& outcome, std::span<const ScoreKey> selected,
                                                 const AnalysisData& development,
                                                 const std::vector<std::string>& confounders,
                                                 const EliminationOptions& options) {
  std::vector<Term> img, clin;
  for (const auto& k : selected) img.push_back({bodycomp::column_name(k), TermKind::kScore, k});
  for (const auto& c : confounders) clin.push_back({c, TermKind::kConfounder, {}});
  const Term nsqip{std::string(kNsqipTerm), TermKind::kNsqip, {}};

  std::map<Variant, FittedModel> suite;
  for (Variant v : variants_for(outcome)) {
    ModelSpec spec;
    spec.outcome = outcome;
    spec.family = is_mortality_outcome(outcome) ? Family::kCox : Family::kLogistic;
    spec.variant = v;
    spec.horizon = outcome_horizon(outcome);
    const bool needs_img = v == Variant::kImgOnly || v == Variant::kImgClin || v == Variant::kImgNsqip;
    if (needs_img) spec.candidates = img;
    if (v == Variant::kClinOnly || v == Variant::kImgClin) spec.candidates.insert(spec.candidates.end(), clin.begin(), clin.end());
    if (v == Variant::kNsqipOnly || v == Variant::kImgNsqip) spec.candidates.push_back(nsqip);

    FittedModel model;
    if (needs_img && img.empty()) {
      model.spec = spec;
      model.buildable = false;
      model.status = "not buildable: no image scores left after selection";
    } else {
      try {
        model = backward_eliminate(spec, development, options);
      } catch (const EliminationError& e) {
        model.spec = spec;
        model.status = std::string("error: ") + e.what();
        model.trace = e.trace();
      } catch (const Error& e) {
        model.spec = spec;
        model.status = std::string("error: ") + e.what();
      }
    }
    suite.emplace(v, std::move(model));
  }
  return suite;
}

// ---- evaluation ----------------------------------------------------------------------------

namespace {

struct Scored {
  std::vector<std::size_t> rows;
  std::vector<double> lp;
  std::vector<int> y;
  stats::SurvivalData surv;
};

// Rows where every model in `models` has a prediction (and the binary
// outcome is known for logistic models).
std::vector<std::size_t> common_rows(const std::vector<std::vector<std::optional<double>>>& lps,
                                     const std::vector<std::optional<int>>* y) {
  std::vector<std::size_t> rows;
  const std::size_t n = lps.empty() ? 0 : lps.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = !y || (*y)[i].has_value();
    for (const auto& lp : lps) ok = ok && lp[i].has_value();
    if (ok) rows.push_back(i);
  }
  return rows;
}

metrics::ResampleMetric primary_metric(const FittedModel& model, const std::vector<double>& lp,
                                       const std::vector<int>& y, const stats::SurvivalData& surv,
                                       const std::string& metric) {
  if (metric == "C-index") return metrics::harrell_c_metric(lp, surv);
  if (metric == "AUC") return metrics::auc_metric(lp, y);
  if (metric == "Brier") {
    std::vector<double> p(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) p[i] = sigmoid(lp[i]);
    return metrics::brier_metric(std::move(p), y);
  }
  if (metric == "IBS") {
    const stats::CoxFit fit = *model.cox;
    metrics::SurvivalPredictor predict = [fit, lp](std::size_t i, double t) {
      return std::exp(-fit.cumulative_hazard(t) * std::exp(lp[i]));
    };
    return metrics::ibs_metric(std::move(predict), surv, model.spec.horizon);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown metric '" + metric + "'");
}

Scored gather(const std::vector<std::size_t>& rows, const std::vector<std::optional<double>>& lp,
              const std::vector<std::optional<int>>* y, const stats::SurvivalData& surv) {
  Scored s;
  s.rows = rows;
  for (std::size_t r : rows) {
    s.lp.push_back(*lp[r]);
    if (y) s.y.push_back(*(*y)[r]);
  }
  s.surv = surv.select(rows);
  return s;
}

}  // namespace

ComparisonRow compare_models(const FittedModel& a, const FittedModel& b, const AnalysisData& data,
                             const std::string& metric, const metrics::BootstrapOptions& options) {
  ComparisonRow row;
  row.outcome = a.spec.outcome;
  row.a = a.spec.variant;
  row.b = b.spec.variant;
  if (!a.ok() || !b.ok()) {
    row.error = "model unavailable: " + (a.ok() ? b.status : a.status);
    return row;
  }
  const auto lpa = model_linear_predictor(a, data), lpb = model_linear_predictor(b, data);
  const auto* y = a.spec.family == Family::kLogistic ? &data.outcome(a.spec.outcome) : nullptr;
  const auto rows = common_rows({lpa, lpb}, y);
  row.n = rows.size();
  const auto surv = data.survival(a.spec.horizon);
  const auto sa = gather(rows, lpa, y, surv), sb = gather(rows, lpb, y, surv);
  try {
    if (rows.empty()) throw Error(ErrorCode::kNoUsablePairs, "no rows scored by both models");
    row.result = metrics::paired_bootstrap_test(metric, primary_metric(a, sa.lp, sa.y, sa.surv, metric),
                                                primary_metric(b, sb.lp, sb.y, sb.surv, metric), rows.size(),
                                                options);
  } catch (const Error& e) {
    row.error = short_error(e);
  }
  return row;
}

SuiteEvaluation evaluate_suite(const std::map<Variant, FittedModel>& suite, const AnalysisData& validation,
                               const EvaluationOptions& options) {
  SuiteEvaluation out;
  std::uint64_t slot = 0;
  auto boot = [&]() {
    metrics::BootstrapOptions o;
    o.replicates = options.replicates;
    o.threads = options.threads;
    o.seed = derive_seed(options.seed, slot++);
    return o;
  };
  for (const auto& [variant, model] : suite) {
    const bool cox = model.spec.family == Family::kCox;
    std::vector<std::string> names = cox ? std::vector<std::string>{"C-index"} : std::vector<std::string>{"AUC", "Brier"};
    if (cox && options.include_ibs) names.push_back("IBS");
    for (const auto& name : names) {
      ModelEvaluation ev;
      ev.outcome = model.spec.outcome;
      ev.variant = variant;
      ev.metric = name;
      const auto opts = boot();
      if (!model.ok()) {
        ev.error = model.status;
        out.metrics.push_back(std::move(ev));
        continue;
      }
      const auto lp = model_linear_predictor(model, validation);
      const auto* y = cox ? nullptr : &validation.outcome(model.spec.outcome);
      const auto rows = common_rows({lp}, y);
      ev.n = rows.size();
      try {
        if (rows.empty()) throw Error(ErrorCode::kNoUsablePairs, "no validation rows can be scored");
        const auto s = gather(rows, lp, y, validation.survival(model.spec.horizon));
        ev.result = metrics::bootstrap_ci(primary_metric(model, s.lp, s.y, s.surv, name), rows.size(), opts);
      } catch (const Error& e) {
        ev.error = short_error(e);
      }
      out.metrics.push_back(std::move(ev));
    }
  }
  std::vector<std::pair<Variant, Variant>> pairs = {{Variant::kImgClin, Variant::kClinOnly},
                                                    {Variant::kImgClin, Variant::kImgOnly}};
  if (suite.count(Variant::kImgNsqip) && suite.count(Variant::kNsqipOnly)) {
    pairs.emplace_back(Variant::kImgNsqip, Variant::kNsqipOnly);
  }
  for (const auto& [a, b] : pairs) {
    const auto opts = boot();
    if (!suite.count(a) || !suite.count(b)) continue;
    const auto& ma = suite.at(a);
    const std::string metric = ma.spec.family == Family::kCox ? "C-index" : "AUC";
    auto row = compare_models(ma, suite.at(b), validation, metric, opts);
    row.a = a;
    row.b = b;
    out.comparisons.push_back(std::move(row));
  }
  return out;
}

// ---- strata and subgroups -----------------------------------------------------------------

RiskStrata stratify_km(std::span<const std::optional<double>> score, std::span<const std::optional<double>> nsqip,
                       const stats::SurvivalData& surv, std::optional<double> nsqip_threshold) {
  if (score.size() != surv.size() || nsqip.size() != surv.size()) {
    throw Error(ErrorCode::kInvalidArgument, "score, risk and survival lengths differ");
  }
  RiskStrata out;
  std::vector<std::size_t> rows;
  std::vector<double> s, r;
  for (std::size_t i = 0; i < surv.size(); ++i) {
    if (score[i] && nsqip[i]) {
      rows.push_back(i);
      s.push_back(*score[i]);
      r.push_back(*nsqip[i]);
    }
  }
  out.strata = {{"low-score/low-risk", {}, {}},
                {"low-score/high-risk", {}, {}},
                {"high-score/low-risk", {}, {}},
                {"high-score/high-risk", {}, {}}};
  if (rows.empty()) {
    out.degenerate = true;
    out.note = "no rows with both score and risk";
    return out;
  }
  out.score_cut = metrics::percentile(s, 0.5);
  out.nsqip_cut = nsqip_threshold ? *nsqip_threshold : metrics::percentile(r, 0.5);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const bool high_score = s[k] > out.score_cut;
    const bool high_risk = nsqip_threshold ? r[k] >= out.nsqip_cut : r[k] > out.nsqip_cut;
    out.strata[(high_score ? 2 : 0) + (high_risk ? 1 : 0)].rows.push_back(rows[k]);
  }
  std::vector<std::size_t> nonempty;
  for (std::size_t g = 0; g < out.strata.size(); ++g) {
    auto& st = out.strata[g];
    if (st.empty()) {
      out.degenerate = true;
      out.note += (out.note.empty() ? "empty strata: " : ", ") + st.label;
      continue;
    }
    nonempty.push_back(g);
    st.km = stats::kaplan_meier(surv.select(st.rows));
  }
  if (nonempty.size() >= 2) {
    std::vector<stats::SurvivalData> groups;
    for (std::size_t g : nonempty) groups.push_back(surv.select(out.strata[g].rows));
    try {
      out.overall = stats::log_rank_test(groups);
    } catch (const Error& e) {
      out.note += (out.note.empty() ? "" : "; ") + std::string("overall log-rank: ") + e.what();
    }
    for (std::size_t a = 0; a < nonempty.size(); ++a) {
      for (std::size_t b = a + 1; b < nonempty.size(); ++b) {
        const std::array<stats::SurvivalData, 2> pair = {groups[a], groups[b]};
        double p = kNan;
        try {
          p = stats::log_rank_test(pair).p;
        } catch (const Error&) {
        }
        out.pairwise.emplace_back(nonempty[a], nonempty[b], p);
      }
    }
  }
  return out;
}

namespace {

SubgroupCell subgroup_cell(const std::string& label, const std::vector<std::size_t>& rows,
                           const std::vector<std::optional<double>>& lpa, const std::vector<std::optional<double>>& lpb,
                           const stats::SurvivalData& surv, const metrics::BootstrapOptions& options) {
  SubgroupCell cell;
  cell.subgroup = label;
  cell.n = rows.size();
  const auto sub = surv.select(rows);
  cell.events = sub.event_count();
  if (rows.empty()) {
    cell.error = "empty subgroup";
    return cell;
  }
  const auto a = gather(rows, lpa, nullptr, surv), b = gather(rows, lpb, nullptr, surv);
  try {
    cell.c_index = metrics::paired_bootstrap_test("C-index", metrics::harrell_c_metric(a.lp, a.surv),
                                                  metrics::harrell_c_metric(b.lp, b.surv), rows.size(), options);
  } catch (const Error& e) {
    cell.error = short_error(e);
  }
  return cell;
}

}  // namespace

SubgroupEvaluation nsqip_subgroup_eval(const FittedModel& img_nsqip, const FittedModel& nsqip_only,
                                       const AnalysisData& data, double threshold,
                                       std::span<const double> sweep_thresholds,
                                       const metrics::BootstrapOptions& options) {
  SubgroupEvaluation out;
  out.threshold = threshold;
  out.low.subgroup = "risk < " + io::format_g6(threshold);
  out.high.subgroup = "risk >= " + io::format_g6(threshold);
  if (!img_nsqip.ok() || !nsqip_only.ok()) {
    out.low.error = out.high.error = "model unavailable";
    return out;
  }
  const auto lpa = model_linear_predictor(img_nsqip, data), lpb = model_linear_predictor(nsqip_only, data);
  const auto rows = common_rows({lpa, lpb}, nullptr);
  const auto surv = data.survival(img_nsqip.spec.horizon);
  std::vector<std::size_t> low, high;
  for (std::size_t i : rows) {
    if (!data.nsqip[i]) continue;
    (*data.nsqip[i] < threshold ? low : high).push_back(i);
  }
  auto lo = options, hi = options;
  lo.seed = derive_seed(options.seed, 0);
  hi.seed = derive_seed(options.seed, 1);
  out.low = subgroup_cell(out.low.subgroup, low, lpa, lpb, surv, lo);
  out.high = subgroup_cell(out.high.subgroup, high, lpa, lpb, surv, hi);
  for (double t : sweep_thresholds) {
    SweepPoint pt;
    pt.threshold = t;
    std::vector<std::size_t> sub;
    for (std::size_t i : rows)
      if (data.nsqip[i] && *data.nsqip[i] < t) sub.push_back(i);
    pt.n = sub.size();
    if (!sub.empty()) {
      const auto a = gather(sub, lpa, nullptr, surv), b = gather(sub, lpb, nullptr, surv);
      try {
        pt.c_img_nsqip = metrics::harrell_c(a.lp, a.surv);
        pt.c_nsqip = metrics::harrell_c(b.lp, b.surv);
      } catch (const Error&) {
        pt.c_img_nsqip.reset();
        pt.c_nsqip.reset();
      }
    }
    out.sweep.push_back(pt);
  }
  return out;
}

}  // namespace morphorisk::pipeline
