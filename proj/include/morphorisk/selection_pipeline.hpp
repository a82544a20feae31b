#pragma once

// Feature selection and model building: per-level univariate screening,
// level choice, collinearity pruning, confounder adjustment, backward
// elimination, the model suite, validation metrics, risk strata and the
// NSQIP-risk subgroup analysis.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morphorisk/bodycomp.hpp"
#include "morphorisk/cohort_io.hpp"
#include "morphorisk/metrics.hpp"
#include "morphorisk/stats_models.hpp"

namespace morphorisk::pipeline {

using bodycomp::LevelId;
using bodycomp::ScoreKey;

/// Adjustment set, in model order.
inline const std::vector<std::string> kConfounders = {"age_cat", "bmi_cat", "smoker", "functional_status",
                                                      "asa_class"};

/// Binary one-year mortality (unknown status excluded) and its Cox twin.
inline constexpr std::string_view kOneYearMortality = "mortality_1y";

/// Default outcome list: one-year mortality, then the 30-day binary outcomes.
std::vector<std::string> default_outcomes();
/// Mortality endpoints are modelled with Cox; the rest are logistic.
bool is_mortality_outcome(std::string_view outcome);
/// Cox horizon in days: 365 for one-year mortality, 30 for 30-day mortality.
double outcome_horizon(std::string_view outcome);

// ---- analysis data -----------------------------------------------------------------

/// Column-oriented join of cohort records and score rows.
struct AnalysisData {
  std::vector<std::string> ids;
  std::vector<bodycomp::Sex> sex;
  /// Confounders as category labels; empty optional = missing.
  std::map<std::string, std::vector<std::optional<std::string>>> confounders;
  /// The seven 30-day outcomes plus mortality_1y.
  std::map<std::string, std::vector<std::optional<int>>> binary;
  std::vector<io::VitalStatus> vital;
  std::vector<std::optional<double>> death_day;
  std::vector<double> last_followup;
  std::vector<std::optional<double>> nsqip;
  std::vector<ScoreKey> score_keys;
  /// score_columns[j][i]: key j, patient i.
  std::vector<std::vector<bodycomp::Score>> score_columns;

  std::size_t size() const noexcept { return ids.size(); }
  const std::vector<bodycomp::Score>& score(const ScoreKey& key) const;
  bool has_score(const ScoreKey& key) const;
  /// Binary outcome column; throws InvalidArgument for an unknown name.
  const std::vector<std::optional<int>>& outcome(const std::string& name) const;
  /// Survival truncated at `horizon` (death by the horizon = event).
  stats::SurvivalData survival(double horizon) const;
  AnalysisData select(std::span<const std::size_t> rows) const;
};

/// Joins on patient_id; every cohort record needs a score row (else
/// SchemaMismatch naming the id). Rows follow the cohort order.
AnalysisData make_analysis_data(const io::CohortTable& cohort, const io::ScoreTable& scores);
/// Rows whose record has the given cohort label ("development"/"validation").
AnalysisData cohort_subset(const AnalysisData& data, const io::CohortTable& cohort, const std::string& label);

// ---- screening ----------------------------------------------------------------------

enum class DropReason { kNone, kCorrelated, kAdjustedNs, kUnstable };
std::string_view drop_reason_name(DropReason r);

struct ConfounderAssociation {
  std::string confounder;
  double p = 1.0;
  /// "strong" (p < 0.01), "weak" (p < 0.1) or "none".
  std::string strength;
};

struct ScreenRow {
  std::string outcome;
  ScoreKey key;
  std::size_t n = 0;
  std::size_t events = 0;
  std::size_t excluded = 0;
  /// Odds ratio per SD of the score on the fitted rows.
  double odds_ratio = 1.0;
  double or_lower = 1.0;
  double or_upper = 1.0;
  /// Direction-free AUC of the score, max(A, 1 - A); rank based.
  double auc = 0.5;
  double p = 1.0;
  std::optional<double> adjusted_p;
  std::vector<ConfounderAssociation> confounder_association;
  bool retained = false;
  DropReason reason = DropReason::kNone;
  /// Blocking metric for kCorrelated; fit diagnostic for kUnstable.
  std::string detail;

  bool unstable() const noexcept { return reason == DropReason::kUnstable; }
};

struct ScreenOptions {
  std::size_t min_n = 50;
  std::size_t threads = 1;
};

/// One univariate logistic fit per key, complete cases per fit. Throws
/// OneClass when the outcome has a single class over its non-missing rows;
/// per-key failures become kUnstable rows.
std::vector<ScreenRow> univariate_screen(const AnalysisData& data, const std::string& outcome,
                                         std::span<const ScoreKey> keys, const ScreenOptions& options = {});

// ---- level choice ------------------------------------------------------------------------

/// 0 for the most preferred level: L3, L2-L3, L3-L4, L2, L4, L1-L2, L1,
/// T12-L1, T12, VOL3D.
int level_preference(LevelId level);

struct LevelOverride {
  /// Outcome name or "*" for every outcome.
  std::string outcome;
  std::string metric;
  LevelId level;
};

/// Argmax AUC over the non-unstable rows of one metric; exact ties by
/// level_preference. An override for (outcome, metric) wins when its row
/// is not unstable. Throws AllRowsFailed.
LevelId best_level(std::span<const ScreenRow> rows, std::span<const LevelOverride> overrides = {});

// ---- pruning and adjustment ------------------------------------------------------------

double pearson_pairwise(const std::vector<bodycomp::Score>& a, const std::vector<bodycomp::Score>& b);

/// Orders by AUC (desc), level preference, metric name and greedily keeps a
/// row iff |r| <= threshold against every kept row. Dropped rows get
/// kCorrelated with the blocking column in `detail`. Unstable rows are
/// passed through at the end unchanged.
std::vector<ScreenRow> collinearity_prune(std::vector<ScreenRow> rows, const AnalysisData& data,
                                          double threshold = 0.8);

struct AdjustOptions {
  double retain_p = 0.1;
  std::vector<std::string> confounders = kConfounders;
};

/// Multivariable logistic of the candidate plus confounders; sets
/// adjusted_p, the confounder ANOVA associations, and retained iff
/// adjusted_p < retain_p.
void confounder_adjust(ScreenRow& row, const AnalysisData& data, const AdjustOptions& options = {});

struct SelectionOptions {
  ScreenOptions screen;
  double corr_threshold = 0.8;
  AdjustOptions adjust;
  std::vector<LevelOverride> overrides;
};

struct SelectionResult {
  std::string outcome;
  /// Every (metric, level) row of the screen.
  std::vector<ScreenRow> screen;
  /// One row per metric at its chosen level, in pruning order, with final
  /// drop reasons and adjusted p.
  std::vector<ScreenRow> candidates;
  /// Retained keys in pruning order.
  std::vector<ScoreKey> selected;
};

SelectionResult select_features(const AnalysisData& development, const std::string& outcome,
                                std::span<const ScoreKey> keys, const SelectionOptions& options = {});
/// Level choice, pruning and adjustment on an existing screen.
SelectionResult select_from_screen(const AnalysisData& development, const std::string& outcome,
                                   std::vector<ScreenRow> screen, const SelectionOptions& options = {});

// ---- models -----------------------------------------------------------------------------

enum class Family { kLogistic, kCox };
enum class Variant { kImgOnly, kClinOnly, kImgClin, kNsqipOnly, kImgNsqip };
std::string_view family_name(Family f);
std::string_view variant_name(Variant v);
std::vector<Variant> variants_for(std::string_view outcome);

enum class TermKind { kScore, kConfounder, kNsqip };

struct Term {
  std::string name;
  TermKind kind = TermKind::kScore;
  ScoreKey key{};  ///< kScore only
};

/// Name of the NSQIP term; risk enters as ln(r / (1 - r)).
inline constexpr std::string_view kNsqipTerm = "nsqip_logit";

struct ModelSpec {
  std::string outcome;
  Family family = Family::kLogistic;
  Variant variant = Variant::kImgClin;
  std::vector<Term> candidates;
  double horizon = 365.0;
};

struct EliminationStep {
  std::string term;
  double p = 1.0;
  /// "wald" for one-column terms, "lr" for categorical blocks.
  std::string test;
  std::size_t remaining = 0;
};

struct TermEstimate {
  std::string column;
  double beta = 0.0;
  double se = 0.0;
  double ratio = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  double p = 1.0;
};

struct FittedModel {
  ModelSpec spec;
  bool buildable = true;
  /// "ok", "not buildable: ..." or "error: ...".
  std::string status = "ok";
  std::vector<Term> terms;
  std::vector<stats::CategoricalEncoding> encodings;
  std::optional<stats::LogisticFit> logistic;
  std::optional<stats::CoxFit> cox;
  std::vector<EliminationStep> trace;
  /// Per final term: Wald (numeric) or LR (block) p.
  std::vector<double> term_p;
  std::vector<TermEstimate> estimates;
  std::size_t n = 0;
  std::size_t events = 0;
  std::size_t excluded = 0;
  /// Fewer than 5 events per candidate column at the start.
  bool low_events_per_variable = false;

  bool ok() const noexcept { return buildable && status == "ok"; }
};

/// Fit errors during elimination, carrying the steps taken so far.
class EliminationError : public Error {
 public:
  EliminationError(const Error& cause, std::vector<EliminationStep> trace)
      : Error(cause.code(), std::string(cause.what()).substr(error_code_name(cause.code()).size() + 2)),
        trace_(std::move(trace)) {}
  const std::vector<EliminationStep>& trace() const noexcept { return trace_; }

 private:
  std::vector<EliminationStep> trace_;
};

struct EliminationOptions {
  double eliminate_p = 0.1;
};

/// Backward elimination from spec.candidates on the complete-case rows
/// fixed at the start. Throws EliminationError.
FittedModel backward_eliminate(const ModelSpec& spec, const AnalysisData& data,
                               const EliminationOptions& options = {});

/// Linear predictor on `data` (nullopt where a term is missing).
std::vector<std::optional<double>> model_linear_predictor(const FittedModel& model, const AnalysisData& data);

/// Builds every variant for the outcome; IMG variants with no selected
/// scores are marked not buildable, fit failures are recorded per variant.
std::map<Variant, FittedModel> build_model_suite(const std::string& outcome, std::span<const ScoreKey> selected,
                                                 const AnalysisData& development,
                                                 const std::vector<std::string>& confounders = kConfounders,
                                                 const EliminationOptions& options = {});

// ---- evaluation ---------------------------------------------------------------------------

struct EvaluationOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool include_ibs = true;
};

struct ModelEvaluation {
  std::string outcome;
  Variant variant = Variant::kImgOnly;
  /// "C-index", "IBS", "AUC" or "Brier".
  std::string metric;
  std::size_t n = 0;
  std::optional<metrics::MetricResult> result;
  std::string error;
};

struct ComparisonRow {
  std::string outcome;
  Variant a = Variant::kImgClin;
  Variant b = Variant::kClinOnly;
  std::optional<metrics::PairedComparison> result;
  std::size_t n = 0;
  std::string error;
};

struct SuiteEvaluation {
  std::vector<ModelEvaluation> metrics;
  std::vector<ComparisonRow> comparisons;
};

/// Pairs compared: IMG+CLIN vs CLIN-only, IMG+CLIN vs IMG-only and, for
/// mortality, IMG+NSQIP vs NSQIP-only. Seeds derive from options.seed by
/// output position.
SuiteEvaluation evaluate_suite(const std::map<Variant, FittedModel>& suite, const AnalysisData& validation,
                               const EvaluationOptions& options);

/// Paired C-index (Cox) or AUC (logistic) comparison of two fitted models on
/// the rows both can score.
ComparisonRow compare_models(const FittedModel& a, const FittedModel& b, const AnalysisData& data,
                             const std::string& metric, const metrics::BootstrapOptions& options);

// ---- strata and subgroups ---------------------------------------------------------------

struct RiskStratum {
  std::string label;
  std::vector<std::size_t> rows;
  std::optional<stats::KMCurve> km;
  bool empty() const noexcept { return rows.empty(); }
};

struct RiskStrata {
  double score_cut = 0.0;
  double nsqip_cut = 0.0;
  /// low/high score x low/high NSQIP, in that order.
  std::vector<RiskStratum> strata;
  std::optional<stats::LogRankResult> overall;
  /// (i, j, p) over nonempty strata pairs.
  std::vector<std::tuple<std::size_t, std::size_t, double>> pairwise;
  bool degenerate = false;
  std::string note;
};

/// Low = at or below the median (score) / below the cut (NSQIP); the NSQIP
/// cut is the median unless `nsqip_threshold` is given, in which case
/// low = risk < threshold. Rows missing either value are left out.
RiskStrata stratify_km(std::span<const std::optional<double>> score, std::span<const std::optional<double>> nsqip,
                       const stats::SurvivalData& surv, std::optional<double> nsqip_threshold = std::nullopt);

struct SubgroupCell {
  std::string subgroup;
  std::size_t n = 0;
  std::size_t events = 0;
  std::optional<metrics::PairedComparison> c_index;
  std::string error;
};

struct SweepPoint {
  double threshold = 0.0;
  std::size_t n = 0;
  std::optional<double> c_img_nsqip;
  std::optional<double> c_nsqip;
};

struct SubgroupEvaluation {
  double threshold = 0.05;
  SubgroupCell low;
  SubgroupCell high;
  std::vector<SweepPoint> sweep;
};

/// IMG+NSQIP against NSQIP-only within risk < threshold and risk >=
/// threshold, plus C-index among risk < t over `sweep_thresholds`.
SubgroupEvaluation nsqip_subgroup_eval(const FittedModel& img_nsqip, const FittedModel& nsqip_only,
                                       const AnalysisData& data, double threshold,
                                       std::span<const double> sweep_thresholds,
                                       const metrics::BootstrapOptions& options);

}  // namespace morphorisk::pipeline
