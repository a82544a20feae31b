#pragma once

// Regression and survival models: logistic regression (Newton/IRLS), Cox
// proportional hazards (Efron or Breslow ties), Kaplan-Meier, log-rank,
// one-way ANOVA and exact linear Shapley contributions.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morphorisk::stats {

/// A named group of design columns: one column for a numeric term, one
/// indicator per non-reference level for a categorical term.
struct TermBlock {
  std::string term;
  std::size_t first = 0;
  std::size_t count = 0;
};

/// n x p predictors without an intercept column.
struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> columns;
  std::vector<TermBlock> terms;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(x.cols()); }
  std::size_t column_index(const std::string& name) const;
  const TermBlock& term(const std::string& name) const;

  /// Shape consistency, finite cells and no constant column.
  void validate() const;
  /// Copy without the columns of `term`.
  DesignMatrix without_term(const std::string& term) const;
  DesignMatrix select_rows(std::span<const std::size_t> rows) const;
};

/// Reference-coded categorical variable. The reference is the most frequent
/// level (ties: lexicographically smallest); `levels` are the remaining
/// levels in sorted order, one indicator column each.
struct CategoricalEncoding {
  std::string term;
  std::string reference;
  std::vector<std::string> levels;

  std::string column_name(const std::string& level) const { return term + "=" + level; }
};

CategoricalEncoding make_encoding(const std::string& term, std::span<const std::string> values);

class DesignBuilder {
 public:
  explicit DesignBuilder(std::size_t rows) : rows_(rows) {}

  void add_numeric(const std::string& name, std::span<const double> values);
  /// Levels not present in the encoding are coded as the reference; they
  /// are counted in unseen_levels().
  void add_categorical(const CategoricalEncoding& encoding, std::span<const std::string> values);

  DesignMatrix build() const;
  std::size_t unseen_levels() const noexcept { return unseen_; }

 private:
  std::size_t rows_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::vector<TermBlock> terms_;
  std::size_t unseen_ = 0;
};

enum class FitStatus { kConverged, kMaxIterations, kSeparation };
const char* fit_status_name(FitStatus status);

struct FitOptions {
  double tolerance = 1e-8;  // on max |score|
  int max_iterations = 100;
  /// |coefficient| bound on the standardized scale beyond which a fit is
  /// reported as separated.
  double separation_bound = 15.0;
};

struct LogisticFit {
  std::vector<std::string> columns;
  double intercept = 0.0;
  double intercept_se = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  /// (p + 1) x (p + 1), intercept first.
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  int iterations = 0;
  double max_abs_score = 0.0;
  FitStatus status = FitStatus::kMaxIterations;
  std::string diagnostic;

  bool converged() const noexcept { return status == FitStatus::kConverged; }
  std::size_t column_index(const std::string& name) const;
};

/// Maximum likelihood by Newton-Raphson with step halving. Throws OneClass,
/// SingularInformation and InvalidArgument (n < p + 1); separation and
/// non-convergence come back as a status.
LogisticFit fit_logistic(const DesignMatrix& design, std::span<const int> y, const FitOptions& options = {});

struct SurvivalData {
  std::vector<double> time;
  std::vector<int> event;

  std::size_t size() const noexcept { return time.size(); }
  std::size_t event_count() const noexcept;
  void validate() const;
  SurvivalData select(std::span<const std::size_t> rows) const;
};

enum class TieMethod { kEfron, kBreslow };

struct CoxOptions {
  FitOptions fit;
  TieMethod ties = TieMethod::kEfron;
};

struct CoxFit {
  std::vector<std::string> columns;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  Eigen::MatrixXd covariance;
  double log_partial_likelihood = 0.0;
  double null_log_partial_likelihood = 0.0;
  int iterations = 0;
  double max_abs_score = 0.0;
  FitStatus status = FitStatus::kMaxIterations;
  TieMethod ties = TieMethod::kEfron;
  std::string diagnostic;
  /// Breslow cumulative baseline hazard (covariates at 0) at each distinct
  /// event time.
  std::vector<double> baseline_times;
  std::vector<double> baseline_cumhaz;

  bool converged() const noexcept { return status == FitStatus::kConverged; }
  std::size_t column_index(const std::string& name) const;
  double hazard_ratio(std::size_t j) const;
  double cumulative_hazard(double t) const;
};

/// Newton-Raphson on the partial likelihood. Throws NoEvents,
/// SingularInformation; separation is a status.
CoxFit fit_cox(const DesignMatrix& design, const SurvivalData& surv, const CoxOptions& options = {});

/// Partial log-likelihood at an arbitrary coefficient vector.
double cox_log_partial_likelihood(const DesignMatrix& design, const SurvivalData& surv,
                                  const Eigen::VectorXd& beta, TieMethod ties);

struct RatioCI {
  double ratio = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  double p = 1.0;
};

/// exp(beta) with the two-sided 95% Wald interval exp(beta -/+ 1.96 se).
RatioCI wald_ratio_ci(double beta, double se);
RatioCI odds_ratio_ci(const LogisticFit& fit, std::size_t column);
RatioCI hazard_ratio_ci(const CoxFit& fit, std::size_t column);

/// P(chi2_df > 2 (ll_full - ll_reduced)).
double likelihood_ratio_p(double ll_full, double ll_reduced, int df);

double predict_probability(const LogisticFit& fit, std::span<const double> x);
double predict_linear(const LogisticFit& fit, std::span<const double> x);
double predict_linear(const CoxFit& fit, std::span<const double> x);
double predict_survival(const CoxFit& fit, std::span<const double> x, double t);

struct KMCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  /// Right-continuous S(t).
  double at(double t) const;
  /// Left limit S(t-).
  double before(double t) const;
};

/// Product-limit estimator; subjects censored at an event time stay in that
/// time's risk set.
KMCurve kaplan_meier(const SurvivalData& surv);
/// Kaplan-Meier of the censoring distribution (event indicator swapped).
KMCurve censoring_kaplan_meier(const SurvivalData& surv);

struct LogRankResult {
  double chi_squared = 0.0;
  int df = 0;
  double p = 1.0;
  std::vector<double> observed;
  std::vector<double> expected;
};

LogRankResult log_rank_test(std::span<const SurvivalData> groups);

struct AnovaResult {
  double f = 0.0;
  double df_between = 0.0;
  double df_within = 0.0;
  double p = 1.0;
};

AnovaResult anova_oneway(std::span<const double> values, std::span<const std::string> groups);

/// Exact Shapley values of a linear predictor under feature independence:
/// phi_i = beta_i (x_i - background_i).
std::vector<double> linear_contributions(const LogisticFit& fit, std::span<const double> x,
                                         std::span<const double> background);

}  // namespace morphorisk::stats
