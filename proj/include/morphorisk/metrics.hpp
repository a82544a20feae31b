#pragma once

// Discrimination and calibration metrics, percentile bootstrap intervals and
// the paired bootstrap comparison of two models.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morphorisk/error.hpp"
#include "morphorisk/stats_models.hpp"

namespace morphorisk::metrics {

using stats::SurvivalData;

/// Mann-Whitney AUC with half credit for ties. Throws OneClass.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean squared error of probabilities against 0/1 labels.
double brier(std::span<const double> probs, std::span<const int> labels);

/// Harrell's C. A pair is usable when the subject with the strictly earlier
/// time had an event; tied predictors score 1/2. Throws NoUsablePairs.
double harrell_c(std::span<const double> linear_predictors, const SurvivalData& surv);

/// S(t | subject i).
using SurvivalPredictor = std::function<double(std::size_t subject, double t)>;

struct IbsResult {
  double ibs = 0.0;
  /// Upper end of the integration range; below `horizon` only when the
  /// censoring weight reached zero and the grid was truncated.
  double effective_horizon = 0.0;
  std::vector<double> grid;
  std::vector<double> brier;
  bool truncated = false;
};

/// IPCW Brier score integrated over [0, horizon] by the trapezoid rule on
/// the grid {0} + event times <= horizon + {horizon}, divided by the range.
/// Weights come from a Kaplan-Meier fit to the censoring distribution:
/// G(T_i-) for subjects who died by t and G(t) for subjects still at risk.
IbsResult integrated_brier(const SurvivalPredictor& predict, const SurvivalData& surv, double horizon);

/// Cox model convenience overload; `rows` matches the fit's columns.
IbsResult integrated_brier(const stats::CoxFit& fit, const Eigen::MatrixXd& rows, const SurvivalData& surv,
                           double horizon);

/// Metric evaluated on a resample given as row indices into the full data.
/// Returning nullopt marks the resample degenerate (e.g. one class).
using ResampleMetric = std::function<std::optional<double>(std::span<const std::size_t> rows)>;

struct BootstrapOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// TooManyDegenerate when degenerate draws exceed this share of all draws.
  double max_degenerate_fraction = 0.2;
};

struct MetricResult {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::size_t redraws = 0;
  std::vector<double> values;
};

/// Linear-interpolation percentile (type 7) of `values`; q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Subject-level percentile bootstrap over `n` rows. Replicate b draws from
/// its own stream seeded with derive_seed(seed, b), so thread count does not
/// change the result.
MetricResult bootstrap_ci(const ResampleMetric& metric, std::size_t n, const BootstrapOptions& options);

struct PairedComparison {
  std::string metric;
  double estimate_a = 0.0;
  double estimate_b = 0.0;
  double difference = 0.0;
  double diff_lower = 0.0;
  double diff_upper = 0.0;
  /// 2 min(P(d <= 0), P(d >= 0)) with d = A - B, floored at 1/B.
  double p_two_sided = 1.0;
  /// P(d <= 0): evidence that A is not better than B.
  double p_one_sided = 1.0;
  std::size_t replicates = 0;
  std::size_t redraws = 0;
};

PairedComparison paired_bootstrap_test(const std::string& name, const ResampleMetric& metric_a,
                                       const ResampleMetric& metric_b, std::size_t n,
                                       const BootstrapOptions& options);

// Resample adapters for the metrics above.
ResampleMetric auc_metric(std::vector<double> scores, std::vector<int> labels);
ResampleMetric brier_metric(std::vector<double> probs, std::vector<int> labels);
ResampleMetric harrell_c_metric(std::vector<double> linear_predictors, SurvivalData surv);
/// `predict` is indexed by original row; resamples without events or with
/// follow-up shorter than the horizon are degenerate.
ResampleMetric ibs_metric(SurvivalPredictor predict, SurvivalData surv, double horizon);

}  // namespace morphorisk::metrics
