#include "morphorisk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "morphorisk/parallel.hpp"
#include "morphorisk/random.hpp"

namespace morphorisk::metrics {

namespace {

void check_binary(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw Error(ErrorCode::kInvalidArgument, "labels must be 0/1");
}

// Binary indexed tree of counts over predictor ranks.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // number of inserted ranks < i
  std::uint64_t below(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

std::vector<std::size_t> dense_ranks(std::span<const double> v) {
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::size_t> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    r[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
  return r;
}

template <class T>
std::vector<T> gather(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

std::vector<std::size_t> draw_rows(Rng& rng, std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
  return rows;
}

constexpr std::size_t kMaxRedrawsPerReplicate = 1000;

void check_degenerate(std::size_t redraws, std::size_t replicates, double max_fraction) {
  const double share = static_cast<double>(redraws) / static_cast<double>(redraws + replicates);
  if (share > max_fraction) {
    throw Error(ErrorCode::kTooManyDegenerate, std::to_string(redraws) + " degenerate resamples for " +
                                                   std::to_string(replicates) + " replicates");
  }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  check_binary(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // twice the Mann-Whitney count stays an exact integer
  std::uint64_t twice_u = 0, neg_below = 0, pos = 0, neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? p : q) += 1;
      ++j;
    }
    twice_u += 2 * p * neg_below + p * q;
    neg_below += q;
    pos += p;
    neg += q;
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::kOneClass, "AUC needs both classes");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double brier(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw Error(ErrorCode::kInvalidArgument, "probs and labels differ in length");
  if (probs.empty()) throw Error(ErrorCode::kInvalidArgument, "empty input");
  check_binary(labels);
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += (probs[i] - labels[i]) * (probs[i] - labels[i]);
  return s / static_cast<double>(probs.size());
}

double harrell_c(std::span<const double> lp, const SurvivalData& surv) {
  if (lp.size() != surv.size()) throw Error(ErrorCode::kInvalidArgument, "predictor and survival lengths differ");
  const auto rank = dense_ranks(lp);
  std::vector<std::size_t> order(lp.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return surv.time[a] > surv.time[b]; });

  Fenwick later(lp.size());
  std::uint64_t inserted = 0, usable = 0, concordant = 0, tied = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && surv.time[order[j]] == surv.time[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      const std::size_t s = order[k];
      if (!surv.event[s]) continue;
      const std::uint64_t lower = later.below(rank[s]);
      const std::uint64_t equal = later.below(rank[s] + 1) - lower;
      usable += inserted;
      concordant += lower;
      tied += equal;
    }
    for (std::size_t k = i; k < j; ++k) {
      later.add(rank[order[k]]);
      ++inserted;
    }
    i = j;
  }
  if (usable == 0) throw Error(ErrorCode::kNoUsablePairs, "no usable pairs");
  return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) / static_cast<double>(usable);
}

IbsResult integrated_brier(const SurvivalPredictor& predict, const SurvivalData& surv, double horizon) {
  surv.validate();
  if (surv.event_count() == 0) throw Error(ErrorCode::kNoEvents, "integrated Brier score needs an event");
  const double max_time = *std::max_element(surv.time.begin(), surv.time.end());
  if (!(horizon > 0) || horizon > max_time) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be in (0, max observed time]");
  }
  const auto g = stats::censoring_kaplan_meier(surv);
  const std::size_t n = surv.size();

  std::vector<double> grid{0.0};
  for (std::size_t i = 0; i < n; ++i)
    if (surv.event[i] && surv.time[i] <= horizon) grid.push_back(surv.time[i]);
  grid.push_back(horizon);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  IbsResult res;
  for (double t : grid) {
    double sum = 0.0;
    bool zero_weight = false;
    const double g_t = g.at(t);
    for (std::size_t i = 0; i < n && !zero_weight; ++i) {
      if (surv.time[i] <= t && surv.event[i]) {
        const double w = g.before(surv.time[i]);
        if (w <= 0) zero_weight = true;
        const double s = predict(i, t);
        sum += s * s / w;
      } else if (surv.time[i] > t) {
        if (g_t <= 0) zero_weight = true;
        const double s = predict(i, t);
        sum += (1.0 - s) * (1.0 - s) / g_t;
      }
    }
    if (zero_weight) {
      res.truncated = true;
      break;
    }
    res.grid.push_back(t);
    res.brier.push_back(sum / static_cast<double>(n));
  }
  if (res.grid.size() < 2) {
    throw Error(ErrorCode::kZeroCensoringWeight, "censoring survival reaches zero before the first grid point");
  }
  double area = 0.0;
  for (std::size_t k = 1; k < res.grid.size(); ++k)
    area += (res.grid[k] - res.grid[k - 1]) * 0.5 * (res.brier[k] + res.brier[k - 1]);
  res.effective_horizon = res.grid.back();
  res.ibs = area / (res.effective_horizon - res.grid.front());
  return res;
}

IbsResult integrated_brier(const stats::CoxFit& fit, const Eigen::MatrixXd& rows, const SurvivalData& surv,
                           double horizon) {
  if (static_cast<std::size_t>(rows.cols()) != fit.columns.size()) {
    throw Error(ErrorCode::kColumnMismatch, "rows do not match the model columns");
  }
  const Eigen::VectorXd risk = (rows * fit.beta).array().exp();
  return integrated_brier(
      [&](std::size_t i, double t) { return std::exp(-fit.cumulative_hazard(t) * risk(static_cast<Eigen::Index>(i))); },
      surv, horizon);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

MetricResult bootstrap_ci(const ResampleMetric& metric, std::size_t n, const BootstrapOptions& options) {
  if (options.replicates < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one replicate");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no subjects");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto point = metric(all);
  if (!point) throw Error(ErrorCode::kInvalidArgument, "metric is undefined on the full data");

  MetricResult res;
  res.point = *point;
  res.replicates = options.replicates;
  res.seed = options.seed;
  res.values.assign(options.replicates, 0.0);
  std::vector<std::size_t> redraws(options.replicates, 0);
  parallel_for(options.replicates, options.threads, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    for (;;) {
      const auto rows = draw_rows(rng, n);
      if (const auto v = metric(rows)) {
        res.values[b] = *v;
        return;
      }
      if (++redraws[b] > kMaxRedrawsPerReplicate) {
        throw Error(ErrorCode::kTooManyDegenerate, "replicate " + std::to_string(b) + " keeps drawing degenerate resamples");
      }
    }
  });
  res.redraws = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  check_degenerate(res.redraws, options.replicates, options.max_degenerate_fraction);
  res.lower = percentile(res.values, 0.025);
  res.upper = percentile(res.values, 0.975);
  return res;
}

PairedComparison paired_bootstrap_test(const std::string& name, const ResampleMetric& metric_a,
                                       const ResampleMetric& metric_b, std::size_t n,
                                       const BootstrapOptions& options) {
  if (options.replicates < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one replicate");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no subjects");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto a = metric_a(all);
  const auto b = metric_b(all);
  if (!a || !b) throw Error(ErrorCode::kInvalidArgument, "metric is undefined on the full data");

  PairedComparison res;
  res.metric = name;
  res.estimate_a = *a;
  res.estimate_b = *b;
  res.difference = *a - *b;
  res.replicates = options.replicates;
  std::vector<double> delta(options.replicates, 0.0);
  std::vector<std::size_t> redraws(options.replicates, 0);
  parallel_for(options.replicates, options.threads, [&](std::size_t rep) {
    Rng rng(derive_seed(options.seed, rep));
    for (;;) {
      const auto rows = draw_rows(rng, n);
      const auto va = metric_a(rows);
      const auto vb = va ? metric_b(rows) : std::nullopt;
      if (va && vb) {
        delta[rep] = *va - *vb;
        return;
      }
      if (++redraws[rep] > kMaxRedrawsPerReplicate) {
        throw Error(ErrorCode::kTooManyDegenerate, "replicate " + std::to_string(rep) + " keeps drawing degenerate resamples");
      }
    }
  });
  res.redraws = std::accumulate(redraws.begin(), redraws.end(), std::size_t{0});
  check_degenerate(res.redraws, options.replicates, options.max_degenerate_fraction);

  const double reps = static_cast<double>(options.replicates);
  const double le = static_cast<double>(std::count_if(delta.begin(), delta.end(), [](double d) { return d <= 0; })) / reps;
  const double ge = static_cast<double>(std::count_if(delta.begin(), delta.end(), [](double d) { return d >= 0; })) / reps;
  const double floor_p = 1.0 / reps;
  res.p_two_sided = std::clamp(2.0 * std::min(le, ge), floor_p, 1.0);
  res.p_one_sided = std::clamp(le, floor_p, 1.0);
  res.diff_lower = percentile(delta, 0.025);
  res.diff_upper = percentile(delta, 0.975);
  return res;
}

ResampleMetric auc_metric(std::vector<double> scores, std::vector<int> labels) {
  return [scores = std::move(scores), labels = std::move(labels)](std::span<const std::size_t> rows) -> std::optional<double> {
    const auto s = gather(scores, rows);
    const auto y = gather(labels, rows);
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) return std::nullopt;
    return auc(s, y);
  };
}

ResampleMetric brier_metric(std::vector<double> probs, std::vector<int> labels) {
  return [probs = std::move(probs), labels = std::move(labels)](std::span<const std::size_t> rows) -> std::optional<double> {
    const auto y = gather(labels, rows);
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) return std::nullopt;
    return brier(gather(probs, rows), y);
  };
}

ResampleMetric harrell_c_metric(std::vector<double> lp, SurvivalData surv) {
  return [lp = std::move(lp), surv = std::move(surv)](std::span<const std::size_t> rows) -> std::optional<double> {
    const auto sub = surv.select(rows);
    if (sub.event_count() == 0) return std::nullopt;
    try {
      return harrell_c(gather(lp, rows), sub);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNoUsablePairs) return std::nullopt;
      throw;
    }
  };
}

ResampleMetric ibs_metric(SurvivalPredictor predict, SurvivalData surv, double horizon) {
  return [predict = std::move(predict), surv = std::move(surv), horizon](std::span<const std::size_t> rows) -> std::optional<double> {
    const auto sub = surv.select(rows);
    if (sub.event_count() == 0) return std::nullopt;
    if (*std::max_element(sub.time.begin(), sub.time.end()) < horizon) return std::nullopt;
    std::vector<std::size_t> map(rows.begin(), rows.end());
    try {
      return integrated_brier([&](std::size_t i, double t) { return predict(map[i], t); }, sub, horizon).ibs;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kZeroCensoringWeight) return std::nullopt;
      throw;
    }
  };
}

}  // namespace morphorisk::metrics
