#include "morphorisk/stats_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "morphorisk/distributions.hpp"
#include "morphorisk/error.hpp"

namespace morphorisk::stats {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr double kRelativeEigenFloor = 1e-10;
constexpr int kMaxHalvings = 30;

double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }
double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

struct Standardized {
  Eigen::MatrixXd x;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

Standardized standardize(const Eigen::MatrixXd& x) {
  Standardized s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  s.x = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    s.x.col(j).array() -= s.mean(j);
    const double sd = std::sqrt(s.x.col(j).squaredNorm() / n);
    s.scale(j) = sd > 0 ? sd : 1.0;
    s.x.col(j) /= s.scale(j);
  }
  return s;
}

bool is_singular(const Eigen::MatrixXd& info) {
  if (info.rows() == 0) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  return !(hi > 0) || lo <= kRelativeEigenFloor * hi;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double max_abs_tail(const Eigen::VectorXd& v, Eigen::Index from) {
  double m = 0.0;
  for (Eigen::Index i = from; i < v.size(); ++i) m = std::max(m, std::fabs(v(i)));
  return m;
}

// ---- logistic ---------------------------------------------------------------

struct LogisticState {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
};

LogisticState logistic_state(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                             bool with_info) {
  LogisticState st;
  const Eigen::VectorXd eta = z * theta;
  Eigen::VectorXd resid(eta.size());
  Eigen::VectorXd w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    st.loglik += y(i) * eta(i) - softplus(eta(i));
    const double mu = sigmoid(eta(i));
    resid(i) = y(i) - mu;
    w(i) = mu * (1.0 - mu);
  }
  st.score = z.transpose() * resid;
  if (with_info) st.info = z.transpose() * w.asDiagonal() * z;
  return st;
}

double logistic_loglik(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = z * theta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll;
}

// ---- Cox --------------------------------------------------------------------

struct CoxState {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
};

// Rows sorted by ascending time.
std::vector<std::size_t> time_order(const SurvivalData& surv) {
  std::vector<std::size_t> order(surv.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return surv.time[a] < surv.time[b]; });
  return order;
}

CoxState cox_state(const Eigen::MatrixXd& x, const SurvivalData& surv, const std::vector<std::size_t>& order,
                   const Eigen::VectorXd& beta, TieMethod ties, bool with_derivatives) {
  const Eigen::Index p = x.cols();
  const Eigen::VectorXd eta = x * beta;
  const double shift = eta.size() ? eta.maxCoeff() : 0.0;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r(i) = std::exp(eta(i) - shift);

  CoxState st;
  st.score = Eigen::VectorXd::Zero(p);
  st.info = Eigen::MatrixXd::Zero(p, p);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  std::ptrdiff_t i = static_cast<std::ptrdiff_t>(order.size()) - 1;
  while (i >= 0) {
    const double t = surv.time[order[i]];
    std::ptrdiff_t k = i;
    while (k >= 0 && surv.time[order[k]] == t) --k;
    // rows (k, i] share time t: enter the risk set together
    double t0 = 0.0;
    Eigen::VectorXd t1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(p, p);
    int d = 0;
    for (std::ptrdiff_t j = i; j > k; --j) {
      const std::size_t row = order[j];
      const auto xr = x.row(static_cast<Eigen::Index>(row)).transpose();
      s0 += r(row);
      if (with_derivatives) {
        s1 += r(row) * xr;
        s2.noalias() += r(row) * xr * xr.transpose();
      }
      if (surv.event[row]) {
        ++d;
        st.loglik += eta(row);
        t0 += r(row);
        if (with_derivatives) {
          st.score += xr;
          t1 += r(row) * xr;
          t2.noalias() += r(row) * xr * xr.transpose();
        }
      }
    }
    for (int l = 0; l < d; ++l) {
      const double frac = ties == TieMethod::kEfron ? static_cast<double>(l) / d : 0.0;
      const double a0 = s0 - frac * t0;
      st.loglik -= shift + std::log(a0);
      if (with_derivatives) {
        const Eigen::VectorXd a1 = s1 - frac * t1;
        const Eigen::MatrixXd a2 = s2 - frac * t2;
        st.score -= a1 / a0;
        st.info.noalias() += a2 / a0 - (a1 * a1.transpose()) / (a0 * a0);
      }
    }
    i = k;
  }
  return st;
}

void finish_wald(const Eigen::VectorXd& beta, const Eigen::VectorXd& se, Eigen::VectorXd& z, Eigen::VectorXd& p) {
  z.resize(beta.size());
  p.resize(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    z(j) = beta(j) / se(j);
    p(j) = normal_two_sided_p(z(j));
  }
}

std::size_t find_column(const std::vector<std::string>& columns, const std::string& name) {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::kColumnMismatch, "no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

void check_row(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(ErrorCode::kColumnMismatch,
                "row has " + std::to_string(got) + " values, model has " + std::to_string(expected));
  }
}

}  // namespace

// ---- design -----------------------------------------------------------------

std::size_t DesignMatrix::column_index(const std::string& name) const { return find_column(columns, name); }

const TermBlock& DesignMatrix::term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.term == name) return t;
  throw Error(ErrorCode::kColumnMismatch, "no term '" + name + "'");
}

void DesignMatrix::validate() const {
  if (static_cast<std::size_t>(x.cols()) != columns.size()) {
    throw Error(ErrorCode::kInvalidArgument, "column name count does not match the matrix");
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!x.col(j).allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite value in column '" + columns[j] + "'");
    }
    if (x.rows() > 0 && x.col(j).maxCoeff() == x.col(j).minCoeff()) {
      throw Error(ErrorCode::kConstantColumn, "column '" + columns[j] + "' is constant");
    }
  }
}

DesignMatrix DesignMatrix::without_term(const std::string& name) const {
  const TermBlock& drop = term(name);
  DesignMatrix out;
  out.x.resize(x.rows(), x.cols() - static_cast<Eigen::Index>(drop.count));
  Eigen::Index c = 0;
  for (const auto& t : terms) {
    if (t.term == name) continue;
    out.terms.push_back({t.term, static_cast<std::size_t>(c), t.count});
    for (std::size_t k = 0; k < t.count; ++k) {
      out.x.col(c++) = x.col(static_cast<Eigen::Index>(t.first + k));
      out.columns.push_back(columns[t.first + k]);
    }
  }
  return out;
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows) const {
  DesignMatrix out;
  out.columns = columns;
  out.terms = terms;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

CategoricalEncoding make_encoding(const std::string& term, std::span<const std::string> values) {
  std::map<std::string, std::size_t> counts;
  for (const auto& v : values) ++counts[v];
  if (counts.empty()) throw Error(ErrorCode::kInvalidArgument, "categorical '" + term + "' has no values");
  CategoricalEncoding enc;
  enc.term = term;
  std::size_t best = 0;
  for (const auto& [level, n] : counts) {
    if (n > best) {  // map order: ties keep the smaller level
      best = n;
      enc.reference = level;
    }
  }
  for (const auto& [level, n] : counts)
    if (level != enc.reference) enc.levels.push_back(level);
  return enc;
}

void DesignBuilder::add_numeric(const std::string& name, std::span<const double> values) {
  if (values.size() != rows_) throw Error(ErrorCode::kInvalidArgument, "column '" + name + "' has wrong length");
  terms_.push_back({name, names_.size(), 1});
  names_.push_back(name);
  columns_.emplace_back(values.begin(), values.end());
}

void DesignBuilder::add_categorical(const CategoricalEncoding& encoding, std::span<const std::string> values) {
  if (values.size() != rows_) {
    throw Error(ErrorCode::kInvalidArgument, "column '" + encoding.term + "' has wrong length");
  }
  if (encoding.levels.empty()) return;
  terms_.push_back({encoding.term, names_.size(), encoding.levels.size()});
  const std::size_t first = columns_.size();
  for (const auto& level : encoding.levels) {
    names_.push_back(encoding.column_name(level));
    columns_.emplace_back(rows_, 0.0);
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    auto it = std::find(encoding.levels.begin(), encoding.levels.end(), values[i]);
    if (it != encoding.levels.end()) {
      columns_[first + static_cast<std::size_t>(it - encoding.levels.begin())][i] = 1.0;
    } else if (values[i] != encoding.reference) {
      ++unseen_;
    }
  }
}

DesignMatrix DesignBuilder::build() const {
  DesignMatrix d;
  d.columns = names_;
  d.terms = terms_;
  d.x.resize(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t j = 0; j < columns_.size(); ++j)
    for (std::size_t i = 0; i < rows_; ++i) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns_[j][i];
  return d;
}

const char* fit_status_name(FitStatus status) {
  switch (status) {
    case FitStatus::kConverged: return "converged";
    case FitStatus::kMaxIterations: return "max_iterations";
    case FitStatus::kSeparation: return "separation";
  }
  return "?";
}

// ---- logistic -----------------------------------------------------------------

std::size_t LogisticFit::column_index(const std::string& name) const { return find_column(columns, name); }

LogisticFit fit_logistic(const DesignMatrix& design, std::span<const int> y, const FitOptions& options) {
  design.validate();
  const std::size_t n = design.rows();
  const std::size_t p = design.cols();
  if (y.size() != n) throw Error(ErrorCode::kInvalidArgument, "outcome length does not match design rows");
  if (n < p + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "need n >= p + 1 (n = " + std::to_string(n) + ", p = " + std::to_string(p) + ")");
  }
  std::size_t positives = 0;
  Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) throw Error(ErrorCode::kInvalidArgument, "outcome must be 0/1");
    positives += static_cast<std::size_t>(y[i]);
    yv(static_cast<Eigen::Index>(i)) = y[i];
  }
  if (positives == 0 || positives == n) throw Error(ErrorCode::kOneClass, "outcome has a single class");

  const Standardized s = standardize(design.x);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
  z.col(0).setOnes();
  z.rightCols(static_cast<Eigen::Index>(p)) = s.x;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
  const double prevalence = static_cast<double>(positives) / static_cast<double>(n);
  theta(0) = std::log(prevalence / (1.0 - prevalence));

  LogisticFit fit;
  fit.columns = design.columns;
  fit.status = FitStatus::kMaxIterations;
  LogisticState st = logistic_state(z, yv, theta, true);
  if (is_singular(st.info)) {
    throw Error(ErrorCode::kSingularInformation, "information matrix is rank-deficient at start");
  }
  for (int it = 0; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    if (max_abs(st.score) < options.tolerance) {
      fit.status = FitStatus::kConverged;
      break;
    }
    if (it == options.max_iterations) break;
    if (max_abs_tail(theta, 1) > 2.0 * options.separation_bound) break;
    if (is_singular(st.info)) break;
    const Eigen::VectorXd step = st.info.ldlt().solve(st.score);
    double scale = 1.0;
    Eigen::VectorXd next = theta + step;
    for (int h = 0; h < kMaxHalvings && logistic_loglik(z, yv, next) < st.loglik - 1e-12 * (1.0 + std::fabs(st.loglik)); ++h) {
      scale *= 0.5;
      next = theta + scale * step;
    }
    theta = next;
    st = logistic_state(z, yv, theta, true);
  }
  if (max_abs_tail(theta, 1) > options.separation_bound) {
    fit.status = FitStatus::kSeparation;
    fit.diagnostic = "standardized |coefficient| exceeds " + std::to_string(options.separation_bound) +
                     " (quasi-complete separation)";
  } else if (fit.status == FitStatus::kMaxIterations) {
    fit.diagnostic = "no convergence after " + std::to_string(options.max_iterations) + " iterations";
  }
  fit.log_likelihood = st.loglik;
  fit.max_abs_score = max_abs(st.score);

  // Back to the original scale: [a; b] = A [a~; b~].
  const Eigen::Index q = static_cast<Eigen::Index>(p + 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q, q);
  a(0, 0) = 1.0;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p); ++j) {
    a(0, j + 1) = -s.mean(j) / s.scale(j);
    a(j + 1, j + 1) = 1.0 / s.scale(j);
  }
  const Eigen::VectorXd raw = a * theta;
  fit.intercept = raw(0);
  fit.beta = raw.tail(static_cast<Eigen::Index>(p));

  Eigen::MatrixXd cov_std;
  if (is_singular(st.info)) {
    if (fit.converged()) throw Error(ErrorCode::kSingularInformation, "information matrix is rank-deficient");
    cov_std = Eigen::MatrixXd::Constant(q, q, std::numeric_limits<double>::quiet_NaN());
  } else {
    cov_std = st.info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
  }
  fit.covariance = a * cov_std * a.transpose();
  fit.intercept_se = std::sqrt(fit.covariance(0, 0));
  fit.se = fit.covariance.diagonal().tail(static_cast<Eigen::Index>(p)).cwiseSqrt();
  finish_wald(fit.beta, fit.se, fit.z, fit.p);
  return fit;
}

// ---- survival data --------------------------------------------------------------

std::size_t SurvivalData::event_count() const noexcept {
  std::size_t n = 0;
  for (int e : event) n += e != 0;
  return n;
}

void SurvivalData::validate() const {
  if (time.size() != event.size()) throw Error(ErrorCode::kInvalidArgument, "time and event lengths differ");
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!(time[i] > 0) || !std::isfinite(time[i])) {
      throw Error(ErrorCode::kRangeViolation, "survival time must be > 0 (row " + std::to_string(i) + ")");
    }
    if (event[i] != 0 && event[i] != 1) {
      throw Error(ErrorCode::kRangeViolation, "event must be 0/1 (row " + std::to_string(i) + ")");
    }
  }
}

SurvivalData SurvivalData::select(std::span<const std::size_t> rows) const {
  SurvivalData out;
  out.time.reserve(rows.size());
  out.event.reserve(rows.size());
  for (std::size_t r : rows) {
    out.time.push_back(time[r]);
    out.event.push_back(event[r]);
  }
  return out;
}

// ---- Cox ----------------------------------------------------------------------

std::size_t CoxFit::column_index(const std::string& name) const { return find_column(columns, name); }

double CoxFit::hazard_ratio(std::size_t j) const { return std::exp(beta(static_cast<Eigen::Index>(j))); }

double CoxFit::cumulative_hazard(double t) const {
  auto it = std::upper_bound(baseline_times.begin(), baseline_times.end(), t);
  if (it == baseline_times.begin()) return 0.0;
  return baseline_cumhaz[static_cast<std::size_t>(it - baseline_times.begin()) - 1];
}

double cox_log_partial_likelihood(const DesignMatrix& design, const SurvivalData& surv,
                                  const Eigen::VectorXd& beta, TieMethod ties) {
  return cox_state(design.x, surv, time_order(surv), beta, ties, false).loglik;
}

CoxFit fit_cox(const DesignMatrix& design, const SurvivalData& surv, const CoxOptions& options) {
  design.validate();
  surv.validate();
  if (surv.size() != design.rows()) throw Error(ErrorCode::kInvalidArgument, "survival length does not match design rows");
  if (surv.event_count() == 0) throw Error(ErrorCode::kNoEvents, "no events");
  const std::size_t p = design.cols();
  if (p == 0) throw Error(ErrorCode::kInvalidArgument, "Cox model needs at least one column");

  const Standardized s = standardize(design.x);
  const auto order = time_order(surv);
  const TieMethod ties = options.ties;
  const FitOptions& fo = options.fit;

  CoxFit fit;
  fit.columns = design.columns;
  fit.ties = ties;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  CoxState st = cox_state(s.x, surv, order, b, ties, true);
  fit.null_log_partial_likelihood = st.loglik;
  if (is_singular(st.info)) throw Error(ErrorCode::kSingularInformation, "information matrix is rank-deficient at start");

  for (int it = 0; it <= fo.max_iterations; ++it) {
    fit.iterations = it;
    if (max_abs(st.score) < fo.tolerance) {
      fit.status = FitStatus::kConverged;
      break;
    }
    if (it == fo.max_iterations) break;
    if (max_abs(b) > 2.0 * fo.separation_bound) break;
    if (is_singular(st.info)) break;
    const Eigen::VectorXd step = st.info.ldlt().solve(st.score);
    double scale = 1.0;
    Eigen::VectorXd next = b + step;
    for (int h = 0; h < kMaxHalvings &&
                    cox_state(s.x, surv, order, next, ties, false).loglik < st.loglik - 1e-12 * (1.0 + std::fabs(st.loglik));
         ++h) {
      scale *= 0.5;
      next = b + scale * step;
    }
    b = next;
    st = cox_state(s.x, surv, order, b, ties, true);
  }
  if (max_abs(b) > fo.separation_bound) {
    fit.status = FitStatus::kSeparation;
    fit.diagnostic = "standardized |coefficient| exceeds " + std::to_string(fo.separation_bound) +
                     " (monotone likelihood)";
  } else if (fit.status == FitStatus::kMaxIterations) {
    fit.diagnostic = "no convergence after " + std::to_string(fo.max_iterations) + " iterations";
  }
  fit.log_partial_likelihood = st.loglik;
  fit.max_abs_score = max_abs(st.score);

  const Eigen::VectorXd inv_scale = s.scale.cwiseInverse();
  fit.beta = b.cwiseProduct(inv_scale);
  const auto q = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd cov_std;
  if (is_singular(st.info)) {
    if (fit.converged()) throw Error(ErrorCode::kSingularInformation, "information matrix is rank-deficient");
    cov_std = Eigen::MatrixXd::Constant(q, q, std::numeric_limits<double>::quiet_NaN());
  } else {
    cov_std = st.info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
  }
  fit.covariance = inv_scale.asDiagonal() * cov_std * inv_scale.asDiagonal();
  fit.se = fit.covariance.diagonal().cwiseSqrt();
  finish_wald(fit.beta, fit.se, fit.z, fit.p);

  // Breslow baseline with covariates at zero on the original scale.
  const Eigen::VectorXd eta = design.x * fit.beta;
  const double shift = eta.maxCoeff();
  double s0 = 0.0;
  std::vector<std::pair<double, double>> increments;  // (time, dH), descending
  std::ptrdiff_t i = static_cast<std::ptrdiff_t>(order.size()) - 1;
  while (i >= 0) {
    const double t = surv.time[order[i]];
    std::ptrdiff_t k = i;
    int d = 0;
    while (k >= 0 && surv.time[order[k]] == t) {
      s0 += std::exp(eta(static_cast<Eigen::Index>(order[k])) - shift);
      d += surv.event[order[k]];
      --k;
    }
    if (d > 0) increments.emplace_back(t, static_cast<double>(d) / s0 * std::exp(-shift));
    i = k;
  }
  double h = 0.0;
  for (auto it = increments.rbegin(); it != increments.rend(); ++it) {
    h += it->second;
    fit.baseline_times.push_back(it->first);
    fit.baseline_cumhaz.push_back(h);
  }
  return fit;
}

// ---- ratios & prediction ------------------------------------------------------

RatioCI wald_ratio_ci(double beta, double se) {
  RatioCI r;
  r.ratio = std::exp(beta);
  r.lower = std::exp(beta - kZ975 * se);
  r.upper = std::exp(beta + kZ975 * se);
  r.p = se > 0 ? normal_two_sided_p(beta / se) : (beta == 0 ? 1.0 : 0.0);
  return r;
}

RatioCI odds_ratio_ci(const LogisticFit& fit, std::size_t column) {
  const auto j = static_cast<Eigen::Index>(column);
  return wald_ratio_ci(fit.beta(j), fit.se(j));
}

RatioCI hazard_ratio_ci(const CoxFit& fit, std::size_t column) {
  const auto j = static_cast<Eigen::Index>(column);
  return wald_ratio_ci(fit.beta(j), fit.se(j));
}

double likelihood_ratio_p(double ll_full, double ll_reduced, int df) {
  const double stat = std::max(0.0, 2.0 * (ll_full - ll_reduced));
  return chi_squared_upper(stat, df);
}

double predict_linear(const LogisticFit& fit, std::span<const double> x) {
  check_row(fit.columns.size(), x.size());
  double eta = fit.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) eta += fit.beta(static_cast<Eigen::Index>(j)) * x[j];
  return eta;
}

double predict_probability(const LogisticFit& fit, std::span<const double> x) { return sigmoid(predict_linear(fit, x)); }

double predict_linear(const CoxFit& fit, std::span<const double> x) {
  check_row(fit.columns.size(), x.size());
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += fit.beta(static_cast<Eigen::Index>(j)) * x[j];
  return eta;
}

double predict_survival(const CoxFit& fit, std::span<const double> x, double t) {
  return std::exp(-fit.cumulative_hazard(t) * std::exp(predict_linear(fit, x)));
}

// ---- Kaplan-Meier -------------------------------------------------------------

double KMCurve::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

double KMCurve::before(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KMCurve kaplan_meier(const SurvivalData& surv) {
  if (surv.time.size() != surv.event.size()) throw Error(ErrorCode::kInvalidArgument, "time and event lengths differ");
  const auto order = time_order(surv);
  KMCurve km;
  double s = 1.0;
  std::size_t at_risk = surv.size();
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = surv.time[order[i]];
    std::size_t d = 0, leaving = 0;
    while (i < order.size() && surv.time[order[i]] == t) {
      d += surv.event[order[i]] != 0;
      ++leaving;
      ++i;
    }
    if (d > 0) {
      s *= static_cast<double>(at_risk - d) / static_cast<double>(at_risk);
      km.times.push_back(t);
      km.survival.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
    }
    at_risk -= leaving;
  }
  return km;
}

KMCurve censoring_kaplan_meier(const SurvivalData& surv) {
  SurvivalData swapped = surv;
  for (int& e : swapped.event) e = e ? 0 : 1;
  return kaplan_meier(swapped);
}

// ---- log-rank -----------------------------------------------------------------

LogRankResult log_rank_test(std::span<const SurvivalData> groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw Error(ErrorCode::kDegenerateGroups, "log-rank needs at least two groups");
  struct Obs {
    double time;
    int event;
    std::size_t group;
  };
  std::vector<Obs> all;
  for (std::size_t g = 0; g < k; ++g) {
    if (groups[g].size() == 0) throw Error(ErrorCode::kDegenerateGroups, "group " + std::to_string(g) + " is empty");
    for (std::size_t i = 0; i < groups[g].size(); ++i) all.push_back({groups[g].time[i], groups[g].event[i], g});
  }
  std::stable_sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });

  std::vector<double> at_risk(k, 0.0);
  for (const auto& o : all) at_risk[o.group] += 1.0;

  LogRankResult res;
  res.observed.assign(k, 0.0);
  res.expected.assign(k, 0.0);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::size_t total_events = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    const double t = all[i].time;
    std::vector<double> d(k, 0.0), leaving(k, 0.0);
    while (i < all.size() && all[i].time == t) {
      d[all[i].group] += all[i].event ? 1.0 : 0.0;
      leaving[all[i].group] += 1.0;
      ++i;
    }
    const double dt = std::accumulate(d.begin(), d.end(), 0.0);
    const double nt = std::accumulate(at_risk.begin(), at_risk.end(), 0.0);
    if (dt > 0) {
      total_events += static_cast<std::size_t>(dt);
      for (std::size_t g = 0; g < k; ++g) {
        res.observed[g] += d[g];
        res.expected[g] += dt * at_risk[g] / nt;
      }
      if (nt > 1) {
        const double c = dt * (nt - dt) / (nt * nt * (nt - 1.0));
        for (std::size_t g = 0; g < k; ++g)
          for (std::size_t h = 0; h < k; ++h)
            v(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) +=
                c * at_risk[g] * ((g == h ? nt : 0.0) - at_risk[h]);
      }
    }
    for (std::size_t g = 0; g < k; ++g) at_risk[g] -= leaving[g];
  }
  if (total_events == 0) throw Error(ErrorCode::kNoEvents, "log-rank needs at least one event");

  res.df = static_cast<int>(k) - 1;
  const auto m = static_cast<Eigen::Index>(k - 1);
  Eigen::VectorXd u(m);
  for (Eigen::Index g = 0; g < m; ++g) u(g) = res.observed[static_cast<std::size_t>(g)] - res.expected[static_cast<std::size_t>(g)];
  if (u.isZero(0.0)) {
    res.chi_squared = 0.0;
  } else {
    const Eigen::MatrixXd vm = v.topLeftCorner(m, m);
    res.chi_squared = u.dot(vm.completeOrthogonalDecomposition().solve(u));
  }
  res.p = chi_squared_upper(res.chi_squared, res.df);
  return res;
}

// ---- ANOVA --------------------------------------------------------------------

AnovaResult anova_oneway(std::span<const double> values, std::span<const std::string> groups) {
  if (values.size() != groups.size()) throw Error(ErrorCode::kInvalidArgument, "values and groups differ in length");
  std::map<std::string, std::vector<double>> by_group;
  for (std::size_t i = 0; i < values.size(); ++i) by_group[groups[i]].push_back(values[i]);
  const std::size_t k = by_group.size();
  const std::size_t n = values.size();
  if (k < 2) throw Error(ErrorCode::kDegenerateGroups, "ANOVA needs at least two nonempty groups");
  if (n <= k) throw Error(ErrorCode::kDegenerateGroups, "ANOVA needs more observations than groups");

  double grand = 0.0;
  for (double v : values) grand += v;
  grand /= static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& [name, v] : by_group) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    ssb += static_cast<double>(v.size()) * (mean - grand) * (mean - grand);
    for (double x : v) ssw += (x - mean) * (x - mean);
  }
  AnovaResult r;
  r.df_between = static_cast<double>(k - 1);
  r.df_within = static_cast<double>(n - k);
  if (ssb == 0.0) {
    r.f = 0.0;
    r.p = 1.0;
  } else if (ssw == 0.0) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.f = (ssb / r.df_between) / (ssw / r.df_within);
    r.p = f_upper(r.f, r.df_between, r.df_within);
  }
  return r;
}

std::vector<double> linear_contributions(const LogisticFit& fit, std::span<const double> x,
                                         std::span<const double> background) {
  check_row(fit.columns.size(), x.size());
  check_row(fit.columns.size(), background.size());
  std::vector<double> phi(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) phi[j] = fit.beta(static_cast<Eigen::Index>(j)) * (x[j] - background[j]);
  return phi;
}

}  // namespace morphorisk::stats
