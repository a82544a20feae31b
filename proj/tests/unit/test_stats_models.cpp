#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "morphorisk/error.hpp"
#include "morphorisk/random.hpp"
#include "morphorisk/stats_models.hpp"
#include "oracles.hpp"

using namespace morphorisk;
using namespace morphorisk::stats;

namespace {

DesignMatrix design_of(std::vector<std::vector<double>> cols, std::vector<std::string> names) {
  const std::size_t n = cols.empty() ? 0 : cols[0].size();
  DesignBuilder b(n);
  for (std::size_t j = 0; j < cols.size(); ++j) b.add_numeric(names[j], cols[j]);
  return b.build();
}

using oracle::expit;

double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  double d = 0;
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, std::max((i + 1) / n - p[i], p[i] - i / n));
  }
  return d;
}

struct LogisticSample {
  std::vector<double> x;
  std::vector<int> y;
};

LogisticSample logistic_sample(std::uint64_t seed, std::size_t n, double a, double b) {
  Rng rng(seed);
  LogisticSample s;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    s.x.push_back(x);
    s.y.push_back(rng.bernoulli(expit(a + b * x)) ? 1 : 0);
  }
  return s;
}

}  // namespace

TEST_CASE("logistic: symmetric data gives zero coefficients") {
  const auto d = design_of({{1, 1, -1, -1}}, {"x"});
  const std::vector<int> y{1, 0, 1, 0};
  const auto fit = fit_logistic(d, y);
  CHECK(fit.converged());
  CHECK(fit.intercept == doctest::Approx(0).epsilon(1e-12));
  CHECK(std::fabs(fit.beta(0)) < 1e-10);
}

TEST_CASE("logistic: intercept-only recovers logit of prevalence") {
  DesignMatrix d;
  d.x.resize(8, 0);
  const std::vector<int> y{1, 1, 0, 0, 0, 0, 0, 0};
  const auto fit = fit_logistic(d, y);
  CHECK(fit.converged());
  CHECK(fit.intercept == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-10));
  CHECK(fit.intercept == doctest::Approx(-1.0986).epsilon(1e-4));
}

TEST_CASE("logistic: synthetic recovery, grid oracle and gradient") {
  const auto s = logistic_sample(11, 2000, -0.5, 0.8);
  const auto d = design_of({s.x}, {"x"});
  const auto fit = fit_logistic(d, s.y);
  REQUIRE(fit.converged());
  CHECK(std::fabs(fit.intercept + 0.5) < 3 * fit.intercept_se);
  CHECK(std::fabs(fit.beta(0) - 0.8) < 3 * fit.se(0));
  CHECK(fit.max_abs_score < 1e-8);

  // coarse grid then refinement around the grid maximum
  double best = -1e300, ba = 0, bb = 0;
  for (double a = -2; a <= 2; a += 0.05)
    for (double b = -2; b <= 2; b += 0.05) {
      const double ll = oracle::logistic_ll(s.x, s.y, a, b);
      if (ll > best) { best = ll; ba = a; bb = b; }
    }
  CHECK(std::fabs(ba - fit.intercept) <= 0.05);
  CHECK(std::fabs(bb - fit.beta(0)) <= 0.05);
  CHECK(fit.log_likelihood >= best - 1e-9);
  CHECK(fit.log_likelihood == doctest::Approx(oracle::logistic_ll(s.x, s.y, fit.intercept, fit.beta(0))).epsilon(1e-12));

  const double h = 1e-5;
  const double ga = (oracle::logistic_ll(s.x, s.y, fit.intercept + h, fit.beta(0)) -
                     oracle::logistic_ll(s.x, s.y, fit.intercept - h, fit.beta(0))) / (2 * h);
  const double gb = (oracle::logistic_ll(s.x, s.y, fit.intercept, fit.beta(0) + h) -
                     oracle::logistic_ll(s.x, s.y, fit.intercept, fit.beta(0) - h)) / (2 * h);
  CHECK(std::max(std::fabs(ga), std::fabs(gb)) < 1e-4);

  // Wald p from the z statistic
  CHECK(fit.p(0) == doctest::Approx(std::erfc(std::fabs(fit.z(0)) / std::sqrt(2.0))).epsilon(1e-10));
}

TEST_CASE("logistic: SE matches inverse observed information") {
  const auto s = logistic_sample(5, 300, 0.2, -0.6);
  const auto fit = fit_logistic(design_of({s.x}, {"x"}), s.y);
  double i00 = 0, i01 = 0, i11 = 0;
  for (std::size_t k = 0; k < s.x.size(); ++k) {
    const double p = expit(fit.intercept + fit.beta(0) * s.x[k]);
    const double w = p * (1 - p);
    i00 += w;
    i01 += w * s.x[k];
    i11 += w * s.x[k] * s.x[k];
  }
  const double det = i00 * i11 - i01 * i01;
  CHECK(fit.se(0) == doctest::Approx(std::sqrt(i00 / det)).epsilon(1e-8));
  CHECK(fit.intercept_se == doctest::Approx(std::sqrt(i11 / det)).epsilon(1e-8));
}

TEST_CASE("logistic: 3-SE coverage over 100 replications") {
  int covered = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    const auto s = logistic_sample(derive_seed(77, r), 2000, -0.5, 0.8);
    const auto fit = fit_logistic(design_of({s.x}, {"x"}), s.y);
    covered += std::fabs(fit.beta(0) - 0.8) < 3 * fit.se(0) && std::fabs(fit.intercept + 0.5) < 3 * fit.intercept_se;
  }
  CHECK(covered >= 95);
}

TEST_CASE("logistic: separation and error conditions") {
  const auto d = design_of({{-2, -1, -0.5, 0.5, 1, 2}}, {"x"});
  const auto fit = fit_logistic(d, std::vector<int>{0, 0, 0, 1, 1, 1});
  CHECK(fit.status == FitStatus::kSeparation);
  CHECK_FALSE(fit.converged());
  CHECK_FALSE(fit.diagnostic.empty());

  const std::vector<int> ones(6, 1);
  CHECK_THROWS_AS(fit_logistic(d, ones), Error);
  try {
    fit_logistic(d, ones);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kOneClass);
  }
  const auto collinear = design_of({{1, 2, 3, 4, 5, 6}, {2, 4, 6, 8, 10, 12}}, {"a", "b"});
  try {
    fit_logistic(collinear, std::vector<int>{0, 1, 0, 1, 1, 0});
    FAIL("expected SingularInformation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularInformation);
  }
  const auto constant = design_of({{1, 1, 1, 1}}, {"c"});
  try {
    fit_logistic(constant, std::vector<int>{0, 1, 0, 1});
    FAIL("expected ConstantColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConstantColumn);
  }
}

TEST_CASE("categorical encoding and design builder") {
  const std::vector<std::string> v{"b", "a", "b", "c", "a", "b"};
  const auto enc = make_encoding("grp", v);
  CHECK(enc.reference == "b");
  CHECK(enc.levels == std::vector<std::string>{"a", "c"});
  const std::vector<std::string> tie{"y", "x"};
  CHECK(make_encoding("t", tie).reference == "x");

  DesignBuilder b(6);
  const std::vector<double> age{50, 60, 70, 80, 65, 55};
  b.add_numeric("age", age);
  const std::vector<std::string> v2{"b", "a", "b", "c", "z", "b"};
  b.add_categorical(enc, v2);
  const auto d = b.build();
  CHECK(b.unseen_levels() == 1);
  CHECK(d.columns == std::vector<std::string>{"age", "grp=a", "grp=c"});
  CHECK(d.term("grp").count == 2);
  CHECK(d.x(1, 1) == 1.0);
  CHECK(d.x(3, 2) == 1.0);
  CHECK(d.x(4, 1) + d.x(4, 2) == 0.0);
  const auto dropped = d.without_term("grp");
  CHECK(dropped.columns == std::vector<std::string>{"age"});
  CHECK(dropped.terms.size() == 1);
}

TEST_CASE("odds ratio interval") {
  const auto r0 = wald_ratio_ci(0.0, 0.3);
  CHECK(r0.ratio == 1.0);
  CHECK(r0.lower < 1.0);
  CHECK(r0.upper > 1.0);
  CHECK(r0.p == doctest::Approx(1.0));
  CHECK(wald_ratio_ci(std::log(2.0), 0.0).ratio == doctest::Approx(2.0));
  CHECK(wald_ratio_ci(std::log(2.0), 1e-12).lower == doctest::Approx(2.0));
  double prev_lo = 2.0, prev_hi = 2.0;
  for (double se = 0.05; se < 2; se += 0.05) {
    const auto r = wald_ratio_ci(std::log(2.0), se);
    CHECK(r.lower < prev_lo);
    CHECK(r.upper > prev_hi);
    CHECK(r.lower == doctest::Approx(std::exp(std::log(2.0) - 1.96 * se)).epsilon(1e-4));
    prev_lo = r.lower;
    prev_hi = r.upper;
  }
  // protective per-SD predictor
  const auto s = logistic_sample(3, 1000, -1.0, -0.8);
  const auto fit = fit_logistic(design_of({s.x}, {"x"}), s.y);
  const auto orci = odds_ratio_ci(fit, 0);
  CHECK(orci.ratio < 1.0);
  CHECK(orci.upper < 1.0);
  CHECK(orci.lower < orci.ratio);
}

TEST_CASE("Cox: 6-subject grid oracle, Efron equals Breslow without ties") {
  const std::vector<double> x{0.5, -1.0, 1.2, 0.0, 2.0, -0.3};
  const std::vector<double> t{5, 8, 2, 10, 3, 7};
  const std::vector<int> e{1, 0, 1, 1, 1, 0};
  const auto d = design_of({x}, {"x"});
  const SurvivalData surv{t, e};
  const auto fit = fit_cox(d, surv);
  REQUIRE(fit.converged());
  const double oracle = oracle::ternary_max([&](double b) { return oracle::cox_ll(x, t, e, b, true); }, -5, 5);
  CHECK(fit.beta(0) == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(fit.log_partial_likelihood == doctest::Approx(oracle::cox_ll(x, t, e, fit.beta(0), true)).epsilon(1e-10));
  for (double b = -5; b <= 5; b += 0.01) CHECK(fit.log_partial_likelihood >= oracle::cox_ll(x, t, e, b, true) - 1e-12);
  CHECK(fit.null_log_partial_likelihood == doctest::Approx(oracle::cox_ll(x, t, e, 0.0, true)));

  CoxOptions breslow;
  breslow.ties = TieMethod::kBreslow;
  const auto fb = fit_cox(d, surv, breslow);
  CHECK(std::fabs(fb.beta(0) - fit.beta(0)) < 1e-8);
}

TEST_CASE("Cox: tied likelihood matches naive Efron and Breslow") {
  const std::vector<double> x{0.5, -1.0, 1.2, 0.0, 2.0, -0.3, 0.7, -0.8};
  const std::vector<double> t{2, 2, 2, 4, 4, 6, 6, 9};
  const std::vector<int> e{1, 1, 0, 1, 1, 1, 0, 1};
  const auto d = design_of({x}, {"x"});
  const SurvivalData surv{t, e};
  Eigen::VectorXd b(1);
  for (double bv : {-1.0, 0.0, 0.4, 1.3}) {
    b(0) = bv;
    CHECK(cox_log_partial_likelihood(d, surv, b, TieMethod::kEfron) == doctest::Approx(oracle::cox_ll(x, t, e, bv, true)).epsilon(1e-12));
    CHECK(cox_log_partial_likelihood(d, surv, b, TieMethod::kBreslow) == doctest::Approx(oracle::cox_ll(x, t, e, bv, false)).epsilon(1e-12));
  }
  const auto fit = fit_cox(d, surv);
  const double oracle = oracle::ternary_max([&](double bv) { return oracle::cox_ll(x, t, e, bv, true); }, -5, 5);
  CHECK(fit.beta(0) == doctest::Approx(oracle).epsilon(1e-4));
}

struct CoxSample {
  DesignMatrix design;
  SurvivalData surv;
};

CoxSample hr2_sample(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x, t;
  std::vector<int> e;
  for (int i = 0; i < 2000; ++i) {
    const double g = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double ti = rng.exponential(0.01 * (g ? 2.0 : 1.0));
    const double ci = rng.uniform(0, 500);
    x.push_back(g);
    t.push_back(std::max(std::min(ti, ci), 1e-3));
    e.push_back(ti <= ci ? 1 : 0);
  }
  return {design_of({x}, {"g"}), SurvivalData{t, e}};
}

TEST_CASE("Cox: HR 2 recovered across replications") {
  // se(log HR) is about 0.05 here, so [1.8, 2.2] is roughly a +/-1.9 se band
  int inside = 0;
  double mean_log = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto s = hr2_sample(derive_seed(55, r));
    const auto fit = fit_cox(s.design, s.surv);
    inside += fit.hazard_ratio(0) >= 1.8 && fit.hazard_ratio(0) <= 2.2;
    mean_log += fit.beta(0) / 20;
  }
  CHECK(inside >= 17);
  CHECK(std::exp(mean_log) == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("Cox: synthetic HR 2 with censoring, baseline and prediction") {
  const auto sample = hr2_sample(1000);
  const auto& d = sample.design;
  const auto& surv = sample.surv;
  const double censored = 1.0 - double(surv.event_count()) / 2000.0;
  CHECK(censored > 0.1);
  CHECK(censored < 0.35);
  const auto fit = fit_cox(d, surv);
  REQUIRE(fit.converged());
  CHECK(fit.hazard_ratio(0) > 1.8);
  CHECK(fit.hazard_ratio(0) < 2.2);
  const auto ci = hazard_ratio_ci(fit, 0);
  CHECK(ci.lower == doctest::Approx(std::exp(fit.beta(0) - 1.959963984540054 * fit.se(0))).epsilon(1e-12));
  CHECK(ci.upper == doctest::Approx(std::exp(fit.beta(0) + 1.959963984540054 * fit.se(0))).epsilon(1e-12));

  CHECK(std::is_sorted(fit.baseline_times.begin(), fit.baseline_times.end()));
  CHECK(std::is_sorted(fit.baseline_cumhaz.begin(), fit.baseline_cumhaz.end()));
  // baseline rate 0.01/day for the reference group
  CHECK(fit.cumulative_hazard(100) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(fit.cumulative_hazard(0.0) == 0.0);

  const std::vector<double> x0{0.0}, x1{1.0};
  CHECK(predict_survival(fit, x1, 100) < predict_survival(fit, x0, 100));
  CHECK(predict_linear(fit, x1) == doctest::Approx(fit.beta(0)));
  const std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS(predict_linear(fit, bad), Error);

  // row order does not matter
  std::vector<std::size_t> perm(2000);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::reverse(perm.begin(), perm.end());
  const auto fr = fit_cox(d.select_rows(perm), surv.select(perm));
  CHECK(std::fabs(fr.beta(0) - fit.beta(0)) < 1e-10);
  CHECK(std::fabs(fr.se(0) - fit.se(0)) < 1e-10);
}

TEST_CASE("Cox: zero coefficient gives baseline survival for every row") {
  CoxFit fit;
  fit.columns = {"a"};
  fit.beta = Eigen::VectorXd::Zero(1);
  fit.baseline_times = {1, 3};
  fit.baseline_cumhaz = {0.1, 0.4};
  for (double v : {-3.0, 0.0, 7.0}) {
    const std::vector<double> row{v};
    CHECK(predict_survival(fit, row, 2.0) == doctest::Approx(std::exp(-0.1)));
    CHECK(predict_survival(fit, row, 3.0) == doctest::Approx(std::exp(-0.4)));
  }
}

TEST_CASE("Cox: error conditions") {
  const SurvivalData none{{1, 2, 3, 4}, {0, 0, 0, 0}};
  const auto d = design_of({{1, 0, 1, 0}}, {"x"});
  try {
    fit_cox(d, none);
    FAIL("expected NoEvents");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoEvents);
  }
  const auto constant = design_of({{1, 1, 1, 1}}, {"x"});
  const SurvivalData some{{1, 2, 3, 4}, {1, 0, 1, 0}};
  try {
    fit_cox(constant, some);
    FAIL("expected ConstantColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConstantColumn);
  }
  // monotone likelihood: the covariate orders the deaths perfectly
  const auto mono = design_of({{3, 2, 1, 0}}, {"x"});
  const SurvivalData all{{1, 2, 3, 4}, {1, 1, 1, 1}};
  CHECK(fit_cox(mono, all).status == FitStatus::kSeparation);
}

TEST_CASE("predict logistic") {
  LogisticFit fit;
  fit.columns = {"a", "b"};
  fit.intercept = -0.7;
  fit.beta = Eigen::Vector2d(0.5, -1.0);
  const std::vector<double> zero{0, 0};
  CHECK(predict_probability(fit, zero) == doctest::Approx(expit(-0.7)));
  double prev = 0;
  for (double a = -3; a <= 3; a += 0.5) {
    const std::vector<double> row{a, 0.2};
    const double p = predict_probability(fit, row);
    CHECK(p > prev);
    CHECK(p > 0);
    CHECK(p < 1);
    prev = p;
  }
  const std::vector<double> short_row{1.0};
  try {
    predict_probability(fit, short_row);
    FAIL("expected ColumnMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kColumnMismatch);
  }
}

TEST_CASE("Kaplan-Meier") {
  SUBCASE("no events") {
    const auto km = kaplan_meier({{1, 2, 3}, {0, 0, 0}});
    CHECK(km.times.empty());
    CHECK(km.at(100) == 1.0);
  }
  SUBCASE("three subjects") {
    const auto km = kaplan_meier({{1, 1.5, 2}, {1, 0, 1}});
    CHECK(km.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(km.at(2) == 0.0);
    CHECK(km.before(2) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("ten-subject hand table") {
    // t : 2  3+ 4  4  5+ 6  6+ 8  9+ 10
    // n at risk / deaths: 10/1, 8/2, 5/1 (censor at 6 stays), 3/1, 1/1
    const SurvivalData s{{2, 3, 4, 4, 5, 6, 6, 8, 9, 10}, {1, 0, 1, 1, 0, 1, 0, 1, 0, 1}};
    const auto km = kaplan_meier(s);
    const std::vector<double> times{2, 4, 6, 8, 10};
    const std::vector<double> surv{0.9, 0.9 * 6 / 8, 0.9 * 6 / 8 * 4 / 5, 0.9 * 6 / 8 * 4 / 5 * 2 / 3, 0.0};
    const std::vector<std::size_t> risk{10, 8, 5, 3, 1};
    REQUIRE(km.times == times);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(km.survival[i] == doctest::Approx(surv[i]).epsilon(1e-14));
      CHECK(km.at_risk[i] == risk[i]);
    }
    CHECK(km.survival[1] == doctest::Approx(0.675));
    CHECK(km.survival[2] == doctest::Approx(0.54));
    CHECK(km.survival[3] == doctest::Approx(0.36));
    CHECK(km.at(5.5) == doctest::Approx(0.675));
    CHECK(km.at(1.0) == 1.0);
  }
  SUBCASE("random properties") {
    Rng rng(9);
    for (int rep = 0; rep < 20; ++rep) {
      SurvivalData s;
      for (int i = 0; i < 40; ++i) {
        s.time.push_back(1.0 + static_cast<double>(rng.below(30)));
        s.event.push_back(rng.bernoulli(0.6));
      }
      const auto km = kaplan_meier(s);
      double prev = 1.0;
      for (double v : km.survival) {
        CHECK(v <= prev);
        CHECK(v >= 0.0);
        prev = v;
      }
      SurvivalData more = s;
      more.time.push_back(1000.0);
      more.event.push_back(0);
      const auto km2 = kaplan_meier(more);
      REQUIRE(km2.times.size() == km.times.size());
      // S changes only through the extra subject in every risk set, so
      // compare against an independent product-limit with it included
      for (std::size_t i = 0; i < km.times.size(); ++i) {
        CHECK(km2.at_risk[i] == km.at_risk[i] + 1);
      }
      SurvivalData censored = s;
      std::fill(censored.event.begin(), censored.event.end(), 0);
      CHECK(kaplan_meier(censored).at(1e9) == 1.0);
    }
  }
}

TEST_CASE("Kaplan-Meier: extending follow-up past the last event leaves S unchanged") {
  // A subject censored at or after the last event time sits in every risk
  // set either way, so moving its censoring time later changes nothing.
  const SurvivalData s{{2, 3, 5, 7, 7}, {1, 0, 1, 1, 0}};
  const SurvivalData later{{2, 3, 5, 7, 40}, {1, 0, 1, 1, 0}};
  const auto a = kaplan_meier(s), b = kaplan_meier(later);
  CHECK(a.times == b.times);
  for (double t : {1.0, 2.0, 3.0, 5.0, 6.5, 7.0, 100.0}) CHECK(a.at(t) == b.at(t));
  CHECK(a.at(7.0) == doctest::Approx(0.8 * 2.0 / 3.0 * 0.5));
}

TEST_CASE("log-rank") {
  const SurvivalData g{{1, 2, 3, 4, 5, 6}, {1, 0, 1, 1, 0, 1}};
  const std::vector<SurvivalData> same{g, g};
  const auto r = log_rank_test(same);
  CHECK(r.chi_squared == 0.0);
  CHECK(r.p == 1.0);
  CHECK(r.df == 1);

  SurvivalData a, b;
  for (int i = 0; i < 10; ++i) {
    a.time.push_back(1.0);
    a.event.push_back(1);
    b.time.push_back(365.0);
    b.event.push_back(0);
  }
  const std::vector<SurvivalData> ab{a, b};
  CHECK(log_rank_test(ab).p < 0.01);

  // two-group statistic against a direct (O-E)^2/V computation
  const SurvivalData c{{1, 3, 4, 6, 8}, {1, 1, 0, 1, 0}};
  const SurvivalData d{{2, 3, 5, 7}, {1, 1, 1, 0}};
  const std::vector<SurvivalData> cd{c, d};
  double o = 0, e = 0, v = 0;
  for (double t : {1.0, 2.0, 3.0, 5.0, 6.0}) {
    double n1 = 0, n = 0, d1 = 0, dt = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      n1 += c.time[i] >= t;
      d1 += c.time[i] == t && c.event[i];
    }
    n = n1;
    dt = d1;
    for (std::size_t i = 0; i < d.size(); ++i) {
      n += d.time[i] >= t;
      dt += d.time[i] == t && d.event[i];
    }
    o += d1;
    e += dt * n1 / n;
    v += dt * (n1 / n) * (1 - n1 / n) * (n - dt) / (n - 1);
  }
  const auto rcd = log_rank_test(cd);
  CHECK(rcd.chi_squared == doctest::Approx((o - e) * (o - e) / v).epsilon(1e-12));

  const std::vector<SurvivalData> with_empty{g, SurvivalData{}};
  try {
    log_rank_test(with_empty);
    FAIL("expected DegenerateGroups");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::kDegenerateGroups);
  }
}

TEST_CASE("log-rank: permutation null is uniform") {
  Rng rng(31);
  SurvivalData all;
  for (int i = 0; i < 60; ++i) {
    const double ti = rng.exponential(0.02), ci = rng.uniform(0, 100);
    all.time.push_back(std::min(ti, ci));
    all.event.push_back(ti <= ci);
  }
  std::vector<double> ps;
  std::vector<std::size_t> idx(60);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int rep = 0; rep < 500; ++rep) {
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    const std::vector<std::size_t> ga(idx.begin(), idx.begin() + 30), gb(idx.begin() + 30, idx.end());
    const std::vector<SurvivalData> groups{all.select(ga), all.select(gb)};
    ps.push_back(log_rank_test(groups).p);
  }
  CHECK(ks_uniform(ps) < 1.358 / std::sqrt(500.0));
}

TEST_CASE("ANOVA") {
  const std::vector<double> v{1, 2, 3, 1, 2, 3};
  const std::vector<std::string> g{"a", "a", "a", "b", "b", "b"};
  const auto r = anova_oneway(v, g);
  CHECK(r.f == 0.0);
  CHECK(r.p == 1.0);

  Rng rng(4);
  std::vector<double> x;
  std::vector<std::string> grp;
  for (int i = 0; i < 25; ++i) {
    x.push_back(rng.normal(0.3, 1.0));
    grp.push_back("p");
  }
  for (int i = 0; i < 17; ++i) {
    x.push_back(rng.normal(-0.2, 1.5));
    grp.push_back("q");
  }
  // pooled two-sample t
  double m1 = 0, m2 = 0;
  for (int i = 0; i < 25; ++i) m1 += x[i];
  for (int i = 25; i < 42; ++i) m2 += x[i];
  m1 /= 25;
  m2 /= 17;
  double ss = 0;
  for (int i = 0; i < 25; ++i) ss += (x[i] - m1) * (x[i] - m1);
  for (int i = 25; i < 42; ++i) ss += (x[i] - m2) * (x[i] - m2);
  const double sp2 = ss / 40;
  const double tstat = (m1 - m2) / std::sqrt(sp2 * (1.0 / 25 + 1.0 / 17));
  const auto a2 = anova_oneway(x, grp);
  CHECK(std::fabs(a2.f - tstat * tstat) < 1e-10);
  CHECK(a2.df_between == 1);
  CHECK(a2.df_within == 40);

  std::vector<double> ps;
  for (int rep = 0; rep < 500; ++rep) {
    auto shuffled = grp;
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    ps.push_back(anova_oneway(x, shuffled).p);
  }
  CHECK(ks_uniform(ps) < 1.358 / std::sqrt(500.0));

  const std::vector<std::string> one(6, "a");
  try {
    anova_oneway(v, one);
    FAIL("expected DegenerateGroups");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateGroups);
  }
}

TEST_CASE("linear contributions") {
  LogisticFit fit;
  fit.columns = {"a", "b", "c"};
  fit.intercept = 0.3;
  fit.beta = Eigen::Vector3d(0.5, -1.2, 2.0);
  const std::vector<double> bg{1.0, 2.0, -0.5};
  const auto zero = linear_contributions(fit, bg, bg);
  for (double phi : zero) CHECK(phi == 0.0);

  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    const auto phi = linear_contributions(fit, x, bg);
    const double sum = std::accumulate(phi.begin(), phi.end(), 0.0);
    CHECK(std::fabs(sum + predict_linear(fit, bg) - predict_linear(fit, x)) < 1e-12);
  }

  // a feature duplicated at half weight splits its contribution equally
  const auto s = logistic_sample(12, 500, 0.0, 1.0);
  const auto single = fit_logistic(design_of({s.x}, {"x"}), s.y);
  LogisticFit dup = single;
  dup.columns = {"x", "x_copy"};
  dup.beta = Eigen::Vector2d(single.beta(0) / 2, single.beta(0) / 2);
  const std::vector<double> row{1.7}, row2{1.7, 1.7}, bg1{0.1}, bg2{0.1, 0.1};
  const auto p1 = linear_contributions(single, row, bg1);
  const auto p2 = linear_contributions(dup, row2, bg2);
  CHECK(p2[0] == doctest::Approx(p2[1]));
  CHECK(p2[0] + p2[1] == doctest::Approx(p1[0]));

  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(linear_contributions(fit, bad, bg), Error);
}

TEST_CASE("likelihood ratio p") {
  CHECK(likelihood_ratio_p(-10, -10, 1) == 1.0);
  CHECK(likelihood_ratio_p(-10, -11.920729, 1) == doctest::Approx(0.05).epsilon(1e-4));
}
