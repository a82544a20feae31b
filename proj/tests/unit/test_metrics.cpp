#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "morphorisk/metrics.hpp"
#include "morphorisk/random.hpp"
#include "oracles.hpp"

using namespace morphorisk;
using namespace morphorisk::metrics;

namespace {

struct Binary {
  std::vector<double> s;
  std::vector<int> y;
};

Binary binary_sample(std::uint64_t seed, std::size_t n, double shift, bool rounded) {
  Rng rng(seed);
  Binary b;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = rng.bernoulli(0.4);
    double s = rng.normal(y ? shift : 0.0, 1.0);
    if (rounded) s = std::round(s * 4) / 4;
    b.s.push_back(s);
    b.y.push_back(y);
  }
  return b;
}

}  // namespace

TEST_CASE("AUC") {
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{3, 3, 3, 3}, std::vector<int>{0, 1, 0, 1}) == 0.5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto b = binary_sample(seed, 200, 0.7, seed % 2 == 0);
    const double a = auc(b.s, b.y);
    CHECK(std::fabs(a - oracle::auc(b.s, b.y)) < 1e-12);
    std::vector<double> transformed;
    for (double v : b.s) transformed.push_back(std::exp(3 * v) - 7);
    CHECK(auc(transformed, b.y) == a);
  }
  try {
    auc(std::vector<double>{1, 2}, std::vector<int>{1, 1});
    FAIL("expected OneClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kOneClass);
  }
}

TEST_CASE("Brier") {
  const std::vector<int> y{0, 1, 1, 0, 1};
  CHECK(brier(std::vector<double>{0, 1, 1, 0, 1}, y) == 0.0);
  CHECK(brier(std::vector<double>(5, 0.5), y) == 0.25);
  const double prev = 0.6;
  CHECK(brier(std::vector<double>(5, prev), y) == doctest::Approx(prev * (1 - prev)).epsilon(1e-14));
  for (double c = 0.0; c <= 1.0; c += 0.01) CHECK(brier(std::vector<double>(5, c), y) >= brier(std::vector<double>(5, prev), y) - 1e-15);
}

TEST_CASE("Harrell C") {
  SurvivalData s{{5, 1, 3, 2, 4}, {1, 1, 1, 1, 1}};
  std::vector<double> neg;
  for (double t : s.time) neg.push_back(-t);
  CHECK(harrell_c(neg, s) == 1.0);
  CHECK(harrell_c(std::vector<double>(5, 2.0), s) == 0.5);

  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    SurvivalData r;
    std::vector<double> lp;
    for (int i = 0; i < 150; ++i) {
      r.time.push_back(1.0 + static_cast<double>(rng.below(60)));
      r.event.push_back(rng.bernoulli(0.7));
      lp.push_back(static_cast<double>(rng.below(20)) / 4.0);
    }
    CHECK(harrell_c(lp, r) == oracle::harrell_c(lp, r));
  }

  const SurvivalData none{{1, 2, 3}, {0, 0, 0}};
  try {
    harrell_c(std::vector<double>{1, 2, 3}, none);
    FAIL("expected NoUsablePairs");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoUsablePairs);
  }
}

TEST_CASE("Harrell C equals AUC for a two-level event time") {
  // Positives die at t=1, negatives at t=2: the usable pairs are exactly the
  // positive/negative pairs, so C and AUC count the same comparisons.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = binary_sample(100 + seed, 120, 0.5, seed % 2 == 1);
    SurvivalData s;
    for (int y : b.y) {
      s.time.push_back(y ? 1.0 : 2.0);
      s.event.push_back(1);
    }
    CHECK(std::fabs(harrell_c(b.s, s) - auc(b.s, b.y)) < 1e-12);
  }
}

TEST_CASE("integrated Brier score") {
  SUBCASE("constant one half") {
    const SurvivalData s{{200, 200, 250, 300}, {1, 0, 1, 0}};
    const auto r = integrated_brier([](std::size_t, double) { return 0.5; }, s, 100);
    CHECK(r.ibs == doctest::Approx(0.25).epsilon(1e-14));
    for (double b : r.brier) CHECK(b == 0.25);
  }
  SUBCASE("oracle predictor") {
    const SurvivalData s{{3, 7, 10, 12, 20}, {1, 1, 1, 1, 1}};
    const auto r = integrated_brier([&](std::size_t i, double t) { return s.time[i] > t ? 1.0 : 0.0; }, s, 15);
    CHECK(r.ibs == 0.0);
  }
  SUBCASE("direct summation oracle with censoring") {
    Rng rng(17);
    SurvivalData s;
    std::vector<double> rate;
    for (int i = 0; i < 50; ++i) {
      const double lam = 0.01 * std::exp(rng.normal(0, 0.5));
      const double ti = rng.exponential(lam), ci = rng.uniform(0, 200);
      rate.push_back(lam * std::exp(rng.normal(0, 0.2)));
      s.time.push_back(std::min(ti, ci));
      s.event.push_back(ti <= ci);
    }
    const double horizon = 120;
    const auto r = integrated_brier([&](std::size_t i, double t) { return std::exp(-rate[i] * t); }, s, horizon);
    CHECK(std::fabs(r.ibs - oracle::ibs_exponential(rate, s, horizon)) < 1e-10);
    CHECK_FALSE(r.truncated);
  }
  SUBCASE("KM marginal on uncensored data") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
      SurvivalData s;
      for (int i = 0; i < 80; ++i) {
        s.time.push_back(1.0 + rng.exponential(0.05));
        s.event.push_back(1);
      }
      const auto km = stats::kaplan_meier(s);
      const double horizon = *std::max_element(s.time.begin(), s.time.end());
      const auto r = integrated_brier([&](std::size_t, double t) { return km.at(t); }, s, horizon);
      CHECK(r.ibs <= 0.25 + 1e-9);
    }
  }
  SUBCASE("errors") {
    const SurvivalData s{{1, 2, 3}, {0, 0, 0}};
    CHECK_THROWS_AS(integrated_brier([](std::size_t, double) { return 0.5; }, s, 2), Error);
  }
}

TEST_CASE("Cox IBS overload agrees with the generic form") {
  Rng rng(5);
  std::vector<double> x, t;
  std::vector<int> e;
  for (int i = 0; i < 100; ++i) {
    x.push_back(rng.normal());
    const double ti = rng.exponential(0.02 * std::exp(0.7 * x.back())), ci = rng.uniform(0, 100);
    t.push_back(std::min(ti, ci));
    e.push_back(ti <= ci);
  }
  stats::DesignBuilder b(100);
  b.add_numeric("x", x);
  const auto d = b.build();
  const SurvivalData s{t, e};
  const auto fit = stats::fit_cox(d, s);
  const auto r1 = integrated_brier(fit, d.x, s, 60);
  const auto r2 = integrated_brier(
      [&](std::size_t i, double tt) { return stats::predict_survival(fit, std::vector<double>{x[i]}, tt); }, s, 60);
  CHECK(r1.ibs == doctest::Approx(r2.ibs).epsilon(1e-12));
  CHECK(r1.ibs > 0);
  CHECK(r1.ibs < 0.25);
}

TEST_CASE("percentile type 7") {
  CHECK(percentile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(percentile({1, 2, 3, 4}, 0.0) == 1);
  CHECK(percentile({1, 2, 3, 4}, 1.0) == 4);
  CHECK(percentile({10}, 0.975) == 10);
  CHECK(percentile({0, 10}, 0.025) == doctest::Approx(0.25));
}

TEST_CASE("bootstrap CI") {
  const auto b = binary_sample(9, 150, 0.8, false);
  const auto metric = auc_metric(b.s, b.y);
  BootstrapOptions one;
  one.replicates = 1;
  one.seed = 4;
  const auto r1 = bootstrap_ci(metric, b.s.size(), one);
  CHECK(r1.lower == r1.values[0]);
  CHECK(r1.upper == r1.values[0]);

  BootstrapOptions opt;
  opt.replicates = 300;
  opt.seed = 42;
  const auto a = bootstrap_ci(metric, b.s.size(), opt);
  const auto a2 = bootstrap_ci(metric, b.s.size(), opt);
  CHECK(a.values == a2.values);
  CHECK(a.lower == a2.lower);
  CHECK(a.upper == a2.upper);
  CHECK(a.lower <= a.upper);
  CHECK(a.point == auc(b.s, b.y));
  opt.threads = 4;
  const auto a4 = bootstrap_ci(metric, b.s.size(), opt);
  CHECK(a4.values == a.values);
  opt.seed = 43;
  CHECK(bootstrap_ci(metric, b.s.size(), opt).values != a.values);
}

TEST_CASE("bootstrap redraws and TooManyDegenerate") {
  std::vector<double> s(20);
  std::iota(s.begin(), s.end(), 0.0);
  std::vector<int> y(20, 0);
  y[3] = 1;
  BootstrapOptions opt;
  opt.replicates = 200;
  try {
    bootstrap_ci(auc_metric(s, y), 20, opt);
    FAIL("expected TooManyDegenerate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooManyDegenerate);
  }
  y[7] = y[11] = y[15] = 1;
  const auto r = bootstrap_ci(auc_metric(s, y), 20, opt);
  CHECK(r.redraws > 0);
  CHECK(r.values.size() == 200);
}

TEST_CASE("bootstrap coverage of a known AUC") {
  // scores N(d,1) vs N(0,1): AUC = Phi(d / sqrt 2)
  const double d = 1.0;
  const double truth = 0.5 * std::erfc(-d / 2.0);
  int covered = 0;
  for (std::uint64_t c = 0; c < 200; ++c) {
    Rng rng(derive_seed(1234, c));
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
      y.push_back(i % 2);
      s.push_back(rng.normal(i % 2 ? d : 0.0, 1.0));
    }
    BootstrapOptions opt;
    opt.replicates = 500;
    opt.seed = c;
    const auto r = bootstrap_ci(auc_metric(s, y), s.size(), opt);
    covered += r.lower <= truth && truth <= r.upper;
  }
  CHECK(covered >= 180);
  CHECK(covered <= 198);
}

TEST_CASE("paired bootstrap test") {
  Rng rng(6);
  std::vector<double> perfect, constant, noisy;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    y.push_back(rng.bernoulli(0.3));
    perfect.push_back(y.back());
    constant.push_back(0.5);
    noisy.push_back(y.back() + rng.normal(0, 1.5));
  }
  BootstrapOptions opt;
  opt.replicates = 500;
  opt.seed = 1;
  const auto same = paired_bootstrap_test("auc", auc_metric(noisy, y), auc_metric(noisy, y), 200, opt);
  CHECK(same.p_two_sided == 1.0);
  CHECK(same.difference == 0.0);

  const auto strong = paired_bootstrap_test("auc", auc_metric(perfect, y), auc_metric(constant, y), 200, opt);
  CHECK(strong.p_two_sided <= 0.01);
  CHECK(strong.p_two_sided >= 1.0 / 500);
  CHECK(strong.difference == doctest::Approx(0.5));

  const auto ab = paired_bootstrap_test("auc", auc_metric(noisy, y), auc_metric(perfect, y), 200, opt);
  const auto ba = paired_bootstrap_test("auc", auc_metric(perfect, y), auc_metric(noisy, y), 200, opt);
  CHECK(ab.p_two_sided == ba.p_two_sided);
  CHECK(ab.difference == -ba.difference);
  opt.threads = 3;
  CHECK(paired_bootstrap_test("auc", auc_metric(noisy, y), auc_metric(perfect, y), 200, opt).p_two_sided ==
        ab.p_two_sided);
}

TEST_CASE("C-index resample adapter") {
  const SurvivalData s{{1, 2, 3, 4, 5, 6}, {1, 1, 0, 1, 0, 1}};
  const std::vector<double> lp{6, 5, 4, 3, 2, 1};
  const auto m = harrell_c_metric(lp, s);
  const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  CHECK(*m(all) == 1.0);
  const std::vector<std::size_t> censored_only{2, 4, 4};
  CHECK_FALSE(m(censored_only).has_value());
}
