#include <gtest/gtest.h>

#include <cmath>

#include "slm/estimators.hpp"
#include "support/oracles.hpp"

using namespace slm;

namespace {

Expr P(const char* s) { return parse_expr(s, "x"); }

ProcessModel gbm() { return DiffusionModel{P("x"), 1.0}; }

void expect_same(const DefectCurve& a, const DefectCurve& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  EXPECT_EQ(a.n_overflowed, b.n_overflowed);
  EXPECT_EQ(a.positivity_triggers, b.positivity_triggers);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].mean_est, b.rows[k].mean_est);
    EXPECT_EQ(a.rows[k].stderr_est, b.rows[k].stderr_est);
    EXPECT_EQ(a.rows[k].ci_low, b.rows[k].ci_low);
    EXPECT_EQ(a.rows[k].n_overflowed, b.rows[k].n_overflowed);
  }
}

void expect_same(const TailScan& a, const TailScan& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  EXPECT_EQ(a.n_overflowed, b.n_overflowed);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].prob_est, b.rows[k].prob_est);
    EXPECT_EQ(a.rows[k].grid_prob_est, b.rows[k].grid_prob_est);
    EXPECT_EQ(a.rows[k].coarse_prob_est, b.rows[k].coarse_prob_est);
  }
}

}  // namespace

TEST(PathSup, Examples) {
  SamplePath p{uniform_grid(1.0, 2), {0.0, -3.0, 2.0}};
  EXPECT_EQ(path_sup(p), 3.0);
  SamplePath c{uniform_grid(1.0, 3), {-1.5, -1.5, -1.5, -1.5}};
  EXPECT_EQ(path_sup(c), 1.5);
}

TEST(PathSup, RefinementNeverLowers) {
  for (std::uint64_t i = 0; i < 50; ++i) {
    const SamplePath coarse = sample_brownian_path(uniform_grid(1.0, 256), 0.0, derive_stream(9, i));
    const SamplePath fine = brownian_bridge_refine(coarse, 16, derive_stream(19, i));
    EXPECT_GE(path_sup(fine), path_sup(coarse));
  }
}

TEST(MeanCurve, GbmHasNoDefect) {
  const DefectCurve c = mean_curve(gbm(), uniform_grid(1.0, 64), {0.5, 1.0}, 100000, 42);
  for (const DefectRow& r : c.rows) {
    EXPECT_LE(std::abs(r.defect_est), 3.0 * r.stderr_est) << r.t;
    EXPECT_GT(r.stderr_est, 0.0);
    EXPECT_LE(r.ci_low, r.defect_est);
    EXPECT_GE(r.ci_high, r.defect_est);
  }
}

TEST(MeanCurve, InverseBes3Defect) {
  const DefectCurve c = mean_curve(InverseBes3Model{}, uniform_grid(1.0, 1), {1.0}, 100000, 42);
  const double gamma = 1.0 - std::erf(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(c.rows[0].defect_est, gamma, 3.0 * c.rows[0].stderr_est);
  const oracle::McEstimate o = oracle::inverse_bes3_mean(1.0, 1.0, 200000, 3);
  EXPECT_NEAR(1.0 - o.mean, gamma, 3.0 * o.se);
}

TEST(MeanCurve, BesselFourPowerDefect) {
  const DefectCurve c = mean_curve(BesselPowerModel{4.0, 1.0}, uniform_grid(1.0, 1), {1.0}, 100000, 42);
  const oracle::McEstimate o = oracle::besq4_inverse_mean(1.0, 400000, 8);
  const DefectRow& r = c.rows[0];
  EXPECT_NEAR(r.defect_est, 1.0 - o.mean, 3.0 * std::hypot(r.stderr_est, o.se));
  EXPECT_NEAR(r.defect_est, std::exp(-0.5), 3.0 * r.stderr_est);
  EXPECT_GT(r.defect_est, 5.0 * r.stderr_est);
}

TEST(MeanCurve, CoverageOverSeeds) {
  int covered = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const DefectCurve c = mean_curve(gbm(), uniform_grid(1.0, 16), {1.0}, 2000, 1000 + s);
    if (c.rows[0].ci_low <= 0.0 && 0.0 <= c.rows[0].ci_high) ++covered;
  }
  EXPECT_GE(covered, 95);
}

TEST(MeanCurve, SupermartingaleSign) {
  const std::vector<ProcessModel> positive = {gbm(), InverseBes3Model{}, BesselPowerModel{4.0, 1.0},
                                              BesselPowerModel{3.0, 2.0}, DiffusionModel{P("x^2"), 1.0},
                                              PrescribedMeanModel{parse_expr("1/(1+t)", "t")}};
  for (std::size_t m = 0; m < positive.size(); ++m) {
    ASSERT_TRUE(is_positive_model(positive[m]));
    const DefectCurve c = mean_curve(positive[m], uniform_grid(1.0, 64), {0.25, 0.5, 1.0}, 20000, 7 + m);
    for (const DefectRow& r : c.rows) EXPECT_GE(r.defect_est, -3.0 * r.stderr_est) << model_name(positive[m]);
  }
}

TEST(MeanCurve, Errors) {
  EXPECT_THROW(mean_curve(gbm(), uniform_grid(1.0, 4), {1.0}, 99, 1), std::invalid_argument);
  EXPECT_THROW(mean_curve(gbm(), uniform_grid(1.0, 4), {}, 1000, 1), std::invalid_argument);
  EXPECT_THROW(mean_curve(gbm(), uniform_grid(1.0, 4), {0.3}, 1000, 1), std::invalid_argument);
  EXPECT_THROW(mean_curve(ItoIntegralModel{P("exp(1000)")}, uniform_grid(1.0, 4), {1.0}, 1000, 1),
               EstimationError);
}

TEST(MeanCurve, OverflowCountedAndExcluded) {
  const DefectCurve c = mean_curve(ItoIntegralModel{P("exp(abs(x)^3)"), 5.0}, uniform_grid(1.0, 64), {1.0}, 20000, 3);
  EXPECT_GT(c.n_overflowed, 0u);
  EXPECT_LT(c.n_overflowed, 20000u);
  EXPECT_TRUE(std::isfinite(c.rows[0].mean_est));
}

TEST(TailScan, BrownianTailVanishes) {
  const TailScan s = tail_scan(BrownianModel{}, uniform_grid(1.0, 256), 1.0, {2.0, 3.0, 4.0, 6.0, 8.0}, 100000, 42);
  EXPECT_GT(s.rows[0].lambda_prob, s.rows[2].lambda_prob);
  EXPECT_GE(s.rows[2].lambda_prob, s.rows[3].lambda_prob);
  EXPECT_GE(s.rows[3].lambda_prob, s.rows[4].lambda_prob);
  EXPECT_LT(s.rows[2].lambda_prob, 0.01);
}

TEST(TailScan, ConstantPathNeverExceeds) {
  const TailScan s = tail_scan(DiffusionModel{P("0"), 2.0}, uniform_grid(1.0, 8), 1.0, {2.5, 3.0, 10.0}, 10000, 1);
  for (const TailRow& r : s.rows) {
    EXPECT_EQ(r.prob_est, 0.0);
    EXPECT_EQ(r.stderr_est, 0.0);
  }
}

TEST(TailScan, MonotoneInLambda) {
  const std::vector<ProcessModel> models = {BrownianModel{}, InverseBes3Model{1.0, InverseBes3Method::Gaussian3d},
                                            gbm(), ItoIntegralModel{P("exp(abs(x)^3)")}, BesqModel{}};
  std::vector<double> lambdas;
  for (double l = 0.5; l < 40.0; l *= 1.3) lambdas.push_back(l);
  for (const ProcessModel& m : models) {
    TailOptions opts;
    opts.sup_mode = SupMode::BridgeRefined;
    opts.coarse_stride = 4;
    const TailScan s = tail_scan(m, uniform_grid(1.0, 64), 1.0, lambdas, 10000, 5, opts);
    for (std::size_t k = 1; k < s.rows.size(); ++k) {
      EXPECT_LE(s.rows[k].prob_est, s.rows[k - 1].prob_est) << model_name(m);
      EXPECT_LE(s.rows[k].grid_prob_est, s.rows[k - 1].grid_prob_est);
      EXPECT_LE(s.rows[k].coarse_prob_est, s.rows[k - 1].coarse_prob_est);
    }
    for (const TailRow& r : s.rows) {
      EXPECT_GE(r.prob_est, 0.0);
      EXPECT_LE(r.prob_est, 1.0);
      EXPECT_GE(r.prob_est, r.grid_prob_est);
      EXPECT_GE(r.grid_prob_est, r.coarse_prob_est);
    }
  }
}

TEST(TailScan, HorizonPrefix) {
  const TailScan a = tail_scan(BrownianModel{}, uniform_grid(2.0, 128), 1.0, {1.0, 2.0, 3.0}, 10000, 4);
  const TailScan b = tail_scan(BrownianModel{}, uniform_grid(1.0, 64), 1.0, {1.0, 2.0, 3.0}, 10000, 4);
  expect_same(a, b);
  EXPECT_EQ(a.n_steps, 64u);
}

TEST(TailScan, InverseBes3ApproachesDefect) {
  TailOptions opts;
  opts.sup_mode = SupMode::BridgeRefined;
  opts.coarse_stride = 4;
  const TailScan s = tail_scan(InverseBes3Model{1.0, InverseBes3Method::Gaussian3d}, uniform_grid(1.0, 256), 1.0,
                               {2.0, 5.0, 10.0}, 20000, 42, opts);
  EXPECT_TRUE(s.bridge_refined);
  EXPECT_EQ(s.coarse_steps, 64u);
  const double gamma = 1.0 - std::erf(1.0 / std::sqrt(2.0));
  // lambda P at lambda=10 with a refined sup; binomial SE about 0.012.
  EXPECT_NEAR(s.rows[2].lambda_prob, gamma, 0.05);
  EXPECT_GT(s.rows[2].prob_est, s.rows[2].coarse_prob_est);
}

TEST(TailScan, Errors) {
  const TimeGrid g = uniform_grid(1.0, 8);
  EXPECT_THROW(tail_scan(BrownianModel{}, g, 1.0, {1.0, 2.0}, 10000, 1), std::invalid_argument);
  EXPECT_THROW(tail_scan(BrownianModel{}, g, 1.0, {1.0, 3.0, 2.0}, 10000, 1), std::invalid_argument);
  EXPECT_THROW(tail_scan(BrownianModel{}, g, 1.0, {1.0, 2.0, 3.0}, 9999, 1), std::invalid_argument);
  EXPECT_THROW(tail_scan(BrownianModel{}, g, 0.0, {1.0, 2.0, 3.0}, 10000, 1), std::invalid_argument);
  TailOptions bad;
  bad.coarse_stride = 3;
  EXPECT_THROW(tail_scan(BrownianModel{}, g, 1.0, {1.0, 2.0, 3.0}, 10000, 1, bad), std::invalid_argument);
}

TEST(TailScan, OverflowExceedsEveryLambda) {
  const TailScan s = tail_scan(ItoIntegralModel{P("exp(1000)")}, uniform_grid(1.0, 4), 1.0, {1.0, 1e100, 1e299}, 10000,
                               1);
  EXPECT_EQ(s.n_overflowed, 10000u);
  for (const TailRow& r : s.rows) EXPECT_EQ(r.prob_est, 1.0);
}

TEST(MomentScan, TrendRule) {
  EXPECT_EQ(moment_trend({1.0, 1.0, 1.2, 1.44}), MomentTrend::SuspectedDivergent);
  EXPECT_EQ(moment_trend({1.0, 1.0, 1.2, 1.43}), MomentTrend::Stabilizing);
  EXPECT_EQ(moment_trend({1.0, 5.0, 1.0, 1.3}), MomentTrend::Stabilizing);
  EXPECT_EQ(moment_trend({1.0, 1.1, 1.05, 1.0}), MomentTrend::Stabilizing);
}

TEST(MomentScan, BrownianStabilizes) {
  const MomentScan s = small_moment_scan(BrownianModel{}, uniform_grid(1.0, 64), 1.0, 0.5,
                                         {1000, 4000, 16000, 64000}, 42);
  EXPECT_EQ(s.verdict, MomentTrend::Stabilizing);
  EXPECT_EQ(s.verdict, moment_trend(s.estimates));
  EXPECT_NEAR(s.estimates.back(), s.estimates[2], 0.05 * s.estimates[2]);
}

TEST(MomentScan, InverseBes3Stabilizes) {
  const MomentScan s = small_moment_scan(InverseBes3Model{}, uniform_grid(1.0, 64), 1.0, 0.5,
                                         {1000, 4000, 16000, 64000}, 42);
  EXPECT_EQ(s.verdict, MomentTrend::Stabilizing);
}

// The 20% rule fires on only part of the seeds for this integrand (the sample
// means are dominated by single paths); the robust symptom is that the
// estimates jump by orders of magnitude between sizes.
TEST(MomentScan, CubicIntegrandIsWild) {
  int flagged = 0;
  int wild = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const MomentScan s = small_moment_scan(ItoIntegralModel{P("exp(abs(x)^3)")}, uniform_grid(1.0, 256), 1.0, 0.5,
                                           {1000, 4000, 16000, 64000}, seed);
    EXPECT_EQ(s.verdict, moment_trend(s.estimates));
    if (s.verdict == MomentTrend::SuspectedDivergent) ++flagged;
    double lo = s.estimates[0];
    double hi = s.estimates[0];
    for (double e : s.estimates) {
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    if (hi > 100.0 * lo) ++wild;
  }
  EXPECT_GE(wild, 5);
  RecordProperty("flagged_of_6", flagged);
}

TEST(MomentScan, Errors) {
  const TimeGrid g = uniform_grid(1.0, 4);
  EXPECT_THROW(small_moment_scan(BrownianModel{}, g, 1.0, 1.0, {1, 2, 3, 4}, 1), std::invalid_argument);
  EXPECT_THROW(small_moment_scan(BrownianModel{}, g, 1.0, 0.5, {1, 2, 3}, 1), std::invalid_argument);
  EXPECT_THROW(small_moment_scan(BrownianModel{}, g, 1.0, 0.5, {1, 2, 2, 4}, 1), std::invalid_argument);
}

TEST(Determinism, ThreadCountInvariance) {
  const ProcessModel m = DiffusionModel{P("x^2"), 1.0};
  const TimeGrid g = uniform_grid(1.0, 32);
  const DefectCurve c1 = mean_curve(m, g, {0.5, 1.0}, 5000, 11, RunOptions{1});
  const DefectCurve c8 = mean_curve(m, g, {0.5, 1.0}, 5000, 11, RunOptions{8});
  expect_same(c1, c8);
  TailOptions opts;
  opts.sup_mode = SupMode::BridgeRefined;
  opts.coarse_stride = 2;
  const ProcessModel ib = InverseBes3Model{1.0, InverseBes3Method::Gaussian3d};
  expect_same(tail_scan(ib, g, 1.0, {1.0, 2.0, 5.0}, 10000, 3, opts, RunOptions{1}),
              tail_scan(ib, g, 1.0, {1.0, 2.0, 5.0}, 10000, 3, opts, RunOptions{8}));
  const MomentScan s1 = small_moment_scan(m, g, 1.0, 0.5, {100, 400, 1600, 6400}, 2, RunOptions{1});
  const MomentScan s8 = small_moment_scan(m, g, 1.0, 0.5, {100, 400, 1600, 6400}, 2, RunOptions{8});
  EXPECT_EQ(s1.estimates, s8.estimates);
}

TEST(Determinism, KernelsMatchReference) {
  const TimeGrid g = uniform_grid(1.0, 32);
  const std::vector<ProcessModel> models = {gbm(), DiffusionModel{P("x^2"), 1.0}, InverseBes3Model{},
                                            InverseBes3Model{1.0, InverseBes3Method::Gaussian3d},
                                            ItoIntegralModel{P("exp(abs(x)^3)")},
                                            PrescribedMeanModel{parse_expr("1/(1+t)", "t")}};
  for (const ProcessModel& m : models) {
    expect_same(mean_curve(m, g, {0.5, 1.0}, 3000, 5), reference::mean_curve(m, g, {0.5, 1.0}, 3000, 5));
    for (SupMode mode : {SupMode::Grid, SupMode::BridgeRefined}) {
      TailOptions opts;
      opts.sup_mode = mode;
      opts.coarse_stride = 4;
      expect_same(tail_scan(m, g, 1.0, {0.5, 1.0, 2.0, 8.0}, 10000, 6, opts),
                  reference::tail_scan(m, g, 1.0, {0.5, 1.0, 2.0, 8.0}, 10000, 6, opts));
    }
    const MomentScan a = small_moment_scan(m, g, 0.5, 0.3, {10, 40, 160, 640}, 8);
    const MomentScan b = reference::small_moment_scan(m, g, 0.5, 0.3, {10, 40, 160, 640}, 8);
    EXPECT_EQ(a.estimates, b.estimates) << model_name(m);
    EXPECT_EQ(a.n_overflowed, b.n_overflowed);
  }
}
