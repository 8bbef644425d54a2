#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "atebench/errors.hpp"
#include "atebench/estimators.hpp"
#include "atebench/harness.hpp"
#include "atebench/sim.hpp"
#include "doctest.h"

using namespace atebench;

namespace {

TrueParams flat_linear_truth(int d, double tau) {
  TrueParams t;
  t.family = Family::linear;
  t.eta = Eigen::VectorXd::Zero(d);
  t.beta1 = Eigen::VectorXd::Ones(d);
  t.beta0 = Eigen::VectorXd::Ones(d);
  t.tau = tau;
  t.sigma2 = 1.0;
  return t;
}

// Single-fold bundle backed entirely by the attached truth, so estimator
// algebra can be exercised on hand-built rows without any fitting.
NuisanceBundle oracle_bundle(const Dataset& data) {
  NuisanceBundle bundle;
  bundle.family = data.truth->family;
  bundle.method = NuisanceMethod::full_oracle;
  bundle.truth = data.truth;
  FoldNuisance fold;
  fold.eval_rows.resize(data.n());
  std::iota(fold.eval_rows.begin(), fold.eval_rows.end(), 0);
  bundle.folds.push_back(fold);
  return bundle;
}

Dataset linear_sample(int n, int d, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.seed = seed;
  return simulate(cfg, 0);
}

double combined_se(const MonteCarloRow& a, const MonteCarloRow& b) {
  return std::hypot(a.mc_se_of_bias, b.mc_se_of_bias);
}

}  // namespace

TEST_CASE("fold assignment deals a seeded partition") {
  std::vector<int> folds = fold_assignment(23, 5, 9);
  REQUIRE(folds.size() == 23);
  std::vector<int> counts(5, 0);
  for (int f : folds) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[f];
  }
  CHECK(counts == std::vector<int>{5, 5, 5, 4, 4});

  CHECK(fold_assignment(23, 5, 9) == folds);
  CHECK(fold_assignment(23, 5, 10) != folds);

  std::vector<int> singletons = fold_assignment(10, 10, 1);
  std::sort(singletons.begin(), singletons.end());
  for (int i = 0; i < 10; ++i) CHECK(singletons[i] == i);

  CHECK_THROWS_WITH_AS(fold_assignment(0, 2, 1),
                       doctest::Contains("at least one row"), config_error);
  CHECK_THROWS_WITH_AS(fold_assignment(10, 1, 1),
                       doctest::Contains("between 2"), config_error);
  CHECK_THROWS_WITH_AS(fold_assignment(10, 11, 1),
                       doctest::Contains("between 2"), config_error);
}

TEST_CASE("cross-fitting scores every row once by fold-external models") {
  Dataset data = linear_sample(100, 8, 3);
  std::vector<FoldBase> base =
      crossfit_base(data, Family::linear, 5, 42, {NuisanceMethod::mle});
  REQUIRE(base.size() == 5);

  std::vector<int> seen(100, 0);
  for (const FoldBase& fb : base) {
    CHECK(fb.eval_rows.size() == 20);
    CHECK(fb.train_rows.size() == 80);
    for (int i : fb.eval_rows) ++seen[i];
    for (int i : fb.eval_rows) {
      CHECK(std::find(fb.train_rows.begin(), fb.train_rows.end(), i) ==
            fb.train_rows.end());
    }
  }
  for (int c : seen) CHECK(c == 1);

  // The fold's propensity model is exactly the logistic fit on its training
  // complement.
  Eigen::MatrixXd xt(80, 8);
  Eigen::VectorXd wt(80);
  for (int k = 0; k < 80; ++k) {
    xt.row(k) = data.x.row(base[0].train_rows[k]);
    wt[k] = data.w[base[0].train_rows[k]];
  }
  GlmFit manual = fit_logistic_mle(xt, wt);
  REQUIRE(base[0].propensity_raw.has_value());
  CHECK((base[0].propensity_raw->coefficients - manual.coefficients)
            .lpNorm<Eigen::Infinity>() < 1e-13);

  CrossfitOptions options;
  options.family = Family::linear;
  options.folds = 5;
  options.seed = 42;
  NuisanceBundle bundle = nuisance_from_base(data, base, options);
  NuisanceBundle again = crossfit(data, options);
  REQUIRE(bundle.folds.size() == again.folds.size());
  for (std::size_t f = 0; f < bundle.folds.size(); ++f) {
    CHECK(bundle.folds[f].eval_rows == again.folds[f].eval_rows);
    CHECK((bundle.folds[f].propensity->coefficients -
           again.folds[f].propensity->coefficients)
              .lpNorm<Eigen::Infinity>() == 0.0);
  }

  // Propensity clamping is an opt-in and bounds every scored probability.
  options.clip = 0.2;
  NuisanceBundle clipped = nuisance_from_base(data, base, options);
  for (int f = 0; f < 5; ++f) {
    Eigen::MatrixXd xe(clipped.folds[f].eval_rows.size(), 8);
    for (std::size_t k = 0; k < clipped.folds[f].eval_rows.size(); ++k) {
      xe.row(k) = data.x.row(clipped.folds[f].eval_rows[k]);
    }
    Eigen::VectorXd pi = clipped.propensity_at(f, xe);
    CHECK(pi.minCoeff() >= 0.2);
    CHECK(pi.maxCoeff() <= 0.8);
  }
}

TEST_CASE("infeasible folds fail with the fold and arm named") {
  Dataset data = linear_sample(60, 40, 4);
  CrossfitOptions options;
  options.family = Family::linear;
  options.folds = 5;
  CHECK_THROWS_WITH_AS(crossfit(data, options),
                       doctest::Contains("cannot identify"), numerical_error);

  Dataset sep;
  sep.x = Eigen::MatrixXd::Random(40, 2);
  sep.w = Eigen::VectorXd(40);
  sep.y = Eigen::VectorXd(40);
  for (int i = 0; i < 40; ++i) {
    sep.w[i] = (i % 2 == 0) ? 1.0 : 0.0;
    sep.y[i] = sep.w[i];
  }
  CrossfitOptions logistic;
  logistic.family = Family::logistic;
  logistic.folds = 2;
  CHECK_THROWS_WITH_AS(crossfit(sep, logistic),
                       doctest::Contains("all one class"), numerical_error);

  Dataset onearm = sep;
  onearm.w.setOnes();
  CHECK_THROWS_WITH_AS(crossfit(onearm, logistic),
                       doctest::Contains("treatment is constant"),
                       numerical_error);

  Dataset untagged = linear_sample(60, 8, 4);
  untagged.truth.reset();
  CrossfitOptions oracle;
  oracle.family = Family::linear;
  oracle.method = NuisanceMethod::propensity_oracle;
  CHECK_THROWS_WITH_AS(crossfit(untagged, oracle),
                       doctest::Contains("true parameters"), config_error);
}

TEST_CASE("inverse weighting matches the four-row hand results") {
  Dataset data;
  data.x = Eigen::MatrixXd::Zero(4, 1);
  data.w = Eigen::VectorXd(4);
  data.w << 1, 0, 0, 0;
  data.y = Eigen::VectorXd(4);
  data.y << 2, 4, 6, 8;
  data.truth = flat_linear_truth(1, 0.0);
  data.truth->beta1.setZero();
  data.truth->beta0.setZero();
  NuisanceBundle bundle = oracle_bundle(data);

  // Constant half propensity: the treated arm contributes 2 / 0.5, the
  // control arm (4 + 6 + 8) / 0.5, averaged over all four rows.
  EstimateResult ht = ipw(data, bundle);
  CHECK(ht.estimate == doctest::Approx(-8.0).epsilon(1e-14));
  CHECK(ht.diagnostics.min_propensity == doctest::Approx(0.5));
  CHECK(ht.diagnostics.max_propensity == doctest::Approx(0.5));

  EstimateResult hajek = ipw(data, bundle, IpwNormalization::hajek);
  CHECK(hajek.estimate == doctest::Approx(-4.0).epsilon(1e-14));

  Dataset mirrored = data;
  mirrored.y = mirrored.w;
  EstimateResult scaled = ipw(mirrored, bundle);
  CHECK(scaled.estimate ==
        doctest::Approx(2.0 * mirrored.w.mean()).epsilon(1e-14));
}

TEST_CASE("weight diagnostics follow the two-point identities") {
  Eigen::VectorXd pi(2), w(2);
  pi << 0.2, 0.8;
  w << 1, 0;
  auto [treated, control] = compute_tn(pi, w);
  CHECK(treated == doctest::Approx(6.25 / 25.0).epsilon(1e-14));
  CHECK(control == doctest::Approx(6.25 / 25.0).epsilon(1e-14));

  Eigen::VectorXd half = Eigen::VectorXd::Constant(4, 0.5);
  Eigen::VectorXd alternating(4);
  alternating << 1, 0, 1, 0;
  auto [t1, t0] = compute_tn(half, alternating);
  CHECK(t1 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(t0 == doctest::Approx(1.0).epsilon(1e-14));

  Eigen::VectorXd all_treated = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_WITH_AS(compute_tn(half, all_treated),
                       doctest::Contains("each arm"), numerical_error);
  Eigen::VectorXd three(3);
  three << 1, 0, 1;
  CHECK_THROWS_WITH_AS(compute_tn(half, three),
                       doctest::Contains("mismatched"), config_error);
}

TEST_CASE("augmentation and targeting collapse onto the outcome model at zero residuals") {
  Dataset data = linear_sample(60, 8, 5);
  NuisanceBundle bundle = crossfit(data, 3, NuisanceMethod::mle, 17);

  for (std::size_t f = 0; f < bundle.folds.size(); ++f) {
    const auto& rows = bundle.folds[f].eval_rows;
    Eigen::MatrixXd xe(rows.size(), data.d());
    for (std::size_t k = 0; k < rows.size(); ++k) xe.row(k) = data.x.row(rows[k]);
    Eigen::VectorXd mu1 = bundle.outcome_mean_at(static_cast<int>(f), 1, xe);
    Eigen::VectorXd mu0 = bundle.outcome_mean_at(static_cast<int>(f), 0, xe);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      data.y[rows[k]] = data.w[rows[k]] == 1.0 ? mu1[k] : mu0[k];
    }
  }

  double plugin = gcomputation(data, bundle).estimate;
  EstimateResult augmented = aipw(data, bundle);
  EstimateResult targeted = tmle_gaussian(data, bundle);
  CHECK(augmented.estimate == doctest::Approx(plugin).epsilon(1e-13));
  CHECK(targeted.estimate == doctest::Approx(plugin).epsilon(1e-13));
  REQUIRE(targeted.fluctuations.size() == 3);
  for (const TmleFluctuation& fl : targeted.fluctuations) {
    CHECK(std::abs(fl.eps0) < 1e-13);
    CHECK(std::abs(fl.eps1) < 1e-13);
  }
}

TEST_CASE("targeting equals augmentation under constant propensity and balanced arms") {
  Dataset data;
  const int n = 8;
  data.x = Eigen::MatrixXd(n, 1);
  data.x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8;
  data.w = Eigen::VectorXd(n);
  data.w << 1, 1, 1, 1, 0, 0, 0, 0;
  data.y = Eigen::VectorXd(n);
  data.y << 0.9, 1.7, 0.2, 2.4, 0.8, 0.1, 1.5, 0.6;
  data.truth = flat_linear_truth(1, 0.7);
  NuisanceBundle bundle = oracle_bundle(data);

  EstimateResult plugin = gcomputation(data, bundle);
  CHECK(plugin.estimate == doctest::Approx(0.7).epsilon(1e-14));

  EstimateResult augmented = aipw(data, bundle);
  EstimateResult targeted = tmle_gaussian(data, bundle);
  CHECK(targeted.estimate ==
        doctest::Approx(augmented.estimate).epsilon(1e-13));
  REQUIRE(targeted.fluctuations.size() == 1);
  CHECK(targeted.fluctuations[0].eps1 != 0.0);

  // The library's own oracle estimator is the same computation.
  EstimateResult oracle = aipw_oracle(data);
  CHECK(oracle.estimate == doctest::Approx(augmented.estimate).epsilon(1e-13));
}

TEST_CASE("fold contributions aggregate by evaluation size") {
  Dataset data = linear_sample(103, 8, 6);
  NuisanceBundle bundle = crossfit(data, 5, NuisanceMethod::mle, 23);

  for (Estimator e : {Estimator::gcomp, Estimator::ipw, Estimator::aipw,
                      Estimator::tmle_gaussian}) {
    EstimateResult r = run_estimator(data, bundle, e);
    REQUIRE(r.per_fold.size() == 5);
    REQUIRE(r.fold_sizes.size() == 5);
    int total = 0;
    double weighted = 0.0;
    for (int f = 0; f < 5; ++f) {
      total += r.fold_sizes[f];
      weighted += r.per_fold[f] * r.fold_sizes[f];
    }
    CHECK(total == 103);
    CHECK(r.estimate == doctest::Approx(weighted / total).epsilon(1e-12));
  }
}

TEST_CASE("estimator and bundle mismatches are rejected") {
  Dataset data = linear_sample(60, 8, 7);
  NuisanceBundle mle = crossfit(data, 3, NuisanceMethod::mle, 2);
  CHECK_THROWS_WITH_AS(
      ipw(data, mle, IpwNormalization::horvitz_thompson, true),
      doctest::Contains("no inflation correction"), config_error);
  CHECK_THROWS_WITH_AS(run_estimator(data, mle, Estimator::aipw_oracle),
                       doctest::Contains("full-oracle bundle"), config_error);
  CHECK_THROWS_WITH_AS(tmle_binomial(data, mle),
                       doctest::Contains("probability scale"), config_error);

  NuisanceBundle oracle = oracle_bundle(data);
  CHECK_THROWS_WITH_AS(
      ipw(data, oracle, IpwNormalization::horvitz_thompson, true),
      doctest::Contains("fitted propensity"), config_error);
}

TEST_CASE("the logit-scale update is unbiased with oracle nuisances") {
  SimulationConfig cfg;
  cfg.n = 400;
  cfg.d = 16;
  cfg.family = Family::logistic;
  cfg.n_reps = 200;
  cfg.seed = 60;
  McPlan plan = {{NuisanceMethod::full_oracle, Estimator::tmle_binomial},
                 {NuisanceMethod::full_oracle, Estimator::aipw_oracle}};
  MonteCarloReport rep = run_monte_carlo(cfg, plan, 1);
  REQUIRE(rep.rows.size() == 2);
  for (const MonteCarloRow& row : rep.rows) {
    CHECK(row.n_reps_used == 200);
    CHECK(std::abs(row.bias) <= 3.0 * row.mc_se_of_bias);
  }
}

TEST_CASE("dispersion ranks the plug-in below and raw weighting above the rest") {
  SimulationConfig cfg;
  cfg.n = 1600;
  cfg.d = 128;
  cfg.n_reps = 500;
  cfg.seed = 4421;
  McPlan plan = {{NuisanceMethod::mle, Estimator::gcomp},
                 {NuisanceMethod::mle, Estimator::tmle_gaussian},
                 {NuisanceMethod::mle, Estimator::aipw},
                 {NuisanceMethod::mle, Estimator::ipw}};
  MonteCarloReport rep = run_monte_carlo(cfg, plan, 1);
  REQUIRE(rep.rows.size() == 4);
  const MonteCarloRow& gcomp = rep.rows[0];
  const MonteCarloRow& tmle = rep.rows[1];
  const MonteCarloRow& aipw_row = rep.rows[2];
  const MonteCarloRow& ipw_row = rep.rows[3];

  CHECK(gcomp.std_err + 3.0 * combined_se(gcomp, tmle) < tmle.std_err);
  CHECK(gcomp.std_err + 3.0 * combined_se(gcomp, aipw_row) < aipw_row.std_err);
  CHECK(tmle.std_err + 3.0 * combined_se(tmle, ipw_row) < ipw_row.std_err);
  CHECK(aipw_row.std_err + 3.0 * combined_se(aipw_row, ipw_row) <
        ipw_row.std_err);

  // The plug-in is also unbiased here while raw weighting is visibly off.
  CHECK(std::abs(gcomp.bias) <= 3.0 * gcomp.mc_se_of_bias);
  CHECK(std::abs(ipw_row.bias) > 3.0 * ipw_row.mc_se_of_bias);
}

TEST_CASE("plug-in nuisance noise inflates the augmented estimator beyond the oracle") {
  struct Point {
    int n;
    int d;
    std::uint64_t seed;
  };
  const Point points[] = {{4000, 8, 4402}, {400, 8, 4402}, {400, 32, 4431}};
  double last_scaled_gap = -1.0;
  for (const Point& pt : points) {
    SimulationConfig cfg;
    cfg.n = pt.n;
    cfg.d = pt.d;
    cfg.n_reps = 500;
    cfg.seed = pt.seed;
    McPlan plan = {{NuisanceMethod::mle, Estimator::aipw},
                   {NuisanceMethod::full_oracle, Estimator::aipw_oracle}};
    MonteCarloReport rep = run_monte_carlo(cfg, plan, 1);
    double fitted = rep.rows[0].std_err;
    double oracle = rep.rows[1].std_err;
    double gap = fitted * fitted - oracle * oracle;
    double scaled_gap = pt.n * gap;
    CHECK(scaled_gap > last_scaled_gap);
    last_scaled_gap = scaled_gap;

    if (pt.d == 32) {
      // At aspect ratio 0.08 the excess is overwhelming, far beyond the
      // sampling noise of a variance estimate from 500 replications.
      double m = rep.rows[0].n_reps_used;
      double se_gap = std::sqrt(2.0 / (m - 1.0)) *
                      std::hypot(fitted * fitted, oracle * oracle);
      CHECK(gap > 3.0 * se_gap);
    }
  }
}
