#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "atebench/dataset.hpp"
#include "atebench/errors.hpp"
#include "atebench/link.hpp"
#include "atebench/rng.hpp"
#include "atebench/sim.hpp"
#include "doctest.h"

using namespace atebench;

namespace {

SimulationConfig small_linear() {
  SimulationConfig config;
  config.n = 400;
  config.d = 16;
  config.seed = 11;
  return config;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/atebench_test_") + name;
}

}  // namespace

TEST_CASE("coefficient pattern lays out signed blocks") {
  const Eigen::VectorXd v8 = make_coefficients(8, 1.0);
  CHECK(v8[0] == 1.0);
  CHECK(v8[1] == -1.0);
  for (int i = 2; i < 8; ++i) CHECK(v8[i] == 0.0);

  const Eigen::VectorXd v16 = make_coefficients(16, 2.0);
  CHECK(v16[0] == 2.0);
  CHECK(v16[1] == 2.0);
  CHECK(v16[2] == -2.0);
  CHECK(v16[3] == -2.0);
  for (int i = 4; i < 16; ++i) CHECK(v16[i] == 0.0);
  CHECK(v16.squaredNorm() == doctest::Approx(16.0));

  CHECK_THROWS_AS(make_coefficients(12, 1.0), config_error);
  CHECK_THROWS_AS(make_coefficients(0, 1.0), config_error);
}

TEST_CASE("scale_for_variance hits the target norm") {
  const Eigen::VectorXd dir = make_coefficients(8, 1.0);
  const Eigen::VectorXd scaled = scale_for_variance(dir, 5.0);
  CHECK(scaled.squaredNorm() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(scaled[0] > 0.0);

  // Fixed point: a vector already at the target passes through unchanged.
  const Eigen::VectorXd same = scale_for_variance(scaled, 5.0);
  CHECK((same - scaled).lpNorm<Eigen::Infinity>() < 1e-12);

  CHECK(scale_for_variance(dir, 0.0).norm() == 0.0);
  CHECK_THROWS_AS(scale_for_variance(Eigen::VectorXd::Zero(8), 1.0),
                  config_error);
}

TEST_CASE("true parameters satisfy the signal and R2 targets") {
  SimulationConfig config = small_linear();
  const TrueParams params = true_params(config);
  CHECK(params.eta.squaredNorm() == doctest::Approx(5.0).epsilon(1e-12));
  // R^2 = ||beta||^2 / (||beta||^2 + sigma2) inverted at 0.9 and 0.8.
  CHECK(params.beta1.squaredNorm() == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(params.beta0.squaredNorm() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(params.tau == config.tau);
  CHECK(params.sigma2 == config.sigma2);

  // All three vectors are positive multiples of the same pattern.
  const Eigen::VectorXd u = params.eta.normalized();
  CHECK((params.beta1.normalized() - u).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((params.beta0.normalized() - u).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("logistic truth reuses the signal strength for all three vectors") {
  SimulationConfig config = small_linear();
  config.family = Family::logistic;
  const TrueParams params = true_params(config);
  CHECK((params.beta1 - params.eta).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((params.beta0 - params.eta).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(params.eta.squaredNorm() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("simulation is a pure function of seed and rep") {
  const SimulationConfig config = small_linear();
  const Dataset a = simulate(config, 3);
  const Dataset b = simulate(config, 3);
  const Dataset c = simulate(config, 4);
  CHECK(a.n() == config.n);
  CHECK(a.d() == config.d);
  CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.w - b.w).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.y - b.y).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.x - c.x).lpNorm<Eigen::Infinity>() > 0.0);
  CHECK(a.truth.has_value());
}

TEST_CASE("treatment draws are binary with calibrated frequency") {
  SimulationConfig config = small_linear();
  config.n = 20000;
  config.gamma2 = 0.0;
  const Dataset data = simulate(config, 0);
  double treated = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    CHECK((data.w[i] == 0.0 || data.w[i] == 1.0));
    treated += data.w[i];
  }
  // gamma2 = 0 makes the propensity exactly 1/2.
  const double se = std::sqrt(0.25 / config.n);
  CHECK(std::abs(treated / config.n - 0.5) < 3.0 * se);
}

TEST_CASE("empirical propensity signal variance matches gamma2") {
  SimulationConfig config = small_linear();
  config.n = 2000;
  const TrueParams params = true_params(config);
  int failures = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset data = simulate(config, rep);
    const Eigen::VectorXd score = data.x * params.eta;
    const double var =
        (score.array() - score.mean()).square().sum() / (config.n - 1);
    if (std::abs(var - 5.0) / 5.0 > 4.0 / std::sqrt(config.n)) ++failures;
  }
  CHECK(failures <= 1);
}

TEST_CASE("linear potential outcomes are comonotone with exact contrast") {
  SimulationConfig config = small_linear();
  const PotentialOutcomes po = simulate_potentials(config, 2);
  const TrueParams& params = *po.data.truth;
  const Eigen::VectorXd contrast = po.data.x * (params.beta1 - params.beta0);
  for (int i = 0; i < po.data.n(); ++i) {
    // Shared noise cancels in the difference, leaving the mean contrast.
    CHECK(po.y1[i] - po.y0[i] ==
          doctest::Approx(contrast[i] + params.tau).epsilon(1e-12));
    const double expected = po.data.w[i] == 1.0 ? po.y1[i] : po.y0[i];
    CHECK(po.data.y[i] == expected);
  }
}

TEST_CASE("logistic potential outcomes are monotone under a positive offset") {
  SimulationConfig config = small_linear();
  config.family = Family::logistic;
  config.n = 3000;
  const PotentialOutcomes po = simulate_potentials(config, 1);
  int crossed = 0;
  for (int i = 0; i < po.data.n(); ++i) {
    CHECK((po.y1[i] == 0.0 || po.y1[i] == 1.0));
    CHECK((po.y0[i] == 0.0 || po.y0[i] == 1.0));
    if (po.y1[i] < po.y0[i]) ++crossed;
  }
  // A shared uniform and a positive log-odds offset forbid y1 < y0.
  CHECK(crossed == 0);
}

TEST_CASE("sample average treatment effect concentrates on tau") {
  SimulationConfig config = small_linear();
  config.n = 40000;
  const PotentialOutcomes po = simulate_potentials(config, 5);
  const double sample_ate = (po.y1 - po.y0).mean();
  // Var(y1 - y0) = ||beta1 - beta0||^2 = (3 - 2)^2 with collinear arms.
  const double se = 1.0 / std::sqrt(static_cast<double>(config.n));
  CHECK(std::abs(sample_ate - config.tau) < 4.0 * se);
}

TEST_CASE("linear true ATE is the configured offset") {
  SimulationConfig config = small_linear();
  config.tau = 0.5;
  CHECK(true_ate(config) == 0.5);
  CHECK(true_ate(true_params(config)) == 0.5);
}

TEST_CASE("logistic true ATE vanishes for identical arms") {
  SimulationConfig config = small_linear();
  config.family = Family::logistic;
  config.tau = 0.0;
  CHECK(true_ate(config) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("logistic true ATE matches a Monte Carlo oracle") {
  SimulationConfig config = small_linear();
  config.family = Family::logistic;
  config.tau = 1.0;
  const TrueParams params = true_params(config);
  const double b1 = params.beta1.norm();
  const double b0 = params.beta0.norm();

  Rng rng(991);
  const int n_mc = 2000000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    const double z = rng.normal();
    const double diff = sigmoid(b1 * z + params.tau) - sigmoid(b0 * z);
    acc += diff;
    acc2 += diff * diff;
  }
  const double mc = acc / n_mc;
  const double mc_se =
      std::sqrt((acc2 / n_mc - mc * mc) / static_cast<double>(n_mc));
  const double quad = true_ate(params);
  CHECK(std::abs(quad - mc) < 3.0 * mc_se);
  // The quadrature is already converged well past this at the minimum
  // node count.
  CHECK(true_ate(params, 64) == doctest::Approx(quad).epsilon(1e-8));
}

TEST_CASE("dataset CSV round-trips bit-exactly") {
  SimulationConfig config = small_linear();
  config.n = 50;
  config.d = 8;
  const Dataset data = simulate(config, 7);
  const std::string path = temp_path("roundtrip.csv");
  save_dataset(data, path);
  const Dataset loaded = load_dataset(path);
  CHECK(loaded.n() == data.n());
  CHECK(loaded.d() == data.d());
  CHECK((loaded.x - data.x).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((loaded.w - data.w).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((loaded.y - data.y).lpNorm<Eigen::Infinity>() == 0.0);
  // Ingested data carries no truth.
  CHECK(!loaded.truth.has_value());
  std::remove(path.c_str());
}

TEST_CASE("dataset loader reports malformed input precisely") {
  const std::string path = temp_path("malformed.csv");

  {
    std::ofstream out(path);
    out << "w,y,x1\n1,2.5,0.1\n2,1.0,0.3\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path),
                       doctest::Contains("treatment"), config_error);

  {
    std::ofstream out(path);
    out << "w,y,x1\n1,2.5\n";
  }
  CHECK_THROWS_AS(load_dataset(path), config_error);

  {
    std::ofstream out(path);
    out << "w,y,x1\n1,abc,0.1\n";
  }
  CHECK_THROWS_AS(load_dataset(path), config_error);

  {
    std::ofstream out(path);
    out << "y,w,x1\n1,0,0.1\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("header"),
                       config_error);

  CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.csv"), config_error);
  std::remove(path.c_str());
}

TEST_CASE("family inference prefers truth and falls back to outcomes") {
  SimulationConfig config = small_linear();
  config.n = 40;
  config.d = 8;
  Dataset linear_data = simulate(config, 0);
  CHECK(infer_family(linear_data) == Family::linear);

  config.family = Family::logistic;
  Dataset logistic_data = simulate(config, 0);
  CHECK(infer_family(logistic_data) == Family::logistic);

  // Without truth, all-binary outcomes read as logistic.
  logistic_data.truth.reset();
  CHECK(infer_family(logistic_data) == Family::logistic);
  linear_data.truth.reset();
  CHECK(infer_family(linear_data) == Family::linear);
}

TEST_CASE("config JSON round-trips and validates") {
  SimulationConfig config;
  config.n = 1234;
  config.d = 24;
  config.gamma2 = 2.5;
  config.r2_treated = 0.85;
  config.r2_control = 0.6;
  config.sigma2 = 1.5;
  config.tau = -0.25;
  config.family = Family::logistic;
  config.seed = 0xdeadbeefcafeULL;
  config.n_reps = 77;
  config.folds = 4;

  const SimulationConfig back = SimulationConfig::from_json(config.to_json());
  CHECK(back.n == config.n);
  CHECK(back.d == config.d);
  CHECK(back.gamma2 == config.gamma2);
  CHECK(back.r2_treated == config.r2_treated);
  CHECK(back.r2_control == config.r2_control);
  CHECK(back.sigma2 == config.sigma2);
  CHECK(back.tau == config.tau);
  CHECK(back.family == config.family);
  CHECK(back.seed == config.seed);
  CHECK(back.n_reps == config.n_reps);
  CHECK(back.folds == config.folds);

  CHECK_THROWS_AS(SimulationConfig::from_json("{\"d\": 8}"), config_error);
  CHECK_THROWS_AS(SimulationConfig::from_json("not json"), config_error);

  SimulationConfig bad = config;
  bad.d = 20;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = config;
  bad.d = bad.n + 8 - (bad.n % 8);
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = config;
  bad.folds = 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = config;
  bad.sigma2 = 0.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = config;
  bad.family = Family::linear;
  bad.r2_treated = 1.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("family names round-trip") {
  CHECK(family_name(Family::linear) == "linear");
  CHECK(family_name(Family::logistic) == "logistic");
  CHECK(family_from_name("linear") == Family::linear);
  CHECK(family_from_name("logistic") == Family::logistic);
  CHECK_THROWS_AS(family_from_name("probit"), config_error);
}
