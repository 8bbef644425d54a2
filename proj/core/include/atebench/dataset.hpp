#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

namespace atebench {

enum class Family { linear, logistic };

std::string family_name(Family family);
Family family_from_name(const std::string& name);

// Data-generating truth.  Covariates are standard Gaussian with identity
// covariance; treatment is Bernoulli(sigmoid(eta'x)).  tau is the additive
// treated-arm offset: on the outcome scale under the linear family, on the
// log-odds scale under the logistic family.  sigma2 is the linear-family
// noise variance.
struct TrueParams {
  Family family = Family::linear;
  Eigen::VectorXd eta;
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta0;
  double tau = 0.0;
  double sigma2 = 1.0;
};

struct SimulationConfig {
  int n = 0;
  int d = 0;
  double gamma2 = 5.0;
  double r2_treated = 0.9;
  double r2_control = 0.8;
  double sigma2 = 1.0;
  double tau = 1.0;
  Family family = Family::linear;
  std::uint64_t seed = 0;
  int n_reps = 1;
  int folds = 5;

  void validate() const;
  std::string to_json() const;
  static SimulationConfig from_json(const std::string& text);
  static SimulationConfig from_json_file(const std::string& path);
};

struct Dataset {
  Eigen::VectorXd w;  // treatment indicator, exactly 0 or 1
  Eigen::VectorXd y;  // observed outcome
  Eigen::MatrixXd x;  // n x d covariate matrix

  // Present for simulated data, absent for data ingested from files.
  // Oracle nuisance methods require it.
  std::optional<TrueParams> truth;

  int n() const { return static_cast<int>(w.size()); }
  int d() const { return static_cast<int>(x.cols()); }
};

// The attached truth's family when present; otherwise logistic when every
// outcome is exactly 0 or 1, linear otherwise.
Family infer_family(const Dataset& data);

// CSV with header "w,y,x1,...,xd".  Doubles are written with shortest
// round-trip formatting, so save followed by load reproduces values exactly.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);

}  // namespace atebench
