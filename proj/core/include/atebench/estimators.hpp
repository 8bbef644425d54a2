#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "atebench/calibrate.hpp"
#include "atebench/dataset.hpp"
#include "atebench/glm.hpp"
#include "atebench/sloe.hpp"

namespace atebench {

// How the nuisance models (propensity and per-arm outcome means) are
// produced.  propensity_oracle keeps the true assignment probabilities but
// still fits outcome models; full_oracle uses the truth for everything and
// needs no folds.
enum class NuisanceMethod { mle, platt, sloe, propensity_oracle, full_oracle };

std::string nuisance_name(NuisanceMethod method);
NuisanceMethod nuisance_from_name(const std::string& name);

// Whether binomial outcome predictions go through the series-corrected link
// (applies only to fits carrying an inflation correction).
enum class LinkMode { corrected, raw };

struct CrossfitOptions {
  Family family = Family::linear;
  int folds = 5;
  NuisanceMethod method = NuisanceMethod::mle;
  std::uint64_t seed = 0;
  LinkMode link = LinkMode::corrected;
  int series_order = 1;
  SloeOptions sloe;
  // Clamp propensity predictions to [clip, 1 - clip].  Zero leaves them
  // untouched, which is the default everywhere: the replication runs all use
  // raw propensities, and clipping exists only as an opt-in for ingested
  // data with extreme fitted scores.
  double clip = 0.0;
};

// Shuffles rows 0..n-1 and deals them into contiguous blocks; the first
// n % folds folds get one extra row.  Returns the fold index of each row.
std::vector<int> fold_assignment(int n, int folds, std::uint64_t seed);

// Nuisance models for one fold, fit on the complement of eval_rows.  A
// missing fit means the truth stands in for it.
struct FoldNuisance {
  std::vector<int> eval_rows;
  std::optional<GlmFit> propensity;
  std::optional<GlmFit> outcome1;
  std::optional<GlmFit> outcome0;
};

// Cross-fit nuisances for a dataset: every row is scored exactly once, by
// models that never saw it.
struct NuisanceBundle {
  Family family = Family::linear;
  NuisanceMethod method = NuisanceMethod::mle;
  LinkMode link = LinkMode::corrected;
  int series_order = 1;
  double clip = 0.0;
  std::optional<TrueParams> truth;
  std::vector<FoldNuisance> folds;

  Eigen::VectorXd propensity_at(int fold, const Eigen::MatrixXd& x) const;
  Eigen::VectorXd outcome_mean_at(int fold, int arm,
                                  const Eigen::MatrixXd& x) const;
  // Same, but through an explicit link instead of the bundle's mode.  The
  // binomial targeting step uses this to stay on the probability scale: the
  // series-corrected mean is not the sigmoid of any predictor and can leave
  // (0, 1) when the estimation-noise variance is large.
  Eigen::VectorXd outcome_mean_at(int fold, int arm, const Eigen::MatrixXd& x,
                                  LinkMode link_mode) const;
};

// Method-agnostic per-fold state: raw fits and their leave-one-out
// predictors, from which any method's bundle can be assembled without
// refitting.  Row lists are in ascending order; the arm lists index the rows
// behind outcome1_raw and outcome0_raw.
struct FoldBase {
  std::vector<int> eval_rows;
  std::vector<int> train_rows;
  std::vector<int> train1_rows;
  std::vector<int> train0_rows;
  std::optional<GlmFit> propensity_raw;
  std::optional<LooPredictors> propensity_loo;
  std::optional<GlmFit> outcome1_raw;
  std::optional<GlmFit> outcome0_raw;
  std::optional<LooPredictors> outcome1_loo;
  std::optional<LooPredictors> outcome0_loo;
};

// Fits the raw per-fold models once.  `methods` declares every method the
// base will later serve, so only the needed pieces are computed (the
// leave-one-out pass is skipped when no method rescales, the propensity fit
// when only oracles ask).
std::vector<FoldBase> crossfit_base(const Dataset& data, Family family,
                                    int folds, std::uint64_t seed,
                                    const std::vector<NuisanceMethod>& methods);

// Assembles one method's bundle from a shared base.  Oracle methods require
// data.truth.
NuisanceBundle nuisance_from_base(const Dataset& data,
                                  const std::vector<FoldBase>& base,
                                  const CrossfitOptions& options);

// crossfit_base + nuisance_from_base for a single method.
NuisanceBundle crossfit(const Dataset& data, const CrossfitOptions& options);

// Convenience form with default link handling; the family comes from
// data.truth when present, otherwise from the outcomes (all 0/1 reads as
// logistic).
NuisanceBundle crossfit(const Dataset& data, int folds, NuisanceMethod method,
                        std::uint64_t seed);

Family infer_family(const Dataset& data);

// Weight diagnostics of a propensity vector.  The treated ratio compares the
// average inverse propensity with the average realized weight mass
// mean(w / pi^2); it sits near 1 when the weights are honest and sags below
// when large inverse propensities fail to find treated rows to land on.
// Throws when either arm is empty.
std::pair<double, double> compute_tn(const Eigen::VectorXd& propensity,
                                     const Eigen::VectorXd& w);

struct Diagnostics {
  double t_n_treated = std::numeric_limits<double>::quiet_NaN();
  double t_n_control = std::numeric_limits<double>::quiet_NaN();
  double min_propensity = std::numeric_limits<double>::quiet_NaN();
  double max_propensity = std::numeric_limits<double>::quiet_NaN();
};

// Intercept shifts applied to one fold's outcome models by a targeted
// update, on the working scale of the fluctuation (outcome scale for the
// gaussian form, log-odds for the binomial form).  Both are zero when the
// fold's residuals already average to zero along the clever covariates.
struct TmleFluctuation {
  double eps0 = 0.0;
  double eps1 = 0.0;
};

enum class Estimator {
  gcomp,
  ipw,
  ipw_corrected,
  aipw,
  aipw_oracle,
  tmle_gaussian,
  tmle_binomial,
};

std::string estimator_name(Estimator e);
Estimator estimator_from_name(const std::string& name);

struct EstimateResult {
  std::string estimator;
  double estimate = 0.0;
  std::vector<double> per_fold;
  std::vector<int> fold_sizes;
  Diagnostics diagnostics;
  // One entry per fold for the TMLE estimators, empty otherwise.
  std::vector<TmleFluctuation> fluctuations;

  std::string to_json() const;
};

// Outcome-model difference, averaged over each fold's held-out rows.
EstimateResult gcomputation(const Dataset& data, const NuisanceBundle& bundle);

enum class IpwNormalization { horvitz_thompson, hajek };

// Inverse-propensity weighting.  horvitz_thompson divides both arms by n;
// hajek self-normalizes each arm's weights.  With corrected set, inverse
// propensities are replaced by their noise-debiased versions, which needs
// propensity fits carrying an inflation correction.
EstimateResult ipw(const Dataset& data, const NuisanceBundle& bundle,
                   IpwNormalization normalization =
                       IpwNormalization::horvitz_thompson,
                   bool corrected = false);

// Outcome-model difference plus the inverse-propensity-weighted residual.
EstimateResult aipw(const Dataset& data, const NuisanceBundle& bundle);

// One-step targeted update of gaussian outcome models: per-arm intercepts on
// the clever-covariate scale, solved in closed form.
EstimateResult tmle_gaussian(const Dataset& data, const NuisanceBundle& bundle);

// Targeted update on the logit scale for outcome models that predict
// probabilities; the two fluctuation coordinates separate because each row
// carries exactly one clever covariate.
EstimateResult tmle_binomial(const Dataset& data, const NuisanceBundle& bundle);

// AIPW with both nuisances at their true values, one fold spanning all rows.
// Requires data.truth.
EstimateResult aipw_oracle(const Dataset& data);

// Dispatch by name.  aipw_oracle requires a full-oracle bundle.
EstimateResult run_estimator(const Dataset& data, const NuisanceBundle& bundle,
                             Estimator estimator);

}  // namespace atebench
