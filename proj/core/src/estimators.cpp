#include "atebench/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "json.hpp"

#include "atebench/errors.hpp"
#include "atebench/link.hpp"
#include "atebench/rng.hpp"

namespace atebench {

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(k) = m.row(rows[k]);
  return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = v[rows[k]];
  return out;
}

const GlmFit& require_fit(const std::optional<GlmFit>& fit, const char* what) {
  if (!fit) {
    throw config_error(std::string("the fitted base lacks the ") + what +
                       " this method needs");
  }
  return *fit;
}

const LooPredictors& require_loo(const std::optional<LooPredictors>& loo,
                                 const char* what) {
  if (!loo) {
    throw config_error(std::string("the fitted base lacks the ") + what +
                       " leave-one-out pass this method needs");
  }
  return *loo;
}

std::string arm_label(int fold, int arm) {
  return "fold " + std::to_string(fold) + ", " +
         (arm ? "treated" : "control") + " arm";
}

// Identifiability checks run before fitting so infeasible folds fail with a
// message naming the fold and arm rather than a solver error.
void check_arm_feasible(Family family, int fold, int arm,
                        const std::vector<int>& rows, int d,
                        const Eigen::VectorXd& y) {
  if (rows.empty()) {
    throw numerical_error(arm_label(fold, arm) + " has no training rows");
  }
  if (family == Family::linear) {
    if (static_cast<int>(rows.size()) <= d) {
      throw numerical_error(
          arm_label(fold, arm) + ": " + std::to_string(rows.size()) +
          " training rows cannot identify " + std::to_string(d + 1) +
          " regression coefficients");
    }
    return;
  }
  bool any0 = false, any1 = false;
  for (int i : rows) (y[i] == 1.0 ? any1 : any0) = true;
  if (!any0 || !any1) {
    throw numerical_error(arm_label(fold, arm) +
                          ": outcomes are all one class, so the logistic fit "
                          "is undefined");
  }
}

}  // namespace

std::string nuisance_name(NuisanceMethod method) {
  switch (method) {
    case NuisanceMethod::mle: return "mle";
    case NuisanceMethod::platt: return "platt";
    case NuisanceMethod::sloe: return "sloe";
    case NuisanceMethod::propensity_oracle: return "propensity-oracle";
    case NuisanceMethod::full_oracle: return "oracle";
  }
  throw config_error("unknown nuisance method");
}

NuisanceMethod nuisance_from_name(const std::string& name) {
  if (name == "mle") return NuisanceMethod::mle;
  if (name == "platt") return NuisanceMethod::platt;
  if (name == "sloe") return NuisanceMethod::sloe;
  if (name == "propensity-oracle") return NuisanceMethod::propensity_oracle;
  if (name == "oracle") return NuisanceMethod::full_oracle;
  throw config_error("unknown nuisance method '" + name + "'");
}

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::gcomp: return "gcomp";
    case Estimator::ipw: return "ipw";
    case Estimator::ipw_corrected: return "ipw-corrected";
    case Estimator::aipw: return "aipw";
    case Estimator::aipw_oracle: return "aipw-oracle";
    case Estimator::tmle_gaussian: return "tmle-gaussian";
    case Estimator::tmle_binomial: return "tmle-binomial";
  }
  throw config_error("unknown estimator");
}

Estimator estimator_from_name(const std::string& name) {
  if (name == "gcomp") return Estimator::gcomp;
  if (name == "ipw") return Estimator::ipw;
  if (name == "ipw-corrected") return Estimator::ipw_corrected;
  if (name == "aipw") return Estimator::aipw;
  if (name == "aipw-oracle") return Estimator::aipw_oracle;
  if (name == "tmle-gaussian") return Estimator::tmle_gaussian;
  if (name == "tmle-binomial") return Estimator::tmle_binomial;
  throw config_error("unknown estimator '" + name + "'");
}

std::vector<int> fold_assignment(int n, int folds, std::uint64_t seed) {
  if (n < 1) throw config_error("fold assignment needs at least one row");
  if (folds < 2 || folds > n) {
    throw config_error("folds must lie between 2 and the number of rows");
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<int> assign(n);
  const int base = n / folds;
  const int extra = n % folds;
  int pos = 0;
  for (int f = 0; f < folds; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    for (int k = 0; k < size; ++k) assign[perm[pos++]] = f;
  }
  return assign;
}

std::vector<FoldBase> crossfit_base(const Dataset& data, Family family,
                                    int folds, std::uint64_t seed,
                                    const std::vector<NuisanceMethod>& methods) {
  const int n = data.n();
  bool need_prop = false, need_prop_loo = false, need_outcomes = false,
       need_out_loo = false;
  for (NuisanceMethod m : methods) {
    switch (m) {
      case NuisanceMethod::mle:
        need_prop = true;
        need_outcomes = true;
        break;
      case NuisanceMethod::platt:
      case NuisanceMethod::sloe:
        need_prop = true;
        need_prop_loo = true;
        need_outcomes = true;
        if (family == Family::logistic) need_out_loo = true;
        break;
      case NuisanceMethod::propensity_oracle:
        need_outcomes = true;
        if (family == Family::logistic) need_out_loo = true;
        break;
      case NuisanceMethod::full_oracle:
        break;
    }
  }
  if (!need_prop && !need_outcomes) return {};

  const std::vector<int> assign = fold_assignment(n, folds, seed);
  std::vector<FoldBase> out(folds);
  for (int i = 0; i < n; ++i) {
    FoldBase& fb = out[assign[i]];
    fb.eval_rows.push_back(i);
    for (int f = 0; f < folds; ++f) {
      if (f != assign[i]) out[f].train_rows.push_back(i);
    }
  }
  for (int f = 0; f < folds; ++f) {
    FoldBase& fb = out[f];
    for (int i : fb.train_rows) {
      (data.w[i] == 1.0 ? fb.train1_rows : fb.train0_rows).push_back(i);
    }
    if (need_prop) {
      if (fb.train1_rows.empty() || fb.train0_rows.empty()) {
        throw numerical_error("fold " + std::to_string(f) +
                              ": treatment is constant on the training rows, "
                              "so the propensity fit is undefined");
      }
      const Eigen::MatrixXd xt = rows_of(data.x, fb.train_rows);
      const Eigen::VectorXd wt = rows_of(data.w, fb.train_rows);
      fb.propensity_raw = fit_logistic_mle(xt, wt);
      if (need_prop_loo) {
        fb.propensity_loo = loo_linear_predictors(*fb.propensity_raw, xt, wt);
      }
    }
    if (need_outcomes) {
      for (int arm = 1; arm >= 0; --arm) {
        const std::vector<int>& rows = arm ? fb.train1_rows : fb.train0_rows;
        check_arm_feasible(family, f, arm, rows, data.d(), data.y);
        const Eigen::MatrixXd xa = rows_of(data.x, rows);
        const Eigen::VectorXd ya = rows_of(data.y, rows);
        GlmFit fit = (family == Family::linear) ? fit_ols(xa, ya)
                                                : fit_logistic_mle(xa, ya);
        std::optional<LooPredictors> loo;
        if (family == Family::logistic && need_out_loo) {
          loo = loo_linear_predictors(fit, xa, ya);
        }
        if (arm) {
          fb.outcome1_raw = std::move(fit);
          fb.outcome1_loo = std::move(loo);
        } else {
          fb.outcome0_raw = std::move(fit);
          fb.outcome0_loo = std::move(loo);
        }
      }
    }
  }
  return out;
}

NuisanceBundle nuisance_from_base(const Dataset& data,
                                  const std::vector<FoldBase>& base,
                                  const CrossfitOptions& options) {
  const bool oracle = options.method == NuisanceMethod::propensity_oracle ||
                      options.method == NuisanceMethod::full_oracle;
  if (oracle) {
    if (!data.truth) {
      throw config_error(
          "the oracle methods need a dataset with attached true parameters");
    }
    if (data.truth->eta.size() != data.d()) {
      throw config_error("true parameters and data have mismatched dimensions");
    }
    if (data.truth->family != options.family) {
      throw config_error("true parameters and options disagree on the family");
    }
  }

  NuisanceBundle bundle;
  bundle.family = options.family;
  bundle.method = options.method;
  bundle.link = options.link;
  bundle.series_order = options.series_order;
  bundle.clip = options.clip;
  if (oracle) bundle.truth = data.truth;

  if (options.method == NuisanceMethod::full_oracle) {
    FoldNuisance fn;
    fn.eval_rows.resize(data.n());
    std::iota(fn.eval_rows.begin(), fn.eval_rows.end(), 0);
    bundle.folds.push_back(std::move(fn));
    return bundle;
  }
  if (base.empty()) {
    throw config_error("a fitted method needs a nonempty fold base");
  }

  for (const FoldBase& fb : base) {
    FoldNuisance fn;
    fn.eval_rows = fb.eval_rows;

    switch (options.method) {
      case NuisanceMethod::mle:
        fn.propensity = require_fit(fb.propensity_raw, "propensity fit");
        break;
      case NuisanceMethod::platt:
        fn.propensity = platt_rescale_loo(
            require_fit(fb.propensity_raw, "propensity fit"),
            require_loo(fb.propensity_loo, "propensity"),
            rows_of(data.w, fb.train_rows));
        break;
      case NuisanceMethod::sloe:
        fn.propensity =
            sloe_correct(require_fit(fb.propensity_raw, "propensity fit"),
                         require_loo(fb.propensity_loo, "propensity"),
                         options.sloe);
        break;
      case NuisanceMethod::propensity_oracle:
        break;
      case NuisanceMethod::full_oracle:
        break;
    }

    for (int arm = 1; arm >= 0; --arm) {
      const std::optional<GlmFit>& raw =
          arm ? fb.outcome1_raw : fb.outcome0_raw;
      const std::optional<LooPredictors>& loo =
          arm ? fb.outcome1_loo : fb.outcome0_loo;
      const char* what = arm ? "treated outcome fit" : "control outcome fit";
      GlmFit fit = require_fit(raw, what);
      if (options.family == Family::logistic) {
        switch (options.method) {
          case NuisanceMethod::mle:
            break;
          case NuisanceMethod::platt:
            fit = platt_rescale_loo(
                fit, require_loo(loo, what),
                rows_of(data.y, arm ? fb.train1_rows : fb.train0_rows));
            break;
          case NuisanceMethod::sloe:
          case NuisanceMethod::propensity_oracle:
            fit = sloe_correct(fit, require_loo(loo, what), options.sloe);
            break;
          case NuisanceMethod::full_oracle:
            break;
        }
      }
      (arm ? fn.outcome1 : fn.outcome0) = std::move(fit);
    }
    bundle.folds.push_back(std::move(fn));
  }
  return bundle;
}

NuisanceBundle crossfit(const Dataset& data, const CrossfitOptions& options) {
  if (options.method == NuisanceMethod::full_oracle) {
    return nuisance_from_base(data, {}, options);
  }
  return nuisance_from_base(
      data,
      crossfit_base(data, options.family, options.folds, options.seed,
                    {options.method}),
      options);
}

NuisanceBundle crossfit(const Dataset& data, int folds, NuisanceMethod method,
                        std::uint64_t seed) {
  CrossfitOptions options;
  options.family = infer_family(data);
  options.folds = folds;
  options.method = method;
  options.seed = seed;
  return crossfit(data, options);
}

Eigen::VectorXd NuisanceBundle::propensity_at(int fold,
                                              const Eigen::MatrixXd& x) const {
  const FoldNuisance& fn = folds.at(fold);
  Eigen::VectorXd pi;
  if (fn.propensity) {
    pi = predict(*fn.propensity, x);
  } else {
    if (!truth) {
      throw config_error("bundle has neither a propensity fit nor the truth");
    }
    pi = x * truth->eta;
    for (Eigen::Index i = 0; i < pi.size(); ++i) pi[i] = sigmoid(pi[i]);
  }
  if (clip > 0.0) {
    pi = pi.cwiseMax(clip).cwiseMin(1.0 - clip);
  }
  return pi;
}

Eigen::VectorXd NuisanceBundle::outcome_mean_at(int fold, int arm,
                                                const Eigen::MatrixXd& x) const {
  return outcome_mean_at(fold, arm, x, link);
}

Eigen::VectorXd NuisanceBundle::outcome_mean_at(int fold, int arm,
                                                const Eigen::MatrixXd& x,
                                                LinkMode link_mode) const {
  const FoldNuisance& fn = folds.at(fold);
  const std::optional<GlmFit>& of = arm ? fn.outcome1 : fn.outcome0;
  if (!of) {
    if (!truth) {
      throw config_error("bundle has neither outcome fits nor the truth");
    }
    Eigen::VectorXd lp = x * (arm ? truth->beta1 : truth->beta0);
    if (arm) lp.array() += truth->tau;
    if (truth->family == Family::logistic) {
      for (Eigen::Index i = 0; i < lp.size(); ++i) lp[i] = sigmoid(lp[i]);
    }
    return lp;
  }
  const GlmFit& fit = *of;
  if (fit.family == GlmFamily::binomial && link_mode == LinkMode::corrected &&
      std::holds_alternative<SloeCorrection>(fit.correction)) {
    const Eigen::VectorXd lp = linear_predictors(fit, x);
    const Eigen::VectorXd s2 = sigma_x2_estimate(fit, x);
    Eigen::VectorXd out(lp.size());
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
      out[i] = corrected_link(lp[i], s2[i], series_order);
    }
    return out;
  }
  return predict(fit, x);
}

namespace {

// Non-throwing core shared by compute_tn and the estimator diagnostics; an
// empty arm leaves its ratio NaN (a zero denominator).
Diagnostics tn_diagnostics(const Eigen::VectorXd& propensity,
                           const Eigen::VectorXd& w) {
  Diagnostics d;
  d.min_propensity = propensity.minCoeff();
  d.max_propensity = propensity.maxCoeff();
  double inv1 = 0.0, mass1 = 0.0, inv0 = 0.0, mass0 = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double pi = propensity[i];
    inv1 += 1.0 / pi;
    mass1 += w[i] / (pi * pi);
    inv0 += 1.0 / (1.0 - pi);
    mass0 += (1.0 - w[i]) / ((1.0 - pi) * (1.0 - pi));
  }
  d.t_n_treated = inv1 / mass1;
  d.t_n_control = inv0 / mass0;
  return d;
}

}  // namespace

std::pair<double, double> compute_tn(const Eigen::VectorXd& propensity,
                                     const Eigen::VectorXd& w) {
  if (w.size() != propensity.size() || w.size() == 0) {
    throw config_error("weights and propensities have mismatched sizes");
  }
  const double treated = w.sum();
  if (treated == 0.0 || treated == static_cast<double>(w.size())) {
    throw numerical_error("T_n needs at least one unit in each arm");
  }
  const Diagnostics d = tn_diagnostics(propensity, w);
  return {d.t_n_treated, d.t_n_control};
}

std::string EstimateResult::to_json() const {
  nlohmann::json j;
  j["estimator"] = estimator;
  j["estimate"] = estimate;
  j["per_fold"] = per_fold;
  j["fold_sizes"] = fold_sizes;
  j["diagnostics"] = {{"t_n_treated", diagnostics.t_n_treated},
                      {"t_n_control", diagnostics.t_n_control},
                      {"min_propensity", diagnostics.min_propensity},
                      {"max_propensity", diagnostics.max_propensity}};
  if (!fluctuations.empty()) {
    nlohmann::json fl = nlohmann::json::array();
    for (const TmleFluctuation& f : fluctuations) {
      fl.push_back({{"eps0", f.eps0}, {"eps1", f.eps1}});
    }
    j["fluctuations"] = fl;
  }
  return j.dump();
}

namespace {

struct FoldData {
  Eigen::MatrixXd x;
  Eigen::VectorXd w, y, pi, mu1, mu0;
};

FoldData fold_data(const Dataset& data, const NuisanceBundle& bundle, int f) {
  const std::vector<int>& rows = bundle.folds.at(f).eval_rows;
  if (rows.empty()) throw config_error("a fold has no evaluation rows");
  FoldData fd;
  fd.x = rows_of(data.x, rows);
  fd.w = rows_of(data.w, rows);
  fd.y = rows_of(data.y, rows);
  fd.pi = bundle.propensity_at(f, fd.x);
  fd.mu1 = bundle.outcome_mean_at(f, 1, fd.x);
  fd.mu0 = bundle.outcome_mean_at(f, 0, fd.x);
  return fd;
}

void check_propensity_open(const Eigen::VectorXd& pi) {
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    if (!(pi[i] > 0.0 && pi[i] < 1.0)) {
      throw numerical_error("a propensity estimate left the open interval "
                            "(0, 1); inverse weights are undefined");
    }
  }
}

void check_both_arms(const Eigen::VectorXd& w) {
  const double treated = w.sum();
  if (treated == 0.0 || treated == static_cast<double>(w.size())) {
    throw numerical_error("an evaluation fold contains only one arm");
  }
}

// Shared frame: runs `per_fold` on each fold's data, pools propensities for
// the diagnostics, and size-weights the fold estimates.
template <class PerFold>
EstimateResult estimate_by_folds(const Dataset& data,
                                 const NuisanceBundle& bundle,
                                 std::string name, PerFold&& per_fold) {
  EstimateResult r;
  r.estimator = std::move(name);
  const int n = data.n();
  Eigen::VectorXd all_w(n), all_pi(n);
  int at = 0;
  double weighted = 0.0;
  int total = 0;
  for (int f = 0; f < static_cast<int>(bundle.folds.size()); ++f) {
    FoldData fd = fold_data(data, bundle, f);
    const double theta = per_fold(f, fd);
    const int m = static_cast<int>(fd.w.size());
    r.per_fold.push_back(theta);
    r.fold_sizes.push_back(m);
    weighted += theta * m;
    total += m;
    all_w.segment(at, m) = fd.w;
    all_pi.segment(at, m) = fd.pi;
    at += m;
  }
  if (total != n) {
    throw config_error("bundle folds do not cover the dataset exactly once");
  }
  r.estimate = weighted / total;
  r.diagnostics = tn_diagnostics(all_pi, all_w);
  return r;
}

// Maximizes the binomial log likelihood of sigmoid(logit + eps * h) over the
// scalar eps, for rows of one arm.  The gradient is decreasing, so a doubling
// bracket plus Newton with bisection fallback is safe.
double solve_fluctuation(const Eigen::VectorXd& logit_mu,
                         const Eigen::VectorXd& h, const Eigen::VectorXd& y) {
  const auto grad = [&](double eps) {
    double g = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      g += h[i] * (y[i] - sigmoid(logit_mu[i] + eps * h[i]));
    }
    return g;
  };
  const double g0 = grad(0.0);
  const double tol = 1e-10 * (1.0 + std::abs(g0));
  double lo = 0.0, hi = 0.0;
  if (g0 > 0.0) {
    hi = 1.0;
    int grow = 0;
    while (grad(hi) > 0.0) {
      lo = hi;
      hi *= 2.0;
      if (++grow > 60) {
        throw numerical_error(
            "the targeted update diverged; an arm's outcomes give the "
            "fluctuation no finite optimum");
      }
    }
  } else {
    lo = -1.0;
    int grow = 0;
    while (grad(lo) < 0.0) {
      hi = lo;
      lo *= 2.0;
      if (++grow > 60) {
        throw numerical_error(
            "the targeted update diverged; an arm's outcomes give the "
            "fluctuation no finite optimum");
      }
    }
  }
  double eps = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double g = grad(eps);
    if (std::abs(g) <= tol) return eps;
    if (g > 0.0) lo = eps; else hi = eps;
    double curv = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double p = sigmoid(logit_mu[i] + eps * h[i]);
      curv += h[i] * h[i] * p * (1.0 - p);
    }
    double next = curv > 0.0 ? eps + g / curv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == eps) return eps;
    eps = next;
  }
  return eps;
}

}  // namespace

EstimateResult gcomputation(const Dataset& data, const NuisanceBundle& bundle) {
  return estimate_by_folds(data, bundle, "gcomp", [](int, const FoldData& fd) {
    return (fd.mu1 - fd.mu0).mean();
  });
}

EstimateResult ipw(const Dataset& data, const NuisanceBundle& bundle,
                   IpwNormalization normalization, bool corrected) {
  const std::string name = corrected ? "ipw-corrected" : "ipw";
  return estimate_by_folds(data, bundle, name, [&](int f, const FoldData& fd) {
    check_propensity_open(fd.pi);
    check_both_arms(fd.w);
    Eigen::VectorXd inv1, inv0;
    if (corrected) {
      const FoldNuisance& fn = bundle.folds[f];
      if (!fn.propensity) {
        throw config_error(
            "the corrected weights need a fitted propensity model");
      }
      inv1 = inverse_propensity_corrected(*fn.propensity, fd.x);
      inv0 = inverse_propensity_corrected_control(*fn.propensity, fd.x);
    } else {
      inv1 = fd.pi.cwiseInverse();
      inv0 = (1.0 - fd.pi.array()).inverse();
    }
    const Eigen::ArrayXd w = fd.w.array();
    const Eigen::ArrayXd y = fd.y.array();
    const Eigen::ArrayXd a1 = w * y * inv1.array();
    const Eigen::ArrayXd a0 = (1.0 - w) * y * inv0.array();
    if (normalization == IpwNormalization::hajek) {
      const double m1 = (w * inv1.array()).sum();
      const double m0 = ((1.0 - w) * inv0.array()).sum();
      return a1.sum() / m1 - a0.sum() / m0;
    }
    return a1.mean() - a0.mean();
  });
}

EstimateResult aipw(const Dataset& data, const NuisanceBundle& bundle) {
  return estimate_by_folds(data, bundle, "aipw", [](int, const FoldData& fd) {
    check_propensity_open(fd.pi);
    check_both_arms(fd.w);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < fd.w.size(); ++i) {
      double v = fd.mu1[i] - fd.mu0[i];
      if (fd.w[i] == 1.0) {
        v += (fd.y[i] - fd.mu1[i]) / fd.pi[i];
      } else {
        v -= (fd.y[i] - fd.mu0[i]) / (1.0 - fd.pi[i]);
      }
      acc += v;
    }
    return acc / static_cast<double>(fd.w.size());
  });
}

EstimateResult tmle_gaussian(const Dataset& data,
                             const NuisanceBundle& bundle) {
  std::vector<TmleFluctuation> fl;
  EstimateResult r = estimate_by_folds(
      data, bundle, "tmle-gaussian", [&fl](int, const FoldData& fd) {
        check_propensity_open(fd.pi);
        check_both_arms(fd.w);
        double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
        for (Eigen::Index i = 0; i < fd.w.size(); ++i) {
          const double pi = fd.pi[i];
          if (fd.w[i] == 1.0) {
            num1 += (fd.y[i] - fd.mu1[i]) / pi;
            den1 += 1.0 / (pi * pi);
          } else {
            num0 += (fd.y[i] - fd.mu0[i]) / (1.0 - pi);
            den0 += 1.0 / ((1.0 - pi) * (1.0 - pi));
          }
        }
        const double eps1 = num1 / den1;
        const double eps0 = num0 / den0;
        fl.push_back({eps0, eps1});
        double acc = 0.0;
        for (Eigen::Index i = 0; i < fd.w.size(); ++i) {
          acc += fd.mu1[i] + eps1 / fd.pi[i] -
                 (fd.mu0[i] + eps0 / (1.0 - fd.pi[i]));
        }
        return acc / static_cast<double>(fd.w.size());
      });
  r.fluctuations = std::move(fl);
  return r;
}

EstimateResult tmle_binomial(const Dataset& data,
                             const NuisanceBundle& bundle) {
  if (bundle.family != Family::logistic) {
    throw config_error(
        "the binomial update needs outcome models on the probability scale");
  }
  std::vector<TmleFluctuation> fl;
  EstimateResult r = estimate_by_folds(
      data, bundle, "tmle-binomial", [&fl](int, const FoldData& fd) {
        check_propensity_open(fd.pi);
        check_both_arms(fd.w);
        const Eigen::Index m = fd.w.size();
        Eigen::VectorXd l1(m), l0(m);
        for (Eigen::Index i = 0; i < m; ++i) {
          const double m1 = fd.mu1[i];
          const double m0 = fd.mu0[i];
          if (!(m1 > 0.0 && m1 < 1.0 && m0 > 0.0 && m0 < 1.0)) {
            throw numerical_error(
                "an outcome prediction left the open interval (0, 1); the "
                "logit-scale update is undefined");
          }
          l1[i] = std::log(m1 / (1.0 - m1));
          l0[i] = std::log(m0 / (1.0 - m0));
        }
        std::vector<int> t_rows, c_rows;
        for (Eigen::Index i = 0; i < m; ++i) {
          (fd.w[i] == 1.0 ? t_rows : c_rows).push_back(static_cast<int>(i));
        }
        Eigen::VectorXd lt = rows_of(l1, t_rows);
        Eigen::VectorXd ht(lt.size()), yt = rows_of(fd.y, t_rows);
        for (Eigen::Index k = 0; k < lt.size(); ++k) {
          ht[k] = 1.0 / fd.pi[t_rows[k]];
        }
        const double eps1 = solve_fluctuation(lt, ht, yt);

        Eigen::VectorXd lc = rows_of(l0, c_rows);
        Eigen::VectorXd hc(lc.size()), yc = rows_of(fd.y, c_rows);
        for (Eigen::Index k = 0; k < lc.size(); ++k) {
          hc[k] = 1.0 / (1.0 - fd.pi[c_rows[k]]);
        }
        const double eps0 = solve_fluctuation(lc, hc, yc);
        fl.push_back({eps0, eps1});

        double acc = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          acc += sigmoid(l1[i] + eps1 / fd.pi[i]) -
                 sigmoid(l0[i] + eps0 / (1.0 - fd.pi[i]));
        }
        return acc / static_cast<double>(m);
      });
  r.fluctuations = std::move(fl);
  return r;
}

EstimateResult aipw_oracle(const Dataset& data) {
  if (!data.truth) {
    throw config_error(
        "the oracle estimator needs a dataset with attached true parameters");
  }
  CrossfitOptions options;
  options.family = data.truth->family;
  options.method = NuisanceMethod::full_oracle;
  NuisanceBundle bundle = crossfit(data, options);
  EstimateResult r = aipw(data, bundle);
  r.estimator = "aipw-oracle";
  return r;
}

EstimateResult run_estimator(const Dataset& data, const NuisanceBundle& bundle,
                             Estimator estimator) {
  switch (estimator) {
    case Estimator::gcomp:
      return gcomputation(data, bundle);
    case Estimator::ipw:
      return ipw(data, bundle);
    case Estimator::ipw_corrected:
      return ipw(data, bundle, IpwNormalization::horvitz_thompson, true);
    case Estimator::aipw:
      return aipw(data, bundle);
    case Estimator::aipw_oracle: {
      if (bundle.method != NuisanceMethod::full_oracle || !bundle.truth) {
        throw config_error("the oracle estimator needs a full-oracle bundle");
      }
      EstimateResult r = aipw(data, bundle);
      r.estimator = "aipw-oracle";
      return r;
    }
    case Estimator::tmle_gaussian:
      return tmle_gaussian(data, bundle);
    case Estimator::tmle_binomial:
      return tmle_binomial(data, bundle);
  }
  throw config_error("unknown estimator");
}

}  // namespace atebench
