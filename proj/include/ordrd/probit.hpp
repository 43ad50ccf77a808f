#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ordrd/dataset.hpp"

namespace ordrd {

// eta = (u_1, ..., u_{J-1}, beta); implicit u_0 = -inf, u_J = +inf.
// No intercept in beta: the cutoffs absorb location.
struct ProbitParams {
  Eigen::VectorXd cutoffs;  // strictly increasing, length J-1
  Eigen::VectorXd beta;     // length p

  Eigen::Index dim() const { return cutoffs.size() + beta.size(); }
  Eigen::VectorXd pack() const;  // eta vector
  static ProbitParams unpack(const Eigen::VectorXd& eta, Eigen::Index n_cutoffs);
};

struct FitSettings {
  double grad_tol = 1e-8;  // infinity norm of the total score, eta coordinates
  int max_iterations = 200;
  int max_halvings = 30;
  // empty interior category: error, or collapse to occupied ranks (threshold
  // moves to the first occupied category at or above it; every Z preserved)
  enum class EmptyCategory { Error, Collapse };
  EmptyCategory empty_category = EmptyCategory::Error;
};

struct FittedProbit {
  ProbitParams params;
  CategoryScale scale;  // scale actually used (collapsed when requested)
  double loglik;
  Eigen::MatrixXd per_obs_scores;  // N x dim(eta), rows S_i(eta_hat)
  // E_etaeta estimate: average per-observation observed information,
  // i.e. observed_information(params, data) / N.
  Eigen::MatrixXd information;
  bool converged;
  int iterations;
};

// Sum over units of log[Phi(u_c - x b) - Phi(u_{c-1} - x b)] for the unit's
// category c. Non-increasing cutoffs or a cell probability at/below the
// 1e-12 floor → FitError naming the offender.
double log_likelihood(const ProbitParams& params, const Dataset& data);

struct ScoreResult {
  Eigen::VectorXd total;    // dim(eta)
  Eigen::MatrixXd per_obs;  // N x dim(eta)
};

ScoreResult score(const ProbitParams& params, const Dataset& data);

// Negative Hessian of log_likelihood (total over observations), analytic,
// symmetrized bit-exactly.
Eigen::MatrixXd observed_information(const ProbitParams& params, const Dataset& data);

// Newton-Raphson on the reparameterization (u_1, log-increments, beta) with
// step-halving; steepest ascent when the Hessian is not negative definite.
// Start: beta = 0, cutoffs at normal quantiles of cumulative category
// frequencies (the exact null-model MLE).
FittedProbit fit(const Dataset& data, const FitSettings& settings = {});

// Simplex of length J for one covariate row; entries in [0,1], sum 1.
Eigen::VectorXd category_probabilities(const FittedProbit& fit, const Eigen::RowVectorXd& x);

struct PropensityVector {
  Eigen::VectorXd e_hat;  // clamped to [1e-10, 1 - 1e-10]
  Eigen::MatrixXd e_eta;  // N x dim(eta) gradient rows
};

// e_i = 1 - Phi(u_{t-1} - x_i beta) with t from fit.scale. Gradient rows:
// d/du_{t-1} = -phi(u_{t-1} - x_i beta), d/dbeta = phi(.) x_i, other cutoffs 0.
PropensityVector propensity(const FittedProbit& fit, const Dataset& data);

struct PropensityByCategory {
  struct Row {
    std::string label;
    std::size_t n;
    double min, q1, q2, q3, max;  // NaN when n = 0
    double share_ge_half;
  };
  std::vector<Row> rows;  // one per category of data.scale, in order
  // share(e > 0.5) among units in the two categories at/just above the
  // threshold, and share(e < 0.5) among the two just below — the
  // well-specification diagnostic.
  double share_above_half_treated_side;
  double share_below_half_control_side;
};

PropensityByCategory propensity_by_category(const FittedProbit& fit, const Dataset& data);

// Structured-text round trip for reuse across runs (parameters, convergence
// metadata, information). Per-observation scores are recomputable from data
// and are not serialized.
std::string serialize_probit(const FittedProbit& fit);
FittedProbit parse_probit(const std::string& text);

}  // namespace ordrd
