#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ordrd/balance.hpp"
#include "ordrd/dataset.hpp"
#include "ordrd/terms.hpp"

namespace ordrd {

// Hajek ratio estimator: sum(wZY)/sum(wZ) - sum(w(1-Z)Y)/sum(w(1-Z)).
double hajek_wate(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z, const Eigen::VectorXd& w);

// Per-arm linear outcome model fitted by unweighted OLS on the subsample's
// arm-z units; the design (intercept + terms) and fitted values cover every
// unit passed in, so the other arm's counterfactual predictions are ready.
struct OutcomeModel {
  int arm;
  std::vector<Term> terms;
  std::vector<std::string> term_names;  // "(intercept)" first
  Eigen::VectorXd gamma;
  Eigen::MatrixXd design;       // n x k, all units
  Eigen::VectorXd mu;           // n fitted values, all units
  Eigen::MatrixXd scores;       // n x k rows: 1{Z=arm} (Y - mu) x~
  Eigen::MatrixXd information;  // k x k: (1/n) sum 1{Z=arm} x~ x~^T
};

// Rank deficiency → EstimationError naming the collinear terms; arm must
// have more units than coefficients.
OutcomeModel fit_outcome_model(const Dataset& sub, int arm, const std::vector<Term>& terms);

// sum(YZ)/sum(Z) - (1/sum(Z)) sum([Y(1-Z)e + mu0 (Z-e)] / (1-e))
double augmented_att(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                     const Eigen::VectorXd& e_hat, const Eigen::VectorXd& mu0);
double augmented_att(const Dataset& sub, const Eigen::VectorXd& e_hat, const OutcomeModel& mu0);

// sum((1-e)[ZY - (Z-e)mu1]) / sum(e(1-e)) - sum(e[(1-Z)Y + (Z-e)mu0]) / sum(e(1-e))
double augmented_ato(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                     const Eigen::VectorXd& e_hat, const Eigen::VectorXd& mu0,
                     const Eigen::VectorXd& mu1);
double augmented_ato(const Dataset& sub, const Eigen::VectorXd& e_hat, const OutcomeModel& mu0,
                     const OutcomeModel& mu1);

// Two-sided normal p-value 2(1 - Phi(|tau|/se)); se must be positive.
double p_value(double tau, double se);

struct EffectEstimate {
  std::string estimand;  // ATO / ATT
  double tau;
  double se;
  double p_value;
  Interval interval;
  std::size_t n0, n1;
  double theta_hat;
};

}  // namespace ordrd
