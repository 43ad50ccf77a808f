#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ordrd/dataset.hpp"
#include "ordrd/estimate.hpp"
#include "ordrd/probit.hpp"

namespace ordrd {

// Everything the sandwich needs, one row per subsample unit. E_eta is the
// average per-observation information from the FULL-sample probit fit; the
// score rows are those of the subsample units (nuisance estimates from the
// larger sample are inserted into the subsample estimating equations).
struct SandwichInputs {
  Eigen::VectorXd Y;
  Eigen::VectorXi Z;
  Eigen::VectorXd e;          // clamped propensities
  Eigen::MatrixXd e_eta;      // n x dim(eta)
  Eigen::MatrixXd score_eta;  // n x dim(eta)
  Eigen::MatrixXd E_eta;      // dim x dim
};

SandwichInputs make_sandwich_inputs(const Dataset& full, const FittedProbit& fit,
                                    const PropensityVector& pv,
                                    const std::vector<Eigen::Index>& sub_rows);

struct InfluenceDecomposition {
  std::string estimand;  // ATO / ATT
  double se;
  double theta_hat;
  double tau1, tau0;           // tau = tau1 - tau0
  Eigen::VectorXd influence;   // per-unit I_i
  Eigen::VectorXd U1, U0;      // raw estimating-function values
  Eigen::VectorXd H_eta;
  Eigen::VectorXd H_gamma0;
  Eigen::VectorXd H_gamma1;  // empty for ATT
};

// Sandwich se for the augmented ATT: influence
// I_i = (U1_i - U0_i) - H_eta' E_eta^{-1} S_i(eta) - H_g0' E_g0^{-1} S_i(g0),
// variance (n theta)^{-2} sum I_i^2 with theta = mean(e).
InfluenceDecomposition sandwich_att(const SandwichInputs& in, const OutcomeModel& mu0);

// Augmented ATO: three corrections (eta, gamma1, gamma0), theta = mean(e(1-e)).
InfluenceDecomposition sandwich_ato(const SandwichInputs& in, const OutcomeModel& mu0,
                                    const OutcomeModel& mu1);

struct InfluenceDiagnostics {
  double median_abs_influence;
  std::vector<std::size_t> flagged;  // units with |I_i| > 5 x median |I|
};

InfluenceDiagnostics influence_diagnostics(const InfluenceDecomposition& decomp);

// theta, H-vectors, and the first influence values as structured text.
std::string dump_decomposition(const InfluenceDecomposition& decomp, std::size_t max_units = 10);

}  // namespace ordrd
