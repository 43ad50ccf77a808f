#include "ordrd/estimate.hpp"

#include <cmath>

#include "ordrd/errors.hpp"
#include "ordrd/stats.hpp"

namespace ordrd {

double hajek_wate(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z, const Eigen::VectorXd& w) {
  if (Y.size() != Z.size() || Y.size() != w.size()) {
    throw EstimationError("hajek_wate: input length mismatch");
  }
  std::vector<double> wy1, w1, wy0, w0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    if (Z(i) == 1) {
      wy1.push_back(w(i) * Y(i));
      w1.push_back(w(i));
    } else {
      wy0.push_back(w(i) * Y(i));
      w0.push_back(w(i));
    }
  }
  const double sw1 = pairwise_sum(w1);
  const double sw0 = pairwise_sum(w0);
  if (!(sw1 > 0.0)) throw EstimationError("hajek_wate: zero total weight in the treated arm");
  if (!(sw0 > 0.0)) throw EstimationError("hajek_wate: zero total weight in the control arm");
  return pairwise_sum(wy1) / sw1 - pairwise_sum(wy0) / sw0;
}

OutcomeModel fit_outcome_model(const Dataset& sub, int arm, const std::vector<Term>& terms) {
  if (arm != 0 && arm != 1) throw EstimationError("outcome-model arm must be 0 or 1");
  const Eigen::Index n = sub.n();
  const auto k = static_cast<Eigen::Index>(terms.size()) + 1;

  OutcomeModel model;
  model.arm = arm;
  model.terms = terms;
  model.term_names.push_back("(intercept)");
  for (const auto& t : terms) model.term_names.push_back(t.name);
  model.design = build_design(terms, sub.X, true);

  std::vector<Eigen::Index> arm_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sub.Z(i) == arm) arm_rows.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(arm_rows.size());
  if (na <= k) {
    throw EstimationError("arm " + std::to_string(arm) + " has " + std::to_string(na) +
                          " units; needs more than " + std::to_string(k) + " coefficients");
  }
  Eigen::MatrixXd Xa(na, k);
  Eigen::VectorXd ya(na);
  for (Eigen::Index r = 0; r < na; ++r) {
    Xa.row(r) = model.design.row(arm_rows[static_cast<std::size_t>(r)]);
    ya(r) = sub.outcome(arm_rows[static_cast<std::size_t>(r)]);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xa);
  if (qr.rank() < k) {
    std::string collinear;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index pos = qr.rank(); pos < k; ++pos) {
      const auto col = static_cast<std::size_t>(perm(pos));
      collinear += (collinear.empty() ? "" : ", ") + model.term_names[col];
    }
    throw EstimationError("outcome design matrix rank-deficient; collinear terms: " + collinear);
  }
  model.gamma = qr.solve(ya);
  model.mu = model.design * model.gamma;

  model.scores = Eigen::MatrixXd::Zero(n, k);
  model.information = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sub.Z(i) == arm) {
      model.scores.row(i) = (sub.outcome(i) - model.mu(i)) * model.design.row(i);
      model.information += model.design.row(i).transpose() * model.design.row(i);
    }
  }
  model.information /= static_cast<double>(n);
  return model;
}

double augmented_att(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                     const Eigen::VectorXd& e_hat, const Eigen::VectorXd& mu0) {
  const Eigen::Index n = Y.size();
  if (Z.size() != n || e_hat.size() != n || mu0.size() != n) {
    throw EstimationError("augmented_att: input length mismatch");
  }
  double nz = 0.0;
  std::vector<double> zy(static_cast<std::size_t>(n)), corr(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = e_hat(i);
    if (!(e > 0.0 && e < 1.0)) throw EstimationError("augmented_att: propensity outside (0,1)");
    const double z = Z(i);
    nz += z;
    zy[static_cast<std::size_t>(i)] = z * Y(i);
    corr[static_cast<std::size_t>(i)] = (Y(i) * (1.0 - z) * e + mu0(i) * (z - e)) / (1.0 - e);
  }
  if (!(nz > 0.0)) throw EstimationError("augmented_att: no treated units");
  if (nz == static_cast<double>(n)) throw EstimationError("augmented_att: no control units");
  return pairwise_sum(zy) / nz - pairwise_sum(corr) / nz;
}

double augmented_att(const Dataset& sub, const Eigen::VectorXd& e_hat, const OutcomeModel& mu0) {
  return augmented_att(sub.outcome, sub.Z, e_hat, mu0.mu);
}

double augmented_ato(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                     const Eigen::VectorXd& e_hat, const Eigen::VectorXd& mu0,
                     const Eigen::VectorXd& mu1) {
  const Eigen::Index n = Y.size();
  if (Z.size() != n || e_hat.size() != n || mu0.size() != n || mu1.size() != n) {
    throw EstimationError("augmented_ato: input length mismatch");
  }
  const auto n_treated = (Z.array() == 1).count();
  if (n_treated == 0 || n_treated == n) {
    throw EstimationError("augmented_ato: subsample must contain both arms");
  }
  std::vector<double> treated_part(static_cast<std::size_t>(n)),
      control_part(static_cast<std::size_t>(n)), tilt(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = e_hat(i);
    if (!(e > 0.0 && e < 1.0)) throw EstimationError("augmented_ato: propensity outside (0,1)");
    const double z = Z(i);
    treated_part[static_cast<std::size_t>(i)] = (1.0 - e) * (z * Y(i) - (z - e) * mu1(i));
    control_part[static_cast<std::size_t>(i)] = e * ((1.0 - z) * Y(i) + (z - e) * mu0(i));
    tilt[static_cast<std::size_t>(i)] = e * (1.0 - e);
  }
  const double denom = pairwise_sum(tilt);
  if (!(denom > 0.0)) throw EstimationError("augmented_ato: zero tilting mass");
  return (pairwise_sum(treated_part) - pairwise_sum(control_part)) / denom;
}

double augmented_ato(const Dataset& sub, const Eigen::VectorXd& e_hat, const OutcomeModel& mu0,
                     const OutcomeModel& mu1) {
  return augmented_ato(sub.outcome, sub.Z, e_hat, mu0.mu, mu1.mu);
}

double p_value(double tau, double se) { return two_sided_p_value(tau, se); }

}  // namespace ordrd
