#include "ordrd/variance.hpp"

#include <cmath>
#include <sstream>

#include "ordrd/errors.hpp"
#include "ordrd/stats.hpp"

namespace ordrd {

namespace {

// SPD solve with a condition-number gate; information blocks must be well
// posed before their inverses enter the influence assembly.
Eigen::VectorXd solve_information(const std::string& name, const Eigen::MatrixXd& M,
                                  const Eigen::VectorXd& v) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  if (eig.info() != Eigen::Success) {
    throw EstimationError("information block " + name + ": eigen decomposition failed");
  }
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    std::ostringstream msg;
    msg << "information block " << name << " is singular or ill-conditioned"
        << " (min eigenvalue " << lo << ", condition number " << (lo > 0.0 ? hi / lo : INFINITY)
        << ")";
    throw EstimationError(msg.str());
  }
  return eig.eigenvectors() *
         (eig.eigenvectors().transpose() * v).cwiseQuotient(eig.eigenvalues());
}

double mean_of(const Eigen::VectorXd& v) {
  return pairwise_sum(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))) /
         static_cast<double>(v.size());
}

double sum_of(const Eigen::VectorXd& v) {
  return pairwise_sum(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Eigen::VectorXd column_means(const Eigen::MatrixXd& M) {
  Eigen::VectorXd out(M.cols());
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    out(j) = pairwise_sum(std::span<const double>(M.col(j).data(),
                                                  static_cast<std::size_t>(M.rows()))) /
             static_cast<double>(M.rows());
  }
  return out;
}

void check_inputs(const SandwichInputs& in, const OutcomeModel& model) {
  const Eigen::Index n = in.Y.size();
  if (in.Z.size() != n || in.e.size() != n || in.e_eta.rows() != n || in.score_eta.rows() != n ||
      model.mu.size() != n || model.scores.rows() != n) {
    throw EstimationError("sandwich inputs disagree on the subsample size");
  }
  if (in.E_eta.rows() != in.E_eta.cols() || in.E_eta.rows() != in.e_eta.cols() ||
      in.score_eta.cols() != in.e_eta.cols()) {
    throw EstimationError("sandwich inputs disagree on dim(eta)");
  }
  if ((in.Z.array() == 1).count() == 0 || (in.Z.array() == 0).count() == 0) {
    throw EstimationError("sandwich requires both arms in the subsample");
  }
}

}  // namespace

SandwichInputs make_sandwich_inputs(const Dataset& full, const FittedProbit& fit,
                                    const PropensityVector& pv,
                                    const std::vector<Eigen::Index>& sub_rows) {
  if (!fit.converged) throw EstimationError("sandwich requires a converged propensity fit");
  if (pv.e_hat.size() != full.n() || fit.per_obs_scores.rows() != full.n()) {
    throw EstimationError("propensity/score rows do not cover the full sample");
  }
  SandwichInputs in;
  const auto n = static_cast<Eigen::Index>(sub_rows.size());
  in.Y.resize(n);
  in.Z.resize(n);
  in.e.resize(n);
  in.e_eta.resize(n, pv.e_eta.cols());
  in.score_eta.resize(n, fit.per_obs_scores.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = sub_rows[static_cast<std::size_t>(k)];
    in.Y(k) = full.outcome(i);
    in.Z(k) = full.Z(i);
    in.e(k) = pv.e_hat(i);
    in.e_eta.row(k) = pv.e_eta.row(i);
    in.score_eta.row(k) = fit.per_obs_scores.row(i);
  }
  in.E_eta = fit.information;
  return in;
}

InfluenceDecomposition sandwich_att(const SandwichInputs& in, const OutcomeModel& mu0) {
  check_inputs(in, mu0);
  if (mu0.arm != 0) throw EstimationError("sandwich_att: mu0 must model arm 0");
  const Eigen::Index n = in.Y.size();
  const auto nd = static_cast<double>(n);

  Eigen::VectorXd zy(n), corr(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = in.Z(i);
    zy(i) = z * in.Y(i);
    corr(i) = (in.Y(i) * (1.0 - z) * in.e(i) + mu0.mu(i) * (z - in.e(i))) / (1.0 - in.e(i));
  }
  const double sum_z = static_cast<double>((in.Z.array() == 1).count());

  InfluenceDecomposition d;
  d.estimand = "ATT";
  d.tau1 = sum_of(zy) / sum_z;
  d.tau0 = sum_of(corr) / sum_z;
  d.theta_hat = mean_of(in.e);

  d.U1.resize(n);
  d.U0.resize(n);
  Eigen::MatrixXd h_eta_terms(n, in.e_eta.cols());
  Eigen::MatrixXd h_g0_terms(n, mu0.design.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = in.Z(i);
    const double e = in.e(i);
    d.U1(i) = z * (in.Y(i) - d.tau1);
    d.U0(i) = corr(i) - d.tau0 * z;
    h_eta_terms.row(i) =
        (in.Y(i) - mu0.mu(i)) * (1.0 - z) / ((1.0 - e) * (1.0 - e)) * in.e_eta.row(i);
    h_g0_terms.row(i) = (z - e) / (1.0 - e) * mu0.design.row(i);
  }
  d.H_eta = column_means(h_eta_terms);
  d.H_gamma0 = column_means(h_g0_terms);
  d.H_gamma1.resize(0);

  const Eigen::VectorXd w_eta = solve_information("E_etaeta", in.E_eta, d.H_eta);
  const Eigen::VectorXd w_g0 = solve_information("E_gamma0gamma0", mu0.information, d.H_gamma0);

  d.influence.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.influence(i) = (d.U1(i) - d.U0(i)) - in.score_eta.row(i).dot(w_eta) -
                     mu0.scores.row(i).dot(w_g0);
  }
  Eigen::VectorXd sq = d.influence.array().square();
  d.se = std::sqrt(sum_of(sq)) / (nd * d.theta_hat);
  return d;
}

InfluenceDecomposition sandwich_ato(const SandwichInputs& in, const OutcomeModel& mu0,
                                    const OutcomeModel& mu1) {
  check_inputs(in, mu0);
  check_inputs(in, mu1);
  if (mu0.arm != 0 || mu1.arm != 1) {
    throw EstimationError("sandwich_ato: mu0 must model arm 0 and mu1 arm 1");
  }
  const Eigen::Index n = in.Y.size();
  const auto nd = static_cast<double>(n);

  Eigen::VectorXd t_num(n), c_num(n), tilt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = in.Z(i);
    const double e = in.e(i);
    t_num(i) = (1.0 - e) * (z * in.Y(i) - (z - e) * mu1.mu(i));
    c_num(i) = e * ((1.0 - z) * in.Y(i) + (z - e) * mu0.mu(i));
    tilt(i) = e * (1.0 - e);
  }
  const double tilt_sum = sum_of(tilt);

  InfluenceDecomposition d;
  d.estimand = "ATO";
  d.tau1 = sum_of(t_num) / tilt_sum;
  d.tau0 = sum_of(c_num) / tilt_sum;
  d.theta_hat = tilt_sum / nd;

  d.U1.resize(n);
  d.U0.resize(n);
  Eigen::MatrixXd h_eta_terms(n, in.e_eta.cols());
  Eigen::MatrixXd h_g0_terms(n, mu0.design.cols());
  Eigen::MatrixXd h_g1_terms(n, mu1.design.cols());
  const double tau_diff = d.tau1 - d.tau0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = in.Z(i);
    const double e = in.e(i);
    d.U1(i) = t_num(i) - tilt(i) * d.tau1;
    d.U0(i) = c_num(i) - tilt(i) * d.tau0;
    h_eta_terms.row(i) = -(mu1.mu(i) * (1.0 - 2.0 * e + z) - mu0.mu(i) * (z - 2.0 * e) +
                           (2.0 * e - 1.0) * tau_diff - in.Y(i)) *
                         in.e_eta.row(i);
    h_g0_terms.row(i) = e * (z - e) * mu0.design.row(i);
    h_g1_terms.row(i) = (1.0 - e) * (z - e) * mu1.design.row(i);
  }
  d.H_eta = column_means(h_eta_terms);
  d.H_gamma0 = column_means(h_g0_terms);
  d.H_gamma1 = column_means(h_g1_terms);

  const Eigen::VectorXd w_eta = solve_information("E_etaeta", in.E_eta, d.H_eta);
  const Eigen::VectorXd w_g0 = solve_information("E_gamma0gamma0", mu0.information, d.H_gamma0);
  const Eigen::VectorXd w_g1 = solve_information("E_gamma1gamma1", mu1.information, d.H_gamma1);

  d.influence.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.influence(i) = (d.U1(i) - d.U0(i)) - in.score_eta.row(i).dot(w_eta) -
                     mu1.scores.row(i).dot(w_g1) - mu0.scores.row(i).dot(w_g0);
  }
  Eigen::VectorXd sq = d.influence.array().square();
  d.se = std::sqrt(sum_of(sq)) / (nd * d.theta_hat);
  return d;
}

InfluenceDiagnostics influence_diagnostics(const InfluenceDecomposition& decomp) {
  const auto n = static_cast<std::size_t>(decomp.influence.size());
  std::vector<double> abs_inf(n);
  for (std::size_t i = 0; i < n; ++i) abs_inf[i] = std::fabs(decomp.influence(static_cast<Eigen::Index>(i)));
  InfluenceDiagnostics diag;
  diag.median_abs_influence = quantile_type7(abs_inf, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    if (abs_inf[i] > 5.0 * diag.median_abs_influence) diag.flagged.push_back(i);
  }
  return diag;
}

std::string dump_decomposition(const InfluenceDecomposition& decomp, std::size_t max_units) {
  std::ostringstream out;
  out << "estimand\t" << decomp.estimand << "\n";
  out << "theta_hat\t" << decomp.theta_hat << "\n";
  out << "tau1\t" << decomp.tau1 << "\ttau0\t" << decomp.tau0 << "\n";
  out << "se\t" << decomp.se << "\n";
  auto print_vec = [&](const char* name, const Eigen::VectorXd& v) {
    out << name;
    for (Eigen::Index j = 0; j < v.size(); ++j) out << "\t" << v(j);
    out << "\n";
  };
  print_vec("H_eta", decomp.H_eta);
  print_vec("H_gamma0", decomp.H_gamma0);
  if (decomp.H_gamma1.size() > 0) print_vec("H_gamma1", decomp.H_gamma1);
  const auto k = std::min<std::size_t>(max_units, static_cast<std::size_t>(decomp.influence.size()));
  out << "influence_head";
  for (std::size_t i = 0; i < k; ++i) out << "\t" << decomp.influence(static_cast<Eigen::Index>(i));
  out << "\n";
  return out.str();
}

}  // namespace ordrd
