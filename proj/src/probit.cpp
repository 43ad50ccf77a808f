#include "ordrd/probit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ordrd/errors.hpp"
#include "ordrd/stats.hpp"

namespace ordrd {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kClamp = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_cutoffs(const Eigen::VectorXd& u) {
  for (Eigen::Index j = 1; j < u.size(); ++j) {
    if (!(u(j) > u(j - 1))) throw FitError("cutoffs must be strictly increasing");
  }
  if (u.size() == 0) throw FitError("ordered probit needs at least one cutoff (J >= 2)");
}

// Bound arguments a = u_c - xb, b = u_{c-1} - xb with u_0 = -inf, u_J = +inf.
inline void cell_bounds(const Eigen::VectorXd& u, int c, double xb, double& a, double& b) {
  const Eigen::Index jm1 = u.size();
  a = (c <= jm1) ? u(c - 1) - xb : kInf;
  b = (c >= 2) ? u(c - 2) - xb : -kInf;
}

double loglik_impl(const ProbitParams& params, const Dataset& data, bool throw_on_underflow) {
  check_cutoffs(params.cutoffs);
  if (params.beta.size() != data.p()) throw FitError("beta length does not match covariates");
  const Eigen::Index n = data.n();
  const Eigen::VectorXd xb = data.X * params.beta;
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double a, b;
    cell_bounds(params.cutoffs, data.category[static_cast<std::size_t>(i)], xb(i), a, b);
    const double P = norm_interval_prob(b, a);
    if (P <= kProbFloor) {
      if (throw_on_underflow) {
        throw FitError("cell probability underflow for unit '" +
                       data.ids[static_cast<std::size_t>(i)] + "'");
      }
      terms[static_cast<std::size_t>(i)] = std::log(kProbFloor);
    } else {
      terms[static_cast<std::size_t>(i)] = std::log(P);
    }
  }
  return pairwise_sum(terms);
}

// la = phi(a)/P, lb = phi(b)/P for one observation's cell.
struct CellRatios {
  double a, b, la, lb;
};

CellRatios cell_ratios(const Eigen::VectorXd& u, int c, double xb, const std::string& id) {
  CellRatios r;
  cell_bounds(u, c, xb, r.a, r.b);
  const double P = norm_interval_prob(r.b, r.a);
  if (P <= kProbFloor) throw FitError("cell probability underflow for unit '" + id + "'");
  r.la = std::isfinite(r.a) ? norm_pdf(r.a) / P : 0.0;
  r.lb = std::isfinite(r.b) ? norm_pdf(r.b) / P : 0.0;
  return r;
}

}  // namespace

Eigen::VectorXd ProbitParams::pack() const {
  Eigen::VectorXd eta(dim());
  eta.head(cutoffs.size()) = cutoffs;
  eta.tail(beta.size()) = beta;
  return eta;
}

ProbitParams ProbitParams::unpack(const Eigen::VectorXd& eta, Eigen::Index n_cutoffs) {
  ProbitParams p;
  p.cutoffs = eta.head(n_cutoffs);
  p.beta = eta.tail(eta.size() - n_cutoffs);
  return p;
}

double log_likelihood(const ProbitParams& params, const Dataset& data) {
  return loglik_impl(params, data, true);
}

ScoreResult score(const ProbitParams& params, const Dataset& data) {
  check_cutoffs(params.cutoffs);
  if (params.beta.size() != data.p()) throw FitError("beta length does not match covariates");
  const Eigen::Index n = data.n();
  const Eigen::Index ku = params.cutoffs.size();
  const Eigen::Index dim = ku + params.beta.size();
  const Eigen::VectorXd xb = data.X * params.beta;

  ScoreResult out;
  out.per_obs = Eigen::MatrixXd::Zero(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = data.category[static_cast<std::size_t>(i)];
    const CellRatios r =
        cell_ratios(params.cutoffs, c, xb(i), data.ids[static_cast<std::size_t>(i)]);
    if (c <= ku) out.per_obs(i, c - 1) += r.la;
    if (c >= 2) out.per_obs(i, c - 2) -= r.lb;
    out.per_obs.row(i).tail(params.beta.size()) = -(r.la - r.lb) * data.X.row(i);
  }
  out.total.resize(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    out.total(k) = pairwise_sum(std::span<const double>(out.per_obs.col(k).data(),
                                                        static_cast<std::size_t>(n)));
  }
  return out;
}

Eigen::MatrixXd observed_information(const ProbitParams& params, const Dataset& data) {
  check_cutoffs(params.cutoffs);
  if (params.beta.size() != data.p()) throw FitError("beta length does not match covariates");
  const Eigen::Index n = data.n();
  const Eigen::Index ku = params.cutoffs.size();
  const Eigen::Index p = params.beta.size();
  const Eigen::Index dim = ku + p;
  const Eigen::VectorXd xb = data.X * params.beta;

  // Accumulate the Hessian of the log-likelihood, then negate.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = data.category[static_cast<std::size_t>(i)];
    const CellRatios r =
        cell_ratios(params.cutoffs, c, xb(i), data.ids[static_cast<std::size_t>(i)]);
    // d2l/da2, d2l/db2, d2l/dadb; phi' (x) = -x phi(x) drives the first terms.
    const double laa = (r.la == 0.0) ? 0.0 : -r.a * r.la - r.la * r.la;
    const double lbb = (r.lb == 0.0) ? 0.0 : r.b * r.lb - r.lb * r.lb;
    const double lab = r.la * r.lb;
    const auto x = data.X.row(i);
    if (c <= ku) {
      const Eigen::Index uc = c - 1;
      H(uc, uc) += laa;
      H.row(uc).tail(p) -= (laa + lab) * x;
      H.col(uc).tail(p) -= (laa + lab) * x.transpose();
    }
    if (c >= 2) {
      const Eigen::Index ub = c - 2;
      H(ub, ub) += lbb;
      H.row(ub).tail(p) -= (lbb + lab) * x;
      H.col(ub).tail(p) -= (lbb + lab) * x.transpose();
    }
    if (c <= ku && c >= 2) {
      H(c - 1, c - 2) += lab;
      H(c - 2, c - 1) += lab;
    }
    H.bottomRightCorner(p, p) += (laa + 2.0 * lab + lbb) * (x.transpose() * x);
  }
  Eigen::MatrixXd info = -H;
  // mirror the lower triangle so max|M - M^T| is exactly zero
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) info(j, i) = info(i, j);
  }
  return info;
}

namespace {

// zeta = (u_1, delta_2..delta_{J-1}, beta); u_j = u_1 + sum_{m<=j} exp(delta_m).
Eigen::VectorXd zeta_to_cutoffs(const Eigen::VectorXd& zeta, Eigen::Index ku) {
  Eigen::VectorXd u(ku);
  u(0) = zeta(0);
  for (Eigen::Index j = 1; j < ku; ++j) u(j) = u(j - 1) + std::exp(zeta(j));
  return u;
}

Eigen::VectorXd cutoffs_to_zeta_head(const Eigen::VectorXd& u) {
  Eigen::VectorXd z(u.size());
  z(0) = u(0);
  for (Eigen::Index j = 1; j < u.size(); ++j) z(j) = std::log(u(j) - u(j - 1));
  return z;
}

}  // namespace

FittedProbit fit(const Dataset& data_in, const FitSettings& settings) {
  std::vector<std::size_t> counts(data_in.J(), 0);
  for (int c : data_in.category) counts[static_cast<std::size_t>(c - 1)] += 1;
  Dataset collapsed;
  const Dataset* datap = &data_in;
  if (std::find(counts.begin(), counts.end(), std::size_t{0}) != counts.end()) {
    if (settings.empty_category == FitSettings::EmptyCategory::Error) {
      std::string empties;
      for (std::size_t j = 0; j < counts.size(); ++j) {
        if (counts[j] == 0) empties += (empties.empty() ? "" : ", ") + data_in.scale.labels[j];
      }
      throw FitError("empty category: " + empties);
    }
    collapsed = collapse_empty_categories(data_in);
    datap = &collapsed;
    counts.assign(datap->J(), 0);
    for (int c : datap->category) counts[static_cast<std::size_t>(c - 1)] += 1;
  }
  const Dataset& data = *datap;
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const auto ku = static_cast<Eigen::Index>(data.J()) - 1;
  const Eigen::Index dim = ku + p;
  if (p >= n) throw FitError("more parameters than observations");

  // start at the null-model MLE: cutoffs at quantiles of cumulative
  // frequencies, beta = 0
  Eigen::VectorXd u0(ku);
  double cum = 0.0;
  for (Eigen::Index j = 0; j < ku; ++j) {
    cum += static_cast<double>(counts[static_cast<std::size_t>(j)]) / static_cast<double>(n);
    u0(j) = norm_quantile(cum);
  }
  Eigen::VectorXd zeta(dim);
  zeta.head(ku) = cutoffs_to_zeta_head(u0);
  zeta.tail(p).setZero();

  auto params_at = [&](const Eigen::VectorXd& z) {
    ProbitParams pr;
    pr.cutoffs = zeta_to_cutoffs(z, ku);
    pr.beta = z.tail(p);
    return pr;
  };

  ProbitParams params = params_at(zeta);
  bool converged = false;
  int iterations = 0;

  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    const ScoreResult sc = score(params, data);
    if (sc.total.lpNorm<Eigen::Infinity>() <= settings.grad_tol) {
      converged = true;
      iterations = iter;
      break;
    }
    if (iter == settings.max_iterations) {
      iterations = iter;
      break;
    }
    if (params.beta.lpNorm<Eigen::Infinity>() > 30.0 ||
        params.cutoffs.lpNorm<Eigen::Infinity>() > 30.0) {
      throw FitError("possible perfect separation: parameters diverging (|param| > 30)");
    }

    // chain rule into zeta coordinates
    Eigen::MatrixXd Ju = Eigen::MatrixXd::Zero(ku, ku);
    for (Eigen::Index j = 0; j < ku; ++j) {
      Ju(j, 0) = 1.0;
      for (Eigen::Index m = 1; m <= j; ++m) Ju(j, m) = std::exp(zeta(m));
    }
    Eigen::VectorXd grad_zeta(dim);
    grad_zeta.head(ku) = Ju.transpose() * sc.total.head(ku);
    grad_zeta.tail(p) = sc.total.tail(p);

    const Eigen::MatrixXd H_eta = -observed_information(params, data);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
    J.topLeftCorner(ku, ku) = Ju;
    J.bottomRightCorner(p, p).setIdentity();
    Eigen::MatrixXd H_zeta = J.transpose() * H_eta * J;
    for (Eigen::Index m = 1; m < ku; ++m) {
      double tail_grad = 0.0;
      for (Eigen::Index j = m; j < ku; ++j) tail_grad += sc.total(j);
      H_zeta(m, m) += tail_grad * std::exp(zeta(m));
    }

    Eigen::VectorXd direction;
    Eigen::LLT<Eigen::MatrixXd> llt(-H_zeta);
    const bool newton_step = llt.info() == Eigen::Success;
    if (newton_step) {
      direction = llt.solve(grad_zeta);
    } else {
      direction = grad_zeta;
      const double norm = direction.lpNorm<Eigen::Infinity>();
      if (norm > 1.0) direction /= norm;
    }

    const double f0 = loglik_impl(params, data, false);
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= settings.max_halvings; ++h) {
      const Eigen::VectorXd trial = zeta + step * direction;
      const ProbitParams trial_params = params_at(trial);
      const double f = loglik_impl(trial_params, data, false);
      if (f > f0) {
        zeta = trial;
        params = trial_params;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted && newton_step) {
      // near the optimum the objective gain sinks below double resolution;
      // take the full Newton step anyway when it halves the score norm
      const Eigen::VectorXd trial = zeta + direction;
      const ProbitParams trial_params = params_at(trial);
      const double f = loglik_impl(trial_params, data, false);
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f0));
      if (std::isfinite(f) && f >= f0 - slack &&
          score(trial_params, data).total.lpNorm<Eigen::Infinity>() <
              0.5 * sc.total.lpNorm<Eigen::Infinity>()) {
        zeta = trial;
        params = trial_params;
        accepted = true;
      }
    }
    if (!accepted) {
      if (params.beta.lpNorm<Eigen::Infinity>() > 10.0) {
        throw FitError("possible perfect separation: step-halving exhausted with large coefficients");
      }
      iterations = iter;
      break;
    }
  }

  FittedProbit out;
  out.params = params;
  out.scale = data.scale;
  out.loglik = log_likelihood(params, data);
  const ScoreResult final_score = score(params, data);
  out.per_obs_scores = final_score.per_obs;
  out.information = observed_information(params, data) / static_cast<double>(n);
  out.converged = converged;
  out.iterations = iterations;
  return out;
}

Eigen::VectorXd category_probabilities(const FittedProbit& fit, const Eigen::RowVectorXd& x) {
  if (x.size() != fit.params.beta.size()) throw FitError("covariate length mismatch");
  const double xb = x * fit.params.beta;
  const auto J = static_cast<Eigen::Index>(fit.scale.J());
  Eigen::VectorXd probs(J);
  for (Eigen::Index c = 1; c <= J; ++c) {
    double a, b;
    cell_bounds(fit.params.cutoffs, static_cast<int>(c), xb, a, b);
    probs(c - 1) = std::max(0.0, norm_interval_prob(b, a));
  }
  return probs;
}

PropensityVector propensity(const FittedProbit& fit, const Dataset& data) {
  if (data.p() != fit.params.beta.size()) throw FitError("covariate length mismatch");
  const Eigen::Index n = data.n();
  const Eigen::Index ku = fit.params.cutoffs.size();
  const Eigen::Index dim = ku + fit.params.beta.size();
  const int t = fit.scale.threshold_index;
  const double u_thr = fit.params.cutoffs(t - 2);
  const Eigen::VectorXd xb = data.X * fit.params.beta;

  PropensityVector out;
  out.e_hat.resize(n);
  out.e_eta = Eigen::MatrixXd::Zero(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = u_thr - xb(i);
    out.e_hat(i) = std::clamp(norm_cdf_upper(m), kClamp, 1.0 - kClamp);
    const double dens = norm_pdf(m);
    out.e_eta(i, t - 2) = -dens;
    out.e_eta.row(i).tail(fit.params.beta.size()) = dens * data.X.row(i);
  }
  return out;
}

PropensityByCategory propensity_by_category(const FittedProbit& fit, const Dataset& data) {
  const PropensityVector pv = propensity(fit, data);
  const auto J = static_cast<int>(data.J());
  const int t = data.scale.threshold_index;
  PropensityByCategory out;
  out.rows.reserve(static_cast<std::size_t>(J));
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int c = 1; c <= J; ++c) {
    std::vector<double> es;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.category[static_cast<std::size_t>(i)] == c) es.push_back(pv.e_hat(i));
    }
    PropensityByCategory::Row row;
    row.label = data.scale.labels[static_cast<std::size_t>(c - 1)];
    row.n = es.size();
    if (es.empty()) {
      row.min = row.q1 = row.q2 = row.q3 = row.max = row.share_ge_half = nan;
    } else {
      row.min = *std::min_element(es.begin(), es.end());
      row.max = *std::max_element(es.begin(), es.end());
      row.q1 = quantile_type7(es, 0.25);
      row.q2 = quantile_type7(es, 0.50);
      row.q3 = quantile_type7(es, 0.75);
      std::size_t ge = 0;
      for (double e : es) ge += e >= 0.5 ? 1 : 0;
      row.share_ge_half = static_cast<double>(ge) / static_cast<double>(es.size());
    }
    out.rows.push_back(std::move(row));
  }

  auto share_in = [&](int lo, int hi, bool above) {
    std::size_t total = 0, hits = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const int c = data.category[static_cast<std::size_t>(i)];
      if (c >= lo && c <= hi) {
        ++total;
        const double e = pv.e_hat(i);
        if ((above && e > 0.5) || (!above && e < 0.5)) ++hits;
      }
    }
    return total == 0 ? nan : static_cast<double>(hits) / static_cast<double>(total);
  };
  out.share_above_half_treated_side = share_in(t, std::min(J, t + 1), true);
  out.share_below_half_control_side = share_in(std::max(1, t - 2), t - 1, false);
  return out;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string serialize_probit(const FittedProbit& fit) {
  std::ostringstream out;
  out << "ordered_probit\n";
  out << "labels";
  for (const auto& l : fit.scale.labels) out << "\t" << l;
  out << "\n";
  out << "threshold_index\t" << fit.scale.threshold_index << "\n";
  out << "converged\t" << (fit.converged ? 1 : 0) << "\n";
  out << "iterations\t" << fit.iterations << "\n";
  out << "loglik\t" << fmt17(fit.loglik) << "\n";
  out << "cutoffs";
  for (Eigen::Index j = 0; j < fit.params.cutoffs.size(); ++j) {
    out << "\t" << fmt17(fit.params.cutoffs(j));
  }
  out << "\n";
  out << "beta";
  for (Eigen::Index j = 0; j < fit.params.beta.size(); ++j) {
    out << "\t" << fmt17(fit.params.beta(j));
  }
  out << "\n";
  out << "information\t" << fit.information.rows() << "\n";
  for (Eigen::Index i = 0; i < fit.information.rows(); ++i) {
    for (Eigen::Index j = 0; j < fit.information.cols(); ++j) {
      out << (j ? "\t" : "") << fmt17(fit.information(i, j));
    }
    out << "\n";
  }
  return out.str();
}

FittedProbit parse_probit(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next_line = [&](const std::string& what) {
    if (!std::getline(in, line)) throw DataError("probit file truncated at " + what);
    return line;
  };
  auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::string piece;
    std::istringstream row(l);
    while (std::getline(row, piece, '\t')) out.push_back(piece);
    return out;
  };
  if (next_line("header") != "ordered_probit") throw DataError("not an ordered_probit file");

  FittedProbit fit;
  auto lab = fields(next_line("labels"));
  if (lab.empty() || lab[0] != "labels" || lab.size() < 3) throw DataError("bad labels line");
  fit.scale.labels.assign(lab.begin() + 1, lab.end());
  auto thr = fields(next_line("threshold_index"));
  if (thr.size() != 2 || thr[0] != "threshold_index") throw DataError("bad threshold line");
  fit.scale.threshold_index = std::stoi(thr[1]);
  auto conv = fields(next_line("converged"));
  if (conv.size() != 2 || conv[0] != "converged") throw DataError("bad converged line");
  fit.converged = conv[1] == "1";
  auto iters = fields(next_line("iterations"));
  if (iters.size() != 2 || iters[0] != "iterations") throw DataError("bad iterations line");
  fit.iterations = std::stoi(iters[1]);
  auto ll = fields(next_line("loglik"));
  if (ll.size() != 2 || ll[0] != "loglik") throw DataError("bad loglik line");
  fit.loglik = std::stod(ll[1]);
  auto cut = fields(next_line("cutoffs"));
  if (cut.empty() || cut[0] != "cutoffs") throw DataError("bad cutoffs line");
  fit.params.cutoffs.resize(static_cast<Eigen::Index>(cut.size()) - 1);
  for (std::size_t j = 1; j < cut.size(); ++j) {
    fit.params.cutoffs(static_cast<Eigen::Index>(j - 1)) = std::stod(cut[j]);
  }
  auto bet = fields(next_line("beta"));
  if (bet.empty() || bet[0] != "beta") throw DataError("bad beta line");
  fit.params.beta.resize(static_cast<Eigen::Index>(bet.size()) - 1);
  for (std::size_t j = 1; j < bet.size(); ++j) {
    fit.params.beta(static_cast<Eigen::Index>(j - 1)) = std::stod(bet[j]);
  }
  auto infodim = fields(next_line("information"));
  if (infodim.size() != 2 || infodim[0] != "information") throw DataError("bad information line");
  const auto dim = static_cast<Eigen::Index>(std::stoi(infodim[1]));
  fit.information.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    auto row = fields(next_line("information row"));
    if (static_cast<Eigen::Index>(row.size()) != dim) throw DataError("bad information row");
    for (Eigen::Index j = 0; j < dim; ++j) {
      fit.information(i, j) = std::stod(row[static_cast<std::size_t>(j)]);
    }
  }
  return fit;
}

}  // namespace ordrd
