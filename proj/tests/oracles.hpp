#pragma once

// Independent oracle implementations the tests compare the library against:
// central finite differences, naive loop transcriptions of the estimators,
// Simpson quadrature for normal expectations, a textbook normal-equations
// solver, and small dataset builders. Deliberately simple code, no reuse of
// the library's numerics beyond the Dataset container.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ordrd/dataset.hpp"

namespace oracles {

using VecFn = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd fd_gradient(const VecFn& f, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd hi = x, lo = x;
    hi(k) += h;
    lo(k) -= h;
    g(k) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Central-difference Jacobian of a vector-valued function (used to check
// analytic Hessians via the score).
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd hi = x, lo = x;
    hi(k) += h;
    lo(k) -= h;
    J.col(k) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

// Classical two-sample t statistic, treated minus control, with the
// s0^2/n0 + s1^2/n1 denominator.
inline double two_sample_t(const Eigen::VectorXd& x, const Eigen::VectorXi& Z) {
  double s1 = 0, s0 = 0;
  int n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (Z(i) == 1) {
      s1 += x(i);
      ++n1;
    } else {
      s0 += x(i);
      ++n0;
    }
  }
  const double m1 = s1 / n1, m0 = s0 / n0;
  double v1 = 0, v0 = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (Z(i) == 1) {
      v1 += (x(i) - m1) * (x(i) - m1);
    } else {
      v0 += (x(i) - m0) * (x(i) - m0);
    }
  }
  v1 /= n1 - 1;
  v0 /= n0 - 1;
  return (m1 - m0) / std::sqrt(v0 / n0 + v1 / n1);
}

inline double hajek_direct(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                           const Eigen::VectorXd& w) {
  double wy1 = 0, w1 = 0, wy0 = 0, w0 = 0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    if (Z(i) == 1) {
      wy1 += w(i) * Y(i);
      w1 += w(i);
    } else {
      wy0 += w(i) * Y(i);
      w0 += w(i);
    }
  }
  return wy1 / w1 - wy0 / w0;
}

inline double att_direct(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                         const Eigen::VectorXd& e, const Eigen::VectorXd& mu0) {
  double zy = 0, corr = 0, nz = 0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    const double z = Z(i);
    nz += z;
    zy += z * Y(i);
    corr += (Y(i) * (1 - z) * e(i) + mu0(i) * (z - e(i))) / (1 - e(i));
  }
  return zy / nz - corr / nz;
}

inline double ipw_att_direct(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                             const Eigen::VectorXd& e) {
  double zy = 0, corr = 0, nz = 0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    const double z = Z(i);
    nz += z;
    zy += z * Y(i);
    corr += Y(i) * (1 - z) * e(i) / (1 - e(i));
  }
  return zy / nz - corr / nz;
}

inline double ato_direct(const Eigen::VectorXd& Y, const Eigen::VectorXi& Z,
                         const Eigen::VectorXd& e, const Eigen::VectorXd& mu0,
                         const Eigen::VectorXd& mu1) {
  double treated = 0, control = 0, tilt = 0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    const double z = Z(i);
    treated += (1 - e(i)) * (z * Y(i) - (z - e(i)) * mu1(i));
    control += e(i) * ((1 - z) * Y(i) + (z - e(i)) * mu0(i));
    tilt += e(i) * (1 - e(i));
  }
  return (treated - control) / tilt;
}

// E[f(X)] for X standard normal: composite Simpson over [-10, 10].
inline double normal_expect(const std::function<double(double)>& f) {
  const int n = 20000;  // even
  const double a = -10.0, b = 10.0, h = (b - a) / n;
  auto g = [&](double x) {
    return f(x) * 0.3989422804014327 * std::exp(-0.5 * x * x);
  };
  double sum = g(a) + g(b);
  for (int k = 1; k < n; ++k) sum += g(a + k * h) * (k % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

inline Eigen::VectorXd ols_normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return (X.transpose() * X).fullPivLu().solve(X.transpose() * y);
}

// 0.99 quantiles of chi-squared, dof 1..6 (for goodness-of-fit gates).
inline double chi2_99(int dof) {
  static const double q[] = {6.6348966010212145, 9.21034037197618,  11.344866730144373,
                             13.276704135987622, 15.08627246938899, 16.811893829770927};
  return q[dof - 1];
}

inline ordrd::Dataset make_data(std::vector<std::string> labels, const std::string& threshold,
                                std::vector<int> category, std::vector<double> outcome,
                                const std::vector<std::vector<double>>& xrows,
                                std::vector<std::string> names) {
  const auto n = static_cast<Eigen::Index>(category.size());
  const auto p = static_cast<Eigen::Index>(names.size());
  Eigen::VectorXd Y(n);
  Eigen::MatrixXd X(n, p);
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < n; ++i) {
    Y(i) = outcome[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) {
      X(i, j) = xrows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    ids.push_back("u" + std::to_string(i + 1));
  }
  return ordrd::make_dataset(ordrd::CategoryScale::make(std::move(labels), threshold),
                             std::move(ids), std::move(category), std::move(Y), std::move(X),
                             std::move(names));
}

// Ordered-probit draw via the standard library RNG (independent of the
// library's generator). First J units get one category each so every
// category is occupied and both arms are present.
inline ordrd::Dataset latent_instance(std::uint64_t seed, int N, const Eigen::VectorXd& beta,
                                      const Eigen::VectorXd& cutoffs, int threshold_index) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto J = static_cast<int>(cutoffs.size()) + 1;
  const auto p = beta.size();
  std::vector<std::string> labels, names;
  for (int c = 1; c <= J; ++c) labels.push_back("c" + std::to_string(c));
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));

  Eigen::MatrixXd X(N, p);
  Eigen::VectorXd Y(N);
  std::vector<int> category(static_cast<std::size_t>(N));
  std::vector<std::string> ids;
  for (int i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = normal(gen);
    const double latent = X.row(i).dot(beta) + normal(gen);
    int c = 1;
    while (c <= cutoffs.size() && latent > cutoffs(c - 1)) ++c;
    if (i < J) c = i + 1;
    category[static_cast<std::size_t>(i)] = c;
    Y(i) = normal(gen);
    ids.push_back("u" + std::to_string(i + 1));
  }
  return ordrd::make_dataset(ordrd::CategoryScale::make(labels, labels[static_cast<std::size_t>(
                                                            threshold_index - 1)]),
                             std::move(ids), std::move(category), std::move(Y), std::move(X),
                             names);
}

// Runs fn, returns the message of the expected exception type ("" when
// nothing was thrown) so tests can assert on message substrings.
template <typename E, typename F>
std::string error_message(F&& fn) {
  try {
    fn();
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

inline bool contains(const std::string& text, const std::string& piece) {
  return text.find(piece) != std::string::npos;
}

}  // namespace oracles
