#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ordrd/dataset.hpp"

namespace ordrd {

// ATO: w1 = 1-e, w0 = e (tilting e(1-e)); ATT: w1 = 1, w0 = e/(1-e)
// (tilting e); NONE: all 1.
enum class WeightScheme { ATO, ATT, NONE };

std::string scheme_name(WeightScheme scheme);
WeightScheme scheme_from_name(const std::string& name);

struct WeightResult {
  Eigen::VectorXd w;
  std::vector<std::string> warnings;  // extreme-weight units under ATT
};

WeightResult compute_weights(const Eigen::VectorXd& e_hat, const Eigen::VectorXi& Z,
                             WeightScheme scheme, const std::vector<std::string>& ids = {});

// (weighted treated mean - weighted control mean) / sqrt(s0^2/n0 + s1^2/n1)
// with UNWEIGHTED arm variances; unit weights reduce this to the two-sample
// t-statistic. Arm with < 2 units or both arms constant → BalanceError.
double standardized_bias(const Eigen::VectorXd& x, const Eigen::VectorXi& Z,
                         const Eigen::VectorXd& w);

// Propensity window; subsample membership is strict: e_min < e < e_max.
struct Interval {
  double e_min;
  double e_max;
};

std::vector<Eigen::Index> subsample_indices(const Eigen::VectorXd& e_hat,
                                            const Interval& interval);

struct BalanceReport {
  Interval interval;
  WeightScheme scheme;
  std::size_t n0, n1;
  std::vector<double> sb;  // per covariate, NaN for excluded degenerate ones
  std::vector<std::string> excluded_covariates;
  double max_abs_sb;
  bool balanced;  // every included |sb| < critical
};

// SB of every covariate over the interval's subsample. A covariate constant
// in both arms is excluded from the balance criterion with a warning entry.
BalanceReport balance_table(const Dataset& data, const Eigen::VectorXd& e_hat,
                            const Interval& interval, WeightScheme scheme,
                            double critical = 1.96);

struct SearchGrid {
  double d_min = 0.05;
  double d_max = 0.49;
  double step = 0.01;
};

struct SymmetricStep {
  double d;
  bool feasible;  // both arms have >= min_arm units
  std::optional<BalanceReport> report;
};

struct SymmetricSearchResult {
  std::vector<SymmetricStep> trace;
  // largest d whose report is balanced with every smaller feasible d
  // balanced too (ascent stops at the first imbalance); empty when no
  // feasible d is balanced
  std::optional<double> d_star;
  std::optional<Interval> interval;
};

SymmetricSearchResult search_symmetric(const Dataset& data, const Eigen::VectorXd& e_hat,
                                       WeightScheme scheme, const SearchGrid& grid,
                                       double critical = 1.96, std::size_t min_arm = 5);

struct AsymmetricStep {
  std::string side;  // "left" or "right"
  Interval interval;
  BalanceReport report;
};

struct AsymmetricSearchResult {
  Interval interval;
  std::vector<AsymmetricStep> trace;
};

// Greedy one-side-per-step expansion from a balanced start: try e_min-step
// and e_max+step, keep the balanced extension with the smaller max|SB|
// (tie → left, growing the control side); stop when neither stays balanced
// or the floor/ceiling bounds are reached.
AsymmetricSearchResult search_asymmetric(const Dataset& data, const Eigen::VectorXd& e_hat,
                                         WeightScheme scheme, const Interval& start,
                                         double step, double critical = 1.96,
                                         std::size_t min_arm = 5, double e_floor = 0.01,
                                         double e_ceiling = 0.99);

}  // namespace ordrd
