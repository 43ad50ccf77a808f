#include "ordrd/balance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ordrd/errors.hpp"
#include "ordrd/stats.hpp"

namespace ordrd {

std::string scheme_name(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::ATO: return "ATO";
    case WeightScheme::ATT: return "ATT";
    case WeightScheme::NONE: return "NONE";
  }
  return "?";
}

WeightScheme scheme_from_name(const std::string& name) {
  if (name == "ATO" || name == "ato") return WeightScheme::ATO;
  if (name == "ATT" || name == "att") return WeightScheme::ATT;
  if (name == "NONE" || name == "none") return WeightScheme::NONE;
  throw ManifestError("weight scheme '" + name + "' not one of ATO/ATT/NONE");
}

WeightResult compute_weights(const Eigen::VectorXd& e_hat, const Eigen::VectorXi& Z,
                             WeightScheme scheme, const std::vector<std::string>& ids) {
  if (e_hat.size() != Z.size()) throw BalanceError("propensity/treatment length mismatch");
  const Eigen::Index n = e_hat.size();
  WeightResult out;
  out.w.resize(n);
  constexpr double kBoundary = 1e-10;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = e_hat(i);
    if (!(e > 0.0 && e < 1.0)) throw BalanceError("propensity outside (0,1)");
    switch (scheme) {
      case WeightScheme::ATO:
        out.w(i) = Z(i) == 1 ? 1.0 - e : e;
        break;
      case WeightScheme::ATT:
        out.w(i) = Z(i) == 1 ? 1.0 : e / (1.0 - e);
        if (e <= kBoundary || e >= 1.0 - kBoundary) {
          const std::string id = static_cast<std::size_t>(i) < ids.size()
                                     ? ids[static_cast<std::size_t>(i)]
                                     : "unit " + std::to_string(i);
          out.warnings.push_back("extreme ATT weight: propensity at clamp boundary for '" + id +
                                 "'");
        }
        break;
      case WeightScheme::NONE:
        out.w(i) = 1.0;
        break;
    }
  }
  return out;
}

double standardized_bias(const Eigen::VectorXd& x, const Eigen::VectorXi& Z,
                         const Eigen::VectorXd& w) {
  if (x.size() != Z.size() || x.size() != w.size()) {
    throw BalanceError("standardized_bias: input length mismatch");
  }
  std::vector<double> x1, x0, wx1, wx0, w1, w0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (Z(i) == 1) {
      x1.push_back(x(i));
      wx1.push_back(w(i) * x(i));
      w1.push_back(w(i));
    } else {
      x0.push_back(x(i));
      wx0.push_back(w(i) * x(i));
      w0.push_back(w(i));
    }
  }
  if (x1.size() < 2 || x0.size() < 2) {
    throw BalanceError("standardized_bias needs >= 2 units in each arm");
  }
  const double sw1 = pairwise_sum(w1);
  const double sw0 = pairwise_sum(w0);
  if (!(sw1 > 0.0) || !(sw0 > 0.0)) throw BalanceError("zero total weight in an arm");
  const double m1 = pairwise_sum(wx1) / sw1;
  const double m0 = pairwise_sum(wx0) / sw0;
  const double v1 = sample_variance(x1);
  const double v0 = sample_variance(x0);
  const double denom2 =
      v0 / static_cast<double>(x0.size()) + v1 / static_cast<double>(x1.size());
  if (!(denom2 > 0.0)) throw BalanceError("degenerate covariate: constant in both arms");
  return (m1 - m0) / std::sqrt(denom2);
}

std::vector<Eigen::Index> subsample_indices(const Eigen::VectorXd& e_hat,
                                            const Interval& interval) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < e_hat.size(); ++i) {
    if (e_hat(i) > interval.e_min && e_hat(i) < interval.e_max) idx.push_back(i);
  }
  return idx;
}

BalanceReport balance_table(const Dataset& data, const Eigen::VectorXd& e_hat,
                            const Interval& interval, WeightScheme scheme, double critical) {
  if (!(interval.e_min > 0.0 && interval.e_min < interval.e_max && interval.e_max < 1.0)) {
    throw BalanceError("interval must satisfy 0 < e_min < e_max < 1");
  }
  if (e_hat.size() != data.n()) throw BalanceError("propensity length mismatch");
  const std::vector<Eigen::Index> idx = subsample_indices(e_hat, interval);

  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd e_sub(m);
  Eigen::VectorXi z_sub(m);
  std::vector<std::string> ids_sub(idx.size());
  for (Eigen::Index k = 0; k < m; ++k) {
    e_sub(k) = e_hat(idx[static_cast<std::size_t>(k)]);
    z_sub(k) = data.Z(idx[static_cast<std::size_t>(k)]);
    ids_sub[static_cast<std::size_t>(k)] = data.ids[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
  }
  BalanceReport report;
  report.interval = interval;
  report.scheme = scheme;
  report.n1 = static_cast<std::size_t>((z_sub.array() == 1).count());
  report.n0 = idx.size() - report.n1;
  if (report.n0 < 2 || report.n1 < 2) {
    throw BalanceError("interval subsample has an arm with < 2 units");
  }
  const WeightResult wr = compute_weights(e_sub, z_sub, scheme, ids_sub);

  report.max_abs_sb = 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    Eigen::VectorXd xj(m);
    for (Eigen::Index k = 0; k < m; ++k) xj(k) = data.X(idx[static_cast<std::size_t>(k)], j);
    try {
      const double sb = standardized_bias(xj, z_sub, wr.w);
      report.sb.push_back(sb);
      report.max_abs_sb = std::max(report.max_abs_sb, std::fabs(sb));
    } catch (const BalanceError&) {
      report.sb.push_back(nan);
      report.excluded_covariates.push_back(data.covariate_names[static_cast<std::size_t>(j)]);
    }
  }
  report.balanced = report.max_abs_sb < critical;
  return report;
}

namespace {

std::pair<std::size_t, std::size_t> arm_counts(const Dataset& data, const Eigen::VectorXd& e_hat,
                                               const Interval& interval) {
  std::size_t n0 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (e_hat(i) > interval.e_min && e_hat(i) < interval.e_max) {
      (data.Z(i) == 1 ? n1 : n0) += 1;
    }
  }
  return {n0, n1};
}

}  // namespace

SymmetricSearchResult search_symmetric(const Dataset& data, const Eigen::VectorXd& e_hat,
                                       WeightScheme scheme, const SearchGrid& grid,
                                       double critical, std::size_t min_arm) {
  if (!(grid.d_min > 0.0 && grid.d_min < grid.d_max && grid.d_max < 0.5 && grid.step > 0.0)) {
    throw BalanceError("symmetric grid must satisfy 0 < d_min < d_max < 0.5, step > 0");
  }
  const std::size_t need = std::max<std::size_t>(min_arm, 2);
  SymmetricSearchResult out;
  const auto steps =
      static_cast<std::size_t>(std::floor((grid.d_max - grid.d_min) / grid.step + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double d = grid.d_min + static_cast<double>(k) * grid.step;
    const Interval interval{0.5 - d, 0.5 + d};
    SymmetricStep entry;
    entry.d = d;
    const auto [n0, n1] = arm_counts(data, e_hat, interval);
    entry.feasible = n0 >= need && n1 >= need;
    if (!entry.feasible) {
      out.trace.push_back(std::move(entry));
      continue;
    }
    entry.report = balance_table(data, e_hat, interval, scheme, critical);
    const bool balanced = entry.report->balanced;
    out.trace.push_back(std::move(entry));
    if (balanced) {
      out.d_star = d;
      out.interval = interval;
    } else {
      break;  // first imbalance stops the ascent
    }
  }
  return out;
}

AsymmetricSearchResult search_asymmetric(const Dataset& data, const Eigen::VectorXd& e_hat,
                                         WeightScheme scheme, const Interval& start, double step,
                                         double critical, std::size_t min_arm, double e_floor,
                                         double e_ceiling) {
  if (!(step > 0.0)) throw BalanceError("asymmetric step must be positive");
  const BalanceReport start_report = balance_table(data, e_hat, start, scheme, critical);
  if (!start_report.balanced) {
    throw BalanceError("asymmetric search requires a balanced starting interval");
  }
  const std::size_t need = std::max<std::size_t>(min_arm, 2);

  AsymmetricSearchResult out;
  out.interval = start;
  while (true) {
    std::optional<BalanceReport> left, right;
    const Interval left_iv{out.interval.e_min - step, out.interval.e_max};
    const Interval right_iv{out.interval.e_min, out.interval.e_max + step};
    if (left_iv.e_min >= e_floor) {
      const auto [n0, n1] = arm_counts(data, e_hat, left_iv);
      if (n0 >= need && n1 >= need) {
        const BalanceReport r = balance_table(data, e_hat, left_iv, scheme, critical);
        if (r.balanced) left = r;
      }
    }
    if (right_iv.e_max <= e_ceiling) {
      const auto [n0, n1] = arm_counts(data, e_hat, right_iv);
      if (n0 >= need && n1 >= need) {
        const BalanceReport r = balance_table(data, e_hat, right_iv, scheme, critical);
        if (r.balanced) right = r;
      }
    }
    if (!left && !right) break;
    bool go_left;
    if (left && right) {
      go_left = left->max_abs_sb <= right->max_abs_sb;  // tie extends the control side
    } else {
      go_left = left.has_value();
    }
    if (go_left) {
      out.interval = left_iv;
      out.trace.push_back({"left", left_iv, *left});
    } else {
      out.interval = right_iv;
      out.trace.push_back({"right", right_iv, *right});
    }
  }
  return out;
}

}  // namespace ordrd
