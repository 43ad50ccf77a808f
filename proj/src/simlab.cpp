#include "ordrd/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

#include "ordrd/errors.hpp"
#include "ordrd/estimate.hpp"
#include "ordrd/probit.hpp"
#include "ordrd/stats.hpp"
#include "ordrd/terms.hpp"
#include "ordrd/variance.hpp"

namespace ordrd {

namespace {

// sub-seed stream reserved for the estimand's brute-force draw
constexpr std::uint64_t kTruthStream = 0x74727574680000ULL;

void validate_config(const DgpConfig& config) {
  if (config.N < 2) throw ManifestError("dgp: N must be >= 2");
  if (config.p() < 1) throw ManifestError("dgp: beta must have at least one covariate");
  if (config.cutoffs.size() < 1) throw ManifestError("dgp: at least one cutoff required");
  for (Eigen::Index j = 1; j < config.cutoffs.size(); ++j) {
    if (!(config.cutoffs(j) > config.cutoffs(j - 1))) {
      throw ManifestError("dgp: cutoffs must be strictly increasing");
    }
  }
  const int J = static_cast<int>(config.J());
  if (config.threshold_index < 2 || config.threshold_index > J) {
    throw ManifestError("dgp: threshold index must lie in 2..J");
  }
  if (config.gamma0.size() != static_cast<Eigen::Index>(config.mu0_terms.size()) + 1) {
    throw ManifestError("dgp: gamma0 must have one intercept plus one coefficient per mu0 term");
  }
  if (config.gamma1.size() != static_cast<Eigen::Index>(config.mu1_terms.size()) + 1) {
    throw ManifestError("dgp: gamma1 must have one intercept plus one coefficient per mu1 term");
  }
  if (!(config.noise_sd >= 0.0)) throw ManifestError("dgp: noise sd must be >= 0");
  if (config.covariate_corr.size() != 0 &&
      (config.covariate_corr.rows() != config.p() || config.covariate_corr.cols() != config.p())) {
    throw ManifestError("dgp: covariate correlation must be p x p");
  }
  const auto names = dgp_covariate_names(config.p());
  parse_terms(config.mu0_terms, names);
  parse_terms(config.mu1_terms, names);
  parse_terms(config.fit_outcome_terms, names);
  for (const auto& omitted : config.omit_from_ps) {
    if (std::find(names.begin(), names.end(), omitted) == names.end()) {
      throw ManifestError("dgp: omit_from_ps names unknown covariate '" + omitted + "'");
    }
  }
}

double eval_mu(const std::vector<Term>& terms, const Eigen::VectorXd& gamma,
               const Eigen::RowVectorXd& x) {
  double v = gamma(0);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    v += gamma(static_cast<Eigen::Index>(k) + 1) * terms[k].eval(x);
  }
  return v;
}

Eigen::MatrixXd correlation_factor(const DgpConfig& config) {
  if (config.covariate_corr.size() == 0) return {};
  Eigen::LLT<Eigen::MatrixXd> llt(config.covariate_corr);
  if (llt.info() != Eigen::Success) {
    throw ManifestError("dgp: covariate correlation must be positive definite");
  }
  return llt.matrixL();
}

void draw_covariates(Rng& rng, const Eigen::MatrixXd& L, Eigen::RowVectorXd& x) {
  for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.normal();
  if (L.size() != 0) x = (L * x.transpose()).transpose();
}

int bin_category(double rstar, const Eigen::VectorXd& cutoffs) {
  int c = 1;
  while (c <= cutoffs.size() && rstar > cutoffs(c - 1)) ++c;
  return c;
}

}  // namespace

std::vector<std::string> dgp_covariate_names(Eigen::Index p) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

std::vector<std::string> dgp_category_labels(std::size_t J) {
  std::vector<std::string> labels;
  labels.reserve(J);
  for (std::size_t c = 1; c <= J; ++c) labels.push_back("c" + std::to_string(c));
  return labels;
}

std::vector<std::string> dgp_ps_terms(const DgpConfig& config) {
  std::vector<std::string> out;
  for (const auto& name : dgp_covariate_names(config.p())) {
    if (std::find(config.omit_from_ps.begin(), config.omit_from_ps.end(), name) ==
        config.omit_from_ps.end()) {
      out.push_back(name);
    }
  }
  return out;
}

std::vector<std::string> dgp_outcome_terms(const DgpConfig& config) {
  if (!config.fit_outcome_terms.empty()) return config.fit_outcome_terms;
  std::vector<std::string> out = config.mu0_terms;
  for (const auto& t : config.mu1_terms) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

Generated generate(const DgpConfig& config) {
  validate_config(config);
  const Eigen::Index N = config.N;
  const Eigen::Index p = config.p();
  const auto names = dgp_covariate_names(p);
  const auto labels = dgp_category_labels(config.J());
  const auto terms0 = parse_terms(config.mu0_terms, names);
  const auto terms1 = parse_terms(config.mu1_terms, names);
  const Eigen::MatrixXd L = correlation_factor(config);
  const double u_t = config.cutoffs(config.threshold_index - 2);

  Rng rng(config.seed);
  Eigen::MatrixXd X(N, p);
  Eigen::VectorXd outcome(N), y0(N), y1(N), e_true(N);
  std::vector<int> category(static_cast<std::size_t>(N));
  std::vector<std::string> ids(static_cast<std::size_t>(N));
  std::vector<std::size_t> counts(config.J(), 0);

  Eigen::RowVectorXd x(p);
  for (Eigen::Index i = 0; i < N; ++i) {
    draw_covariates(rng, L, x);
    const double eps = rng.normal();
    const double d0 = rng.normal();
    const double d1 = rng.normal();
    const double index = x.dot(config.beta);
    const int c = bin_category(index + eps, config.cutoffs);
    X.row(i) = x;
    category[static_cast<std::size_t>(i)] = c;
    counts[static_cast<std::size_t>(c - 1)] += 1;
    y0(i) = eval_mu(terms0, config.gamma0, x) + config.noise_sd * d0;
    y1(i) = eval_mu(terms1, config.gamma1, x) + config.noise_sd * d1;
    e_true(i) = norm_cdf_upper(u_t - index);
    outcome(i) = c >= config.threshold_index ? y1(i) : y0(i);
    ids[static_cast<std::size_t>(i)] = "u" + std::to_string(i + 1);
  }

  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] != 0) continue;
    std::string freq;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k) freq += ", ";
      freq += labels[k] + "=" + std::to_string(counts[k]);
    }
    throw DataError("generated draw left category " + labels[c] + " empty (counts: " + freq + ")");
  }

  auto scale = CategoryScale::make(labels, labels[static_cast<std::size_t>(config.threshold_index - 1)]);
  Dataset data = make_dataset(std::move(scale), std::move(ids), std::move(category),
                              std::move(outcome), std::move(X), names);
  return {std::move(data), SimTruth{std::move(y0), std::move(y1), std::move(e_true)}};
}

double true_estimand(const DgpConfig& config, WeightScheme estimand,
                     const std::optional<Interval>& subpopulation, Eigen::Index draws) {
  validate_config(config);
  if (estimand == WeightScheme::NONE) {
    throw EstimationError("true_estimand: estimand must be ATO or ATT");
  }
  if (draws < 1) throw ManifestError("true_estimand: draws must be >= 1");
  const auto names = dgp_covariate_names(config.p());
  const auto terms0 = parse_terms(config.mu0_terms, names);
  const auto terms1 = parse_terms(config.mu1_terms, names);
  const Eigen::MatrixXd L = correlation_factor(config);
  const double u_t = config.cutoffs(config.threshold_index - 2);

  Rng rng(Rng::split(config.seed, kTruthStream));
  std::vector<double> tilt, tilted_effect;
  tilt.reserve(static_cast<std::size_t>(draws));
  tilted_effect.reserve(static_cast<std::size_t>(draws));
  Eigen::RowVectorXd x(config.p());
  for (Eigen::Index i = 0; i < draws; ++i) {
    draw_covariates(rng, L, x);
    const double e = norm_cdf_upper(u_t - x.dot(config.beta));
    if (subpopulation && !(e > subpopulation->e_min && e < subpopulation->e_max)) continue;
    const double h = estimand == WeightScheme::ATO ? e * (1.0 - e) : e;
    tilt.push_back(h);
    tilted_effect.push_back(h * (eval_mu(terms1, config.gamma1, x) - eval_mu(terms0, config.gamma0, x)));
  }
  const double denom = pairwise_sum(tilt);
  if (tilt.empty() || !(denom > 0.0)) {
    throw EstimationError("true_estimand: subpopulation has no tilting mass");
  }
  return pairwise_sum(tilted_effect) / denom;
}

PipelineSettings resolve_pipeline_settings(const DgpConfig& config, PipelineSettings settings) {
  if (settings.ps_terms.empty()) settings.ps_terms = dgp_ps_terms(config);
  if (settings.outcome_terms.empty()) settings.outcome_terms = dgp_outcome_terms(config);
  if (settings.ps_terms.empty()) {
    throw ManifestError("pipeline: every covariate omitted from the propensity model");
  }
  return settings;
}

namespace {

struct PipelineCore {
  Dataset psdata;
  FittedProbit ft;
  PropensityVector pv;
  Interval interval;
  std::vector<Eigen::Index> rows;
  Dataset sub;
  Eigen::VectorXd e_sub;
  std::vector<Term> outcome_terms;
};

PipelineCore build_core(const Dataset& data, const PipelineSettings& s) {
  if (s.estimand == WeightScheme::NONE) {
    throw EstimationError("pipeline: estimand must be ATO or ATT");
  }
  if (s.ps_terms.empty()) throw ManifestError("pipeline: no propensity terms");
  PipelineCore core{expand_terms_dataset(data, s.ps_terms), {}, {}, s.interval, {}, {}, {}, {}};
  core.ft = fit(core.psdata);
  core.pv = propensity(core.ft, core.psdata);
  if (s.search_interval) {
    const auto sym = search_symmetric(data, core.pv.e_hat, s.estimand, s.grid, s.critical, s.min_arm);
    if (!sym.interval) throw BalanceError("pipeline: no balanced symmetric interval");
    core.interval = *sym.interval;
  }
  core.rows = subsample_indices(core.pv.e_hat, core.interval);
  if (core.rows.empty()) throw EstimationError("pipeline: empty propensity-interval subsample");
  core.sub = subset(data, core.rows);
  core.e_sub.resize(static_cast<Eigen::Index>(core.rows.size()));
  for (std::size_t k = 0; k < core.rows.size(); ++k) {
    core.e_sub(static_cast<Eigen::Index>(k)) = core.pv.e_hat(core.rows[k]);
  }
  core.outcome_terms = parse_terms(s.outcome_terms, data.covariate_names);
  return core;
}

void fill_counts(const PipelineCore& core, PipelineEstimate& est) {
  est.interval = core.interval;
  const auto n1 = static_cast<std::size_t>((core.sub.Z.array() == 1).count());
  est.n1 = n1;
  est.n0 = core.rows.size() - n1;
}

}  // namespace

PipelineEstimate run_pipeline_once(const Dataset& data, const PipelineSettings& s) {
  const PipelineCore core = build_core(data, s);
  const OutcomeModel m0 = fit_outcome_model(core.sub, 0, core.outcome_terms);
  const SandwichInputs in = make_sandwich_inputs(core.psdata, core.ft, core.pv, core.rows);
  PipelineEstimate est{};
  if (s.estimand == WeightScheme::ATT) {
    est.tau = augmented_att(core.sub, core.e_sub, m0);
    est.se = sandwich_att(in, m0).se;
  } else {
    const OutcomeModel m1 = fit_outcome_model(core.sub, 1, core.outcome_terms);
    est.tau = augmented_ato(core.sub, core.e_sub, m0, m1);
    est.se = sandwich_ato(in, m0, m1).se;
  }
  fill_counts(core, est);
  return est;
}

namespace {

// bootstrap resamples only need the point estimate, and the sandwich would
// reject degenerate resamples the estimate itself tolerates
double point_estimate_once(const Dataset& data, const PipelineSettings& s) {
  const PipelineCore core = build_core(data, s);
  const OutcomeModel m0 = fit_outcome_model(core.sub, 0, core.outcome_terms);
  if (s.estimand == WeightScheme::ATT) return augmented_att(core.sub, core.e_sub, m0);
  const OutcomeModel m1 = fit_outcome_model(core.sub, 1, core.outcome_terms);
  return augmented_ato(core.sub, core.e_sub, m0, m1);
}

void run_indexed(std::size_t total, std::size_t workers, const std::function<void(std::size_t)>& job) {
  const std::size_t nw = std::max<std::size_t>(1, std::min(workers, total));
  if (nw <= 1) {
    for (std::size_t i = 0; i < total; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto drain = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      job(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(drain);
  for (auto& t : pool) t.join();
}

}  // namespace

McReport monte_carlo(const DgpConfig& config, const McSettings& settings,
                     std::size_t replications) {
  if (replications < 2) throw ManifestError("monte_carlo: replications must be >= 2");
  validate_config(config);
  const PipelineSettings pipe = resolve_pipeline_settings(config, settings.pipeline);
  // the bias/coverage target conditions on the reference interval even when
  // the per-replication interval is re-searched
  const double true_tau =
      true_estimand(config, pipe.estimand, pipe.interval, settings.truth_draws);
  const double z95 = norm_quantile(0.975);

  struct RepOutcome {
    bool ok = false;
    McRecord rec{};
    std::string error;
  };
  std::vector<RepOutcome> slots(replications);
  run_indexed(replications, settings.workers, [&](std::size_t r) {
    RepOutcome& out = slots[r];
    out.rec.replication = r;
    out.rec.seed = Rng::split(config.seed, settings.rep_offset + r + 1);
    try {
      DgpConfig rep = config;
      rep.seed = out.rec.seed;
      const Generated gen = generate(rep);
      const PipelineEstimate est = run_pipeline_once(gen.dataset, pipe);
      out.rec.tau = est.tau;
      out.rec.se = est.se;
      out.rec.interval = est.interval;
      out.rec.n0 = est.n0;
      out.rec.n1 = est.n1;
      out.rec.covered = std::abs(est.tau - true_tau) <= z95 * est.se;
      out.ok = true;
    } catch (const std::exception& ex) {
      out.error = ex.what();
    }
  });

  McReport report;
  report.replications = replications;
  report.true_tau = true_tau;
  std::vector<double> taus, ses;
  std::size_t covered = 0;
  for (std::size_t r = 0; r < replications; ++r) {
    const RepOutcome& out = slots[r];
    if (!out.ok) {
      report.failures += 1;
      report.failure_log.push_back("replication " + std::to_string(r) + ": " + out.error);
      continue;
    }
    report.records.push_back(out.rec);
    taus.push_back(out.rec.tau);
    ses.push_back(out.rec.se);
    if (out.rec.covered) covered += 1;
  }
  if (10 * report.failures > replications) {
    throw EstimationError("monte_carlo: " + std::to_string(report.failures) + " of " +
                          std::to_string(replications) + " replications failed (over 10%); first: " +
                          report.failure_log.front());
  }
  if (taus.size() < 2) throw EstimationError("monte_carlo: fewer than 2 successful replications");
  report.mean_bias = mean(taus) - true_tau;
  report.mc_sd = std::sqrt(sample_variance(taus));
  report.mean_se = mean(ses);
  report.coverage = static_cast<double>(covered) / static_cast<double>(taus.size());
  return report;
}

std::string format_mc_report(const McReport& report) {
  char buf[160];
  std::ostringstream out;
  out << "replications\t" << report.replications << "\n";
  out << "failures\t" << report.failures << "\n";
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s\t%.6g\n", key, v);
    out << buf;
  };
  line("true_tau", report.true_tau);
  line("mean_bias", report.mean_bias);
  line("mc_sd", report.mc_sd);
  line("mean_se", report.mean_se);
  line("coverage", report.coverage);
  return out.str();
}

BootstrapResult bootstrap_se(const Dataset& data, const PipelineSettings& settings,
                             std::size_t resamples, std::uint64_t seed, std::size_t workers) {
  if (resamples < 100) throw ManifestError("bootstrap_se: resamples must be >= 100");
  PipelineSettings s = settings;
  s.search_interval = false;  // the interval is held fixed across resamples
  const Eigen::Index n = data.n();

  struct Slot {
    bool ok = false;
    double tau = 0.0;
  };
  std::vector<Slot> slots(resamples);
  run_indexed(resamples, workers, [&](std::size_t r) {
    Rng rng(Rng::split(seed, r + 1));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (auto& row : rows) {
      row = static_cast<Eigen::Index>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    }
    try {
      const Dataset resample = subset(data, rows);
      slots[r].tau = point_estimate_once(resample, s);
      slots[r].ok = true;
    } catch (const std::exception&) {
      // single-arm or otherwise degenerate resample: skipped and counted
    }
  });

  BootstrapResult result{};
  result.resamples = resamples;
  for (const Slot& slot : slots) {
    if (slot.ok) {
      result.estimates.push_back(slot.tau);
    } else {
      result.skipped += 1;
    }
  }
  if (result.estimates.size() < 2) {
    throw EstimationError("bootstrap_se: fewer than 2 usable resamples");
  }
  if (10 * result.skipped > resamples) {
    throw EstimationError("bootstrap_se: " + std::to_string(result.skipped) + " of " +
                          std::to_string(resamples) + " resamples skipped (over 10%)");
  }
  result.se = std::sqrt(sample_variance(result.estimates));
  return result;
}

}  // namespace ordrd
