#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ordrd/balance.hpp"
#include "ordrd/dataset.hpp"

namespace ordrd {

// Generative law: X ~ N(0, corr), R* = X beta + eps, eps ~ N(0,1), category
// by the cutoffs, Y(z) = mu_z(X) + noise_sd * delta_z. Misspecification is a
// fitting-side switch: the generator always uses the full config.
struct DgpConfig {
  Eigen::Index N = 0;
  Eigen::VectorXd beta;     // length p; covariates are named x1..xp
  Eigen::VectorXd cutoffs;  // strictly increasing, J = cutoffs + 1 categories
  int threshold_index = 2;  // t, 1-based
  std::vector<std::string> mu0_terms;
  std::vector<std::string> mu1_terms;
  Eigen::VectorXd gamma0;  // intercept first, then mu0_terms coefficients
  Eigen::VectorXd gamma1;
  double noise_sd = 1.0;
  Eigen::MatrixXd covariate_corr;  // empty -> independent standard normals

  // fitting-side misspecification switches
  std::vector<std::string> omit_from_ps;       // covariates hidden from the probit
  std::vector<std::string> fit_outcome_terms;  // empty -> the true term union

  std::uint64_t seed = 1;

  Eigen::Index p() const { return beta.size(); }
  std::size_t J() const { return static_cast<std::size_t>(cutoffs.size()) + 1; }
};

// Covariate / category names the generator synthesizes: x1..xp, c1..cJ.
std::vector<std::string> dgp_covariate_names(Eigen::Index p);
std::vector<std::string> dgp_category_labels(std::size_t J);

// Probit design the pipeline fits: every covariate linearly, minus the
// omit_from_ps list. Outcome design: union of the true term lists unless
// fit_outcome_terms overrides it.
std::vector<std::string> dgp_ps_terms(const DgpConfig& config);
std::vector<std::string> dgp_outcome_terms(const DgpConfig& config);

// Potential outcomes and true propensities, kept beside the dataset; nothing
// in the fitting path accepts this type.
struct SimTruth {
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  Eigen::VectorXd e_true;
};

struct Generated {
  Dataset dataset;
  SimTruth truth;
};

// Invalid config -> ManifestError; a config whose draw leaves a category
// empty -> DataError listing the category frequencies.
Generated generate(const DgpConfig& config);

// E_h[mu1 - mu0] over {e_true in subpopulation} by brute-force averaging on
// a fresh draw (h = e(1-e) for ATO, h = e for ATT).
double true_estimand(const DgpConfig& config, WeightScheme estimand,
                     const std::optional<Interval>& subpopulation = std::nullopt,
                     Eigen::Index draws = 1000000);

// One pipeline pass: probit on the PS terms, propensity, interval (fixed or
// symmetric search), per-arm outcome models, augmented estimate, sandwich se.
struct PipelineSettings {
  std::vector<std::string> ps_terms;       // probit design
  std::vector<std::string> outcome_terms;  // per-arm outcome design
  WeightScheme estimand = WeightScheme::ATO;
  Interval interval{0.1, 0.9};
  bool search_interval = false;  // re-search symmetrically per replication
  SearchGrid grid{};
  double critical = 1.96;
  std::size_t min_arm = 5;
};

// Term lists filled from the config (dgp_ps_terms / dgp_outcome_terms) when
// left empty.
PipelineSettings resolve_pipeline_settings(const DgpConfig& config, PipelineSettings settings);

struct PipelineEstimate {
  double tau;
  double se;
  Interval interval;
  std::size_t n0, n1;
};

PipelineEstimate run_pipeline_once(const Dataset& data, const PipelineSettings& settings);

struct McRecord {
  std::size_t replication;  // position in the sub-seed stream
  std::uint64_t seed;
  double tau;
  double se;
  Interval interval;
  std::size_t n0, n1;
  bool covered;  // 95% normal interval contains true_tau
};

struct McReport {
  std::size_t replications = 0;
  std::size_t failures = 0;
  double true_tau = 0;
  double mean_bias = 0;
  double mc_sd = 0;
  double mean_se = 0;
  double coverage = 0;
  std::vector<McRecord> records;        // successes only, stream order
  std::vector<std::string> failure_log;  // "replication <k>: <reason>"
};

struct McSettings {
  PipelineSettings pipeline{};
  std::size_t workers = 1;
  std::uint64_t rep_offset = 0;   // sub-seed stream position of replication 0
  Eigen::Index truth_draws = 1000000;
};

// Independent sub-seed per replication via the seed-splitting contract:
// replication k uses split(config.seed, rep_offset + k + 1), so a run of
// k1 + k2 replications equals two runs with offsets 0 and k1 concatenated.
// Per-replication failures are logged; more than 10% failing is an error.
McReport monte_carlo(const DgpConfig& config, const McSettings& settings,
                     std::size_t replications);

std::string format_mc_report(const McReport& report);

struct BootstrapResult {
  double se;
  std::size_t resamples;
  std::size_t skipped;  // resamples whose pipeline failed (e.g. single arm)
  std::vector<double> estimates;
};

// Nonparametric unit resampling with a full refit (probit + outcome models)
// at the fixed interval per resample; se is the n-1 sd across resamples.
BootstrapResult bootstrap_se(const Dataset& data, const PipelineSettings& settings,
                             std::size_t resamples, std::uint64_t seed,
                             std::size_t workers = 1);

}  // namespace ordrd
