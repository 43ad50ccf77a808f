#include "ordrd/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "ordrd/errors.hpp"
#include "ordrd/estimate.hpp"
#include "ordrd/probit.hpp"
#include "ordrd/stats.hpp"
#include "ordrd/terms.hpp"
#include "ordrd/variance.hpp"

namespace ordrd {

namespace {

const char* stage_label(Stage stage) {
  switch (stage) {
    case Stage::Manifest: return "manifest";
    case Stage::Data: return "data";
    case Stage::Fit: return "fit";
    case Stage::Balance: return "balance";
    case Stage::Estimation: return "estimation";
  }
  return "unknown";
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string stamp(std::uint64_t hash, std::uint64_t seed) {
  return "# manifest_hash=" + hash_hex(hash) + " seed=" + std::to_string(seed) + "\n";
}

void write_file(const std::string& dir, const std::string& name, const std::string& content) {
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ManifestError("cannot write output file '" + path.string() + "'");
  out << content;
  if (!out) throw ManifestError("failed while writing '" + path.string() + "'");
}

struct LoadedAnalysis {
  Dataset data;
  std::vector<DropRecord> drops;
  std::vector<std::size_t> removed_per_rule;
};

LoadedAnalysis load_analysis(const AnalysisManifest& m) {
  LoadResult lr = load_dataset(m.data_path, table_schema(m));
  LoadedAnalysis out{std::move(lr.dataset), std::move(lr.drops), {}};
  if (!m.exclusions.empty()) {
    ExclusionResult ex = apply_exclusion_rules(out.data, m.exclusions);
    out.data = std::move(ex.dataset);
    out.removed_per_rule = std::move(ex.removed_per_rule);
    for (auto& d : ex.drops) out.drops.push_back(std::move(d));
  }
  if (m.standardize) out.data = standardize_covariates(out.data).first;
  return out;
}

std::string drops_block(const std::vector<DropRecord>& drops) {
  std::ostringstream out;
  out << "dropped units: " << drops.size() << "\n";
  for (const auto& d : drops) out << "  " << d.id << ": " << d.reason << "\n";
  return out.str();
}

struct SchemeResult {
  WeightScheme scheme;
  SymmetricSearchResult symmetric;
  std::optional<AsymmetricSearchResult> asymmetric;
  std::vector<Eigen::Index> rows;
  Dataset sub;
  Eigen::VectorXd e_sub;
  double hajek = 0.0;
  EffectEstimate estimate{};
  InfluenceDecomposition decomposition{};
  InfluenceDiagnostics diagnostics{};
  std::vector<std::string> weight_warnings;
};

std::string symmetric_table(const std::string& head, const std::vector<SchemeResult>& schemes,
                            const std::vector<std::string>& covariates) {
  std::ostringstream out;
  out << head << "scheme\td\te_min\te_max\tfeasible\tn0\tn1\tmax_abs_sb\tbalanced";
  for (const auto& name : covariates) out << "\tsb_" << name;
  out << "\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : schemes) {
    for (const auto& step : s.symmetric.trace) {
      out << scheme_name(s.scheme) << "\t" << fmt(step.d) << "\t" << fmt(0.5 - step.d) << "\t"
          << fmt(0.5 + step.d) << "\t" << (step.feasible ? 1 : 0);
      if (step.report) {
        out << "\t" << step.report->n0 << "\t" << step.report->n1 << "\t"
            << fmt(step.report->max_abs_sb) << "\t" << (step.report->balanced ? 1 : 0);
        for (double sb : step.report->sb) out << "\t" << fmt(sb);
      } else {
        out << "\t0\t0\t" << fmt(nan) << "\t0";
        for (std::size_t k = 0; k < covariates.size(); ++k) out << "\t" << fmt(nan);
      }
      out << "\n";
    }
  }
  return out.str();
}

std::string asymmetric_table(const std::string& head, const std::vector<SchemeResult>& schemes,
                             const std::vector<std::string>& covariates) {
  std::ostringstream out;
  out << head << "scheme\tstep\tside\te_min\te_max\tn0\tn1\tmax_abs_sb\tbalanced";
  for (const auto& name : covariates) out << "\tsb_" << name;
  out << "\n";
  for (const auto& s : schemes) {
    if (!s.asymmetric) continue;
    std::size_t k = 0;
    for (const auto& step : s.asymmetric->trace) {
      out << scheme_name(s.scheme) << "\t" << ++k << "\t" << step.side << "\t"
          << fmt(step.interval.e_min) << "\t" << fmt(step.interval.e_max) << "\t"
          << step.report.n0 << "\t" << step.report.n1 << "\t" << fmt(step.report.max_abs_sb)
          << "\t" << (step.report.balanced ? 1 : 0);
      for (double sb : step.report.sb) out << "\t" << fmt(sb);
      out << "\n";
    }
  }
  return out.str();
}

SchemeResult analyze_scheme(const Dataset& data, const Dataset& psdata, const FittedProbit& ft,
                            const PropensityVector& pv, const std::vector<Term>& outcome_terms,
                            const AnalysisManifest& m, WeightScheme scheme,
                            SymmetricSearchResult symmetric) {
  SchemeResult r;
  r.scheme = scheme;
  r.symmetric = std::move(symmetric);
  const Interval interval = *r.symmetric.interval;
  r.asymmetric = search_asymmetric(data, pv.e_hat, scheme, interval, m.grid.step, m.critical,
                                   m.min_arm, m.e_floor, m.e_ceiling);
  r.rows = subsample_indices(pv.e_hat, interval);
  r.sub = subset(data, r.rows);
  r.e_sub.resize(static_cast<Eigen::Index>(r.rows.size()));
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    r.e_sub(static_cast<Eigen::Index>(k)) = pv.e_hat(r.rows[k]);
  }

  const WeightResult wr = compute_weights(r.e_sub, r.sub.Z, scheme, r.sub.ids);
  r.weight_warnings = wr.warnings;
  r.hajek = hajek_wate(r.sub.outcome, r.sub.Z, wr.w);

  const SandwichInputs in = make_sandwich_inputs(psdata, ft, pv, r.rows);
  const OutcomeModel m0 = fit_outcome_model(r.sub, 0, outcome_terms);
  if (scheme == WeightScheme::ATT) {
    r.estimate.tau = augmented_att(r.sub, r.e_sub, m0);
    r.decomposition = sandwich_att(in, m0);
  } else {
    const OutcomeModel m1 = fit_outcome_model(r.sub, 1, outcome_terms);
    r.estimate.tau = augmented_ato(r.sub, r.e_sub, m0, m1);
    r.decomposition = sandwich_ato(in, m0, m1);
  }
  r.diagnostics = influence_diagnostics(r.decomposition);
  r.estimate.estimand = scheme_name(scheme);
  r.estimate.se = r.decomposition.se;
  r.estimate.p_value = p_value(r.estimate.tau, r.estimate.se);
  r.estimate.interval = interval;
  const auto n1 = static_cast<std::size_t>((r.sub.Z.array() == 1).count());
  r.estimate.n1 = n1;
  r.estimate.n0 = r.rows.size() - n1;
  r.estimate.theta_hat = r.decomposition.theta_hat;
  return r;
}

void run_pipeline_files(const AnalysisManifest& m, bool falsification) {
  std::filesystem::create_directories(m.out_dir);
  const std::string head = stamp(m.hash, m.seed);

  std::ostringstream rep;
  rep << (falsification ? "negative-control (falsification) run\n" : "analysis run\n");
  rep << "manifest_hash " << hash_hex(m.hash) << "\nseed " << m.seed << "\n\n";

  const LoadedAnalysis loaded = load_analysis(m);
  const Dataset& data = loaded.data;
  const auto summary = summarize(data);
  rep << "data: " << m.data_path << "\n";
  rep << "units " << summary.n_units << " (treated " << summary.n_treated << ", control "
      << summary.n_control << ")\n";
  rep << "categories:";
  for (std::size_t c = 0; c < data.scale.labels.size(); ++c) {
    rep << " " << data.scale.labels[c] << "=" << summary.category_counts[c];
  }
  rep << "\nthreshold " << data.scale.labels[static_cast<std::size_t>(data.scale.threshold_index - 1)]
      << "\n";
  rep << drops_block(loaded.drops) << "\n";

  const auto outcome_terms = parse_terms(m.outcome_terms, data.covariate_names);
  const Dataset psdata = expand_terms_dataset(data, m.probit_terms);
  FitSettings settings;
  settings.empty_category = m.empty_category;
  const FittedProbit ft = fit(psdata, settings);
  write_file(m.out_dir, "probit.txt", head + serialize_probit(ft));
  rep << "probit: converged " << (ft.converged ? "yes" : "no") << ", iterations " << ft.iterations
      << ", loglik " << fmt(ft.loglik) << "\n";

  const PropensityVector pv = propensity(ft, psdata);
  const PropensityByCategory by_cat = propensity_by_category(ft, psdata);
  {
    std::ostringstream tsv;
    tsv << head;
    tsv << "# share_above_half_treated_side=" << fmt(by_cat.share_above_half_treated_side)
        << " share_below_half_control_side=" << fmt(by_cat.share_below_half_control_side) << "\n";
    tsv << "category\tn\tmin\tq1\tmedian\tq3\tmax\tshare_ge_half\n";
    for (const auto& row : by_cat.rows) {
      tsv << row.label << "\t" << row.n << "\t" << fmt(row.min) << "\t" << fmt(row.q1) << "\t"
          << fmt(row.q2) << "\t" << fmt(row.q3) << "\t" << fmt(row.max) << "\t"
          << fmt(row.share_ge_half) << "\n";
    }
    write_file(m.out_dir, "propensity_by_category.tsv", tsv.str());
  }
  rep << "propensity diagnostic: share(e>1/2) just above threshold "
      << fmt(by_cat.share_above_half_treated_side) << ", share(e<1/2) just below "
      << fmt(by_cat.share_below_half_control_side) << "\n\n";

  std::vector<SchemeResult> schemes;
  for (const WeightScheme scheme : m.schemes) {
    SchemeResult r;
    r.scheme = scheme;
    r.symmetric = search_symmetric(data, pv.e_hat, scheme, m.grid, m.critical, m.min_arm);
    schemes.push_back(std::move(r));
  }
  write_file(m.out_dir, "balance_symmetric.tsv",
             symmetric_table(head, schemes, data.covariate_names));
  for (const auto& r : schemes) {
    if (!r.symmetric.interval) {
      rep << "stopped: no balanced symmetric interval for scheme " << scheme_name(r.scheme)
          << "\n";
      write_file(m.out_dir, "report.txt", rep.str());
      throw BalanceError("no balanced symmetric interval for scheme " +
                         scheme_name(r.scheme));
    }
  }

  for (auto& r : schemes) {
    r = analyze_scheme(data, psdata, ft, pv, outcome_terms, m, r.scheme,
                       std::move(r.symmetric));
  }
  write_file(m.out_dir, "balance_asymmetric.tsv",
             asymmetric_table(head, schemes, data.covariate_names));

  {
    std::ostringstream tsv;
    tsv << head
        << "estimand\te_min\te_max\tn0\tn1\ttheta_hat\thajek\ttau\tse\tp_value\n";
    for (const auto& r : schemes) {
      tsv << r.estimate.estimand << "\t" << fmt(r.estimate.interval.e_min) << "\t"
          << fmt(r.estimate.interval.e_max) << "\t" << r.estimate.n0 << "\t" << r.estimate.n1
          << "\t" << fmt(r.estimate.theta_hat) << "\t" << fmt(r.hajek) << "\t"
          << fmt(r.estimate.tau) << "\t" << fmt(r.estimate.se) << "\t"
          << fmt(r.estimate.p_value) << "\n";
    }
    write_file(m.out_dir, "estimates.tsv", tsv.str());
  }

  {
    std::ostringstream tsv;
    tsv << head << "estimand\tid\tz\te_hat\tu1\tu0\tinfluence\tflagged\n";
    for (const auto& r : schemes) {
      std::vector<char> flagged(r.rows.size(), 0);
      for (std::size_t k : r.diagnostics.flagged) flagged[k] = 1;
      for (std::size_t k = 0; k < r.rows.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        tsv << r.estimate.estimand << "\t" << r.sub.ids[k] << "\t" << r.sub.Z(i) << "\t"
            << fmt(r.e_sub(i)) << "\t" << fmt(r.decomposition.U1(i)) << "\t"
            << fmt(r.decomposition.U0(i)) << "\t" << fmt(r.decomposition.influence(i)) << "\t"
            << static_cast<int>(flagged[k]) << "\n";
      }
    }
    write_file(m.out_dir, "influence.tsv", tsv.str());
  }

  for (const auto& r : schemes) {
    rep << "[" << r.estimate.estimand << "]\n";
    rep << "  symmetric d* " << fmt(*r.symmetric.d_star) << " -> interval ("
        << fmt(r.estimate.interval.e_min) << ", " << fmt(r.estimate.interval.e_max) << "), n0 "
        << r.estimate.n0 << ", n1 " << r.estimate.n1 << "\n";
    if (r.asymmetric) {
      rep << "  asymmetric interval (" << fmt(r.asymmetric->interval.e_min) << ", "
          << fmt(r.asymmetric->interval.e_max) << ") after " << r.asymmetric->trace.size()
          << " extension(s)\n";
    }
    rep << "  hajek " << fmt(r.hajek) << "\n";
    rep << "  augmented tau " << fmt(r.estimate.tau) << ", sandwich se " << fmt(r.estimate.se)
        << ", p " << fmt(r.estimate.p_value) << "\n";
    rep << "  influence: " << r.diagnostics.flagged.size() << " of " << r.rows.size()
        << " units beyond 5x median |I|\n";
    for (const auto& w : r.weight_warnings) rep << "  warning: " << w << "\n";
  }

  if (falsification) {
    std::ostringstream tsv;
    tsv << head << "estimand\ttau\tse\tp_value\tsignificance\tpass\n";
    rep << "\nfalsification at level " << fmt(m.significance) << ":\n";
    for (const auto& r : schemes) {
      const bool pass = r.estimate.p_value >= m.significance;
      tsv << r.estimate.estimand << "\t" << fmt(r.estimate.tau) << "\t" << fmt(r.estimate.se)
          << "\t" << fmt(r.estimate.p_value) << "\t" << fmt(m.significance) << "\t"
          << (pass ? 1 : 0) << "\n";
      rep << "  " << r.estimate.estimand << ": " << (pass ? "PASS" : "FAIL") << " (p "
          << fmt(r.estimate.p_value) << ")\n";
    }
    write_file(m.out_dir, "falsification.tsv", tsv.str());
  }

  write_file(m.out_dir, "report.txt", rep.str());
}

}  // namespace

AnalysisManifest apply_overrides(AnalysisManifest manifest, const RunOptions& options) {
  if (options.out_dir) manifest.out_dir = *options.out_dir;
  if (options.seed) manifest.seed = *options.seed;
  if (options.strict) manifest.strict = *options.strict;
  return manifest;
}

int cmd_validate(const std::string& manifest_path, const RunOptions& options, std::ostream& log) {
  try {
    const AnalysisManifest m = apply_overrides(parse_analysis_manifest(manifest_path), options);
    // validates the scale and every term against the declared covariates
    table_schema(m);
    parse_terms(m.probit_terms, m.covariates);
    parse_terms(m.outcome_terms, m.covariates);
    std::filesystem::create_directories(m.out_dir);

    const LoadedAnalysis loaded = load_analysis(m);
    const auto summary = summarize(loaded.data);

    std::ostringstream out;
    out << stamp(m.hash, m.seed);
    out << "status\tok\n";
    out << "units\t" << summary.n_units << "\n";
    out << "treated\t" << summary.n_treated << "\n";
    out << "control\t" << summary.n_control << "\n";
    for (std::size_t c = 0; c < loaded.data.scale.labels.size(); ++c) {
      out << "category\t" << loaded.data.scale.labels[c] << "\t" << summary.category_counts[c]
          << "\n";
    }
    out << "covariate\tname\tn\tmean\tsd\tmin\tq1\tmedian\tq3\tmax\n";
    for (const auto& cov : summary.covariates) {
      out << "covariate\t" << cov.name << "\t" << cov.n << "\t" << fmt(cov.mean) << "\t"
          << (cov.sd ? fmt(*cov.sd) : "nan") << "\t" << fmt(cov.min) << "\t" << fmt(cov.q1)
          << "\t" << fmt(cov.q2) << "\t" << fmt(cov.q3) << "\t" << fmt(cov.max) << "\n";
    }
    for (std::size_t k = 0; k < loaded.removed_per_rule.size(); ++k) {
      out << "exclusion\t" << m.exclusions[k].covariate << m.exclusions[k].comparator
          << fmt(m.exclusions[k].bound) << "\t" << loaded.removed_per_rule[k] << "\n";
    }
    for (const auto& d : loaded.drops) out << "drop\t" << d.id << "\t" << d.reason << "\n";
    write_file(m.out_dir, "validation.txt", out.str());
    log << "validate: ok, " << summary.n_units << " units, " << loaded.drops.size()
        << " dropped\n";
    return 0;
  } catch (const Error& e) {
    log << "error\t" << stage_label(e.stage()) << "\t" << e.what() << "\n";
    return e.exit_code();
  }
}

int cmd_run(const std::string& manifest_path, const RunOptions& options, std::ostream& log) {
  try {
    const AnalysisManifest m = apply_overrides(parse_analysis_manifest(manifest_path), options);
    run_pipeline_files(m, false);
    log << "run: artifacts written to " << m.out_dir << "\n";
    return 0;
  } catch (const Error& e) {
    log << "error\t" << stage_label(e.stage()) << "\t" << e.what() << "\n";
    return e.exit_code();
  }
}

int cmd_falsify(const std::string& manifest_path, const std::string& control_path,
                const RunOptions& options, std::ostream& log) {
  try {
    AnalysisManifest m = apply_overrides(parse_analysis_manifest(manifest_path), options);
    m.data_path = control_path;
    run_pipeline_files(m, true);
    log << "falsify: artifacts written to " << m.out_dir << "\n";
    return 0;
  } catch (const Error& e) {
    log << "error\t" << stage_label(e.stage()) << "\t" << e.what() << "\n";
    return e.exit_code();
  }
}

int cmd_simulate(const std::string& manifest_path, const RunOptions& options, std::ostream& log) {
  try {
    SimManifest m = parse_sim_manifest(manifest_path);
    if (options.out_dir) m.out_dir = *options.out_dir;
    if (options.seed) m.dgp.seed = *options.seed;
    if (options.workers) m.workers = *options.workers;
    std::filesystem::create_directories(m.out_dir);
    const std::string head = stamp(m.hash, m.dgp.seed);

    if (m.mode == "monte_carlo") {
      McSettings settings;
      settings.pipeline = m.pipeline;
      settings.workers = m.workers;
      const McReport report = monte_carlo(m.dgp, settings, m.replications);
      write_file(m.out_dir, "mc_report.txt", head + format_mc_report(report));
      std::ostringstream tsv;
      tsv << head << "replication\tseed\ttau\tse\te_min\te_max\tn0\tn1\tcovered\n";
      for (const auto& rec : report.records) {
        tsv << rec.replication << "\t" << rec.seed << "\t" << fmt(rec.tau) << "\t" << fmt(rec.se)
            << "\t" << fmt(rec.interval.e_min) << "\t" << fmt(rec.interval.e_max) << "\t"
            << rec.n0 << "\t" << rec.n1 << "\t" << (rec.covered ? 1 : 0) << "\n";
      }
      for (const auto& line : report.failure_log) tsv << "# failed " << line << "\n";
      write_file(m.out_dir, "mc_records.tsv", tsv.str());
      log << "simulate: " << report.records.size() << " records, " << report.failures
          << " failures\n";
      return 0;
    }

    const Generated gen = generate(m.dgp);
    const PipelineSettings pipe = resolve_pipeline_settings(m.dgp, m.pipeline);
    const PipelineEstimate point = run_pipeline_once(gen.dataset, pipe);
    const BootstrapResult boot =
        bootstrap_se(gen.dataset, pipe, m.resamples, Rng::split(m.dgp.seed, 0xB007), m.workers);
    std::ostringstream txt;
    txt << head;
    txt << "tau\t" << fmt(point.tau) << "\n";
    txt << "sandwich_se\t" << fmt(point.se) << "\n";
    txt << "bootstrap_se\t" << fmt(boot.se) << "\n";
    txt << "resamples\t" << boot.resamples << "\n";
    txt << "skipped\t" << boot.skipped << "\n";
    write_file(m.out_dir, "bootstrap.txt", txt.str());
    std::ostringstream tsv;
    tsv << head << "resample\ttau\n";
    for (std::size_t k = 0; k < boot.estimates.size(); ++k) {
      tsv << k << "\t" << fmt(boot.estimates[k]) << "\n";
    }
    write_file(m.out_dir, "bootstrap_estimates.tsv", tsv.str());
    log << "simulate: bootstrap se " << fmt(boot.se) << " over " << boot.estimates.size()
        << " resamples\n";
    return 0;
  } catch (const Error& e) {
    log << "error\t" << stage_label(e.stage()) << "\t" << e.what() << "\n";
    return e.exit_code();
  }
}

}  // namespace ordrd
