#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "ordrd/manifest.hpp"

namespace ordrd {

// Command-line overrides applied on top of the manifest.
struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<bool> strict;
  std::optional<std::size_t> workers;
};

AnalysisManifest apply_overrides(AnalysisManifest manifest, const RunOptions& options);

// Each command returns 0 on success; an ordrd::Error is reported on the log
// stream as a single machine-readable line and mapped to its stage exit code
// (2 manifest, 3 data, 4 fit, 5 balance, 6 estimation). Artifacts written
// before a failure are retained.

// Load + exclusions + summary; writes validation.txt.
int cmd_validate(const std::string& manifest_path, const RunOptions& options, std::ostream& log);

// Full pipeline; writes probit.txt, propensity_by_category.tsv,
// balance_symmetric.tsv, balance_asymmetric.tsv, estimates.tsv,
// influence.tsv, report.txt into the output directory.
int cmd_run(const std::string& manifest_path, const RunOptions& options, std::ostream& log);

// Identical pipeline on negative-control data; adds falsification.tsv and a
// pass/fail verdict (pass = p-value >= significance level).
int cmd_falsify(const std::string& manifest_path, const std::string& control_path,
                const RunOptions& options, std::ostream& log);

// Dispatches to monte_carlo (mc_report.txt, mc_records.tsv) or bootstrap_se
// (bootstrap.txt, bootstrap_estimates.tsv) per the simulation manifest.
int cmd_simulate(const std::string& manifest_path, const RunOptions& options, std::ostream& log);

}  // namespace ordrd
