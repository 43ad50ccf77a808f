#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ordrd/balance.hpp"
#include "ordrd/dataset.hpp"
#include "ordrd/probit.hpp"
#include "ordrd/simlab.hpp"

namespace ordrd {

// Analysis run configuration. Every key is documented in the README; the
// manifest plus its seed fully determines a run, and machine-readable
// outputs embed hash + seed so results are traceable to their inputs.
struct AnalysisManifest {
  std::string data_path;
  char delimiter = ',';
  std::string id_column;  // empty -> row numbers
  std::string category_column;
  std::string outcome_column;
  std::vector<std::string> covariates;
  bool strict = false;

  std::vector<std::string> labels;
  std::string threshold_label;

  std::vector<ExclusionRule> exclusions;
  bool standardize = false;

  std::vector<std::string> probit_terms;
  std::vector<std::string> outcome_terms;  // defaults to probit_terms
  std::vector<WeightScheme> schemes{WeightScheme::ATO, WeightScheme::ATT};

  SearchGrid grid{};
  double critical = 1.96;
  std::size_t min_arm = 5;
  double e_floor = 0.01;
  double e_ceiling = 0.99;
  double significance = 0.10;
  FitSettings::EmptyCategory empty_category = FitSettings::EmptyCategory::Error;

  std::string out_dir = ".";
  std::uint64_t seed = 1;
  std::uint64_t hash = 0;  // FNV-1a of the manifest text
};

// Missing/ill-typed keys -> ManifestError naming the key path.
AnalysisManifest parse_analysis_manifest_text(const std::string& text);
AnalysisManifest parse_analysis_manifest(const std::string& path);

TableSchema table_schema(const AnalysisManifest& manifest);

// Simulation run configuration: a DGP plus the pipeline settings to study.
struct SimManifest {
  std::string mode;  // "monte_carlo" or "bootstrap"
  std::size_t replications = 0;
  std::size_t resamples = 0;
  std::size_t workers = 1;
  DgpConfig dgp;
  PipelineSettings pipeline;
  std::string out_dir = ".";
  std::uint64_t hash = 0;
};

SimManifest parse_sim_manifest_text(const std::string& text);
SimManifest parse_sim_manifest(const std::string& path);

std::string read_text_file(const std::string& path);  // missing file -> ManifestError

}  // namespace ordrd
