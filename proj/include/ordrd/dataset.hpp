#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ordrd {

// Ordered category labels r_1 < ... < r_J plus the treatment threshold r_t.
// Order is exactly the declared order; it is never inferred from the strings.
struct CategoryScale {
  std::vector<std::string> labels;
  int threshold_index;  // t, 1-based, in 2..J

  std::size_t J() const { return labels.size(); }

  // Validates: J >= 2, unique labels, threshold present with 2 <= t <= J.
  static CategoryScale make(std::vector<std::string> labels, const std::string& threshold_label);

  // 1-based category index for a label, or 0 when unknown.
  int index_of(const std::string& label) const;
};

// Column-oriented unit records: ids[i], category[i] (1-based), outcome(i),
// covariate row X.row(i). Z is derived, never stored in the source table.
struct Dataset {
  CategoryScale scale;
  std::vector<std::string> ids;
  std::vector<int> category;
  Eigen::VectorXd outcome;
  Eigen::MatrixXd X;
  std::vector<std::string> covariate_names;
  Eigen::VectorXi Z;

  Eigen::Index n() const { return outcome.size(); }
  Eigen::Index p() const { return X.cols(); }
  std::size_t J() const { return scale.J(); }
};

// Derives Z_i = 1(category_i >= t) and enforces the dataset invariants:
// consistent lengths, categories in 1..J, unique covariate names, and at
// least one unit on each side of the threshold.
Dataset make_dataset(CategoryScale scale, std::vector<std::string> ids,
                     std::vector<int> category, Eigen::VectorXd outcome, Eigen::MatrixXd X,
                     std::vector<std::string> covariate_names);

// Row subset in the given order (used for propensity-interval subsamples).
Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows);

struct DropRecord {
  std::string id;
  std::string reason;
};

struct TableSchema {
  char delimiter = ',';
  std::string id_column;  // empty → ids synthesized as row<k>
  std::string category_column;
  std::string outcome_column;
  std::vector<std::string> covariate_columns;
  CategoryScale scale;
  // strict: any malformed row (missing field, unparseable number, unknown
  // category label) is a hard error naming the row. Otherwise such rows are
  // dropped and logged.
  bool strict = false;
};

struct LoadResult {
  Dataset dataset;
  std::vector<DropRecord> drops;
};

// Reads a delimited text file with a header row. Schema errors (missing
// columns) → ManifestError; row problems per TableSchema::strict; zero
// surviving rows → DataError.
LoadResult load_dataset(const std::string& path, const TableSchema& schema);
LoadResult load_dataset_text(const std::string& text, const TableSchema& schema);

// Exclusion predicate: units matching (covariate comparator bound) are
// removed. comparator ∈ {<, <=, >, >=, ==, !=}.
struct ExclusionRule {
  std::string covariate;
  std::string comparator;
  double bound;
};

struct ExclusionResult {
  Dataset dataset;
  std::vector<std::size_t> removed_per_rule;  // aligned with the rule list
  std::vector<DropRecord> drops;
};

ExclusionResult apply_exclusion_rules(const Dataset& data, const std::vector<ExclusionRule>& rules);

struct CovariateSummary {
  std::string name;
  std::size_t n;
  double mean;
  std::optional<double> sd;  // absent when n < 2
  double q1, q2, q3;
  double min, max;
};

struct DatasetSummary {
  std::vector<CovariateSummary> covariates;
  std::vector<std::size_t> category_counts;  // length J
  std::size_t n_units;
  std::size_t n_treated;
  std::size_t n_control;
};

DatasetSummary summarize(const Dataset& data);

// Remaps categories to the occupied ranks and moves the threshold to the
// first occupied category at or above r_t; every unit keeps its Z.
Dataset collapse_empty_categories(const Dataset& data);

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

// Returns a copy with each covariate centered and scaled to unit sd.
// Constant covariate → DataError naming it.
std::pair<Dataset, Standardization> standardize_covariates(const Dataset& data);

}  // namespace ordrd
