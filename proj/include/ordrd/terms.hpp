#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "ordrd/dataset.hpp"

namespace ordrd {

// A term is a product of covariate powers: "lev", "cpn^2", "size*age".
// Grammar: term := factor ('*' factor)*, factor := name ('^' positive-int)?
struct Term {
  struct Factor {
    std::size_t covariate;  // column index into the covariate matrix
    int power;
  };
  std::vector<Factor> factors;
  std::string name;  // canonical spelling, used in reports and error messages

  double eval(const Eigen::RowVectorXd& x) const;
};

// Parses one term against the declared covariate list. Unknown covariate,
// empty factor, or malformed exponent → ManifestError naming the offender.
Term parse_term(const std::string& text, const std::vector<std::string>& covariate_names);

std::vector<Term> parse_terms(const std::vector<std::string>& texts,
                              const std::vector<std::string>& covariate_names);

// Expands rows of X into the term design matrix. When intercept is set the
// leading column is all ones and the terms follow in order.
Eigen::MatrixXd build_design(const std::vector<Term>& terms, const Eigen::MatrixXd& X,
                             bool intercept);

// Derived dataset whose covariates are the expanded terms (no intercept) and
// whose term names become the covariate names. Rows, ids, outcome, category,
// scale, and treatment indicator are carried over unchanged.
Dataset expand_terms_dataset(const Dataset& data, const std::vector<std::string>& term_texts);

}  // namespace ordrd
