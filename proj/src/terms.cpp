#include "ordrd/terms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ordrd/errors.hpp"

namespace ordrd {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string piece;
  std::istringstream in(s);
  while (std::getline(in, piece, sep)) out.push_back(piece);
  return out;
}

}  // namespace

double Term::eval(const Eigen::RowVectorXd& x) const {
  double v = 1.0;
  for (const auto& f : factors) {
    double base = x(static_cast<Eigen::Index>(f.covariate));
    double powed = base;
    for (int k = 1; k < f.power; ++k) powed *= base;
    v *= powed;
  }
  return v;
}

Term parse_term(const std::string& text, const std::vector<std::string>& covariate_names) {
  Term term;
  const std::string cleaned = trim(text);
  if (cleaned.empty()) throw ManifestError("empty term in formula");
  for (const std::string& raw_factor : split_on(cleaned, '*')) {
    const std::string factor = trim(raw_factor);
    if (factor.empty()) throw ManifestError("empty factor in term '" + cleaned + "'");
    std::string name = factor;
    int power = 1;
    if (const auto caret = factor.find('^'); caret != std::string::npos) {
      name = trim(factor.substr(0, caret));
      const std::string exp_text = trim(factor.substr(caret + 1));
      try {
        std::size_t used = 0;
        power = std::stoi(exp_text, &used);
        if (used != exp_text.size()) throw std::invalid_argument(exp_text);
      } catch (const std::exception&) {
        throw ManifestError("bad exponent '" + exp_text + "' in term '" + cleaned + "'");
      }
      if (power < 1) throw ManifestError("exponent must be >= 1 in term '" + cleaned + "'");
    }
    const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
    if (it == covariate_names.end()) {
      throw ManifestError("term '" + cleaned + "' references unknown covariate '" + name + "'");
    }
    term.factors.push_back(
        {static_cast<std::size_t>(it - covariate_names.begin()), power});
  }
  std::string canon;
  for (std::size_t i = 0; i < term.factors.size(); ++i) {
    if (i) canon += "*";
    canon += covariate_names[term.factors[i].covariate];
    if (term.factors[i].power > 1) canon += "^" + std::to_string(term.factors[i].power);
  }
  term.name = canon;
  return term;
}

std::vector<Term> parse_terms(const std::vector<std::string>& texts,
                              const std::vector<std::string>& covariate_names) {
  std::vector<Term> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(parse_term(t, covariate_names));
  return out;
}

Eigen::MatrixXd build_design(const std::vector<Term>& terms, const Eigen::MatrixXd& X,
                             bool intercept) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = static_cast<Eigen::Index>(terms.size()) + (intercept ? 1 : 0);
  Eigen::MatrixXd D(n, k);
  Eigen::Index col = 0;
  if (intercept) D.col(col++).setOnes();
  for (const auto& term : terms) {
    for (Eigen::Index i = 0; i < n; ++i) D(i, col) = term.eval(X.row(i));
    ++col;
  }
  return D;
}

Dataset expand_terms_dataset(const Dataset& data, const std::vector<std::string>& term_texts) {
  const auto terms = parse_terms(term_texts, data.covariate_names);
  std::vector<std::string> names;
  names.reserve(terms.size());
  for (const auto& t : terms) names.push_back(t.name);
  return make_dataset(data.scale, data.ids, data.category, data.outcome,
                      build_design(terms, data.X, false), std::move(names));
}

}  // namespace ordrd
