#include "ordrd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ordrd/errors.hpp"
#include "ordrd/stats.hpp"

namespace ordrd {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

CategoryScale CategoryScale::make(std::vector<std::string> labels,
                                  const std::string& threshold_label) {
  if (labels.size() < 2) throw ManifestError("category scale needs at least 2 labels");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) throw ManifestError("duplicate category label '" + l + "'");
  }
  const auto it = std::find(labels.begin(), labels.end(), threshold_label);
  if (it == labels.end()) {
    throw ManifestError("threshold label '" + threshold_label + "' not in category scale");
  }
  const int t = static_cast<int>(it - labels.begin()) + 1;
  if (t < 2) {
    throw ManifestError("threshold '" + threshold_label +
                        "' is the lowest category; control side would be empty");
  }
  CategoryScale scale;
  scale.labels = std::move(labels);
  scale.threshold_index = t;
  return scale;
}

int CategoryScale::index_of(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? 0 : static_cast<int>(it - labels.begin()) + 1;
}

Dataset make_dataset(CategoryScale scale, std::vector<std::string> ids,
                     std::vector<int> category, Eigen::VectorXd outcome, Eigen::MatrixXd X,
                     std::vector<std::string> covariate_names) {
  const auto n = static_cast<std::size_t>(outcome.size());
  if (ids.size() != n || category.size() != n || static_cast<std::size_t>(X.rows()) != n) {
    throw DataError("dataset field lengths disagree");
  }
  if (covariate_names.size() != static_cast<std::size_t>(X.cols())) {
    throw DataError("covariate name count does not match covariate columns");
  }
  std::set<std::string> seen;
  for (const auto& c : covariate_names) {
    if (!seen.insert(c).second) throw DataError("duplicate covariate name '" + c + "'");
  }
  const int J = static_cast<int>(scale.J());
  Eigen::VectorXi Z(static_cast<Eigen::Index>(n));
  Eigen::Index treated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (category[i] < 1 || category[i] > J) {
      throw DataError("unit '" + ids[i] + "' has category index outside 1.." + std::to_string(J));
    }
    Z(static_cast<Eigen::Index>(i)) = category[i] >= scale.threshold_index ? 1 : 0;
    treated += Z(static_cast<Eigen::Index>(i));
  }
  if (n > 0 && (treated == 0 || treated == static_cast<Eigen::Index>(n))) {
    throw DataError("all units fall on one side of the threshold");
  }
  Dataset data;
  data.scale = std::move(scale);
  data.ids = std::move(ids);
  data.category = std::move(category);
  data.outcome = std::move(outcome);
  data.X = std::move(X);
  data.covariate_names = std::move(covariate_names);
  data.Z = std::move(Z);
  return data;
}

Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows) {
  const auto m = static_cast<Eigen::Index>(rows.size());
  std::vector<std::string> ids(rows.size());
  std::vector<int> category(rows.size());
  Eigen::VectorXd outcome(m);
  Eigen::MatrixXd X(m, data.p());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    ids[static_cast<std::size_t>(k)] = data.ids[static_cast<std::size_t>(i)];
    category[static_cast<std::size_t>(k)] = data.category[static_cast<std::size_t>(i)];
    outcome(k) = data.outcome(i);
    X.row(k) = data.X.row(i);
  }
  return make_dataset(data.scale, std::move(ids), std::move(category), std::move(outcome),
                      std::move(X), data.covariate_names);
}

LoadResult load_dataset_text(const std::string& text, const TableSchema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file: no header row");

  auto split = [&](const std::string& s) {
    std::vector<std::string> out;
    std::string piece;
    std::istringstream row(s);
    while (std::getline(row, piece, schema.delimiter)) out.push_back(trim(piece));
    if (!s.empty() && s.back() == schema.delimiter) out.push_back("");
    return out;
  };

  const std::vector<std::string> header = split(line);
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ManifestError("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t cat_col = column_of(schema.category_column);
  const std::size_t out_col = column_of(schema.outcome_column);
  std::optional<std::size_t> id_col;
  if (!schema.id_column.empty()) id_col = column_of(schema.id_column);
  std::vector<std::size_t> cov_cols;
  cov_cols.reserve(schema.covariate_columns.size());
  for (const auto& c : schema.covariate_columns) cov_cols.push_back(column_of(c));

  const std::size_t p = cov_cols.size();
  std::vector<std::string> ids;
  std::vector<int> category;
  std::vector<double> outcome;
  std::vector<double> xflat;
  std::vector<DropRecord> drops;

  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split(line);
    std::string id = id_col && *id_col < fields.size() ? fields[*id_col] : "";
    if (id.empty()) id = "row" + std::to_string(row_number);

    auto problem = [&](const std::string& reason) {
      if (schema.strict) throw DataError("row " + std::to_string(row_number) + " (" + id + "): " + reason);
      drops.push_back({id, reason});
    };

    if (fields.size() != header.size()) {
      problem("field count " + std::to_string(fields.size()) + " != header width " +
              std::to_string(header.size()));
      continue;
    }
    const std::string& cat_label = fields[cat_col];
    if (cat_label.empty()) {
      problem("missing category");
      continue;
    }
    const int cat = schema.scale.index_of(cat_label);
    if (cat == 0) {
      problem("unknown category label '" + cat_label + "'");
      continue;
    }
    double y;
    if (!parse_double(fields[out_col], y)) {
      problem("missing or unparseable outcome '" + fields[out_col] + "'");
      continue;
    }
    std::vector<double> xrow(p);
    bool ok = true;
    for (std::size_t k = 0; k < p; ++k) {
      if (!parse_double(fields[cov_cols[k]], xrow[k])) {
        problem("missing or unparseable covariate '" + schema.covariate_columns[k] + "'");
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    ids.push_back(id);
    category.push_back(cat);
    outcome.push_back(y);
    xflat.insert(xflat.end(), xrow.begin(), xrow.end());
  }

  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n == 0) throw DataError("no rows survived loading (" + std::to_string(drops.size()) + " dropped)");
  Eigen::VectorXd Y(n);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i) {
    Y(i) = outcome[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < p; ++k) {
      X(i, static_cast<Eigen::Index>(k)) = xflat[static_cast<std::size_t>(i) * p + k];
    }
  }
  LoadResult result{make_dataset(schema.scale, std::move(ids), std::move(category), std::move(Y),
                                 std::move(X), schema.covariate_columns),
                    std::move(drops)};
  return result;
}

LoadResult load_dataset(const std::string& path, const TableSchema& schema) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open data file '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return load_dataset_text(buffer.str(), schema);
}

ExclusionResult apply_exclusion_rules(const Dataset& data,
                                      const std::vector<ExclusionRule>& rules) {
  struct Compiled {
    Eigen::Index col;
    int op;  // 0 <, 1 <=, 2 >, 3 >=, 4 ==, 5 !=
    double bound;
  };
  std::vector<Compiled> compiled;
  compiled.reserve(rules.size());
  for (const auto& rule : rules) {
    const auto it =
        std::find(data.covariate_names.begin(), data.covariate_names.end(), rule.covariate);
    if (it == data.covariate_names.end()) {
      throw ManifestError("exclusion rule references unknown covariate '" + rule.covariate + "'");
    }
    int op;
    if (rule.comparator == "<") op = 0;
    else if (rule.comparator == "<=") op = 1;
    else if (rule.comparator == ">") op = 2;
    else if (rule.comparator == ">=") op = 3;
    else if (rule.comparator == "==") op = 4;
    else if (rule.comparator == "!=") op = 5;
    else throw ManifestError("exclusion rule comparator '" + rule.comparator + "' not recognized");
    compiled.push_back({static_cast<Eigen::Index>(it - data.covariate_names.begin()), op, rule.bound});
  }

  ExclusionResult res;
  res.removed_per_rule.assign(rules.size(), 0);
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(data.n()));
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    bool excluded = false;
    for (std::size_t r = 0; r < compiled.size(); ++r) {
      const double v = data.X(i, compiled[r].col);
      const double b = compiled[r].bound;
      bool hit = false;
      switch (compiled[r].op) {
        case 0: hit = v < b; break;
        case 1: hit = v <= b; break;
        case 2: hit = v > b; break;
        case 3: hit = v >= b; break;
        case 4: hit = v == b; break;
        case 5: hit = v != b; break;
      }
      if (hit) {
        res.removed_per_rule[r] += 1;
        if (!excluded) {
          res.drops.push_back({data.ids[static_cast<std::size_t>(i)],
                               "excluded: " + rules[r].covariate + " " + rules[r].comparator + " " +
                                   std::to_string(rules[r].bound)});
        }
        excluded = true;
      }
    }
    if (!excluded) keep.push_back(i);
  }
  res.dataset = subset(data, keep);
  return res;
}

DatasetSummary summarize(const Dataset& data) {
  if (data.n() == 0) throw DataError("cannot summarize an empty dataset");
  DatasetSummary s;
  s.n_units = static_cast<std::size_t>(data.n());
  s.n_treated = static_cast<std::size_t>(data.Z.sum());
  s.n_control = s.n_units - s.n_treated;
  s.category_counts.assign(data.J(), 0);
  for (int c : data.category) s.category_counts[static_cast<std::size_t>(c - 1)] += 1;

  for (Eigen::Index j = 0; j < data.p(); ++j) {
    CovariateSummary cs;
    cs.name = data.covariate_names[static_cast<std::size_t>(j)];
    cs.n = s.n_units;
    std::vector<double> col(data.X.col(j).data(), data.X.col(j).data() + data.n());
    cs.mean = mean(col);
    cs.sd = cs.n >= 2 ? std::optional<double>(std::sqrt(sample_variance(col))) : std::nullopt;
    cs.q1 = quantile_type7(col, 0.25);
    cs.q2 = quantile_type7(col, 0.50);
    cs.q3 = quantile_type7(col, 0.75);
    cs.min = *std::min_element(col.begin(), col.end());
    cs.max = *std::max_element(col.begin(), col.end());
    s.covariates.push_back(std::move(cs));
  }
  return s;
}

Dataset collapse_empty_categories(const Dataset& data) {
  const int J = static_cast<int>(data.J());
  std::vector<std::size_t> counts(static_cast<std::size_t>(J), 0);
  for (int c : data.category) counts[static_cast<std::size_t>(c - 1)] += 1;

  std::vector<int> rank(static_cast<std::size_t>(J), 0);  // old 1-based -> new 1-based, 0 = empty
  std::vector<std::string> labels;
  int next = 0;
  for (int c = 1; c <= J; ++c) {
    if (counts[static_cast<std::size_t>(c - 1)] > 0) {
      rank[static_cast<std::size_t>(c - 1)] = ++next;
      labels.push_back(data.scale.labels[static_cast<std::size_t>(c - 1)]);
    }
  }
  // new threshold: rank of the first occupied category at or above r_t
  int new_t = 0;
  for (int c = data.scale.threshold_index; c <= J; ++c) {
    if (rank[static_cast<std::size_t>(c - 1)] > 0) {
      new_t = rank[static_cast<std::size_t>(c - 1)];
      break;
    }
  }
  if (new_t == 0) throw DataError("no occupied category at or above the threshold");
  CategoryScale scale;
  scale.threshold_index = new_t;
  scale.labels = std::move(labels);

  std::vector<int> category(data.category.size());
  for (std::size_t i = 0; i < data.category.size(); ++i) {
    category[i] = rank[static_cast<std::size_t>(data.category[i] - 1)];
  }
  return make_dataset(std::move(scale), data.ids, std::move(category), data.outcome, data.X,
                      data.covariate_names);
}

std::pair<Dataset, Standardization> standardize_covariates(const Dataset& data) {
  Standardization st;
  st.mean.resize(data.p());
  st.sd.resize(data.p());
  Eigen::MatrixXd X = data.X;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    std::vector<double> col(data.X.col(j).data(), data.X.col(j).data() + data.n());
    const double m = mean(col);
    const double v = data.n() >= 2 ? sample_variance(col) : 0.0;
    if (!(v > 0.0)) {
      throw DataError("covariate '" + data.covariate_names[static_cast<std::size_t>(j)] +
                      "' is constant; cannot standardize");
    }
    st.mean(j) = m;
    st.sd(j) = std::sqrt(v);
    X.col(j) = (X.col(j).array() - m) / st.sd(j);
  }
  Dataset out = make_dataset(data.scale, data.ids, data.category, data.outcome, std::move(X),
                             data.covariate_names);
  return {std::move(out), std::move(st)};
}

}  // namespace ordrd
