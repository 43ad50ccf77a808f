#include "ordrd/manifest.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ordrd/errors.hpp"
#include "ordrd/stats.hpp"

namespace ordrd {

namespace {

using nlohmann::json;

std::string joined(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest: invalid JSON: ") + e.what());
  }
}

const json& require_key(const json& obj, const std::string& parent, const std::string& key) {
  if (!obj.is_object()) throw ManifestError("manifest: '" + parent + "' must be an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ManifestError("manifest: missing key '" + joined(parent, key) + "'");
  return *it;
}

template <typename T>
T typed(const json& value, const std::string& path) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ManifestError("manifest: key '" + path + "' has the wrong type");
  }
}

template <typename T>
T required(const json& obj, const std::string& parent, const std::string& key) {
  return typed<T>(require_key(obj, parent, key), joined(parent, key));
}

template <typename T>
T optional_key(const json& obj, const std::string& parent, const std::string& key, T fallback) {
  if (!obj.is_object()) throw ManifestError("manifest: '" + parent + "' must be an object");
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  return typed<T>(*it, joined(parent, key));
}

void check_keys(const json& obj, const std::string& parent,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ManifestError("manifest: '" + parent + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ManifestError("manifest: unknown key '" + joined(parent, item.key()) + "'");
    }
  }
}

char parse_delimiter(const json& obj, const std::string& parent) {
  const auto text = optional_key<std::string>(obj, parent, "delimiter", ",");
  if (text.size() != 1) {
    throw ManifestError("manifest: key '" + joined(parent, "delimiter") +
                        "' must be a single character");
  }
  return text[0];
}

SearchGrid parse_grid(const json& obj, const std::string& parent) {
  SearchGrid grid;
  if (!obj.is_object() || !obj.contains("grid")) return grid;
  const json& g = obj.at("grid");
  const std::string path = joined(parent, "grid");
  check_keys(g, path, {"d_min", "d_max", "step"});
  grid.d_min = optional_key<double>(g, path, "d_min", grid.d_min);
  grid.d_max = optional_key<double>(g, path, "d_max", grid.d_max);
  grid.step = optional_key<double>(g, path, "step", grid.step);
  return grid;
}

Eigen::VectorXd parse_vector(const json& value, const std::string& path) {
  const auto values = typed<std::vector<double>>(value, path);
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Interval parse_interval(const json& value, const std::string& path) {
  const auto pair = typed<std::vector<double>>(value, path);
  if (pair.size() != 2) {
    throw ManifestError("manifest: key '" + path + "' must be [e_min, e_max]");
  }
  return Interval{pair[0], pair[1]};
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

AnalysisManifest parse_analysis_manifest_text(const std::string& text) {
  const json root = parse_json(text);
  check_keys(root, "",
             {"data", "scale", "exclusions", "standardize", "probit_terms", "outcome_terms",
              "schemes", "grid", "critical", "min_arm", "e_floor", "e_ceiling", "significance",
              "empty_category", "out", "seed"});

  AnalysisManifest m;
  m.hash = fnv1a_hash(text);

  const json& data = require_key(root, "", "data");
  check_keys(data, "data",
             {"path", "delimiter", "id_column", "category_column", "outcome_column", "covariates",
              "strict"});
  m.data_path = required<std::string>(data, "data", "path");
  m.delimiter = parse_delimiter(data, "data");
  m.id_column = optional_key<std::string>(data, "data", "id_column", "");
  m.category_column = required<std::string>(data, "data", "category_column");
  m.outcome_column = required<std::string>(data, "data", "outcome_column");
  m.covariates = required<std::vector<std::string>>(data, "data", "covariates");
  m.strict = optional_key<bool>(data, "data", "strict", false);
  if (m.covariates.empty()) throw ManifestError("manifest: key 'data.covariates' must be nonempty");

  const json& scale = require_key(root, "", "scale");
  check_keys(scale, "scale", {"labels", "threshold"});
  m.labels = required<std::vector<std::string>>(scale, "scale", "labels");
  m.threshold_label = required<std::string>(scale, "scale", "threshold");

  if (root.contains("exclusions")) {
    const json& rules = root.at("exclusions");
    if (!rules.is_array()) throw ManifestError("manifest: key 'exclusions' must be an array");
    for (std::size_t k = 0; k < rules.size(); ++k) {
      const std::string path = "exclusions[" + std::to_string(k) + "]";
      const json& rule = rules.at(k);
      check_keys(rule, path, {"covariate", "comparator", "bound"});
      m.exclusions.push_back(ExclusionRule{required<std::string>(rule, path, "covariate"),
                                           required<std::string>(rule, path, "comparator"),
                                           required<double>(rule, path, "bound")});
    }
  }

  m.standardize = optional_key<bool>(root, "", "standardize", false);
  m.probit_terms = required<std::vector<std::string>>(root, "", "probit_terms");
  if (m.probit_terms.empty()) throw ManifestError("manifest: key 'probit_terms' must be nonempty");
  m.outcome_terms =
      optional_key<std::vector<std::string>>(root, "", "outcome_terms", m.probit_terms);

  if (root.contains("schemes")) {
    m.schemes.clear();
    for (const auto& name : required<std::vector<std::string>>(root, "", "schemes")) {
      const WeightScheme scheme = scheme_from_name(name);
      if (scheme == WeightScheme::NONE) {
        throw ManifestError("manifest: key 'schemes' must list ATO/ATT entries");
      }
      m.schemes.push_back(scheme);
    }
    if (m.schemes.empty()) throw ManifestError("manifest: key 'schemes' must be nonempty");
  }

  m.grid = parse_grid(root, "");
  m.critical = optional_key<double>(root, "", "critical", m.critical);
  m.min_arm = optional_key<std::size_t>(root, "", "min_arm", m.min_arm);
  m.e_floor = optional_key<double>(root, "", "e_floor", m.e_floor);
  m.e_ceiling = optional_key<double>(root, "", "e_ceiling", m.e_ceiling);
  m.significance = optional_key<double>(root, "", "significance", m.significance);
  if (!(m.significance > 0.0 && m.significance < 1.0)) {
    throw ManifestError("manifest: key 'significance' must lie in (0,1)");
  }

  const auto empty_mode = optional_key<std::string>(root, "", "empty_category", "error");
  if (empty_mode == "error") {
    m.empty_category = FitSettings::EmptyCategory::Error;
  } else if (empty_mode == "collapse") {
    m.empty_category = FitSettings::EmptyCategory::Collapse;
  } else {
    throw ManifestError("manifest: key 'empty_category' must be 'error' or 'collapse'");
  }

  m.out_dir = optional_key<std::string>(root, "", "out", ".");
  m.seed = optional_key<std::uint64_t>(root, "", "seed", 1);
  return m;
}

AnalysisManifest parse_analysis_manifest(const std::string& path) {
  return parse_analysis_manifest_text(read_text_file(path));
}

TableSchema table_schema(const AnalysisManifest& manifest) {
  TableSchema schema;
  schema.delimiter = manifest.delimiter;
  schema.id_column = manifest.id_column;
  schema.category_column = manifest.category_column;
  schema.outcome_column = manifest.outcome_column;
  schema.covariate_columns = manifest.covariates;
  schema.scale = CategoryScale::make(manifest.labels, manifest.threshold_label);
  schema.strict = manifest.strict;
  return schema;
}

SimManifest parse_sim_manifest_text(const std::string& text) {
  const json root = parse_json(text);
  check_keys(root, "",
             {"mode", "replications", "resamples", "workers", "dgp", "pipeline", "out"});

  SimManifest m;
  m.hash = fnv1a_hash(text);
  m.mode = required<std::string>(root, "", "mode");
  if (m.mode != "monte_carlo" && m.mode != "bootstrap") {
    throw ManifestError("manifest: key 'mode' must be 'monte_carlo' or 'bootstrap'");
  }
  m.replications = optional_key<std::size_t>(root, "", "replications", 0);
  m.resamples = optional_key<std::size_t>(root, "", "resamples", 0);
  m.workers = optional_key<std::size_t>(root, "", "workers", 1);
  m.out_dir = optional_key<std::string>(root, "", "out", ".");

  const json& dgp = require_key(root, "", "dgp");
  check_keys(dgp, "dgp",
             {"N", "beta", "cutoffs", "threshold_index", "mu0_terms", "gamma0", "mu1_terms",
              "gamma1", "noise_sd", "covariate_corr", "omit_from_ps", "fit_outcome_terms",
              "seed"});
  m.dgp.N = required<Eigen::Index>(dgp, "dgp", "N");
  m.dgp.beta = parse_vector(require_key(dgp, "dgp", "beta"), "dgp.beta");
  m.dgp.cutoffs = parse_vector(require_key(dgp, "dgp", "cutoffs"), "dgp.cutoffs");
  m.dgp.threshold_index = required<int>(dgp, "dgp", "threshold_index");
  m.dgp.mu0_terms = required<std::vector<std::string>>(dgp, "dgp", "mu0_terms");
  m.dgp.gamma0 = parse_vector(require_key(dgp, "dgp", "gamma0"), "dgp.gamma0");
  m.dgp.mu1_terms = required<std::vector<std::string>>(dgp, "dgp", "mu1_terms");
  m.dgp.gamma1 = parse_vector(require_key(dgp, "dgp", "gamma1"), "dgp.gamma1");
  m.dgp.noise_sd = optional_key<double>(dgp, "dgp", "noise_sd", 1.0);
  if (dgp.contains("covariate_corr")) {
    const auto rows = typed<std::vector<std::vector<double>>>(dgp.at("covariate_corr"),
                                                              "dgp.covariate_corr");
    const auto p = rows.size();
    Eigen::MatrixXd corr(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i) {
      if (rows[i].size() != p) {
        throw ManifestError("manifest: key 'dgp.covariate_corr' must be square");
      }
      for (std::size_t j = 0; j < p; ++j) {
        corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    m.dgp.covariate_corr = corr;
  }
  m.dgp.omit_from_ps =
      optional_key<std::vector<std::string>>(dgp, "dgp", "omit_from_ps", {});
  m.dgp.fit_outcome_terms =
      optional_key<std::vector<std::string>>(dgp, "dgp", "fit_outcome_terms", {});
  m.dgp.seed = optional_key<std::uint64_t>(dgp, "dgp", "seed", 1);

  if (root.contains("pipeline")) {
    const json& pipe = root.at("pipeline");
    check_keys(pipe, "pipeline",
               {"estimand", "interval", "search_interval", "ps_terms", "outcome_terms", "grid",
                "critical", "min_arm"});
    if (pipe.contains("estimand")) {
      m.pipeline.estimand = scheme_from_name(required<std::string>(pipe, "pipeline", "estimand"));
      if (m.pipeline.estimand == WeightScheme::NONE) {
        throw ManifestError("manifest: key 'pipeline.estimand' must be ATO or ATT");
      }
    }
    if (pipe.contains("interval")) {
      m.pipeline.interval = parse_interval(pipe.at("interval"), "pipeline.interval");
    }
    m.pipeline.search_interval =
        optional_key<bool>(pipe, "pipeline", "search_interval", false);
    m.pipeline.ps_terms =
        optional_key<std::vector<std::string>>(pipe, "pipeline", "ps_terms", {});
    m.pipeline.outcome_terms =
        optional_key<std::vector<std::string>>(pipe, "pipeline", "outcome_terms", {});
    m.pipeline.grid = parse_grid(pipe, "pipeline");
    m.pipeline.critical = optional_key<double>(pipe, "pipeline", "critical", m.pipeline.critical);
    m.pipeline.min_arm = optional_key<std::size_t>(pipe, "pipeline", "min_arm", m.pipeline.min_arm);
  }
  return m;
}

SimManifest parse_sim_manifest(const std::string& path) {
  return parse_sim_manifest_text(read_text_file(path));
}

}  // namespace ordrd
