#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ordrd/balance.hpp"
#include "ordrd/errors.hpp"
#include "ordrd/simlab.hpp"
#include "ordrd/stats.hpp"

using oracles::contains;
using oracles::error_message;
using ordrd::BalanceError;
using ordrd::DataError;
using ordrd::DgpConfig;
using ordrd::EstimationError;
using ordrd::ManifestError;
using ordrd::WeightScheme;

namespace {

Eigen::VectorXd dvec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

DgpConfig base_config() {
  DgpConfig cfg;
  cfg.N = 500;
  cfg.beta = dvec({0.8, 0.5});
  cfg.cutoffs = dvec({-0.8, 0.9});
  cfg.threshold_index = 2;
  cfg.mu0_terms = {"x1"};
  cfg.gamma0 = dvec({1.0, 1.0});
  cfg.mu1_terms = {"x1"};
  cfg.gamma1 = dvec({2.5, 1.0});
  cfg.noise_sd = 1.0;
  cfg.seed = 99;
  return cfg;
}

double std_norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("generation is deterministic and shaped by the config") {
  auto cfg = base_config();
  const auto a = ordrd::generate(cfg);
  const auto b = ordrd::generate(cfg);
  CHECK(a.dataset.X == b.dataset.X);
  CHECK(a.dataset.outcome == b.dataset.outcome);
  CHECK(a.dataset.category == b.dataset.category);
  CHECK(a.truth.y0 == b.truth.y0);
  CHECK(a.truth.e_true == b.truth.e_true);

  CHECK(a.dataset.n() == 500);
  CHECK(a.dataset.p() == 2);
  CHECK(a.dataset.covariate_names == std::vector<std::string>{"x1", "x2"});
  CHECK(a.dataset.scale.labels == std::vector<std::string>{"c1", "c2", "c3"});
  CHECK(a.dataset.ids[0] == "u1");

  cfg.seed = 100;
  const auto c = ordrd::generate(cfg);
  CHECK(a.dataset.X != c.dataset.X);

  // Observed outcome equals the potential outcome of the unit's arm.
  for (Eigen::Index i = 0; i < a.dataset.n(); ++i) {
    const double want = a.dataset.Z(i) == 1 ? a.truth.y1(i) : a.truth.y0(i);
    CHECK(a.dataset.outcome(i) == want);
  }
}

TEST_CASE("category frequencies follow the probit law") {
  DgpConfig cfg;
  cfg.N = 100000;
  cfg.beta = dvec({0.0});
  cfg.cutoffs = dvec({-1.0, 0.3, 1.1});
  cfg.threshold_index = 2;
  cfg.mu0_terms = {"x1"};
  cfg.gamma0 = dvec({0.0, 0.0});
  cfg.mu1_terms = {"x1"};
  cfg.gamma1 = dvec({0.0, 0.0});
  cfg.seed = 7;
  const auto gen = ordrd::generate(cfg);

  std::vector<double> expected{std_norm_cdf(-1.0), std_norm_cdf(0.3) - std_norm_cdf(-1.0),
                               std_norm_cdf(1.1) - std_norm_cdf(0.3),
                               1.0 - std_norm_cdf(1.1)};
  std::vector<double> observed(4, 0.0);
  for (int c : gen.dataset.category) observed[static_cast<std::size_t>(c - 1)] += 1.0;
  double x2 = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    const double e = expected[j] * 100000.0;
    x2 += (observed[j] - e) * (observed[j] - e) / e;
  }
  CHECK(x2 < oracles::chi2_99(3));
}

TEST_CASE("zero noise with a constant shift is reproduced exactly") {
  auto cfg = base_config();
  cfg.noise_sd = 0.0;
  const auto gen = ordrd::generate(cfg);
  for (Eigen::Index i = 0; i < gen.dataset.n(); ++i) {
    CHECK(std::abs(gen.truth.y1(i) - gen.truth.y0(i) - 1.5) <= 1e-12);
  }
}

TEST_CASE("correlated covariates honor the requested correlation") {
  auto cfg = base_config();
  cfg.N = 50000;
  Eigen::MatrixXd corr(2, 2);
  corr << 1.0, 0.6, 0.6, 1.0;
  cfg.covariate_corr = corr;
  const auto gen = ordrd::generate(cfg);
  const auto& X = gen.dataset.X;
  const Eigen::VectorXd m = X.colwise().mean();
  double c01 = 0, v0 = 0, v1 = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    c01 += (X(i, 0) - m(0)) * (X(i, 1) - m(1));
    v0 += (X(i, 0) - m(0)) * (X(i, 0) - m(0));
    v1 += (X(i, 1) - m(1)) * (X(i, 1) - m(1));
  }
  CHECK(c01 / std::sqrt(v0 * v1) == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("config validation") {
  auto ok = base_config();
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.N = 1;
                   ordrd::generate(c);
                 }),
                 "N must be >= 2"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.beta = Eigen::VectorXd();
                   ordrd::generate(c);
                 }),
                 "at least one covariate"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.cutoffs = dvec({0.9, -0.8});
                   ordrd::generate(c);
                 }),
                 "strictly increasing"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.threshold_index = 1;
                   ordrd::generate(c);
                 }),
                 "threshold index"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.gamma0 = dvec({1.0});
                   ordrd::generate(c);
                 }),
                 "gamma0"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.noise_sd = -0.5;
                   ordrd::generate(c);
                 }),
                 "noise sd"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.covariate_corr = Eigen::MatrixXd::Identity(3, 3);
                   ordrd::generate(c);
                 }),
                 "p x p"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   Eigen::MatrixXd bad(2, 2);
                   bad << 1.0, 2.0, 2.0, 1.0;
                   c.covariate_corr = bad;
                   ordrd::generate(c);
                 }),
                 "positive definite"));
  CHECK(contains(error_message<ManifestError>([&] {
                   auto c = ok;
                   c.omit_from_ps = {"x9"};
                   ordrd::generate(c);
                 }),
                 "x9"));

  SUBCASE("a draw that empties a category is a data error") {
    auto c = ok;
    c.N = 200;
    c.beta = dvec({0.0});
    c.cutoffs = dvec({-8.0, 0.0});
    c.gamma0 = dvec({0.0, 0.0});
    c.gamma1 = dvec({0.0, 0.0});
    const auto msg = error_message<DataError>([&] { ordrd::generate(c); });
    CHECK(contains(msg, "empty"));
    CHECK(contains(msg, "c1"));
  }
}

TEST_CASE("fitting-side term lists") {
  auto cfg = base_config();
  cfg.beta = dvec({0.8, 0.5, -0.3});
  cfg.mu0_terms = {"x1", "x1^2"};
  cfg.gamma0 = dvec({1.0, 1.0, 0.5});
  cfg.mu1_terms = {"x1", "x3"};
  cfg.gamma1 = dvec({2.5, 1.0, 0.2});

  CHECK(ordrd::dgp_ps_terms(cfg) == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(ordrd::dgp_outcome_terms(cfg) == std::vector<std::string>{"x1", "x1^2", "x3"});

  cfg.omit_from_ps = {"x2"};
  CHECK(ordrd::dgp_ps_terms(cfg) == std::vector<std::string>{"x1", "x3"});

  cfg.fit_outcome_terms = {"x1"};
  CHECK(ordrd::dgp_outcome_terms(cfg) == std::vector<std::string>{"x1"});

  SUBCASE("resolution fills only the empty lists") {
    ordrd::PipelineSettings s;
    s.outcome_terms = {"x1"};
    const auto resolved = ordrd::resolve_pipeline_settings(cfg, s);
    CHECK(resolved.ps_terms == std::vector<std::string>{"x1", "x3"});
    CHECK(resolved.outcome_terms == std::vector<std::string>{"x1"});
  }

  SUBCASE("omitting every covariate is rejected") {
    cfg.omit_from_ps = {"x1", "x2", "x3"};
    CHECK(contains(error_message<ManifestError>([&] {
                     ordrd::resolve_pipeline_settings(cfg, {});
                   }),
                   "every covariate omitted"));
  }
}

TEST_CASE("true estimands") {
  SUBCASE("constant effect is returned exactly for any tilt") {
    auto cfg = base_config();
    CHECK(ordrd::true_estimand(cfg, WeightScheme::ATO, std::nullopt, 20000) ==
          doctest::Approx(1.5).epsilon(1e-9));
    CHECK(ordrd::true_estimand(cfg, WeightScheme::ATT, std::nullopt, 20000) ==
          doctest::Approx(1.5).epsilon(1e-9));
    CHECK(ordrd::true_estimand(cfg, WeightScheme::ATO, ordrd::Interval{0.3, 0.7}, 20000) ==
          doctest::Approx(1.5).epsilon(1e-9));
  }

  SUBCASE("heterogeneous effects match quadrature and separate the estimands") {
    DgpConfig cfg;
    cfg.N = 100;
    cfg.beta = dvec({1.2});
    cfg.cutoffs = dvec({0.8});
    cfg.threshold_index = 2;
    cfg.mu0_terms = {"x1"};
    cfg.gamma0 = dvec({0.0, 0.0});
    cfg.mu1_terms = {"x1"};
    cfg.gamma1 = dvec({0.0, 1.0});
    cfg.seed = 3;

    auto e_of = [](double x) { return std_norm_cdf(1.2 * x - 0.8); };
    const double att_quad =
        oracles::normal_expect([&](double x) { return e_of(x) * x; }) /
        oracles::normal_expect([&](double x) { return e_of(x); });
    const double ato_quad =
        oracles::normal_expect([&](double x) { return e_of(x) * (1 - e_of(x)) * x; }) /
        oracles::normal_expect([&](double x) { return e_of(x) * (1 - e_of(x)); });

    const double att = ordrd::true_estimand(cfg, WeightScheme::ATT, std::nullopt, 400000);
    const double ato = ordrd::true_estimand(cfg, WeightScheme::ATO, std::nullopt, 400000);
    CHECK(att == doctest::Approx(att_quad).epsilon(0.03));
    CHECK(ato == doctest::Approx(ato_quad).epsilon(0.03));
    CHECK(att - ato > 0.05);
  }

  SUBCASE("an effect symmetric around its tilted mean collapses to the intercept") {
    auto cfg = base_config();
    cfg.beta = dvec({0.8, 0.0});
    cfg.mu0_terms = {"x2"};
    cfg.gamma0 = dvec({0.0, 0.0});
    cfg.mu1_terms = {"x2"};
    cfg.gamma1 = dvec({1.0, 2.0});  // effect 1 + 2 x2, x2 independent of e
    CHECK(ordrd::true_estimand(cfg, WeightScheme::ATO, std::nullopt, 400000) ==
          doctest::Approx(1.0).epsilon(0.02));
    CHECK(ordrd::true_estimand(cfg, WeightScheme::ATT, std::nullopt, 400000) ==
          doctest::Approx(1.0).epsilon(0.02));
  }

  SUBCASE("guards") {
    auto cfg = base_config();
    CHECK_THROWS_AS(ordrd::true_estimand(cfg, WeightScheme::NONE), EstimationError);
    CHECK_THROWS_AS(ordrd::true_estimand(cfg, WeightScheme::ATO, std::nullopt, 0),
                    ManifestError);
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::true_estimand(cfg, WeightScheme::ATO,
                                          ordrd::Interval{0.999999999, 0.9999999999}, 2000);
                   }),
                   "no tilting mass"));
  }
}

TEST_CASE("single pipeline pass") {
  auto cfg = base_config();
  cfg.N = 2000;
  auto gen = ordrd::generate(cfg);
  const auto settings = ordrd::resolve_pipeline_settings(cfg, {});

  const auto est = ordrd::run_pipeline_once(gen.dataset, settings);
  CHECK(std::abs(est.tau - 1.5) < 0.4);
  CHECK(est.se > 0.0);
  CHECK(est.n0 >= 5);
  CHECK(est.n1 >= 5);
  CHECK(est.interval.e_min == 0.1);
  CHECK(est.interval.e_max == 0.9);

  SUBCASE("estimation never consults the truth record") {
    const double tau_before = est.tau;
    gen.truth.y0.setZero();
    gen.truth.y1.setZero();
    gen.truth.e_true.setZero();
    const auto again = ordrd::run_pipeline_once(gen.dataset, settings);
    CHECK(again.tau == tau_before);
    CHECK(again.se == est.se);
  }

  SUBCASE("symmetric search inside the pipeline") {
    auto s = settings;
    s.search_interval = true;
    const auto searched = ordrd::run_pipeline_once(gen.dataset, s);
    CHECK(std::isfinite(searched.tau));
    CHECK(searched.interval.e_min == doctest::Approx(1.0 - searched.interval.e_max)
                                         .epsilon(1e-9));
  }

  SUBCASE("validation failures are structured") {
    auto s = settings;
    s.ps_terms.clear();
    CHECK(contains(error_message<ManifestError>(
                       [&] { ordrd::run_pipeline_once(gen.dataset, s); }),
                   "no propensity terms"));
    auto s2 = settings;
    s2.estimand = WeightScheme::NONE;
    CHECK_THROWS_AS(ordrd::run_pipeline_once(gen.dataset, s2), EstimationError);
  }

  SUBCASE("an unbalanceable covariate stops the search") {
    // x2 is shifted by treatment far beyond its spread; it is excluded from
    // the probit terms but still participates in the balance criterion.
    auto data = gen.dataset;
    for (Eigen::Index i = 0; i < data.n(); ++i) data.X(i, 1) = 10.0 * data.Z(i) + data.X(i, 0);
    ordrd::PipelineSettings s;
    s.ps_terms = {"x1"};
    s.outcome_terms = {"x1"};
    s.search_interval = true;
    CHECK(contains(error_message<BalanceError>([&] { ordrd::run_pipeline_once(data, s); }),
                   "no balanced symmetric interval"));
  }
}

TEST_CASE("monte carlo replication engine") {
  auto cfg = base_config();
  cfg.N = 500;
  ordrd::McSettings ms;
  ms.pipeline = ordrd::resolve_pipeline_settings(cfg, {});
  ms.workers = 3;
  ms.truth_draws = 200000;

  const auto report = ordrd::monte_carlo(cfg, ms, 12);
  CHECK(report.replications == 12);
  CHECK(report.failures == 0);
  REQUIRE(report.records.size() == 12);
  CHECK(report.true_tau == doctest::Approx(1.5).epsilon(0.02));
  CHECK(report.mc_sd > 0.0);
  CHECK(report.mean_se > 0.0);
  CHECK(report.coverage >= 0.5);
  CHECK(report.coverage <= 1.0);
  for (std::size_t k = 0; k < report.records.size(); ++k) {
    CHECK(report.records[k].replication == k);
    CHECK(report.records[k].seed == ordrd::Rng::split(cfg.seed, k + 1));
  }

  SUBCASE("a run is the concatenation of offset runs") {
    auto ms1 = ms;
    const auto first = ordrd::monte_carlo(cfg, ms1, 8);
    auto head = ms;
    const auto part1 = ordrd::monte_carlo(cfg, head, 5);
    auto tail = ms;
    tail.rep_offset = 5;
    const auto part2 = ordrd::monte_carlo(cfg, tail, 3);
    REQUIRE(first.records.size() == 8);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(first.records[k].tau == part1.records[k].tau);
      CHECK(first.records[k].se == part1.records[k].se);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(first.records[5 + k].tau == part2.records[k].tau);
      CHECK(first.records[5 + k].seed == part2.records[k].seed);
    }
  }

  SUBCASE("worker count never changes the numbers") {
    auto one = ms;
    one.workers = 1;
    auto four = ms;
    four.workers = 4;
    const auto a = ordrd::monte_carlo(cfg, one, 8);
    const auto b = ordrd::monte_carlo(cfg, four, 8);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
      CHECK(a.records[k].tau == b.records[k].tau);
      CHECK(a.records[k].se == b.records[k].se);
    }
    CHECK(a.mc_sd == b.mc_sd);
    CHECK(a.mean_bias == b.mean_bias);
  }

  SUBCASE("failure aggregation") {
    auto narrow = ms;
    narrow.pipeline.interval = {0.498, 0.502};
    CHECK(contains(error_message<EstimationError>(
                       [&] { ordrd::monte_carlo(cfg, narrow, 5); }),
                   "replications failed"));
  }

  SUBCASE("replication floor") {
    CHECK(contains(error_message<ManifestError>([&] { ordrd::monte_carlo(cfg, ms, 1); }),
                   "replications must be >= 2"));
  }

  SUBCASE("report formatting") {
    const auto text = ordrd::format_mc_report(report);
    CHECK(contains(text, "replications\t12"));
    CHECK(contains(text, "true_tau"));
    CHECK(contains(text, "coverage"));
    CHECK(contains(text, "mc_sd"));
  }
}

TEST_CASE("bootstrap standard errors") {
  SUBCASE("identical resample estimates give zero spread") {
    // Constant covariate: the probit has nothing to fit, outcomes are exact,
    // every resample reproduces tau = 1.
    std::vector<int> category;
    std::vector<double> outcome;
    std::vector<std::vector<double>> xrows;
    for (int i = 0; i < 40; ++i) {
      const int z = i < 20 ? 1 : 0;
      category.push_back(z + 1);
      outcome.push_back(z == 1 ? 2.0 : 1.0);
      xrows.push_back({0.0});
    }
    const auto data = oracles::make_data({"lo", "hi"}, "hi", category, outcome, xrows, {"x1"});
    ordrd::PipelineSettings s;
    s.ps_terms = {"x1"};
    s.outcome_terms = {};
    s.estimand = WeightScheme::ATO;
    s.interval = {0.01, 0.99};
    const auto boot = ordrd::bootstrap_se(data, s, 150, 17, 2);
    CHECK(boot.se <= 1e-12);
    CHECK(boot.resamples == 150);
    CHECK(boot.estimates.size() == 150 - boot.skipped);
    for (double t : boot.estimates) CHECK(t == doctest::Approx(1.0).epsilon(1e-10));
  }

  SUBCASE("doubling the resamples moves the estimate by little") {
    auto cfg = base_config();
    cfg.N = 600;
    const auto gen = ordrd::generate(cfg);
    const auto s = ordrd::resolve_pipeline_settings(cfg, {});
    const auto b1 = ordrd::bootstrap_se(gen.dataset, s, 1000, 5, 4);
    const auto b2 = ordrd::bootstrap_se(gen.dataset, s, 2000, 5, 4);
    CHECK(std::abs(b1.se - b2.se) / b2.se < 0.05);

    // Same seed, same answer; the resample count floor is enforced.
    const auto again = ordrd::bootstrap_se(gen.dataset, s, 1000, 5, 2);
    CHECK(again.se == b1.se);
    CHECK_THROWS_AS(ordrd::bootstrap_se(gen.dataset, s, 99, 5), ManifestError);
  }
}
