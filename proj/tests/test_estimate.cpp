#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ordrd/errors.hpp"
#include "ordrd/estimate.hpp"
#include "ordrd/terms.hpp"

using oracles::contains;
using oracles::error_message;
using ordrd::EstimationError;

namespace {

Eigen::VectorXd dvec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

Eigen::VectorXi zvec(std::initializer_list<int> zs) {
  Eigen::VectorXi v(static_cast<Eigen::Index>(zs.size()));
  Eigen::Index k = 0;
  for (int z : zs) v(k++) = z;
  return v;
}

struct RandomDraw {
  Eigen::VectorXd Y, e, mu0, mu1;
  Eigen::VectorXi Z;
};

RandomDraw random_draw(std::uint64_t seed, int n) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> eu(0.1, 0.9);
  std::normal_distribution<double> normal(0.0, 1.0);
  RandomDraw d;
  d.Y = Eigen::VectorXd(n);
  d.e = Eigen::VectorXd(n);
  d.mu0 = Eigen::VectorXd(n);
  d.mu1 = Eigen::VectorXd(n);
  d.Z = Eigen::VectorXi(n);
  for (int i = 0; i < n; ++i) {
    d.e(i) = eu(gen);
    d.Z(i) = std::bernoulli_distribution(d.e(i))(gen) ? 1 : 0;
    d.Y(i) = normal(gen) + 2.0 * d.Z(i);
    d.mu0(i) = normal(gen);
    d.mu1(i) = normal(gen);
  }
  d.Z(0) = 1;
  d.Z(1) = 0;
  return d;
}

}  // namespace

TEST_CASE("hajek ratio estimator") {
  CHECK(ordrd::hajek_wate(dvec({2, 4, 1, 1}), zvec({1, 1, 0, 0}), dvec({1, 1, 1, 1})) ==
        doctest::Approx(2.0).epsilon(1e-15));

  // ATT weights turn the control arm into a tilted mean.
  CHECK(ordrd::hajek_wate(dvec({3, 1, 2}), zvec({1, 0, 0}),
                          dvec({1.0, 0.4 / 0.6, 0.25})) ==
        doctest::Approx(3.0 - 14.0 / 11.0).epsilon(1e-12));

  SUBCASE("location invariance") {
    const auto d = random_draw(11, 60);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(60);
    for (int i = 0; i < 60; ++i) w(i) = d.Z(i) == 1 ? 1.0 - d.e(i) : d.e(i);
    const double base = ordrd::hajek_wate(d.Y, d.Z, w);
    const Eigen::VectorXd shifted = d.Y.array() + 77.0;
    CHECK(ordrd::hajek_wate(shifted, d.Z, w) == doctest::Approx(base).epsilon(1e-12));
    CHECK(base == doctest::Approx(oracles::hajek_direct(d.Y, d.Z, w)).epsilon(1e-12));
  }

  SUBCASE("zero-weight arms are errors") {
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::hajek_wate(dvec({1, 2}), zvec({1, 0}), dvec({0.0, 1.0}));
                   }),
                   "treated arm"));
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::hajek_wate(dvec({1, 2}), zvec({1, 0}), dvec({1.0, 0.0}));
                   }),
                   "control arm"));
  }
}

TEST_CASE("outcome models are per-arm unweighted OLS") {
  std::mt19937_64 gen(5150);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 40;
  std::vector<int> category;
  std::vector<double> outcome;
  std::vector<std::vector<double>> xrows;
  for (int i = 0; i < n; ++i) {
    const double x = normal(gen);
    const int z = i % 2;
    category.push_back(z + 1);
    xrows.push_back({x});
    outcome.push_back(z == 0 ? 2.0 + 3.0 * x - 1.5 * x * x : 10.0 + normal(gen));
  }
  const auto sub = oracles::make_data({"lo", "hi"}, "hi", category, outcome, xrows, {"x"});
  const auto terms = ordrd::parse_terms({"x", "x^2"}, sub.covariate_names);

  SUBCASE("exact quadratic data is reproduced on every row") {
    const auto m0 = ordrd::fit_outcome_model(sub, 0, terms);
    CHECK(m0.arm == 0);
    REQUIRE(m0.term_names.size() == 3);
    CHECK(m0.term_names[0] == "(intercept)");
    CHECK(m0.gamma(0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(m0.gamma(1) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(m0.gamma(2) == doctest::Approx(-1.5).epsilon(1e-10));
    for (int i = 0; i < n; ++i) {
      const double x = sub.X(i, 0);
      CHECK(std::abs(m0.mu(i) - (2.0 + 3.0 * x - 1.5 * x * x)) <= 1e-9);
    }
  }

  SUBCASE("constant outcome collapses onto the intercept") {
    auto flat = outcome;
    for (int i = 0; i < n; ++i) {
      if (category[static_cast<std::size_t>(i)] == 1) flat[static_cast<std::size_t>(i)] = 4.25;
    }
    const auto data = oracles::make_data({"lo", "hi"}, "hi", category, flat, xrows, {"x"});
    const auto m0 = ordrd::fit_outcome_model(data, 0, terms);
    CHECK(m0.gamma(0) == doctest::Approx(4.25).epsilon(1e-12));
    CHECK(std::abs(m0.gamma(1)) < 1e-10);
    CHECK(std::abs(m0.gamma(2)) < 1e-10);
  }

  SUBCASE("matches the normal equations on noisy data") {
    const auto m1 = ordrd::fit_outcome_model(sub, 1, terms);
    std::vector<Eigen::Index> arm_rows;
    for (int i = 0; i < n; ++i) {
      if (sub.Z(i) == 1) arm_rows.push_back(i);
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(arm_rows.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(arm_rows.size()));
    for (std::size_t k = 0; k < arm_rows.size(); ++k) {
      const auto i = arm_rows[k];
      X(static_cast<Eigen::Index>(k), 0) = 1.0;
      X(static_cast<Eigen::Index>(k), 1) = sub.X(i, 0);
      X(static_cast<Eigen::Index>(k), 2) = sub.X(i, 0) * sub.X(i, 0);
      y(static_cast<Eigen::Index>(k)) = sub.outcome(i);
    }
    const Eigen::VectorXd oracle = oracles::ols_normal_equations(X, y);
    CHECK((m1.gamma - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
  }

  SUBCASE("score rows vanish off-arm and solve the normal equations on-arm") {
    const auto m0 = ordrd::fit_outcome_model(sub, 0, terms);
    for (int i = 0; i < n; ++i) {
      if (sub.Z(i) == 1) {
        CHECK(m0.scores.row(i).lpNorm<Eigen::Infinity>() == 0.0);
      }
    }
    const Eigen::VectorXd colsum = m0.scores.colwise().sum();
    CHECK(colsum.lpNorm<Eigen::Infinity>() < 1e-8);

    // Information averages x~ x~' over the arm but divides by the full n.
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < n; ++i) {
      if (sub.Z(i) == 0) {
        expected += m0.design.row(i).transpose() * m0.design.row(i);
      }
    }
    expected /= static_cast<double>(n);
    CHECK((m0.information - expected).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SUBCASE("rank deficiency and thin arms are structured errors") {
    std::vector<std::vector<double>> dup;
    for (int i = 0; i < n; ++i) dup.push_back({xrows[static_cast<std::size_t>(i)][0],
                                               2.0 * xrows[static_cast<std::size_t>(i)][0]});
    const auto bad = oracles::make_data({"lo", "hi"}, "hi", category, outcome, dup,
                                        {"a", "b"});
    const auto bad_terms = ordrd::parse_terms({"a", "b"}, bad.covariate_names);
    CHECK(contains(error_message<EstimationError>(
                       [&] { ordrd::fit_outcome_model(bad, 0, bad_terms); }),
                   "rank-deficient"));

    const auto thin = oracles::make_data({"lo", "hi"}, "hi", {1, 1, 2, 2}, {1, 2, 3, 4},
                                         {{0.1}, {0.2}, {0.3}, {0.4}}, {"x"});
    const auto thin_terms = ordrd::parse_terms({"x", "x^2"}, thin.covariate_names);
    CHECK(contains(error_message<EstimationError>(
                       [&] { ordrd::fit_outcome_model(thin, 1, thin_terms); }),
                   "needs more than"));
    CHECK(contains(error_message<EstimationError>(
                       [&] { ordrd::fit_outcome_model(thin, 2, {}); }),
                   "arm must be 0 or 1"));
  }
}

TEST_CASE("augmented ATT") {
  SUBCASE("two-unit oracle") {
    CHECK(ordrd::augmented_att(dvec({2, 1}), zvec({1, 0}), dvec({0.5, 0.5}),
                               dvec({1, 1})) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("zero outcome model reduces to pure weighting") {
    const auto d = random_draw(77, 80);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(80);
    CHECK(ordrd::augmented_att(d.Y, d.Z, d.e, zero) ==
          doctest::Approx(oracles::ipw_att_direct(d.Y, d.Z, d.e)).epsilon(1e-12));
  }

  SUBCASE("matches the direct transcription") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      const auto d = random_draw(seed, 70);
      CHECK(ordrd::augmented_att(d.Y, d.Z, d.e, d.mu0) ==
            doctest::Approx(oracles::att_direct(d.Y, d.Z, d.e, d.mu0)).epsilon(1e-12));
    }
  }

  SUBCASE("noise-free control surface gives the exact effect at any propensity") {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> eu(0.15, 0.85);
    const int n = 30;
    std::vector<int> category;
    std::vector<double> outcome;
    std::vector<std::vector<double>> xrows;
    Eigen::VectorXd e(n);
    for (int i = 0; i < n; ++i) {
      const double x = normal(gen);
      const int z = i % 2;
      category.push_back(z + 1);
      xrows.push_back({x});
      outcome.push_back(1.0 + 2.0 * x + (z == 1 ? 3.0 : 0.0));
      e(i) = eu(gen);
    }
    const auto sub = oracles::make_data({"lo", "hi"}, "hi", category, outcome, xrows, {"x"});
    const auto m0 = ordrd::fit_outcome_model(
        sub, 0, ordrd::parse_terms({"x"}, sub.covariate_names));
    CHECK(ordrd::augmented_att(sub, e, m0) == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("guards") {
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::augmented_att(dvec({1, 2}), zvec({0, 0}), dvec({0.5, 0.5}),
                                          dvec({0, 0}));
                   }),
                   "no treated units"));
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::augmented_att(dvec({1, 2}), zvec({1, 1}), dvec({0.5, 0.5}),
                                          dvec({0, 0}));
                   }),
                   "no control units"));
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::augmented_att(dvec({1, 2}), zvec({1, 0}), dvec({0.5, 1.0}),
                                          dvec({0, 0}));
                   }),
                   "propensity outside (0,1)"));
  }
}

TEST_CASE("augmented ATO") {
  SUBCASE("two-unit oracle") {
    CHECK(ordrd::augmented_ato(dvec({2, 1}), zvec({1, 0}), dvec({0.5, 0.5}), dvec({1, 1}),
                               dvec({2, 2})) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("matches the direct transcription") {
    for (std::uint64_t seed : {4ULL, 5ULL, 6ULL}) {
      const auto d = random_draw(seed, 70);
      CHECK(ordrd::augmented_ato(d.Y, d.Z, d.e, d.mu0, d.mu1) ==
            doctest::Approx(oracles::ato_direct(d.Y, d.Z, d.e, d.mu0, d.mu1))
                .epsilon(1e-12));
    }
  }

  SUBCASE("zero outcome models reduce to the tilted ratio form") {
    const auto d = random_draw(88, 60);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(60);
    double num = 0, tilt = 0;
    for (int i = 0; i < 60; ++i) {
      num += (1.0 - d.e(i)) * d.Z(i) * d.Y(i) - d.e(i) * (1 - d.Z(i)) * d.Y(i);
      tilt += d.e(i) * (1.0 - d.e(i));
    }
    CHECK(ordrd::augmented_ato(d.Y, d.Z, d.e, zero, zero) ==
          doctest::Approx(num / tilt).epsilon(1e-12));
  }

  SUBCASE("dataset overload agrees with the vector overload") {
    std::mt19937_64 gen(14);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> eu(0.2, 0.8);
    const int n = 50;
    std::vector<int> category;
    std::vector<double> outcome;
    std::vector<std::vector<double>> xrows;
    Eigen::VectorXd e(n);
    for (int i = 0; i < n; ++i) {
      const double x = normal(gen);
      const int z = i % 2;
      category.push_back(z + 1);
      xrows.push_back({x});
      outcome.push_back(0.5 * x + z * 1.2 + normal(gen));
      e(i) = eu(gen);
    }
    const auto sub = oracles::make_data({"lo", "hi"}, "hi", category, outcome, xrows, {"x"});
    const auto terms = ordrd::parse_terms({"x"}, sub.covariate_names);
    const auto m0 = ordrd::fit_outcome_model(sub, 0, terms);
    const auto m1 = ordrd::fit_outcome_model(sub, 1, terms);
    CHECK(ordrd::augmented_ato(sub, e, m0, m1) ==
          doctest::Approx(ordrd::augmented_ato(sub.outcome, sub.Z, e, m0.mu, m1.mu))
              .epsilon(1e-14));
  }

  SUBCASE("both arms required") {
    CHECK(contains(error_message<EstimationError>([&] {
                     ordrd::augmented_ato(dvec({1, 2}), zvec({1, 1}), dvec({0.5, 0.5}),
                                          dvec({0, 0}), dvec({0, 0}));
                   }),
                   "both arms"));
  }
}

TEST_CASE("p-values and the sign convention") {
  CHECK(ordrd::p_value(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ordrd::p_value(1.959963984540054, 1.0) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK_THROWS_AS(ordrd::p_value(1.0, 0.0), EstimationError);

  // Treated outcomes sit 2 higher: every estimator reports tau > 0.
  const auto d = random_draw(123, 200);
  Eigen::VectorXd w(200);
  for (int i = 0; i < 200; ++i) w(i) = d.Z(i) == 1 ? 1.0 - d.e(i) : d.e(i);
  CHECK(ordrd::hajek_wate(d.Y, d.Z, w) > 0.0);
  CHECK(ordrd::augmented_att(d.Y, d.Z, d.e, Eigen::VectorXd::Zero(200)) > 0.0);
  CHECK(ordrd::augmented_ato(d.Y, d.Z, d.e, Eigen::VectorXd::Zero(200),
                             Eigen::VectorXd::Zero(200)) > 0.0);
}
