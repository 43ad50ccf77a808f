#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace ordrd {

// Standard normal density, CDF, upper tail, and quantile. The CDF pair is
// erfc-based so both tails keep full relative accuracy; the quantile is
// Wichura's AS241 (double precision branch).
double norm_pdf(double x);
double norm_cdf(double x);
double norm_cdf_upper(double x);
double norm_quantile(double p);

// Phi(hi) - Phi(lo) evaluated in whichever tail keeps accuracy.
// Accepts -inf / +inf endpoints.
double norm_interval_prob(double lo, double hi);

// Two-sided normal p-value 2*(1 - Phi(|tau|/se)). Throws EstimationError
// when se <= 0.
double two_sided_p_value(double tau, double se);

// Pairwise (cascade) summation: error grows like log2(n) * eps instead of
// n * eps, which keeps permutation tests and parallel reductions tight.
double pairwise_sum(std::span<const double> values);
double mean(std::span<const double> values);
// Unbiased (n-1) sample variance; n must be >= 2.
double sample_variance(std::span<const double> values);

// Linear-interpolation quantile (R type 7) on an unsorted copy.
double quantile_type7(std::span<const double> values, double p);

// Deterministic RNG with pinned algorithms: mt19937_64 as the bit source,
// 53-bit uniforms, polar-method normals. Sub-streams are derived with
// splitmix64 so replication r of a run seeded s always sees the same stream
// regardless of worker count or batching.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform01();                       // in [0, 1)
  double normal();                          // standard normal
  std::uint64_t uniform_below(std::uint64_t n);  // in [0, n), unbiased

  static std::uint64_t split(std::uint64_t master, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// FNV-1a over a byte string; used to stamp machine-readable outputs with
// the manifest they came from.
std::uint64_t fnv1a_hash(std::span<const unsigned char> bytes);
std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace ordrd
