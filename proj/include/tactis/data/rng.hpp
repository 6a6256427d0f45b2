#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tactis {

/// Seedable, splittable random source.
///
/// Children derived with split() depend only on the parent's seed and the
/// child's name or index, never on how many draws the parent has made, so
/// named sub-streams stay stable when unrelated code changes its usage.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view name) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Uniformly random permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);
  /// k distinct indices from 0..n-1, in the order drawn.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
  /// Draws from Beta(a, b) via two gamma variates.
  double beta(double a, double b);

  std::mt19937_64& engine() { return engine_; }

 private:
  double gamma(double shape);

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace tactis
