#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace ccat {

/// Stream identifiers used when deriving independent generators from one seed.
enum class Purpose : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  Attack = 3,
  Data = 4,
  Eval = 5,
  Split = 6,
};

/// xoshiro256** seeded through splitmix64.
///
/// Sub-streams are keyed by (seed, purpose, indices...) so that per-example
/// results never depend on the order in which examples are processed. All
/// variate generation is implemented here rather than with <random>
/// distributions, whose output differs between standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  /// Generator for the sub-stream identified by `purpose` and `indices`.
  static Rng stream(std::uint64_t seed, Purpose purpose,
                    std::initializer_list<std::uint64_t> indices = {});

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next(); }

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open0();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, one variate per call).
  double normal();
  /// Uniform integer in [0, n), unbiased (Lemire's method with rejection).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

/// Seed taken from CCATLAB_SEED when set, otherwise `fallback`.
std::uint64_t default_seed(std::uint64_t fallback = 0);

}  // namespace ccat
