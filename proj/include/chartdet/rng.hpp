#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace chartdet {

// Deterministic RNG. All sampling in the project goes through this class so
// that a seed pins every stochastic choice. The distributions are hand-rolled
// on top of mt19937_64 because the std::uniform_* distributions are
// implementation-defined and would break byte-level reproducibility.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    const double u = (next_u64() >> 11) * 0x1.0p-53;  // [0,1)
    return lo + u * (hi - lo);
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(bounded(span));
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  // Box-Muller.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform(0.0, 1.0);
    const double u2 = uniform(0.0, 1.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  template <class T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(
        uniform_int(0, static_cast<std::int64_t>(items.size()) - 1))];
  }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent child stream; depends only on the constructor seed and the
  // stream id, not on how many draws were consumed from the parent.
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1))));
  }

private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Lemire reduction; bias is < 2^-64 and irrelevant here, determinism is
  // what matters.
  std::uint64_t bounded(std::uint64_t span) {
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace chartdet
