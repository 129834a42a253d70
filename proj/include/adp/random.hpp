#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace adp {

using Rng = std::mt19937_64;

// Labels keep independent consumers of one run seed on disjoint streams.
enum class Stream : std::uint64_t {
  Sampling = 1,
  EvaluationStart = 2,
  EvaluationPath = 3,
  Search = 4,
  SearchPath = 5,
  Discretization = 6,
  Synthetic = 7,
  Exploration = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

// Folds the indices into the seed so that each (seed, indices...) gets its own generator.
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> indices);

inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
  return Rng(mix_seed(seed, indices));
}

inline Rng make_stream(std::uint64_t seed, Stream label, std::uint64_t index = 0) {
  return Rng(mix_seed(seed, {static_cast<std::uint64_t>(label), index}));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline int uniform_index(Rng& rng, int count) {
  return std::uniform_int_distribution<int>(0, count - 1)(rng);
}

// FNV-1a, used for reproducibility fingerprints.
class Fingerprint {
 public:
  void add_bytes(const void* data, std::size_t size);
  void add(std::uint64_t v) { add_bytes(&v, sizeof v); }
  void add(double v) { add_bytes(&v, sizeof v); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
};

}  // namespace adp
