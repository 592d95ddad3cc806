#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pq {

// Error taxonomy. config/usage errors exit 2, numeric failures exit 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG wrapper. All sampling goes through this so that results
// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // xorshift* (Marsaglia); period 2^64-1, plenty for simulation use.
    std::uint64_t x = s_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    s_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection-free modulo is fine here; bias is ~n/2^64.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller (cached second value).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream, e.g. per subject or per sweep cell.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t x = s_ ^ (salt * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
    x ^= x >> 31;
    return Rng(x * 0xd6e8feb86659fd93ull + 1);
  }

 private:
  std::uint64_t s_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// FNV-1a, used for config hashes embedded in artifacts.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string hex64(std::uint64_t v);

// Simple real-valued image, row-major.
struct Image {
  int h = 0, w = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(std::size_t(h_) * w_, fill) {}
  double& at(int y, int x) { return v[std::size_t(y) * w + x]; }
  double at(int y, int x) const { return v[std::size_t(y) * w + x]; }
  std::size_t size() const { return v.size(); }
};

int env_threads();  // PQ_THREADS or hardware default
void setup_threads();

}  // namespace pq
